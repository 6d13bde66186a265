use std::path::Path;

use anyhow::{bail, Context, Result};
use necsuff_core::causality::{CausalSetting, CauseKind, CauseVerdict};
use necsuff_core::model::IndicatorModel;
use necsuff_core::tabular::{FeatureSchema, FeatureSpec, FeatureValue, Instance};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::report::OutDir;

pub const BUNDLED: [(&str, &str); 2] = [
    ("butfor_x1.json", include_str!("../../queries/butfor_x1.json")),
    ("alpha_x2_butfor.json", include_str!("../../queries/alpha_x2_butfor.json")),
];

/// Indicator model `y = I(w·x ≥ threshold)` over features in `[0, 1]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleModel {
    pub weights: Vec<f64>,
    pub threshold: f64,
    /// Defaults to `x1, x2, …`.
    #[serde(default)]
    pub names: Option<Vec<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "query", rename_all = "snake_case")]
pub enum Question {
    /// At `context`, or at every grid context with `features = values` and output `target`.
    ButFor {
        features: Vec<String>,
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        context: Option<Vec<f64>>,
        target: u8,
    },
    ActualCause {
        features: Vec<String>,
        #[serde(default)]
        values: Option<Vec<f64>>,
        #[serde(default)]
        context: Option<Vec<f64>>,
        target: u8,
    },
    Alpha {
        features: Vec<String>,
        values: Vec<f64>,
        target: u8,
        #[serde(default = "default_kind")]
        cause: CauseKind,
    },
    Beta {
        features: Vec<String>,
        values: Vec<f64>,
        target: u8,
    },
    Sufficient {
        features: Vec<String>,
        values: Vec<f64>,
        target: u8,
    },
    Ideal {
        features: Vec<String>,
        values: Vec<f64>,
        target: u8,
    },
}

fn default_kind() -> CauseKind {
    CauseKind::ButFor
}

fn default_grid_points() -> usize {
    2
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OracleQuery {
    pub model: OracleModel,
    /// Evenly spaced grid points per feature; 2 gives `{0, 1}`.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(flatten)]
    pub question: Question,
}

#[derive(Serialize)]
struct ContextVerdict {
    context: Vec<f64>,
    verdict: CauseVerdict,
}

#[derive(Serialize)]
struct OracleReport<'a> {
    query: &'a OracleQuery,
    n_states: u128,
    result: Value,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    contexts: Vec<ContextVerdict>,
}

pub fn read_query(spec: &str) -> Result<OracleQuery> {
    let path = Path::new(spec);
    let text = if path.exists() {
        std::fs::read_to_string(path).with_context(|| format!("cannot read query `{spec}`"))?
    } else {
        let name = if spec.ends_with(".json") { spec.to_string() } else { format!("{spec}.json") };
        BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t.to_string())
            .with_context(|| format!("query `{spec}` is neither a file nor a bundled query"))?
    };
    serde_json::from_str(&text).with_context(|| format!("cannot parse query `{spec}`"))
}

pub fn run(spec: &str, out: &OutDir) -> Result<()> {
    let query = read_query(spec)?;
    let report = evaluate(&query)?;
    let text = serde_json::to_string_pretty(&report)?;
    out.write_json("oracle.json", &report)?;
    println!("{text}");
    Ok(())
}

fn evaluate(query: &OracleQuery) -> Result<OracleReport<'_>> {
    let m = &query.model;
    let names: Vec<String> = match &m.names {
        Some(n) if n.len() == m.weights.len() => n.clone(),
        Some(_) => bail!("model.names must match model.weights in length"),
        None => (1..=m.weights.len()).map(|i| format!("x{i}")).collect(),
    };
    let schema = FeatureSchema::new(names.iter().map(|n| FeatureSpec::continuous(n.clone(), 0.0, 1.0)).collect())?;
    let model = IndicatorModel::new(&schema, &m.weights, m.threshold)?;
    let setting = CausalSetting::with_grid_points(&schema, &model, query.grid_points)?;
    let indices = |features: &[String]| -> Result<Vec<usize>> {
        features
            .iter()
            .map(|f| schema.index_of(f).with_context(|| format!("unknown feature `{f}`")))
            .collect()
    };
    let reals = |v: &[f64]| v.iter().map(|x| FeatureValue::Real(*x)).collect::<Vec<_>>();

    let mut contexts = Vec::new();
    let result = match &query.question {
        Question::ButFor {
            features,
            values,
            context,
            target,
        }
        | Question::ActualCause {
            features,
            values,
            context,
            target,
        } => {
            let set = indices(features)?;
            let but_for = matches!(query.question, Question::ButFor { .. });
            let verdict = |ctx: &Instance| {
                if but_for {
                    setting.is_but_for(ctx, &set, *target)
                } else {
                    setting.is_actual_cause(ctx, &set, *target)
                }
            };
            let holds = |v: &CauseVerdict| if but_for { v.is_but_for } else { v.is_actual_cause };
            match context {
                Some(ctx) => {
                    let ctx = Instance::reals(ctx);
                    schema.validate(&ctx)?;
                    let v = verdict(&ctx)?;
                    let result = holds(&v);
                    contexts.push(ContextVerdict {
                        context: reals_of(&ctx),
                        verdict: v,
                    });
                    json!(result)
                }
                None => {
                    let wanted = values.as_deref().map(reals);
                    if let Some(w) = &wanted {
                        if w.len() != set.len() {
                            bail!("`values` must match `features` in length");
                        }
                    }
                    let mut all = true;
                    for ctx in setting.contexts() {
                        if wanted.as_ref().is_some_and(|w| set.iter().zip(w).any(|(i, v)| ctx.get(*i) != *v)) {
                            continue;
                        }
                        if setting.output(&ctx)? != *target {
                            continue;
                        }
                        let v = verdict(&ctx)?;
                        all &= holds(&v);
                        contexts.push(ContextVerdict {
                            context: reals_of(&ctx),
                            verdict: v,
                        });
                    }
                    if contexts.is_empty() {
                        bail!("no grid context matches the query");
                    }
                    json!(all)
                }
            }
        }
        Question::Alpha {
            features,
            values,
            target,
            cause,
        } => json!(setting.alpha(&indices(features)?, &reals(values), *target, *cause)?),
        Question::Beta { features, values, target } => json!(setting.beta(&indices(features)?, &reals(values), *target)?),
        Question::Sufficient { features, values, target } => {
            json!(setting.is_sufficient(&indices(features)?, &reals(values), *target)?)
        }
        Question::Ideal { features, values, target } => {
            serde_json::to_value(setting.ideal_explanation(&indices(features)?, &reals(values), *target)?)?
        }
    };
    Ok(OracleReport {
        query,
        n_states: setting.n_states(),
        result,
        contexts,
    })
}

fn reals_of(inst: &Instance) -> Vec<f64> {
    inst.values().iter().map(|v| v.as_real().unwrap_or(f64::NAN)).collect()
}
