use anyhow::{bail, Context, Result};
use log::warn;
use necsuff_core::attribution::{derive_seed, AttributionMethod};
use necsuff_core::cfgen::{self, CfRequest, Constraint, CounterfactualSet};
use necsuff_core::model::ProbabilisticModel;
use necsuff_core::tabular::{FeatureSchema, Instance};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::ExperimentConfig;
use crate::report::OutDir;
use crate::workspace::{stream, Workspace};

pub struct ExplainArgs {
    pub instances: Vec<usize>,
    pub point: Option<String>,
    pub ncf: usize,
    pub constraint: Option<String>,
    pub methods: Option<Vec<AttributionMethod>>,
}

#[derive(Serialize)]
struct CfBlock {
    method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    desired_class: Option<u8>,
    #[serde(skip_serializing_if = "Option::is_none")]
    candidates: Option<Vec<Value>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    valid: Option<Vec<bool>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    unique_valid_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct AttributionBlock {
    method: AttributionMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    scores: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Serialize)]
struct InstanceReport {
    /// Dataset row, absent for a point given on the command line.
    index: Option<usize>,
    instance: Value,
    predicted_class: u8,
    probability: f64,
    counterfactuals: Vec<CfBlock>,
    attributions: Vec<AttributionBlock>,
}

#[derive(Serialize)]
struct ExplainReport<'a> {
    features: Vec<&'a str>,
    ncf: usize,
    constraint: &'a Constraint,
    instances: Vec<InstanceReport>,
}

/// `none`, `vary-only=a,b` or `freeze=a,b`; features by name or index.
pub fn parse_constraint(schema: &FeatureSchema, text: &str) -> Result<Constraint> {
    let text = text.trim();
    if text == "none" || text.is_empty() {
        return Ok(Constraint::Unconstrained);
    }
    let (kind, list) = text
        .split_once('=')
        .with_context(|| format!("constraint `{text}` must be `none`, `vary-only=<features>` or `freeze=<features>`"))?;
    let features = list
        .split(',')
        .map(|name| {
            let name = name.trim();
            schema
                .index_of(name)
                .or_else(|| name.parse::<usize>().ok().filter(|i| *i < schema.len()))
                .with_context(|| format!("unknown feature `{name}` in constraint"))
        })
        .collect::<Result<Vec<usize>>>()?;
    match kind.trim() {
        "vary-only" | "vary_only" => Ok(Constraint::VaryOnly(features)),
        "freeze" => Ok(Constraint::Freeze(features)),
        other => bail!("unknown constraint kind `{other}`"),
    }
}

pub fn run(config: ExperimentConfig, args: ExplainArgs, out: &OutDir) -> Result<()> {
    let ws = Workspace::load(config)?;
    if args.ncf == 0 {
        bail!("--ncf must be at least 1");
    }
    let schema = ws.schema();
    let constraint = match &args.constraint {
        Some(text) => parse_constraint(schema, text)?,
        None => Constraint::Unconstrained,
    };
    let methods = args.methods.clone().unwrap_or_else(|| ws.config.explanation.methods.clone());

    let mut targets: Vec<(Option<usize>, Instance)> = Vec::new();
    if let Some(point) = &args.point {
        let value: Value = serde_json::from_str(point).context("--point must be a JSON object or array")?;
        targets.push((None, schema.instance_from_json(&value)?));
    }
    let indices = if args.instances.is_empty() && targets.is_empty() {
        vec![0]
    } else {
        args.instances.clone()
    };
    for i in indices {
        targets.push((Some(i), ws.row(i)?.clone()));
    }

    let reports = targets
        .par_iter()
        .enumerate()
        .map(|(slot, (index, inst))| explain_one(&ws, &methods, &constraint, args.ncf, index.unwrap_or(slot) as u64, *index, inst))
        .collect::<Result<Vec<_>>>()?;

    let report = ExplainReport {
        features: schema.names(),
        ncf: args.ncf,
        constraint: &constraint,
        instances: reports,
    };
    let path = out.write_json("explain.json", &report)?;
    println!("explanations for {} instance(s) written to {}", report.instances.len(), path.display());
    Ok(())
}

fn explain_one(
    ws: &Workspace,
    methods: &[AttributionMethod],
    constraint: &Constraint,
    ncf: usize,
    key: u64,
    index: Option<usize>,
    inst: &Instance,
) -> Result<InstanceReport> {
    let schema = ws.schema();
    let encoded = schema.encode(inst)?;
    let probability = ws.model.predict_proba(&encoded)?;
    let predicted_class = ws.model.predict_class(&encoded)?;
    let seed = derive_seed(derive_seed(ws.seed(), stream::EXPLAIN_CF), key);
    let label = index.map_or_else(|| "--point".to_string(), |i| format!("row {i}"));

    let counterfactuals = ws
        .config
        .experiment
        .cf_methods
        .iter()
        .map(|method| {
            let req = CfRequest::new(inst.clone(), ncf)
                .with_constraint(constraint.clone())
                .with_seed(seed)
                .with_tuning(&ws.config.explanation.tuning());
            match cfgen::generate(*method, &ws.model, schema, &req, &ws.scales) {
                Ok(set) => cf_block(method.to_string(), schema, &set),
                Err(e) => {
                    warn!("{method} failed on {label}: {e}");
                    CfBlock {
                        method: method.to_string(),
                        desired_class: None,
                        candidates: None,
                        valid: None,
                        unique_valid_count: None,
                        iterations: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    let attributions = methods
        .iter()
        .map(|method| match ws.attribute(*method, inst, key, &ws.config.explanation.ncf_list, constraint) {
            Ok(v) => AttributionBlock {
                method: *method,
                scores: Some(v.scores),
                error: None,
            },
            Err(e) => {
                warn!("{} failed on {label}: {e}", method.name());
                AttributionBlock {
                    method: *method,
                    scores: None,
                    error: Some(e.to_string()),
                }
            }
        })
        .collect();

    Ok(InstanceReport {
        index,
        instance: schema.instance_to_json(inst),
        predicted_class,
        probability,
        counterfactuals,
        attributions,
    })
}

fn cf_block(method: String, schema: &FeatureSchema, set: &CounterfactualSet) -> CfBlock {
    CfBlock {
        method,
        desired_class: Some(set.desired_class),
        candidates: Some(set.candidates.iter().map(|c| schema.instance_to_json(c)).collect()),
        valid: Some(set.valid.clone()),
        unique_valid_count: Some(set.unique_valid_count),
        iterations: Some(set.diagnostics.iterations),
        error: None,
    }
}
