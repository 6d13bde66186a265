use anyhow::{bail, Result};
use log::warn;
use necsuff_core::attribution::{AttributionMethod, AttributionVector};
use necsuff_core::metrics::{compare_methods, ComparisonReport};
use serde::Serialize;

use crate::commands::attribution::per_instance;
use crate::config::ExperimentConfig;
use crate::report::{num, opt_num, OutDir};
use crate::workspace::Workspace;

#[derive(Serialize)]
struct PairResult {
    method_a: AttributionMethod,
    method_b: AttributionMethod,
    ncf: usize,
    /// Instances where both methods produced an attribution.
    n_instances: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<ComparisonReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(config: ExperimentConfig, out: &OutDir) -> Result<()> {
    let ws = Workspace::load(config)?;
    let methods = ws.config.explanation.methods.clone();
    if methods.len() < 2 {
        bail!("`compare` needs at least two methods in explanation.methods");
    }
    let indices = ws.instance_indices()?;
    let ncf_list = ws.config.explanation.ncf_list.clone();

    // Non-CF methods do not depend on nCF and are computed once.
    let mut fixed: Vec<Option<Vec<Option<AttributionVector>>>> = Vec::new();
    for &m in &methods {
        fixed.push(if m.is_cf() { None } else { Some(per_instance(&ws, m, &indices, &ncf_list)?) });
    }

    let mut results = Vec::new();
    for &ncf in &ncf_list {
        let mut vectors = Vec::new();
        for (m, f) in methods.iter().zip(&fixed) {
            vectors.push(match f {
                Some(v) => v.clone(),
                None => per_instance(&ws, *m, &indices, &[ncf])?,
            });
        }
        for a in 0..methods.len() {
            for b in a..methods.len() {
                let (va, vb): (Vec<AttributionVector>, Vec<AttributionVector>) = vectors[a]
                    .iter()
                    .zip(&vectors[b])
                    .filter_map(|(x, y)| Some((x.clone()?, y.clone()?)))
                    .unzip();
                let (comparison, error) = match compare_methods(&va, &vb) {
                    // A method is perfectly correlated with itself, constant scores included.
                    Ok(c) if a == b => (
                        Some(ComparisonReport {
                            pearson_r: Some(1.0),
                            ..c
                        }),
                        None,
                    ),
                    Ok(c) => (Some(c), None),
                    Err(e) => {
                        warn!("{} vs {} at ncf={ncf}: {e}", methods[a].name(), methods[b].name());
                        (None, Some(e.to_string()))
                    }
                };
                results.push(PairResult {
                    method_a: methods[a],
                    method_b: methods[b],
                    ncf,
                    n_instances: va.len(),
                    comparison,
                    error,
                });
            }
        }
    }

    let mut pair_rows = Vec::new();
    let mut rank_rows = Vec::new();
    let names = ws.schema().names();
    for r in &results {
        let (a, b, ncf) = (r.method_a.name().to_string(), r.method_b.name().to_string(), r.ncf.to_string());
        let status = match (&r.error, &r.comparison) {
            (Some(e), _) => format!("error: {e}"),
            (None, Some(c)) if c.pearson_r.is_none() => "undefined: zero variance".into(),
            _ => "ok".into(),
        };
        pair_rows.push(vec![
            a.clone(),
            b.clone(),
            ncf.clone(),
            r.n_instances.to_string(),
            opt_num(r.comparison.as_ref().and_then(|c| c.pearson_r)),
            status,
        ]);
        for t in r.comparison.iter().flat_map(|c| &c.per_feature_rank_tests) {
            rank_rows.push(vec![
                a.clone(),
                b.clone(),
                ncf.clone(),
                names[t.feature].to_string(),
                num(t.mean_rank_difference),
                opt_num(t.t_statistic),
                num(t.p_value),
                t.degenerate.to_string(),
            ]);
        }
    }
    let csv = out.write_csv("compare.csv", &["method_a", "method_b", "ncf", "n_instances", "pearson_r", "status"], &pair_rows)?;
    out.write_csv(
        "compare_ranks.csv",
        &["method_a", "method_b", "ncf", "feature", "mean_rank_difference", "t_statistic", "p_value", "degenerate"],
        &rank_rows,
    )?;
    out.write_json("compare.json", &results)?;
    println!("{} method pairs written to {}", pair_rows.len(), csv.display());
    Ok(())
}
