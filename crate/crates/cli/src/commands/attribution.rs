use anyhow::Result;
use log::warn;
use necsuff_core::attribution::{global_attribution, AttributionMethod, AttributionVector};
use necsuff_core::cfgen::Constraint;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::report::{num, OutDir};
use crate::workspace::Workspace;

/// Per-instance vectors for one method; `None` where the method failed.
pub fn per_instance(ws: &Workspace, method: AttributionMethod, indices: &[usize], ncf_list: &[usize]) -> Result<Vec<Option<AttributionVector>>> {
    indices
        .par_iter()
        .map(|&i| {
            let inst = ws.row(i)?;
            Ok(match ws.attribute(method, inst, i as u64, ncf_list, &Constraint::Unconstrained) {
                Ok(v) => Some(v),
                Err(e) => {
                    warn!("{} failed on instance {i}: {e}", method.name());
                    None
                }
            })
        })
        .collect()
}

#[derive(Serialize)]
struct MethodBlock {
    method: AttributionMethod,
    /// Mean absolute score over the instances where the method succeeded.
    global: Option<Vec<f64>>,
    per_instance: Vec<InstanceScores>,
}

#[derive(Serialize)]
struct InstanceScores {
    index: usize,
    scores: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct AttributionReport<'a> {
    features: Vec<&'a str>,
    ncf_list: &'a [usize],
    methods: Vec<MethodBlock>,
}

pub fn run(config: ExperimentConfig, out: &OutDir) -> Result<()> {
    let ws = Workspace::load(config)?;
    let indices = ws.instance_indices()?;
    let names = ws.schema().names();
    let ncf_list = &ws.config.explanation.ncf_list;
    let mut rows = Vec::new();
    let mut blocks = Vec::new();
    for &method in &ws.config.explanation.methods {
        let vectors = per_instance(&ws, method, &indices, ncf_list)?;
        for (&i, v) in indices.iter().zip(&vectors) {
            for (j, name) in names.iter().enumerate() {
                let (score, status) = match v {
                    Some(v) => (num(v.scores[j]), "ok"),
                    None => (String::new(), "failed"),
                };
                rows.push(vec![i.to_string(), method.name().into(), name.to_string(), score, status.into()]);
            }
        }
        let ok: Vec<AttributionVector> = vectors.iter().flatten().cloned().collect();
        let global = if ok.is_empty() { None } else { Some(global_attribution(&ok)?.scores) };
        if let Some(g) = &global {
            for (name, s) in names.iter().zip(g) {
                rows.push(vec!["global".into(), method.name().into(), name.to_string(), num(*s), "ok".into()]);
            }
        }
        blocks.push(MethodBlock {
            method,
            global,
            per_instance: indices
                .iter()
                .zip(vectors)
                .map(|(&index, v)| InstanceScores {
                    index,
                    scores: v.map(|v| v.scores),
                })
                .collect(),
        });
    }
    out.write_csv("attribution.csv", &["instance", "method", "feature", "score", "status"], &rows)?;
    let path = out.write_json(
        "attribution.json",
        &AttributionReport {
            features: names.clone(),
            ncf_list,
            methods: blocks,
        },
    )?;
    println!("attributions for {} instance(s) written to {}", indices.len(), path.display());
    Ok(())
}
