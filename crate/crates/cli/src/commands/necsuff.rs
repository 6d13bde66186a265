use anyhow::Result;
use log::{info, warn};
use necsuff_core::attribution::{derive_seed, AttributionMethod, AttributionVector};
use necsuff_core::cfgen::CfMethod;
use necsuff_core::metrics::{necessity, sufficiency, NecSuffReport, Protocol, RunSpec};
use necsuff_core::tabular::Instance;
use rayon::prelude::*;
use serde::Serialize;

use crate::commands::attribution::per_instance;
use crate::config::ExperimentConfig;
use crate::report::{opt_num, OutDir};
use crate::workspace::{stream, Workspace};

#[derive(Clone, Copy)]
struct Cell {
    ranker: usize,
    protocol: Protocol,
    ncf: usize,
    method: CfMethod,
}

#[derive(Serialize)]
struct CellResult {
    method: CfMethod,
    ranker: AttributionMethod,
    protocol: Protocol,
    ncf: usize,
    /// Instances whose ranker attribution failed; their features keep schema order.
    ranker_failures: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<NecSuffReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

pub fn run(config: ExperimentConfig, out: &OutDir) -> Result<()> {
    let ws = Workspace::load(config)?;
    let indices = ws.instance_indices()?;
    let instances: Vec<Instance> = indices.iter().map(|&i| ws.row(i).cloned()).collect::<Result<_>>()?;
    let d = ws.schema().len();
    let exp = &ws.config.experiment;
    let ncf_list = &ws.config.explanation.ncf_list;

    let mut rankings: Vec<(Vec<AttributionVector>, usize)> = Vec::new();
    for &ranker in &exp.rankers {
        let vectors = per_instance(&ws, ranker, &indices, ncf_list)?;
        let failures = vectors.iter().filter(|v| v.is_none()).count();
        let filled = vectors
            .into_iter()
            .map(|v| v.map_or_else(|| AttributionVector::new(ranker, vec![0.0; d], None), Ok))
            .collect::<necsuff_core::Result<Vec<_>>>()?;
        rankings.push((filled, failures));
    }

    let mut cells = Vec::new();
    for ranker in 0..exp.rankers.len() {
        for &protocol in &exp.protocols {
            for &ncf in ncf_list {
                for &method in &exp.cf_methods {
                    cells.push(Cell {
                        ranker,
                        protocol,
                        ncf,
                        method,
                    });
                }
            }
        }
    }
    info!("running {} necessity/sufficiency cells on {} instances", cells.len(), instances.len());

    let seed = derive_seed(ws.seed(), stream::NECSUFF);
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|cell| {
            let (scores, ranker_failures) = &rankings[cell.ranker];
            let ranker = exp.rankers[cell.ranker];
            let spec = RunSpec {
                tuning: ws.config.explanation.tuning(),
                ..RunSpec::new(cell.method, cell.ncf, seed, cell.protocol)
            };
            let outcome = cell.protocol.feature_sets(scores, d).and_then(|sets| {
                if cell.protocol.is_vary() {
                    necessity(&ws.model, ws.schema(), &instances, &sets, &spec, &ws.scales)
                } else {
                    sufficiency(&ws.model, ws.schema(), &instances, &sets, &spec, &ws.scales)
                }
            });
            let (report, error) = match outcome {
                Ok(mut r) => {
                    r.ranker = Some(ranker);
                    (Some(r), None)
                }
                Err(e) => {
                    warn!("{} {} ncf={}: {e}", cell.method, cell.protocol.name(), cell.ncf);
                    (None, Some(e.to_string()))
                }
            };
            CellResult {
                method: cell.method,
                ranker,
                protocol: cell.protocol,
                ncf: cell.ncf,
                ranker_failures: *ranker_failures,
                report,
                error,
            }
        })
        .collect();

    let rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            let (metric, value) = match &r.report {
                Some(rep) if r.protocol.is_vary() => ("necessity", rep.necessity),
                Some(rep) => ("sufficiency", rep.sufficiency),
                None if r.protocol.is_vary() => ("necessity", None),
                None => ("sufficiency", None),
            };
            let status = match (&r.error, r.ranker_failures) {
                (Some(e), _) => format!("error: {e}"),
                (None, 0) => "ok".into(),
                (None, n) => format!("partial: ranker failed on {n} instance(s)"),
            };
            vec![
                r.method.to_string(),
                r.ranker.name().into(),
                r.protocol.name().into(),
                r.protocol.k().map(|k| k.to_string()).unwrap_or_default(),
                r.ncf.to_string(),
                metric.into(),
                opt_num(value),
                status,
            ]
        })
        .collect();
    let csv = out.write_csv(
        "necsuff.csv",
        &["method", "ranker", "protocol", "k", "ncf", "metric", "value", "status"],
        &rows,
    )?;
    out.write_json("necsuff.json", &results)?;
    println!("{} rows written to {}", rows.len(), csv.display());
    Ok(())
}
