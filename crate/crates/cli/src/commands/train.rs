use anyhow::{bail, Result};
use necsuff_core::model::{save_model, Architecture};
use serde::Serialize;

use crate::config::{ExperimentConfig, ModelConfig};
use crate::report::OutDir;
use crate::workspace::Workspace;

#[derive(Serialize)]
struct TrainReport<'a> {
    architecture: &'a str,
    source: &'a str,
    n_rows: usize,
    accuracy: f64,
    schema_fingerprint: String,
}

pub fn run(config: ExperimentConfig, out: &OutDir) -> Result<()> {
    let source = match config.model {
        ModelConfig::Train { .. } => "train",
        ModelConfig::Surrogate => "surrogate",
        ModelConfig::Load { .. } => bail!("model source `load` cannot be trained; use `train` or `surrogate`"),
    };
    let ws = Workspace::load(config)?;
    let accuracy = ws.model.accuracy(&ws.dataset)?;
    let model_path = out.path("model.json");
    save_model(&model_path, &ws.model, ws.schema())?;
    let report = TrainReport {
        architecture: match ws.model.architecture() {
            Architecture::Logistic { .. } => "logistic",
            Architecture::Mlp { .. } => "mlp",
        },
        source,
        n_rows: ws.dataset.len(),
        accuracy,
        schema_fingerprint: ws.schema().fingerprint(),
    };
    out.write_json("train.json", &report)?;
    println!("train accuracy: {accuracy:.4}");
    println!("model written to {}", model_path.display());
    Ok(())
}
