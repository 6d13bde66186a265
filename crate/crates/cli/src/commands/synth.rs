use anyhow::{Context, Result};
use necsuff_core::synth;
use necsuff_core::tabular::SchemaFile;

use crate::config::ExperimentConfig;
use crate::report::OutDir;

pub fn run(config: ExperimentConfig, rows: Option<usize>, out: &OutDir) -> Result<()> {
    config.validate()?;
    let mut spec = config
        .dataset
        .synthetic
        .context("`synth` needs a synthetic dataset in the config")?;
    if let Some(n) = rows {
        spec.n_rows = n;
    }
    let data = synth::generate(&spec)?;
    let csv = out.path("data.csv");
    data.dataset.write_csv(&csv, "y")?;
    let schema = SchemaFile {
        schema: data.dataset.schema().clone(),
        label: "y".into(),
    };
    out.write_json("schema.json", &schema)?;
    println!("{} rows written to {}", data.dataset.len(), csv.display());
    Ok(())
}
