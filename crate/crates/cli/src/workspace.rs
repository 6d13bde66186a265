//! Dataset, model and distance scales resolved from a config.

use anyhow::{bail, Context, Result};
use log::info;
use necsuff_core::attribution::{
    cf_attribution, derive_seed, lime_attribution, shapley_attribution, shapley_sampled, AttributionMethod, AttributionVector,
    CfAttributionSpec, LimeConfig, EXACT_SHAPLEY_LIMIT,
};
use necsuff_core::cfgen::{CfMethod, Constraint};
use necsuff_core::model::{load_model, Classifier, TrainConfig};
use necsuff_core::synth;
use necsuff_core::tabular::{compute_scales, load_csv, Dataset, DistanceScales, FeatureSchema, Instance, SchemaFile};

use crate::config::{BackgroundPolicy, ExperimentConfig, ModelConfig, ScalesPolicy};

/// Seed streams derived from the global seed.
pub mod stream {
    pub const TRAIN: u64 = 1;
    pub const LIME: u64 = 2;
    pub const SHAP: u64 = 3;
    pub const CF_ATTRIBUTION: u64 = 4;
    pub const EXPLAIN_CF: u64 = 5;
    pub const NECSUFF: u64 = 6;
}

pub struct Workspace {
    pub config: ExperimentConfig,
    pub dataset: Dataset,
    pub model: Classifier,
    pub scales: DistanceScales,
    background: Instance,
}

impl Workspace {
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let (dataset, surrogate) = load_dataset(&config)?;
        let model = match &config.model {
            ModelConfig::Train { arch, train } => {
                let cfg = TrainConfig {
                    seed: derive_seed(config.seed, stream::TRAIN),
                    ..train.clone()
                };
                info!("training {arch:?} on {} rows", dataset.len());
                Classifier::train(&dataset, arch, &cfg).context("training failed")?
            }
            ModelConfig::Load { path } => {
                load_model(path, dataset.schema()).with_context(|| format!("cannot load model `{}`", path.display()))?
            }
            ModelConfig::Surrogate => surrogate.context("model: `surrogate` requires a synthetic dataset")?,
        };
        let scales = match config.explanation.scales {
            ScalesPolicy::Mad => compute_scales(&dataset),
            ScalesPolicy::Range => DistanceScales::from_ranges(dataset.schema()),
        };
        let background = match config.explanation.background {
            BackgroundPolicy::Median => dataset.median_instance(),
        };
        Ok(Workspace {
            config,
            dataset,
            model,
            scales,
            background,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.dataset.schema()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Row indices selected by the experiment settings, in ascending order of appearance.
    pub fn instance_indices(&self) -> Result<Vec<usize>> {
        let n = self.dataset.len();
        match &self.config.experiment.instances {
            Some(list) => {
                if let Some(bad) = list.iter().find(|i| **i >= n) {
                    bail!("instance index {bad} is out of range (dataset has {n} rows)");
                }
                Ok(list.clone())
            }
            None => Ok((0..self.config.experiment.n_instances.min(n)).collect()),
        }
    }

    pub fn row(&self, index: usize) -> Result<&Instance> {
        self.dataset
            .rows()
            .get(index)
            .with_context(|| format!("instance index {index} is out of range (dataset has {} rows)", self.dataset.len()))
    }

    /// One attribution vector; `index` keys the derived seeds.
    pub fn attribute(
        &self,
        method: AttributionMethod,
        inst: &Instance,
        index: u64,
        ncf_list: &[usize],
        constraint: &Constraint,
    ) -> necsuff_core::Result<AttributionVector> {
        let seed = self.seed();
        match method {
            AttributionMethod::Lime => {
                let cfg = LimeConfig {
                    seed: derive_seed(derive_seed(seed, stream::LIME), index),
                    ..self.config.explanation.lime.clone()
                };
                lime_attribution(&self.model, inst, &cfg, &self.dataset)
            }
            AttributionMethod::Shap if self.schema().len() <= EXACT_SHAPLEY_LIMIT => {
                shapley_attribution(&self.model, self.schema(), inst, &self.background)
            }
            AttributionMethod::Shap => shapley_sampled(
                &self.model,
                self.schema(),
                inst,
                &self.background,
                self.config.explanation.shapley_permutations,
                derive_seed(derive_seed(seed, stream::SHAP), index),
            ),
            AttributionMethod::DiceFa | AttributionMethod::WachterCfFa => {
                let cf_method = if method == AttributionMethod::DiceFa { CfMethod::Dice } else { CfMethod::Wachter };
                let spec = CfAttributionSpec {
                    method: cf_method,
                    ncf_list: ncf_list.to_vec(),
                    seed: derive_seed(derive_seed(seed, stream::CF_ATTRIBUTION), index),
                    constraint: constraint.clone(),
                    tuning: self.config.explanation.tuning(),
                };
                cf_attribution(&self.model, self.schema(), inst, &spec, &self.scales)
            }
        }
    }
}

fn load_dataset(config: &ExperimentConfig) -> Result<(Dataset, Option<Classifier>)> {
    let d = &config.dataset;
    if let Some(spec) = &d.synthetic {
        let data = synth::generate(spec).context("cannot generate synthetic dataset")?;
        return Ok((data.dataset, Some(data.surrogate)));
    }
    let (Some(csv), Some(schema_path)) = (&d.csv, &d.schema) else {
        bail!("dataset: give exactly one of `synthetic` or `csv` + `schema`");
    };
    let schema_file =
        SchemaFile::load(schema_path).with_context(|| format!("cannot load schema file `{}`", schema_path.display()))?;
    let dataset = load_csv(csv, &schema_file.schema, &schema_file.label)
        .with_context(|| format!("cannot load dataset `{}`", csv.display()))?;
    Ok((dataset, None))
}
