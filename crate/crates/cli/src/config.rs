//! Experiment configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use necsuff_core::attribution::{AttributionMethod, LimeConfig, DEFAULT_NCF_LIST};
use necsuff_core::cfgen::{CfMethod, CfTuning, OptimizerConfig};
use necsuff_core::metrics::Protocol;
use necsuff_core::model::{ArchSpec, TrainConfig};
use necsuff_core::synth::{Generator, SyntheticSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub explanation: ExplanationConfig,
    pub experiment: ExperimentSettings,
    pub out: Option<PathBuf>,
    /// Drives every stochastic step; component seeds are derived from it.
    pub seed: u64,
}

/// Exactly one of `synthetic` or `csv` + `schema`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            synthetic: Some(SyntheticSpec {
                generator: Generator::independent_2d(),
                n_rows: 1000,
                seed: 0,
            }),
            csv: None,
            schema: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Train {
        #[serde(default = "default_arch")]
        arch: ArchSpec,
        #[serde(default)]
        train: TrainConfig,
    },
    Load {
        path: PathBuf,
    },
    /// The steep-logistic surrogate of a synthetic generator.
    Surrogate,
}

fn default_arch() -> ArchSpec {
    ArchSpec::Logistic
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Train {
            arch: default_arch(),
            train: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundPolicy {
    /// Feature-wise median (continuous) and mode (categorical) of the dataset.
    #[default]
    Median,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalesPolicy {
    /// Median absolute deviation per continuous feature.
    #[default]
    Mad,
    /// Feature range.
    Range,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplanationConfig {
    pub methods: Vec<AttributionMethod>,
    pub ncf_list: Vec<usize>,
    pub lambda1: f64,
    pub lambda2: f64,
    pub optimizer: OptimizerConfig,
    pub lime: LimeConfig,
    pub background: BackgroundPolicy,
    /// Permutations for sampled Shapley values when exact enumeration is too large.
    pub shapley_permutations: usize,
    pub scales: ScalesPolicy,
}

impl Default for ExplanationConfig {
    fn default() -> Self {
        let tuning = CfTuning::default();
        ExplanationConfig {
            methods: AttributionMethod::ALL.to_vec(),
            ncf_list: DEFAULT_NCF_LIST.to_vec(),
            lambda1: tuning.lambda1,
            lambda2: tuning.lambda2,
            optimizer: tuning.optimizer,
            lime: LimeConfig::default(),
            background: BackgroundPolicy::Median,
            shapley_permutations: 10_000,
            scales: ScalesPolicy::Mad,
        }
    }
}

impl ExplanationConfig {
    pub fn tuning(&self) -> CfTuning {
        CfTuning {
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            optimizer: self.optimizer,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSettings {
    /// The first `n_instances` dataset rows, unless `instances` lists row indices.
    pub n_instances: usize,
    pub instances: Option<Vec<usize>>,
    pub rankers: Vec<AttributionMethod>,
    pub cf_methods: Vec<CfMethod>,
    pub protocols: Vec<Protocol>,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        let mut protocols: Vec<Protocol> = (1..=3).map(|k| Protocol::OnlyKth { k }).collect();
        protocols.extend((1..=3).map(|k| Protocol::FixKth { k }));
        protocols.push(Protocol::Rest);
        ExperimentSettings {
            n_instances: 50,
            instances: None,
            rankers: vec![AttributionMethod::Lime],
            cf_methods: vec![CfMethod::Dice, CfMethod::Wachter],
            protocols,
        }
    }
}

impl ExperimentConfig {
    /// Read a config file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("cannot parse config `{}`", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dataset.csv.as_mut().map(resolve);
        cfg.dataset.schema.as_mut().map(resolve);
        if let ModelConfig::Load { path } = &mut cfg.model {
            resolve(path);
        }
        cfg.out.as_mut().map(resolve);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dataset;
        match (&d.synthetic, &d.csv, &d.schema) {
            (Some(_), None, None) | (None, Some(_), Some(_)) => {}
            (None, Some(_), None) | (None, None, Some(_)) => bail!("dataset: `csv` and `schema` must be given together"),
            _ => bail!("dataset: give exactly one of `synthetic` or `csv` + `schema`"),
        }
        if matches!(self.model, ModelConfig::Surrogate) && d.synthetic.is_none() {
            bail!("model: `surrogate` requires a synthetic dataset");
        }
        let e = &self.explanation;
        if e.ncf_list.is_empty() || e.ncf_list.contains(&0) {
            bail!("explanation.ncf_list must be non-empty with entries ≥ 1");
        }
        if e.ncf_list.windows(2).any(|w| w[0] >= w[1]) {
            bail!("explanation.ncf_list must be strictly ascending");
        }
        if e.shapley_permutations == 0 {
            bail!("explanation.shapley_permutations must be at least 1");
        }
        if self.experiment.n_instances == 0 && self.experiment.instances.is_none() {
            bail!("experiment.n_instances must be at least 1");
        }
        Ok(())
    }
}
