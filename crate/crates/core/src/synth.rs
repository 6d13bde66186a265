//! Synthetic datasets with known labeling rules and matching steep-logistic
//! surrogates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tabular::{Dataset, FeatureSchema, FeatureSpec, FeatureValue, Instance};

/// Logit slope of the surrogates for generators without an explicit sharpness.
pub const SURROGATE_SHARPNESS: f64 = 50.0;
pub const GRADE_LEVELS: [&str; 7] = ["A", "B", "C", "D", "E", "F", "G"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator")]
pub enum Generator {
    /// `y = I(w1·x1 + w2·x2 ≥ t)` with `x ~ U(0, 1)²`.
    Independent2D {
        #[serde(default = "default_w1")]
        w1: f64,
        #[serde(default = "default_w2")]
        w2: f64,
        #[serde(default = "default_t")]
        t: f64,
    },
    /// `y = I(w·x ≥ threshold)` with uniform continuous features.
    LinearThreshold {
        weights: Vec<f64>,
        threshold: f64,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    /// A seven-level `grade` plus `n_features − 1` uniform features;
    /// `y = I(share·grade/6 + (1 − share)·mean(others) ≥ 0.5)`.
    DominantFeature {
        n_features: usize,
        #[serde(default = "default_share")]
        dominant_weight_share: f64,
    },
}

fn default_w1() -> f64 {
    0.45
}
fn default_w2() -> f64 {
    0.1
}
fn default_t() -> f64 {
    0.5
}
fn default_sharpness() -> f64 {
    SURROGATE_SHARPNESS
}
fn default_share() -> f64 {
    0.8
}

impl Generator {
    pub fn independent_2d() -> Self {
        Generator::Independent2D {
            w1: default_w1(),
            w2: default_w2(),
            t: default_t(),
        }
    }

    /// Equal weights `1/n` and threshold 0.5: the label is `I(mean(x) ≥ 0.5)`.
    pub fn balanced(n_features: usize) -> Self {
        Generator::LinearThreshold {
            weights: vec![1.0 / n_features as f64; n_features],
            threshold: 0.5,
            sharpness: SURROGATE_SHARPNESS,
        }
    }

    pub fn dominant(n_features: usize) -> Self {
        Generator::DominantFeature {
            n_features,
            dominant_weight_share: default_share(),
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Schema(format!("synthetic generator: {m}")));
        match self {
            Generator::Independent2D { w1, w2, t } => {
                if ![w1, w2, t].iter().all(|v| v.is_finite()) {
                    return bad("parameters must be finite");
                }
            }
            Generator::LinearThreshold {
                weights,
                threshold,
                sharpness,
            } => {
                if weights.is_empty() || !weights.iter().chain([threshold, sharpness]).all(|v| v.is_finite()) {
                    return bad("weights must be non-empty and finite");
                }
                if *sharpness <= 0.0 {
                    return bad("sharpness must be positive");
                }
            }
            Generator::DominantFeature {
                n_features,
                dominant_weight_share,
            } => {
                if *n_features < 2 {
                    return bad("n_features must be at least 2");
                }
                if !(0.0..=1.0).contains(dominant_weight_share) {
                    return bad("dominant_weight_share must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> Result<FeatureSchema> {
        self.validate()?;
        let cont = |n: usize| (1..=n).map(|i| FeatureSpec::continuous(format!("x{i}"), 0.0, 1.0));
        match self {
            Generator::Independent2D { .. } => FeatureSchema::new(cont(2).collect()),
            Generator::LinearThreshold { weights, .. } => FeatureSchema::new(cont(weights.len()).collect()),
            Generator::DominantFeature { n_features, .. } => FeatureSchema::new(
                std::iter::once(FeatureSpec::categorical("grade", GRADE_LEVELS))
                    .chain(cont(n_features - 1))
                    .collect(),
            ),
        }
    }

    /// The exact labeling rule.
    pub fn label(&self, inst: &Instance) -> u8 {
        let real = |i: usize| inst.get(i).as_real().unwrap_or(0.0);
        let score_and_t = match self {
            Generator::Independent2D { w1, w2, t } => (w1 * real(0) + w2 * real(1), *t),
            Generator::LinearThreshold { weights, threshold, .. } => {
                (weights.iter().enumerate().map(|(i, w)| w * real(i)).sum(), *threshold)
            }
            Generator::DominantFeature {
                n_features,
                dominant_weight_share: share,
            } => {
                let grade = inst.get(0).as_level().unwrap_or(0) as f64 / 6.0;
                let others = (1..*n_features).map(real).sum::<f64>() / (n_features - 1) as f64;
                (share * grade + (1.0 - share) * others, 0.5)
            }
        };
        u8::from(score_and_t.0 >= score_and_t.1)
    }

    /// Steep logistic whose 0.5 level set is the labeling rule's boundary.
    pub fn surrogate(&self) -> Result<Classifier> {
        let schema = self.schema()?;
        match self {
            Generator::Independent2D { w1, w2, t } => Classifier::linear_threshold(&schema, &[*w1, *w2], *t, SURROGATE_SHARPNESS),
            Generator::LinearThreshold {
                weights,
                threshold,
                sharpness,
            } => Classifier::linear_threshold(&schema, weights, *threshold, *sharpness),
            Generator::DominantFeature {
                n_features,
                dominant_weight_share: share,
            } => {
                let s = SURROGATE_SHARPNESS;
                let mut weights: Vec<f64> = (0..GRADE_LEVELS.len()).map(|l| s * share * l as f64 / 6.0).collect();
                weights.extend(std::iter::repeat_n(s * (1.0 - share) / (n_features - 1) as f64, n_features - 1));
                Classifier::logistic(weights, -0.5 * s)
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Instance {
        match self {
            Generator::Independent2D { .. } => Instance::reals(&[rng.random(), rng.random()]),
            Generator::LinearThreshold { weights, .. } => {
                Instance::reals(&(0..weights.len()).map(|_| rng.random()).collect::<Vec<f64>>())
            }
            Generator::DominantFeature { n_features, .. } => {
                let mut values = vec![FeatureValue::Level(rng.random_range(0..GRADE_LEVELS.len()))];
                values.extend((1..*n_features).map(|_| FeatureValue::Real(rng.random())));
                Instance::new(values)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    #[serde(flatten)]
    pub generator: Generator,
    pub n_rows: usize,
    #[serde(default)]
    pub seed: u64,
}

pub struct SyntheticData {
    pub dataset: Dataset,
    pub surrogate: Classifier,
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.n_rows < 10 {
        return Err(Error::Schema("synthetic datasets need at least 10 rows".into()));
    }
    let schema = spec.generator.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows: Vec<Instance> = (0..spec.n_rows).map(|_| spec.generator.sample(&mut rng)).collect();
    let labels = rows.iter().map(|r| spec.generator.label(r)).collect();
    Ok(SyntheticData {
        dataset: Dataset::new(schema, rows, labels)?,
        surrogate: spec.generator.surrogate()?,
    })
}
