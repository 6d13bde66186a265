//! Binary classifiers over encoded vectors.
//!
//! [`Classifier`] is the differentiable model used by the counterfactual
//! optimizers: logistic regression or a small tanh MLP with a single logit
//! output, trained by full-batch gradient descent. [`IndicatorModel`] is the
//! exact threshold rule `I(w·x >= t)` on raw feature values, used as ground
//! truth by the attribution and causality code.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tabular::{Dataset, FeatureKind, FeatureSchema};

/// Anything that maps an encoded vector to `P(y = 1)`.
pub trait ProbabilisticModel: Send + Sync {
    fn input_width(&self) -> usize;

    fn predict_proba(&self, vec: &[f64]) -> Result<f64>;

    /// Class 1 iff the probability is at least 0.5.
    fn predict_class(&self, vec: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(vec)? >= 0.5))
    }
}

/// A model whose logit has an analytic input gradient.
pub trait DifferentiableModel: ProbabilisticModel {
    fn logit(&self, vec: &[f64]) -> Result<f64>;

    /// `∂logit/∂vec`.
    fn grad_input(&self, vec: &[f64]) -> Result<Vec<f64>>;
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            out.push(self.biases[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>());
        }
    }

    /// `Wᵀ g`
    fn backward(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (o, go) in g.iter().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (acc, w) in out.iter_mut().zip(row) {
                *acc += w * go;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", rename_all = "lowercase")]
pub enum Architecture {
    Logistic { weights: Vec<f64>, bias: f64 },
    /// Hidden layers use tanh; the last layer has a single linear output (the logit).
    Mlp { layers: Vec<DenseLayer> },
}

#[derive(Serialize, Deserialize)]
struct RawClassifier {
    input_width: usize,
    #[serde(flatten)]
    architecture: Architecture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClassifier", into = "RawClassifier")]
pub struct Classifier {
    input_width: usize,
    architecture: Architecture,
}

impl TryFrom<RawClassifier> for Classifier {
    type Error = Error;

    fn try_from(raw: RawClassifier) -> Result<Self> {
        Classifier::new(raw.architecture, raw.input_width)
    }
}

impl From<Classifier> for RawClassifier {
    fn from(c: Classifier) -> Self {
        RawClassifier {
            input_width: c.input_width,
            architecture: c.architecture,
        }
    }
}

impl Classifier {
    pub fn new(architecture: Architecture, input_width: usize) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::Model("input width must be positive".into()));
        }
        match &architecture {
            Architecture::Logistic { weights, bias } => {
                if weights.len() != input_width {
                    return Err(Error::Model(format!(
                        "logistic weights have length {}, expected {input_width}",
                        weights.len()
                    )));
                }
                if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Model("parameters must be finite".into()));
                }
            }
            Architecture::Mlp { layers } => {
                if layers.len() < 2 {
                    return Err(Error::Model("an MLP needs at least one hidden layer".into()));
                }
                let mut expected = input_width;
                for (i, l) in layers.iter().enumerate() {
                    if l.inputs != expected || l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs
                    {
                        return Err(Error::Model(format!("layer {i} has inconsistent shape")));
                    }
                    if l.weights.iter().chain(&l.biases).any(|w| !w.is_finite()) {
                        return Err(Error::Model("parameters must be finite".into()));
                    }
                    expected = l.outputs;
                }
                if expected != 1 {
                    return Err(Error::Model("the last MLP layer must have one output".into()));
                }
            }
        }
        Ok(Classifier {
            input_width,
            architecture,
        })
    }

    pub fn logistic(weights: Vec<f64>, bias: f64) -> Result<Self> {
        let width = weights.len();
        Classifier::new(Architecture::Logistic { weights, bias }, width)
    }

    /// Steep logistic surrogate of `I(Σ w_j x_j >= t)` over raw continuous values:
    /// `logit = s · (Σ w_j x_j − t)`, rewritten in encoded coordinates.
    /// Categorical features must carry zero weight.
    pub fn linear_threshold(schema: &FeatureSchema, raw_weights: &[f64], threshold: f64, sharpness: f64) -> Result<Self> {
        let (weights, offset) = encoded_linear_form(schema, raw_weights)?;
        Classifier::logistic(
            weights.iter().map(|w| sharpness * w).collect(),
            sharpness * (offset - threshold),
        )
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    fn check_width(&self, vec: &[f64]) -> Result<()> {
        if vec.len() != self.input_width {
            return Err(Error::Model(format!(
                "input has width {}, model expects {}",
                vec.len(),
                self.input_width
            )));
        }
        Ok(())
    }

    /// Hidden activations of every layer (input first), for backprop.
    fn activations(&self, layers: &[DenseLayer], vec: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![vec.to_vec()];
        let mut buf = Vec::new();
        for (i, layer) in layers.iter().enumerate() {
            layer.forward(acts.last().unwrap(), &mut buf);
            if i + 1 < layers.len() {
                buf.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(buf.clone());
        }
        acts
    }

    /// Train on `data` by full-batch gradient descent on mean log-loss plus
    /// `l2_penalty / 2 · ‖weights‖²` (biases unpenalized).
    pub fn train(data: &Dataset, arch: &ArchSpec, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let n_pos = data.labels().iter().filter(|l| **l == 1).count();
        if n_pos == 0 || n_pos == data.len() {
            return Err(Error::Train("training data must contain both classes".into()));
        }
        let xs = data.encoded_rows();
        let ys: Vec<f64> = data.labels().iter().map(|l| f64::from(*l)).collect();
        let width = data.schema().width();
        let n = xs.len() as f64;

        match arch {
            ArchSpec::Logistic => {
                let mut w = vec![0.0; width];
                let mut b = 0.0;
                for _ in 0..cfg.epochs {
                    let mut gw = vec![0.0; width];
                    let mut gb = 0.0;
                    for (x, y) in xs.iter().zip(&ys) {
                        let z = b + w.iter().zip(x.iter()).map(|(a, v)| a * v).sum::<f64>();
                        let r = sigmoid(z) - y;
                        gb += r;
                        for (g, v) in gw.iter_mut().zip(x.iter()) {
                            *g += r * v;
                        }
                    }
                    for (wi, gi) in w.iter_mut().zip(&gw) {
                        *wi -= cfg.learning_rate * (gi / n + cfg.l2_penalty * *wi);
                    }
                    b -= cfg.learning_rate * gb / n;
                }
                Classifier::logistic(w, b)
            }
            ArchSpec::Mlp { hidden } => {
                if hidden.is_empty() || hidden.len() > 2 || hidden.contains(&0) {
                    return Err(Error::Train("MLP needs one or two non-empty hidden layers".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                let mut sizes = vec![width];
                sizes.extend(hidden);
                sizes.push(1);
                let mut layers: Vec<DenseLayer> = sizes
                    .windows(2)
                    .map(|p| {
                        let limit = (6.0 / (p[0] + p[1]) as f64).sqrt();
                        DenseLayer {
                            inputs: p[0],
                            outputs: p[1],
                            weights: (0..p[0] * p[1]).map(|_| rng.random_range(-limit..limit)).collect(),
                            biases: vec![0.0; p[1]],
                        }
                    })
                    .collect();
                let proto = Classifier {
                    input_width: width,
                    architecture: Architecture::Mlp { layers: Vec::new() },
                };
                for _ in 0..cfg.epochs {
                    let mut gw: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
                    let mut gb: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.biases.len()]).collect();
                    for (x, y) in xs.iter().zip(&ys) {
                        let acts = proto.activations(&layers, x);
                        let z = acts.last().unwrap()[0];
                        let mut delta = vec![sigmoid(z) - y];
                        for li in (0..layers.len()).rev() {
                            let input = &acts[li];
                            let layer = &layers[li];
                            for (o, d) in delta.iter().enumerate() {
                                gb[li][o] += d;
                                for (k, v) in input.iter().enumerate() {
                                    gw[li][o * layer.inputs + k] += d * v;
                                }
                            }
                            if li > 0 {
                                let back = layer.backward(&delta);
                                delta = back.iter().zip(input).map(|(g, h)| g * (1.0 - h * h)).collect();
                            }
                        }
                    }
                    for (li, layer) in layers.iter_mut().enumerate() {
                        for (w, g) in layer.weights.iter_mut().zip(&gw[li]) {
                            *w -= cfg.learning_rate * (g / n + cfg.l2_penalty * *w);
                        }
                        for (b, g) in layer.biases.iter_mut().zip(&gb[li]) {
                            *b -= cfg.learning_rate * g / n;
                        }
                    }
                }
                Classifier::new(Architecture::Mlp { layers }, width)
            }
        }
    }

    /// Fraction of rows whose predicted class matches the label.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64> {
        let mut hits = 0usize;
        for (x, y) in data.encoded_rows().iter().zip(data.labels()) {
            if self.predict_class(x)? == *y {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }
}

impl ProbabilisticModel for Classifier {
    fn input_width(&self) -> usize {
        self.input_width
    }

    fn predict_proba(&self, vec: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(vec)?))
    }
}

impl DifferentiableModel for Classifier {
    fn logit(&self, vec: &[f64]) -> Result<f64> {
        self.check_width(vec)?;
        Ok(match &self.architecture {
            Architecture::Logistic { weights, bias } => bias + weights.iter().zip(vec).map(|(w, v)| w * v).sum::<f64>(),
            Architecture::Mlp { layers } => self.activations(layers, vec).last().unwrap()[0],
        })
    }

    fn grad_input(&self, vec: &[f64]) -> Result<Vec<f64>> {
        self.check_width(vec)?;
        Ok(match &self.architecture {
            Architecture::Logistic { weights, .. } => weights.clone(),
            Architecture::Mlp { layers } => {
                let acts = self.activations(layers, vec);
                let mut g = vec![1.0];
                for li in (0..layers.len()).rev() {
                    let back = layers[li].backward(&g);
                    g = if li > 0 {
                        back.iter().zip(&acts[li]).map(|(d, h)| d * (1.0 - h * h)).collect()
                    } else {
                        back
                    };
                }
                g
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchSpec {
    Logistic,
    Mlp { hidden: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub l2_penalty: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            epochs: 2000,
            seed: 0,
            l2_penalty: 1e-4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Train("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Train("epochs must be at least 1".into()));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return Err(Error::Train("l2_penalty must be non-negative".into()));
        }
        Ok(())
    }
}

/// Encoded weights and constant term such that `Σ w_j raw_j = weights·e + offset`.
fn encoded_linear_form(schema: &FeatureSchema, raw_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if raw_weights.len() != schema.len() {
        return Err(Error::Model(format!(
            "{} weights for {} features",
            raw_weights.len(),
            schema.len()
        )));
    }
    let mut weights = vec![0.0; schema.width()];
    let mut offset = 0.0;
    for (i, (spec, w)) in schema.features().iter().zip(raw_weights).enumerate() {
        match spec.kind {
            FeatureKind::Continuous { min, max } => {
                weights[schema.block(i).start] = w * (max - min);
                offset += w * min;
            }
            FeatureKind::Categorical { .. } => {
                if *w != 0.0 {
                    return Err(Error::Model(format!(
                        "categorical feature `{}` cannot carry a linear weight",
                        spec.name
                    )));
                }
            }
        }
    }
    Ok((weights, offset))
}

/// Exact threshold model `I(Σ w_j x_j >= t)` on raw continuous values.
#[derive(Clone, Debug)]
pub struct IndicatorModel {
    schema: FeatureSchema,
    weights: Vec<f64>,
    threshold: f64,
}

impl IndicatorModel {
    pub fn new(schema: &FeatureSchema, raw_weights: &[f64], threshold: f64) -> Result<Self> {
        encoded_linear_form(schema, raw_weights)?;
        Ok(IndicatorModel {
            schema: schema.clone(),
            weights: raw_weights.to_vec(),
            threshold,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

impl ProbabilisticModel for IndicatorModel {
    fn input_width(&self) -> usize {
        self.schema.width()
    }

    fn predict_proba(&self, vec: &[f64]) -> Result<f64> {
        if vec.len() != self.schema.width() {
            return Err(Error::Model(format!(
                "input has width {}, model expects {}",
                vec.len(),
                self.schema.width()
            )));
        }
        let inst = self.schema.decode(vec)?;
        let score: f64 = inst
            .values()
            .iter()
            .zip(&self.weights)
            .map(|(v, w)| v.as_real().map_or(0.0, |x| w * x))
            .sum();
        Ok(if score >= self.threshold { 1.0 } else { 0.0 })
    }
}

/// On-disk model: the classifier plus the fingerprint of the schema it was trained on.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_fingerprint: String,
    pub classifier: Classifier,
}

pub fn save_model(path: impl AsRef<Path>, clf: &Classifier, schema: &FeatureSchema) -> Result<()> {
    if clf.input_width() != schema.width() {
        return Err(Error::Model("classifier width does not match schema".into()));
    }
    let file = ModelFile {
        schema_fingerprint: schema.fingerprint(),
        classifier: clf.clone(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Classifier> {
    let file: ModelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    if file.schema_fingerprint != schema.fingerprint() {
        return Err(Error::Model("model was trained against a different schema".into()));
    }
    Ok(file.classifier)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::{FeatureSpec, Instance};

    fn unit_schema(d: usize) -> FeatureSchema {
        FeatureSchema::new((0..d).map(|i| FeatureSpec::continuous(format!("x{}", i + 1), 0.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn zero_logistic_is_half() {
        let clf = Classifier::logistic(vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(clf.predict_proba(&[0.3, 0.9]).unwrap(), 0.5);
        assert_eq!(clf.logit(&[0.3, 0.9]).unwrap(), 0.0);
        assert_eq!(clf.grad_input(&[0.3, 0.9]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let clf = Classifier::logistic(vec![1.0, 2.0], 0.0).unwrap();
        assert!(clf.predict_proba(&[1.0]).is_err());
        assert!(clf.logit(&[1.0, 2.0, 3.0]).is_err());
        assert!(clf.grad_input(&[]).is_err());
    }

    #[test]
    fn surrogate_classifies_worked_example() {
        let schema = unit_schema(2);
        let clf = Classifier::linear_threshold(&schema, &[0.45, 0.1], 0.5, 50.0).unwrap();
        assert!(clf.predict_proba(&[1.0, 1.0]).unwrap() > 0.5);
        assert!(clf.predict_proba(&[0.8, 1.0]).unwrap() < 0.5);
        match clf.architecture() {
            Architecture::Logistic { bias, .. } => assert_eq!(*bias, -25.0),
            _ => unreachable!(),
        }
    }

    #[test]
    fn sigmoid_symmetry_and_logit_consistency() {
        let clf = Classifier::logistic(vec![1.5, -2.0], 0.25).unwrap();
        let v = [0.2, 0.7];
        let z = clf.logit(&v).unwrap();
        assert!((sigmoid(z) - clf.predict_proba(&v).unwrap()).abs() < 1e-12);
        assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        assert_eq!(clf.grad_input(&v).unwrap(), vec![1.5, -2.0]);
    }

    #[test]
    fn logit_monotone_in_positive_weights() {
        let clf = Classifier::logistic(vec![0.5, 2.0], -1.0).unwrap();
        let a = clf.logit(&[0.1, 0.5]).unwrap();
        let b = clf.logit(&[0.2, 0.5]).unwrap();
        let c = clf.logit(&[0.2, 0.6]).unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn indicator_is_exact_at_boundary() {
        let schema = unit_schema(2);
        let m = IndicatorModel::new(&schema, &[0.45, 0.1], 0.5).unwrap();
        assert_eq!(m.predict_proba(&[1.0, 0.5]).unwrap(), 1.0);
        assert_eq!(m.predict_proba(&[0.5, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn train_rejects_single_class() {
        let schema = unit_schema(1);
        let rows = vec![Instance::reals(&[0.1]), Instance::reals(&[0.9])];
        let data = Dataset::new(schema, rows, vec![1, 1]).unwrap();
        assert!(matches!(
            Classifier::train(&data, &ArchSpec::Logistic, &TrainConfig::default()),
            Err(Error::Train(_))
        ));
    }

    #[test]
    fn train_config_validation() {
        let bad = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn mlp_shape_validation() {
        let layer = DenseLayer {
            inputs: 2,
            outputs: 1,
            weights: vec![1.0, 1.0],
            biases: vec![0.0],
        };
        assert!(Classifier::new(Architecture::Mlp { layers: vec![layer.clone()] }, 2).is_err());
        let hidden = DenseLayer {
            inputs: 2,
            outputs: 3,
            weights: vec![0.1; 6],
            biases: vec![0.0; 3],
        };
        assert!(Classifier::new(Architecture::Mlp { layers: vec![hidden.clone(), layer] }, 2).is_err());
        let out = DenseLayer {
            inputs: 3,
            outputs: 1,
            weights: vec![0.1; 3],
            biases: vec![0.0],
        };
        assert!(Classifier::new(Architecture::Mlp { layers: vec![hidden, out] }, 2).is_ok());
    }

    #[test]
    fn model_file_round_trip_checks_fingerprint() {
        let schema = unit_schema(2);
        let clf = Classifier::logistic(vec![1.0, -1.0], 0.5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        save_model(&path, &clf, &schema).unwrap();
        assert_eq!(load_model(&path, &schema).unwrap(), clf);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("\"architecture\": \"logistic\""));
        assert!(load_model(&path, &unit_schema(3)).is_err());
    }
}
