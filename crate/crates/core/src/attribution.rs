//! Per-instance and global feature attributions: LIME, Shapley values and
//! counterfactual change frequency.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cfgen::{self, CfMethod, CfRequest, CfTuning, Constraint, CounterfactualSet};
use crate::error::{Error, Result};
use crate::model::{DifferentiableModel, ProbabilisticModel};
use crate::stats;
use crate::tabular::{compute_scales, Dataset, DistanceScales, EncodedVector, FeatureKind, FeatureSchema, FeatureValue, Instance};

/// Largest feature count handled by exact Shapley enumeration.
pub const EXACT_SHAPLEY_LIMIT: usize = 20;
/// Raw continuous change below this is not counted as a modification.
pub const CHANGE_THRESHOLD: f64 = 1e-4;
pub const DEFAULT_NCF_LIST: [usize; 5] = [1, 2, 4, 6, 8];

const LIME_SIGMA_FALLBACK: f64 = 0.1;
const LIME_FLIP_PROB: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributionMethod {
    #[serde(rename = "LIME")]
    Lime,
    #[serde(rename = "SHAP")]
    Shap,
    #[serde(rename = "DiCE_FA")]
    DiceFa,
    #[serde(rename = "WachterCF_FA")]
    WachterCfFa,
}

impl AttributionMethod {
    pub const ALL: [AttributionMethod; 4] = [
        AttributionMethod::Lime,
        AttributionMethod::Shap,
        AttributionMethod::DiceFa,
        AttributionMethod::WachterCfFa,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttributionMethod::Lime => "LIME",
            AttributionMethod::Shap => "SHAP",
            AttributionMethod::DiceFa => "DiCE_FA",
            AttributionMethod::WachterCfFa => "WachterCF_FA",
        }
    }

    pub fn from_cf_method(method: CfMethod) -> Self {
        match method {
            CfMethod::Wachter => AttributionMethod::WachterCfFa,
            CfMethod::Dice => AttributionMethod::DiceFa,
        }
    }

    pub fn is_cf(self) -> bool {
        matches!(self, AttributionMethod::DiceFa | AttributionMethod::WachterCfFa)
    }
}

impl std::fmt::Display for AttributionMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AttributionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttributionMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Attribution(format!("unknown attribution method `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionVector {
    pub method: AttributionMethod,
    pub scores: Vec<f64>,
    /// The explained instance; absent for global averages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_ref: Option<Instance>,
}

impl AttributionVector {
    pub fn new(method: AttributionMethod, scores: Vec<f64>, instance_ref: Option<Instance>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Attribution("non-finite attribution score".into()));
        }
        if method.is_cf() && scores.iter().any(|s| !(0.0..=1.0).contains(s)) {
            return Err(Error::Attribution("counterfactual scores must lie in [0, 1]".into()));
        }
        Ok(AttributionVector {
            method,
            scores,
            instance_ref,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_samples: usize,
    /// Defaults to `0.75·√(encoded width)`.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig {
            n_samples: 5000,
            kernel_width: None,
            ridge: 1e-3,
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<()> {
        if self.n_samples < schema.len() + 1 {
            return Err(Error::Attribution(format!(
                "n_samples must be at least {} for {} features",
                schema.len() + 1,
                schema.len()
            )));
        }
        if let Some(w) = self.kernel_width {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Attribution("kernel_width must be positive".into()));
            }
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::Attribution("ridge must be non-negative".into()));
        }
        Ok(())
    }
}

/// Local weighted ridge surrogate around `inst`.
pub fn lime_attribution<M: ProbabilisticModel + ?Sized>(
    model: &M,
    inst: &Instance,
    cfg: &LimeConfig,
    data: &Dataset,
) -> Result<AttributionVector> {
    let schema = data.schema();
    cfg.validate(schema)?;
    let origin = schema.encode(inst)?;
    let scales = compute_scales(data);
    let encoded = data.encoded_rows();
    let sigmas: Vec<f64> = (0..schema.len())
        .map(|i| {
            let col = schema.block(i).start;
            let values: Vec<f64> = encoded.iter().map(|r| r[col]).collect();
            let s = if values.is_empty() { 0.0 } else { stats::std_dev(&values) };
            if s > 0.0 && s.is_finite() {
                s
            } else {
                LIME_SIGMA_FALLBACK
            }
        })
        .collect();
    let width = cfg
        .kernel_width
        .unwrap_or_else(|| 0.75 * (schema.width() as f64).sqrt());

    let d = schema.len();
    let n = cfg.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut design = DMatrix::<f64>::zeros(n, d);
    let mut target = DVector::<f64>::zeros(n);
    let mut weights = DVector::<f64>::zeros(n);
    for s in 0..n {
        let mut sample = inst.clone();
        for (i, spec) in schema.features().iter().enumerate() {
            match &spec.kind {
                FeatureKind::Continuous { min, max } => {
                    let e = origin[schema.block(i).start];
                    let noise = Normal::new(0.0, sigmas[i]).expect("positive sigma");
                    let z = (e + noise.sample(&mut rng)).clamp(0.0, 1.0);
                    sample.set(i, FeatureValue::Real(min + z * (max - min)));
                    design[(s, i)] = z;
                }
                FeatureKind::Categorical { levels } => {
                    if rng.random_bool(LIME_FLIP_PROB) {
                        sample.set(i, FeatureValue::Level(rng.random_range(0..levels.len())));
                    }
                    design[(s, i)] = f64::from(u8::from(sample.get(i) == inst.get(i)));
                }
            }
        }
        let dist = schema.distance(&sample, inst, &scales)?;
        weights[s] = (-(dist * dist) / (width * width)).exp();
        target[s] = model.predict_proba(&schema.encode(&sample)?)?;
    }
    let coefficients = weighted_ridge(&design, &target, &weights, cfg.ridge)?;
    AttributionVector::new(AttributionMethod::Lime, coefficients, Some(inst.clone()))
}

/// Weighted ridge regression with an unpenalized intercept; returns slopes only.
fn weighted_ridge(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, ridge: f64) -> Result<Vec<f64>> {
    let total: f64 = w.sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::Attribution("all LIME sample weights are zero".into()));
    }
    let d = x.ncols();
    let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).dot(w) / total).collect();
    let y_mean = y.dot(w) / total;
    let mut xc = x.clone();
    for j in 0..d {
        for i in 0..x.nrows() {
            xc[(i, j)] = (x[(i, j)] - x_mean[j]) * w[i].sqrt();
        }
    }
    let yc = DVector::from_iterator(y.len(), y.iter().zip(w.iter()).map(|(v, wi)| (v - y_mean) * wi.sqrt()));
    let gram = xc.transpose() * &xc + DMatrix::identity(d, d) * ridge;
    let rhs = xc.transpose() * yc;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Attribution("degenerate LIME design matrix".into()))?;
    let beta = chol.solve(&rhs);
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::Attribution("degenerate LIME design matrix".into()));
    }
    Ok(beta.iter().copied().collect())
}

/// Encodings of `inst` and `background` plus a helper to splice them by feature mask.
struct Hybrid<'a> {
    schema: &'a FeatureSchema,
    inst: EncodedVector,
    background: EncodedVector,
}

impl<'a> Hybrid<'a> {
    fn new(schema: &'a FeatureSchema, inst: &Instance, background: &Instance) -> Result<Self> {
        Ok(Hybrid {
            schema,
            inst: schema.encode(inst)?,
            background: schema.encode(background)?,
        })
    }

    fn fill(&self, present: impl Fn(usize) -> bool, out: &mut [f64]) {
        for i in 0..self.schema.len() {
            let block = self.schema.block(i);
            let src = if present(i) { &self.inst } else { &self.background };
            out[block.clone()].copy_from_slice(&src[block]);
        }
    }
}

/// Exact Shapley values by enumerating all coalitions. The value of a coalition
/// is the model probability on the instance with features outside it replaced by
/// the background.
pub fn shapley_attribution<M: ProbabilisticModel + ?Sized>(
    model: &M,
    schema: &FeatureSchema,
    inst: &Instance,
    background: &Instance,
) -> Result<AttributionVector> {
    let d = schema.len();
    if d > EXACT_SHAPLEY_LIMIT {
        return Err(Error::Size {
            features: d,
            limit: EXACT_SHAPLEY_LIMIT,
        });
    }
    let hybrid = Hybrid::new(schema, inst, background)?;
    let mut buf = vec![0.0; schema.width()];
    let mut values = Vec::with_capacity(1 << d);
    for mask in 0usize..(1 << d) {
        hybrid.fill(|i| mask & (1 << i) != 0, &mut buf);
        values.push(model.predict_proba(&buf)?);
    }
    // weight[s] = s!(d−s−1)!/d!
    let weight: Vec<f64> = (0..d)
        .map(|s| {
            let mut w = 1.0 / d as f64;
            for k in 1..=s {
                w *= k as f64 / (d - k) as f64;
            }
            w
        })
        .collect();
    let mut phi = vec![0.0; d];
    for (mask, v) in values.iter().enumerate() {
        let size = mask.count_ones() as usize;
        for (j, p) in phi.iter_mut().enumerate() {
            if mask & (1 << j) == 0 {
                *p += weight[size] * (values[mask | (1 << j)] - v);
            }
        }
    }
    AttributionVector::new(AttributionMethod::Shap, phi, Some(inst.clone()))
}

/// Permutation-sampling estimate of the Shapley values.
pub fn shapley_sampled<M: ProbabilisticModel + ?Sized>(
    model: &M,
    schema: &FeatureSchema,
    inst: &Instance,
    background: &Instance,
    n_permutations: usize,
    seed: u64,
) -> Result<AttributionVector> {
    if n_permutations == 0 {
        return Err(Error::Attribution("n_permutations must be at least 1".into()));
    }
    let d = schema.len();
    let hybrid = Hybrid::new(schema, inst, background)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d).collect();
    let mut phi = vec![0.0; d];
    let base = model.predict_proba(&hybrid.background)?;
    let mut current = hybrid.background.0.clone();
    for _ in 0..n_permutations {
        order.shuffle(&mut rng);
        current.copy_from_slice(&hybrid.background);
        let mut prev = base;
        for &j in &order {
            let block = schema.block(j);
            current[block.clone()].copy_from_slice(&hybrid.inst[block]);
            let next = model.predict_proba(&current)?;
            phi[j] += next - prev;
            prev = next;
        }
    }
    phi.iter_mut().for_each(|p| *p /= n_permutations as f64);
    AttributionVector::new(AttributionMethod::Shap, phi, Some(inst.clone()))
}

/// Did feature `i` change between `original` and `candidate`?
pub fn feature_changed(original: &Instance, candidate: &Instance, i: usize) -> bool {
    match (original.get(i), candidate.get(i)) {
        (FeatureValue::Real(a), FeatureValue::Real(b)) => (a - b).abs() > CHANGE_THRESHOLD,
        (a, b) => a != b,
    }
}

/// Per-feature fraction of valid candidates that modify the feature, or `None`
/// when the set has no valid candidate.
pub fn change_fractions(set: &CounterfactualSet, original: &Instance) -> Option<Vec<f64>> {
    let valid: Vec<&Instance> = set
        .candidates
        .iter()
        .zip(&set.valid)
        .filter_map(|(c, v)| v.then_some(c))
        .collect();
    if valid.is_empty() {
        return None;
    }
    Some(
        (0..original.len())
            .map(|i| valid.iter().filter(|c| feature_changed(original, c, i)).count() as f64 / valid.len() as f64)
            .collect(),
    )
}

/// Seed for the `stream`-th sub-run of a computation seeded with `base`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Settings for [`cf_attribution`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfAttributionSpec {
    pub method: CfMethod,
    pub ncf_list: Vec<usize>,
    /// The `k`-th entry of `ncf_list` uses `derive_seed(seed, k)`.
    pub seed: u64,
    pub constraint: Constraint,
    pub tuning: CfTuning,
}

impl CfAttributionSpec {
    /// Unconstrained, default tuning, `ncf_list = DEFAULT_NCF_LIST`, seed 0.
    pub fn new(method: CfMethod) -> Self {
        CfAttributionSpec {
            method,
            ncf_list: DEFAULT_NCF_LIST.to_vec(),
            seed: 0,
            constraint: Constraint::Unconstrained,
            tuning: CfTuning::default(),
        }
    }

    pub fn with_ncf_list(mut self, ncf_list: &[usize]) -> Self {
        self.ncf_list = ncf_list.to_vec();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Counterfactual change-frequency attribution, averaged over `ncf_list`.
pub fn cf_attribution<M: DifferentiableModel + ?Sized>(
    clf: &M,
    schema: &FeatureSchema,
    inst: &Instance,
    spec: &CfAttributionSpec,
    scales: &DistanceScales,
) -> Result<AttributionVector> {
    if spec.ncf_list.is_empty() {
        return Err(Error::Attribution("ncf_list is empty".into()));
    }
    let mut sum = vec![0.0; schema.len()];
    let mut used = 0usize;
    for (k, &ncf) in spec.ncf_list.iter().enumerate() {
        let req = CfRequest::new(inst.clone(), ncf)
            .with_constraint(spec.constraint.clone())
            .with_seed(derive_seed(spec.seed, k as u64))
            .with_tuning(&spec.tuning);
        let set = cfgen::generate(spec.method, clf, schema, &req, scales)?;
        if let Some(fractions) = change_fractions(&set, inst) {
            sum.iter_mut().zip(fractions).for_each(|(s, f)| *s += f);
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::NoValidCfs);
    }
    let scores = sum.into_iter().map(|s| s / used as f64).collect();
    AttributionVector::new(AttributionMethod::from_cf_method(spec.method), scores, Some(inst.clone()))
}

/// Per-feature mean of absolute scores.
pub fn global_attribution(per_instance: &[AttributionVector]) -> Result<AttributionVector> {
    let first = per_instance
        .first()
        .ok_or_else(|| Error::Attribution("no attributions to average".into()))?;
    let d = first.scores.len();
    if per_instance.iter().any(|v| v.method != first.method || v.scores.len() != d) {
        return Err(Error::Attribution("attributions differ in method or width".into()));
    }
    let n = per_instance.len() as f64;
    let scores = (0..d)
        .map(|j| per_instance.iter().map(|v| v.scores[j].abs()).sum::<f64>() / n)
        .collect();
    AttributionVector::new(first.method, scores, None)
}
