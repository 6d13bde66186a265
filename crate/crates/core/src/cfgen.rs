//! Counterfactual generation.
//!
//! Both generators minimize, over encoded candidate vectors `c_1..c_n`,
//!
//! ```text
//! (1/n) Σ yloss(c_i) + (λ1/n) Σ dist(c_i, x) − λ2 · det K(c_1..c_n)
//! ```
//!
//! where `yloss` is a hinge on the logit, `dist` the relaxed encoded metric and
//! `K_ij = 1 / (1 + dist(c_i, c_j))` the DPP similarity kernel. The Wachter
//! generator solves the single-candidate problem `n` times from independent
//! random starts (the diversity term is constant for one candidate); DiCE solves
//! the joint problem once.
//!
//! Optimization is projected gradient descent with per-candidate normalized
//! steps of length `learning_rate` in encoded space. Starts are the original
//! encoding plus uniform noise on free entries, reflected into `[0, 1]`. After
//! every step, entries are clamped to `[0, 1]`, categorical blocks renormalized
//! to sum to one, and frozen entries reset to the original encoding.
//!
//! A candidate stops moving once it decodes to the desired class with the hinge
//! margin met. A run ends when every candidate has stopped, when all candidates
//! are valid and the loss has changed by less than `tol` for five consecutive
//! steps, or after `max_iters`.

use std::collections::HashSet;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::DifferentiableModel;
use crate::tabular::{DistanceScales, EncodedMetric, EncodedVector, FeatureKind, FeatureSchema, Instance};

/// Continuous values are compared at this many decimals when deduplicating.
pub const DEDUP_DECIMALS: i32 = 4;
const INIT_NOISE: f64 = 0.1;
const CONVERGED_STEPS: usize = 5;
const KERNEL_RIDGE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfMethod {
    Wachter,
    Dice,
}

impl std::fmt::Display for CfMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CfMethod::Wachter => "WachterCF",
            CfMethod::Dice => "DiCE",
        })
    }
}

/// Which features the optimizer may change. Indices refer to schema features.
/// Features marked immutable in the schema are always frozen.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    #[default]
    Unconstrained,
    VaryOnly(Vec<usize>),
    Freeze(Vec<usize>),
}

impl Constraint {
    fn validate(&self, n_features: usize) -> Result<()> {
        match self {
            Constraint::Unconstrained => Ok(()),
            Constraint::VaryOnly(set) | Constraint::Freeze(set) => {
                if matches!(self, Constraint::VaryOnly(_)) && set.is_empty() {
                    return Err(Error::Request("vary-only feature set is empty".into()));
                }
                if let Some(bad) = set.iter().find(|i| **i >= n_features) {
                    return Err(Error::Request(format!("feature index {bad} out of range")));
                }
                Ok(())
            }
        }
    }

    /// Per-feature flag: may this feature change?
    pub fn free_features(&self, schema: &FeatureSchema) -> Vec<bool> {
        (0..schema.len())
            .map(|i| {
                schema.feature(i).mutable
                    && match self {
                        Constraint::Unconstrained => true,
                        Constraint::VaryOnly(set) => set.contains(&i),
                        Constraint::Freeze(set) => !set.contains(&i),
                    }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.05,
            max_iters: 5000,
            tol: 1e-7,
        }
    }
}

/// Loss weights and optimizer settings shared by many requests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfTuning {
    pub lambda1: f64,
    pub lambda2: f64,
    pub optimizer: OptimizerConfig,
}

impl Default for CfTuning {
    fn default() -> Self {
        CfTuning {
            lambda1: default_lambda1(),
            lambda2: default_lambda2(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfRequest {
    pub instance: Instance,
    /// Defaults to the opposite of the model's current prediction.
    #[serde(default)]
    pub desired_class: Option<u8>,
    pub n_cf: usize,
    #[serde(default)]
    pub constraint: Constraint,
    #[serde(default = "default_lambda1")]
    pub lambda1: f64,
    #[serde(default = "default_lambda2")]
    pub lambda2: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

fn default_lambda1() -> f64 {
    0.5
}

fn default_lambda2() -> f64 {
    1.0
}

impl CfRequest {
    pub fn new(instance: Instance, n_cf: usize) -> Self {
        CfRequest {
            instance,
            desired_class: None,
            n_cf,
            constraint: Constraint::Unconstrained,
            lambda1: default_lambda1(),
            lambda2: default_lambda2(),
            seed: 0,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tuning(mut self, tuning: &CfTuning) -> Self {
        self.lambda1 = tuning.lambda1;
        self.lambda2 = tuning.lambda2;
        self.optimizer = tuning.optimizer;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Iterations summed over all runs.
    pub iterations: usize,
    /// Final objective value, averaged over runs.
    pub final_loss: f64,
    /// Number of independent optimization runs.
    pub restarts_used: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualSet {
    pub desired_class: u8,
    pub candidates: Vec<Instance>,
    pub valid: Vec<bool>,
    pub unique_valid_count: usize,
    pub diagnostics: Diagnostics,
}

/// Hinge loss on the logit: `max(0, 1 − z·logit)`, `z = ±1` for the desired class.
pub fn yloss<M: DifferentiableModel + ?Sized>(clf: &M, vec: &[f64], desired: u8) -> Result<f64> {
    Ok(hinge(clf.logit(vec)?, desired))
}

fn hinge(logit: f64, desired: u8) -> f64 {
    (1.0 - class_sign(desired) * logit).max(0.0)
}

fn class_sign(desired: u8) -> f64 {
    if desired == 1 {
        1.0
    } else {
        -1.0
    }
}

fn kernel(cfs: &[&[f64]], metric: &EncodedMetric) -> DMatrix<f64> {
    let n = cfs.len();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            1.0
        } else {
            1.0 / (1.0 + metric.distance(cfs[i], cfs[j]))
        }
    })
}

/// `det K` with `K_ij = 1 / (1 + dist(c_i, c_j))`.
pub fn dpp_diversity(cfs: &[EncodedVector], scales: &DistanceScales, schema: &FeatureSchema) -> f64 {
    let metric = EncodedMetric::new(schema, scales);
    let refs: Vec<&[f64]> = cfs.iter().map(|c| &c[..]).collect();
    dpp_value(&refs, &metric)
}

fn dpp_value(cfs: &[&[f64]], metric: &EncodedMetric) -> f64 {
    if cfs.len() <= 1 {
        return 1.0;
    }
    kernel(cfs, metric).determinant().clamp(0.0, 1.0)
}

/// Gradient of `det K` with respect to every entry of every candidate.
pub fn dpp_diversity_gradient(cfs: &[EncodedVector], scales: &DistanceScales, schema: &FeatureSchema) -> Vec<Vec<f64>> {
    let metric = EncodedMetric::new(schema, scales);
    let refs: Vec<&[f64]> = cfs.iter().map(|c| &c[..]).collect();
    dpp_gradient(&refs, &metric)
}

fn dpp_gradient(cfs: &[&[f64]], metric: &EncodedMetric) -> Vec<Vec<f64>> {
    let n = cfs.len();
    let width = cfs.first().map_or(0, |c| c.len());
    let mut grads = vec![vec![0.0; width]; n];
    if n <= 1 {
        return grads;
    }
    let k = kernel(cfs, metric);
    // ∂det/∂K = det · K⁻ᵀ; regularize when K is close to singular.
    let mut det = k.determinant();
    let mut inverse = if det.abs() > 1e-12 { k.clone().try_inverse() } else { None };
    if inverse.is_none() {
        let reg = &k + DMatrix::identity(n, n) * KERNEL_RIDGE;
        det = reg.determinant();
        inverse = reg.try_inverse();
    }
    let Some(inverse) = inverse else {
        return grads;
    };
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            // K_ij and K_ji both depend on c_i; dK/d(dist) = −K².
            let g = 2.0 * det * inverse[(j, i)];
            let factor = -g * k[(i, j)] * k[(i, j)];
            metric.accumulate_grad(cfs[i], cfs[j], factor, &mut grads[i]);
        }
    }
    grads
}

/// Per-request optimization context.
struct Problem<'a, M: ?Sized> {
    clf: &'a M,
    schema: &'a FeatureSchema,
    metric: EncodedMetric,
    original: &'a Instance,
    origin: EncodedVector,
    free_features: Vec<bool>,
    free_entries: Vec<bool>,
    desired: u8,
    lambda1: f64,
    lambda2: f64,
    opt: OptimizerConfig,
}

struct RunOutcome {
    candidates: Vec<Vec<f64>>,
    iterations: usize,
    final_loss: f64,
}

impl<'a, M: DifferentiableModel + ?Sized> Problem<'a, M> {
    fn new(clf: &'a M, schema: &'a FeatureSchema, req: &'a CfRequest, scales: &DistanceScales) -> Result<Self> {
        let origin = schema.encode(&req.instance)?;
        if clf.input_width() != schema.width() {
            return Err(Error::Model("classifier width does not match schema".into()));
        }
        if scales.len() != schema.len() {
            return Err(Error::Schema("distance scales do not match schema".into()));
        }
        if req.n_cf == 0 {
            return Err(Error::Request("n_cf must be at least 1".into()));
        }
        req.constraint.validate(schema.len())?;
        if !(req.lambda1 >= 0.0 && req.lambda2 >= 0.0) {
            return Err(Error::Request("lambda1 and lambda2 must be non-negative".into()));
        }
        let opt = req.optimizer;
        if !(opt.learning_rate > 0.0 && opt.tol > 0.0) {
            return Err(Error::Request("learning_rate and tol must be positive".into()));
        }
        let current = clf.predict_class(&origin)?;
        let desired = req.desired_class.unwrap_or(1 - current);
        if desired > 1 {
            return Err(Error::Request(format!("desired class {desired} is not binary")));
        }
        if desired == current {
            return Err(Error::Request(format!(
                "desired class {desired} equals the current prediction"
            )));
        }
        let free_features = req.constraint.free_features(schema);
        let mut free_entries = vec![false; schema.width()];
        for (i, free) in free_features.iter().enumerate() {
            if *free {
                for e in schema.block(i) {
                    free_entries[e] = true;
                }
            }
        }
        Ok(Problem {
            clf,
            schema,
            metric: EncodedMetric::new(schema, scales),
            original: &req.instance,
            origin,
            free_features,
            free_entries,
            desired,
            lambda1: req.lambda1,
            lambda2: req.lambda2,
            opt,
        })
    }

    fn has_free_entries(&self) -> bool {
        self.free_entries.iter().any(|f| *f)
    }

    fn init(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut c = self.origin.0.clone();
        for (e, free) in self.free_entries.iter().enumerate() {
            if *free {
                // Reflect at the box edges so starts never sit on a bound.
                let v = c[e] + rng.random_range(-INIT_NOISE..=INIT_NOISE);
                c[e] = if v > 1.0 { 2.0 - v } else { v.abs() };
            }
        }
        self.project(&mut c);
        c
    }

    fn project(&self, c: &mut [f64]) {
        for (i, spec) in self.schema.features().iter().enumerate() {
            let block = self.schema.block(i);
            if !self.free_features[i] {
                c[block.clone()].copy_from_slice(&self.origin[block]);
                continue;
            }
            let entries = &mut c[block];
            for v in entries.iter_mut() {
                *v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
            }
            if let FeatureKind::Categorical { .. } = spec.kind {
                let sum: f64 = entries.iter().sum();
                if sum > 0.0 {
                    entries.iter_mut().for_each(|v| *v /= sum);
                } else {
                    let u = 1.0 / entries.len() as f64;
                    entries.iter_mut().for_each(|v| *v = u);
                }
            }
        }
    }

    /// Decoded candidate; frozen features copy the original values exactly.
    fn decode(&self, c: &[f64]) -> Result<Instance> {
        let mut inst = self.schema.decode(c)?;
        for (i, free) in self.free_features.iter().enumerate() {
            if !free {
                inst.set(i, self.original.get(i));
            }
        }
        Ok(inst)
    }

    fn is_valid(&self, c: &[f64]) -> Result<bool> {
        let inst = self.decode(c)?;
        Ok(self.clf.predict_class(&self.schema.encode(&inst)?)? == self.desired)
    }

    fn loss(&self, cands: &[Vec<f64>]) -> Result<f64> {
        let n = cands.len() as f64;
        let mut total = 0.0;
        for c in cands {
            let y = hinge(self.clf.logit(c)?, self.desired);
            total += (y + self.lambda1 * self.metric.distance(c, &self.origin)) / n;
        }
        if self.lambda2 != 0.0 && cands.len() > 1 {
            let refs: Vec<&[f64]> = cands.iter().map(|c| &c[..]).collect();
            total -= self.lambda2 * dpp_value(&refs, &self.metric);
        }
        Ok(total)
    }

    /// Loss gradients. The hinge term keeps pulling while a candidate's decoded
    /// prediction is still wrong, even if the relaxed logit already clears the margin.
    fn gradients(&self, cands: &[Vec<f64>], valid: &[bool]) -> Result<Vec<Vec<f64>>> {
        let n = cands.len() as f64;
        let sign = class_sign(self.desired);
        let mut grads = Vec::with_capacity(cands.len());
        for (c, ok) in cands.iter().zip(valid) {
            let mut g = vec![0.0; c.len()];
            let z = self.clf.logit(c)?;
            if 1.0 - sign * z > 0.0 || !ok {
                for (gi, di) in g.iter_mut().zip(self.clf.grad_input(c)?) {
                    *gi -= sign * di / n;
                }
            }
            self.metric.accumulate_grad(c, &self.origin, self.lambda1 / n, &mut g);
            grads.push(g);
        }
        if self.lambda2 != 0.0 && cands.len() > 1 {
            let refs: Vec<&[f64]> = cands.iter().map(|c| &c[..]).collect();
            for (g, d) in grads.iter_mut().zip(dpp_gradient(&refs, &self.metric)) {
                for (gi, di) in g.iter_mut().zip(d) {
                    *gi -= self.lambda2 * di;
                }
            }
        }
        for g in &mut grads {
            for (gi, free) in g.iter_mut().zip(&self.free_entries) {
                if !free {
                    *gi = 0.0;
                }
            }
        }
        Ok(grads)
    }

    /// Candidates stop moving once they decode to the desired class with the
    /// hinge margin met; the run ends when all have settled, when all are valid
    /// and the loss has stalled, or at `max_iters`.
    fn run(&self, mut cands: Vec<Vec<f64>>) -> Result<RunOutcome> {
        let mut loss = self.loss(&cands)?;
        if !self.has_free_entries() {
            return Ok(RunOutcome {
                candidates: cands,
                iterations: 0,
                final_loss: loss,
            });
        }
        let mut settled = vec![false; cands.len()];
        let mut steady = 0usize;
        let mut iterations = 0usize;
        while iterations < self.opt.max_iters {
            let mut valid = Vec::with_capacity(cands.len());
            for (c, done) in cands.iter().zip(settled.iter_mut()) {
                let ok = self.is_valid(c)?;
                if ok && hinge(self.clf.logit(c)?, self.desired) == 0.0 {
                    *done = true;
                }
                valid.push(ok);
            }
            if settled.iter().all(|s| *s) || (steady >= CONVERGED_STEPS && valid.iter().all(|v| *v)) {
                break;
            }
            let grads = self.gradients(&cands, &valid)?;
            for ((c, g), done) in cands.iter_mut().zip(&grads).zip(&settled) {
                if *done {
                    continue;
                }
                let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    let step = self.opt.learning_rate / norm;
                    for (ci, gi) in c.iter_mut().zip(g) {
                        *ci -= step * gi;
                    }
                }
                self.project(c);
            }
            iterations += 1;
            let next = self.loss(&cands)?;
            steady = if (next - loss).abs() < self.opt.tol { steady + 1 } else { 0 };
            loss = next;
        }
        Ok(RunOutcome {
            candidates: cands,
            iterations,
            final_loss: loss,
        })
    }

    fn finish(&self, runs: Vec<RunOutcome>) -> Result<CounterfactualSet> {
        let mut candidates = Vec::new();
        let mut valid = Vec::new();
        let mut iterations = 0;
        let mut loss = 0.0;
        let n_runs = runs.len();
        for run in runs {
            iterations += run.iterations;
            loss += run.final_loss / n_runs as f64;
            for c in &run.candidates {
                valid.push(self.is_valid(c)?);
                candidates.push(self.decode(c)?);
            }
        }
        let mut set = CounterfactualSet {
            desired_class: self.desired,
            candidates,
            valid,
            unique_valid_count: 0,
            diagnostics: Diagnostics {
                iterations,
                final_loss: loss,
                restarts_used: n_runs,
            },
        };
        set.unique_valid_count = count_unique_valid(&set, self.original);
        Ok(set)
    }
}

/// Wachter-style generation: `n_cf` independent single-candidate runs, each
/// from a fresh random start. Duplicates are kept.
pub fn wachter_generate<M: DifferentiableModel + ?Sized>(
    clf: &M,
    schema: &FeatureSchema,
    req: &CfRequest,
    scales: &DistanceScales,
) -> Result<CounterfactualSet> {
    let problem = Problem::new(clf, schema, req, scales)?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let runs = (0..req.n_cf)
        .map(|_| problem.run(vec![problem.init(&mut rng)]))
        .collect::<Result<Vec<_>>>()?;
    problem.finish(runs)
}

/// DiCE-style generation: one joint optimization over all `n_cf` candidates
/// with the DPP diversity term.
pub fn dice_generate<M: DifferentiableModel + ?Sized>(
    clf: &M,
    schema: &FeatureSchema,
    req: &CfRequest,
    scales: &DistanceScales,
) -> Result<CounterfactualSet> {
    let problem = Problem::new(clf, schema, req, scales)?;
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    let init = (0..req.n_cf).map(|_| problem.init(&mut rng)).collect();
    let run = problem.run(init)?;
    problem.finish(vec![run])
}

pub fn generate<M: DifferentiableModel + ?Sized>(
    method: CfMethod,
    clf: &M,
    schema: &FeatureSchema,
    req: &CfRequest,
    scales: &DistanceScales,
) -> Result<CounterfactualSet> {
    match method {
        CfMethod::Wachter => wachter_generate(clf, schema, req, scales),
        CfMethod::Dice => dice_generate(clf, schema, req, scales),
    }
}

/// Valid candidates that differ from `original` and from each other once
/// continuous values are rounded to four decimals.
pub fn count_unique_valid(set: &CounterfactualSet, original: &Instance) -> usize {
    let origin_key = original.rounded_key(DEDUP_DECIMALS);
    let mut seen = HashSet::new();
    set.candidates
        .iter()
        .zip(&set.valid)
        .filter(|(_, valid)| **valid)
        .map(|(c, _)| c.rounded_key(DEDUP_DECIMALS))
        .filter(|key| *key != origin_key)
        .filter(|key| seen.insert(key.clone()))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Classifier;
    use crate::tabular::{FeatureSpec, FeatureValue};

    fn two_feature() -> (FeatureSchema, Classifier, DistanceScales) {
        let schema = FeatureSchema::new(vec![
            FeatureSpec::continuous("x1", 0.0, 1.0),
            FeatureSpec::continuous("x2", 0.0, 1.0),
        ])
        .unwrap();
        let clf = Classifier::linear_threshold(&schema, &[0.45, 0.1], 0.5, 50.0).unwrap();
        let scales = DistanceScales::new(vec![0.25, 0.25]).unwrap();
        (schema, clf, scales)
    }

    #[test]
    fn hinge_examples() {
        assert_eq!(hinge(3.0, 1), 0.0);
        assert_eq!(hinge(0.0, 1), 1.0);
        assert_eq!(hinge(0.0, 0), 1.0);
        assert_eq!(hinge(-2.0, 1), 3.0);
        assert_eq!(hinge(-2.0, 0), 0.0);
        let clf = Classifier::logistic(vec![1.0], 0.0).unwrap();
        assert_eq!(yloss(&clf, &[-2.0], 1).unwrap(), 3.0);
    }

    #[test]
    fn dpp_examples() {
        let schema = FeatureSchema::new(vec![FeatureSpec::continuous("x", 0.0, 1.0)]).unwrap();
        let scales = DistanceScales::new(vec![1.0]).unwrap();
        let a = EncodedVector(vec![0.2]);
        assert_eq!(dpp_diversity(std::slice::from_ref(&a), &scales, &schema), 1.0);
        assert_eq!(dpp_diversity(&[a.clone(), a.clone()], &scales, &schema), 0.0);
        let b = EncodedVector(vec![1.0]);
        let far = EncodedVector(vec![0.0]);
        assert!((dpp_diversity(&[b, far], &scales, &schema) - 0.75).abs() < 1e-12);
    }

    #[test]
    fn request_errors() {
        let (schema, clf, scales) = two_feature();
        let negative = CfRequest::new(Instance::reals(&[0.1, 0.1]), 1);
        let mut req = negative.clone();
        req.desired_class = Some(0);
        assert!(matches!(wachter_generate(&clf, &schema, &req, &scales), Err(Error::Request(_))));
        let req = CfRequest::new(Instance::reals(&[1.0, 1.0]), 0);
        assert!(matches!(dice_generate(&clf, &schema, &req, &scales), Err(Error::Request(_))));
        let req = CfRequest::new(Instance::reals(&[1.0, 1.0]), 1).with_constraint(Constraint::VaryOnly(vec![]));
        assert!(matches!(dice_generate(&clf, &schema, &req, &scales), Err(Error::Request(_))));
        let req = CfRequest::new(Instance::reals(&[1.0, 1.0]), 1).with_constraint(Constraint::Freeze(vec![7]));
        assert!(matches!(dice_generate(&clf, &schema, &req, &scales), Err(Error::Request(_))));
    }

    #[test]
    fn vary_only_x1_flips_near_the_threshold() {
        let (schema, clf, scales) = two_feature();
        let req = CfRequest::new(Instance::reals(&[1.0, 1.0]), 1).with_constraint(Constraint::VaryOnly(vec![0]));
        let set = wachter_generate(&clf, &schema, &req, &scales).unwrap();
        assert_eq!(set.valid, vec![true]);
        let x1 = set.candidates[0].get(0).as_real().unwrap();
        assert!(x1 <= 0.889, "x1 = {x1}");
        assert_eq!(set.candidates[0].get(1), FeatureValue::Real(1.0));
    }

    #[test]
    fn vary_only_x2_flips() {
        let (schema, clf, scales) = two_feature();
        let req = CfRequest::new(Instance::reals(&[1.0, 1.0]), 1).with_constraint(Constraint::VaryOnly(vec![1]));
        let set = wachter_generate(&clf, &schema, &req, &scales).unwrap();
        assert_eq!(set.valid, vec![true]);
        assert!(set.candidates[0].get(1).as_real().unwrap() <= 0.5);
        assert_eq!(set.candidates[0].get(0), FeatureValue::Real(1.0));
    }

    #[test]
    fn freezing_everything_returns_the_input() {
        let (schema, clf, scales) = two_feature();
        let x = Instance::reals(&[1.0, 1.0]);
        let req = CfRequest::new(x.clone(), 3).with_constraint(Constraint::Freeze(vec![0, 1]));
        for method in [CfMethod::Wachter, CfMethod::Dice] {
            let set = generate(method, &clf, &schema, &req, &scales).unwrap();
            assert_eq!(set.unique_valid_count, 0);
            assert!(set.valid.iter().all(|v| !v));
            assert!(set.candidates.iter().all(|c| *c == x));
        }
    }

    #[test]
    fn single_candidate_dice_agrees_with_wachter() {
        let (schema, clf, scales) = two_feature();
        let req = CfRequest::new(Instance::reals(&[1.0, 1.0]), 1).with_constraint(Constraint::VaryOnly(vec![0]));
        let w = wachter_generate(&clf, &schema, &req, &scales).unwrap();
        let d = dice_generate(&clf, &schema, &req, &scales).unwrap();
        assert_eq!(w.valid, d.valid);
        assert_eq!(w.candidates, d.candidates);
    }

    #[test]
    fn immutable_features_are_frozen() {
        let schema = FeatureSchema::new(vec![
            FeatureSpec::continuous("x1", 0.0, 1.0).immutable(),
            FeatureSpec::continuous("x2", 0.0, 1.0),
        ])
        .unwrap();
        let clf = Classifier::linear_threshold(&schema, &[0.45, 0.1], 0.5, 50.0).unwrap();
        let scales = DistanceScales::from_ranges(&schema);
        let req = CfRequest::new(Instance::reals(&[1.0, 1.0]), 2);
        let set = dice_generate(&clf, &schema, &req, &scales).unwrap();
        assert!(set.candidates.iter().all(|c| c.get(0) == FeatureValue::Real(1.0)));
    }

    fn set_of(cands: &[[f64; 2]], valid: &[bool]) -> CounterfactualSet {
        CounterfactualSet {
            desired_class: 0,
            candidates: cands.iter().map(|c| Instance::reals(c)).collect(),
            valid: valid.to_vec(),
            unique_valid_count: 0,
            diagnostics: Diagnostics::default(),
        }
    }

    #[test]
    fn unique_valid_counting() {
        let x = Instance::reals(&[1.0, 1.0]);
        assert_eq!(count_unique_valid(&set_of(&[[0.5, 1.0], [0.2, 1.0]], &[false, false]), &x), 0);
        let s = set_of(&[[0.5, 1.0], [0.500001, 1.0], [0.3, 1.0]], &[true, true, true]);
        assert_eq!(count_unique_valid(&s, &x), 2);
        let s = set_of(&[[0.99999, 1.0], [0.3, 1.0]], &[true, true]);
        assert_eq!(count_unique_valid(&s, &x), 1);
    }
}
