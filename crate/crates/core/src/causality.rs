//! Brute-force actual-causality oracle over a finite grid of contexts.
//!
//! A feature set `X` with observed values `x` is an actual cause of the output
//! `y*` in a context when:
//!
//! 1. the context has `X = x` and the model outputs `y*`;
//! 2. some witness set `W` outside `X` and grid values `w′` for it satisfy
//!    `f(X = x, W ← w′) = y*` while some grid reassignment `X ← a′` gives
//!    `f(X ← a′, W ← w′) ≠ y*`;
//! 3. no strict nonempty subset of `X` satisfies 1 and 2.
//!
//! It is a but-for cause when condition 2 holds with `W = ∅`. Witnesses are
//! searched by increasing `|W|`, then lexicographically by feature index, then
//! by grid order of the values, so the first witness reported is deterministic
//! and a but-for cause always reports the empty witness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProbabilisticModel;
use crate::tabular::{FeatureKind, FeatureSchema, FeatureValue, Instance};

/// Upper bound on the number of grid states a setting may enumerate.
pub const STATE_LIMIT: u128 = 10_000_000;
pub const DEFAULT_GRID_POINTS: usize = 21;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CauseKind {
    ActualCause,
    ButFor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub features: Vec<usize>,
    pub values: Vec<FeatureValue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauseVerdict {
    pub is_actual_cause: bool,
    pub is_but_for: bool,
    pub witness: Option<Witness>,
    pub minimal: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealVerdict {
    pub existence: bool,
    pub necessity: bool,
    pub sufficiency: bool,
    pub minimality: bool,
    pub is_ideal: bool,
    /// Necessity is satisfied per context by any subset of the feature set; set
    /// when the subsets found differ between contexts.
    pub subsets_vary_across_contexts: bool,
}

/// A model together with a finite, uniformly weighted grid of contexts.
pub struct CausalSetting<'a> {
    schema: FeatureSchema,
    model: &'a dyn ProbabilisticModel,
    grids: Vec<Vec<FeatureValue>>,
}

impl<'a> CausalSetting<'a> {
    /// Default grids: `DEFAULT_GRID_POINTS` evenly spaced points for continuous
    /// features, every level for categorical ones.
    pub fn new(schema: &FeatureSchema, model: &'a dyn ProbabilisticModel) -> Result<Self> {
        Self::with_grid_points(schema, model, DEFAULT_GRID_POINTS)
    }

    pub fn with_grid_points(schema: &FeatureSchema, model: &'a dyn ProbabilisticModel, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Precondition("continuous grids need at least two points".into()));
        }
        let grids = schema
            .features()
            .iter()
            .map(|f| match &f.kind {
                FeatureKind::Continuous { min, max } => (0..points)
                    .map(|k| FeatureValue::Real(min + (max - min) * k as f64 / (points - 1) as f64))
                    .collect(),
                FeatureKind::Categorical { levels } => (0..levels.len()).map(FeatureValue::Level).collect(),
            })
            .collect();
        Self::with_grids(schema, model, grids)
    }

    pub fn with_grids(
        schema: &FeatureSchema,
        model: &'a dyn ProbabilisticModel,
        grids: Vec<Vec<FeatureValue>>,
    ) -> Result<Self> {
        if model.input_width() != schema.width() {
            return Err(Error::Model("model width does not match schema".into()));
        }
        if grids.len() != schema.len() {
            return Err(Error::Precondition(format!(
                "{} grids for {} features",
                grids.len(),
                schema.len()
            )));
        }
        let mut states: u128 = 1;
        for (i, grid) in grids.iter().enumerate() {
            if grid.is_empty() {
                return Err(Error::Precondition(format!("grid for `{}` is empty", schema.feature(i).name)));
            }
            for v in grid {
                check_value(schema, i, *v)?;
            }
            states = states.saturating_mul(grid.len() as u128);
        }
        if states > STATE_LIMIT {
            return Err(Error::Guard {
                states,
                limit: STATE_LIMIT,
            });
        }
        Ok(CausalSetting {
            schema: schema.clone(),
            model,
            grids,
        })
    }

    /// Replace the grid of one feature.
    pub fn set_grid(self, feature: usize, grid: Vec<FeatureValue>) -> Result<Self> {
        let mut grids = self.grids;
        if feature >= grids.len() {
            return Err(Error::Precondition(format!("feature index {feature} out of range")));
        }
        grids[feature] = grid;
        Self::with_grids(&self.schema, self.model, grids)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn grid(&self, feature: usize) -> &[FeatureValue] {
        &self.grids[feature]
    }

    pub fn n_states(&self) -> u128 {
        self.grids.iter().map(|g| g.len() as u128).product()
    }

    /// Model output class at a full assignment.
    pub fn output(&self, inst: &Instance) -> Result<u8> {
        self.model.predict_class(&self.schema.encode(inst)?)
    }

    /// Every grid context, first feature varying slowest.
    pub fn contexts(&self) -> Vec<Instance> {
        let all: Vec<usize> = (0..self.schema.len()).collect();
        assignments(&self.grids, &all)
            .map(Instance::new)
            .collect()
    }

    fn check_set(&self, features: &[usize]) -> Result<Vec<usize>> {
        let mut set = features.to_vec();
        set.sort_unstable();
        set.dedup();
        if set.is_empty() {
            return Err(Error::Precondition("feature set is empty".into()));
        }
        if let Some(bad) = set.iter().find(|i| **i >= self.schema.len()) {
            return Err(Error::Precondition(format!("feature index {bad} out of range")));
        }
        if set.len() != features.len() {
            return Err(Error::Precondition("feature set has duplicates".into()));
        }
        Ok(set)
    }

    fn check_assignment(&self, features: &[usize], values: &[FeatureValue]) -> Result<()> {
        if features.len() != values.len() {
            return Err(Error::Precondition("feature set and values differ in length".into()));
        }
        for (i, v) in features.iter().zip(values) {
            if !self.grids[*i].iter().any(|g| same_value(*g, *v)) {
                return Err(Error::Precondition(format!(
                    "value {} of `{}` is not on the grid",
                    self.schema.display_value(*i, *v),
                    self.schema.feature(*i).name
                )));
            }
        }
        Ok(())
    }

    fn complement(&self, set: &[usize]) -> Vec<usize> {
        (0..self.schema.len()).filter(|i| !set.contains(i)).collect()
    }

    fn check_target(target: u8) -> Result<()> {
        if target > 1 {
            return Err(Error::Precondition(format!("target {target} is not binary")));
        }
        Ok(())
    }

    /// Condition 2 for `set` at `context`, returning the first witness.
    fn find_witness(&self, context: &Instance, set: &[usize], target: u8) -> Result<Option<Witness>> {
        let rest = self.complement(set);
        for size in 0..=rest.len() {
            for w in combinations(&rest, size) {
                for w_values in assignments(&self.grids, &w) {
                    let mut probe = context.clone();
                    for (i, v) in w.iter().zip(&w_values) {
                        probe.set(*i, *v);
                    }
                    if self.output(&probe)? != target {
                        continue;
                    }
                    for a in assignments(&self.grids, set) {
                        let mut flipped = probe.clone();
                        for (i, v) in set.iter().zip(&a) {
                            flipped.set(*i, *v);
                        }
                        if self.output(&flipped)? != target {
                            return Ok(Some(Witness {
                                features: w.clone(),
                                values: w_values,
                            }));
                        }
                    }
                }
            }
        }
        Ok(None)
    }

    fn verdict(&self, context: &Instance, features: &[usize], target: u8) -> Result<CauseVerdict> {
        Self::check_target(target)?;
        self.schema.validate(context)?;
        let set = self.check_set(features)?;
        if self.output(context)? != target {
            return Err(Error::Precondition(format!(
                "the model does not output {target} in this context"
            )));
        }
        let witness = self.find_witness(context, &set, target)?;
        let mut minimal = true;
        for size in 1..set.len() {
            for sub in combinations(&set, size) {
                if self.find_witness(context, &sub, target)?.is_some() {
                    minimal = false;
                    break;
                }
            }
            if !minimal {
                break;
            }
        }
        let is_actual_cause = minimal && witness.is_some();
        let is_but_for = is_actual_cause && witness.as_ref().is_some_and(|w| w.features.is_empty());
        Ok(CauseVerdict {
            is_actual_cause,
            is_but_for,
            witness,
            minimal,
        })
    }

    /// Is `features` (at its values in `context`) a but-for cause of `target`?
    pub fn is_but_for(&self, context: &Instance, features: &[usize], target: u8) -> Result<CauseVerdict> {
        self.verdict(context, features, target)
    }

    pub fn is_actual_cause(&self, context: &Instance, features: &[usize], target: u8) -> Result<CauseVerdict> {
        self.verdict(context, features, target)
    }

    /// Fraction of grid contexts in which `features ← values` yields `target`.
    pub fn beta(&self, features: &[usize], values: &[FeatureValue], target: u8) -> Result<f64> {
        Self::check_target(target)?;
        let set = self.check_set(features)?;
        let values = reorder(features, values, &set)?;
        self.check_assignment(&set, &values)?;
        let rest = self.complement(&set);
        let mut base = Instance::new(self.grids.iter().map(|g| g[0]).collect());
        for (i, v) in set.iter().zip(&values) {
            base.set(*i, *v);
        }
        let mut hits = 0usize;
        let mut total = 0usize;
        for r in assignments(&self.grids, &rest) {
            let mut probe = base.clone();
            for (i, v) in rest.iter().zip(&r) {
                probe.set(*i, *v);
            }
            total += 1;
            if self.output(&probe)? == target {
                hits += 1;
            }
        }
        Ok(hits as f64 / total as f64)
    }

    pub fn is_sufficient(&self, features: &[usize], values: &[FeatureValue], target: u8) -> Result<bool> {
        Ok(self.beta(features, values, target)? == 1.0)
    }

    /// Contexts with `features = values` and output `target`.
    fn conditioning_contexts(&self, set: &[usize], values: &[FeatureValue], target: u8) -> Result<Vec<Instance>> {
        let mut out = Vec::new();
        for ctx in self.contexts() {
            if set.iter().zip(values).all(|(i, v)| same_value(ctx.get(*i), *v)) && self.output(&ctx)? == target {
                out.push(ctx);
            }
        }
        Ok(out)
    }

    /// Fraction of conditioning contexts in which the feature set is a cause of
    /// the given kind.
    pub fn alpha(&self, features: &[usize], values: &[FeatureValue], target: u8, kind: CauseKind) -> Result<f64> {
        Self::check_target(target)?;
        let set = self.check_set(features)?;
        let values = reorder(features, values, &set)?;
        self.check_assignment(&set, &values)?;
        let contexts = self.conditioning_contexts(&set, &values, target)?;
        if contexts.is_empty() {
            return Err(Error::Metric("no context has the given values and output".into()));
        }
        let mut hits = 0usize;
        for ctx in &contexts {
            let v = self.verdict(ctx, &set, target)?;
            if match kind {
                CauseKind::ActualCause => v.is_actual_cause,
                CauseKind::ButFor => v.is_but_for,
            } {
                hits += 1;
            }
        }
        Ok(hits as f64 / contexts.len() as f64)
    }

    /// Existence, necessity and sufficiency, without minimality.
    fn explanation_conditions(&self, set: &[usize], values: &[FeatureValue], target: u8) -> Result<(bool, bool, bool, bool)> {
        let contexts = self.conditioning_contexts(set, values, target)?;
        let existence = !contexts.is_empty();
        let mut necessity = true;
        let mut chosen: Option<Vec<usize>> = None;
        let mut varies = false;
        'ctx: for ctx in &contexts {
            for size in 1..=set.len() {
                for sub in combinations(set, size) {
                    if self.verdict(ctx, &sub, target)?.is_actual_cause {
                        match &chosen {
                            Some(c) if *c != sub => varies = true,
                            None => chosen = Some(sub),
                            _ => {}
                        }
                        continue 'ctx;
                    }
                }
            }
            necessity = false;
            break;
        }
        let sufficiency = self.beta(set, values, target)? == 1.0;
        Ok((existence, necessity, sufficiency, varies))
    }

    pub fn ideal_explanation(&self, features: &[usize], values: &[FeatureValue], target: u8) -> Result<IdealVerdict> {
        Self::check_target(target)?;
        let set = self.check_set(features)?;
        let values = reorder(features, values, &set)?;
        self.check_assignment(&set, &values)?;
        let (existence, necessity, sufficiency, varies) = self.explanation_conditions(&set, &values, target)?;
        let mut minimality = true;
        'outer: for size in 1..set.len() {
            for positions in combinations(&(0..set.len()).collect::<Vec<_>>(), size) {
                let sub: Vec<usize> = positions.iter().map(|p| set[*p]).collect();
                let sub_values: Vec<FeatureValue> = positions.iter().map(|p| values[*p]).collect();
                let (e, n, s, _) = self.explanation_conditions(&sub, &sub_values, target)?;
                if e && n && s {
                    minimality = false;
                    break 'outer;
                }
            }
        }
        Ok(IdealVerdict {
            existence,
            necessity,
            sufficiency,
            minimality,
            is_ideal: existence && necessity && sufficiency && minimality,
            subsets_vary_across_contexts: varies,
        })
    }

    pub fn is_ideal_explanation(&self, features: &[usize], values: &[FeatureValue], target: u8) -> Result<bool> {
        Ok(self.ideal_explanation(features, values, target)?.is_ideal)
    }
}

fn check_value(schema: &FeatureSchema, i: usize, v: FeatureValue) -> Result<()> {
    let ok = match (&schema.feature(i).kind, v) {
        (FeatureKind::Continuous { min, max }, FeatureValue::Real(x)) => x.is_finite() && x >= *min && x <= *max,
        (FeatureKind::Categorical { levels }, FeatureValue::Level(l)) => l < levels.len(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "grid value for `{}` is not valid for the schema",
            schema.feature(i).name
        )))
    }
}

fn same_value(a: FeatureValue, b: FeatureValue) -> bool {
    match (a, b) {
        (FeatureValue::Real(x), FeatureValue::Real(y)) => (x - y).abs() <= 1e-9,
        _ => a == b,
    }
}

/// Values aligned with the sorted set.
fn reorder(features: &[usize], values: &[FeatureValue], sorted: &[usize]) -> Result<Vec<FeatureValue>> {
    if features.len() != values.len() {
        return Err(Error::Precondition("feature set and values differ in length".into()));
    }
    Ok(sorted
        .iter()
        .map(|s| values[features.iter().position(|f| f == s).expect("same set")])
        .collect())
}

/// Index combinations of `items` of the given size in lexicographic order.
fn combinations(items: &[usize], size: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    if size > n {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        out.push(idx.iter().map(|i| items[*i]).collect());
        let mut k = size;
        while k > 0 && idx[k - 1] == n - size + k - 1 {
            k -= 1;
        }
        if k == 0 {
            return out;
        }
        idx[k - 1] += 1;
        for j in k..size {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// All grid assignments to `features`, last feature varying fastest.
fn assignments<'g>(grids: &'g [Vec<FeatureValue>], features: &'g [usize]) -> impl Iterator<Item = Vec<FeatureValue>> + 'g {
    let total: usize = features.iter().map(|i| grids[*i].len()).product();
    (0..total).map(move |mut n| {
        let mut values = vec![FeatureValue::Real(0.0); features.len()];
        for (slot, i) in features.iter().enumerate().rev() {
            let g = &grids[*i];
            values[slot] = g[n % g.len()];
            n /= g.len();
        }
        values
    })
}
