//! Necessity and sufficiency of feature sets, top-k protocols and
//! comparisons between attribution methods.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::attribution::{global_attribution, AttributionMethod, AttributionVector};
use crate::cfgen::{self, CfMethod, CfRequest, CfTuning, Constraint};
use crate::error::{Error, Result};
use crate::model::DifferentiableModel;
use crate::stats;
use crate::tabular::{DistanceScales, FeatureSchema, Instance};

/// Number of leading features excluded by [`Protocol::Rest`].
pub const REST_EXCLUDES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "protocol", rename_all = "snake_case")]
pub enum Protocol {
    OnlyKth { k: usize },
    UntilTopK { k: usize },
    FixKth { k: usize },
    FixUntilTopK { k: usize },
    Rest,
    AllFeatures,
}

impl Protocol {
    /// Vary-protocols measure necessity, fix-protocols sufficiency.
    pub fn is_vary(self) -> bool {
        !matches!(self, Protocol::FixKth { .. } | Protocol::FixUntilTopK { .. })
    }

    pub fn k(self) -> Option<usize> {
        match self {
            Protocol::OnlyKth { k } | Protocol::UntilTopK { k } | Protocol::FixKth { k } | Protocol::FixUntilTopK { k } => Some(k),
            Protocol::Rest | Protocol::AllFeatures => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::OnlyKth { .. } => "only_kth",
            Protocol::UntilTopK { .. } => "until_top_k",
            Protocol::FixKth { .. } => "fix_kth",
            Protocol::FixUntilTopK { .. } => "fix_until_top_k",
            Protocol::Rest => "rest",
            Protocol::AllFeatures => "all_features",
        }
    }

    /// Per-instance feature sets (free for vary-protocols, fixed otherwise).
    pub fn feature_sets(self, ranker_scores: &[AttributionVector], n_features: usize) -> Result<Vec<Vec<usize>>> {
        match self {
            Protocol::OnlyKth { k } | Protocol::FixKth { k } => topk_feature_sets(ranker_scores, k, TopKMode::OnlyKth),
            Protocol::UntilTopK { k } | Protocol::FixUntilTopK { k } => topk_feature_sets(ranker_scores, k, TopKMode::UntilTopK),
            Protocol::Rest => topk_feature_sets(ranker_scores, REST_EXCLUDES.min(n_features), TopKMode::Rest),
            Protocol::AllFeatures => Ok(vec![(0..n_features).collect(); ranker_scores.len()]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKMode {
    OnlyKth,
    UntilTopK,
    /// Complement of the top `k`.
    Rest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NecSuffReport {
    pub method: CfMethod,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranker: Option<AttributionMethod>,
    pub protocol: Protocol,
    pub ncf: usize,
    pub necessity: Option<f64>,
    pub sufficiency: Option<f64>,
    pub n_instances: usize,
    /// Unique valid CFs per instance under the protocol's constraint.
    pub per_instance_valid_counts: Vec<usize>,
    /// Unique valid CFs per instance with every feature free (sufficiency only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_instance_reference_counts: Vec<usize>,
}

/// Generation settings shared by every instance of a necessity or sufficiency run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunSpec {
    pub method: CfMethod,
    pub ncf: usize,
    /// Instance `i` uses `seed + i`.
    pub seed: u64,
    pub protocol: Protocol,
    pub tuning: CfTuning,
}

impl RunSpec {
    pub fn new(method: CfMethod, ncf: usize, seed: u64, protocol: Protocol) -> Self {
        RunSpec {
            method,
            ncf,
            seed,
            protocol,
            tuning: CfTuning::default(),
        }
    }
}

fn unique_valid<M: DifferentiableModel + ?Sized>(
    clf: &M,
    schema: &FeatureSchema,
    inst: &Instance,
    constraint: Constraint,
    spec: &RunSpec,
    index: usize,
    scales: &DistanceScales,
) -> usize {
    let req = CfRequest::new(inst.clone(), spec.ncf)
        .with_constraint(constraint)
        .with_seed(spec.seed.wrapping_add(index as u64))
        .with_tuning(&spec.tuning);
    cfgen::generate(spec.method, clf, schema, &req, scales).map_or(0, |set| set.unique_valid_count)
}

fn check_inputs(instances: &[Instance], sets: &[Vec<usize>], spec: &RunSpec) -> Result<()> {
    if instances.is_empty() {
        return Err(Error::Precondition("no instances".into()));
    }
    if sets.len() != instances.len() {
        return Err(Error::Precondition(format!(
            "{} feature sets for {} instances",
            sets.len(),
            instances.len()
        )));
    }
    if spec.ncf == 0 {
        return Err(Error::Precondition("ncf must be at least 1".into()));
    }
    Ok(())
}

/// Unique valid CFs when only `free_sets[i]` may change, over `ncf·N`.
pub fn necessity<M: DifferentiableModel + ?Sized>(
    clf: &M,
    schema: &FeatureSchema,
    instances: &[Instance],
    free_sets: &[Vec<usize>],
    spec: &RunSpec,
    scales: &DistanceScales,
) -> Result<NecSuffReport> {
    check_inputs(instances, free_sets, spec)?;
    if free_sets.iter().any(|s| s.is_empty()) {
        return Err(Error::Precondition("free feature set is empty".into()));
    }
    let counts: Vec<usize> = instances
        .iter()
        .zip(free_sets)
        .enumerate()
        .map(|(i, (inst, free))| unique_valid(clf, schema, inst, Constraint::VaryOnly(free.clone()), spec, i, scales))
        .collect();
    let total: usize = counts.iter().sum();
    Ok(NecSuffReport {
        method: spec.method,
        ranker: None,
        protocol: spec.protocol,
        ncf: spec.ncf,
        necessity: Some(total as f64 / (spec.ncf * instances.len()) as f64),
        sufficiency: None,
        n_instances: instances.len(),
        per_instance_valid_counts: counts,
        per_instance_reference_counts: Vec::new(),
    })
}

/// Unique-valid fraction with every feature free minus the fraction with
/// `fixed_sets[i]` frozen. Both runs of an instance share its seed.
pub fn sufficiency<M: DifferentiableModel + ?Sized>(
    clf: &M,
    schema: &FeatureSchema,
    instances: &[Instance],
    fixed_sets: &[Vec<usize>],
    spec: &RunSpec,
    scales: &DistanceScales,
) -> Result<NecSuffReport> {
    check_inputs(instances, fixed_sets, spec)?;
    let mut reference = Vec::with_capacity(instances.len());
    let mut frozen = Vec::with_capacity(instances.len());
    for (i, (inst, fixed)) in instances.iter().zip(fixed_sets).enumerate() {
        reference.push(unique_valid(clf, schema, inst, Constraint::Unconstrained, spec, i, scales));
        frozen.push(unique_valid(clf, schema, inst, Constraint::Freeze(fixed.clone()), spec, i, scales));
    }
    let denom = (spec.ncf * instances.len()) as f64;
    let all_free = reference.iter().sum::<usize>() as f64 / denom;
    let with_fixed = frozen.iter().sum::<usize>() as f64 / denom;
    Ok(NecSuffReport {
        method: spec.method,
        ranker: None,
        protocol: spec.protocol,
        ncf: spec.ncf,
        necessity: None,
        sufficiency: Some(all_free - with_fixed),
        n_instances: instances.len(),
        per_instance_valid_counts: frozen,
        per_instance_reference_counts: reference,
    })
}

/// Features ordered by decreasing `|score|`, ties broken by schema order.
pub fn feature_ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*b].abs().total_cmp(&scores[*a].abs()).then(a.cmp(b)));
    order
}

pub fn topk_feature_sets(ranker_scores: &[AttributionVector], k: usize, mode: TopKMode) -> Result<Vec<Vec<usize>>> {
    ranker_scores
        .iter()
        .map(|v| {
            let d = v.scores.len();
            if k > d || (k == 0 && mode != TopKMode::Rest) {
                return Err(Error::Precondition(format!("k = {k} is outside 1..={d}")));
            }
            let order = feature_ranking(&v.scores);
            let mut set = match mode {
                TopKMode::OnlyKth => vec![order[k - 1]],
                TopKMode::UntilTopK => order[..k].to_vec(),
                TopKMode::Rest => order[k..].to_vec(),
            };
            set.sort_unstable();
            Ok(set)
        })
        .collect()
}

pub fn pearson_correlation(a: &AttributionVector, b: &AttributionVector) -> Result<f64> {
    pearson(&a.scores, &b.scores)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Metric("vectors differ in width".into()));
    }
    if a.len() < 2 {
        return Err(Error::Metric("correlation needs at least two features".into()));
    }
    let ma = stats::mean(a);
    let mb = stats::mean(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Metric("zero variance in a correlated vector".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTest {
    pub feature: usize,
    pub mean_rank_difference: f64,
    /// Absent when the differences have zero variance.
    pub t_statistic: Option<f64>,
    pub p_value: f64,
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub methods: Vec<AttributionMethod>,
    /// Correlation of the global (mean absolute) scores; absent when undefined.
    pub pearson_r: Option<f64>,
    pub per_feature_rank_tests: Vec<RankTest>,
}

/// Rank 1 is the largest `|score|`; tied features all take the largest rank of their group.
pub fn importance_ranks(scores: &[f64]) -> Vec<usize> {
    scores
        .iter()
        .map(|s| scores.iter().filter(|o| o.abs() >= s.abs()).count())
        .collect()
}

/// Student-t test on paired per-instance rank differences (`a − b`), per feature.
pub fn paired_rank_ttest(per_instance_a: &[AttributionVector], per_instance_b: &[AttributionVector]) -> Result<Vec<RankTest>> {
    let n = per_instance_a.len();
    if n != per_instance_b.len() {
        return Err(Error::Metric("attribution lists differ in length".into()));
    }
    if n < 2 {
        return Err(Error::Metric("rank tests need at least two instances".into()));
    }
    let d = per_instance_a[0].scores.len();
    if per_instance_a.iter().chain(per_instance_b).any(|v| v.scores.len() != d) {
        return Err(Error::Metric("attributions differ in width".into()));
    }
    let diffs: Vec<Vec<f64>> = per_instance_a
        .iter()
        .zip(per_instance_b)
        .map(|(a, b)| {
            importance_ranks(&a.scores)
                .into_iter()
                .zip(importance_ranks(&b.scores))
                .map(|(ra, rb)| ra as f64 - rb as f64)
                .collect()
        })
        .collect();
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::Metric(e.to_string()))?;
    Ok((0..d)
        .map(|j| {
            let column: Vec<f64> = diffs.iter().map(|row| row[j]).collect();
            let mean = stats::mean(&column);
            let sd = stats::sample_std_dev(&column);
            if sd == 0.0 {
                return RankTest {
                    feature: j,
                    mean_rank_difference: mean,
                    t_statistic: None,
                    p_value: 1.0,
                    degenerate: true,
                };
            }
            let t = mean / (sd / (n as f64).sqrt());
            let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
            RankTest {
                feature: j,
                mean_rank_difference: mean,
                t_statistic: Some(t),
                p_value: p,
                degenerate: false,
            }
        })
        .collect())
}

/// Correlation of global scores plus per-feature rank tests.
pub fn compare_methods(per_instance_a: &[AttributionVector], per_instance_b: &[AttributionVector]) -> Result<ComparisonReport> {
    let ga = global_attribution(per_instance_a)?;
    let gb = global_attribution(per_instance_b)?;
    let pearson_r = match pearson_correlation(&ga, &gb) {
        Ok(r) => Some(r),
        Err(Error::Metric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(ComparisonReport {
        methods: vec![ga.method, gb.method],
        pearson_r,
        per_feature_rank_tests: paired_rank_ttest(per_instance_a, per_instance_b)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(scores: &[f64]) -> AttributionVector {
        AttributionVector::new(AttributionMethod::Lime, scores.to_vec(), None).unwrap()
    }

    #[test]
    fn topk_examples() {
        let s = [v(&[0.9, 0.5, 0.1])];
        assert_eq!(topk_feature_sets(&s, 2, TopKMode::OnlyKth).unwrap(), vec![vec![1]]);
        assert_eq!(topk_feature_sets(&s, 2, TopKMode::UntilTopK).unwrap(), vec![vec![0, 1]]);
        assert_eq!(topk_feature_sets(&[v(&[0.5, 0.5])], 1, TopKMode::OnlyKth).unwrap(), vec![vec![0]]);
        assert_eq!(topk_feature_sets(&[v(&[0.1, -0.9, 0.3, 0.2])], 3, TopKMode::Rest).unwrap(), vec![vec![0]]);
        assert!(topk_feature_sets(&s, 4, TopKMode::OnlyKth).is_err());
    }

    #[test]
    fn protocol_sets() {
        let s = [v(&[0.1, -0.9, 0.3, 0.2])];
        assert_eq!(Protocol::FixKth { k: 1 }.feature_sets(&s, 4).unwrap(), vec![vec![1]]);
        assert_eq!(Protocol::AllFeatures.feature_sets(&s, 4).unwrap(), vec![vec![0, 1, 2, 3]]);
        assert_eq!(Protocol::Rest.feature_sets(&s, 4).unwrap(), vec![vec![0]]);
        assert!(Protocol::Rest.is_vary() && !Protocol::FixUntilTopK { k: 2 }.is_vary());
    }

    #[test]
    fn pearson_examples() {
        let a = v(&[1.0, 2.0, 3.0]);
        assert!((pearson_correlation(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson_correlation(&a, &v(&[-1.0, -2.0, -3.0])).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson_correlation(&a, &v(&[6.0, 4.0, 2.0])).unwrap() + 1.0).abs() < 1e-12);
        assert!(matches!(pearson_correlation(&a, &v(&[1.0, 1.0, 1.0])), Err(Error::Metric(_))));
    }

    #[test]
    fn ranks_use_maximum_for_ties() {
        assert_eq!(importance_ranks(&[0.9, -0.5, 0.1]), vec![1, 2, 3]);
        assert_eq!(importance_ranks(&[0.5, 0.5, 0.1]), vec![2, 2, 3]);
        assert_eq!(importance_ranks(&[0.0, 0.0]), vec![2, 2]);
    }

    #[test]
    fn identical_lists_are_degenerate() {
        let a = vec![v(&[0.3, 0.1, 0.2]), v(&[0.1, 0.3, 0.2])];
        let tests = paired_rank_ttest(&a, &a).unwrap();
        for t in tests {
            assert_eq!(t.mean_rank_difference, 0.0);
            assert_eq!(t.p_value, 1.0);
            assert!(t.degenerate && t.t_statistic.is_none());
        }
    }

    #[test]
    fn swapped_features_mirror() {
        let a = vec![v(&[0.3, 0.1, 0.2]), v(&[0.5, 0.05, 0.2]), v(&[0.4, 0.3, 0.01])];
        let b: Vec<_> = a.iter().map(|x| v(&[x.scores[1], x.scores[0], x.scores[2]])).collect();
        let tests = paired_rank_ttest(&a, &b).unwrap();
        assert_eq!(tests[0].mean_rank_difference, -tests[1].mean_rank_difference);
        assert_ne!(tests[0].mean_rank_difference, 0.0);
        assert_eq!(tests[2].mean_rank_difference, 0.0);
    }

    #[test]
    fn errors() {
        assert!(paired_rank_ttest(&[v(&[1.0])], &[v(&[1.0])]).is_err());
        assert!(paired_rank_ttest(&[v(&[1.0]), v(&[1.0])], &[v(&[1.0])]).is_err());
    }
}
