use necsuff_core::attribution::{cf_attribution, feature_changed, lime_attribution, CfAttributionSpec, LimeConfig};
use necsuff_core::cfgen::{wachter_generate, CfMethod, CfRequest};
use necsuff_core::model::{Classifier, ProbabilisticModel};
use necsuff_core::synth::{self, Generator, SyntheticSpec};
use necsuff_core::tabular::{compute_scales, Dataset, FeatureSchema, FeatureSpec, Instance};
use necsuff_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn independent_2d() -> synth::SyntheticData {
    synth::generate(&SyntheticSpec {
        generator: Generator::independent_2d(),
        n_rows: 1000,
        seed: 1,
    })
    .unwrap()
}

/// `p = 0.5 + Σ w_j (x_j − 0.5)` on unit-range continuous features.
struct LinearProbability {
    weights: Vec<f64>,
}

impl ProbabilisticModel for LinearProbability {
    fn input_width(&self) -> usize {
        self.weights.len()
    }

    fn predict_proba(&self, vec: &[f64]) -> Result<f64> {
        Ok(0.5 + self.weights.iter().zip(vec).map(|(w, x)| w * (x - 0.5)).sum::<f64>())
    }
}

fn argsort_abs(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|a, b| v[*b].abs().total_cmp(&v[*a].abs()));
    order
}

#[test]
fn lime_prefers_x1_on_steep_logistic() {
    let data = independent_2d();
    let lime = lime_attribution(&data.surrogate, &Instance::reals(&[1.0, 1.0]), &LimeConfig::default(), &data.dataset).unwrap();
    let (s1, s2) = (lime.scores[0].abs(), lime.scores[1].abs());
    assert!(s1 > s2 && s1 / s2 >= 3.0, "{:?}", lime.scores);
}

#[test]
fn lime_recovers_linear_probability_ranking() {
    let weights = vec![0.22, -0.14, 0.08, -0.03];
    let schema = FeatureSchema::new((0..4).map(|i| FeatureSpec::continuous(format!("x{i}"), 0.0, 1.0)).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let rows: Vec<Instance> = (0..500)
        .map(|_| Instance::reals(&(0..4).map(|_| rng.random()).collect::<Vec<f64>>()))
        .collect();
    let labels = vec![0; rows.len()];
    let data = Dataset::new(schema, rows, labels).unwrap();
    let model = LinearProbability { weights: weights.clone() };
    for x in [[0.5; 4], [0.2, 0.7, 0.4, 0.9]] {
        let lime = lime_attribution(&model, &Instance::reals(&x), &LimeConfig::default(), &data).unwrap();
        assert_eq!(argsort_abs(&lime.scores), argsort_abs(&weights), "{:?}", lime.scores);
        for (s, w) in lime.scores.iter().zip(&weights) {
            assert_eq!(s.signum(), w.signum());
        }
    }
}

#[test]
fn lime_is_deterministic_under_seed() {
    let data = independent_2d();
    let x = Instance::reals(&[0.6, 0.3]);
    let cfg = LimeConfig {
        n_samples: 500,
        seed: 9,
        ..LimeConfig::default()
    };
    let a = lime_attribution(&data.surrogate, &x, &cfg, &data.dataset).unwrap();
    let b = lime_attribution(&data.surrogate, &x, &cfg, &data.dataset).unwrap();
    assert_eq!(a, b);
}

#[test]
fn cf_frequency_attribution_changes_both_features_at_one_one() {
    let data = independent_2d();
    let schema = data.dataset.schema();
    let scales = compute_scales(&data.dataset);
    let x = Instance::reals(&[1.0, 1.0]);
    for method in [CfMethod::Dice, CfMethod::Wachter] {
        let v = cf_attribution(&data.surrogate, schema, &x, &CfAttributionSpec::new(method), &scales).unwrap();
        assert!(v.scores[0] >= 0.9 && v.scores[1] >= 0.9, "{method}: {:?}", v.scores);
        assert!((v.scores[0] - v.scores[1]).abs() <= 0.15, "{method}: {:?}", v.scores);
    }
}

#[test]
fn single_feature_model_always_moves_x1() {
    let schema = FeatureSchema::new(vec![
        FeatureSpec::continuous("x1", 0.0, 1.0),
        FeatureSpec::continuous("x2", 0.0, 1.0),
    ])
    .unwrap();
    let clf = Classifier::linear_threshold(&schema, &[1.0, 0.0], 0.5, 50.0).unwrap();
    let scales = necsuff_core::tabular::DistanceScales::from_ranges(&schema);
    for x in [[0.8, 0.3], [0.2, 0.9], [0.45, 0.5]] {
        let x = Instance::reals(&x);
        let v = cf_attribution(&clf, &schema, &x, &CfAttributionSpec::new(CfMethod::Wachter).with_seed(3), &scales).unwrap();
        assert_eq!(v.scores[0], 1.0, "{:?}", v.scores);
        let set = wachter_generate(&clf, &schema, &CfRequest::new(x.clone(), 4), &scales).unwrap();
        for (c, ok) in set.candidates.iter().zip(&set.valid) {
            if *ok {
                assert!(feature_changed(&x, c, 0));
            }
        }
    }
}

#[test]
fn cf_attribution_reports_no_valid_cfs() {
    let schema = FeatureSchema::new(vec![FeatureSpec::continuous("x1", 0.0, 1.0)]).unwrap();
    let clf = Classifier::logistic(vec![0.0], 5.0).unwrap();
    let scales = necsuff_core::tabular::DistanceScales::from_ranges(&schema);
    let err = cf_attribution(&clf, &schema, &Instance::reals(&[0.5]), &CfAttributionSpec::new(CfMethod::Dice).with_ncf_list(&[1, 2]), &scales);
    assert!(matches!(err, Err(necsuff_core::Error::NoValidCfs)));
}
