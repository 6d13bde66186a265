//! Analytic gradients against central finite differences.

use necsuff_core::cfgen::dpp_diversity_gradient;
use necsuff_core::cfgen::dpp_diversity;
use necsuff_core::model::{Architecture, Classifier, DenseLayer, DifferentiableModel, ProbabilisticModel};
use necsuff_core::tabular::{DistanceScales, EncodedVector, FeatureSchema, FeatureSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
        .max(1e-8);
    diff / scale
}

fn random_layer(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> DenseLayer {
    DenseLayer {
        inputs,
        outputs,
        weights: (0..inputs * outputs).map(|_| rng.random_range(-1.5..1.5)).collect(),
        biases: (0..outputs).map(|_| rng.random_range(-0.5..0.5)).collect(),
    }
}

fn random_classifier(rng: &mut ChaCha8Rng) -> Classifier {
    let width = rng.random_range(1..7);
    if rng.random_bool(0.3) {
        let weights = (0..width).map(|_| rng.random_range(-3.0..3.0)).collect();
        return Classifier::logistic(weights, rng.random_range(-1.0..1.0)).unwrap();
    }
    let mut layers = Vec::new();
    let mut inputs = width;
    for _ in 0..rng.random_range(1..3) {
        let outputs = rng.random_range(2..6);
        layers.push(random_layer(rng, inputs, outputs));
        inputs = outputs;
    }
    layers.push(random_layer(rng, inputs, 1));
    Classifier::new(Architecture::Mlp { layers }, width).unwrap()
}

#[test]
fn model_input_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let h = 1e-5;
    for _ in 0..100 {
        let clf = random_classifier(&mut rng);
        let x: Vec<f64> = (0..clf.input_width()).map(|_| rng.random_range(0.0..1.0)).collect();
        let analytic = clf.grad_input(&x).unwrap();
        let numeric: Vec<f64> = (0..x.len())
            .map(|i| {
                let mut up = x.clone();
                let mut down = x.clone();
                up[i] += h;
                down[i] -= h;
                (clf.logit(&up).unwrap() - clf.logit(&down).unwrap()) / (2.0 * h)
            })
            .collect();
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-4, "relative error {err} for {clf:?}");
        let p = clf.predict_proba(&x).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn logistic_gradient_is_its_weights() {
    let clf = Classifier::logistic(vec![0.3, -2.0, 5.5], 0.1).unwrap();
    assert_eq!(clf.grad_input(&[0.2, 0.9, 0.4]).unwrap(), vec![0.3, -2.0, 5.5]);
    let zero = Classifier::logistic(vec![0.0; 3], 0.0).unwrap();
    assert_eq!(zero.grad_input(&[0.2, 0.9, 0.4]).unwrap(), vec![0.0; 3]);
    assert_eq!(zero.logit(&[0.2, 0.9, 0.4]).unwrap(), 0.0);
}

fn mixed_schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FeatureSpec::continuous("a", 0.0, 10.0),
        FeatureSpec::categorical("b", ["p", "q", "r"]),
        FeatureSpec::continuous("c", -1.0, 1.0),
    ])
    .unwrap()
}

#[test]
fn diversity_gradient_matches_finite_differences() {
    let schema = mixed_schema();
    let scales = DistanceScales::new(vec![2.5, 1.0, 0.4]).unwrap();
    let lambda2 = 1.0;
    let h = 1e-6;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let cfs: Vec<EncodedVector> = (0..3)
            .map(|_| EncodedVector((0..schema.width()).map(|_| rng.random_range(0.0..1.0)).collect()))
            .collect();
        let objective = |c: &[EncodedVector]| -lambda2 * dpp_diversity(c, &scales, &schema);
        let analytic: Vec<f64> = dpp_diversity_gradient(&cfs, &scales, &schema)
            .into_iter()
            .flatten()
            .map(|g| -lambda2 * g)
            .collect();
        let mut numeric = Vec::new();
        for i in 0..cfs.len() {
            for e in 0..schema.width() {
                let mut up = cfs.clone();
                let mut down = cfs.clone();
                up[i].0[e] += h;
                down[i].0[e] -= h;
                numeric.push((objective(&up) - objective(&down)) / (2.0 * h));
            }
        }
        let err = relative_error(&analytic, &numeric);
        assert!(err < 1e-3, "relative error {err}");
    }
}

#[test]
fn diversity_stays_in_unit_interval() {
    let schema = mixed_schema();
    let scales = DistanceScales::new(vec![2.5, 1.0, 0.4]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for n in 1..6 {
        let cfs: Vec<EncodedVector> = (0..n)
            .map(|_| EncodedVector((0..schema.width()).map(|_| rng.random_range(0.0..1.0)).collect()))
            .collect();
        let det = dpp_diversity(&cfs, &scales, &schema);
        assert!((0.0..=1.0).contains(&det));
        let mut dup = cfs.clone();
        dup.push(cfs[0].clone());
        assert!(dpp_diversity(&dup, &scales, &schema) < 1e-12);
    }
}
