use necsuff_core::model::{load_model, save_model, ArchSpec, Architecture, Classifier, TrainConfig};
use necsuff_core::synth::{generate, Generator, SyntheticSpec};
use necsuff_core::tabular::{Dataset, FeatureSchema, FeatureSpec, Instance};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn separable() -> Dataset {
    let data = generate(&SyntheticSpec {
        generator: Generator::LinearThreshold {
            weights: vec![1.0, 1.0],
            threshold: 1.0,
            sharpness: 50.0,
        },
        n_rows: 300,
        seed: 4,
    })
    .unwrap();
    data.dataset
}

#[test]
fn logistic_fits_separable_data() {
    let data = separable();
    let clf = Classifier::train(&data, &ArchSpec::Logistic, &TrainConfig::default()).unwrap();
    assert!(clf.accuracy(&data).unwrap() >= 0.95);
}

#[test]
fn mlp_fits_separable_data() {
    let data = separable();
    let arch = ArchSpec::Mlp { hidden: vec![6] };
    let clf = Classifier::train(&data, &arch, &TrainConfig::default()).unwrap();
    assert!(clf.accuracy(&data).unwrap() >= 0.95);
}

#[test]
fn training_is_bit_identical_under_a_seed() {
    let data = separable();
    let arch = ArchSpec::Mlp { hidden: vec![4, 3] };
    let cfg = TrainConfig {
        epochs: 200,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = Classifier::train(&data, &arch, &cfg).unwrap();
    let b = Classifier::train(&data, &arch, &cfg).unwrap();
    assert_eq!(a, b);
    let other = Classifier::train(&data, &arch, &TrainConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a, other);
}

#[test]
fn logistic_recovers_sign_pattern() {
    let truth = [2.0, -1.5, 0.8, -0.6];
    let schema = FeatureSchema::new((0..4).map(|i| FeatureSpec::continuous(format!("f{i}"), 0.0, 1.0)).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rows: Vec<Instance> = (0..600)
        .map(|_| Instance::reals(&(0..4).map(|_| rng.random_range(0.0..1.0)).collect::<Vec<_>>()))
        .collect();
    let labels = rows
        .iter()
        .map(|r| {
            let z: f64 = (0..4).map(|i| truth[i] * (r.get(i).as_real().unwrap() - 0.5)).sum();
            u8::from(z >= 0.0)
        })
        .collect();
    let data = Dataset::new(schema, rows, labels).unwrap();
    let clf = Classifier::train(&data, &ArchSpec::Logistic, &TrainConfig::default()).unwrap();
    let Architecture::Logistic { weights, .. } = clf.architecture() else {
        panic!("expected a logistic model");
    };
    for (w, t) in weights.iter().zip(truth) {
        assert_eq!(w.signum(), t.signum(), "{weights:?}");
    }
}

#[test]
fn saved_models_are_byte_identical() {
    let data = separable();
    let dir = tempfile::tempdir().unwrap();
    let clf = Classifier::train(&data, &ArchSpec::Logistic, &TrainConfig::default()).unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    save_model(&a, &clf, data.schema()).unwrap();
    let again = Classifier::train(&data, &ArchSpec::Logistic, &TrainConfig::default()).unwrap();
    save_model(&b, &again, data.schema()).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_model(&a, data.schema()).unwrap(), clf);
}
