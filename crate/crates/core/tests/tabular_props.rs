use necsuff_core::tabular::{DistanceScales, EncodedMetric, FeatureSchema, FeatureSpec, FeatureValue, Instance};
use proptest::prelude::*;

fn schema() -> FeatureSchema {
    FeatureSchema::new(vec![
        FeatureSpec::continuous("age", 18.0, 90.0),
        FeatureSpec::categorical("color", ["red", "green", "blue", "black"]),
        FeatureSpec::continuous("score", -5.0, 5.0),
        FeatureSpec::categorical("flag", ["no", "yes"]),
    ])
    .unwrap()
}

fn scales() -> DistanceScales {
    DistanceScales::new(vec![12.0, 1.0, 0.75, 1.0]).unwrap()
}

prop_compose! {
    fn instance()(age in 18.0f64..=90.0, color in 0usize..4, score in -5.0f64..=5.0, flag in 0usize..2) -> Instance {
        Instance::new(vec![
            FeatureValue::Real(age),
            FeatureValue::Level(color),
            FeatureValue::Real(score),
            FeatureValue::Level(flag),
        ])
    }
}

fn close(a: &Instance, b: &Instance) -> bool {
    a.values().iter().zip(b.values()).all(|(x, y)| match (x, y) {
        (FeatureValue::Real(p), FeatureValue::Real(q)) => (p - q).abs() <= 1e-9 * p.abs().max(1.0),
        _ => x == y,
    })
}

proptest! {
    #[test]
    fn decode_inverts_encode(x in instance()) {
        let s = schema();
        let back = s.decode(&s.encode(&x).unwrap()).unwrap();
        prop_assert!(close(&x, &back), "{x:?} -> {back:?}");
    }

    #[test]
    fn encoded_entries_lie_in_unit_interval(x in instance()) {
        let enc = schema().encode(&x).unwrap();
        prop_assert!(enc.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn distance_is_a_pseudometric(a in instance(), b in instance(), c in instance()) {
        let s = schema();
        let sc = scales();
        let ab = s.distance(&a, &b, &sc).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - s.distance(&b, &a, &sc).unwrap()).abs() < 1e-12);
        prop_assert_eq!(s.distance(&a, &a, &sc).unwrap(), 0.0);
        let ac = s.distance(&a, &c, &sc).unwrap();
        let cb = s.distance(&c, &b, &sc).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
    }

    #[test]
    fn relaxed_metric_agrees_on_exact_encodings(a in instance(), b in instance()) {
        let s = schema();
        let sc = scales();
        let metric = EncodedMetric::new(&s, &sc);
        let relaxed = metric.distance(&s.encode(&a).unwrap(), &s.encode(&b).unwrap());
        prop_assert!((relaxed - s.distance(&a, &b, &sc).unwrap()).abs() < 1e-9);
    }
}
