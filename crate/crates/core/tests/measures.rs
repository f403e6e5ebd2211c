use proptest::prelude::*;
use wgflow::measures::{
    discretize_reference, entropy_duality_bound, entropy_set_bound_check, relative_entropy, ConvexPotential, GridSpec,
    ReferenceMeasure,
};

fn catalog() -> Vec<ConvexPotential> {
    vec![
        ConvexPotential::standard_gaussian(),
        ConvexPotential::quartic(1.0, 1.0),
        ConvexPotential::abs(1.0),
        ConvexPotential::uniform_box(0.0, 1.0),
        ConvexPotential::boxed(-1.0, 2.0, ConvexPotential::quadratic(2.0, 0.5)),
        ConvexPotential::affine_max(vec![(-2.0, 1.0), (0.5, 0.3), (3.0, -4.0)]),
    ]
}

fn small_gaussian() -> ReferenceMeasure {
    discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(40)).unwrap()
}

fn weights(raw: &[f64]) -> Vec<f64> {
    let t: f64 = raw.iter().sum();
    raw.iter().map(|w| w / t).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn duality_bound_never_exceeds_entropy(
        raw in prop::collection::vec(0.0f64..1.0, 40),
        s in prop::collection::vec(-3.0f64..3.0, 40),
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let g = small_gaussian();
        let mu = g.measure_from_weights(weights(&raw)).unwrap();
        let h = relative_entropy(&mu, &g).value();
        prop_assert!(entropy_duality_bound(&mu, &g, &s) <= h + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn entropy_is_nonnegative_and_vanishes_only_at_gamma(raw in prop::collection::vec(0.0f64..1.0, 40)) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let g = small_gaussian();
        let w = weights(&raw);
        let h = relative_entropy(&g.measure_from_weights(w.clone()).unwrap(), &g).value();
        prop_assert!(h >= 0.0);
        let far = w.iter().zip(g.weights()).any(|(a, b)| (a - b).abs() > 1e-6);
        if far {
            prop_assert!(h > 0.0);
        }
    }

    #[test]
    fn set_bound_holds(
        raw in prop::collection::vec(0.0f64..1.0, 40),
        set in prop::collection::btree_set(0usize..40, 1..20),
    ) {
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let g = small_gaussian();
        let nu = g.measure_from_weights(weights(&raw)).unwrap();
        let set: Vec<usize> = set.into_iter().collect();
        prop_assert!(entropy_set_bound_check(&nu, &g, &set).holds);
    }
}

#[test]
fn gamma_has_zero_entropy_against_itself() {
    for p in catalog() {
        let g = discretize_reference(&p, &GridSpec::new(200)).unwrap();
        assert!(relative_entropy(&g.as_measure(), &g).value().abs() < 1e-12);
    }
}

#[test]
fn normalization_and_refinement() {
    for p in catalog() {
        let coarse = discretize_reference(&p, &GridSpec::new(400)).unwrap();
        let (lo, hi) = coarse.bounds();
        let fixed = |n| discretize_reference(&p, &GridSpec::with_bounds(n, lo, hi)).unwrap();
        let (a, b) = (fixed(400), fixed(800));
        assert!((a.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((b.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(
            (a.log_partition() - b.log_partition()).abs() < 1e-6,
            "{}: {} vs {}",
            p.kind_name(),
            a.log_partition(),
            b.log_partition()
        );
    }
}

#[test]
fn discretized_references_are_log_concave() {
    for p in catalog() {
        for n in [50, 400, 1000] {
            assert!(discretize_reference(&p, &GridSpec::new(n)).unwrap().is_log_concave(), "{} n={n}", p.kind_name());
        }
    }
}
