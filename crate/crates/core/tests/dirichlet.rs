use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wgflow::dirichlet::{
    boundary_measure_1d, dirichlet_energy, grid_lipschitz, integration_by_parts_check, GridFunction,
};
use wgflow::measures::{discretize_reference, ConvexPotential, GridSpec};

#[test]
fn energy_is_bounded_by_the_lipschitz_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let refs: Vec<_> = [
        ConvexPotential::standard_gaussian(),
        ConvexPotential::uniform_box(0.0, 1.0),
        ConvexPotential::abs(1.0),
    ]
    .iter()
    .map(|p| discretize_reference(p, &GridSpec::new(300)).unwrap())
    .collect();
    for k in 0..500 {
        let g = &refs[k % refs.len()];
        let (lo, hi) = g.bounds();
        // random piecewise-linear u through 2–8 nodes
        let m = rng.random_range(2..=8);
        let mut xs: Vec<f64> = (0..m).map(|_| rng.random_range(lo..hi)).collect();
        xs.sort_by(f64::total_cmp);
        let ys: Vec<f64> = (0..m).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = |x: f64| {
            if x <= xs[0] {
                return ys[0];
            }
            for i in 1..m {
                if x <= xs[i] {
                    let s = (x - xs[i - 1]) / (xs[i] - xs[i - 1]).max(1e-300);
                    return ys[i - 1] + s * (ys[i] - ys[i - 1]);
                }
            }
            ys[m - 1]
        };
        let u = GridFunction::from_fn(g, f, true).unwrap();
        let e = dirichlet_energy(&u, g);
        let lip = grid_lipschitz(&u, g);
        assert!(e.sqrt() <= lip * (1.0 + 1e-12) + 1e-15, "sqrt E {} > Lip {lip}", e.sqrt());
    }
}

#[test]
fn constants_integrate_to_zero_against_the_boundary_measure() {
    for p in [ConvexPotential::standard_gaussian(), ConvexPotential::boxed(-1.0, 2.0, ConvexPotential::quadratic(2.0, 0.5))] {
        let g = discretize_reference(&p, &GridSpec::new(4000)).unwrap();
        let u = GridFunction::from_fn(&g, |_| 3.0, true).unwrap();
        let r = integration_by_parts_check(&g, &u).unwrap();
        assert!(r.lhs.abs() < 1e-14 && r.rhs.abs() < 1e-9 * r.scale, "{r:?}");
        let s = boundary_measure_1d(&p, 400).unwrap();
        assert!(s.total_mass().abs() < 1e-9);
    }
}

#[test]
fn box_atoms_give_the_fundamental_theorem() {
    let g = discretize_reference(&ConvexPotential::uniform_box(0.0, 1.0), &GridSpec::new(4000)).unwrap();
    let u = GridFunction::from_fn(&g, |x| x * x, true).unwrap();
    let r = integration_by_parts_check(&g, &u).unwrap();
    assert!((r.rhs - 1.0).abs() < 1e-6, "{r:?}");
    assert!(r.gap <= 1e-6 * r.scale);
}
