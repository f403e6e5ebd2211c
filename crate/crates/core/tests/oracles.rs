use wgflow::jko::JkoConfig;
use wgflow::measures::{discretize_reference, ConvexPotential, GridSpec};
use wgflow::oracles::{fp_solve, gaussian_cell_masses, lip_contraction_check, semigroup_matrix, SemigroupBackend};

#[test]
fn fokker_planck_conserves_mass_and_sign() {
    for p in [ConvexPotential::standard_gaussian(), ConvexPotential::quartic(1.0, 1.0)] {
        let g = discretize_reference(&p, &GridSpec::new(300)).unwrap();
        let mu0 = g.measure_from_weights(gaussian_cell_masses(&g.edges(), 1.0, 0.1).unwrap()).unwrap();
        let sol = fp_solve(&g, &mu0, 1.0, 1e-3).unwrap();
        for m in &sol.masses {
            assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(!sol.negative_flag, "min mass {}", sol.min_mass);
    }
}

#[test]
fn semigroup_contracts_lipschitz_constants() {
    let g = discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(120)).unwrap();
    let p = semigroup_matrix(&g, 0.3, &JkoConfig::with_tau(1e-2), SemigroupBackend::FokkerPlanck { dt: 1e-3 }).unwrap();
    for f in [|x: f64| x.sin(), |x: f64| x.abs().min(2.0), |x: f64| (3.0 * x).tanh()] {
        let v: Vec<f64> = g.grid().iter().map(|&x| f(x)).collect();
        let r = lip_contraction_check(&g, &p, &v, 1e-9).unwrap();
        assert!(r.holds, "{r:?}");
    }
}
