//! Euler–Maruyama for `dX = −∇V(X) dt + √2 dW`, reflected by folding on boxes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, Potential};

#[derive(Clone, Debug, Serialize)]
pub struct SdeSample {
    pub terminal_points: Vec<f64>,
    pub dt: f64,
    pub n_paths: usize,
    pub seed: u64,
}

impl SdeSample {
    pub fn empirical(&self) -> Result<DiscreteMeasure> {
        DiscreteMeasure::empirical_1d(&self.terminal_points)
    }

    pub fn mean(&self) -> f64 {
        self.terminal_points.iter().sum::<f64>() / self.n_paths as f64
    }
}

/// Mirror `x` into `[lo, hi]`.
pub fn fold_into(x: f64, lo: f64, hi: f64) -> f64 {
    let len = hi - lo;
    let mut y = (x - lo).rem_euclid(2.0 * len);
    if y > len {
        y = 2.0 * len - y;
    }
    lo + y
}

/// Terminal points of `n_paths` independent paths from `x` to time `t_end`.
/// Path `i` draws from ChaCha8 stream `i` of `seed`, so the result does not
/// depend on how paths are scheduled across threads.
pub fn sde_simulate(potential: &Potential, x: f64, t_end: f64, dt: f64, n_paths: usize, seed: u64) -> Result<SdeSample> {
    if !(dt > 0.0 && t_end >= 0.0 && n_paths > 0 && x.is_finite()) {
        return Err(Error::InvalidArgument("need dt > 0, t_end >= 0, n_paths > 0 and a finite start".into()));
    }
    let (lo, hi) = potential.domain();
    let bounded = potential.is_bounded();
    if bounded && !(lo..=hi).contains(&x) {
        return Err(Error::InvalidArgument(format!("start {x} outside [{lo}, {hi}]")));
    }
    let span = if bounded {
        hi - lo
    } else {
        let (a, b) = crate::measures::sublevel_bounds(potential, potential.min_value() + crate::measures::TRUNCATION_GAP);
        b - a
    };
    let limit = 10.0 * span;
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let h = if steps > 0 { t_end / steps as f64 } else { dt };
    let noise = (2.0 * h).sqrt();

    let points: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut y = x;
            for _ in 0..steps {
                let drift = potential.subgradient(y);
                if !((drift * h).abs() <= limit) {
                    return Err(Error::Unstable(format!(
                        "drift explosion: |V'({y})|·dt = {:e} exceeds 10 × span {span}",
                        (drift * h).abs()
                    )));
                }
                let z: f64 = StandardNormal.sample(&mut rng);
                y += -drift * h + noise * z;
                if bounded {
                    y = fold_into(y, lo, hi);
                }
            }
            Ok(y)
        })
        .collect::<Result<_>>()?;
    Ok(SdeSample {
        terminal_points: points,
        dt: h,
        n_paths,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::ConvexPotential;

    #[test]
    fn folding_is_a_reflection() {
        assert_eq!(fold_into(1.2, 0.0, 1.0), 0.8);
        assert!((fold_into(-0.3, 0.0, 1.0) - 0.3).abs() < 1e-15);
        assert!((fold_into(2.25, 0.0, 1.0) - 0.25).abs() < 1e-15);
        assert_eq!(fold_into(0.4, 0.0, 1.0), 0.4);
    }

    #[test]
    fn seeds_reproduce() {
        let p = ConvexPotential::standard_gaussian().compile().unwrap();
        let a = sde_simulate(&p, 1.0, 0.1, 1e-2, 64, 7).unwrap();
        let b = sde_simulate(&p, 1.0, 0.1, 1e-2, 64, 7).unwrap();
        let c = sde_simulate(&p, 1.0, 0.1, 1e-2, 64, 8).unwrap();
        assert_eq!(a.terminal_points, b.terminal_points);
        assert_ne!(a.terminal_points, c.terminal_points);
    }

    #[test]
    fn huge_steps_are_rejected() {
        let p = ConvexPotential::quartic(1.0, 0.0).compile().unwrap();
        assert!(matches!(sde_simulate(&p, 50.0, 10.0, 1.0, 4, 0), Err(Error::Unstable(_))));
    }

    #[test]
    fn reflected_paths_stay_inside() {
        let p = ConvexPotential::uniform_box(0.0, 1.0).compile().unwrap();
        let s = sde_simulate(&p, 0.3, 0.5, 1e-3, 200, 1).unwrap();
        assert!(s.terminal_points.iter().all(|y| (0.0..=1.0).contains(y)));
    }
}
