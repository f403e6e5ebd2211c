//! Conservative finite-volume Fokker–Planck solver
//! `∂ₜu = ∂ₓ(∂ₓu + V′u) = ∂ₓ(e^{−V} ∂ₓ(u e^{V}))`.
//!
//! Cell masses `pᵢ` evolve by `ṗᵢ = Σⱼ aᵢⱼ (pⱼ/πⱼ − pᵢ/πᵢ)` over neighbours,
//! with `π` the reference cell masses and `aᵢⱼ = hm(πᵢ, πⱼ)/h²` (harmonic
//! mean). Mass is conserved, `π` is exactly stationary and the generator is
//! reversible with respect to `π`; the ends are no-flux.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, ReferenceMeasure};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FpConfig {
    pub dt: f64,
    /// `θ = ½` is Crank–Nicolson, `θ = 1` implicit Euler, `θ = 0` explicit.
    pub theta: f64,
    /// Implicit Euler half-steps replacing the first Crank–Nicolson steps,
    /// which damp the oscillations a rough start would otherwise excite.
    pub startup_half_steps: usize,
}

impl FpConfig {
    pub fn crank_nicolson(dt: f64) -> Self {
        Self {
            dt,
            theta: 0.5,
            startup_half_steps: 4,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FpSolution {
    pub times: Vec<f64>,
    /// Cell masses per recorded time.
    pub masses: Vec<Vec<f64>>,
    pub dt: f64,
    pub theta: f64,
    /// Most negative mass seen.
    pub min_mass: f64,
    /// Whether some mass fell below `−1e−10`.
    pub negative_flag: bool,
    grid: Vec<f64>,
}

impl FpSolution {
    /// Index of the recorded time closest to `t`.
    pub fn index_near(&self, t: f64) -> usize {
        (0..self.times.len())
            .min_by(|&a, &b| (self.times[a] - t).abs().total_cmp(&(self.times[b] - t).abs()))
            .unwrap_or(0)
    }

    /// The slice at the recorded time closest to `t`, as a grid measure
    /// (tiny negative masses clipped).
    pub fn measure_near(&self, t: f64) -> Result<DiscreteMeasure> {
        let w: Vec<f64> = self.masses[self.index_near(t)].iter().map(|v| v.max(0.0)).collect();
        DiscreteMeasure::from_unnormalized(1, self.grid.clone(), w)
    }
}

/// Generator as a tridiagonal matrix acting on masses: `(sub, diag, sup)`,
/// row `i` reading `sub[i−1]·p_{i−1} + diag[i]·pᵢ + sup[i]·p_{i+1}`.
pub(crate) struct Generator {
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl Generator {
    pub fn new(gamma: &ReferenceMeasure) -> Self {
        let pi = gamma.weights();
        let h = gamma.cell_width();
        let n = pi.len();
        let face: Vec<f64> = (0..n - 1)
            .map(|i| {
                let (a, b) = (pi[i], pi[i + 1]);
                if a > 0.0 && b > 0.0 {
                    2.0 * a * b / (a + b) / (h * h)
                } else {
                    0.0
                }
            })
            .collect();
        let inv = |i: usize| if pi[i] > 0.0 { 1.0 / pi[i] } else { 0.0 };
        let mut diag = vec![0.0; n];
        let mut sub = vec![0.0; n - 1];
        let mut sup = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let a = face[i];
            // flux a (p_{i+1}/π_{i+1} − p_i/π_i) into cell i, out of cell i+1
            diag[i] -= a * inv(i);
            sup[i] += a * inv(i + 1);
            diag[i + 1] -= a * inv(i + 1);
            sub[i] += a * inv(i);
        }
        Self { sub, diag, sup }
    }

    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        let n = p.len();
        (0..n)
            .map(|i| {
                let mut v = self.diag[i] * p[i];
                if i > 0 {
                    v += self.sub[i - 1] * p[i - 1];
                }
                if i + 1 < n {
                    v += self.sup[i] * p[i + 1];
                }
                v
            })
            .collect()
    }

    /// Solves `(I − c·L) x = r`.
    pub fn solve_shifted(&self, c: f64, r: &[f64]) -> Vec<f64> {
        let n = r.len();
        let a: Vec<f64> = self.sub.iter().map(|v| -c * v).collect();
        let b: Vec<f64> = self.diag.iter().map(|v| 1.0 - c * v).collect();
        let u: Vec<f64> = self.sup.iter().map(|v| -c * v).collect();
        let mut cp = vec![0.0; n];
        let mut dp = vec![0.0; n];
        let mut beta = b[0];
        dp[0] = r[0] / beta;
        for i in 1..n {
            cp[i - 1] = u[i - 1] / beta;
            beta = b[i] - a[i - 1] * cp[i - 1];
            dp[i] = (r[i] - a[i - 1] * dp[i - 1]) / beta;
        }
        for i in (0..n - 1).rev() {
            dp[i] -= cp[i] * dp[i + 1];
        }
        dp
    }

    /// `max |Lᵢᵢ|`, the explicit stability scale.
    fn spectral_scale(&self) -> f64 {
        self.diag.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub(crate) fn step(&self, p: &[f64], dt: f64, theta: f64) -> Vec<f64> {
        let lp = self.apply(p);
        let rhs: Vec<f64> = p.iter().zip(&lp).map(|(a, b)| a + (1.0 - theta) * dt * b).collect();
        if theta == 0.0 {
            rhs
        } else {
            self.solve_shifted(theta * dt, &rhs)
        }
    }
}

/// Crank–Nicolson solve to `t_end`, recording every step.
pub fn fp_solve(gamma: &ReferenceMeasure, mu0: &DiscreteMeasure, t_end: f64, dt: f64) -> Result<FpSolution> {
    fp_solve_with(gamma, mu0, t_end, &FpConfig::crank_nicolson(dt))
}

pub fn fp_solve_with(gamma: &ReferenceMeasure, mu0: &DiscreteMeasure, t_end: f64, cfg: &FpConfig) -> Result<FpSolution> {
    if !gamma.potential().is_smooth() {
        return Err(Error::InvalidPotential(format!(
            "{} potential is not differentiable; the Fokker–Planck solver needs a smooth drift",
            gamma.potential().descriptor().kind_name()
        )));
    }
    if !(cfg.dt > 0.0 && t_end >= 0.0 && (0.0..=1.0).contains(&cfg.theta)) {
        return Err(Error::InvalidArgument("need dt > 0, t_end >= 0 and theta in [0, 1]".into()));
    }
    let p0 = crate::jko::grid_weights_of(gamma, mu0)?;
    let gen = Generator::new(gamma);
    if cfg.theta < 0.5 {
        let limit = 1.0 / ((1.0 - 2.0 * cfg.theta).max(1e-300) * gen.spectral_scale());
        if cfg.dt > limit {
            return Err(Error::Unstable(format!(
                "dt = {} exceeds the stability limit {limit:e} of the theta = {} scheme",
                cfg.dt, cfg.theta
            )));
        }
    }
    let steps = (t_end / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let dt = if steps > 0 { t_end / steps as f64 } else { cfg.dt };
    let mut times = vec![0.0];
    let mut masses = vec![p0.clone()];
    let mut p = p0;
    let mut min_mass = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let startup = if cfg.theta == 0.5 { cfg.startup_half_steps / 2 } else { 0 };
    for k in 1..=steps {
        if k <= startup {
            p = gen.step(&p, 0.5 * dt, 1.0);
            p = gen.step(&p, 0.5 * dt, 1.0);
        } else {
            p = gen.step(&p, dt, cfg.theta);
        }
        min_mass = p.iter().cloned().fold(min_mass, f64::min);
        times.push(k as f64 * dt);
        masses.push(p.clone());
    }
    Ok(FpSolution {
        times,
        masses,
        dt,
        theta: cfg.theta,
        min_mass,
        negative_flag: min_mass < -1e-10,
        grid: gamma.grid().to_vec(),
    })
}
