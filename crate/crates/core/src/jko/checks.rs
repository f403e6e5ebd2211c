use serde::Serialize;

use super::{transition, FlowTrajectory, JkoConfig, LagrangianState};
use crate::error::{Error, Result};
use crate::measures::ReferenceMeasure;

/// `2(2√2 + 1)`, the constant of the uniform error estimate.
pub const UNIFORM_APPROX_CONSTANT: f64 = 2.0 * (2.0 * std::f64::consts::SQRT_2 + 1.0);

/// One family of inequalities `value ≤ bound + tol`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckLine {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Smallest `bound − value` seen (negative when violated).
    pub worst_margin: f64,
    pub tol: f64,
}

impl CheckLine {
    fn new(name: &str, tol: f64) -> Self {
        Self {
            name: name.to_string(),
            checked: 0,
            violations: 0,
            worst_margin: f64::INFINITY,
            tol,
        }
    }

    fn record(&mut self, value: f64, bound: f64) {
        self.checked += 1;
        let margin = bound - value;
        if margin.is_nan() || margin < -self.tol {
            self.violations += 1;
        }
        if margin.is_nan() {
            self.worst_margin = f64::NEG_INFINITY;
        } else {
            self.worst_margin = self.worst_margin.min(margin);
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckReport {
    /// `H(μ_{k+1}) ≤ H(μ_k)`.
    pub monotone_entropy: CheckLine,
    /// `W₂(μ_{k+1}, μ_k) ≤ √(2τ[H(μ_k) − H(μ_{k+1})])`.
    pub energy_increment: CheckLine,
    /// `W₂(μ_t, μ_s) ≤ √(2H(μ̄|γ))·√|t − s|`.
    pub holder: CheckLine,
    /// `sup_t W₂(reference, S_τ) ≤ 2(2√2+1)·√(τ H(μ̄|γ))`, when a reference is given.
    pub approximation: Option<CheckLine>,
    /// `H(μ_t) ≤ W₂²(μ̄, ν)/(2t) + H(ν)` over the probe states.
    pub regularizing: CheckLine,
    /// Discrete EVI over the probe states, per step.
    pub evi: CheckLine,
}

impl CheckReport {
    pub fn lines(&self) -> Vec<&CheckLine> {
        let mut v = vec![&self.monotone_entropy, &self.energy_increment, &self.holder];
        if let Some(a) = &self.approximation {
            v.push(a);
        }
        v.push(&self.regularizing);
        v.push(&self.evi);
        v
    }

    pub fn passed(&self) -> bool {
        self.lines().iter().all(|l| l.passed())
    }
}

/// `[a·W₂²(μ_{k+1},ν) − a·W₂²(μ_k,ν)]/(2Δt) + H(μ_{k+1}|γ) − H(ν|γ)` for every step.
pub fn evi_residual_profile(traj: &FlowTrajectory, nu: &LagrangianState, gamma: &ReferenceMeasure) -> Vec<f64> {
    let h_nu = nu.entropy(gamma.potential(), gamma.log_partition());
    let d2: Vec<f64> = traj.states.iter().map(|s| traj.distance(s, nu).powi(2)).collect();
    (1..traj.len())
        .map(|k| {
            let dt = traj.times[k] - traj.times[k - 1];
            (d2[k] - d2[k - 1]) / (2.0 * dt) + traj.entropies[k] - h_nu
        })
        .collect()
}

/// Index subset of at most `cap` entries, always keeping both ends.
fn thinned(len: usize, cap: usize) -> Vec<usize> {
    if len <= cap {
        return (0..len).collect();
    }
    let stride = len.div_ceil(cap);
    let mut v: Vec<usize> = (0..len).step_by(stride).collect();
    if *v.last().unwrap() != len - 1 {
        v.push(len - 1);
    }
    v
}

/// Checks the a-priori estimates of the scheme along `traj`. The tolerances
/// absorb inner-solver error only; every inequality holds exactly for the
/// discrete scheme.
pub fn estimate_checks(
    traj: &FlowTrajectory,
    gamma: &ReferenceMeasure,
    reference: Option<&FlowTrajectory>,
    probes: &[LagrangianState],
) -> Result<CheckReport> {
    let tau = traj.config.tau;
    let h = &traj.entropies;
    let h0 = h[0];
    let tol = 1e-8;

    let mut monotone = CheckLine::new("entropy is non-increasing", 1e-12);
    let mut energy = CheckLine::new("step increment vs entropy decrease", tol);
    for k in 1..traj.len() {
        monotone.record(h[k], h[k - 1]);
        energy.record(traj.w2_increments[k], (2.0 * tau * (h[k - 1] - h[k]).max(0.0)).sqrt());
    }

    let mut holder = CheckLine::new("Hölder continuity in time", tol);
    let idx = thinned(traj.len(), 400);
    let c = (2.0 * h0.max(0.0)).sqrt();
    for (p, &j) in idx.iter().enumerate() {
        for &k in &idx[p + 1..] {
            let d = traj.distance(&traj.states[j], &traj.states[k]);
            holder.record(d, c * (traj.times[k] - traj.times[j]).sqrt());
        }
    }

    let approximation = match reference {
        None => None,
        Some(r) => {
            let mut line = CheckLine::new("uniform approximation error", tol);
            let bound = UNIFORM_APPROX_CONSTANT * (tau * h0.max(0.0)).sqrt();
            let mut sup: f64 = 0.0;
            for k in 0..traj.len() {
                let rk = r.index_at(traj.times[k]).ok_or_else(|| {
                    Error::InvalidArgument(format!("reference trajectory has no step at t = {}", traj.times[k]))
                })?;
                sup = sup.max(traj.distance(&traj.states[k], &r.states[rk]));
            }
            line.record(sup, bound);
            Some(line)
        }
    };

    let mut regularizing = CheckLine::new("regularizing effect", tol);
    let mut evi = CheckLine::new("discrete EVI", tol);
    let pot = gamma.potential();
    let log_z = gamma.log_partition();
    for nu in probes {
        let h_nu = nu.entropy(pot, log_z);
        let d0 = traj.distance(&traj.states[0], nu).powi(2);
        for k in 1..traj.len() {
            regularizing.record(h[k], d0 / (2.0 * traj.times[k]) + h_nu);
        }
        for r in evi_residual_profile(traj, nu, gamma) {
            evi.record(r, 0.0);
        }
    }

    Ok(CheckReport {
        monotone_entropy: monotone,
        energy_increment: energy,
        holder,
        approximation,
        regularizing,
        evi,
    })
}

/// Distances between two trajectories at their common step times.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractivityReport {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    /// Largest increase between consecutive times (≤ 0 when non-increasing).
    pub max_increase: f64,
    pub tol: f64,
}

impl ContractivityReport {
    pub fn passed(&self) -> bool {
        self.max_increase <= self.tol
    }
}

pub fn contractivity_check(a: &FlowTrajectory, b: &FlowTrajectory, tol: f64) -> Result<ContractivityReport> {
    let mut times = Vec::new();
    let mut distances = Vec::new();
    for (k, &t) in a.times.iter().enumerate() {
        if let Some(j) = b.index_at(t) {
            times.push(t);
            distances.push(a.distance(&a.states[k], &b.states[j]));
        }
    }
    if times.is_empty() {
        return Err(Error::InvalidArgument("trajectories share no step times".into()));
    }
    let max_increase = distances
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(ContractivityReport {
        times,
        distances,
        max_increase,
        tol,
    })
}

/// `H(ν_t^x|γ)` against `W₂²(δ_x, γ)/(2t)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransitionEntropyCheck {
    pub x: f64,
    pub t: f64,
    pub entropy: f64,
    pub bound: f64,
    pub holds: bool,
}

pub fn transition_entropy_check(gamma: &ReferenceMeasure, x: f64, t: f64, cfg: &JkoConfig) -> Result<TransitionEntropyCheck> {
    let tr = transition(gamma, x, t, cfg)?;
    let entropy = *tr.trajectory.entropies.last().unwrap();
    // W₂²(δ_x, γ) = ∫ |x − y|² dγ(y), by quadrature of the continuum density
    let (lo, hi) = gamma.bounds();
    let pot = gamma.potential();
    let w2sq = crate::quad::integrate_with_breaks(
        |y| (x - y).powi(2) * gamma.density(y),
        lo,
        hi,
        &pot.kinks(),
        1e-13,
    );
    let bound = cfg.metric_scale * w2sq / (2.0 * t);
    Ok(TransitionEntropyCheck {
        x,
        t,
        entropy,
        bound,
        holds: entropy <= bound,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvexityReport {
    /// `H(μ_t) ≤ (1−t)H(μ₀) + tH(μ₁)`.
    pub entropy: CheckLine,
    /// `W₂²(ν_t, μ̄) ≤ (1−t)W₂²(ν₀, μ̄) + tW₂²(ν₁, μ̄) − t(1−t)W₂²(ν₀, ν₁)`.
    pub quadrilateral: CheckLine,
}

impl ConvexityReport {
    pub fn passed(&self) -> bool {
        self.entropy.passed() && self.quadrilateral.passed()
    }
}

/// Displacement convexity of `H(·|γ)` and the quadrilateral inequality on
/// `pairs` random states. Interpolants are quantile averages on a shared
/// mass grid, which are the 1-D displacement interpolants of the
/// piecewise-constant densities, so both sides are evaluated exactly.
pub fn displacement_convexity_check(gamma: &ReferenceMeasure, pairs: usize, ts: &[f64], seed: u64) -> Result<ConvexityReport> {
    use rand::{Rng, SeedableRng};
    use rayon::prelude::*;
    use std::sync::Arc;

    let grid = Arc::new(super::MassGrid::new(64, &[])?);
    let pot = gamma.potential();
    let ln_z = gamma.log_partition();
    let (lo, hi) = gamma.bounds();
    let (center, width) = (0.5 * (lo + hi), 0.25 * (hi - lo));
    let results: Vec<(Vec<(f64, f64)>, Vec<(f64, f64)>)> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
                let c = center + width * rng.random_range(-1.0..1.0);
                let s = width * rng.random_range(0.1..1.0);
                super::random_state(&grid, gamma, c, s, rng)
            };
            let (a, b, bar) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let (ha, hb) = (a.entropy(pot, ln_z), b.entropy(pot, ln_z));
            let (da, db, dab) = (a.w2(&bar).powi(2), b.w2(&bar).powi(2), a.w2(&b).powi(2));
            let mut ent = Vec::with_capacity(ts.len());
            let mut quad = Vec::with_capacity(ts.len());
            for &t in ts {
                let x: Vec<f64> = a.knots().iter().zip(b.knots()).map(|(p, q)| (1.0 - t) * p + t * q).collect();
                let mid = LagrangianState::new(Arc::clone(&grid), x).expect("averages of increasing knots increase");
                ent.push((mid.entropy(pot, ln_z), (1.0 - t) * ha + t * hb));
                quad.push((mid.w2(&bar).powi(2), (1.0 - t) * da + t * db - t * (1.0 - t) * dab));
            }
            (ent, quad)
        })
        .collect();
    let mut entropy = CheckLine::new("entropy_convexity", 1e-6);
    let mut quadrilateral = CheckLine::new("quadrilateral", 1e-8);
    for (ent, quad) in results {
        ent.into_iter().for_each(|(v, b)| entropy.record(v, b));
        quad.into_iter().for_each(|(v, b)| quadrilateral.record(v, b));
    }
    Ok(ConvexityReport { entropy, quadrilateral })
}
