//! The minimizing-movement (JKO) scheme
//! `μ_{k+1} = argmin_ν H(ν|γ) + W₂²(ν, μ_k) / (2τ)` for one-dimensional
//! log-concave references, trajectories built from it, and checkers for the
//! estimates the scheme satisfies.

mod checks;
mod lagrangian;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, ReferenceMeasure};
use crate::transport::QuantileFunction;

pub use checks::{
    contractivity_check, displacement_convexity_check, estimate_checks, evi_residual_profile, transition_entropy_check,
    CheckLine, CheckReport, ContractivityReport, ConvexityReport, TransitionEntropyCheck, UNIFORM_APPROX_CONSTANT,
};
pub use lagrangian::{random_state, LagrangianState, MassGrid};
use lagrangian::StepProblem;

/// Parameters of the scheme and its inner solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JkoConfig {
    /// Time step `τ`.
    pub tau: f64,
    /// Newton-decrement threshold of the inner solver.
    pub inner_tol: f64,
    pub max_inner_iters: usize,
    /// Equal-mass cells of the quantile discretization (before tail refinement).
    pub mass_cells: usize,
    /// Scalar `a` of the transport norm `‖h‖² = a·h²`.
    pub metric_scale: f64,
}

impl Default for JkoConfig {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            inner_tol: 1e-24,
            max_inner_iters: 200,
            mass_cells: 400,
            metric_scale: 1.0,
        }
    }
}

impl JkoConfig {
    pub fn with_tau(tau: f64) -> Self {
        Self {
            tau,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidArgument(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::InvalidArgument(format!("inner_tol must be positive, got {}", self.inner_tol)));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidArgument("max_inner_iters must be at least 1".into()));
        }
        if self.mass_cells < 2 {
            return Err(Error::InvalidArgument(format!("mass_cells must be at least 2, got {}", self.mass_cells)));
        }
        if !(self.metric_scale > 0.0 && self.metric_scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "metric_scale must be positive, got {}",
                self.metric_scale
            )));
        }
        Ok(())
    }
}

/// Chained JKO steps with per-step diagnostics. Index 0 is the initial datum.
#[derive(Clone, Debug)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    /// Measures on the reference grid.
    pub measures: Vec<DiscreteMeasure>,
    /// `H(μ_k|γ)` of the piecewise-constant densities.
    pub entropies: Vec<f64>,
    /// `W₂(μ_k, μ_{k−1})`, zero at `k = 0`.
    pub w2_increments: Vec<f64>,
    /// Largest discrete EVI residual of step `k` against the reference and
    /// the initial datum as test measures; zero at `k = 0`.
    pub evi_residuals: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub states: Vec<LagrangianState>,
    pub config: JkoConfig,
}

impl FlowTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_measure(&self) -> &DiscreteMeasure {
        self.measures.last().expect("trajectory holds its initial datum")
    }

    pub fn final_state(&self) -> &LagrangianState {
        self.states.last().expect("trajectory holds its initial datum")
    }

    /// Index of the step at time `t`, if `t` is one of the step times.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = (t / self.config.tau).round();
        if k < 0.0 || k as usize >= self.len() {
            return None;
        }
        let k = k as usize;
        ((self.times[k] - t).abs() <= 1e-9 * self.config.tau.max(t)).then_some(k)
    }

    /// Distance in the metric the flow was computed with.
    pub fn distance(&self, a: &LagrangianState, b: &LagrangianState) -> f64 {
        self.config.metric_scale.sqrt() * a.w2(b)
    }
}

/// Grid-indexed weights of a 1-D measure, binning atoms that are off the grid.
pub fn grid_weights_of(gamma: &ReferenceMeasure, mu: &DiscreteMeasure) -> Result<Vec<f64>> {
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.dim() });
    }
    Ok(match gamma.align(mu) {
        Some(w) => w,
        None => gamma.bin_linear(mu.points(), mu.weights()),
    })
}

/// Representation of a grid measure (read as a piecewise-constant density)
/// on a fresh mass grid; exact when the support has no gaps.
pub fn initial_state(gamma: &ReferenceMeasure, mu: &DiscreteMeasure, cfg: &JkoConfig) -> Result<LagrangianState> {
    cfg.validate()?;
    let w = grid_weights_of(gamma, mu)?;
    if w.iter().zip(gamma.weights()).any(|(&a, &g)| a > 0.0 && g <= 0.0) {
        return Err(Error::InvalidMeasure(
            "initial measure charges cells outside the reference support".into(),
        ));
    }
    let total: f64 = w.iter().sum();
    let mut cum = Vec::with_capacity(w.len() * 2);
    let mut s = 0.0;
    let mut seen = false;
    let mut gap = false;
    for &wi in &w {
        if wi > 0.0 {
            if gap {
                // keep the jump of the quantile sharp
                cum.push(s - 1e-10);
            }
            s += wi / total;
            cum.push(s);
            seen = true;
            gap = false;
        } else if seen {
            gap = true;
        }
    }
    let grid = Arc::new(MassGrid::new(cfg.mass_cells, &cum)?);
    let q = QuantileFunction::from_histogram(&gamma.edges(), &w)?;
    Ok(LagrangianState::from_quantile(grid, &q))
}

/// `γ` restricted to grid cell `idx`, resolved on 64 sub-cells.
pub fn cell_state(gamma: &ReferenceMeasure, idx: usize, cfg: &JkoConfig) -> Result<LagrangianState> {
    const SUB: usize = 64;
    let (a, b) = gamma.cell_edges(idx);
    let pot = gamma.potential();
    let v0 = pot.value(gamma.grid()[idx]);
    let h = (b - a) / SUB as f64;
    let edges: Vec<f64> = (0..=SUB).map(|k| a + k as f64 * h).collect();
    let w: Vec<f64> = edges
        .windows(2)
        .map(|e| crate::quad::gl5_average(|y| (v0 - pot.value(y)).exp(), e[0], e[1]))
        .collect();
    let total: f64 = w.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::InvalidMeasure(format!("cell {idx} carries no reference mass")));
    }
    let mut s = 0.0;
    let cum: Vec<f64> = w
        .iter()
        .map(|x| {
            s += x / total;
            s
        })
        .collect();
    let grid = Arc::new(MassGrid::new(cfg.mass_cells, &cum)?);
    let q = QuantileFunction::from_histogram(&edges, &w)?;
    Ok(LagrangianState::from_quantile(grid, &q))
}

/// The reference itself on a given mass grid.
pub fn reference_state(gamma: &ReferenceMeasure, grid: &Arc<MassGrid>) -> LagrangianState {
    let q = QuantileFunction::from_histogram(&gamma.edges(), gamma.weights()).expect("reference has mass");
    LagrangianState::from_quantile(Arc::clone(grid), &q)
}

/// One step from `prior`, in the metric `metric_scale·W₂²`.
pub fn step_from_state(gamma: &ReferenceMeasure, prior: &LagrangianState, cfg: &JkoConfig) -> Result<(LagrangianState, usize)> {
    cfg.validate()?;
    solve_step(gamma, prior, cfg, prior.knots().to_vec())
}

/// One step from `prior`, starting the inner solver at `start` (knots on the
/// same mass grid). The minimizer does not depend on `start`.
pub fn step_from_state_with_start(
    gamma: &ReferenceMeasure,
    prior: &LagrangianState,
    cfg: &JkoConfig,
    start: Vec<f64>,
) -> Result<(LagrangianState, usize)> {
    cfg.validate()?;
    if start.len() != prior.knots().len() {
        return Err(Error::DimensionMismatch {
            expected: prior.knots().len(),
            got: start.len(),
        });
    }
    solve_step(gamma, prior, cfg, start)
}

fn solve_step(
    gamma: &ReferenceMeasure,
    prior: &LagrangianState,
    cfg: &JkoConfig,
    start: Vec<f64>,
) -> Result<(LagrangianState, usize)> {
    let q = prior.quantile();
    let problem = StepProblem::new(gamma, prior.grid(), &q, cfg.metric_scale / cfg.tau);
    let out = problem.solve(start, cfg.inner_tol, cfg.max_inner_iters);
    if !out.converged {
        let best = gamma.measure_from_weights(out.state.grid_weights(gamma))?;
        return Err(Error::StepNotConverged {
            best: Box::new(best),
            iterations: out.iterations,
            residual: out.decrement,
        });
    }
    Ok((out.state, out.iterations))
}

/// Value of the step objective `H(ν|γ) + a·W₂²(ν, prior)/(2τ)` at `nu`.
pub fn step_objective(gamma: &ReferenceMeasure, prior: &LagrangianState, nu: &LagrangianState, cfg: &JkoConfig) -> f64 {
    let pot = gamma.potential();
    nu.entropy(pot, gamma.log_partition()) + cfg.metric_scale * nu.w2(prior).powi(2) / (2.0 * cfg.tau)
}

/// One JKO step from a grid measure; the result lives on the same grid.
pub fn jko_step(gamma: &ReferenceMeasure, mu: &DiscreteMeasure, cfg: &JkoConfig) -> Result<DiscreteMeasure> {
    let s0 = initial_state(gamma, mu, cfg)?;
    let (s1, _) = step_from_state(gamma, &s0, cfg)?;
    gamma.measure_from_weights(s1.grid_weights(gamma))
}

/// `⌈T/τ⌉` chained steps from `mu0`.
pub fn jko_trajectory(gamma: &ReferenceMeasure, mu0: &DiscreteMeasure, cfg: &JkoConfig, t_end: f64) -> Result<FlowTrajectory> {
    cfg.validate()?;
    if !(t_end >= cfg.tau * (1.0 - 1e-12)) {
        return Err(Error::InvalidArgument(format!(
            "final time {t_end} is shorter than one step ({})",
            cfg.tau
        )));
    }
    let steps = (t_end / cfg.tau - 1e-9).ceil().max(1.0) as usize;
    let s0 = initial_state(gamma, mu0, cfg)?;
    trajectory_from_state(gamma, s0, cfg, steps)
}

/// `steps` chained steps from a state.
pub fn trajectory_from_state(
    gamma: &ReferenceMeasure,
    s0: LagrangianState,
    cfg: &JkoConfig,
    steps: usize,
) -> Result<FlowTrajectory> {
    cfg.validate()?;
    let pot = gamma.potential();
    let log_z = gamma.log_partition();
    let a = cfg.metric_scale;
    let probes = [reference_state(gamma, s0.grid()), s0.clone()];
    let probe_h: Vec<f64> = probes.iter().map(|p| p.entropy(pot, log_z)).collect();

    let mut traj = FlowTrajectory {
        times: Vec::with_capacity(steps + 1),
        measures: Vec::with_capacity(steps + 1),
        entropies: Vec::with_capacity(steps + 1),
        w2_increments: Vec::with_capacity(steps + 1),
        evi_residuals: Vec::with_capacity(steps + 1),
        inner_iterations: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        config: cfg.clone(),
    };
    traj.times.push(0.0);
    traj.measures.push(gamma.measure_from_weights(s0.grid_weights(gamma))?);
    traj.entropies.push(s0.entropy(pot, log_z));
    traj.w2_increments.push(0.0);
    traj.evi_residuals.push(0.0);
    traj.inner_iterations.push(0);
    traj.states.push(s0);

    for k in 1..=steps {
        let prev = traj.states.last().unwrap();
        let (next, iters) = step_from_state(gamma, prev, cfg)?;
        let h = next.entropy(pot, log_z);
        let evi = probes
            .iter()
            .zip(&probe_h)
            .map(|(p, hp)| a * (next.w2(p).powi(2) - prev.w2(p).powi(2)) / (2.0 * cfg.tau) + h - hp)
            .fold(f64::NEG_INFINITY, f64::max);
        traj.times.push(k as f64 * cfg.tau);
        traj.measures.push(gamma.measure_from_weights(next.grid_weights(gamma))?);
        traj.entropies.push(h);
        traj.w2_increments.push(a.sqrt() * next.w2(prev));
        traj.evi_residuals.push(evi);
        traj.inner_iterations.push(iters);
        traj.states.push(next);
    }
    Ok(traj)
}

/// Flow started from `γ` restricted to the grid cell at (or nearest to) `x`
/// in the support. With that start the transition matrix of the scheme
/// inherits the detailed balance of the flow up to the time discretization.
#[derive(Clone, Debug)]
pub struct Transition {
    /// Centre of the start cell.
    pub start: f64,
    pub start_index: usize,
    /// Whether `x` lay outside the support and was moved.
    pub snapped: bool,
    pub trajectory: FlowTrajectory,
}

/// `ν_t^x`: the flow from the cell of `x`, run to time `t` with
/// `⌈t/τ⌉` steps of equal length.
pub fn transition(gamma: &ReferenceMeasure, x: f64, t: f64, cfg: &JkoConfig) -> Result<Transition> {
    cfg.validate()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("transition time must be positive, got {t}")));
    }
    if !x.is_finite() {
        return Err(Error::InvalidArgument("start point must be finite".into()));
    }
    let idx = gamma.nearest_support_index(x);
    let (a, b) = gamma.cell_edges(idx);
    let snapped = x < a || x > b;
    let steps = (t / cfg.tau - 1e-9).ceil().max(1.0) as usize;
    let step_cfg = JkoConfig {
        tau: t / steps as f64,
        ..cfg.clone()
    };
    let s0 = cell_state(gamma, idx, &step_cfg)?;
    let trajectory = trajectory_from_state(gamma, s0, &step_cfg, steps)?;
    Ok(Transition {
        start: gamma.grid()[idx],
        start_index: idx,
        snapped,
        trajectory,
    })
}

pub fn transition_measure(gamma: &ReferenceMeasure, x: f64, t: f64, cfg: &JkoConfig) -> Result<DiscreteMeasure> {
    Ok(transition(gamma, x, t, cfg)?.trajectory.final_measure().clone())
}

/// Trajectories at `τ₀/2^m` and the sup-in-time gaps between consecutive levels.
#[derive(Clone, Debug)]
pub struct Refinement {
    pub levels: Vec<FlowTrajectory>,
    /// `sup_t W₂` between levels `m` and `m + 1`, over the coarse times.
    pub cauchy_gaps: Vec<f64>,
    /// `2^{−m/2}·√(2τ₀H(μ₀|γ))`.
    pub envelope: Vec<f64>,
}

impl Refinement {
    pub fn finest(&self) -> &FlowTrajectory {
        self.levels.last().expect("at least two levels")
    }
}

pub fn refine_trajectory(
    gamma: &ReferenceMeasure,
    mu0: &DiscreteMeasure,
    tau0: f64,
    levels: usize,
    t_end: f64,
    cfg: &JkoConfig,
) -> Result<Refinement> {
    if levels < 2 {
        return Err(Error::InvalidArgument(format!("refinement needs at least 2 levels, got {levels}")));
    }
    let base = JkoConfig {
        tau: tau0,
        ..cfg.clone()
    };
    base.validate()?;
    let coarse_steps = (t_end / tau0 - 1e-9).ceil().max(1.0) as usize;
    let s0 = initial_state(gamma, mu0, &base)?;
    let trajs: Vec<FlowTrajectory> = (0..levels)
        .into_par_iter()
        .map(|m| {
            let c = JkoConfig {
                tau: tau0 / (1u64 << m) as f64,
                ..base.clone()
            };
            trajectory_from_state(gamma, s0.clone(), &c, coarse_steps << m)
        })
        .collect::<Result<_>>()?;
    let h0 = trajs[0].entropies[0].max(0.0);
    let mut gaps = Vec::with_capacity(levels - 1);
    for m in 0..levels - 1 {
        let (a, b) = (&trajs[m], &trajs[m + 1]);
        let gap = (0..=coarse_steps)
            .map(|k| a.distance(&a.states[k << m], &b.states[k << (m + 1)]))
            .fold(0.0, f64::max);
        gaps.push(gap);
    }
    let envelope = (0..levels - 1)
        .map(|m| 2f64.powf(-(m as f64) / 2.0) * (2.0 * tau0 * h0).sqrt())
        .collect();
    Ok(Refinement {
        levels: trajs,
        cauchy_gaps: gaps,
        envelope,
    })
}

/// How far each candidate moves in time `t`.
#[derive(Clone, Debug, Serialize)]
pub struct InvarianceReport {
    pub displacement: Vec<f64>,
    pub invariant: Vec<bool>,
    pub tol: f64,
}

pub fn invariance_check(
    gamma: &ReferenceMeasure,
    candidates: &[DiscreteMeasure],
    t: f64,
    cfg: &JkoConfig,
    tol: f64,
) -> Result<InvarianceReport> {
    cfg.validate()?;
    let steps = (t / cfg.tau - 1e-9).ceil().max(1.0) as usize;
    let c = JkoConfig {
        tau: t / steps as f64,
        ..cfg.clone()
    };
    let displacement: Vec<f64> = candidates
        .par_iter()
        .map(|mu| {
            let s0 = initial_state(gamma, mu, &c)?;
            let tr = trajectory_from_state(gamma, s0, &c, steps)?;
            Ok(tr.distance(tr.final_state(), &tr.states[0]))
        })
        .collect::<Result<_>>()?;
    let invariant = displacement.iter().map(|&d| d <= tol).collect();
    Ok(InvarianceReport {
        displacement,
        invariant,
        tol,
    })
}
