//! The Dirichlet energy `∫|u′|² dγ` on a reference grid, its variational
//! characterization through entropy and `W₂`, and the boundary measures
//! `Σ = −(e^{−U})′` that appear in the integration-by-parts formula.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jko::{random_state, LagrangianState, MassGrid};
use crate::measures::{sublevel_bounds, ConvexPotential, Potential, ReferenceMeasure};
use crate::quad::{integrate, integrate_with_breaks};
use crate::stability::{test_dictionary, ReferenceSequence};
use crate::transport::QuantileFunction;

/// Level above `min U` at which the boundary measure is truncated; the
/// neglected variation is below `2e^{−60}`.
const SIGMA_GAP: f64 = 60.0;

/// Values of a function at the grid points of a reference.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridFunction {
    pub values: Vec<f64>,
    /// Set when the function is known to be bounded on the support.
    pub bounded: bool,
}

impl GridFunction {
    pub fn new(gamma: &ReferenceMeasure, values: Vec<f64>, bounded: bool) -> Result<Self> {
        if values.len() != gamma.len() {
            return Err(Error::DimensionMismatch {
                expected: gamma.len(),
                got: values.len(),
            });
        }
        if values.iter().zip(gamma.weights()).any(|(v, &g)| g > 0.0 && !v.is_finite()) {
            return Err(Error::InvalidArgument("grid function must be finite on the support".into()));
        }
        Ok(Self { values, bounded })
    }

    pub fn from_fn(gamma: &ReferenceMeasure, f: impl Fn(f64) -> f64, bounded: bool) -> Result<Self> {
        Self::new(gamma, gamma.grid().iter().map(|&x| f(x)).collect(), bounded)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| c * v).collect(),
            bounded: self.bounded,
        }
    }

    fn sup_norm(&self, gamma: &ReferenceMeasure) -> f64 {
        self.values
            .iter()
            .zip(gamma.weights())
            .filter(|(_, &g)| g > 0.0)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max)
    }
}

/// Discrete gradient on the support: central differences inside, one-sided
/// at the first and last support cells, zero off the support.
pub fn grid_gradient(u: &GridFunction, gamma: &ReferenceMeasure) -> Vec<f64> {
    let x = gamma.grid();
    let w = gamma.weights();
    let n = x.len();
    let inside = |i: usize| w[i] > 0.0;
    (0..n)
        .map(|i| {
            if !inside(i) {
                return 0.0;
            }
            let l = i > 0 && inside(i - 1);
            let r = i + 1 < n && inside(i + 1);
            let v = &u.values;
            match (l, r) {
                (true, true) => (v[i + 1] - v[i - 1]) / (x[i + 1] - x[i - 1]),
                (false, true) => (v[i + 1] - v[i]) / (x[i + 1] - x[i]),
                (true, false) => (v[i] - v[i - 1]) / (x[i] - x[i - 1]),
                (false, false) => 0.0,
            }
        })
        .collect()
}

/// `Σᵢ |∇u|ᵢ² γᵢ`.
pub fn dirichlet_energy(u: &GridFunction, gamma: &ReferenceMeasure) -> f64 {
    grid_gradient(u, gamma)
        .iter()
        .zip(gamma.weights())
        .map(|(g, w)| g * g * w)
        .sum()
}

/// Largest slope between neighbouring support points.
pub fn grid_lipschitz(u: &GridFunction, gamma: &ReferenceMeasure) -> f64 {
    let x = gamma.grid();
    let w = gamma.weights();
    (1..x.len())
        .filter(|&i| w[i] > 0.0 && w[i - 1] > 0.0)
        .map(|i| ((u.values[i] - u.values[i - 1]) / (x[i] - x[i - 1])).abs())
        .fold(0.0, f64::max)
}

/// Signed measure on the line: a piecewise-constant density on `edges` plus atoms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignedMeasure1D {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    /// `(location, mass)`
    pub atoms: Vec<(f64, f64)>,
    pub total_variation: f64,
}

impl SignedMeasure1D {
    pub fn total_mass(&self) -> f64 {
        let cells: f64 = self.cell_masses().sum();
        cells + self.atoms.iter().map(|a| a.1).sum::<f64>()
    }

    pub fn cell_masses(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).zip(&self.density).map(|(e, d)| d * (e[1] - e[0]))
    }
}

/// Support of `e^{−U}` up to the truncation level.
fn sigma_bounds(p: &Potential) -> (f64, f64) {
    if p.is_bounded() {
        p.domain()
    } else {
        sublevel_bounds(p, p.min_value() + SIGMA_GAP)
    }
}

/// Points where `U` is not smooth or `e^{−U}` changes monotonicity.
fn sigma_breaks(p: &Potential, a: f64, b: f64) -> Vec<f64> {
    let mut v: Vec<f64> = p.kinks().into_iter().chain([p.argmin()]).filter(|&k| k > a && k < b).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// `Σ^U = −(e^{−U})′`: density `U′e^{−U}` on `cells` cells (split at kinks
/// and at the minimizer) and atoms where `e^{−U}` jumps at the ends of a box.
pub fn boundary_measure_1d(potential: &ConvexPotential, cells: usize) -> Result<SignedMeasure1D> {
    if cells == 0 {
        return Err(Error::InvalidArgument("boundary measure needs at least one cell".into()));
    }
    let p = potential.compile()?;
    p.check_integrable()?;
    let (a, b) = sigma_bounds(&p);
    let h = (b - a) / cells as f64;
    let mut edges: Vec<f64> = (0..=cells).map(|k| a + k as f64 * h).collect();
    edges.extend(sigma_breaks(&p, a, b));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|x, y| (*x - *y).abs() <= 1e-12 * (b - a));
    // exact end points
    *edges.first_mut().unwrap() = a;
    *edges.last_mut().unwrap() = b;
    let density: Vec<f64> = edges
        .par_windows(2)
        .map(|e| {
            let m = integrate(|x| p.derivative(x) * (-p.value(x)).exp(), e[0], e[1], 1e-16);
            m / (e[1] - e[0])
        })
        .collect();
    let atoms = if p.is_bounded() {
        vec![(a, -(-p.value(a)).exp()), (b, (-p.value(b)).exp())]
    } else {
        Vec::new()
    };
    let tv = edges.windows(2).zip(&density).map(|(e, d)| (d * (e[1] - e[0])).abs()).sum::<f64>()
        + atoms.iter().map(|a| a.1.abs()).sum::<f64>();
    Ok(SignedMeasure1D {
        edges,
        density,
        atoms,
        total_variation: tv,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvReport {
    pub total_variation: f64,
    /// `2e^{−min U}`
    pub expected: f64,
    pub gap: f64,
    pub passed: bool,
}

/// `|Σ^U|(ℝ) = 2e^{−min U}` within `tol`.
pub fn tv_identity_check(potential: &ConvexPotential, cells: usize, tol: f64) -> Result<TvReport> {
    let sigma = boundary_measure_1d(potential, cells)?;
    let expected = 2.0 * (-potential.compile()?.min_value()).exp();
    let gap = (sigma.total_variation - expected).abs();
    Ok(TvReport {
        total_variation: sigma.total_variation,
        expected,
        gap,
        passed: gap <= tol,
    })
}

/// Continuous interpolant of a grid function: linear between grid points,
/// extended linearly to the outer grid edges, constant beyond.
fn interpolant(u: &GridFunction, gamma: &ReferenceMeasure) -> (Vec<f64>, Vec<f64>) {
    let x = gamma.grid();
    let v = &u.values;
    let n = x.len();
    let (lo, hi) = gamma.bounds();
    let mut xs = Vec::with_capacity(n + 2);
    let mut vs = Vec::with_capacity(n + 2);
    xs.push(lo);
    vs.push(if n > 1 { v[0] - (v[1] - v[0]) / (x[1] - x[0]) * (x[0] - lo) } else { v[0] });
    xs.extend_from_slice(x);
    vs.extend_from_slice(v);
    xs.push(hi);
    vs.push(if n > 1 { v[n - 1] + (v[n - 1] - v[n - 2]) / (x[n - 1] - x[n - 2]) * (hi - x[n - 1]) } else { v[0] });
    (xs, vs)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IbpReport {
    /// `∫ u′ e^{−U} dx`
    pub lhs: f64,
    /// `∫ u dΣ^U`
    pub rhs: f64,
    pub gap: f64,
    /// `sup|u| · |Σ^U|(ℝ)`
    pub scale: f64,
}

/// `∫u′e^{−U}dx = ∫u dΣ^U` for the piecewise-linear interpolant of `u`
/// through the grid points of `gamma`. Both sides are unnormalized.
pub fn integration_by_parts_check(gamma: &ReferenceMeasure, u: &GridFunction) -> Result<IbpReport> {
    if !u.bounded {
        return Err(Error::InvalidArgument("integration by parts needs a bounded function".into()));
    }
    if u.values.len() != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: gamma.len(),
            got: u.values.len(),
        });
    }
    let p = gamma.potential();
    let (xs, vs) = interpolant(u, gamma);
    let kinks = p.kinks();
    let tol = 1e-15;
    let pieces: Vec<(f64, f64)> = xs
        .par_windows(2)
        .zip(vs.par_windows(2))
        .map(|(x, v)| {
            let (a, b) = (x[0], x[1]);
            if b <= a {
                return (0.0, 0.0);
            }
            let slope = (v[1] - v[0]) / (b - a);
            let e = |t: f64| (-p.value(t)).exp();
            let lhs = slope * integrate_with_breaks(e, a, b, &kinks, tol);
            let rhs = integrate_with_breaks(|t| (v[0] + slope * (t - a)) * p.derivative(t) * e(t), a, b, &kinks, tol);
            (lhs, rhs)
        })
        .collect();
    let lhs: f64 = pieces.iter().map(|q| q.0).sum();
    let mut rhs: f64 = pieces.iter().map(|q| q.1).sum();
    // beyond the grid u is constant: only the mass of Σ there counts,
    // and for a box it is the pair of boundary atoms
    let (lo, hi) = (xs[0], *xs.last().unwrap());
    rhs += vs[vs.len() - 1] * (-p.value(hi)).exp() - vs[0] * (-p.value(lo)).exp();
    let tv = 2.0 * (-p.min_value()).exp();
    let scale = u.sup_norm(gamma).max(vs[0].abs()).max(vs[vs.len() - 1].abs()) * tv;
    Ok(IbpReport {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        scale,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlopeReport {
    /// `E_γ(u, u)` after normalizing `∫u² dγ = 1`.
    pub energy: f64,
    pub probes: usize,
    pub violations: usize,
    /// Smallest `H(μ) − H(u²γ) + 2√E·W₂(μ, u²γ)` over the probes.
    pub min_slack: f64,
    /// `(ε, [H(u²γ) − H(μ_ε)] / (2W₂(μ_ε, u²γ)) / √E)` along `id + ε s`, `s = −(ln u)′`.
    pub sharpness: Vec<(f64, f64)>,
}

impl SlopeReport {
    /// Ratio at the smallest `ε` tried.
    pub fn sharpness_ratio(&self) -> f64 {
        self.sharpness.last().map_or(f64::NAN, |s| s.1)
    }
}

pub const SHARPNESS_EPS: [f64; 3] = [1e-1, 3e-2, 1e-2];

/// Checks `H(μ|γ) ≥ H(u²γ|γ) − 2√E·W₂(μ, u²γ)` on `probe_count` random
/// measures and the near-equality along pushforwards in the direction
/// `−(ln u)′`. Measures are piecewise-constant densities represented on a
/// mass grid that resolves `u²γ` exactly, so entropies and distances are exact.
pub fn slope_variational_check(u: &GridFunction, gamma: &ReferenceMeasure, probe_count: usize, seed: u64) -> Result<SlopeReport> {
    if !u.bounded {
        return Err(Error::InvalidArgument("slope characterization needs a bounded function".into()));
    }
    let w = gamma.weights();
    let support = gamma.support_indices();
    if support.iter().any(|&i| !(u.values[i] > 0.0)) {
        return Err(Error::InvalidArgument("slope characterization needs inf u > 0".into()));
    }
    let total: f64 = support.iter().map(|&i| w[i]).sum();
    let norm2: f64 = support.iter().map(|&i| u.values[i] * u.values[i] * w[i]).sum::<f64>() / total;
    let u = u.scaled(1.0 / norm2.sqrt());
    let energy = dirichlet_energy(&u, gamma) / total;
    let slope = energy.sqrt();

    // ν = u²γ as a histogram on the reference cells
    let nu_w: Vec<f64> = (0..gamma.len()).map(|i| u.values[i] * u.values[i] * w[i]).collect();
    let nu_total: f64 = nu_w.iter().sum();
    let mut s = 0.0;
    let cum: Vec<f64> = nu_w
        .iter()
        .filter(|&&m| m > 0.0)
        .map(|m| {
            s += m / nu_total;
            s
        })
        .collect();
    let grid = Arc::new(MassGrid::new(200, &cum)?);
    let q = QuantileFunction::from_histogram(&gamma.edges(), &nu_w)?;
    let nu = LagrangianState::from_quantile(Arc::clone(&grid), &q);
    let pot = gamma.potential();
    let ln_z = gamma.log_partition();
    let h_nu = nu.entropy(pot, ln_z);

    let slack = |mu: &LagrangianState| mu.entropy(pot, ln_z) - h_nu + 2.0 * slope * mu.w2(&nu);
    let slacks: Vec<f64> = (0..probe_count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mu = probe_state(&nu, &grid, gamma, k, &mut rng);
            slack(&mu)
        })
        .collect();
    let violations = slacks.iter().filter(|&&v| v < -1e-12).count();
    let min_slack = slacks.iter().copied().fold(f64::INFINITY, f64::min);

    let sharpness = if slope > 0.0 {
        let direction = extremal_direction(&u, gamma, nu.knots());
        SHARPNESS_EPS
            .iter()
            .map(|&eps| {
                let x: Vec<f64> = nu.knots().iter().zip(&direction).map(|(x, s)| x + eps * s).collect();
                let ratio = match LagrangianState::new(Arc::clone(&grid), x) {
                    Ok(mu) => (h_nu - mu.entropy(pot, ln_z)) / (2.0 * mu.w2(&nu)) / slope,
                    Err(_) => f64::NAN,
                };
                (eps, ratio)
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(SlopeReport {
        energy,
        probes: probe_count,
        violations,
        min_slack,
        sharpness,
    })
}

/// Probe `k`: every fourth one is a small smooth displacement of `ν`, the
/// others are broad random states.
fn probe_state(nu: &LagrangianState, grid: &Arc<MassGrid>, gamma: &ReferenceMeasure, k: usize, rng: &mut ChaCha8Rng) -> LagrangianState {
    let mean = nu.mean();
    let spread = (nu.quantile().second_moment() - mean * mean).max(0.0).sqrt().max(0.1);
    if k % 4 == 0 {
        let (lo, hi) = gamma.potential().domain();
        let amp: f64 = rng.random_range(1e-3..5e-2);
        let freq: f64 = rng.random_range(0.2..2.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        let shift: f64 = rng.random_range(-1.0..1.0);
        let x: Vec<f64> = nu
            .knots()
            .iter()
            .map(|&x| {
                let cut = if lo.is_finite() { ((x - lo) * (hi - x) / (hi - lo).powi(2) * 4.0).max(0.0) } else { 1.0 };
                x + amp * cut * (shift + (freq * x + phase).sin())
            })
            .collect();
        if let Ok(mu) = LagrangianState::new(Arc::clone(grid), x) {
            return mu;
        }
    }
    let center = mean + spread * rng.random_range(-2.0..2.0);
    let scale = spread * rng.random_range(0.3..3.0);
    random_state(grid, gamma, center, scale, rng)
}

/// `s = −u′/u` at the knots from the interpolated grid gradient; cut off
/// near the ends of a box so the pushforward stays inside.
fn extremal_direction(u: &GridFunction, gamma: &ReferenceMeasure, knots: &[f64]) -> Vec<f64> {
    let g = grid_gradient(u, gamma);
    let x = gamma.grid();
    let (lo, hi) = gamma.potential().domain();
    let interp = |vals: &[f64], t: f64| {
        let k = x.partition_point(|&p| p <= t);
        if k == 0 {
            vals[0]
        } else if k == x.len() {
            vals[x.len() - 1]
        } else {
            let r = (t - x[k - 1]) / (x[k] - x[k - 1]);
            vals[k - 1] + r * (vals[k] - vals[k - 1])
        }
    };
    knots
        .iter()
        .map(|&t| {
            let s = -interp(&g, t) / interp(&u.values, t);
            if lo.is_finite() {
                let band = 0.05 * (hi - lo);
                s * ((t - lo).min(hi - t) / band).clamp(0.0, 1.0)
            } else {
                s
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryConvergenceReport {
    pub indices: Vec<usize>,
    /// `|Σⁿ|(ℝ)` per member.
    pub total_variations: Vec<f64>,
    pub limit_total_variation: f64,
    /// Half-widths `m` of the windows `J_m` around the limit's minimizer.
    pub windows: Vec<f64>,
    /// `supₙ |Σⁿ|(ℝ ∖ J_m)` per window.
    pub tail_sup: Vec<f64>,
    /// Largest dictionary gap `|∫φ dΣⁿ − ∫φ dΣ|` per member.
    pub dictionary_gaps: Vec<f64>,
    /// `||Σⁿ|(ℝ) − |Σ|(ℝ)|` per member.
    pub tv_gaps: Vec<f64>,
    pub tol: f64,
}

impl BoundaryConvergenceReport {
    /// Bounded variation, shrinking tails, and last-member gaps within `tol`.
    pub fn passed(&self) -> bool {
        let bounded = self.total_variations.iter().all(|v| v.is_finite());
        let tails = self.tail_sup.windows(2).all(|w| w[1] <= w[0] + 1e-15)
            && self.tail_sup.last().is_some_and(|&t| t <= self.tol);
        let last = |v: &[f64]| v.last().is_some_and(|&g| g <= self.tol);
        bounded && tails && last(&self.dictionary_gaps) && last(&self.tv_gaps)
    }
}

/// `|Σ^U|((−∞, c))`, exact: `e^{−U}` increases up to the minimizer and decreases after.
fn tv_below(p: &Potential, c: f64) -> f64 {
    let t0 = p.argmin();
    let top = (-p.min_value()).exp();
    let e = (-p.value(c)).exp();
    if c <= t0 {
        e
    } else {
        2.0 * top - e
    }
}

fn tv_outside(p: &Potential, a: f64, b: f64) -> f64 {
    let total = 2.0 * (-p.min_value()).exp();
    (tv_below(p, a) + total - tv_below(p, b)).max(0.0)
}

/// `∫φ dΣ^U` by quadrature of `φU′e^{−U}` plus the box atoms.
fn sigma_integral(p: &Potential, phi: impl Fn(f64) -> f64 + Sync) -> f64 {
    let (a, b) = sigma_bounds(p);
    let breaks = sigma_breaks(p, a, b);
    let dens = integrate_with_breaks(|x| phi(x) * p.derivative(x) * (-p.value(x)).exp(), a, b, &breaks, 1e-14);
    if p.is_bounded() {
        dens + phi(b) * (-p.value(b)).exp() - phi(a) * (-p.value(a)).exp()
    } else {
        dens
    }
}

pub const BOUNDARY_WINDOWS: [f64; 8] = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];

/// Boundedness, tightness and convergence of `Σⁿ = Σ^{Vₙ}` to `Σ^V` along a sequence.
pub fn boundary_convergence_check(seq: &ReferenceSequence, tol: f64) -> Result<BoundaryConvergenceReport> {
    let limit = seq.base.compile()?;
    let members: Vec<Potential> = seq.potentials.iter().map(|p| p.compile()).collect::<Result<_>>()?;
    let dict = test_dictionary();
    let limit_ints: Vec<f64> = dict.par_iter().map(|f| sigma_integral(&limit, |x| f.eval(x))).collect();
    let limit_tv = 2.0 * (-limit.min_value()).exp();
    let c = limit.argmin();
    let total_variations: Vec<f64> = members.iter().map(|p| 2.0 * (-p.min_value()).exp()).collect();
    let tail_sup = BOUNDARY_WINDOWS
        .iter()
        .map(|&m| members.iter().map(|p| tv_outside(p, c - m, c + m)).fold(0.0, f64::max))
        .collect();
    let dictionary_gaps = members
        .par_iter()
        .map(|p| {
            dict.iter()
                .zip(&limit_ints)
                .map(|(f, l)| (sigma_integral(p, |x| f.eval(x)) - l).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let tv_gaps = total_variations.iter().map(|v| (v - limit_tv).abs()).collect();
    Ok(BoundaryConvergenceReport {
        indices: seq.indices.clone(),
        total_variations,
        limit_total_variation: limit_tv,
        windows: BOUNDARY_WINDOWS.to_vec(),
        tail_sup,
        dictionary_gaps,
        tv_gaps,
        tol,
    })
}

/// Bounded functions with positive infimum used for the slope check.
pub fn slope_catalog() -> Vec<(&'static str, fn(f64) -> f64)> {
    vec![
        ("exp_quarter", |x| (x / 4.0).exp()),
        ("two_plus_sin", |x| 2.0 + x.sin()),
        ("tanh_shift", |x| 1.5 + x.tanh()),
        ("bump", |x| 1.0 + 1.0 / (1.0 + x * x)),
        ("slow_cos", |x| 3.0 + (x / 2.0).cos()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{discretize_reference, GridSpec};

    fn gauss(n: usize) -> ReferenceMeasure {
        discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(n)).unwrap()
    }

    #[test]
    fn energy_of_identity_and_constants() {
        let g = gauss(400);
        let one = GridFunction::from_fn(&g, |_| 3.0, true).unwrap();
        assert_eq!(dirichlet_energy(&one, &g), 0.0);
        let id = GridFunction::from_fn(&g, |x| x, false).unwrap();
        assert!((dirichlet_energy(&id, &g) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn energy_is_quadratic() {
        let g = gauss(200);
        let u = GridFunction::from_fn(&g, f64::sin, true).unwrap();
        let e = dirichlet_energy(&u, &g);
        assert_eq!(dirichlet_energy(&u.scaled(2.0), &g), 4.0 * e);
        assert_eq!(dirichlet_energy(&u.scaled(-0.5), &g), 0.25 * e);
    }

    #[test]
    fn box_atoms_are_jumps() {
        let s = boundary_measure_1d(&ConvexPotential::uniform_box(0.0, 1.0), 50).unwrap();
        assert_eq!(s.atoms, vec![(0.0, -1.0), (1.0, 1.0)]);
        assert!(s.density.iter().all(|d| *d == 0.0));
        assert!((s.total_variation - 2.0).abs() < 1e-15);
        assert!(s.total_mass().abs() < 1e-15);
    }

    #[test]
    fn outside_mass_is_exact_for_gaussian() {
        let p = ConvexPotential::standard_gaussian().compile().unwrap();
        let t = tv_outside(&p, -1.0, 2.0);
        assert!((t - (-0.5f64).exp() - (-2.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn shifted_abs_has_reduced_variation() {
        let p = ConvexPotential::affine_max(vec![(-1.0, 1.0), (1.0, 1.0)]);
        let r = tv_identity_check(&p, 200, 1e-6).unwrap();
        assert!((r.total_variation - 2.0 * (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn exponential_tilt_sharpness_matches_shift_formula() {
        // u ∝ e^{x/4}: s ≡ −1/4, u²γ = N(1/2, 1), and the ratio is 1 − ε/4
        let g = gauss(400);
        let u = GridFunction::from_fn(&g, |x| (x / 4.0).exp(), true).unwrap();
        let r = slope_variational_check(&u, &g, 8, 1).unwrap();
        assert!((r.energy - 1.0 / 16.0).abs() < 1e-4);
        for (eps, ratio) in &r.sharpness {
            assert!((ratio - (1.0 - eps / 4.0)).abs() < 1e-4, "{eps} {ratio}");
        }
    }

    #[test]
    fn rejects_nonpositive_u() {
        let g = gauss(100);
        let u = GridFunction::from_fn(&g, f64::sin, true).unwrap();
        assert!(slope_variational_check(&u, &g, 4, 0).is_err());
    }
}
