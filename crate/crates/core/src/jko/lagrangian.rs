//! Minimizing movement on the line in quantile coordinates.
//!
//! A state is a nondecreasing quantile function, linear between knots
//! `X₀ < … < X_M` placed at fixed cumulative masses `0 = s₀ < … < s_M = 1`;
//! equivalently a density that is constant (`mᵢ / (Xᵢ − Xᵢ₋₁)`) on each cell.
//! `W₂²` between two such states is the P1 mass-matrix norm of `X − Y`, and
//! the entropy is convex in `X`, so one step is a smooth, strictly convex
//! problem with a tridiagonal Hessian.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::measures::{Potential, ReferenceMeasure};
use crate::transport::QuantileFunction;

/// Ratio between consecutive tail masses; small enough that each tail piece
/// spans a short interval even where the density decays exponentially.
const TAIL_RATIO: f64 = 1.25;
/// Tail knots stop at this fraction of one equal cell.
const TAIL_DEPTH: f64 = 1e-6;
/// Cumulative masses closer than this are merged.
const MERGE_GAP: f64 = 1e-12;

/// Fixed cumulative-mass knots of a trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct MassGrid {
    s: Vec<f64>,
    m: Vec<f64>,
}

impl MassGrid {
    /// `cells` equal masses, the outer few graded geometrically into the
    /// tails, plus the `include`d cumulative masses.
    pub fn new(cells: usize, include: &[f64]) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidArgument(format!("mass grid needs at least 2 cells, got {cells}")));
        }
        let base = 1.0 / cells as f64;
        let anchor = 4.min(cells / 2);
        let mut s: Vec<f64> = (0..=cells)
            .filter(|&k| k == 0 || k >= anchor && k <= cells - anchor || k == cells)
            .map(|k| k as f64 * base)
            .collect();
        let mut e = anchor as f64 * base / TAIL_RATIO;
        while e >= base * TAIL_DEPTH {
            s.push(e);
            s.push(1.0 - e);
            e /= TAIL_RATIO;
        }
        s.extend(include.iter().copied().filter(|v| *v > 0.0 && *v < 1.0));
        s.sort_by(f64::total_cmp);
        let mut knots: Vec<f64> = vec![0.0];
        for v in s {
            if v - knots.last().unwrap() >= MERGE_GAP && 1.0 - v >= MERGE_GAP {
                knots.push(v);
            }
        }
        knots.push(1.0);
        Ok(Self::from_knots(knots))
    }

    /// A grid with the given cumulative masses `0 = s₀ < … < s_M = 1`.
    pub fn from_cumulative(s: Vec<f64>) -> Result<Self> {
        let ok = s.len() >= 2 && s[0] == 0.0 && *s.last().unwrap() == 1.0 && s.windows(2).all(|w| w[1] > w[0]);
        if !ok {
            return Err(Error::InvalidArgument(
                "cumulative masses must increase strictly from 0 to 1".into(),
            ));
        }
        Ok(Self::from_knots(s))
    }

    fn from_knots(s: Vec<f64>) -> Self {
        let m = s.windows(2).map(|w| w[1] - w[0]).collect();
        Self { s, m }
    }

    /// Cumulative masses `s₀ … s_M`.
    pub fn knots(&self) -> &[f64] {
        &self.s
    }

    /// Cell masses `m₁ … m_M` (index `i − 1`).
    pub fn masses(&self) -> &[f64] {
        &self.m
    }

    pub fn cells(&self) -> usize {
        self.m.len()
    }

    /// `‖X − Y‖²` in the P1 mass-matrix norm, i.e. `∫₀¹ |Q_X − Q_Y|² ds`.
    pub fn dist_sq(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut t = 0.0;
        for i in 0..self.m.len() {
            let d0 = x[i] - y[i];
            let d1 = x[i + 1] - y[i + 1];
            t += self.m[i] / 3.0 * (d0 * d0 + d0 * d1 + d1 * d1);
        }
        t.max(0.0)
    }

    /// `∫ φⱼ Q ds` for every hat function `φⱼ` of the grid, and `∫ Q² ds`.
    fn project(&self, q: &QuantileFunction) -> (Vec<f64>, f64) {
        let mut b = vec![0.0; self.s.len()];
        let s = &self.s;
        q.for_each_piece(s, |u, v, q0, q1| {
            let mid = 0.5 * (u + v);
            let k = s.partition_point(|&x| x <= mid).clamp(1, s.len() - 1);
            let (sl, sr) = (s[k - 1], s[k]);
            let len = sr - sl;
            // hat values at u and v: right hat φ_k rises, left hat φ_{k−1} falls
            let (r0, r1) = ((u - sl) / len, (v - sl) / len);
            let w = (v - u) / 6.0;
            let lin = |f0: f64, f1: f64| w * (2.0 * f0 * q0 + f0 * q1 + f1 * q0 + 2.0 * f1 * q1);
            b[k] += lin(r0, r1);
            b[k - 1] += lin(1.0 - r0, 1.0 - r1);
        });
        (b, q.second_moment())
    }
}

/// Knot positions on a shared [`MassGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct LagrangianState {
    grid: Arc<MassGrid>,
    x: Vec<f64>,
}

impl LagrangianState {
    pub fn new(grid: Arc<MassGrid>, x: Vec<f64>) -> Result<Self> {
        if x.len() != grid.s.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.s.len(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || x.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("knots must be finite and strictly increasing".into()));
        }
        Ok(Self { grid, x })
    }

    /// Samples `Q` at the grid knots, nudging flat stretches (atoms) apart
    /// so the density stays finite.
    pub fn from_quantile(grid: Arc<MassGrid>, q: &QuantileFunction) -> Self {
        let s = &grid.s;
        let mut x: Vec<f64> = s.iter().map(|&v| q.eval(v)).collect();
        let last = x.len() - 1;
        x[last] = q.segments().last().unwrap().x1;
        let span = (x[last] - x[0]).abs().max(1.0);
        let eps = 1e-9 * span;
        for i in 1..x.len() {
            if x[i] <= x[i - 1] {
                x[i] = x[i - 1] + eps * grid.m[i - 1];
            }
        }
        Self { grid, x }
    }

    pub fn grid(&self) -> &Arc<MassGrid> {
        &self.grid
    }

    pub fn knots(&self) -> &[f64] {
        &self.x
    }

    pub fn quantile(&self) -> QuantileFunction {
        QuantileFunction::from_knots(&self.grid.s, &self.x).expect("knots are increasing")
    }

    /// `W₂` to another state; exact on a shared grid, via quantiles otherwise.
    pub fn w2(&self, other: &Self) -> f64 {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid == other.grid {
            self.grid.dist_sq(&self.x, &other.x).sqrt()
        } else {
            crate::transport::w2_quantiles(&self.quantile(), &other.quantile())
        }
    }

    /// Relative entropy of the piecewise-constant density against the
    /// continuum reference `e^{−V}/Z`, with cell averages of `V` by
    /// five-point Gauss–Legendre.
    pub fn entropy(&self, potential: &Potential, log_partition: f64) -> f64 {
        let mut h = log_partition;
        for (i, &m) in self.grid.m.iter().enumerate() {
            let (a, b) = (self.x[i], self.x[i + 1]);
            h += m * ((m / (b - a)).ln() + potential.interval_average(a, b).value);
        }
        h
    }

    pub fn mean(&self) -> f64 {
        self.grid
            .m
            .iter()
            .enumerate()
            .map(|(i, &m)| 0.5 * m * (self.x[i] + self.x[i + 1]))
            .sum()
    }

    /// Cell masses on the reference grid: exact differences of the
    /// distribution function, with mass beyond the bounds kept in the end cells.
    pub fn grid_weights(&self, gamma: &ReferenceMeasure) -> Vec<f64> {
        let q = self.quantile();
        let edges = gamma.edges();
        let n = gamma.len();
        let mut w = Vec::with_capacity(n);
        let mut prev = 0.0;
        for (j, &e) in edges.iter().enumerate().skip(1) {
            let f = if j == n { 1.0 } else { q.cdf(e) };
            w.push((f - prev).max(0.0));
            prev = f;
        }
        w
    }
}

/// One proximal problem `min_X F(X) + (κ/2τ)‖X − X̄‖²`.
pub(crate) struct StepProblem<'a> {
    pot: &'a Potential,
    log_z: f64,
    grid: &'a Arc<MassGrid>,
    lo: f64,
    hi: f64,
    /// `κ/τ`
    w: f64,
    b: Vec<f64>,
    /// `G⁻¹b`, the prior projected onto the knot space.
    y: Vec<f64>,
    /// `c − yᵀGy ≥ 0`, the part of the prior the knots cannot represent.
    residual: f64,
}

pub(crate) struct StepOutcome {
    pub state: LagrangianState,
    pub iterations: usize,
    pub decrement: f64,
    pub converged: bool,
}

impl<'a> StepProblem<'a> {
    pub fn new(gamma: &'a ReferenceMeasure, grid: &'a Arc<MassGrid>, prior: &QuantileFunction, w: f64) -> Self {
        let pot = gamma.potential();
        let (lo, hi) = pot.domain();
        let (b, c) = grid.project(prior);
        let m = &grid.m;
        let n = b.len();
        let diag: Vec<f64> = (0..n)
            .map(|j| {
                let left = if j > 0 { m[j - 1] } else { 0.0 };
                let right = if j + 1 < n { m[j] } else { 0.0 };
                (left + right) / 3.0
            })
            .collect();
        let off: Vec<f64> = m.iter().map(|v| v / 6.0).collect();
        let y = thomas(&diag, &off, &b);
        let yby: f64 = y.iter().zip(&b).map(|(a, b)| a * b).sum();
        let residual = (c - yby).max(0.0);
        Self {
            pot,
            log_z: gamma.log_partition(),
            grid,
            lo,
            hi,
            w,
            b,
            y,
            residual,
        }
    }

    fn gx(&self, x: &[f64]) -> Vec<f64> {
        let m = &self.grid.m;
        let n = x.len();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let left = if j > 0 { m[j - 1] } else { 0.0 };
            let right = if j + 1 < n { m[j] } else { 0.0 };
            let mut v = (left + right) / 3.0 * x[j];
            if j > 0 {
                v += left / 6.0 * x[j - 1];
            }
            if j + 1 < n {
                v += right / 6.0 * x[j + 1];
            }
            out[j] = v;
        }
        out
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        if x.windows(2).any(|p| p[1] <= p[0]) || x[0] < self.lo || x[x.len() - 1] > self.hi {
            return f64::INFINITY;
        }
        let mut f = self.log_z;
        for (i, &m) in self.grid.m.iter().enumerate() {
            let (a, b) = (x[i], x[i + 1]);
            f += m * ((m / (b - a)).ln() + self.pot.interval_average(a, b).value);
        }
        // (x − y)ᵀG(x − y) avoids the cancellation in xᵀGx − 2bᵀx + c
        let d: Vec<f64> = x.iter().zip(&self.y).map(|(a, b)| a - b).collect();
        let gd = self.gx(&d);
        let quad: f64 = d.iter().zip(&gd).map(|(a, b)| a * b).sum::<f64>() + self.residual;
        f + 0.5 * self.w * quad
    }

    /// Gradient and tridiagonal Hessian `(diag, off)`.
    fn derivatives(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = x.len();
        let m = &self.grid.m;
        let mut g = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut e = vec![0.0; n - 1];
        for i in 0..n - 1 {
            let (a, b) = (x[i], x[i + 1]);
            let len = b - a;
            let mi = m[i];
            let avg = self.pot.interval_average(a, b);
            g[i] += mi / len + mi * avg.grad[0];
            g[i + 1] += -mi / len + mi * avg.grad[1];
            let c = mi / (len * len);
            d[i] += c + mi * avg.hess[0];
            d[i + 1] += c + mi * avg.hess[2];
            e[i] += -c + mi * avg.hess[1];
        }
        let gx = self.gx(x);
        for j in 0..n {
            g[j] += self.w * (gx[j] - self.b[j]);
            let left = if j > 0 { m[j - 1] } else { 0.0 };
            let right = if j + 1 < n { m[j] } else { 0.0 };
            d[j] += self.w * (left + right) / 3.0;
            if j + 1 < n {
                e[j] += self.w * right / 6.0;
            }
        }
        (g, d, e)
    }

    /// Damped Newton with an active set on the two end knots.
    pub fn solve(&self, start: Vec<f64>, tol: f64, max_iters: usize) -> StepOutcome {
        let n = start.len();
        let mut x = start;
        self.make_feasible(&mut x);
        let mut fx = self.objective(&x);
        let mut dec = f64::INFINITY;
        let mut prev_dec = f64::INFINITY;
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iters {
            let (g, d0, e0) = self.derivatives(&x);
            let mut fix_lo = x[0] <= self.lo && g[0] > 0.0;
            let mut fix_hi = x[n - 1] >= self.hi && g[n - 1] < 0.0;
            let dir = loop {
                let (mut d, mut e) = (d0.clone(), e0.clone());
                let mut rhs: Vec<f64> = g.iter().map(|v| -v).collect();
                for (fixed, j) in [(fix_lo, 0), (fix_hi, n - 1)] {
                    if fixed {
                        d[j] = 1.0;
                        rhs[j] = 0.0;
                        if j > 0 {
                            e[j - 1] = 0.0;
                        }
                        if j < n - 1 {
                            e[j] = 0.0;
                        }
                    }
                }
                let dir = thomas(&d, &e, &rhs);
                // a knot sitting on the boundary and pushed outward joins the active set
                let out_lo = !fix_lo && x[0] <= self.lo && dir[0] < 0.0;
                let out_hi = !fix_hi && x[n - 1] >= self.hi && dir[n - 1] > 0.0;
                if !(out_lo || out_hi) {
                    break dir;
                }
                fix_lo |= out_lo;
                fix_hi |= out_hi;
            };
            dec = -dir.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>();
            if !(dec > tol) {
                converged = dec.is_finite();
                break;
            }
            // rounding floor: the decrement no longer shrinks
            if dec < 1e-14 && dec > 0.25 * prev_dec {
                converged = true;
                break;
            }
            prev_dec = dec;
            iterations += 1;

            let mut alpha: f64 = 1.0;
            for i in 0..n - 1 {
                let shrink = dir[i + 1] - dir[i];
                if shrink < 0.0 {
                    alpha = alpha.min(0.95 * (x[i + 1] - x[i]) / -shrink);
                }
            }
            let mut clamp_lo = false;
            let mut clamp_hi = false;
            if dir[0] < 0.0 && self.lo.is_finite() {
                let a = (self.lo - x[0]) / dir[0];
                if a <= alpha {
                    alpha = a;
                    clamp_lo = true;
                }
            }
            if dir[n - 1] > 0.0 && self.hi.is_finite() {
                let a = (self.hi - x[n - 1]) / dir[n - 1];
                if a <= alpha {
                    alpha = a;
                    clamp_hi = true;
                }
            }
            let alpha0 = alpha;
            let trial = |a: f64| {
                let mut y: Vec<f64> = x.iter().zip(&dir).map(|(p, q)| p + a * q).collect();
                if a == alpha0 {
                    if clamp_lo {
                        y[0] = self.lo;
                    }
                    if clamp_hi {
                        y[n - 1] = self.hi;
                    }
                }
                y[0] = y[0].max(self.lo);
                y[n - 1] = y[n - 1].min(self.hi);
                y
            };
            let mut accepted = false;
            let mut a = alpha;
            for _ in 0..60 {
                let y = trial(a);
                let fy = self.objective(&y);
                // near the optimum take the full step: objective differences are rounding noise
                if fy <= fx - 1e-4 * a * dec || (dec < 1e-10 && fy.is_finite() && a == alpha0) {
                    x = y;
                    fx = fy;
                    accepted = true;
                    break;
                }
                a *= 0.5;
            }
            if !accepted {
                converged = dec < 1e-10;
                break;
            }
        }
        StepOutcome {
            state: LagrangianState {
                grid: Arc::clone(self.grid),
                x,
            },
            iterations,
            decrement: dec,
            converged,
        }
    }

    fn make_feasible(&self, x: &mut [f64]) {
        let n = x.len();
        if self.lo.is_finite() && self.hi.is_finite() {
            // squeeze into the box keeping the order
            let (a, b) = (x[0], x[n - 1]);
            if a < self.lo || b > self.hi {
                let (na, nb) = (a.max(self.lo), b.min(self.hi));
                let (na, nb) = if nb > na {
                    (na, nb)
                } else {
                    (self.lo, self.hi)
                };
                let scale = if b > a { (nb - na) / (b - a) } else { 0.0 };
                for v in x.iter_mut() {
                    *v = na + (*v - a) * scale;
                }
            }
        } else if self.lo.is_finite() {
            let shift = (self.lo - x[0]).max(0.0);
            x.iter_mut().for_each(|v| *v += shift);
        } else if self.hi.is_finite() {
            let shift = (x[n - 1] - self.hi).max(0.0);
            x.iter_mut().for_each(|v| *v -= shift);
        }
        let span = (x[n - 1] - x[0]).max(1e-6);
        for i in 1..n {
            if x[i] <= x[i - 1] {
                x[i] = x[i - 1] + 1e-9 * span;
            }
        }
        if x[n - 1] > self.hi {
            // ran out of room: spread evenly
            for (i, v) in x.iter_mut().enumerate() {
                *v = self.lo + (self.hi - self.lo) * self.grid.s[i];
            }
        }
    }
}

/// Solves a symmetric tridiagonal system (`diag`, `off`) by the Thomas algorithm.
pub(crate) fn thomas(diag: &[f64], off: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    d[0] = rhs[0] / beta;
    for i in 1..n {
        c[i - 1] = off[i - 1] / beta;
        beta = diag[i] - off[i - 1] * c[i - 1];
        d[i] = (rhs[i] - off[i - 1] * d[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// A random state on `grid` with log-normal cell densities, centred near
/// `center` with spread about `scale`, clipped into the reference domain.
pub fn random_state(grid: &Arc<MassGrid>, gamma: &ReferenceMeasure, center: f64, scale: f64, rng: &mut impl Rng) -> LagrangianState {
    let (lo, hi) = gamma.potential().domain();
    let m = grid.masses();
    let mut widths: Vec<f64> = m
        .iter()
        .map(|&mi| {
            let z: f64 = rng.random_range(-1.0..1.0);
            mi * (1.5 * z).exp()
        })
        .collect();
    let total: f64 = widths.iter().sum();
    let mut span = 2.0 * scale * rng.random_range(0.5..1.5);
    if lo.is_finite() && hi.is_finite() {
        span = span.min(0.999 * (hi - lo));
    }
    widths.iter_mut().for_each(|w| *w *= span / total);
    let mut start = center - 0.5 * span + scale * rng.random_range(-0.5..0.5);
    if lo.is_finite() {
        start = start.max(lo + 1e-3 * span);
    }
    if hi.is_finite() {
        start = start.min(hi - span * 1.0005);
    }
    let mut x = Vec::with_capacity(m.len() + 1);
    x.push(start);
    for w in widths {
        let last = *x.last().unwrap();
        x.push(last + w);
    }
    LagrangianState {
        grid: Arc::clone(grid),
        x,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{discretize_reference, ConvexPotential, GridSpec};

    #[test]
    fn thomas_matches_dense() {
        let d = [4.0, 5.0, 6.0];
        let e = [1.0, 2.0];
        let x = thomas(&d, &e, &[1.0, 2.0, 3.0]);
        let r0 = 4.0 * x[0] + x[1];
        let r1 = x[0] + 5.0 * x[1] + 2.0 * x[2];
        let r2 = 2.0 * x[1] + 6.0 * x[2];
        assert!((r0 - 1.0).abs() < 1e-14 && (r1 - 2.0).abs() < 1e-14 && (r2 - 3.0).abs() < 1e-14);
    }

    #[test]
    fn projection_reproduces_states_on_the_grid() {
        let grid = Arc::new(MassGrid::new(8, &[0.3]).unwrap());
        let x: Vec<f64> = grid.knots().iter().map(|s| (3.0 * s).sinh()).collect();
        let st = LagrangianState::new(Arc::clone(&grid), x.clone()).unwrap();
        let (b, c) = grid.project(&st.quantile());
        // b = G x and c = xᵀGx when the prior lives on the grid
        let g = Arc::new(discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(50)).unwrap());
        let p = StepProblem::new(&g, &grid, &st.quantile(), 1.0);
        let gx = p.gx(&x);
        for j in 0..x.len() {
            assert!((gx[j] - b[j]).abs() < 1e-14, "{j}");
        }
        let xgx: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        assert!((xgx - c).abs() < 1e-13);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = discretize_reference(&ConvexPotential::quartic(1.0, 1.0), &GridSpec::new(50)).unwrap();
        let grid = Arc::new(MassGrid::new(6, &[]).unwrap());
        let prior = QuantileFunction::from_knots(&[0.0, 1.0], &[-1.0, 1.5]).unwrap();
        let p = StepProblem::new(&g, &grid, &prior, 10.0);
        let x: Vec<f64> = grid.knots().iter().map(|s| -1.2 + 2.0 * s + 0.3 * s * s).collect();
        let (gr, d, e) = p.derivatives(&x);
        let n = x.len();
        for j in [0, n / 4, n / 2, 3 * n / 4, n - 1] {
            // the tail knots are very close together
            let gap_l = if j > 0 { x[j] - x[j - 1] } else { f64::INFINITY };
            let gap_r = if j + 1 < x.len() { x[j + 1] - x[j] } else { f64::INFINITY };
            let h = 1e-6f64.min(1e-3 * gap_l.min(gap_r));
            // the difference quotient loses digits when h is that small
            let rel = if h < 1e-6 { 1e-4 } else { 1e-5 };
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.objective(&xp) - p.objective(&xm)) / (2.0 * h);
            assert!((fd - gr[j]).abs() < rel * (1.0 + gr[j].abs()), "grad {j}: {fd} vs {}", gr[j]);
            let (gp, _, _) = p.derivatives(&xp);
            let (gm, _, _) = p.derivatives(&xm);
            let hd = (gp[j] - gm[j]) / (2.0 * h);
            assert!((hd - d[j]).abs() < 1e-4 * (1.0 + d[j].abs()));
            if j + 1 < x.len() {
                let ho = (gp[j + 1] - gm[j + 1]) / (2.0 * h);
                assert!((ho - e[j]).abs() < 1e-4 * (1.0 + e[j].abs()));
            }
        }
    }
}
