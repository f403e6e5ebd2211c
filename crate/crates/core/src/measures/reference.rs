use serde::{Deserialize, Serialize};

use super::{ConvexPotential, DiscreteMeasure, Potential};
use crate::error::{Error, Result};
use crate::quad::integrate_with_breaks;

/// Grid bounds are placed where `V` exceeds its minimum by this much.
pub const TRUNCATION_GAP: f64 = 40.0;

const TAIL_LIMIT: f64 = 1e-12;

/// Uniform cell-centred grid: `n` cells on `bounds`, or on automatic bounds
/// (the box itself, or the sublevel set `{V ≤ min V + 40}`) when omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
}

impl GridSpec {
    pub fn new(n: usize) -> Self {
        Self { n, bounds: None }
    }

    pub fn with_bounds(n: usize, lo: f64, hi: f64) -> Self {
        Self {
            n,
            bounds: Some((lo, hi)),
        }
    }
}

/// Log-concave probability `γ = e^{-V}/Z` and its cell-centred discretization.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceMeasure {
    potential: Potential,
    grid: Vec<f64>,
    weights: Vec<f64>,
    log_partition: f64,
    lo: f64,
    hi: f64,
    tail_mass: f64,
}

/// Discretizes `e^{-V}` on a grid, with weights `∝ e^{-V(xᵢ)}·h` and `ln Z`
/// computed by adaptive quadrature of the continuum density.
pub fn discretize_reference(potential: &ConvexPotential, spec: &GridSpec) -> Result<ReferenceMeasure> {
    let pot = potential.compile()?;
    pot.check_integrable()?;
    if spec.n < 2 {
        return Err(Error::InvalidArgument(format!("grid needs n >= 2, got {}", spec.n)));
    }
    let vmin = pot.min_value();
    let (dlo, dhi) = pot.domain();
    let (lo, hi) = match spec.bounds {
        Some((lo, hi)) => {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!("bad grid bounds [{lo}, {hi}]")));
            }
            (lo, hi)
        }
        None if pot.is_bounded() => (dlo, dhi),
        None => sublevel_bounds(&pot, vmin + TRUNCATION_GAP),
    };

    let z_scaled = scaled_partition(&pot, vmin)?;
    let tail_mass = tail_mass(&pot, vmin, lo, hi)? / z_scaled;
    if !(tail_mass < TAIL_LIMIT) {
        return Err(Error::InvalidArgument(format!(
            "grid bounds [{lo}, {hi}] leave reference mass {tail_mass:e} outside (limit {TAIL_LIMIT:e})"
        )));
    }

    let h = (hi - lo) / spec.n as f64;
    let grid: Vec<f64> = (0..spec.n).map(|i| lo + (i as f64 + 0.5) * h).collect();
    let mut weights: Vec<f64> = grid
        .iter()
        .map(|&x| {
            let v = pot.value(x);
            if v.is_finite() {
                (-(v - vmin)).exp()
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptySupport);
    }
    weights.iter_mut().for_each(|w| *w /= total);

    Ok(ReferenceMeasure {
        potential: pot,
        grid,
        weights,
        log_partition: z_scaled.ln() - vmin,
        lo,
        hi,
        tail_mass,
    })
}

/// Interval outside of which `V > level`.
pub(crate) fn sublevel_bounds(pot: &Potential, level: f64) -> (f64, f64) {
    let c = pot.argmin();
    let find = |dir: f64| {
        let mut step = 1.0;
        while pot.value(c + dir * step) <= level {
            step *= 2.0;
        }
        let (mut a, mut b) = (0.0, step);
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if pot.value(c + dir * m) <= level {
                a = m;
            } else {
                b = m;
            }
        }
        c + dir * b
    };
    (find(-1.0), find(1.0))
}

/// `∫ e^{-(V - min V)}` over the whole line.
fn scaled_partition(pot: &Potential, vmin: f64) -> Result<f64> {
    let (a, b) = if pot.is_bounded() {
        pot.domain()
    } else {
        sublevel_bounds(pot, vmin + 60.0)
    };
    let f = |x: f64| {
        let v = pot.value(x);
        if v.is_finite() {
            (-(v - vmin)).exp()
        } else {
            0.0
        }
    };
    let z = integrate_with_breaks(f, a, b, &pot.kinks(), 1e-15 * (b - a));
    if !(z.is_finite() && z > 0.0) {
        return Err(Error::EmptySupport);
    }
    Ok(z)
}

/// Upper bound on `∫ e^{-(V - min V)}` outside `[lo, hi]`.
///
/// Beyond a point where `V` is increasing, convexity gives
/// `∫_R^∞ e^{-V} ≤ e^{-V(R)} / V'(R)`; inside a box the missing part is integrated.
fn tail_mass(pot: &Potential, vmin: f64, lo: f64, hi: f64) -> Result<f64> {
    let f = |x: f64| {
        let v = pot.value(x);
        if v.is_finite() {
            (-(v - vmin)).exp()
        } else {
            0.0
        }
    };
    if pot.is_bounded() {
        let (dlo, dhi) = pot.domain();
        let mut t = 0.0;
        if lo > dlo {
            t += integrate_with_breaks(f, dlo, lo.min(dhi), &pot.kinks(), 1e-18);
        }
        if hi < dhi {
            t += integrate_with_breaks(f, hi.max(dlo), dhi, &pot.kinks(), 1e-18);
        }
        return Ok(t);
    }
    let right_slope = pot.derivative(hi);
    let left_slope = pot.derivative_left(lo);
    if right_slope <= 0.0 || left_slope >= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(f(hi) / right_slope + f(lo) / -left_slope)
}

impl ReferenceMeasure {
    pub fn potential(&self) -> &Potential {
        &self.potential
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `ln Z` of the continuum density `e^{-V}`.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn cell_width(&self) -> f64 {
        (self.hi - self.lo) / self.grid.len() as f64
    }

    /// Bound on the continuum mass outside the grid bounds.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn cell_edges(&self, i: usize) -> (f64, f64) {
        let h = self.cell_width();
        (self.lo + i as f64 * h, self.lo + (i + 1) as f64 * h)
    }

    /// All `n + 1` cell edges.
    pub fn edges(&self) -> Vec<f64> {
        let h = self.cell_width();
        (0..=self.grid.len()).map(|i| self.lo + i as f64 * h).collect()
    }

    /// Continuum density `e^{-V(x)}/Z`.
    pub fn density(&self, x: f64) -> f64 {
        let v = self.potential.value(x);
        if v.is_finite() {
            (-(v + self.log_partition)).exp()
        } else {
            0.0
        }
    }

    /// γ itself as a discrete measure on the grid.
    pub fn as_measure(&self) -> DiscreteMeasure {
        DiscreteMeasure::new(1, self.grid.clone(), self.weights.clone()).expect("normalized at construction")
    }

    /// Grid measure with the given (unnormalized) weights.
    pub fn measure_from_weights(&self, weights: Vec<f64>) -> Result<DiscreteMeasure> {
        if weights.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        DiscreteMeasure::from_unnormalized(1, self.grid.clone(), weights)
    }

    /// Grid index of an exact grid point.
    pub fn index_of(&self, x: f64) -> Option<usize> {
        let h = self.cell_width();
        let r = ((x - self.lo) / h - 0.5).round();
        if r < 0.0 || r >= self.len() as f64 {
            return None;
        }
        let i = r as usize;
        ((self.grid[i] - x).abs() <= 1e-9 * h).then_some(i)
    }

    /// Index of the cell containing `x`, clamped to the grid.
    pub fn cell_index(&self, x: f64) -> usize {
        let h = self.cell_width();
        let i = ((x - self.lo) / h).floor();
        i.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    /// Nearest grid point carrying positive reference mass.
    pub fn nearest_support_index(&self, x: f64) -> usize {
        let start = self.cell_index(x);
        if self.weights[start] > 0.0 {
            return start;
        }
        (0..self.len())
            .filter(|&i| self.weights[i] > 0.0)
            .min_by(|&a, &b| (self.grid[a] - x).abs().total_cmp(&(self.grid[b] - x).abs()))
            .unwrap_or(start)
    }

    /// μ's weights indexed by the grid, or `None` if μ charges a point off the grid.
    pub fn align(&self, mu: &DiscreteMeasure) -> Option<Vec<f64>> {
        if mu.dim() != 1 {
            return None;
        }
        let mut out = vec![0.0; self.len()];
        for (p, w) in mu.iter() {
            match self.index_of(p[0]) {
                Some(i) => out[i] += w,
                None if w > 0.0 => return None,
                None => {}
            }
        }
        Some(out)
    }

    /// Grid-indexed weights of the part of μ that sits on the grid.
    pub fn align_partial(&self, mu: &DiscreteMeasure) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        if mu.dim() != 1 {
            return out;
        }
        for (p, w) in mu.iter() {
            if let Some(i) = self.index_of(p[0]) {
                out[i] += w;
            }
        }
        out
    }

    /// Splits each atom linearly between its two neighbouring grid points,
    /// preserving mass (and the mean, away from the ends).
    pub fn bin_linear(&self, points: &[f64], weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let h = self.cell_width();
        let last = self.len() - 1;
        for (&x, &w) in points.iter().zip(weights) {
            let s = (x - self.grid[0]) / h;
            if s <= 0.0 {
                out[0] += w;
            } else if s >= last as f64 {
                out[last] += w;
            } else {
                let i = s.floor() as usize;
                let theta = s - i as f64;
                out[i] += w * (1.0 - theta);
                out[i + 1] += w * theta;
            }
        }
        out
    }

    pub fn support_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }

    /// Discrete log-concavity `γᵢ² ≥ γᵢ₋₁γᵢ₊₁`.
    pub fn is_log_concave(&self) -> bool {
        self.weights
            .windows(3)
            .all(|w| w[1] * w[1] >= w[0] * w[2] * (1.0 - 1e-10))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_gives_uniform_weights() {
        let g = discretize_reference(&ConvexPotential::uniform_box(0.0, 1.0), &GridSpec::new(200)).unwrap();
        assert!(g.weights().iter().all(|&w| (w - 1.0 / 200.0).abs() < 1e-15));
        assert!(g.log_partition().abs() < 1e-14);
        assert_eq!(g.tail_mass(), 0.0);
    }

    #[test]
    fn gaussian_partition_and_weights() {
        let g = discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::with_bounds(400, -8.0, 8.0))
            .unwrap();
        let ln_z = (2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((g.log_partition() - ln_z).abs() < 1e-12);
        let i = g.cell_index(0.3);
        let expected = (-0.5 * g.grid()[i].powi(2) - ln_z).exp() * g.cell_width();
        assert!((g.weights()[i] - expected).abs() < 1e-12);
        assert!(g.is_log_concave());
    }

    #[test]
    fn narrow_bounds_are_rejected() {
        let r = discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::with_bounds(100, -3.0, 3.0));
        assert!(r.is_err());
    }

    #[test]
    fn non_integrable_is_rejected() {
        let r = discretize_reference(&ConvexPotential::affine_max(vec![(1.0, 0.0)]), &GridSpec::new(10));
        assert!(matches!(r, Err(Error::NotIntegrable(_))));
    }

    #[test]
    fn automatic_bounds_follow_truncation_gap() {
        let g = discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(100)).unwrap();
        let (lo, hi) = g.bounds();
        assert!((hi - 80f64.sqrt()).abs() < 1e-9 && (lo + hi).abs() < 1e-9);
    }

    #[test]
    fn index_lookup_and_binning() {
        let g = discretize_reference(&ConvexPotential::uniform_box(0.0, 1.0), &GridSpec::new(10)).unwrap();
        assert_eq!(g.index_of(0.35), Some(3));
        assert_eq!(g.index_of(0.36), None);
        let b = g.bin_linear(&[0.4], &[1.0]);
        assert!((b[3] - 0.5).abs() < 1e-12 && (b[4] - 0.5).abs() < 1e-12);
    }
}
