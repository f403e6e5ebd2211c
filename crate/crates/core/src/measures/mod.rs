//! Discrete probability measures, log-concave references and relative entropy.

mod potential;
mod reference;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use potential::{ConvexPotential, IntervalAverage, Potential};
pub use reference::{discretize_reference, GridSpec, ReferenceMeasure, TRUNCATION_GAP};
pub(crate) use reference::sublevel_bounds;

const MASS_TOL: f64 = 1e-12;

/// Weighted point cloud in `ℝ^k`, `k ∈ {1, 2}`, with optional quadratic norm.
///
/// Points are stored flattened, `k` coordinates per atom.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    points: Vec<f64>,
    weights: Vec<f64>,
    norm: Option<NormSpec>,
}

impl DiscreteMeasure {
    /// Builds a measure whose weights already sum to one within `1e-12`.
    pub fn new(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if points.len() != dim * weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates for {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        if weights.is_empty() {
            return Err(Error::InvalidMeasure("measure has no atoms".into()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidMeasure("support points must be finite".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure("weights must be finite and nonnegative".into()));
        }
        let total = compensated_sum(&weights);
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!("weights sum to {total}, not 1")));
        }
        let m = Self {
            dim,
            points,
            weights,
            norm: None,
        };
        m.check_distinct()?;
        Ok(m)
    }

    /// Normalizes nonnegative weights to unit mass.
    pub fn from_unnormalized(dim: usize, points: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        let total = compensated_sum(&weights);
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!("total mass {total} cannot be normalized")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        Self::new(dim, points, weights)
    }

    /// Like [`from_unnormalized`](Self::from_unnormalized) but merges atoms
    /// at identical points instead of rejecting them.
    pub fn from_atoms(dim: usize, points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if points.len() != dim * weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} coordinates for {} weights in dimension {dim}",
                points.len(),
                weights.len()
            )));
        }
        let mut idx: Vec<usize> = (0..weights.len()).collect();
        let key = |i: usize| &points[i * dim..(i + 1) * dim];
        idx.sort_by(|&a, &b| {
            key(a)
                .iter()
                .zip(key(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let mut pts: Vec<f64> = Vec::with_capacity(points.len());
        let mut ws: Vec<f64> = Vec::with_capacity(weights.len());
        for i in idx {
            if !ws.is_empty() && pts[pts.len() - dim..] == *key(i) {
                *ws.last_mut().unwrap() += weights[i];
            } else {
                pts.extend_from_slice(key(i));
                ws.push(weights[i]);
            }
        }
        Self::from_unnormalized(dim, pts, ws)
    }

    /// One-dimensional measure.
    pub fn on_line(points: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        Self::from_unnormalized(1, points, weights)
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::new(point.len(), point.to_vec(), vec![1.0])
    }

    /// Equal-weight empirical measure of 1-D samples; repeated values are merged.
    pub fn empirical_1d(samples: &[f64]) -> Result<Self> {
        let mut xs = samples.to_vec();
        xs.sort_by(f64::total_cmp);
        let mut pts: Vec<f64> = Vec::new();
        let mut ws: Vec<f64> = Vec::new();
        for x in xs {
            match pts.last() {
                Some(&last) if last == x => *ws.last_mut().unwrap() += 1.0,
                _ => {
                    pts.push(x);
                    ws.push(1.0);
                }
            }
        }
        Self::from_unnormalized(1, pts, ws)
    }

    pub fn with_norm(mut self, norm: NormSpec) -> Result<Self> {
        if norm.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: norm.dim(),
            });
        }
        self.norm = Some(norm);
        Ok(self)
    }

    fn check_distinct(&self) -> Result<()> {
        let k = self.dim;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            self.point(a)
                .iter()
                .zip(self.point(b))
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for w in idx.windows(2) {
            if self.points[w[0] * k..(w[0] + 1) * k] == self.points[w[1] * k..(w[1] + 1) * k] {
                return Err(Error::InvalidMeasure(format!(
                    "support points {} and {} coincide",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Flattened coordinates.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn norm(&self) -> Option<&NormSpec> {
        self.norm.as_ref()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.points.chunks(self.dim).zip(self.weights.iter().copied())
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.iter() {
            for (mi, pi) in m.iter_mut().zip(p) {
                *mi += w * pi;
            }
        }
        m
    }

    /// `∫ f dμ`.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> f64 {
        self.iter().map(|(p, w)| if w > 0.0 { w * f(p) } else { 0.0 }).sum()
    }

    /// Drops zero-weight atoms.
    pub fn trimmed(&self) -> Self {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (p, w) in self.iter() {
            if w > 0.0 {
                points.extend_from_slice(p);
                weights.push(w);
            }
        }
        Self {
            dim: self.dim,
            points,
            weights,
            norm: self.norm.clone(),
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("dimension must be 1 or 2, got {dim}")))
    }
}

/// Quadratic form `‖h‖_A² = hᵀAh` with equivalence constant `κ`:
/// `‖h‖/κ ≤ ‖h‖_A ≤ κ‖h‖`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    dim: usize,
    /// Row-major `dim × dim`.
    matrix: Vec<f64>,
    kappa: f64,
}

impl NormSpec {
    /// Validates symmetry and positive definiteness; `κ` is the smallest
    /// admissible constant, read off the extreme eigenvalues.
    pub fn new(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        check_dim(dim)?;
        if matrix.len() != dim * dim || matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("norm matrix must be finite and dim × dim".into()));
        }
        if dim == 2 && (matrix[1] - matrix[2]).abs() > 1e-12 * (matrix[1].abs() + 1.0) {
            return Err(Error::InvalidArgument("norm matrix must be symmetric".into()));
        }
        let (lmin, lmax) = eigen_range(dim, &matrix);
        if lmin <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "norm matrix must be positive definite (smallest eigenvalue {lmin})"
            )));
        }
        let kappa = 1f64.max(lmax.sqrt()).max(1.0 / lmin.sqrt());
        Ok(Self { dim, matrix, kappa })
    }

    /// Uses a caller-supplied `κ`, rejected unless the eigenvalue bounds confirm it.
    pub fn with_kappa(dim: usize, matrix: Vec<f64>, kappa: f64) -> Result<Self> {
        let spec = Self::new(dim, matrix)?;
        if kappa + 1e-12 < spec.kappa {
            return Err(Error::InvalidArgument(format!(
                "κ = {kappa} is too small; eigenvalues need at least {}",
                spec.kappa
            )));
        }
        Ok(Self { kappa, ..spec })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0).expect("identity is SPD")
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Result<Self> {
        let mut m = vec![0.0; dim * dim];
        for i in 0..dim {
            m[i * dim + i] = c;
        }
        Self::new(dim, m)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Smallest and largest eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        eigen_range(self.dim, &self.matrix)
    }

    pub fn norm_sq(&self, h: &[f64]) -> f64 {
        let k = self.dim;
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                s += h[i] * self.matrix[i * k + j] * h[j];
            }
        }
        s
    }

    pub fn norm(&self, h: &[f64]) -> f64 {
        self.norm_sq(h).sqrt()
    }
}

fn eigen_range(dim: usize, m: &[f64]) -> (f64, f64) {
    if dim == 1 {
        return (m[0], m[0]);
    }
    let (a, b, d) = (m[0], 0.5 * (m[1] + m[2]), m[3]);
    let mean = 0.5 * (a + d);
    let r = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - r, mean + r)
}

/// Squared distance between two points, Euclidean or under `norm`.
pub fn sq_dist(x: &[f64], y: &[f64], norm: Option<&NormSpec>) -> f64 {
    match norm {
        None => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
        Some(n) => {
            let h: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
            n.norm_sq(&h)
        }
    }
}

/// Relative entropy on the extended half-line `[0, +∞]`.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EntropyValue(f64);

impl EntropyValue {
    pub const INFINITE: Self = Self(f64::INFINITY);

    /// Clamps round-off below zero; the functional is nonnegative.
    pub fn new(v: f64) -> Self {
        Self(if v < 0.0 { 0.0 } else { v })
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }
}

impl fmt::Display for EntropyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_finite() {
            write!(f, "{}", self.0)
        } else {
            f.write_str("+inf")
        }
    }
}

/// `H(μ|γ) = Σ μᵢ ln(μᵢ/γᵢ)` on γ's grid; `+∞` when μ charges a point where
/// γ vanishes or a point off the grid.
pub fn relative_entropy(mu: &DiscreteMeasure, gamma: &ReferenceMeasure) -> EntropyValue {
    match gamma.align(mu) {
        Some(w) => grid_relative_entropy(&w, gamma.weights()),
        None => EntropyValue::INFINITE,
    }
}

/// Relative entropy between two weight vectors on the same grid.
pub fn grid_relative_entropy(mu: &[f64], gamma: &[f64]) -> EntropyValue {
    let mut h = 0.0;
    for (&m, &g) in mu.iter().zip(gamma) {
        if m > 0.0 {
            if g <= 0.0 {
                return EntropyValue::INFINITE;
            }
            h += m * (m / g).ln();
        }
    }
    EntropyValue::new(h)
}

/// Lower bound `∫S dμ − ∫(e^S − 1) dγ` from the variational formula of
/// relative entropy. `test_fn` is indexed by γ's grid; mass of μ off the grid
/// sees `S = 0`.
pub fn entropy_duality_bound(mu: &DiscreteMeasure, gamma: &ReferenceMeasure, test_fn: &[f64]) -> f64 {
    let on_grid = gamma.align_partial(mu);
    let lin: f64 = on_grid.iter().zip(test_fn).map(|(m, s)| m * s).sum();
    let exp: f64 = gamma
        .weights()
        .iter()
        .zip(test_fn)
        .map(|(g, s)| g * s.exp_m1())
        .sum();
    lin - exp
}

/// `∫‖x‖² dμ`, under `norm` if given, else μ's own norm, else Euclidean.
pub fn second_moment(mu: &DiscreteMeasure, norm: Option<&NormSpec>) -> f64 {
    let norm = norm.or(mu.norm());
    let origin = vec![0.0; mu.dim()];
    mu.integrate(|p| sq_dist(p, &origin, norm))
}

/// Both sides of `ν(E) ln(ν(E)/γ(E)) ≤ H(ν|γ) + γ(Eᶜ)/e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SetBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Checks the set-entropy inequality for the grid index set `set`.
pub fn entropy_set_bound_check(nu: &DiscreteMeasure, gamma: &ReferenceMeasure, set: &[usize]) -> SetBoundCheck {
    let h = relative_entropy(nu, gamma).value();
    let on_grid = gamma.align_partial(nu);
    let mut in_set = vec![false; gamma.len()];
    for &i in set {
        if i < in_set.len() {
            in_set[i] = true;
        }
    }
    let (mut nu_e, mut gamma_e) = (0.0, 0.0);
    for i in 0..gamma.len() {
        if in_set[i] {
            nu_e += on_grid[i];
            gamma_e += gamma.weights()[i];
        }
    }
    let lhs = if nu_e <= 0.0 {
        0.0
    } else if gamma_e <= 0.0 {
        f64::INFINITY
    } else {
        nu_e * (nu_e / gamma_e).ln()
    };
    let rhs = h + (1.0 - gamma_e).max(0.0) / std::f64::consts::E;
    let holds = if lhs.is_infinite() {
        h.is_infinite()
    } else {
        lhs <= rhs + 1e-12
    };
    SetBoundCheck { lhs, rhs, holds }
}

/// Neumaier summation; long weight vectors otherwise drift past the mass tolerance.
pub(crate) fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_weights() {
        assert!(DiscreteMeasure::new(1, vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(DiscreteMeasure::new(1, vec![0.0, 1.0], vec![1.5, -0.5]).is_err());
        assert!(DiscreteMeasure::new(1, vec![1.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(DiscreteMeasure::new(3, vec![0.0; 3], vec![1.0]).is_err());
    }

    #[test]
    fn second_moment_examples() {
        let d = DiscreteMeasure::dirac(&[0.0]).unwrap();
        assert_eq!(second_moment(&d, None), 0.0);
        let m = DiscreteMeasure::new(2, vec![0.0, 0.0, 3.0, 4.0], vec![0.5, 0.5]).unwrap();
        assert!((second_moment(&m, None) - 12.5).abs() < 1e-15);
        let a = NormSpec::scaled_identity(2, 2.0).unwrap();
        assert!((second_moment(&m, Some(&a)) - 25.0).abs() < 1e-14);
    }

    #[test]
    fn kappa_from_eigenvalues() {
        let a = NormSpec::new(2, vec![4.0, 0.0, 0.0, 0.25]).unwrap();
        assert!((a.kappa() - 2.0).abs() < 1e-15);
        assert!(NormSpec::with_kappa(2, vec![4.0, 0.0, 0.0, 0.25], 1.5).is_err());
        assert!(NormSpec::new(2, vec![1.0, 2.0, 2.0, 1.0]).is_err());
        let b = NormSpec::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        assert_eq!(b.eigen_range(), (1.0, 3.0));
    }

    #[test]
    fn empirical_merges_ties() {
        let m = DiscreteMeasure::empirical_1d(&[1.0, 0.0, 1.0, 2.0]).unwrap();
        assert_eq!(m.points(), &[0.0, 1.0, 2.0]);
        assert_eq!(m.weights(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn entropy_value_display() {
        assert_eq!(EntropyValue::INFINITE.to_string(), "+inf");
        assert_eq!(EntropyValue::new(-1e-17).value(), 0.0);
    }
}
