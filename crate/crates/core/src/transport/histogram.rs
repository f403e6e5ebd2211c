//! Piecewise-linear quantile functions: exact W₂ between measures with
//! piecewise-constant densities (and atoms) on the line.

use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

/// Quantile segment: `Q(s)` runs linearly from `x0` to `x1` as `s` goes from `s0` to `s1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub s0: f64,
    pub s1: f64,
    pub x0: f64,
    pub x1: f64,
}

impl Segment {
    fn at(&self, s: f64) -> f64 {
        if self.s1 == self.s0 {
            return self.x0;
        }
        let t = (s - self.s0) / (self.s1 - self.s0);
        self.x0 + t * (self.x1 - self.x0)
    }
}

/// Nondecreasing, piecewise-linear quantile function on `[0, 1]`, allowed to
/// jump between segments (gaps in the support) and to be flat (atoms).
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileFunction {
    segs: Vec<Segment>,
}

impl QuantileFunction {
    /// Continuous quantile through knots `(sᵢ, xᵢ)`.
    pub fn from_knots(s: &[f64], x: &[f64]) -> Result<Self> {
        if s.len() != x.len() || s.len() < 2 {
            return Err(Error::InvalidArgument("quantile needs at least two matching knots".into()));
        }
        let segs = s
            .windows(2)
            .zip(x.windows(2))
            .filter(|(sw, _)| sw[1] > sw[0])
            .map(|(sw, xw)| Segment {
                s0: sw[0],
                s1: sw[1],
                x0: xw[0],
                x1: xw[1],
            })
            .collect();
        Self::checked(segs)
    }

    /// Density `wᵢ / (eᵢ₊₁ − eᵢ)` on each cell of the partition `edges`.
    pub fn from_histogram(edges: &[f64], weights: &[f64]) -> Result<Self> {
        if edges.len() != weights.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: edges.len().saturating_sub(1),
                got: weights.len(),
            });
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidMeasure("histogram has no mass".into()));
        }
        let mut segs = Vec::with_capacity(weights.len());
        let mut s = 0.0;
        for (i, &w) in weights.iter().enumerate() {
            if w > 0.0 {
                let s1 = s + w / total;
                segs.push(Segment {
                    s0: s,
                    s1,
                    x0: edges[i],
                    x1: edges[i + 1],
                });
                s = s1;
            }
        }
        segs.last_mut().unwrap().s1 = 1.0;
        Self::checked(segs)
    }

    /// Step quantile of a 1-D atomic measure.
    pub fn from_atoms(mu: &DiscreteMeasure) -> Result<Self> {
        if mu.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: mu.dim() });
        }
        let mut idx: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
        idx.sort_by(|&a, &b| mu.points()[a].total_cmp(&mu.points()[b]));
        let mut segs = Vec::with_capacity(idx.len());
        let mut s = 0.0;
        for i in idx {
            let x = mu.points()[i];
            let s1 = s + mu.weights()[i];
            segs.push(Segment { s0: s, s1, x0: x, x1: x });
            s = s1;
        }
        segs.last_mut().unwrap().s1 = 1.0;
        Self::checked(segs)
    }

    fn checked(segs: Vec<Segment>) -> Result<Self> {
        if segs.is_empty() {
            return Err(Error::InvalidMeasure("empty quantile function".into()));
        }
        for w in segs.windows(2) {
            if w[1].x0 < w[0].x1 || w[1].s0 < w[0].s1 - 1e-15 {
                return Err(Error::InvalidArgument("quantile function must be nondecreasing".into()));
            }
        }
        if segs.iter().any(|g| g.x1 < g.x0 || !g.x0.is_finite() || !g.x1.is_finite()) {
            return Err(Error::InvalidArgument("quantile segments must be finite and nondecreasing".into()));
        }
        Ok(Self { segs })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segs
    }

    /// `Q(s)` (right-continuous at jumps).
    pub fn eval(&self, s: f64) -> f64 {
        let k = self.segs.partition_point(|g| g.s1 <= s).min(self.segs.len() - 1);
        self.segs[k].at(s)
    }

    /// Segment boundaries in `s`, including 0 and 1.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.segs.iter().map(|g| g.s0).collect();
        b.push(1.0);
        b
    }

    /// Calls `f(u, v, q(u⁺), q(v⁻))` over the pieces of `self` refined by `extra`.
    pub(crate) fn for_each_piece(&self, extra: &[f64], mut f: impl FnMut(f64, f64, f64, f64)) {
        let mut j = 0;
        for g in &self.segs {
            while j < extra.len() && extra[j] <= g.s0 {
                j += 1;
            }
            let mut u = g.s0;
            while j < extra.len() && extra[j] < g.s1 {
                let v = extra[j];
                f(u, v, g.at(u), g.at(v));
                u = v;
                j += 1;
            }
            if g.s1 > u {
                f(u, g.s1, g.at(u), g.at(g.s1));
            }
        }
    }

    /// `∫₀¹ Q(s)² ds`.
    pub fn second_moment(&self) -> f64 {
        self.segs
            .iter()
            .map(|g| (g.s1 - g.s0) / 3.0 * (g.x0 * g.x0 + g.x0 * g.x1 + g.x1 * g.x1))
            .sum()
    }

    /// `F(x) = |{s : Q(s) ≤ x}|`, the distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        let k = self.segs.partition_point(|g| g.x1 <= x);
        if k == self.segs.len() {
            return 1.0;
        }
        let g = &self.segs[k];
        if x < g.x0 {
            return g.s0;
        }
        g.s0 + (g.s1 - g.s0) * (x - g.x0) / (g.x1 - g.x0)
    }
}

/// Exact `W₂` between two measures given by their quantile functions.
pub fn w2_quantiles(a: &QuantileFunction, b: &QuantileFunction) -> f64 {
    let bp = b.breakpoints();
    let mut total = 0.0;
    a.for_each_piece(&bp, |u, v, a0, a1| {
        let mid = 0.5 * (u + v);
        let k = b.segs.partition_point(|g| g.s1 <= mid).min(b.segs.len() - 1);
        let g = &b.segs[k];
        let d0 = a0 - g.at(u);
        let d1 = a1 - g.at(v);
        total += (v - u) / 3.0 * (d0 * d0 + d0 * d1 + d1 * d1);
    });
    total.max(0.0).sqrt()
}

/// `W₂` between two histograms on the same partition, each read as a
/// piecewise-constant density.
pub fn w2_histogram_1d(edges: &[f64], a: &[f64], b: &[f64]) -> Result<f64> {
    Ok(w2_quantiles(
        &QuantileFunction::from_histogram(edges, a)?,
        &QuantileFunction::from_histogram(edges, b)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_shift() {
        let a = QuantileFunction::from_histogram(&[0.0, 1.0], &[1.0]).unwrap();
        let b = QuantileFunction::from_histogram(&[2.0, 3.0], &[1.0]).unwrap();
        assert!((w2_quantiles(&a, &b) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_to_dirac_at_mean() {
        // ∫₀¹ (s − ½)² ds = 1/12
        let a = QuantileFunction::from_histogram(&[0.0, 1.0], &[1.0]).unwrap();
        let d = QuantileFunction::from_atoms(&DiscreteMeasure::dirac(&[0.5]).unwrap()).unwrap();
        assert!((w2_quantiles(&a, &d) - (1.0f64 / 12.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn gaps_and_cdf() {
        let q = QuantileFunction::from_histogram(&[0.0, 1.0, 2.0, 3.0], &[0.5, 0.0, 0.5]).unwrap();
        assert_eq!(q.segments().len(), 2);
        assert!((q.cdf(0.5) - 0.25).abs() < 1e-15);
        assert!((q.cdf(1.5) - 0.5).abs() < 1e-15);
        assert!((q.cdf(2.5) - 0.75).abs() < 1e-15);
        assert_eq!(q.cdf(5.0), 1.0);
        assert!((q.eval(0.75) - 2.5).abs() < 1e-15);
        // symmetric in its arguments, zero on the diagonal
        let r = QuantileFunction::from_histogram(&[0.0, 1.0, 2.0, 3.0], &[0.2, 0.3, 0.5]).unwrap();
        assert!((w2_quantiles(&q, &r) - w2_quantiles(&r, &q)).abs() < 1e-14);
        assert_eq!(w2_quantiles(&q, &q), 0.0);
    }
}
