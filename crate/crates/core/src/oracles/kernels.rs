use std::f64::consts::PI;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};

/// Law of the Ornstein–Uhlenbeck process `dX = −X dt + √2 dW` at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OuMoments {
    pub mean: f64,
    pub variance: f64,
}

pub fn ou_transition_exact(x: f64, t: f64) -> Result<OuMoments> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    Ok(OuMoments {
        mean: x * (-t).exp(),
        variance: -(-2.0 * t).exp_m1(),
    })
}

/// Masses of `N(mean, variance)` on the cells of `edges`, the outer tails
/// folded into the end cells.
pub fn gaussian_cell_masses(edges: &[f64], mean: f64, variance: f64) -> Result<Vec<f64>> {
    if !(variance > 0.0) {
        return Err(Error::InvalidArgument(format!("variance must be positive, got {variance}")));
    }
    let n = Normal::new(mean, variance.sqrt()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let last = edges.len() - 1;
    let mut out = Vec::with_capacity(last);
    let mut prev = 0.0;
    for (j, &e) in edges.iter().enumerate().skip(1) {
        let f = if j == last { 1.0 } else { n.cdf(e) };
        out.push(f - prev);
        prev = f;
    }
    Ok(out)
}

/// Truncated cosine series and a bound on what was dropped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub terms: usize,
    pub tail_bound: f64,
}

/// `Σ_{k>K} 2e^{−k²π²s}`, bounded by a geometric series.
fn tail(k_max: usize, s: f64) -> f64 {
    let k1 = (k_max + 1) as f64;
    2.0 * (-k1 * k1 * PI * PI * s).exp() / (1.0 - (-(2.0 * k1 + 1.0) * PI * PI * s).exp())
}

/// Smallest number of terms whose tail bound is below `tol` (capped at `cap`).
pub fn neumann_terms_for(t: f64, tol: f64, cap: usize) -> usize {
    let mut k = 1;
    while k < cap && tail(k, t) > tol {
        k += 1;
    }
    k
}

/// Transition density of reflected Brownian motion `dX = √2 dW` on `[0, 1]`:
/// `1 + 2Σ_{k≤K} e^{−k²π²t} cos(kπx) cos(kπy)`.
pub fn neumann_uniform_kernel(x: f64, y: f64, t: f64, terms: usize) -> Result<SeriesValue> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("time must be positive, got {t}")));
    }
    if !((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y)) {
        return Err(Error::InvalidArgument(format!("points ({x}, {y}) outside [0, 1]")));
    }
    let mut v = 1.0;
    for k in 1..=terms {
        let kp = k as f64 * PI;
        v += 2.0 * (-kp * kp * t).exp() * (kp * x).cos() * (kp * y).cos();
    }
    Ok(SeriesValue {
        value: v,
        terms,
        tail_bound: tail(terms, t),
    })
}

/// Cell masses at time `t` of reflected Brownian motion on `[lo, hi]`
/// started uniformly on `[a, b]` (a point when `a == b`).
pub fn neumann_cell_masses(edges: &[f64], lo: f64, hi: f64, a: f64, b: f64, t: f64, tol: f64) -> Result<(Vec<f64>, f64)> {
    if !(hi > lo && t > 0.0) {
        return Err(Error::InvalidArgument("need lo < hi and t > 0".into()));
    }
    let len = hi - lo;
    let s = t / (len * len);
    let terms = neumann_terms_for(s, tol, 100_000);
    let (ua, ub) = ((a - lo) / len, (b - lo) / len);
    let start: Vec<f64> = (1..=terms)
        .map(|k| {
            let kp = k as f64 * PI;
            let damp = (-kp * kp * s).exp();
            let c = if ub > ua {
                ((kp * ub).sin() - (kp * ua).sin()) / (kp * (ub - ua))
            } else {
                (kp * ua).cos()
            };
            2.0 * damp * c
        })
        .collect();
    let antideriv = |u: f64| -> f64 {
        let mut v = u;
        for (i, c) in start.iter().enumerate() {
            let kp = (i + 1) as f64 * PI;
            v += c * (kp * u).sin() / kp;
        }
        v
    };
    let mut out = Vec::with_capacity(edges.len() - 1);
    let mut prev = antideriv(((edges[0] - lo) / len).clamp(0.0, 1.0));
    for &e in &edges[1..] {
        let f = antideriv(((e - lo) / len).clamp(0.0, 1.0));
        out.push(f - prev);
        prev = f;
    }
    Ok((out, tail(terms, s)))
}
