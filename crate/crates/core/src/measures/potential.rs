//! Convex potentials `V: ℝ → ℝ ∪ {+∞}` defining log-concave references `e^{-V}`.
//!
//! [`ConvexPotential`] is the serializable descriptor; [`Potential`] is the
//! validated evaluator built from it. Piecewise-linear kinds (`abs`,
//! `affine_max`, `tabulated`) share one internal form, which also makes
//! Gaussian mollification of them available in closed form.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quad::{GL5_NODES, GL5_WEIGHTS};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub(crate) fn std_normal_cdf(u: f64) -> f64 {
    0.5 * erfc(-u / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_pdf(u: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * u * u).exp()
}

/// Catalog of convex potentials, tagged by `kind` when serialized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConvexPotential {
    /// `a/2 (x - m)^2`.
    Quadratic { a: f64, m: f64 },
    /// `a x^4/4 + b x^2/2`.
    Quartic { a: f64, b: f64 },
    /// `a |x|`.
    Abs { a: f64 },
    /// `inner` on `[lo, hi]`, `+∞` outside.
    Box {
        lo: f64,
        hi: f64,
        inner: std::boxed::Box<ConvexPotential>,
    },
    /// `max_i (slope_i x + intercept_i)`.
    AffineMax { pieces: Vec<(f64, f64)> },
    /// Piecewise-linear interpolation of `(xs, values)`, extended linearly.
    Tabulated { xs: Vec<f64>, values: Vec<f64> },
    /// `base * N(0, width^2)`; `base` must be finite everywhere.
    Mollified {
        base: std::boxed::Box<ConvexPotential>,
        width: f64,
    },
}

impl ConvexPotential {
    pub fn quadratic(a: f64, m: f64) -> Self {
        Self::Quadratic { a, m }
    }

    pub fn standard_gaussian() -> Self {
        Self::Quadratic { a: 1.0, m: 0.0 }
    }

    pub fn quartic(a: f64, b: f64) -> Self {
        Self::Quartic { a, b }
    }

    pub fn abs(a: f64) -> Self {
        Self::Abs { a }
    }

    /// Uniform reference on `[lo, hi]`.
    pub fn uniform_box(lo: f64, hi: f64) -> Self {
        Self::Box {
            lo,
            hi,
            inner: std::boxed::Box::new(Self::AffineMax {
                pieces: vec![(0.0, 0.0)],
            }),
        }
    }

    pub fn boxed(lo: f64, hi: f64, inner: ConvexPotential) -> Self {
        Self::Box {
            lo,
            hi,
            inner: std::boxed::Box::new(inner),
        }
    }

    pub fn affine_max(pieces: Vec<(f64, f64)>) -> Self {
        Self::AffineMax { pieces }
    }

    pub fn tabulated(xs: Vec<f64>, values: Vec<f64>) -> Self {
        Self::Tabulated { xs, values }
    }

    pub fn mollified(base: ConvexPotential, width: f64) -> Self {
        Self::Mollified {
            base: std::boxed::Box::new(base),
            width,
        }
    }

    /// Validates parameters and builds the evaluator.
    pub fn compile(&self) -> Result<Potential> {
        let form = Form::build(self)?;
        let mut kinks = form.kinks();
        kinks.sort_by(f64::total_cmp);
        Ok(Potential {
            descriptor: self.clone(),
            form,
            kinks,
        })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Self::Quadratic { .. } => "quadratic",
            Self::Quartic { .. } => "quartic",
            Self::Abs { .. } => "abs",
            Self::Box { .. } => "box",
            Self::AffineMax { .. } => "affine_max",
            Self::Tabulated { .. } => "tabulated",
            Self::Mollified { .. } => "mollified",
        }
    }
}

/// Continuous piecewise-linear convex function.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct PwLinear {
    knots: Vec<f64>,
    values: Vec<f64>,
    /// `slopes[j]` holds on the j-th piece; `slopes.len() == knots.len() + 1`.
    slopes: Vec<f64>,
}

impl PwLinear {
    fn from_table(xs: &[f64], values: &[f64]) -> Result<Self> {
        if xs.len() != values.len() || xs.len() < 2 {
            return Err(Error::InvalidPotential(
                "tabulated potential needs at least two (x, value) pairs of equal length".into(),
            ));
        }
        if xs.iter().chain(values).any(|v| !v.is_finite()) {
            return Err(Error::InvalidPotential("tabulated entries must be finite".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidPotential("tabulated grid must be strictly increasing".into()));
        }
        let inner: Vec<f64> = (0..xs.len() - 1)
            .map(|i| (values[i + 1] - values[i]) / (xs[i + 1] - xs[i]))
            .collect();
        let scale = inner.iter().fold(1.0f64, |m, s| m.max(s.abs()));
        for w in inner.windows(2) {
            if w[1] - w[0] < -1e-12 * scale {
                return Err(Error::InvalidPotential(
                    "tabulated values fail the convexity check (negative second difference)".into(),
                ));
            }
        }
        let mut slopes = Vec::with_capacity(xs.len() + 1);
        slopes.push(inner[0]);
        slopes.extend_from_slice(&inner);
        slopes.push(*inner.last().unwrap());
        Ok(Self {
            knots: xs.to_vec(),
            values: values.to_vec(),
            slopes,
        })
    }

    fn from_pieces(pieces: &[(f64, f64)]) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidPotential("affine_max needs at least one piece".into()));
        }
        if pieces.iter().any(|(s, c)| !s.is_finite() || !c.is_finite()) {
            return Err(Error::InvalidPotential("affine pieces must be finite".into()));
        }
        let mut lines = pieces.to_vec();
        lines.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        // keep the largest intercept per slope
        let mut dedup: Vec<(f64, f64)> = Vec::with_capacity(lines.len());
        for l in lines {
            match dedup.last_mut() {
                Some(last) if last.0 == l.0 => last.1 = last.1.max(l.1),
                _ => dedup.push(l),
            }
        }
        // upper envelope, slopes increasing left to right
        let mut hull: Vec<(f64, f64)> = Vec::new();
        let cross = |p: (f64, f64), q: (f64, f64)| (p.1 - q.1) / (q.0 - p.0);
        for l in dedup {
            while hull.len() >= 2 {
                let n = hull.len();
                if cross(hull[n - 2], l) <= cross(hull[n - 2], hull[n - 1]) {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(l);
        }
        if hull.len() == 1 {
            let (s, c) = hull[0];
            return Ok(Self {
                knots: vec![0.0],
                values: vec![c],
                slopes: vec![s, s],
            });
        }
        let knots: Vec<f64> = hull.windows(2).map(|w| cross(w[0], w[1])).collect();
        let values = knots
            .iter()
            .zip(hull.iter())
            .map(|(&k, &(s, c))| s * k + c)
            .collect();
        let slopes = hull.iter().map(|l| l.0).collect();
        Ok(Self { knots, values, slopes })
    }

    fn locate(&self, x: f64) -> usize {
        self.knots.partition_point(|&k| k <= x)
    }

    fn value(&self, x: f64) -> f64 {
        let j = self.locate(x);
        if j == 0 {
            self.values[0] + self.slopes[0] * (x - self.knots[0])
        } else {
            self.values[j - 1] + self.slopes[j] * (x - self.knots[j - 1])
        }
    }

    fn derivative_right(&self, x: f64) -> f64 {
        self.slopes[self.locate(x)]
    }

    fn derivative_left(&self, x: f64) -> f64 {
        self.slopes[self.knots.partition_point(|&k| k < x)]
    }

    /// Knots where the slope actually changes.
    fn kinks(&self) -> Vec<f64> {
        self.knots
            .iter()
            .enumerate()
            .filter(|(j, _)| self.slopes[j + 1] != self.slopes[*j])
            .map(|(_, &k)| k)
            .collect()
    }

    /// `E[f(x + σZ)]` and its first two derivatives, using the ReLU expansion.
    fn mollified(&self, x: f64, sigma: f64) -> (f64, f64, f64) {
        let k0 = self.knots[0];
        let mut v = self.values[0] + self.slopes[0] * (x - k0);
        let mut d = self.slopes[0];
        let mut dd = 0.0;
        for (j, &k) in self.knots.iter().enumerate() {
            let jump = self.slopes[j + 1] - self.slopes[j];
            if jump == 0.0 {
                continue;
            }
            let u = (x - k) / sigma;
            let cdf = std_normal_cdf(u);
            let pdf = std_normal_pdf(u);
            v += jump * ((x - k) * cdf + sigma * pdf);
            d += jump * cdf;
            dd += jump * pdf / sigma;
        }
        (v, d, dd)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Form {
    Quadratic { a: f64, m: f64 },
    Quartic { a: f64, b: f64 },
    Linear(PwLinear),
    Box { lo: f64, hi: f64, inner: std::boxed::Box<Form> },
    Mollified { base: std::boxed::Box<Form>, width: f64 },
}

impl Form {
    fn build(p: &ConvexPotential) -> Result<Self> {
        use ConvexPotential as P;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidPotential(format!("{name} must be positive and finite, got {v}")))
            }
        };
        Ok(match p {
            P::Quadratic { a, m } => {
                positive("quadratic a", *a)?;
                if !m.is_finite() {
                    return Err(Error::InvalidPotential("quadratic m must be finite".into()));
                }
                Form::Quadratic { a: *a, m: *m }
            }
            P::Quartic { a, b } => {
                positive("quartic a", *a)?;
                if !(b.is_finite() && *b >= 0.0) {
                    return Err(Error::InvalidPotential(format!("quartic b must be >= 0, got {b}")));
                }
                Form::Quartic { a: *a, b: *b }
            }
            P::Abs { a } => {
                positive("abs a", *a)?;
                Form::Linear(PwLinear {
                    knots: vec![0.0],
                    values: vec![0.0],
                    slopes: vec![-a, *a],
                })
            }
            P::AffineMax { pieces } => Form::Linear(PwLinear::from_pieces(pieces)?),
            P::Tabulated { xs, values } => Form::Linear(PwLinear::from_table(xs, values)?),
            P::Box { lo, hi, inner } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidPotential(format!("box needs lo < hi, got [{lo}, {hi}]")));
                }
                let inner = Form::build(inner)?;
                if matches!(inner, Form::Box { .. }) {
                    return Err(Error::InvalidPotential("nested box potentials are not supported".into()));
                }
                Form::Box {
                    lo: *lo,
                    hi: *hi,
                    inner: std::boxed::Box::new(inner),
                }
            }
            P::Mollified { base, width } => {
                positive("mollification width", *width)?;
                match Form::build(base)? {
                    Form::Box { .. } => {
                        return Err(Error::InvalidPotential(
                            "a box potential is infinite on a set of positive measure; mollify a penalized box instead"
                                .into(),
                        ))
                    }
                    Form::Mollified { base, width: w0 } => Form::Mollified {
                        base,
                        width: (w0 * w0 + width * width).sqrt(),
                    },
                    f => Form::Mollified {
                        base: std::boxed::Box::new(f),
                        width: *width,
                    },
                }
            }
        })
    }

    /// Value, derivative (right-sided at kinks) and second derivative (zero at kinks).
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        match self {
            Form::Quadratic { a, m } => {
                let d = x - m;
                (0.5 * a * d * d, a * d, *a)
            }
            Form::Quartic { a, b } => {
                let x2 = x * x;
                (
                    0.25 * a * x2 * x2 + 0.5 * b * x2,
                    a * x2 * x + b * x,
                    3.0 * a * x2 + b,
                )
            }
            Form::Linear(pw) => (pw.value(x), pw.derivative_right(x), 0.0),
            Form::Box { lo, hi, inner } => {
                if x < *lo || x > *hi {
                    (f64::INFINITY, 0.0, 0.0)
                } else {
                    inner.eval(x)
                }
            }
            Form::Mollified { base, width } => {
                let s2 = width * width;
                match base.as_ref() {
                    Form::Quadratic { a, m } => {
                        let d = x - m;
                        (0.5 * a * (d * d + s2), a * d, *a)
                    }
                    Form::Quartic { a, b } => {
                        let x2 = x * x;
                        (
                            0.25 * a * (x2 * x2 + 6.0 * x2 * s2 + 3.0 * s2 * s2) + 0.5 * b * (x2 + s2),
                            a * (x2 * x + 3.0 * x * s2) + b * x,
                            a * (3.0 * x2 + 3.0 * s2) + b,
                        )
                    }
                    Form::Linear(pw) => pw.mollified(x, *width),
                    _ => unreachable!("normalized at construction"),
                }
            }
        }
    }

    fn derivative_left(&self, x: f64) -> f64 {
        match self {
            Form::Linear(pw) => pw.derivative_left(x),
            Form::Box { inner, .. } => inner.derivative_left(x),
            other => other.eval(x).1,
        }
    }

    fn kinks(&self) -> Vec<f64> {
        match self {
            Form::Linear(pw) => pw.kinks(),
            Form::Box { lo, hi, inner } => {
                let mut k: Vec<f64> = inner.kinks().into_iter().filter(|v| v > lo && v < hi).collect();
                k.insert(0, *lo);
                k.push(*hi);
                k
            }
            _ => Vec::new(),
        }
    }
}

/// Validated convex potential.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    descriptor: ConvexPotential,
    form: Form,
    kinks: Vec<f64>,
}

impl Potential {
    pub fn descriptor(&self) -> &ConvexPotential {
        &self.descriptor
    }

    pub fn value(&self, x: f64) -> f64 {
        self.form.eval(x).0
    }

    /// Right derivative; inside a box this is the inner potential's.
    pub fn derivative(&self, x: f64) -> f64 {
        self.form.eval(x).1
    }

    pub fn derivative_left(&self, x: f64) -> f64 {
        self.form.derivative_left(x)
    }

    /// Minimal-norm element of the subdifferential (0 at a kink that brackets 0).
    pub fn subgradient(&self, x: f64) -> f64 {
        let l = self.derivative_left(x);
        let r = self.derivative(x);
        if l <= 0.0 && r >= 0.0 {
            0.0
        } else if r < 0.0 {
            r
        } else {
            l
        }
    }

    /// Second derivative on smooth pieces; zero at kinks and on affine pieces.
    pub fn second_derivative(&self, x: f64) -> f64 {
        self.form.eval(x).2
    }

    /// Value, derivative and second derivative in one evaluation.
    pub fn eval3(&self, x: f64) -> (f64, f64, f64) {
        self.form.eval(x)
    }

    /// Points where the potential is not differentiable, including box endpoints.
    pub fn kinks(&self) -> Vec<f64> {
        self.kinks.clone()
    }

    /// Closure of `{V < ∞}`.
    pub fn domain(&self) -> (f64, f64) {
        match &self.form {
            Form::Box { lo, hi, .. } => (*lo, *hi),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self.form, Form::Box { .. })
    }

    /// Smooth enough for a second-order finite-difference Fokker–Planck solve.
    pub fn is_smooth(&self) -> bool {
        match &self.form {
            Form::Quadratic { .. } | Form::Quartic { .. } | Form::Mollified { .. } => true,
            Form::Box { inner, .. } => match inner.as_ref() {
                Form::Linear(pw) => pw.kinks().is_empty(),
                _ => true,
            },
            Form::Linear(_) => false,
        }
    }

    /// Checks `V(x) >= A + B|x|` with `B > 0` away from a compact set by
    /// probing one-sided slopes far out on both sides.
    pub fn check_integrable(&self) -> Result<()> {
        if self.is_bounded() {
            return Ok(());
        }
        let far = 1e4 * (1.0 + self.kinks().iter().fold(0.0f64, |m, k| m.max(k.abs())));
        let left = self.derivative_left(-far);
        let right = self.derivative(far);
        if left < 0.0 && right > 0.0 {
            Ok(())
        } else {
            Err(Error::NotIntegrable(format!(
                "{} has asymptotic slopes ({left}, {right}); need left < 0 < right",
                self.descriptor.kind_name()
            )))
        }
    }

    /// A minimizer, found by golden-section search on a bracket.
    pub fn argmin(&self) -> f64 {
        let (mut a, mut b) = match self.domain() {
            (lo, hi) if lo.is_finite() => (lo, hi),
            _ => {
                let mut r = 1.0;
                while self.derivative(r) <= 0.0 && r < 1e12 {
                    r *= 2.0;
                }
                let mut l = -1.0;
                while self.derivative_left(l) >= 0.0 && l > -1e12 {
                    l *= 2.0;
                }
                (l, r)
            }
        };
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - g * (b - a);
        let mut d = a + g * (b - a);
        let (mut fc, mut fd) = (self.value(c), self.value(d));
        for _ in 0..200 {
            if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
                break;
            }
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - g * (b - a);
                fc = self.value(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + g * (b - a);
                fd = self.value(d);
            }
        }
        // kinks are exact candidates
        let mut best = 0.5 * (a + b);
        let mut fbest = self.value(best);
        for k in self.kinks() {
            let v = self.value(k);
            if v < fbest {
                best = k;
                fbest = v;
            }
        }
        best
    }

    pub fn min_value(&self) -> f64 {
        self.value(self.argmin())
    }

    /// Mean of `V` over `[a, b]` by five-point Gauss–Legendre (exact for
    /// polynomials up to degree nine), with its gradient and Hessian in `(a, b)`.
    /// Cells containing kinks are split there, so piecewise-polynomial
    /// potentials are averaged exactly and the result is smooth in `(a, b)`.
    pub fn interval_average(&self, a: f64, b: f64) -> IntervalAverage {
        let start = self.kinks.partition_point(|&k| k <= a);
        let end = self.kinks.partition_point(|&k| k < b);
        if start >= end {
            return self.piece_average(a, b);
        }
        let d = b - a;
        let mut pts = Vec::with_capacity(end - start + 2);
        pts.push(a);
        pts.extend_from_slice(&self.kinks[start..end]);
        pts.push(b);
        let last = pts.len() - 2;
        // I = ∫_a^b V; only the first and last pieces move with a and b
        let (mut i, mut i_a, mut i_b, mut i_aa, mut i_bb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for k in 0..=last {
            let (p, q) = (pts[k], pts[k + 1]);
            let len = q - p;
            let avg = self.piece_average(p, q);
            i += len * avg.value;
            if k == 0 {
                i_a = -avg.value + len * avg.grad[0];
                i_aa = -2.0 * avg.grad[0] + len * avg.hess[0];
            }
            if k == last {
                i_b = avg.value + len * avg.grad[1];
                i_bb = 2.0 * avg.grad[1] + len * avg.hess[2];
            }
        }
        let f = i / d;
        let f_a = (i_a + f) / d;
        let f_b = (i_b - f) / d;
        IntervalAverage {
            value: f,
            grad: [f_a, f_b],
            hess: [(i_aa + 2.0 * f_a) / d, (f_b - f_a) / d, (i_bb - 2.0 * f_b) / d],
        }
    }

    fn piece_average(&self, a: f64, b: f64) -> IntervalAverage {
        let d = b - a;
        let mut out = IntervalAverage::default();
        for (&t, &w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
            let x = a + t * d;
            let (v, dv, ddv) = self.form.eval(x);
            out.value += w * v;
            out.grad[0] += w * (1.0 - t) * dv;
            out.grad[1] += w * t * dv;
            out.hess[0] += w * (1.0 - t) * (1.0 - t) * ddv;
            out.hess[1] += w * t * (1.0 - t) * ddv;
            out.hess[2] += w * t * t * ddv;
        }
        out
    }
}

/// Cell average of a potential and its derivatives with respect to the endpoints.
#[derive(Clone, Copy, Debug, Default)]
pub struct IntervalAverage {
    pub value: f64,
    /// `[∂/∂a, ∂/∂b]`
    pub grad: [f64; 2],
    /// `[∂²/∂a², ∂²/∂a∂b, ∂²/∂b²]`
    pub hess: [f64; 3],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd(p: &Potential, x: f64) -> f64 {
        let h = 1e-6;
        (p.value(x + h) - p.value(x - h)) / (2.0 * h)
    }

    #[test]
    fn cell_average_across_a_kink() {
        let p = ConvexPotential::abs(2.0).compile().unwrap();
        let (a, b) = (-0.3, 0.5);
        let avg = p.interval_average(a, b);
        assert!((avg.value - (0.09 + 0.25) / 0.8).abs() < 1e-14);
        let h = 1e-6;
        let f = |a: f64, b: f64| p.interval_average(a, b).value;
        let ga = (f(a + h, b) - f(a - h, b)) / (2.0 * h);
        let gb = (f(a, b + h) - f(a, b - h)) / (2.0 * h);
        assert!((avg.grad[0] - ga).abs() < 1e-8 && (avg.grad[1] - gb).abs() < 1e-8);
        let haa = (p.interval_average(a + h, b).grad[0] - p.interval_average(a - h, b).grad[0]) / (2.0 * h);
        let hab = (p.interval_average(a, b + h).grad[0] - p.interval_average(a, b - h).grad[0]) / (2.0 * h);
        let hbb = (p.interval_average(a, b + h).grad[1] - p.interval_average(a, b - h).grad[1]) / (2.0 * h);
        assert!((avg.hess[0] - haa).abs() < 1e-6);
        assert!((avg.hess[1] - hab).abs() < 1e-6);
        assert!((avg.hess[2] - hbb).abs() < 1e-6);
    }

    #[test]
    fn affine_max_hull_drops_dominated_lines() {
        let p = ConvexPotential::affine_max(vec![(-1.0, 1.0), (1.0, 1.0), (0.0, -5.0)])
            .compile()
            .unwrap();
        assert_eq!(p.kinks(), vec![0.0]);
        assert_eq!(p.value(0.0), 1.0);
        assert_eq!(p.value(-2.0), 3.0);
        assert_eq!(p.subgradient(0.0), 0.0);
        assert_eq!(p.derivative_left(0.0), -1.0);
        assert_eq!(p.derivative(0.0), 1.0);
    }

    #[test]
    fn tabulated_rejects_concave_tables() {
        let err = ConvexPotential::tabulated(vec![0.0, 1.0, 2.0], vec![0.0, 1.0, 1.5]).compile();
        assert!(matches!(err, Err(Error::InvalidPotential(_))));
        let ok = ConvexPotential::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0]).compile();
        assert!(ok.is_ok());
    }

    #[test]
    fn mollified_derivatives_match_finite_differences() {
        let bases = [
            ConvexPotential::abs(2.0),
            ConvexPotential::quartic(1.0, 0.5),
            ConvexPotential::affine_max(vec![(-3.0, 0.0), (0.0, 0.0), (3.0, -3.0)]),
        ];
        for base in bases {
            let p = ConvexPotential::mollified(base, 0.3).compile().unwrap();
            for &x in &[-1.7, -0.2, 0.0, 0.4, 1.3] {
                assert!((p.derivative(x) - fd(&p, x)).abs() < 1e-6, "{x}");
            }
        }
    }

    #[test]
    fn mollified_abs_exceeds_abs_by_jensen() {
        let p = ConvexPotential::mollified(ConvexPotential::abs(1.0), 0.5).compile().unwrap();
        let expected_min = 0.5 * (2.0 / std::f64::consts::PI).sqrt();
        assert!((p.value(0.0) - expected_min).abs() < 1e-14);
        assert!(p.value(1.0) > 1.0);
    }

    #[test]
    fn integrability_uses_asymptotic_slopes() {
        assert!(ConvexPotential::affine_max(vec![(1.0, 0.0)]).compile().unwrap().check_integrable().is_err());
        assert!(ConvexPotential::abs(0.1).compile().unwrap().check_integrable().is_ok());
        assert!(ConvexPotential::uniform_box(0.0, 1.0).compile().unwrap().check_integrable().is_ok());
    }

    #[test]
    fn argmin_locates_kinks_and_smooth_minima() {
        let p = ConvexPotential::affine_max(vec![(-1.0, 0.3), (2.0, -0.6)]).compile().unwrap();
        assert!((p.argmin() - 0.3).abs() < 1e-12);
        let q = ConvexPotential::quadratic(2.0, -1.25).compile().unwrap();
        assert!((q.argmin() + 1.25).abs() < 1e-7);
    }

    #[test]
    fn box_is_infinite_outside() {
        let p = ConvexPotential::boxed(0.0, 1.0, ConvexPotential::quadratic(1.0, 0.5)).compile().unwrap();
        assert!(p.value(-0.1).is_infinite());
        assert!((p.value(0.5)).abs() < 1e-15);
        assert_eq!(p.domain(), (0.0, 1.0));
        assert!(ConvexPotential::mollified(ConvexPotential::uniform_box(0.0, 1.0), 0.1).compile().is_err());
    }
}
