//! Log-domain Sinkhorn with ε-continuation.

use rayon::prelude::*;
use serde::Serialize;

use super::{check_same_dim, Coupling};
use crate::error::{Error, Result};
use crate::measures::{sq_dist, DiscreteMeasure, NormSpec};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SinkhornConfig {
    /// Target regularization.
    pub epsilon: f64,
    /// Marginal violation (max-abs) required at the target `epsilon`.
    pub tol: f64,
    /// Iteration cap per continuation stage.
    pub max_iters: usize,
    /// Ratio between successive ε stages; `1` disables continuation.
    pub continuation_factor: f64,
    /// Over-relaxation weight `ω ∈ [1, 2)` applied to the potential updates;
    /// `1` is plain Sinkhorn.
    pub relaxation: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            tol: 1e-9,
            max_iters: 20_000,
            continuation_factor: 2.0,
            relaxation: 1.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornResult {
    /// `√⟨C, P⟩`, which over-estimates W₂ by `O(ε log(1/ε))`.
    pub distance_estimate: f64,
    pub coupling: Coupling,
    /// `⟨C, P⟩ + ε KL(P | μ⊗ν)`.
    pub regularized_cost: f64,
    pub marginal_violation: f64,
    pub iterations: usize,
    pub epsilon: f64,
}

struct Problem {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn logsumexp(it: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = it.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + it.map(|v| (v - mx).exp()).sum::<f64>().ln()
}

impl Problem {
    fn new(mu: &DiscreteMeasure, nu: &DiscreteMeasure, norm: Option<&NormSpec>) -> Self {
        let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
        let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights()[j] > 0.0).collect();
        let mut cost = Vec::with_capacity(rows.len() * cols.len());
        for &i in &rows {
            for &j in &cols {
                cost.push(sq_dist(mu.point(i), nu.point(j), norm));
            }
        }
        let a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
        let b: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
        Self {
            n: rows.len(),
            m: cols.len(),
            cost,
            log_a: a.iter().map(|w| w.ln()).collect(),
            log_b: b.iter().map(|w| w.ln()).collect(),
            a,
            b,
            rows,
            cols,
        }
    }

    fn update_f(&self, f: &mut [f64], g: &[f64], eps: f64, w: f64) {
        f.par_iter_mut().enumerate().for_each(|(i, fi)| {
            let row = &self.cost[i * self.m..(i + 1) * self.m];
            let lse = logsumexp((0..self.m).map(|j| (g[j] - row[j]) / eps + self.log_b[j]));
            *fi = (1.0 - w) * *fi - w * eps * lse;
        });
    }

    fn update_g(&self, f: &[f64], g: &mut [f64], eps: f64, w: f64) {
        g.par_iter_mut().enumerate().for_each(|(j, gj)| {
            let lse = logsumexp((0..self.n).map(|i| (f[i] - self.cost[i * self.m + j]) / eps + self.log_a[i]));
            *gj = (1.0 - w) * *gj - w * eps * lse;
        });
    }

    fn plan(&self, f: &[f64], g: &[f64], eps: f64, i: usize, j: usize) -> f64 {
        ((f[i] + g[j] - self.cost[i * self.m + j]) / eps + self.log_a[i] + self.log_b[j]).exp()
    }

    /// Row-marginal error; columns are exact right after a `g` update.
    fn row_violation(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        (0..self.n)
            .into_par_iter()
            .map(|i| {
                let s: f64 = (0..self.m).map(|j| self.plan(f, g, eps, i, j)).sum();
                (s - self.a[i]).abs()
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Largest violation of either marginal.
    fn full_violation(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        let (r, c) = self.marginals(f, g, eps);
        let vr = r.iter().zip(&self.a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let vc = c.iter().zip(&self.b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        vr.max(vc)
    }

    fn marginals(&self, f: &[f64], g: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0; self.n];
        let mut c = vec![0.0; self.m];
        for i in 0..self.n {
            for j in 0..self.m {
                let p = self.plan(f, g, eps, i, j);
                r[i] += p;
                c[j] += p;
            }
        }
        (r, c)
    }

    /// Dual objective `⟨f,a⟩ + ⟨g,b⟩ − ε Σ P_ij`, concave in `(f, g)`.
    fn dual(&self, f: &[f64], g: &[f64], eps: f64) -> f64 {
        let lin: f64 = f.iter().zip(&self.a).map(|(u, w)| u * w).sum::<f64>()
            + g.iter().zip(&self.b).map(|(v, w)| v * w).sum::<f64>();
        let mut mass = 0.0;
        for i in 0..self.n {
            for j in 0..self.m {
                mass += self.plan(f, g, eps, i, j);
            }
        }
        lin - eps * mass
    }

    /// Damped Newton on the dual with `g` pinned at its last entry. The
    /// Hessian is the dense `(n+m−1)²` system `[[diag r, P], [Pᵀ, diag c]]/ε`.
    fn newton(&self, f: &mut [f64], g: &mut [f64], eps: f64, tol: f64) -> f64 {
        let (n, m) = (self.n, self.m);
        let k = n + m - 1;
        let mut viol = self.full_violation(f, g, eps);
        for _ in 0..NEWTON_STEPS {
            if viol < tol {
                break;
            }
            let (r, c) = self.marginals(f, g, eps);
            let mut h = vec![0.0; k * k];
            for i in 0..n {
                h[i * k + i] = r[i];
                for j in 0..m - 1 {
                    let p = self.plan(f, g, eps, i, j);
                    h[i * k + n + j] = p;
                    h[(n + j) * k + i] = p;
                }
            }
            for j in 0..m - 1 {
                h[(n + j) * k + n + j] = c[j];
            }
            let mut rhs: Vec<f64> = (0..n).map(|i| eps * (self.a[i] - r[i])).collect();
            rhs.extend((0..m - 1).map(|j| eps * (self.b[j] - c[j])));
            let Some(step) = cholesky_solve(&mut h, k, &rhs) else {
                break;
            };
            let slope: f64 = step.iter().zip(&rhs).map(|(d, q)| d * q).sum::<f64>() / eps;
            let d0 = self.dual(f, g, eps);
            let mut s = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let ft: Vec<f64> = (0..n).map(|i| f[i] + s * step[i]).collect();
                let mut gt = g.to_vec();
                for j in 0..m - 1 {
                    gt[j] += s * step[n + j];
                }
                let d1 = self.dual(&ft, &gt, eps);
                // near the optimum the dual gain drowns in rounding; fall back to the residual
                let better = d1.is_finite() && (d1 >= d0 + 1e-4 * s * slope || self.full_violation(&ft, &gt, eps) < 0.5 * viol);
                if better {
                    f.copy_from_slice(&ft);
                    g.copy_from_slice(&gt);
                    accepted = true;
                    break;
                }
                s *= 0.5;
            }
            if !accepted {
                break;
            }
            viol = self.full_violation(f, g, eps);
        }
        viol
    }

    /// Runs the continuation schedule; returns potentials, iterations and
    /// the final violation.
    fn solve(&self, cfg: &SinkhornConfig) -> (Vec<f64>, Vec<f64>, usize, f64) {
        let mut f = vec![0.0; self.n];
        let mut g = vec![0.0; self.m];
        let cmax = self.cost.iter().fold(0.0f64, |s, &c| s.max(c));
        let mut eps = if cfg.continuation_factor > 1.0 {
            cmax.max(cfg.epsilon)
        } else {
            cfg.epsilon
        };
        // Newton takes over once Sinkhorn is in its basin, on small problems
        let polish = self.n + self.m <= NEWTON_MAX_DIM && self.m >= 2;
        let wmin = self.a.iter().chain(&self.b).fold(f64::INFINITY, |s, &w| s.min(w));
        let mut total = 0;
        loop {
            let last = eps <= cfg.epsilon;
            let stage_tol = if last { cfg.tol } else { cfg.tol.max(1e-6) };
            let switch = if polish { stage_tol.max(0.1 * wmin) } else { stage_tol };
            let mut viol = f64::INFINITY;
            for it in 0..cfg.max_iters {
                self.update_f(&mut f, &g, eps, cfg.relaxation);
                self.update_g(&f, &mut g, eps, cfg.relaxation);
                total += 1;
                // the violation sweep costs as much as an update; sample it
                if it % 5 == 4 || it + 1 == cfg.max_iters {
                    viol = self.row_violation(&f, &g, eps);
                    if viol < switch {
                        break;
                    }
                }
            }
            if polish && viol >= stage_tol {
                viol = self.newton(&mut f, &mut g, eps, stage_tol);
            }
            if last {
                return (f, g, total, viol);
            }
            eps = (eps / cfg.continuation_factor).max(cfg.epsilon);
        }
    }
}

/// Dual Newton polishing is used when `n + m` is at most this.
const NEWTON_MAX_DIM: usize = 1200;
const NEWTON_STEPS: usize = 50;

/// Solves `H x = b` for symmetric positive definite `H` (overwritten by its
/// Cholesky factor). `None` if `H` is numerically singular.
fn cholesky_solve(h: &mut [f64], k: usize, b: &[f64]) -> Option<Vec<f64>> {
    for j in 0..k {
        let mut d = h[j * k + j];
        for p in 0..j {
            d -= h[j * k + p] * h[j * k + p];
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        h[j * k + j] = d;
        for i in j + 1..k {
            let mut v = h[i * k + j];
            for p in 0..j {
                v -= h[i * k + p] * h[j * k + p];
            }
            h[i * k + j] = v / d;
        }
    }
    let mut y = b.to_vec();
    for i in 0..k {
        for p in 0..i {
            y[i] -= h[i * k + p] * y[p];
        }
        y[i] /= h[i * k + i];
    }
    for i in (0..k).rev() {
        for p in i + 1..k {
            y[i] -= h[p * k + i] * y[p];
        }
        y[i] /= h[i * k + i];
    }
    Some(y)
}

fn validate(cfg: &SinkhornConfig) -> Result<()> {
    if !(cfg.epsilon > 0.0) || !cfg.epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {}", cfg.epsilon)));
    }
    if !(cfg.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tol must be positive, got {}", cfg.tol)));
    }
    if !(cfg.relaxation >= 1.0 && cfg.relaxation < 2.0) {
        return Err(Error::InvalidArgument(format!("relaxation must lie in [1, 2), got {}", cfg.relaxation)));
    }
    if !(cfg.continuation_factor >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "continuation_factor must be at least 1, got {}",
            cfg.continuation_factor
        )));
    }
    Ok(())
}

/// Entropic W₂ with the default configuration at regularization `epsilon`.
pub fn w2_sinkhorn(mu: &DiscreteMeasure, nu: &DiscreteMeasure, epsilon: f64) -> Result<SinkhornResult> {
    w2_sinkhorn_with(
        mu,
        nu,
        None,
        &SinkhornConfig {
            epsilon,
            ..SinkhornConfig::default()
        },
    )
}

/// Entropic W₂. Fails with [`Error::NotConverged`] when the marginals are not
/// matched to `cfg.tol` within the iteration budget.
pub fn w2_sinkhorn_with(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    norm: Option<&NormSpec>,
    cfg: &SinkhornConfig,
) -> Result<SinkhornResult> {
    check_same_dim(mu, nu)?;
    validate(cfg)?;
    let p = Problem::new(mu, nu, norm);
    let (f, g, iterations, viol) = p.solve(cfg);
    if !(viol < cfg.tol) {
        return Err(Error::NotConverged {
            solver: "sinkhorn",
            iterations,
            residual: viol,
        });
    }
    let eps = cfg.epsilon;
    let mut pairs = Vec::new();
    let mut transport = 0.0;
    let mut kl = 0.0;
    for i in 0..p.n {
        for j in 0..p.m {
            let pij = p.plan(&f, &g, eps, i, j);
            if pij > 0.0 {
                pairs.push((p.rows[i], p.cols[j], pij));
                transport += pij * p.cost[i * p.m + j];
                kl += pij * (pij / (p.a[i] * p.b[j])).ln() - pij + p.a[i] * p.b[j];
            }
        }
    }
    let mut phi = vec![f64::NEG_INFINITY; mu.len()];
    let mut psi = vec![f64::NEG_INFINITY; nu.len()];
    for (k, &i) in p.rows.iter().enumerate() {
        phi[i] = f[k];
    }
    for (k, &j) in p.cols.iter().enumerate() {
        psi[j] = g[k];
    }
    let coupling = Coupling::new(mu, nu, norm, pairs, Some((phi, psi)));
    let marginal_violation = coupling.marginal_violation();
    Ok(SinkhornResult {
        distance_estimate: transport.max(0.0).sqrt(),
        coupling,
        regularized_cost: transport + eps * kl,
        marginal_violation,
        iterations,
        epsilon: eps,
    })
}

/// Debiased divergence `OT_ε(μ,ν) − ½OT_ε(μ,μ) − ½OT_ε(ν,ν)`, with `OT_ε`
/// the dual value `⟨f,μ⟩ + ⟨g,ν⟩`. Nonnegative and zero iff `μ = ν`.
pub fn sinkhorn_divergence(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    norm: Option<&NormSpec>,
    cfg: &SinkhornConfig,
) -> Result<f64> {
    check_same_dim(mu, nu)?;
    validate(cfg)?;
    let ot = |x: &DiscreteMeasure, y: &DiscreteMeasure| -> Result<f64> {
        let p = Problem::new(x, y, norm);
        let (f, g, iterations, viol) = p.solve(cfg);
        if !(viol < cfg.tol) {
            return Err(Error::NotConverged {
                solver: "sinkhorn",
                iterations,
                residual: viol,
            });
        }
        Ok(f.iter().zip(&p.a).map(|(u, w)| u * w).sum::<f64>() + g.iter().zip(&p.b).map(|(v, w)| v * w).sum::<f64>())
    };
    let d = ot(mu, nu)? - 0.5 * ot(mu, mu)? - 0.5 * ot(nu, nu)?;
    Ok(d.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::w2_1d;

    fn pair() -> (DiscreteMeasure, DiscreteMeasure) {
        let mu = DiscreteMeasure::on_line(vec![0.0, 0.5, 1.0, 1.5], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let nu = DiscreteMeasure::on_line(vec![0.2, 0.9, 2.0], vec![0.3, 0.3, 0.4]).unwrap();
        (mu, nu)
    }

    #[test]
    fn small_epsilon_on_a_dense_pair() {
        // 1-D samples at ε far below the cost scale, where plain scaling stalls
        let xs: Vec<f64> = (0..120).map(|i| ((i * 37) % 120) as f64 / 40.0 - 1.5).collect();
        let ys: Vec<f64> = (0..100).map(|i| 1.0 + 0.5 * (((i * 53) % 100) as f64 / 33.0 - 1.5)).collect();
        let mu = DiscreteMeasure::empirical_1d(&xs).unwrap();
        let nu = DiscreteMeasure::empirical_1d(&ys).unwrap();
        let r = w2_sinkhorn(&mu, &nu, 1e-3).unwrap();
        assert!(r.marginal_violation < 1e-9);
        let exact = w2_1d(&mu, &nu);
        assert!(r.distance_estimate >= exact - 1e-9);
        assert!(r.distance_estimate - exact < 1e-3);
    }

    #[test]
    fn over_relaxation_reaches_the_same_plan() {
        let (mu, nu) = pair();
        let plain = w2_sinkhorn(&mu, &nu, 1e-2).unwrap();
        let cfg = SinkhornConfig {
            epsilon: 1e-2,
            relaxation: 1.6,
            ..Default::default()
        };
        let fast = w2_sinkhorn_with(&mu, &nu, None, &cfg).unwrap();
        assert!((plain.distance_estimate - fast.distance_estimate).abs() < 1e-8);
        let bad = SinkhornConfig {
            relaxation: 2.0,
            ..Default::default()
        };
        assert!(w2_sinkhorn_with(&mu, &nu, None, &bad).is_err());
    }

    #[test]
    fn marginals_and_limit() {
        let (mu, nu) = pair();
        let exact = w2_1d(&mu, &nu);
        let mut prev = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let r = w2_sinkhorn(&mu, &nu, eps).unwrap();
            assert!(r.marginal_violation < 1e-9);
            assert!(r.distance_estimate >= exact - 1e-9);
            let gap = r.distance_estimate - exact;
            assert!(gap <= prev + 1e-12);
            prev = gap;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn divergence_vanishes_on_diagonal() {
        let (mu, nu) = pair();
        let cfg = SinkhornConfig {
            epsilon: 0.05,
            ..Default::default()
        };
        assert!(sinkhorn_divergence(&mu, &mu, None, &cfg).unwrap() < 1e-9);
        assert!(sinkhorn_divergence(&mu, &nu, None, &cfg).unwrap() > 1e-3);
    }

    #[test]
    fn budget_exhaustion_reports_residual() {
        let (mu, nu) = pair();
        let cfg = SinkhornConfig {
            epsilon: 1e-4,
            max_iters: 3,
            continuation_factor: 1.0,
            ..Default::default()
        };
        match w2_sinkhorn_with(&mu, &nu, None, &cfg) {
            Err(Error::NotConverged { residual, .. }) => assert!(residual > 1e-9),
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
