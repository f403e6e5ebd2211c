//! Transition matrices `P_t` on the reference grid and the structural checks
//! on them: detailed balance, Chapman–Kolmogorov, Lipschitz contraction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fp::Generator;
use crate::error::{Error, Result};
use crate::jko::{transition, JkoConfig};
use crate::measures::ReferenceMeasure;

/// Largest grid for which a matrix is assembled.
pub const SEMIGROUP_MAX_CELLS: usize = 400;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "backend", rename_all = "snake_case")]
pub enum SemigroupBackend {
    /// One JKO transition per start cell.
    Jko,
    /// Crank–Nicolson propagation of the finite-volume generator.
    FokkerPlanck { dt: f64 },
}

/// Row-major `n × n` matrix; row `i` is the law at time `t` of the flow
/// started from cell `i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemigroupMatrix {
    pub n: usize,
    pub t: f64,
    pub backend: SemigroupBackend,
    pub entries: Vec<f64>,
}

impl SemigroupMatrix {
    pub fn identity(n: usize, backend: SemigroupBackend) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        Self {
            n,
            t: 0.0,
            backend,
            entries,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    /// `self · other`, the law after running `self` then `other`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                got: other.n,
            });
        }
        let n = self.n;
        let entries: Vec<f64> = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut out = vec![0.0; n];
                for k in 0..n {
                    let a = self.get(i, k);
                    if a != 0.0 {
                        for (o, b) in out.iter_mut().zip(other.row(k)) {
                            *o += a * b;
                        }
                    }
                }
                out
            })
            .collect();
        Ok(Self {
            n,
            t: self.t + other.t,
            backend: self.backend,
            entries,
        })
    }

    /// `(P f)(xᵢ) = Σⱼ Pᵢⱼ f(xⱼ)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(f).map(|(p, v)| p * v).sum())
            .collect()
    }

    /// Largest deviation of a row sum from one.
    pub fn row_sum_error(&self) -> f64 {
        (0..self.n)
            .map(|i| (self.row(i).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

pub fn semigroup_matrix(gamma: &ReferenceMeasure, t: f64, cfg: &JkoConfig, backend: SemigroupBackend) -> Result<SemigroupMatrix> {
    let n = gamma.len();
    if n > SEMIGROUP_MAX_CELLS {
        return Err(Error::SizeGuard {
            size: n,
            limit: SEMIGROUP_MAX_CELLS,
        });
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!("time must be nonnegative, got {t}")));
    }
    if t == 0.0 {
        return Ok(SemigroupMatrix::identity(n, backend));
    }
    let entries = match backend {
        SemigroupBackend::Jko => {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let tr = transition(gamma, gamma.grid()[i], t, cfg)?;
                    Ok(tr.trajectory.final_state().grid_weights(gamma))
                })
                .collect::<Result<_>>()?;
            rows.concat()
        }
        SemigroupBackend::FokkerPlanck { dt } => {
            if !gamma.potential().is_smooth() {
                return Err(Error::InvalidPotential("the Fokker–Planck backend needs a smooth potential".into()));
            }
            if !(dt > 0.0) {
                return Err(Error::InvalidArgument(format!("dt must be positive, got {dt}")));
            }
            let gen = Generator::new(gamma);
            let steps = (t / dt - 1e-9).ceil().max(1.0) as usize;
            let h = t / steps as f64;
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let mut p = vec![0.0; n];
                    p[i] = 1.0;
                    // two implicit half-steps first, as in the solver
                    for k in 0..steps {
                        if k < 2 {
                            p = gen.step(&p, 0.5 * h, 1.0);
                            p = gen.step(&p, 0.5 * h, 1.0);
                        } else {
                            p = gen.step(&p, h, 0.5);
                        }
                    }
                    p
                })
                .collect();
            rows.concat()
        }
    };
    Ok(SemigroupMatrix { n, t, backend, entries })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReversibilityReport {
    /// `max |πᵢPᵢⱼ − πⱼPⱼᵢ| / max πᵢPᵢⱼ`.
    pub asymmetry: f64,
}

/// Detailed balance of `p` with respect to the grid weights of `gamma`.
pub fn reversibility_check(gamma: &ReferenceMeasure, p: &SemigroupMatrix) -> Result<ReversibilityReport> {
    if p.n != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: gamma.len(),
            got: p.n,
        });
    }
    let pi = gamma.weights();
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for i in 0..p.n {
        for j in 0..p.n {
            let a = pi[i] * p.get(i, j);
            den = den.max(a);
            if j > i {
                num = num.max((a - pi[j] * p.get(j, i)).abs());
            }
        }
    }
    Ok(ReversibilityReport {
        asymmetry: if den > 0.0 { num / den } else { 0.0 },
    })
}

/// Largest L¹ distance between rows of `P_{t+s}` and `P_t·P_s`.
pub fn chapman_kolmogorov_error(p_t: &SemigroupMatrix, p_s: &SemigroupMatrix, p_ts: &SemigroupMatrix) -> Result<f64> {
    let prod = p_t.compose(p_s)?;
    if prod.n != p_ts.n {
        return Err(Error::DimensionMismatch {
            expected: prod.n,
            got: p_ts.n,
        });
    }
    Ok((0..prod.n)
        .map(|i| prod.row(i).iter().zip(p_ts.row(i)).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipReport {
    pub lip_before: f64,
    pub lip_after: f64,
    pub tol: f64,
    pub holds: bool,
}

/// Largest neighbour slope of a grid function.
pub fn discrete_lipschitz(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2)
        .zip(f.windows(2))
        .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
        .fold(0.0, f64::max)
}

/// `[P_t f]_Lip ≤ [f]_Lip + tol` on the grid.
pub fn lip_contraction_check(gamma: &ReferenceMeasure, p: &SemigroupMatrix, f: &[f64], tol: f64) -> Result<LipReport> {
    if f.len() != gamma.len() || p.n != gamma.len() {
        return Err(Error::DimensionMismatch {
            expected: gamma.len(),
            got: f.len(),
        });
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("test function must be finite".into()));
    }
    let lip_before = discrete_lipschitz(gamma.grid(), f);
    let lip_after = discrete_lipschitz(gamma.grid(), &p.apply(f));
    Ok(LipReport {
        lip_before,
        lip_after,
        tol,
        holds: lip_after <= lip_before + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{discretize_reference, ConvexPotential, GridSpec};

    #[test]
    fn fokker_planck_matrix_is_reversible_and_stochastic() {
        let g = discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(60)).unwrap();
        let p = semigroup_matrix(&g, 0.3, &JkoConfig::default(), SemigroupBackend::FokkerPlanck { dt: 1e-2 }).unwrap();
        assert!(p.row_sum_error() < 1e-12);
        assert!(reversibility_check(&g, &p).unwrap().asymmetry < 1e-10);
    }

    #[test]
    fn time_zero_is_identity() {
        let g = discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(10)).unwrap();
        let p = semigroup_matrix(&g, 0.0, &JkoConfig::default(), SemigroupBackend::Jko).unwrap();
        assert_eq!(p.get(3, 3), 1.0);
        assert_eq!(reversibility_check(&g, &p).unwrap().asymmetry, 0.0);
    }

    #[test]
    fn constants_have_zero_slope() {
        let g = discretize_reference(&ConvexPotential::standard_gaussian(), &GridSpec::new(30)).unwrap();
        let p = semigroup_matrix(&g, 0.2, &JkoConfig::default(), SemigroupBackend::FokkerPlanck { dt: 1e-2 }).unwrap();
        let r = lip_contraction_check(&g, &p, &vec![2.0; 30], 1e-12).unwrap();
        assert!(r.lip_before == 0.0 && r.lip_after < 1e-10 && r.holds);
    }
}
