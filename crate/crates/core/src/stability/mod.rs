//! Sequences of log-concave references converging to a limit, and checks
//! that entropies, flows and distances converge along them.

mod dictionary;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use dictionary::{test_dictionary, TestFunction};

use crate::error::{Error, Result};
use crate::jko::{grid_weights_of, transition, JkoConfig};
use crate::measures::{
    discretize_reference, grid_relative_entropy, sublevel_bounds, ConvexPotential, DiscreteMeasure, GridSpec, Potential,
    ReferenceMeasure, TRUNCATION_GAP,
};
use crate::transport::w2_1d;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    /// Maximum of `n` tangent lines at nested points, increasing to `V`.
    AffineEnvelope,
    /// `V * N(0, 1/n²)`; a box is first replaced by a penalty of slope
    /// `n²` and mollified at width `n⁻²`.
    Mollified,
    /// `a/(1 + 1/n)` in place of the quadratic coefficient `a`.
    VariancePerturbed,
}

/// First `n` points of the nested sequence `0, ±1, ±½, ±3/2, ±2, ±¼, …`
/// (level `ℓ` adds the multiples of `2^{−ℓ}` in `[−ℓ−1, ℓ+1]`), with `±1`
/// first so that two points are `c ± w`.
fn envelope_points(c: f64, w: f64, n: usize) -> Vec<f64> {
    let mut u: Vec<f64> = vec![-1.0, 1.0, 0.0];
    let mut level = 1;
    while u.len() < n {
        let step = 0.5f64.powi(level);
        let range = (level + 1) as f64;
        let count = (range / step) as i64;
        let mut fresh: Vec<f64> = (-count..=count)
            .map(|j| j as f64 * step)
            .filter(|v| !u.contains(v))
            .collect();
        fresh.sort_by(|a, b| a.abs().total_cmp(&b.abs()).then(a.total_cmp(b)));
        u.extend(fresh);
        level += 1;
    }
    u.truncate(n);
    u.into_iter().map(|v| c + w * v).collect()
}

/// Potential of member `n` of a sequence of the given kind.
pub fn member_potential(kind: SequenceKind, base: &ConvexPotential, n: usize) -> Result<ConvexPotential> {
    let pot = base.compile()?;
    pot.check_integrable()?;
    if n == 0 {
        return Err(Error::InvalidArgument("sequence indices start at 1".into()));
    }
    let nf = n as f64;
    match kind {
        SequenceKind::AffineEnvelope => {
            if n < 2 {
                return Err(Error::InvalidPotential(format!(
                    "an affine envelope needs at least 2 minorants, got {n}"
                )));
            }
            if pot.is_bounded() {
                return Err(Error::InvalidPotential(
                    "affine envelopes need a potential that is finite everywhere".into(),
                ));
            }
            let (l, r) = sublevel_bounds(&pot, pot.min_value() + 0.5);
            let pieces: Vec<(f64, f64)> = envelope_points(0.5 * (l + r), 0.5 * (r - l), n)
                .into_iter()
                .map(|x| {
                    let s = pot.subgradient(x);
                    (s, pot.value(x) - s * x)
                })
                .collect();
            let env = ConvexPotential::affine_max(pieces);
            env.compile()?.check_integrable().map_err(|e| {
                Error::InvalidPotential(format!("envelope with {n} minorants is not integrable: {e}"))
            })?;
            Ok(env)
        }
        SequenceKind::Mollified => match base {
            ConvexPotential::Box { lo, hi, inner } => {
                if !matches!(
                    inner.as_ref(),
                    ConvexPotential::AffineMax { .. } | ConvexPotential::Abs { .. } | ConvexPotential::Tabulated { .. }
                ) {
                    return Err(Error::InvalidPotential(
                        "mollified boxes need a piecewise-linear inner potential".into(),
                    ));
                }
                let kinks = pot.kinks();
                let slope = pot.derivative(*lo).abs().max(pot.derivative_left(*hi).abs());
                let stiff = (nf * nf).max(2.0 * slope + 1.0);
                let mut xs = vec![lo - 1.0];
                let mut vs = vec![pot.value(*lo) + stiff];
                for &k in &kinks {
                    xs.push(k);
                    vs.push(pot.value(k));
                }
                xs.push(hi + 1.0);
                vs.push(pot.value(*hi) + stiff);
                Ok(ConvexPotential::mollified(ConvexPotential::tabulated(xs, vs), 1.0 / (nf * nf)))
            }
            other => Ok(ConvexPotential::mollified(other.clone(), 1.0 / nf)),
        },
        SequenceKind::VariancePerturbed => match base {
            ConvexPotential::Quadratic { a, m } => Ok(ConvexPotential::quadratic(a / (1.0 + 1.0 / nf), *m)),
            _ => Err(Error::InvalidPotential("variance perturbation needs a quadratic base".into())),
        },
    }
}

/// Members and limit discretized on one grid: the limit's automatic bounds
/// split into `cells`, extended by whole cells to cover every member.
#[derive(Clone, Debug)]
pub struct ReferenceSequence {
    pub kind: SequenceKind,
    pub base: ConvexPotential,
    pub indices: Vec<usize>,
    pub potentials: Vec<ConvexPotential>,
    pub members: Vec<ReferenceMeasure>,
    pub limit: ReferenceMeasure,
    /// Metric scales `aₙ` (`‖h‖²ₙ = aₙ h²`), when the metric varies too.
    pub norm_scales: Option<Vec<f64>>,
    /// Largest dictionary gap `|∫φ dγₙ − ∫φ dγ|` per member.
    pub weak_gaps: Vec<f64>,
}

fn auto_bounds(p: &Potential) -> (f64, f64) {
    if p.is_bounded() {
        p.domain()
    } else {
        sublevel_bounds(p, p.min_value() + TRUNCATION_GAP)
    }
}

pub fn build_sequence(kind: SequenceKind, base: &ConvexPotential, indices: &[usize], cells: usize) -> Result<ReferenceSequence> {
    if indices.is_empty() {
        return Err(Error::InvalidArgument("empty index ladder".into()));
    }
    let potentials: Vec<ConvexPotential> = indices
        .iter()
        .map(|&n| member_potential(kind, base, n))
        .collect::<Result<_>>()?;
    let limit_pot = base.compile()?;
    let compiled: Vec<Potential> = potentials.iter().map(|p| p.compile()).collect::<Result<_>>()?;
    let (a, b) = auto_bounds(&limit_pot);
    let h = (b - a) / cells as f64;
    let (mut lo, mut hi) = (a, b);
    for p in &compiled {
        let (l, r) = auto_bounds(p);
        lo = lo.min(l);
        hi = hi.max(r);
    }
    let left = ((a - lo) / h - 1e-9).ceil().max(0.0);
    let right = ((hi - b) / h - 1e-9).ceil().max(0.0);
    let spec = GridSpec::with_bounds(cells + left as usize + right as usize, a - left * h, b + right * h);
    let limit = discretize_reference(base, &spec)?;
    let members: Vec<ReferenceMeasure> = potentials
        .par_iter()
        .map(|p| discretize_reference(p, &spec))
        .collect::<Result<_>>()?;
    for (m, n) in members.iter().zip(indices) {
        if !m.is_log_concave() {
            return Err(Error::InvalidPotential(format!("member {n} failed the discrete log-concavity check")));
        }
    }
    let limit_measure = limit.as_measure();
    let weak_gaps = members.iter().map(|m| weak_gap(&m.as_measure(), &limit_measure)).collect();
    Ok(ReferenceSequence {
        kind,
        base: base.clone(),
        indices: indices.to_vec(),
        potentials,
        members,
        limit,
        norm_scales: None,
        weak_gaps,
    })
}

impl ReferenceSequence {
    pub fn with_norm_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        if scales.len() != self.members.len() || scales.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::InvalidArgument(
                "need one positive metric scale per member".into(),
            ));
        }
        self.norm_scales = Some(scales);
        Ok(self)
    }

    /// Dictionary gaps are non-increasing along the ladder up to `noise`.
    pub fn weakly_converging(&self, noise: f64) -> bool {
        self.weak_gaps.windows(2).all(|w| w[1] <= w[0] + noise)
    }
}

/// `max_φ |∫φ dμ − ∫φ dν|` over the test dictionary.
pub fn weak_gap(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    test_dictionary()
        .iter()
        .map(|f| (mu.integrate(|p| f.eval(p[0])) - nu.integrate(|p| f.eval(p[0]))).abs())
        .fold(0.0, f64::max)
}

/// Clip level for the duality witness `S = ln(dμ/dγ)`.
const WITNESS_CLIP: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaProbeReport {
    /// `H(μ|γ)`, possibly `+∞`.
    pub limit_entropy: f64,
    /// `H(μ|γₙ)`.
    pub member_entropies: Vec<f64>,
    /// Duality lower bounds `∫S dμ − ∫(e^S − 1) dγₙ ≤ H(μ|γₙ)`.
    pub liminf_bounds: Vec<f64>,
    pub recovery_eps: Vec<f64>,
    /// `H(μₙ|γₙ)` of the recovery sequence `μₙ ∝ e^{−εx²}(dμ/dγ)γₙ`, per ε.
    pub recovery_entropies: Vec<Vec<f64>>,
    /// `max(0, H(μ|γ) − bound)` at the last member.
    pub liminf_gap: f64,
    /// `max(0, H(μₙ|γₙ) − H(μ|γ))` at the last member, best ε.
    pub limsup_gap: f64,
    pub infinite: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GammaReport {
    pub probes: Vec<GammaProbeReport>,
    pub tol: f64,
}

impl GammaReport {
    /// Finite probes close both gaps; infinite ones show entropies growing.
    pub fn passed(&self) -> bool {
        self.probes.iter().all(|p| {
            if p.infinite {
                p.member_entropies.windows(2).all(|w| w[1] >= w[0])
            } else {
                p.liminf_gap <= self.tol && p.limsup_gap <= self.tol
            }
        })
    }
}

pub fn gamma_convergence_check(seq: &ReferenceSequence, probes: &[DiscreteMeasure], tol: f64) -> Result<GammaReport> {
    let limit = &seq.limit;
    let gw = limit.weights();
    let eps = vec![0.1, 0.01];
    let reports = probes
        .iter()
        .map(|mu| {
            let w = grid_weights_of(limit, mu)?;
            let limit_entropy = grid_relative_entropy(&w, gw).value();
            let infinite = !limit_entropy.is_finite();
            let witness: Vec<f64> = w
                .iter()
                .zip(gw)
                .map(|(&m, &g)| {
                    if m <= 0.0 {
                        -WITNESS_CLIP
                    } else if g <= 0.0 {
                        WITNESS_CLIP
                    } else {
                        (m / g).ln().clamp(-WITNESS_CLIP, WITNESS_CLIP)
                    }
                })
                .collect();
            let mut member_entropies = Vec::new();
            let mut liminf_bounds = Vec::new();
            for g in &seq.members {
                member_entropies.push(grid_relative_entropy(&w, g.weights()).value());
                let lin: f64 = w.iter().zip(&witness).map(|(m, s)| m * s).sum();
                let exp: f64 = g.weights().iter().zip(&witness).map(|(q, s)| q * s.exp_m1()).sum();
                liminf_bounds.push(lin - exp);
            }
            let recovery_entropies: Vec<Vec<f64>> = if infinite {
                Vec::new()
            } else {
                eps.iter()
                    .map(|&e| {
                        seq.members
                            .iter()
                            .map(|g| {
                                let mut r: Vec<f64> = w
                                    .iter()
                                    .zip(gw)
                                    .zip(g.weights())
                                    .zip(limit.grid())
                                    .map(|(((&m, &q), &qn), &x)| {
                                        if m > 0.0 && q > 0.0 {
                                            (-e * x * x).exp() * (m / q) * qn
                                        } else {
                                            0.0
                                        }
                                    })
                                    .collect();
                                let z: f64 = r.iter().sum();
                                r.iter_mut().for_each(|v| *v /= z);
                                grid_relative_entropy(&r, g.weights()).value()
                            })
                            .collect()
                    })
                    .collect()
            };
            let last = seq.members.len() - 1;
            let (liminf_gap, limsup_gap) = if infinite {
                (0.0, 0.0)
            } else {
                let best = recovery_entropies.iter().map(|r| r[last]).fold(f64::INFINITY, f64::min);
                (
                    (limit_entropy - liminf_bounds[last]).max(0.0),
                    (best - limit_entropy).max(0.0),
                )
            };
            Ok(GammaProbeReport {
                limit_entropy,
                member_entropies,
                liminf_bounds,
                recovery_eps: eps.clone(),
                recovery_entropies,
                liminf_gap,
                limsup_gap,
                infinite,
            })
        })
        .collect::<Result<_>>()?;
    Ok(GammaReport { probes: reports, tol })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FlowStabilityReport {
    pub indices: Vec<usize>,
    /// `sup_t W₂(ν_t^{n,xₙ}, ν_t^x)` over the step times, per member.
    pub gaps: Vec<f64>,
    pub noise: f64,
    /// Gaps non-increasing along the ladder within `noise`.
    pub monotone: bool,
}

impl FlowStabilityReport {
    pub fn final_gap(&self) -> f64 {
        *self.gaps.last().expect("non-empty ladder")
    }
}

/// Transitions under each member from `x_n[i]` against the transition
/// under the limit from `x`, up to `t_end`.
pub fn flow_stability_run(
    seq: &ReferenceSequence,
    x_n: &[f64],
    x: f64,
    t_end: f64,
    cfg: &JkoConfig,
) -> Result<FlowStabilityReport> {
    if x_n.len() != seq.members.len() {
        return Err(Error::DimensionMismatch {
            expected: seq.members.len(),
            got: x_n.len(),
        });
    }
    let reference = transition(&seq.limit, x, t_end, cfg)?;
    let gaps: Vec<f64> = seq
        .members
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            let c = JkoConfig {
                metric_scale: seq.norm_scales.as_ref().map_or(cfg.metric_scale, |s| s[i]),
                ..cfg.clone()
            };
            let tr = transition(g, x_n[i], t_end, &c)?;
            let a = &tr.trajectory.states;
            let b = &reference.trajectory.states;
            Ok(a.iter().zip(b).map(|(p, q)| p.w2(q)).fold(0.0, f64::max))
        })
        .collect::<Result<_>>()?;
    let noise = 1e-3;
    let monotone = gaps.windows(2).all(|w| w[1] <= w[0] + noise);
    Ok(FlowStabilityReport {
        indices: seq.indices.clone(),
        gaps,
        noise,
        monotone,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentsReport {
    pub weak_gaps: Vec<f64>,
    /// `|∫x² dμₙ − ∫x² dμ|`.
    pub moment_gaps: Vec<f64>,
    pub w2: Vec<f64>,
    pub tol: f64,
    pub weak_converges: bool,
    pub moments_converge: bool,
    pub w2_converges: bool,
    /// Weak plus moment convergence holds exactly when `W₂` convergence does.
    pub consistent: bool,
}

/// Convergence of the last member within `tol`, in all three senses.
pub fn moments_convergence_check(mu_n: &[DiscreteMeasure], mu: &DiscreteMeasure, tol: f64) -> Result<MomentsReport> {
    if mu_n.is_empty() {
        return Err(Error::InvalidArgument("empty sequence".into()));
    }
    let m2 = |m: &DiscreteMeasure| m.integrate(|p| p[0] * p[0]);
    let target = m2(mu);
    let weak_gaps: Vec<f64> = mu_n.iter().map(|m| weak_gap(m, mu)).collect();
    let moment_gaps: Vec<f64> = mu_n.iter().map(|m| (m2(m) - target).abs()).collect();
    let w2: Vec<f64> = mu_n.iter().map(|m| w2_1d(m, mu)).collect();
    let last = |v: &[f64]| *v.last().unwrap() <= tol;
    let (weak_converges, moments_converge, w2_converges) = (last(&weak_gaps), last(&moment_gaps), last(&w2));
    Ok(MomentsReport {
        consistent: (weak_converges && moments_converge) == w2_converges,
        weak_gaps,
        moment_gaps,
        w2,
        tol,
        weak_converges,
        moments_converge,
        w2_converges,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LscReport {
    /// `√aₙ·W₂(μₙ, νₙ)`.
    pub distances: Vec<f64>,
    pub limit: f64,
    /// Smallest distance over the second half of the sequence.
    pub liminf: f64,
    pub tol: f64,
    pub liminf_holds: bool,
    pub converges: bool,
}

pub fn w2_lsc_check(
    mu_n: &[DiscreteMeasure],
    nu_n: &[DiscreteMeasure],
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    scales: &[f64],
    tol: f64,
) -> Result<LscReport> {
    if mu_n.len() != nu_n.len() || mu_n.len() != scales.len() || mu_n.is_empty() {
        return Err(Error::InvalidArgument("sequences and scales must have one equal, nonzero length".into()));
    }
    let distances: Vec<f64> = mu_n
        .iter()
        .zip(nu_n)
        .zip(scales)
        .map(|((a, b), s)| s.sqrt() * w2_1d(a, b))
        .collect();
    let limit = w2_1d(mu, nu);
    let half = distances.len() / 2;
    let liminf = distances[half..].iter().cloned().fold(f64::INFINITY, f64::min);
    let last = *distances.last().unwrap();
    Ok(LscReport {
        liminf_holds: liminf >= limit - tol,
        converges: (last - limit).abs() <= tol,
        distances,
        limit,
        liminf,
        tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_tangents_of_the_gaussian_potential() {
        let v = member_potential(SequenceKind::AffineEnvelope, &ConvexPotential::standard_gaussian(), 2)
            .unwrap()
            .compile()
            .unwrap();
        for x in [-3.0, -0.4, 0.0, 0.7, 5.0] {
            assert!((v.value(x) - (f64::abs(x) - 0.5)).abs() < 1e-12, "{x}");
        }
    }

    #[test]
    fn envelope_points_are_nested() {
        let a = envelope_points(0.0, 1.0, 9);
        let b = envelope_points(0.0, 1.0, 25);
        assert_eq!(&b[..9], &a[..]);
        let mut c = b.clone();
        c.sort_by(f64::total_cmp);
        c.dedup();
        assert_eq!(c.len(), 25);
    }

    #[test]
    fn single_minorant_is_rejected() {
        assert!(member_potential(SequenceKind::AffineEnvelope, &ConvexPotential::standard_gaussian(), 1).is_err());
    }
}
