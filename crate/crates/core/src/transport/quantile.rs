use super::{check_same_dim, Coupling, W2Result};
use crate::error::{Error, Result};
use crate::measures::DiscreteMeasure;

fn sorted_support(m: &DiscreteMeasure) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.len()).filter(|&i| m.weights()[i] > 0.0).collect();
    idx.sort_by(|&a, &b| m.points()[a].total_cmp(&m.points()[b]));
    idx
}

/// Walks the monotone (north-west corner) coupling of two sorted supports,
/// calling `emit(i, j, mass)` for each block of transported mass.
fn monotone_sweep(mu: &DiscreteMeasure, nu: &DiscreteMeasure, mut emit: impl FnMut(usize, usize, f64)) {
    let a = sorted_support(mu);
    let b = sorted_support(nu);
    let (mut i, mut j) = (0, 0);
    let mut ra = a.first().map_or(0.0, |&k| mu.weights()[k]);
    let mut rb = b.first().map_or(0.0, |&k| nu.weights()[k]);
    while i < a.len() && j < b.len() {
        let m = ra.min(rb);
        if m > 0.0 {
            emit(a[i], b[j], m);
        }
        if ra <= rb {
            rb -= ra;
            i += 1;
            if i < a.len() {
                ra = mu.weights()[a[i]];
            }
            if rb <= 0.0 {
                j += 1;
                if j < b.len() {
                    rb = nu.weights()[b[j]];
                }
            }
        } else {
            ra -= rb;
            j += 1;
            if j < b.len() {
                rb = nu.weights()[b[j]];
            }
        }
    }
}

/// W₂ on the line through the monotone quantile coupling, with the plan and
/// dual potentials read off the staircase.
pub fn w2_exact_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<W2Result> {
    check_same_dim(mu, nu)?;
    if mu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.dim() });
    }
    let mut pairs = Vec::with_capacity(mu.len() + nu.len());
    monotone_sweep(mu, nu, |i, j, m| pairs.push((i, j, m)));

    // φᵢ + ψⱼ = cᵢⱼ along the staircase. Where both cumulative sums break at
    // once the staircase splits; the zero-mass corner cell (new row, previous
    // column) keeps it one tree, as in the north-west corner rule.
    let mut phi = vec![f64::NAN; mu.len()];
    let mut psi = vec![f64::NAN; nu.len()];
    let mut prev_col: Option<usize> = None;
    for &(i, j, _) in &pairs {
        let c = (mu.points()[i] - nu.points()[j]).powi(2);
        if phi[i].is_nan() && psi[j].is_nan() {
            phi[i] = match prev_col {
                Some(jp) => (mu.points()[i] - nu.points()[jp]).powi(2) - psi[jp],
                None => 0.0,
            };
        }
        prev_col = Some(j);
        if phi[i].is_nan() {
            phi[i] = c - psi[j];
        } else if psi[j].is_nan() {
            psi[j] = c - phi[i];
        }
    }
    // c-transforms fill atoms without mass
    for i in 0..mu.len() {
        if phi[i].is_nan() {
            phi[i] = (0..nu.len())
                .filter(|&j| !psi[j].is_nan())
                .map(|j| (mu.points()[i] - nu.points()[j]).powi(2) - psi[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for j in 0..nu.len() {
        if psi[j].is_nan() {
            psi[j] = (0..mu.len())
                .map(|i| (mu.points()[i] - nu.points()[j]).powi(2) - phi[i])
                .fold(f64::INFINITY, f64::min);
        }
    }
    let coupling = Coupling::new(mu, nu, None, pairs, Some((phi, psi)));
    Ok(W2Result {
        distance: coupling.cost().max(0.0).sqrt(),
        coupling,
    })
}

/// Distance-only variant of [`w2_exact_1d`]; no allocation beyond the sort.
pub fn w2_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut cost = 0.0;
    monotone_sweep(mu, nu, |i, j, m| {
        let d = mu.points()[i] - nu.points()[j];
        cost += m * d * d;
    });
    cost.max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diracs() {
        let a = DiscreteMeasure::dirac(&[0.0]).unwrap();
        let b = DiscreteMeasure::dirac(&[3.0]).unwrap();
        assert_eq!(w2_exact_1d(&a, &b).unwrap().distance, 3.0);
    }

    #[test]
    fn duals_are_feasible_and_tight() {
        let mu = DiscreteMeasure::on_line(vec![0.0, 0.3, 1.1, 2.0], vec![0.1, 0.4, 0.3, 0.2]).unwrap();
        let nu = DiscreteMeasure::on_line(vec![-0.5, 0.9, 1.7], vec![0.5, 0.25, 0.25]).unwrap();
        let r = w2_exact_1d(&mu, &nu).unwrap();
        let (phi, psi) = r.coupling.potentials().unwrap();
        let mut dual = 0.0;
        for i in 0..mu.len() {
            dual += phi[i] * mu.weights()[i];
            for j in 0..nu.len() {
                let c = (mu.points()[i] - nu.points()[j]).powi(2);
                assert!(phi[i] + psi[j] <= c + 1e-12);
            }
        }
        dual += psi.iter().zip(nu.weights()).map(|(p, w)| p * w).sum::<f64>();
        assert!((dual - r.coupling.cost()).abs() < 1e-12);
        assert!(r.coupling.marginal_violation() < 1e-15);
    }

    #[test]
    fn unsorted_input_and_zero_weights() {
        let mu = DiscreteMeasure::on_line(vec![2.0, 0.0, 5.0], vec![0.5, 0.5, 0.0]).unwrap();
        let nu = DiscreteMeasure::on_line(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert!((w2_1d(&mu, &nu) - 1.0).abs() < 1e-15);
    }
}
