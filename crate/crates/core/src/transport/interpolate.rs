use super::{w2_exact_1d, w2_lp};
use crate::error::{Error, Result};
use crate::measures::{DiscreteMeasure, NormSpec};

/// McCann interpolant `((1−t)x + t y)#P` along an optimal plan `P`; the
/// quantile coupling on the line, the transportation simplex otherwise.
/// Returns the endpoints themselves at `t = 0` and `t = 1`.
pub fn displacement_interpolate(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    t: f64,
    norm: Option<&NormSpec>,
) -> Result<DiscreteMeasure> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("interpolation time {t} outside [0, 1]")));
    }
    if t == 0.0 {
        return Ok(mu.clone());
    }
    if t == 1.0 {
        return Ok(nu.clone());
    }
    let plan = if mu.dim() == 1 && norm.is_none() {
        w2_exact_1d(mu, nu)?
    } else {
        w2_lp(mu, nu, norm)?
    };
    let k = mu.dim();
    let pairs = plan.coupling.pairs();
    let mut points = Vec::with_capacity(pairs.len() * k);
    let mut weights = Vec::with_capacity(pairs.len());
    for &(i, j, m) in pairs {
        let (x, y) = (mu.point(i), nu.point(j));
        points.extend(x.iter().zip(y).map(|(a, b)| (1.0 - t) * a + t * b));
        weights.push(m);
    }
    DiscreteMeasure::from_atoms(k, points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::w2_1d;

    #[test]
    fn geodesic_distances_are_proportional() {
        let mu = DiscreteMeasure::on_line(vec![0.0, 1.0, 3.0], vec![0.2, 0.5, 0.3]).unwrap();
        let nu = DiscreteMeasure::on_line(vec![-1.0, 2.0], vec![0.6, 0.4]).unwrap();
        let d = w2_1d(&mu, &nu);
        for t in [0.25, 0.5, 0.8] {
            let mt = displacement_interpolate(&mu, &nu, t, None).unwrap();
            assert!((w2_1d(&mu, &mt) - t * d).abs() < 1e-12);
            assert!((w2_1d(&mt, &nu) - (1.0 - t) * d).abs() < 1e-12);
        }
        assert_eq!(displacement_interpolate(&mu, &nu, 0.0, None).unwrap(), mu);
    }
}
