//! Transportation simplex (MODI / stepping-stone) on a dense cost matrix.

use std::collections::VecDeque;

use super::{check_same_dim, Coupling, W2Result};
use crate::error::{Error, Result};
use crate::measures::{sq_dist, DiscreteMeasure, NormSpec};

/// Largest `n·m` the dense solver accepts.
pub const LP_SIZE_GUARD: usize = 250_000;

struct Transport {
    n: usize,
    m: usize,
    cost: Vec<f64>,
    flow: Vec<f64>,
    basic: Vec<bool>,
    basis: Vec<(usize, usize)>,
}

impl Transport {
    fn north_west(n: usize, m: usize, cost: Vec<f64>, a: &[f64], b: &[f64]) -> Self {
        let mut t = Self {
            n,
            m,
            cost,
            flow: vec![0.0; n * m],
            basic: vec![false; n * m],
            basis: Vec::with_capacity(n + m - 1),
        };
        let (mut ra, mut rb) = (a.to_vec(), b.to_vec());
        let (mut i, mut j) = (0, 0);
        loop {
            let x = ra[i].min(rb[j]).max(0.0);
            t.flow[i * m + j] = x;
            t.basic[i * m + j] = true;
            t.basis.push((i, j));
            ra[i] -= x;
            rb[j] -= x;
            if i == n - 1 && j == m - 1 {
                break;
            }
            // one step per cell keeps exactly n + m − 1 basic cells, degenerate or not
            if j == m - 1 || (i < n - 1 && ra[i] <= rb[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        t
    }

    /// Duals with `u₀ = 0`, propagated over the basis tree.
    fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let (n, m) = (self.n, self.m);
        let mut row_adj = vec![Vec::new(); n];
        let mut col_adj = vec![Vec::new(); m];
        for &(i, j) in &self.basis {
            row_adj[i].push(j);
            col_adj[j].push(i);
        }
        let mut u = vec![f64::NAN; n];
        let mut v = vec![f64::NAN; m];
        let mut queue = VecDeque::new();
        u[0] = 0.0;
        queue.push_back((true, 0usize));
        while let Some((is_row, k)) = queue.pop_front() {
            if is_row {
                for &j in &row_adj[k] {
                    if v[j].is_nan() {
                        v[j] = self.cost[k * m + j] - u[k];
                        queue.push_back((false, j));
                    }
                }
            } else {
                for &i in &col_adj[k] {
                    if u[i].is_nan() {
                        u[i] = self.cost[i * m + k] - v[k];
                        queue.push_back((true, i));
                    }
                }
            }
        }
        (u, v)
    }

    /// Tree path from row `r` to column `c` as a list of cells, starting at a
    /// cell in row `r` and ending at a cell in column `c`.
    fn path(&self, r: usize, c: usize) -> Vec<(usize, usize)> {
        let (n, m) = (self.n, self.m);
        let mut row_adj = vec![Vec::new(); n];
        let mut col_adj = vec![Vec::new(); m];
        for &(i, j) in &self.basis {
            row_adj[i].push(j);
            col_adj[j].push(i);
        }
        // node ids: rows 0..n, columns n..n+m
        let mut parent = vec![usize::MAX; n + m];
        let mut queue = VecDeque::new();
        parent[r] = r;
        queue.push_back(r);
        while let Some(node) = queue.pop_front() {
            if node == n + c {
                break;
            }
            if node < n {
                for &j in &row_adj[node] {
                    if parent[n + j] == usize::MAX {
                        parent[n + j] = node;
                        queue.push_back(n + j);
                    }
                }
            } else {
                for &i in &col_adj[node - n] {
                    if parent[i] == usize::MAX {
                        parent[i] = node;
                        queue.push_back(i);
                    }
                }
            }
        }
        let mut cells = Vec::new();
        let mut node = n + c;
        while node != r {
            let p = parent[node];
            let cell = if node >= n { (p, node - n) } else { (node, p - n) };
            cells.push(cell);
            node = p;
        }
        cells.reverse();
        cells
    }

    fn solve(&mut self, max_iters: usize) -> Result<usize> {
        let (n, m) = (self.n, self.m);
        let scale = self.cost.iter().fold(0.0f64, |s, c| s.max(c.abs())).max(1e-300);
        let tol = 1e-12 * scale;
        for iter in 0..max_iters {
            let (u, v) = self.duals();
            // Dantzig pricing, ties to the smallest row-major index
            let mut enter = None;
            let mut best = -tol;
            for i in 0..n {
                for j in 0..m {
                    let k = i * m + j;
                    if self.basic[k] {
                        continue;
                    }
                    let r = self.cost[k] - u[i] - v[j];
                    if r < best {
                        best = r;
                        enter = Some((i, j));
                    }
                }
            }
            let Some((ei, ej)) = enter else {
                return Ok(iter);
            };
            // cycle: entering cell (+), then the tree path from column ej back to row ei
            let path = self.path(ei, ej);
            // path runs row ei → … → column ej; cells alternate -, +, - … ending with -
            let minus: Vec<(usize, usize)> = path.iter().copied().step_by(2).collect();
            let plus: Vec<(usize, usize)> = path.iter().copied().skip(1).step_by(2).collect();
            let theta = minus
                .iter()
                .map(|&(i, j)| self.flow[i * m + j])
                .fold(f64::INFINITY, f64::min);
            let leave = minus
                .iter()
                .copied()
                .filter(|&(i, j)| self.flow[i * m + j] == theta)
                .min()
                .expect("cycle has a minus cell");
            for &(i, j) in &minus {
                self.flow[i * m + j] -= theta;
            }
            for &(i, j) in &plus {
                self.flow[i * m + j] += theta;
            }
            self.flow[ei * m + ej] = theta;
            self.flow[leave.0 * m + leave.1] = 0.0;
            self.basic[leave.0 * m + leave.1] = false;
            self.basic[ei * m + ej] = true;
            let pos = self.basis.iter().position(|&c| c == leave).expect("leaving cell is basic");
            self.basis[pos] = (ei, ej);
        }
        Err(Error::NotConverged {
            solver: "transportation simplex",
            iterations: max_iters,
            residual: f64::NAN,
        })
    }
}

/// Exact W₂ by the transportation simplex. With `norm`, the ground cost is
/// `‖x − y‖²_A`.
pub fn w2_lp(mu: &DiscreteMeasure, nu: &DiscreteMeasure, norm: Option<&NormSpec>) -> Result<W2Result> {
    check_same_dim(mu, nu)?;
    if let Some(a) = norm {
        if a.dim() != mu.dim() {
            return Err(Error::DimensionMismatch {
                expected: mu.dim(),
                got: a.dim(),
            });
        }
    }
    let rows: Vec<usize> = (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect();
    let cols: Vec<usize> = (0..nu.len()).filter(|&j| nu.weights()[j] > 0.0).collect();
    let (n, m) = (rows.len(), cols.len());
    if n * m > LP_SIZE_GUARD {
        return Err(Error::SizeGuard {
            size: n * m,
            limit: LP_SIZE_GUARD,
        });
    }
    let mut cost = Vec::with_capacity(n * m);
    for &i in &rows {
        for &j in &cols {
            cost.push(sq_dist(mu.point(i), nu.point(j), norm));
        }
    }
    let a: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let b: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let mut t = Transport::north_west(n, m, cost, &a, &b);
    t.solve(50 * (n + m) * (n + m) + 1000)?;
    let (u, v) = t.duals();

    let mut pairs = Vec::with_capacity(n + m);
    for &(i, j) in &t.basis {
        let f = t.flow[i * m + j];
        if f > 0.0 {
            pairs.push((rows[i], cols[j], f));
        }
    }
    pairs.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));

    // potentials on the full supports; zero-mass atoms get c-transforms
    let mut phi = vec![0.0; mu.len()];
    let mut psi = vec![f64::INFINITY; nu.len()];
    for (k, &i) in rows.iter().enumerate() {
        phi[i] = u[k];
    }
    for (k, &j) in cols.iter().enumerate() {
        psi[j] = v[k];
    }
    for j in 0..nu.len() {
        if nu.weights()[j] <= 0.0 {
            psi[j] = rows
                .iter()
                .map(|&i| sq_dist(mu.point(i), nu.point(j), norm) - phi[i])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for i in 0..mu.len() {
        if mu.weights()[i] <= 0.0 {
            phi[i] = (0..nu.len())
                .map(|j| sq_dist(mu.point(i), nu.point(j), norm) - psi[j])
                .fold(f64::INFINITY, f64::min);
        }
    }
    let coupling = Coupling::new(mu, nu, norm, pairs, Some((phi, psi)));
    Ok(W2Result {
        distance: coupling.cost().max(0.0).sqrt(),
        coupling,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirac_target() {
        let mu = DiscreteMeasure::on_line(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::dirac(&[0.5]).unwrap();
        let r = w2_lp(&mu, &nu, None).unwrap();
        assert!((r.distance - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_plan_is_diagonal() {
        let mu = DiscreteMeasure::new(2, vec![0.0, 0.0, 1.0, 0.0, 0.0, 2.0], vec![0.2, 0.5, 0.3]).unwrap();
        let r = w2_lp(&mu, &mu, None).unwrap();
        assert!(r.distance < 1e-12);
        assert!(r.coupling.pairs().iter().all(|&(i, j, _)| i == j));
    }

    #[test]
    fn small_instance_matches_enumeration() {
        // 2×2 with equal weights: optimum is the cheaper of the two permutations
        let mu = DiscreteMeasure::new(2, vec![0.0, 0.0, 1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let nu = DiscreteMeasure::new(2, vec![1.0, 0.0, 0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let r = w2_lp(&mu, &nu, None).unwrap();
        assert!((r.coupling.cost() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn size_guard() {
        let pts: Vec<f64> = (0..600).map(|i| i as f64).collect();
        let mu = DiscreteMeasure::on_line(pts.clone(), vec![1.0; 600]).unwrap();
        assert!(matches!(w2_lp(&mu, &mu, None), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn weighted_cost_scales_for_scalar_matrix() {
        let mu = DiscreteMeasure::on_line(vec![0.0, 1.0, 2.5], vec![0.2, 0.5, 0.3]).unwrap();
        let nu = DiscreteMeasure::on_line(vec![-1.0, 0.4], vec![0.6, 0.4]).unwrap();
        let a = NormSpec::scaled_identity(1, 3.0).unwrap();
        let plain = w2_lp(&mu, &nu, None).unwrap().distance;
        let weighted = w2_lp(&mu, &nu, Some(&a)).unwrap().distance;
        assert!((weighted - 3f64.sqrt() * plain).abs() < 1e-12);
    }
}
