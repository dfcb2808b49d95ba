//! Transportation simplex on the bipartite spanning-tree basis.
//!
//! Rows are nodes `0..m`, columns are nodes `m..m+n`. A basis is a spanning
//! tree of `m + n - 1` cells; node potentials satisfy `u_i + v_j = c_ij` on the
//! tree and a cell enters when its reduced cost is negative.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

#[derive(Debug, Clone)]
pub struct NetworkSolution {
    /// Dense `m x n` flow.
    pub flow: Vec<Vec<f64>>,
    pub cost: f64,
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
    pub pivots: usize,
}

struct Basis {
    m: usize,
    n: usize,
    cells: Vec<(usize, usize)>,
    flow: Vec<f64>,
    // node -> indices into `cells`
    adj: Vec<Vec<usize>>,
}

impl Basis {
    fn northwest(supply: &[f64], demand: &[f64]) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut b = Basis {
            m,
            n,
            cells: Vec::with_capacity(m + n - 1),
            flow: Vec::with_capacity(m + n - 1),
            adj: vec![Vec::new(); m + n],
        };
        let mut a = supply.to_vec();
        let mut d = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = if i == m - 1 && j == n - 1 {
                // absorb rounding residue in the last cell
                a[i].max(d[j]).max(0.0)
            } else {
                a[i].min(d[j]).max(0.0)
            };
            b.push(i, j, x);
            if i == m - 1 && j == n - 1 {
                break;
            }
            a[i] -= x;
            d[j] -= x;
            if j == n - 1 || (i < m - 1 && a[i] <= d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        debug_assert_eq!(b.cells.len(), m + n - 1);
        b
    }

    fn push(&mut self, i: usize, j: usize, x: f64) {
        let k = self.cells.len();
        self.cells.push((i, j));
        self.flow.push(x);
        self.adj[i].push(k);
        self.adj[self.m + j].push(k);
    }

    fn other_end(&self, k: usize, node: usize) -> usize {
        let (i, j) = self.cells[k];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    fn potentials(&self, cost: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
        let mut pot = vec![f64::NAN; self.m + self.n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(v) = queue.pop_front() {
            for &k in &self.adj[v] {
                let w = self.other_end(k, v);
                if pot[w].is_nan() {
                    let (i, j) = self.cells[k];
                    // u_i + v_j = c_ij
                    pot[w] = cost[i][j] - pot[v];
                    queue.push_back(w);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Cells on the tree path from row node `i` to column node `m + j`.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let target = self.m + j;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[i] = true;
        let mut queue = VecDeque::from([i]);
        while let Some(v) = queue.pop_front() {
            if v == target {
                break;
            }
            for &k in &self.adj[v] {
                let w = self.other_end(k, v);
                if !seen[w] {
                    seen[w] = true;
                    parent[w] = Some((v, k));
                    queue.push_back(w);
                }
            }
        }
        let mut cells = Vec::new();
        let mut v = target;
        while v != i {
            let (p, k) = parent[v].expect("basis is a spanning tree");
            cells.push(k);
            v = p;
        }
        cells
    }

    fn replace(&mut self, leaving: usize, i: usize, j: usize, x: f64) {
        let (li, lj) = self.cells[leaving];
        self.adj[li].retain(|&k| k != leaving);
        self.adj[self.m + lj].retain(|&k| k != leaving);
        self.cells[leaving] = (i, j);
        self.flow[leaving] = x;
        self.adj[i].push(leaving);
        self.adj[self.m + j].push(leaving);
    }
}

/// Solves `min sum c_ij x_ij` over couplings of `supply` and `demand` (equal totals).
pub fn solve(
    supply: &[f64],
    demand: &[f64],
    cost: &[Vec<f64>],
    max_pivots: usize,
) -> Result<NetworkSolution> {
    let (m, n) = (supply.len(), demand.len());
    if m == 0 || n == 0 {
        return Err(Error::input("transportation problem needs nonempty marginals"));
    }
    let mut basis = Basis::northwest(supply, demand);
    let scale = cost
        .iter()
        .flatten()
        .fold(0.0f64, |s, c| s.max(c.abs()))
        .max(1e-300);
    let tol = 1e-12 * scale;
    let mut pivots = 0;
    loop {
        let (u, v) = basis.potentials(cost);
        let mut best = (0usize, 0usize, -tol);
        for i in 0..m {
            let row = &cost[i];
            let ui = u[i];
            for j in 0..n {
                let rc = row[j] - ui - v[j];
                if rc < best.2 {
                    best = (i, j, rc);
                }
            }
        }
        if best.2 >= -tol {
            let mut flow = vec![vec![0.0; n]; m];
            let mut total = KahanSum::new();
            for (k, &(i, j)) in basis.cells.iter().enumerate() {
                let x = basis.flow[k].max(0.0);
                flow[i][j] += x;
                total.add(x * cost[i][j]);
            }
            return Ok(NetworkSolution {
                flow,
                cost: total.value(),
                row_potential: u,
                col_potential: v,
                pivots,
            });
        }
        if pivots >= max_pivots {
            return Err(Error::internal(
                "network simplex did not converge",
                format!(
                    "pivots = {pivots}, best reduced cost = {:e} at ({}, {}), basis = {:?}",
                    best.2, best.0, best.1, basis.cells
                ),
            ));
        }
        let (ei, ej, _) = best;
        // cycle: entering (+), then alternating along the path back from column ej to row ei
        let path = basis.path(ei, ej);
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                let x = basis.flow[k];
                if x < theta || (x == theta && k < leaving) {
                    theta = x;
                    leaving = k;
                }
            }
        }
        let theta = theta.max(0.0);
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                basis.flow[k] -= theta;
            } else {
                basis.flow[k] += theta;
            }
        }
        basis.replace(leaving, ei, ej, theta);
        pivots += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_instance() {
        // textbook 3x4 transportation problem; optimum 435 (checked with an external LP solver)
        let supply = [15.0, 25.0, 10.0];
        let demand = [5.0, 15.0, 15.0, 15.0];
        let cost = vec![
            vec![10.0, 2.0, 20.0, 11.0],
            vec![12.0, 7.0, 9.0, 20.0],
            vec![4.0, 14.0, 16.0, 18.0],
        ];
        let s = solve(&supply, &demand, &cost, 1000).unwrap();
        assert!((s.cost - 435.0).abs() < 1e-9, "cost {}", s.cost);
        for i in 0..3 {
            let r: f64 = s.flow[i].iter().sum();
            assert!((r - supply[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_square() {
        let w = [0.25; 4];
        let cost: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| ((i as f64) - (3 - j) as f64).abs()).collect())
            .collect();
        let s = solve(&w, &w, &cost, 1000).unwrap();
        assert!(s.cost.abs() < 1e-12);
    }
}
