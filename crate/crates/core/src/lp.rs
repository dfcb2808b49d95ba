//! Dense tableau simplex for small linear programs.
//!
//! Used for the Kantorovich dual and as the fallback when the transportation
//! network simplex stalls on a degenerate instance. Bland's rule throughout, so
//! the method terminates on degenerate problems.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug)]
struct Tableau {
    // rows x (cols + 1); the last column holds the right-hand side
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
    iterations: usize,
    max_iterations: usize,
}

enum Step {
    Optimal,
    Unbounded(usize),
    Pivoted,
}

impl Tableau {
    fn rhs(&self, r: usize) -> f64 {
        self.t[r][self.cols]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[row].clone();
        for (r, line) in self.t.iter_mut().enumerate() {
            if r == row {
                continue;
            }
            let f = line[col];
            if f != 0.0 {
                for (v, pv) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                line[col] = 0.0;
            }
        }
        self.basis[row] = col;
        self.iterations += 1;
    }

    /// Reduced costs `c_j - c_B B^-1 A_j` for the given cost vector.
    fn reduced_costs(&self, cost: &[f64], allowed: usize) -> Vec<f64> {
        let mut rc: Vec<f64> = cost[..allowed].to_vec();
        for (r, &b) in self.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (j, v) in rc.iter_mut().enumerate() {
                    *v -= cb * self.t[r][j];
                }
            }
        }
        rc
    }

    fn step(&mut self, cost: &[f64], allowed: usize) -> Step {
        let rc = self.reduced_costs(cost, allowed);
        let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        let Some(enter) = (0..allowed).find(|&j| rc[j] < -PIVOT_EPS * scale) else {
            return Step::Optimal;
        };
        let mut best: Option<(usize, f64)> = None;
        for r in 0..self.t.len() {
            let a = self.t[r][enter];
            if a > PIVOT_EPS {
                let ratio = self.rhs(r) / a;
                best = match best {
                    None => Some((r, ratio)),
                    Some((br, bv)) => {
                        if ratio < bv - 1e-15
                            || (ratio <= bv + 1e-15 && self.basis[r] < self.basis[br])
                        {
                            Some((r, ratio))
                        } else {
                            Some((br, bv))
                        }
                    }
                };
            }
        }
        match best {
            None => Step::Unbounded(enter),
            Some((row, _)) => {
                self.pivot(row, enter);
                Step::Pivoted
            }
        }
    }

    fn run(&mut self, cost: &[f64], allowed: usize) -> Result<()> {
        loop {
            if self.iterations > self.max_iterations {
                return Err(Error::internal(
                    "simplex iteration limit reached",
                    format!(
                        "iterations = {}, basis = {:?}, rhs = {:?}",
                        self.iterations,
                        self.basis,
                        (0..self.t.len()).map(|r| self.rhs(r)).collect::<Vec<_>>()
                    ),
                ));
            }
            match self.step(cost, allowed) {
                Step::Optimal => return Ok(()),
                Step::Unbounded(j) => {
                    return Err(Error::internal(
                        "linear program is unbounded",
                        format!("entering column {j}, basis {:?}", self.basis),
                    ))
                }
                Step::Pivoted => {}
            }
        }
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs(r).max(0.0);
            }
        }
        x
    }
}

/// Minimize `c.x` subject to `A x = b`, `x >= 0`. Two-phase method.
pub fn solve_equality(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::input("inconsistent linear program dimensions"));
    }
    let cols = n + m;
    let mut t = Vec::with_capacity(m);
    for (row, &rhs) in a.iter().zip(b) {
        let sign = if rhs < 0.0 { -1.0 } else { 1.0 };
        let mut line = vec![0.0; cols + 1];
        for (j, v) in row.iter().enumerate() {
            line[j] = sign * v;
        }
        line[cols] = sign * rhs;
        t.push(line);
    }
    for (r, line) in t.iter_mut().enumerate() {
        line[n + r] = 1.0;
    }
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        cols,
        iterations: 0,
        max_iterations: 50_000 + 50 * (n + m),
    };

    // phase 1: minimize the sum of artificials
    let mut phase1 = vec![0.0; cols];
    for v in phase1.iter_mut().skip(n) {
        *v = 1.0;
    }
    tab.run(&phase1, cols)?;
    let infeasibility: f64 = tab
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bcol)| bcol >= n)
        .map(|(r, _)| tab.rhs(r))
        .sum();
    let scale = b.iter().fold(1.0f64, |s, v| s.max(v.abs()));
    if infeasibility > 1e-9 * scale {
        return Err(Error::input(format!(
            "linear program is infeasible (phase-one residual {infeasibility:e})"
        )));
    }
    // drive artificials out of the basis; rows that cannot be cleared are redundant
    let mut r = 0;
    while r < tab.t.len() {
        if tab.basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| tab.t[r][j].abs() > 1e-9) {
                tab.pivot(r, j);
                r += 1;
            } else {
                tab.t.remove(r);
                tab.basis.remove(r);
            }
        } else {
            r += 1;
        }
    }

    let mut cost = c.to_vec();
    cost.resize(cols, 0.0);
    tab.run(&cost, n)?;
    let x = tab.primal(n);
    let objective = crate::numeric::compensated_sum(x.iter().zip(c).map(|(x, c)| x * c));
    Ok(LpSolution {
        x,
        objective,
        iterations: tab.iterations,
    })
}

/// Minimize `c.x` subject to `A x <= b`, `x >= 0`, with `b >= 0` so the slack basis is feasible.
pub fn solve_leq(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Result<LpSolution> {
    let n = c.len();
    let m = a.len();
    if b.len() != m || a.iter().any(|r| r.len() != n) {
        return Err(Error::input("inconsistent linear program dimensions"));
    }
    if let Some(v) = b.iter().find(|v| **v < 0.0) {
        return Err(Error::input(format!(
            "solve_leq needs a nonnegative right-hand side, got {v}"
        )));
    }
    let cols = n + m;
    let t = a
        .iter()
        .zip(b)
        .enumerate()
        .map(|(r, (row, &rhs))| {
            let mut line = vec![0.0; cols + 1];
            line[..n].copy_from_slice(row);
            line[n + r] = 1.0;
            line[cols] = rhs;
            line
        })
        .collect();
    let mut tab = Tableau {
        t,
        basis: (n..n + m).collect(),
        cols,
        iterations: 0,
        max_iterations: 50_000 + 50 * (n + m),
    };
    let mut cost = c.to_vec();
    cost.resize(cols, 0.0);
    tab.run(&cost, cols)?;
    let x = tab.primal(n);
    let objective = crate::numeric::compensated_sum(x.iter().zip(c).map(|(x, c)| x * c));
    Ok(LpSolution {
        x,
        objective,
        iterations: tab.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_equality_program() {
        // min x0 + 2 x1 + 3 x2 s.t. x0 + x1 + x2 = 1, x1 - x2 = 0
        let s = solve_equality(
            &[1.0, 2.0, 3.0],
            &[vec![1.0, 1.0, 1.0], vec![0.0, 1.0, -1.0]],
            &[1.0, 0.0],
        )
        .unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.x[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows_and_infeasibility() {
        let s = solve_equality(
            &[1.0, 1.0],
            &[vec![1.0, 1.0], vec![2.0, 2.0]],
            &[1.0, 2.0],
        )
        .unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        let e = solve_equality(&[1.0], &[vec![1.0], vec![1.0]], &[1.0, 2.0]).unwrap_err();
        assert!(e.is_input());
    }

    #[test]
    fn leq_program() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6  -> (1.6, 1.2), value 2.8
        let s = solve_leq(&[-1.0, -1.0], &[vec![1.0, 2.0], vec![3.0, 1.0]], &[4.0, 6.0]).unwrap();
        assert!((s.objective + 2.8).abs() < 1e-12);
    }

    #[test]
    fn unbounded_is_reported() {
        let e = solve_leq(&[-1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0]).unwrap_err();
        assert!(matches!(e, Error::Internal { .. }));
    }
}
