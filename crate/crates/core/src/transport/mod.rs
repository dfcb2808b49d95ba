//! Wasserstein distances: exact LP on finite supports, the quantile formula on
//! the line, the Gaussian closed form, and the Kantorovich–Rubinstein dual.

pub mod network;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::lp;
use crate::measure::{check_order, DiscreteMeasure, GaussianMeasure, Metric, Point};
use crate::numeric::{compensated_sum, gaussian_abs_moment, psd_sqrt, KahanSum};

/// Plans with more entries than this are not serialized.
pub const PLAN_ELIDE_ENTRIES: usize = 1_000_000;

/// Largest dense fallback LP (variables) attempted after a network-simplex stall.
const DENSE_FALLBACK_VARS: usize = 20_000;

/// Largest joint support accepted by the dual LP.
pub const DUAL_MAX_POINTS: usize = 128;

/// A coupling of two discrete measures.
#[derive(Debug, Clone)]
pub struct TransportPlan<P> {
    pub rows: DiscreteMeasure<P>,
    pub cols: DiscreteMeasure<P>,
    /// `weights[i][j]` is the mass moved from `rows.support()[i]` to `cols.support()[j]`.
    pub weights: Vec<Vec<f64>>,
    /// `sum_ij weights_ij d(x_i, y_j)^order`.
    pub cost: f64,
    pub order: f64,
}

impl<P: Point> TransportPlan<P> {
    /// Checks marginals (1e-10) and the declared cost (1e-10).
    pub fn check<M: Metric<P>>(&self, metric: &M) -> Result<()> {
        for (i, w) in self.rows.weights().iter().enumerate() {
            let r = compensated_sum(self.weights[i].iter().cloned());
            if (r - w).abs() > 1e-10 {
                return Err(Error::internal(
                    "plan row marginal mismatch",
                    format!("row {i}: {r} vs {w}"),
                ));
            }
        }
        for (j, w) in self.cols.weights().iter().enumerate() {
            let c = compensated_sum(self.weights.iter().map(|row| row[j]));
            if (c - w).abs() > 1e-10 {
                return Err(Error::internal(
                    "plan column marginal mismatch",
                    format!("column {j}: {c} vs {w}"),
                ));
            }
        }
        if self.weights.iter().flatten().any(|x| *x < 0.0) {
            return Err(Error::internal("plan has negative entries", ""));
        }
        let cost = self.recompute_cost(metric);
        if (cost - self.cost).abs() > 1e-10 {
            return Err(Error::internal(
                "plan cost mismatch",
                format!("declared {} recomputed {}", self.cost, cost),
            ));
        }
        Ok(())
    }

    pub fn recompute_cost<M: Metric<P>>(&self, metric: &M) -> f64 {
        let mut acc = KahanSum::new();
        for (i, x) in self.rows.support().iter().enumerate() {
            for (j, y) in self.cols.support().iter().enumerate() {
                let w = self.weights[i][j];
                if w > 0.0 {
                    acc.add(w * metric.distance(x, y).powf(self.order));
                }
            }
        }
        acc.value()
    }

    pub fn entries(&self) -> usize {
        self.rows.len() * self.cols.len()
    }
}

fn positive_atoms<P: Point>(mu: &DiscreteMeasure<P>) -> Vec<usize> {
    (0..mu.len()).filter(|&i| mu.weights()[i] > 0.0).collect()
}

/// `W_s(mu, nu)` by an exact transportation LP, with an optimal plan.
pub fn wasserstein_exact<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    nu: &DiscreteMeasure<P>,
    s: f64,
) -> Result<(f64, TransportPlan<P>)> {
    check_order(s)?;
    for p in mu.support().iter().chain(nu.support()) {
        if !metric.contains(p) {
            return Err(Error::input(format!("point {p:?} does not belong to the metric space")));
        }
    }
    let rows = positive_atoms(mu);
    let cols = positive_atoms(nu);
    let supply: Vec<f64> = rows.iter().map(|&i| mu.weights()[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| nu.weights()[j]).collect();
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&i| {
            cols.iter()
                .map(|&j| metric.distance(&mu.support()[i], &nu.support()[j]).powf(s))
                .collect()
        })
        .collect();
    let flow = solve_transport(&supply, &demand, &cost)?;

    let mut weights = vec![vec![0.0; nu.len()]; mu.len()];
    let mut total = KahanSum::new();
    for (a, &i) in rows.iter().enumerate() {
        for (b, &j) in cols.iter().enumerate() {
            let x = flow[a][b];
            weights[i][j] = x;
            if x > 0.0 {
                total.add(x * cost[a][b]);
            }
        }
    }
    let cost = total.value().max(0.0);
    let plan = TransportPlan {
        rows: mu.clone(),
        cols: nu.clone(),
        weights,
        cost,
        order: s,
    };
    Ok((cost.powf(1.0 / s), plan))
}

fn solve_transport(supply: &[f64], demand: &[f64], cost: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let (m, n) = (supply.len(), demand.len());
    let max_pivots = 20 * (m + n) * (m + n) + 10_000;
    match network::solve(supply, demand, cost, max_pivots) {
        Ok(sol) => Ok(sol.flow),
        Err(err @ Error::Internal { .. }) if m * n <= DENSE_FALLBACK_VARS => {
            log::warn!("network simplex stalled ({err}); falling back to the dense LP");
            let c: Vec<f64> = cost.iter().flatten().cloned().collect();
            let mut a = Vec::with_capacity(m + n);
            for i in 0..m {
                let mut row = vec![0.0; m * n];
                row[i * n..(i + 1) * n].iter_mut().for_each(|v| *v = 1.0);
                a.push(row);
            }
            for j in 0..n {
                let mut row = vec![0.0; m * n];
                for i in 0..m {
                    row[i * n + j] = 1.0;
                }
                a.push(row);
            }
            let b: Vec<f64> = supply.iter().chain(demand).cloned().collect();
            let sol = lp::solve_equality(&c, &a, &b)?;
            Ok(sol.x.chunks(n).map(|r| r.to_vec()).collect())
        }
        Err(e) => Err(e),
    }
}

/// Monotone (quantile) coupling of two measures on the line, as
/// `(index into mu, index into nu, mass)` triples.
///
/// When both measures exhaust an atom at once, both advance.
pub fn monotone_coupling(
    mu: &DiscreteMeasure<f64>,
    nu: &DiscreteMeasure<f64>,
) -> Vec<(usize, usize, f64)> {
    let sorted = |m: &DiscreteMeasure<f64>| {
        let mut idx: Vec<usize> = (0..m.len()).filter(|&i| m.weights()[i] > 0.0).collect();
        idx.sort_by(|&a, &b| m.support()[a].total_cmp(&m.support()[b]));
        idx
    };
    let a = sorted(mu);
    let b = sorted(nu);
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    let mut ra = a.first().map_or(0.0, |&k| mu.weights()[k]);
    let mut rb = b.first().map_or(0.0, |&k| nu.weights()[k]);
    while i < a.len() && j < b.len() {
        let last_a = i + 1 == a.len();
        let last_b = j + 1 == b.len();
        if last_a && last_b {
            // whatever rounding left over belongs to the final pair
            out.push((a[i], b[j], ra.max(rb)));
            break;
        }
        if (ra < rb && !last_a) || last_b {
            out.push((a[i], b[j], ra));
            rb -= ra;
            i += 1;
            ra = mu.weights()[a[i]];
        } else if rb < ra || last_a {
            out.push((a[i], b[j], rb));
            ra -= rb;
            j += 1;
            rb = nu.weights()[b[j]];
        } else {
            out.push((a[i], b[j], ra));
            i += 1;
            j += 1;
            ra = mu.weights()[a[i]];
            rb = nu.weights()[b[j]];
        }
    }
    out
}

/// `(int_0^1 |F_mu^-1(u) - F_nu^-1(u)|^s du)^(1/s)` by merging the weight partitions.
pub fn wasserstein_1d(mu: &DiscreteMeasure<f64>, nu: &DiscreteMeasure<f64>, s: f64) -> Result<f64> {
    check_order(s)?;
    let cost = compensated_sum(
        monotone_coupling(mu, nu)
            .into_iter()
            .map(|(i, j, w)| w * (mu.support()[i] - nu.support()[j]).abs().powf(s)),
    );
    Ok(cost.max(0.0).powf(1.0 / s))
}

/// `W_s` between `N(m1, v1)` and `N(m2, v2)` on the line (the monotone coupling is optimal).
pub fn gaussian_1d_ws(m1: f64, v1: f64, m2: f64, v2: f64, s: f64) -> f64 {
    gaussian_abs_moment(m1 - m2, v1.sqrt() - v2.sqrt(), s).powf(1.0 / s)
}

/// Closed-form `W_2` between Gaussian measures.
pub fn wasserstein_gaussian_w2(mu: &GaussianMeasure, nu: &GaussianMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::input(format!(
            "gaussian dimensions differ ({} vs {})",
            mu.dim(),
            nu.dim()
        )));
    }
    let dm = mu.mean() - nu.mean();
    let r1 = psd_sqrt(mu.cov());
    let cross: DMatrix<f64> = &r1 * nu.cov() * &r1;
    let cross = (&cross + cross.transpose()) * 0.5;
    let tr = (mu.cov() + nu.cov()).trace() - 2.0 * psd_sqrt(&cross).trace();
    Ok((dm.norm_squared() + tr).max(0.0).sqrt())
}

/// Optimal 1-Lipschitz potential for the Kantorovich–Rubinstein dual.
#[derive(Debug, Clone)]
pub struct KantorovichDual<P> {
    pub value: f64,
    pub points: Vec<P>,
    pub potential: Vec<f64>,
}

impl<P: Point> KantorovichDual<P> {
    /// Largest violation of `|f(x) - f(y)| <= d(x, y)`.
    pub fn lipschitz_violation<M: Metric<P>>(&self, metric: &M) -> f64 {
        let mut worst = f64::NEG_INFINITY;
        for (i, x) in self.points.iter().enumerate() {
            for (j, y) in self.points.iter().enumerate() {
                let v = self.potential[i] - self.potential[j] - metric.distance(x, y);
                worst = worst.max(v);
            }
        }
        worst
    }
}

/// `W_1(mu, nu) = max { int f dmu - int f dnu : f 1-Lipschitz }`, solved as an LP in the potential values.
pub fn kantorovich_dual_w1<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    nu: &DiscreteMeasure<P>,
) -> Result<KantorovichDual<P>> {
    for p in mu.support().iter().chain(nu.support()) {
        if !metric.contains(p) {
            return Err(Error::input(format!("point {p:?} does not belong to the metric space")));
        }
    }
    // joint support with signed mass mu - nu
    let mut points: Vec<P> = mu.support().to_vec();
    let mut delta: Vec<f64> = mu.weights().to_vec();
    let index = mu.index();
    for (p, w) in nu.iter() {
        match index.get(&p.key()) {
            Some(&i) => delta[i] -= w,
            None => {
                points.push(p.clone());
                delta.push(-w);
            }
        }
    }
    let k = points.len();
    if k > DUAL_MAX_POINTS {
        return Err(Error::Resource(format!(
            "dual LP over {k} points exceeds the {DUAL_MAX_POINTS}-point limit"
        )));
    }
    if k == 1 {
        return Ok(KantorovichDual {
            value: 0.0,
            points,
            potential: vec![0.0],
        });
    }
    let d = |i: usize, j: usize| metric.distance(&points[i], &points[j]);
    // f_0 = 0, f_i = g_i - d(0, i) with g_i >= 0; every constraint then has a
    // nonnegative right-hand side by the triangle inequality
    let nv = k - 1;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 1..k {
        let mut row = vec![0.0; nv];
        row[i - 1] = 1.0;
        a.push(row);
        b.push(2.0 * d(0, i));
        for j in 1..k {
            if i != j {
                let mut row = vec![0.0; nv];
                row[i - 1] = 1.0;
                row[j - 1] = -1.0;
                a.push(row);
                b.push((d(i, j) + d(0, i) - d(0, j)).max(0.0));
            }
        }
    }
    let c: Vec<f64> = (1..k).map(|i| -delta[i]).collect();
    let sol = lp::solve_leq(&c, &a, &b)?;
    let mut potential = vec![0.0; k];
    for i in 1..k {
        potential[i] = sol.x[i - 1] - d(0, i);
    }
    let value = compensated_sum(potential.iter().zip(&delta).map(|(f, w)| f * w));
    Ok(KantorovichDual {
        value,
        points,
        potential,
    })
}
