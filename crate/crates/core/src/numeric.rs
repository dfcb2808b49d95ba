//! Small numerical helpers shared across modules.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};
use statrs::distribution::{ContinuousCDF, Normal};

/// Neumaier-compensated accumulator.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(iter: I) -> f64 {
    iter.into_iter().collect::<KahanSum>().value()
}

/// `sum_{k=0}^{m-1} r^k`, closed form away from `r = 1`.
pub fn geometric_sum(r: f64, m: u64) -> f64 {
    if m == 0 {
        return 0.0;
    }
    if (r - 1.0).abs() > 1e-9 {
        (1.0 - r.powf(m as f64)) / (1.0 - r)
    } else {
        let mut acc = KahanSum::new();
        let mut p = 1.0;
        for _ in 0..m {
            acc.add(p);
            p *= r;
        }
        acc.value()
    }
}

/// `log(sum_i w_i exp(a_i))` evaluated without overflow.
pub fn log_sum_exp_weighted(weights: &[f64], exponents: &[f64]) -> f64 {
    let max = weights
        .iter()
        .zip(exponents)
        .filter(|(w, _)| **w > 0.0)
        .map(|(_, a)| *a)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s = compensated_sum(
        weights
            .iter()
            .zip(exponents)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, a)| w * (a - max).exp()),
    );
    max + s.ln()
}

/// Inverse of the standard normal CDF.
pub fn normal_quantile(p: f64) -> f64 {
    let n = Normal::standard();
    n.inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}

/// Gauss–Hermite rule for the standard normal weight: nodes `z_i` and weights
/// `w_i` with `sum_i w_i g(z_i) ≈ E g(Z)`, `Z ~ N(0, 1)`. Golub–Welsch, cached per order.
pub fn gauss_hermite(order: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().unwrap().get(&order) {
        return rule.clone();
    }
    let rule = Arc::new(hermite_rule(order));
    cache.lock().unwrap().insert(order, rule.clone());
    rule
}

fn hermite_rule(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut jacobi = DMatrix::<f64>::zeros(order, order);
    for k in 1..order {
        let b = (k as f64).sqrt();
        jacobi[(k, k - 1)] = b;
        jacobi[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut nodes: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
    nodes.sort_by(f64::total_cmp);
    // eigenvector weights lose relative accuracy in the tails: polish each node with
    // Newton on the orthonormal recurrence and take w = 1 / sum_k p_k(z)^2
    let weights: Vec<f64> = nodes
        .iter_mut()
        .map(|z| {
            for _ in 0..3 {
                let (pn, pn1, _) = orthonormal_hermite(*z, order);
                let step = pn / ((order as f64).sqrt() * pn1);
                if !step.is_finite() {
                    break;
                }
                *z -= step;
            }
            1.0 / orthonormal_hermite(*z, order).2
        })
        .collect();
    let total: f64 = weights.iter().sum();
    (nodes, weights.into_iter().map(|w| w / total).collect())
}

/// `(p_n(z), p_{n-1}(z), sum_{k<n} p_k(z)^2)` for orthonormal probabilists' Hermite polynomials.
fn orthonormal_hermite(z: f64, n: usize) -> (f64, f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sq = 0.0;
    for k in 0..n {
        sq += cur * cur;
        let next = (z * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sq)
}

/// `E|a + b Z|^s` for `Z ~ N(0,1)`, `s >= 1`.
pub fn gaussian_abs_moment(a: f64, b: f64, s: f64) -> f64 {
    let b = b.abs();
    if b == 0.0 {
        return a.abs().powf(s);
    }
    if (s - 2.0).abs() < 1e-15 {
        return a * a + b * b;
    }
    if (s - 1.0).abs() < 1e-15 {
        // folded normal mean
        let r = a / b;
        return b * (2.0 / std::f64::consts::PI).sqrt() * (-0.5 * r * r).exp()
            + a * (1.0 - 2.0 * normal_cdf(-r));
    }
    // split the integral at the kink z0 = -a/b and integrate each side
    let z0 = -a / b;
    let f = |z: f64| (a + b * z).abs().powf(s) * (-0.5 * z * z).exp();
    let lo = (z0 - 12.0).min(-12.0);
    let hi = (z0 + 12.0).max(12.0);
    let mut total = 0.0;
    for (l, h) in [(lo, z0.clamp(lo, hi)), (z0.clamp(lo, hi), hi)] {
        if h > l {
            total += gauss_legendre_composite(&f, l, h, 64);
        }
    }
    total / (2.0 * std::f64::consts::PI).sqrt()
}

fn gauss_legendre_composite(f: &dyn Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    // 5-point Gauss–Legendre per panel
    const X: [f64; 5] = [
        0.0,
        -0.538_469_310_105_683_1,
        0.538_469_310_105_683_1,
        -0.906_179_845_938_664,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (b - a) / panels as f64;
    let mut acc = KahanSum::new();
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        for k in 0..5 {
            acc.add(W[k] * f(c + 0.5 * h * X[k]) * 0.5 * h);
        }
    }
    acc.value()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// Operator 2-norm (largest singular value).
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Principal square root of a symmetric PSD matrix; tiny negative eigenvalues clamp to zero.
pub fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(m.clone());
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.transpose()
}
