//! Metric spaces, product metrics and probability measures.

use std::collections::HashMap;
use std::fmt::Debug;
use std::hash::Hash;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, min_eigenvalue};

/// Largest support (and finite space) accepted by the exact solvers.
pub const MAX_SUPPORT: usize = 4096;

/// Relative deviation of a weight vector from unit mass that is silently renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;

/// A point type that can label atoms of a discrete measure.
///
/// `key` must identify points exactly; two points are the same atom iff their keys match.
pub trait Point: Clone + PartialEq + Debug + Send + Sync {
    type Key: Eq + Hash + Clone + Debug;
    fn key(&self) -> Self::Key;
}

impl Point for usize {
    type Key = usize;
    fn key(&self) -> usize {
        *self
    }
}

fn f64_key(x: f64) -> u64 {
    // -0.0 and 0.0 are the same point
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

impl Point for f64 {
    type Key = u64;
    fn key(&self) -> u64 {
        f64_key(*self)
    }
}

impl<P: Point> Point for Vec<P> {
    type Key = Vec<P::Key>;
    fn key(&self) -> Vec<P::Key> {
        self.iter().map(|p| p.key()).collect()
    }
}

impl Point for String {
    type Key = String;
    fn key(&self) -> String {
        self.clone()
    }
}


/// A distance function on points of type `P`.
pub trait Metric<P>: Sync {
    fn distance(&self, a: &P, b: &P) -> f64;

    /// Whether `p` is a point of this space.
    fn contains(&self, _p: &P) -> bool {
        true
    }
}

/// The real line with `d(x, y) = |x - y|`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RealLine;

impl Metric<f64> for RealLine {
    fn distance(&self, a: &f64, b: &f64) -> f64 {
        (a - b).abs()
    }

    fn contains(&self, p: &f64) -> bool {
        p.is_finite()
    }
}

/// `R^m` with the Euclidean norm.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Euclidean;

impl Metric<Vec<f64>> for Euclidean {
    fn distance(&self, a: &Vec<f64>, b: &Vec<f64>) -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Labeled points with an explicit distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteMetricSpace {
    labels: Vec<String>,
    dist: Vec<f64>,
}

impl FiniteMetricSpace {
    /// Validates symmetry, zero diagonal, nonnegativity and the triangle inequality (1e-12).
    pub fn new(labels: Vec<String>, dist: Vec<Vec<f64>>) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::input("metric space must have at least one point"));
        }
        if n > MAX_SUPPORT {
            return Err(Error::input(format!(
                "metric space has {n} points, more than the supported {MAX_SUPPORT}"
            )));
        }
        if dist.len() != n || dist.iter().any(|r| r.len() != n) {
            return Err(Error::input("distance matrix must be square and match the labels"));
        }
        let mut seen = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if let Some(j) = seen.insert(l.clone(), i) {
                return Err(Error::input(format!("duplicate label {l:?} at {j} and {i}")));
            }
        }
        for i in 0..n {
            if dist[i][i] != 0.0 {
                return Err(Error::input(format!("dist[{i}][{i}] must be exactly zero")));
            }
            for j in 0..n {
                let d = dist[i][j];
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::input(format!("dist[{i}][{j}] = {d} is not a nonnegative real")));
                }
                if d != dist[j][i] {
                    return Err(Error::input(format!("distance matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if dist[i][k] > dist[i][j] + dist[j][k] + 1e-12 {
                        return Err(Error::input(format!(
                            "triangle inequality fails for ({i}, {j}, {k})"
                        )));
                    }
                }
            }
        }
        Ok(Self {
            labels,
            dist: dist.into_iter().flatten().collect(),
        })
    }

    /// Space with labels `"0"`, `"1"`, ...
    pub fn from_matrix(dist: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..dist.len()).map(|i| i.to_string()).collect();
        Self::new(labels, dist)
    }

    /// Points of the real line, distance `|x - y|`.
    pub fn from_reals(points: &[f64]) -> Result<Self> {
        let dist = points
            .iter()
            .map(|x| points.iter().map(|y| (x - y).abs()).collect())
            .collect();
        let labels = points.iter().map(|x| format!("{x}")).collect();
        Self::new(labels, dist)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.len() + j]
    }

    pub fn matrix(&self) -> Vec<Vec<f64>> {
        self.dist.chunks(self.len()).map(|r| r.to_vec()).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.dist.iter().cloned().fold(0.0, f64::max)
    }
}

impl Metric<usize> for FiniteMetricSpace {
    fn distance(&self, a: &usize, b: &usize) -> f64 {
        self.d(*a, *b)
    }

    fn contains(&self, p: &usize) -> bool {
        *p < self.len()
    }
}

/// `X^n` with `d^(s)(x, y) = (sum_j d(x_j, y_j)^s)^(1/s)`.
#[derive(Debug, Clone)]
pub struct ProductSpace<M> {
    base: M,
    factors: usize,
    order: f64,
}

impl<M> ProductSpace<M> {
    pub fn new(base: M, factors: usize, order: f64) -> Result<Self> {
        if factors == 0 {
            return Err(Error::input("product space needs at least one factor"));
        }
        check_order_unbounded(order)?;
        Ok(Self { base, factors, order })
    }

    pub fn base(&self) -> &M {
        &self.base
    }

    pub fn factors(&self) -> usize {
        self.factors
    }

    pub fn order(&self) -> f64 {
        self.order
    }
}

impl<P, M: Metric<P>> Metric<Vec<P>> for ProductSpace<M> {
    fn distance(&self, a: &Vec<P>, b: &Vec<P>) -> f64 {
        debug_assert_eq!(a.len(), self.factors);
        debug_assert_eq!(b.len(), self.factors);
        product_sum(&self.base, a, b, self.order).powf(1.0 / self.order)
    }

    fn contains(&self, p: &Vec<P>) -> bool {
        p.len() == self.factors && p.iter().all(|x| self.base.contains(x))
    }
}

fn product_sum<P, M: Metric<P>>(base: &M, x: &[P], y: &[P], s: f64) -> f64 {
    compensated_sum(x.iter().zip(y).map(|(a, b)| base.distance(a, b).powf(s)))
}

fn check_order_unbounded(s: f64) -> Result<()> {
    if !(s.is_finite() && s >= 1.0) {
        return Err(Error::input(format!("order s = {s} must lie in [1, inf)")));
    }
    Ok(())
}

pub(crate) fn check_order(s: f64) -> Result<()> {
    if !(1.0..=2.0).contains(&s) {
        return Err(Error::input(format!("order s = {s} must lie in [1, 2]")));
    }
    Ok(())
}

/// `d^(s)` between two tuples of base points.
pub fn product_distance<P, M: Metric<P>>(base: &M, x: &[P], y: &[P], s: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::input(format!(
            "tuples have different lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    check_order_unbounded(s)?;
    if x.len() == 1 {
        return Ok(base.distance(&x[0], &y[0]));
    }
    Ok(product_sum(base, x, y, s).powf(1.0 / s))
}

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure<P> {
    support: Vec<P>,
    weights: Vec<f64>,
}

impl<P: Point> DiscreteMeasure<P> {
    /// Weights within 1e-9 of unit mass are renormalized; anything further off is rejected.
    pub fn new(support: Vec<P>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::input("measure must have a nonempty support"));
        }
        if support.len() != weights.len() {
            return Err(Error::input(format!(
                "support has {} points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::input(format!("weight {i} = {w} is not a nonnegative real")));
        }
        let total = compensated_sum(weights.iter().cloned());
        if (total - 1.0).abs() > RENORMALIZE_TOL {
            return Err(Error::input(format!("weights sum to {total}, not 1")));
        }
        let mut seen = HashMap::with_capacity(support.len());
        for (i, p) in support.iter().enumerate() {
            if let Some(j) = seen.insert(p.key(), i) {
                return Err(Error::input(format!(
                    "support points {j} and {i} coincide ({p:?})"
                )));
            }
        }
        let weights = if total == 1.0 {
            weights
        } else {
            weights.into_iter().map(|w| w / total).collect()
        };
        Ok(Self { support, weights })
    }

    /// Normalizes arbitrary nonnegative masses.
    pub fn from_masses(support: Vec<P>, masses: Vec<f64>) -> Result<Self> {
        let total = compensated_sum(masses.iter().cloned());
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::input("masses must have a positive finite total"));
        }
        Self::new(support, masses.into_iter().map(|m| m / total).collect())
    }

    pub fn dirac(p: P) -> Self {
        Self {
            support: vec![p],
            weights: vec![1.0],
        }
    }

    pub fn uniform(support: Vec<P>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn support(&self) -> &[P] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&P, f64)> {
        self.support.iter().zip(self.weights.iter().cloned())
    }

    /// Mass of a point (zero off the support).
    pub fn mass_of(&self, p: &P) -> f64 {
        let k = p.key();
        self.support
            .iter()
            .position(|q| q.key() == k)
            .map_or(0.0, |i| self.weights[i])
    }

    /// Index from point key to position, for repeated lookups.
    pub fn index(&self) -> HashMap<P::Key, usize> {
        self.support
            .iter()
            .enumerate()
            .map(|(i, p)| (p.key(), i))
            .collect()
    }

    /// Drops zero-weight atoms.
    pub fn trimmed(&self) -> Self {
        let (support, weights) = self
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(p, w)| (p.clone(), w))
            .unzip();
        Self { support, weights }
    }

    /// Integral of `f` against the measure.
    pub fn expect(&self, f: impl Fn(&P) -> f64) -> f64 {
        compensated_sum(self.iter().map(|(p, w)| w * f(p)))
    }

    /// Push-forward through `f`; atoms with equal images merge.
    pub fn push_forward<Q: Point>(&self, f: impl Fn(&P) -> Q) -> DiscreteMeasure<Q> {
        let mut order: Vec<Q> = Vec::new();
        let mut mass: HashMap<Q::Key, (usize, f64)> = HashMap::new();
        for (p, w) in self.iter() {
            let q = f(p);
            let k = q.key();
            match mass.get_mut(&k) {
                Some(e) => e.1 += w,
                None => {
                    mass.insert(k, (order.len(), w));
                    order.push(q);
                }
            }
        }
        let mut weights = vec![0.0; order.len()];
        for (_, (i, w)) in mass {
            weights[i] = w;
        }
        DiscreteMeasure {
            support: order,
            weights,
        }
    }
}

/// Relative frequencies of the samples.
pub fn empirical_measure<P: Point>(samples: &[P]) -> Result<DiscreteMeasure<P>> {
    if samples.is_empty() {
        return Err(Error::input("cannot build an empirical measure from no samples"));
    }
    let mut order: Vec<P> = Vec::new();
    let mut counts: HashMap<P::Key, (usize, u64)> = HashMap::new();
    for p in samples {
        let k = p.key();
        match counts.get_mut(&k) {
            Some(e) => e.1 += 1,
            None => {
                counts.insert(k, (order.len(), 1));
                order.push(p.clone());
            }
        }
    }
    let mut c = vec![0u64; order.len()];
    for (_, (i, n)) in counts {
        c[i] = n;
    }
    let total = samples.len() as u64;
    let weights = c.into_iter().map(|n| n as f64 / total as f64).collect();
    DiscreteMeasure::new(order, weights)
}

/// `sum_i w_i d(x0, y_i)^s`.
pub fn moment_order_s<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    x0: &P,
    s: f64,
) -> f64 {
    mu.expect(|y| metric.distance(x0, y).powf(s))
}

/// Total-variation distance `sup_A |mu(A) - nu(A)|`.
pub fn total_variation<P: Point>(mu: &DiscreteMeasure<P>, nu: &DiscreteMeasure<P>) -> f64 {
    let nu_idx = nu.index();
    let mut acc = 0.0;
    let mut used = vec![false; nu.len()];
    for (p, w) in mu.iter() {
        let v = match nu_idx.get(&p.key()) {
            Some(&j) => {
                used[j] = true;
                nu.weights()[j]
            }
            None => 0.0,
        };
        acc += (w - v).abs();
    }
    for (j, w) in nu.weights().iter().enumerate() {
        if !used[j] {
            acc += w;
        }
    }
    0.5 * acc
}

/// Gaussian law `N(mean, covariance)` on `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianMeasure {
    /// Covariance must be symmetric (1e-12) with eigenvalues >= -1e-12.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let m = mean.len();
        if m == 0 {
            return Err(Error::input("gaussian dimension must be positive"));
        }
        if cov.nrows() != m || cov.ncols() != m {
            return Err(Error::input(format!(
                "covariance is {}x{} but mean has dimension {m}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if cov.iter().any(|x| !x.is_finite()) || mean.iter().any(|x| !x.is_finite()) {
            return Err(Error::input("gaussian parameters must be finite"));
        }
        for i in 0..m {
            for j in 0..i {
                if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-12 {
                    return Err(Error::input("covariance is not symmetric"));
                }
            }
        }
        let cov = (&cov + cov.transpose()) * 0.5;
        let lmin = min_eigenvalue(&cov);
        if lmin < -1e-12 {
            return Err(Error::input(format!(
                "covariance is not positive semidefinite (min eigenvalue {lmin})"
            )));
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, variance))
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mean: DVector::zeros(dim),
            cov: DMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}
