//! Markov, ARMA and Ornstein–Uhlenbeck models: simulation and estimators of
//! the kernel regularity constants.
//!
//! One-dimensional chains start one kernel step away from `x0`: `xi_1 ~ p(. | x0)`
//! unless an explicit initial law is given. ARMA paths are `Z_0, ..., Z_{n-1}` with
//! `Z_0 ~ N(0, I)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::ou_parameters;
use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, FiniteMetricSpace, GaussianMeasure};
use crate::numeric::{compensated_sum, gauss_hermite, log_sum_exp_weighted, min_eigenvalue};
use crate::transport::{gaussian_1d_ws, wasserstein_1d};

/// Row-sum tolerance for tabular probability vectors.
pub const ROW_TOL: f64 = 1e-12;

/// Finite-state chain: initial vector and row-stochastic transition matrix.
///
/// Without an explicit `dist`, states whose labels all parse as reals use `|x - y|`,
/// and anything else uses the discrete metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularChain {
    pub labels: Vec<String>,
    pub initial: Vec<f64>,
    pub transition: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dist: Option<Vec<Vec<f64>>>,
}

fn check_probability_vector(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::input(format!("{what} has a negative or non-finite entry")));
    }
    let total = compensated_sum(v.iter().cloned());
    if (total - 1.0).abs() > ROW_TOL {
        return Err(Error::input(format!("{what} sums to {total}, not 1")));
    }
    Ok(())
}

impl TabularChain {
    pub fn new(labels: Vec<String>, initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Result<Self> {
        let c = Self {
            labels,
            initial,
            transition,
            dist: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.labels.len();
        if k == 0 {
            return Err(Error::input("tabular chain needs at least one state"));
        }
        if self.initial.len() != k || self.transition.len() != k {
            return Err(Error::input("initial vector and transition matrix must match the labels"));
        }
        check_probability_vector(&self.initial, "initial vector")?;
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != k {
                return Err(Error::input(format!("transition row {i} has the wrong length")));
            }
            check_probability_vector(row, &format!("transition row {i}"))?;
        }
        self.space()?;
        Ok(())
    }

    pub fn states(&self) -> usize {
        self.labels.len()
    }

    /// Real values of the labels, when every label parses as a number.
    pub fn state_values(&self) -> Option<Vec<f64>> {
        self.labels.iter().map(|l| l.trim().parse::<f64>().ok()).collect()
    }

    pub fn space(&self) -> Result<FiniteMetricSpace> {
        let k = self.labels.len();
        let dist = match (&self.dist, self.state_values()) {
            (Some(d), _) => d.clone(),
            (None, Some(v)) => (0..k)
                .map(|i| (0..k).map(|j| (v[i] - v[j]).abs()).collect())
                .collect(),
            (None, None) => (0..k)
                .map(|i| (0..k).map(|j| if i == j { 0.0 } else { 1.0 }).collect())
                .collect(),
        };
        FiniteMetricSpace::new(self.labels.clone(), dist)
    }

    pub fn initial_law(&self) -> DiscreteMeasure<usize> {
        DiscreteMeasure::new((0..self.states()).collect(), self.initial.clone())
            .expect("validated initial vector")
    }

    pub fn row(&self, i: usize) -> DiscreteMeasure<usize> {
        DiscreteMeasure::new((0..self.states()).collect(), self.transition[i].clone())
            .expect("validated transition row")
    }

    /// Joint law of the first `n` states, over tuples of state indices with positive mass.
    pub fn joint(&self, n: usize) -> Result<DiscreteMeasure<Vec<usize>>> {
        if n == 0 {
            return Err(Error::input("n must be at least 1"));
        }
        let mut paths: Vec<(Vec<usize>, f64)> = (0..self.states())
            .filter(|&i| self.initial[i] > 0.0)
            .map(|i| (vec![i], self.initial[i]))
            .collect();
        for _ in 1..n {
            let mut next = Vec::with_capacity(paths.len() * self.states());
            for (path, w) in &paths {
                let last = *path.last().unwrap();
                for (j, p) in self.transition[last].iter().enumerate() {
                    if *p > 0.0 {
                        let mut q = path.clone();
                        q.push(j);
                        next.push((q, w * p));
                    }
                }
            }
            if next.len() > crate::measure::MAX_SUPPORT * 64 {
                return Err(Error::Resource(format!(
                    "joint law of {n} steps has more than {} paths",
                    crate::measure::MAX_SUPPORT * 64
                )));
            }
            paths = next;
        }
        let (support, weights): (Vec<_>, Vec<_>) = paths.into_iter().unzip();
        DiscreteMeasure::from_masses(support, weights)
    }
}

/// Deterministic part `Theta` of a contraction-plus-noise recursion.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ContractionMap {
    /// `x -> coef * x + offset`.
    Linear {
        coef: f64,
        #[serde(default)]
        offset: f64,
    },
    /// `x -> scale * tanh(x)`.
    Tanh { scale: f64 },
    /// User map with a declared Lipschitz bound and derivative.
    #[serde(skip)]
    Custom {
        map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        derivative: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        lipschitz: f64,
    },
}

impl fmt::Debug for ContractionMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContractionMap::Linear { coef, offset } => {
                write!(f, "Linear {{ coef: {coef}, offset: {offset} }}")
            }
            ContractionMap::Tanh { scale } => write!(f, "Tanh {{ scale: {scale} }}"),
            ContractionMap::Custom { lipschitz, .. } => {
                write!(f, "Custom {{ lipschitz: {lipschitz} }}")
            }
        }
    }
}

impl ContractionMap {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ContractionMap::Linear { coef, offset } => coef * x + offset,
            ContractionMap::Tanh { scale } => scale * x.tanh(),
            ContractionMap::Custom { map, .. } => map(x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ContractionMap::Linear { coef, .. } => *coef,
            ContractionMap::Tanh { scale } => {
                let c = x.cosh();
                scale / (c * c)
            }
            ContractionMap::Custom { derivative, .. } => derivative(x),
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            ContractionMap::Linear { coef, .. } => coef.abs(),
            ContractionMap::Tanh { scale } => scale.abs(),
            ContractionMap::Custom { lipschitz, .. } => *lipschitz,
        }
    }
}

/// Explicit Gaussian law of the first state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialLaw {
    pub mean: f64,
    pub var: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkovModel {
    Tabular(TabularChain),
    /// Ornstein–Uhlenbeck process sampled at spacing `tau`.
    Ou {
        rho: f64,
        tau: f64,
        #[serde(default)]
        x0: f64,
    },
    /// Transition `N(theta x, sigma2)`.
    GaussianKernel {
        theta: f64,
        sigma2: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<InitialLaw>,
    },
    /// `Z_{j+1} = A Z_j + B Y_{j+1}` on `R^m`.
    Arma { a: Vec<Vec<f64>>, b: Vec<Vec<f64>> },
    /// `Z_{j+1} = Theta(Z_j) + Y_{j+1}` with `Y ~ N(0, noise_var)`.
    ContractionNoise {
        map: ContractionMap,
        noise_var: f64,
        #[serde(default)]
        x0: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        initial: Option<InitialLaw>,
    },
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(Error::input(format!("{what} must be a nonempty square matrix")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::input(format!("{what} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(m, m, |i, j| rows[i][j]))
}

fn check_initial(init: &Option<InitialLaw>) -> Result<()> {
    if let Some(l) = init {
        if !l.mean.is_finite() || !(l.var > 0.0 && l.var.is_finite()) {
            return Err(Error::input("initial law needs a finite mean and positive variance"));
        }
    }
    Ok(())
}

impl MarkovModel {
    pub fn gaussian_kernel(theta: f64, sigma2: f64, x0: f64) -> Self {
        MarkovModel::GaussianKernel {
            theta,
            sigma2,
            x0,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MarkovModel::Tabular(c) => c.validate(),
            MarkovModel::Ou { rho, tau, x0 } => {
                if !(*tau > 0.0 && tau.is_finite()) || !rho.is_finite() || !x0.is_finite() {
                    return Err(Error::input("ou model needs tau > 0 and finite rho, x0"));
                }
                Ok(())
            }
            MarkovModel::GaussianKernel {
                theta,
                sigma2,
                x0,
                initial,
            } => {
                if !theta.is_finite() || !x0.is_finite() || !(*sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(Error::input("gaussian_kernel needs finite theta, x0 and sigma2 > 0"));
                }
                check_initial(initial)
            }
            MarkovModel::Arma { a, b } => {
                let a = matrix_from_rows(a, "A")?;
                let b = matrix_from_rows(b, "B")?;
                if a.nrows() != b.nrows() {
                    return Err(Error::input("A and B must have equal dimension"));
                }
                Ok(())
            }
            MarkovModel::ContractionNoise {
                map,
                noise_var,
                x0,
                initial,
            } => {
                if !(*noise_var > 0.0 && noise_var.is_finite()) || !x0.is_finite() {
                    return Err(Error::input("contraction_noise needs noise_var > 0 and finite x0"));
                }
                if !(map.lipschitz() >= 0.0 && map.lipschitz().is_finite()) {
                    return Err(Error::input("contraction map needs a finite Lipschitz bound"));
                }
                check_initial(initial)
            }
        }
    }

    /// Dimension of one state (1 for scalar and tabular models).
    pub fn dim(&self) -> usize {
        match self {
            MarkovModel::Arma { a, .. } => a.len(),
            _ => 1,
        }
    }

    pub fn as_tabular(&self) -> Option<&TabularChain> {
        match self {
            MarkovModel::Tabular(c) => Some(c),
            _ => None,
        }
    }

    /// Mean and variance of `p(. | x)` for scalar Gaussian kernels.
    pub fn scalar_kernel(&self, x: f64) -> Option<(f64, f64)> {
        match self {
            MarkovModel::Ou { rho, tau, .. } => {
                let (theta, s2) = ou_parameters(*rho, *tau);
                Some((theta * x, s2))
            }
            MarkovModel::GaussianKernel { theta, sigma2, .. } => Some((theta * x, *sigma2)),
            MarkovModel::ContractionNoise { map, noise_var, .. } => Some((map.eval(x), *noise_var)),
            _ => None,
        }
    }

    /// Derivative of the kernel mean in `x`, for scalar Gaussian kernels.
    pub fn scalar_kernel_slope(&self, x: f64) -> Option<f64> {
        match self {
            MarkovModel::Ou { rho, tau, .. } => Some(ou_parameters(*rho, *tau).0),
            MarkovModel::GaussianKernel { theta, .. } => Some(*theta),
            MarkovModel::ContractionNoise { map, .. } => Some(map.derivative(x)),
            _ => None,
        }
    }

    /// Law of the first state for scalar Gaussian chains.
    pub fn scalar_initial(&self) -> Option<(f64, f64)> {
        let (x0, init) = match self {
            MarkovModel::Ou { x0, .. } => (*x0, None),
            MarkovModel::GaussianKernel { x0, initial, .. } => (*x0, *initial),
            MarkovModel::ContractionNoise { x0, initial, .. } => (*x0, *initial),
            _ => return None,
        };
        match init {
            Some(l) => Some((l.mean, l.var)),
            None => self.scalar_kernel(x0),
        }
    }

    /// `(a, b)` when the kernel mean is the affine map `a x + b`.
    pub fn affine(&self) -> Option<(f64, f64)> {
        match self {
            MarkovModel::Ou { rho, tau, .. } => Some((ou_parameters(*rho, *tau).0, 0.0)),
            MarkovModel::GaussianKernel { theta, .. } => Some((*theta, 0.0)),
            MarkovModel::ContractionNoise {
                map: ContractionMap::Linear { coef, offset },
                ..
            } => Some((*coef, *offset)),
            _ => None,
        }
    }

    /// Joint Gaussian law of the first `n` states of an affine scalar chain or an ARMA model.
    pub fn gaussian_joint(&self, n: usize) -> Result<Option<GaussianMeasure>> {
        if n == 0 {
            return Err(Error::input("n must be at least 1"));
        }
        if let MarkovModel::Arma { a, b } = self {
            let a = matrix_from_rows(a, "A")?;
            let b = matrix_from_rows(b, "B")?;
            let cov = arma_joint_covariance(&a, &b, n)?;
            return GaussianMeasure::new(DVector::zeros(cov.nrows()), cov).map(Some);
        }
        let (Some((a, b)), Some((m1, v1)), Some((_, s2))) =
            (self.affine(), self.scalar_initial(), self.scalar_kernel(0.0))
        else {
            return Ok(None);
        };
        let mut mean = vec![m1];
        let mut var = vec![v1];
        for k in 1..n {
            mean.push(a * mean[k - 1] + b);
            var.push(a * a * var[k - 1] + s2);
        }
        let cov = DMatrix::from_fn(n, n, |i, j| {
            let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
            a.powi((hi - lo) as i32) * var[lo]
        });
        GaussianMeasure::new(DVector::from_vec(mean), cov).map(Some)
    }
}

/// Simulated paths, stored path-major as `values[(path * horizon + step) * dim + c]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplePaths {
    pub n_paths: usize,
    pub horizon: usize,
    pub dim: usize,
    pub values: Vec<f64>,
    /// State labels for tabular models; `values` then hold state indices.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub seed: u64,
}

impl SamplePaths {
    pub fn state(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * self.horizon + step) * self.dim;
        &self.values[o..o + self.dim]
    }

    pub fn path(&self, path: usize) -> &[f64] {
        let w = self.horizon * self.dim;
        &self.values[path * w..(path + 1) * w]
    }
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u beyond the last cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Draws `n_paths` independent paths of length `n`.
///
/// Path `i` uses its own ChaCha stream `i` under `seed`, so the output does not
/// depend on how paths are spread across threads.
pub fn simulate_joint(model: &MarkovModel, n: usize, n_paths: usize, seed: u64) -> Result<SamplePaths> {
    model.validate()?;
    if n == 0 || n_paths == 0 {
        return Err(Error::input("horizon and path count must be at least 1"));
    }
    let dim = model.dim();
    let arma = match model {
        MarkovModel::Arma { a, b } => Some((matrix_from_rows(a, "A")?, matrix_from_rows(b, "B")?)),
        _ => None,
    };
    let width = n * dim;
    let mut values = vec![0.0; n_paths * width];
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(p, out)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            match model {
                MarkovModel::Tabular(c) => {
                    let mut x = sample_index(&mut rng, &c.initial);
                    out[0] = x as f64;
                    for v in out.iter_mut().skip(1) {
                        x = sample_index(&mut rng, &c.transition[x]);
                        *v = x as f64;
                    }
                }
                MarkovModel::Arma { .. } => {
                    let (a, b) = arma.as_ref().unwrap();
                    let mut z = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                    out[..dim].copy_from_slice(z.as_slice());
                    for k in 1..n {
                        let y = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
                        z = a * &z + b * y;
                        out[k * dim..(k + 1) * dim].copy_from_slice(z.as_slice());
                    }
                }
                _ => {
                    let (m1, v1) = model.scalar_initial().unwrap();
                    let mut x = m1 + v1.sqrt() * rng.sample::<f64, _>(StandardNormal);
                    out[0] = x;
                    for v in out.iter_mut().skip(1) {
                        let (m, s2) = model.scalar_kernel(x).unwrap();
                        x = m + s2.sqrt() * rng.sample::<f64, _>(StandardNormal);
                        *v = x;
                    }
                }
            }
        });
    Ok(SamplePaths {
        n_paths,
        horizon: n,
        dim,
        values,
        labels: model.as_tabular().map(|c| c.labels.clone()),
        seed,
    })
}

/// Transition law of the OU process over a step `tau`.
pub fn ou_transition(x: f64, rho: f64, tau: f64) -> Result<GaussianMeasure> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::input("tau must be positive"));
    }
    let (theta, sigma2) = ou_parameters(rho, tau);
    GaussianMeasure::scalar(theta * x, sigma2)
}

/// Lower bound on the `W_s` Lipschitz constant of `x -> p(. | x)` over the probe pairs.
///
/// Tabular pairs are given by state values (labels parsed as reals).
pub fn kernel_lipschitz_estimate(model: &MarkovModel, pairs: &[(f64, f64)], s: f64) -> Result<f64> {
    crate::measure::check_order(s)?;
    model.validate()?;
    let mut best: Option<f64> = None;
    for &(x, y) in pairs {
        let d = (x - y).abs();
        if d == 0.0 {
            continue;
        }
        let w = match model {
            MarkovModel::Tabular(c) => {
                let values = c
                    .state_values()
                    .ok_or_else(|| Error::input("tabular kernel estimate needs real-valued labels"))?;
                let find = |v: f64| {
                    values
                        .iter()
                        .position(|u| *u == v)
                        .ok_or_else(|| Error::input(format!("{v} is not a state of the chain")))
                };
                let (i, j) = (find(x)?, find(y)?);
                let law = |i: usize| DiscreteMeasure::new(values.clone(), c.transition[i].clone());
                wasserstein_1d(&law(i)?, &law(j)?, s)?
            }
            MarkovModel::Arma { .. } => {
                return Err(Error::input("kernel Lipschitz estimate needs a one-dimensional kernel"))
            }
            _ => {
                let (mx, v) = model.scalar_kernel(x).unwrap();
                let (my, _) = model.scalar_kernel(y).unwrap();
                gaussian_1d_ws(mx, v, my, v, s)
            }
        };
        best = Some(best.map_or(w / d, |b: f64| b.max(w / d)));
    }
    best.ok_or_else(|| Error::input("every probe pair is coincident"))
}

/// A quadrature estimate with an optional Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: Option<f64>,
    /// Probe at which the value was attained.
    pub argmax: Vec<f64>,
}

const GH_ORDERS: (usize, usize) = (64, 128);
const GH_AGREEMENT: f64 = 1e-8;

fn dual_exponent(s: f64) -> f64 {
    if s == 1.0 {
        f64::INFINITY
    } else {
        s / (s - 1.0)
    }
}

fn lp_norm(v: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    } else {
        v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

/// Gradient of the transition potential: `(history, y) -> (du/dx_k)_{k < j}`.
pub type PotentialGradient<'a> = &'a (dyn Fn(&[f64], f64) -> Vec<f64> + Sync);

/// Expectation of `g(y)` under `N(m, v)` with orders 64 and 128; disagreement is
/// treated as non-integrable growth.
fn gauss_expect(m: f64, v: f64, g: &dyn Fn(f64) -> f64, what: &str) -> Result<f64> {
    let eval = |order: usize| {
        let rule = gauss_hermite(order);
        let (z, w) = (&rule.0, &rule.1);
        compensated_sum(z.iter().zip(w).map(|(z, w)| w * g(m + v.sqrt() * z)))
    };
    let (lo, hi) = (eval(GH_ORDERS.0), eval(GH_ORDERS.1));
    if !hi.is_finite() || (lo - hi).abs() > GH_AGREEMENT * hi.abs().max(1.0) {
        return Err(Error::input(format!(
            "{what}: quadrature does not settle under node doubling ({lo} vs {hi})"
        )));
    }
    Ok(hi)
}

/// Supremum over probed histories of `int |grad_x u_j|^2_{l^{s'}} p_j(dx_j | history)`.
///
/// With `grad = None` the model's own Gaussian potential is used and the integral
/// is evaluated in closed form. Tabular kernels are integrated exactly over their rows.
pub fn ms_estimate(
    grad: Option<PotentialGradient>,
    model: &MarkovModel,
    s: f64,
    probes: &[Vec<f64>],
) -> Result<Estimate> {
    crate::measure::check_order(s)?;
    model.validate()?;
    let sp = dual_exponent(s);
    if probes.is_empty() || probes.iter().any(|h| h.is_empty()) {
        return Err(Error::input("ms_estimate needs nonempty probe histories"));
    }
    let mut best = Estimate {
        value: f64::NEG_INFINITY,
        std_error: None,
        argmax: Vec::new(),
    };
    for h in probes {
        let x = *h.last().unwrap();
        let v = match (model, grad) {
            (MarkovModel::Tabular(c), Some(g)) => {
                let values = c
                    .state_values()
                    .ok_or_else(|| Error::input("ms_estimate needs real-valued labels"))?;
                let i = values
                    .iter()
                    .position(|u| *u == x)
                    .ok_or_else(|| Error::input(format!("{x} is not a state of the chain")))?;
                compensated_sum(
                    values
                        .iter()
                        .zip(&c.transition[i])
                        .map(|(y, p)| p * lp_norm(&g(h, *y), sp).powi(2)),
                )
            }
            (MarkovModel::Tabular(_), None) => {
                return Err(Error::input("tabular kernels have no differentiable potential; supply a gradient"))
            }
            (MarkovModel::Arma { .. }, _) => {
                return Err(Error::input("ms_estimate needs a one-dimensional kernel"))
            }
            (_, None) => {
                // u = (y - m(x))^2 / (2 sigma2): only the last coordinate enters and
                // du/dx = -m'(x) (y - m(x)) / sigma2 has second moment m'(x)^2 / sigma2
                let (_, s2) = model.scalar_kernel(x).unwrap();
                let slope = model.scalar_kernel_slope(x).unwrap();
                slope * slope / s2
            }
            (_, Some(g)) => {
                let (m, s2) = model.scalar_kernel(x).unwrap();
                gauss_expect(m, s2, &|y| lp_norm(&g(h, y), sp).powi(2), "M_s integral")?
            }
        };
        if v > best.value {
            best.value = v;
            best.argmax = h.clone();
        }
    }
    Ok(best)
}

/// Result of [`lambda_mgf_estimate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaEstimate {
    pub kappa_hat: f64,
    pub s: f64,
    pub x: f64,
}

/// Largest `2 log Lambda(s | x) / s^2` over the grid, where
/// `Lambda(s | x) = int exp(s du/dx(x, y)) p(dy | x)`.
///
/// With `grad = None` the model's own Gaussian potential is used, for which
/// `log Lambda = s^2 m'(x)^2 / (2 sigma2)` exactly.
pub fn lambda_mgf_estimate(
    grad: Option<&(dyn Fn(f64, f64) -> f64 + Sync)>,
    model: &MarkovModel,
    s_grid: &[f64],
    probes: &[f64],
) -> Result<LambdaEstimate> {
    model.validate()?;
    if model.scalar_kernel(0.0).is_none() {
        return Err(Error::input("lambda_mgf_estimate needs a scalar Gaussian kernel"));
    }
    let grid: Vec<f64> = s_grid.iter().cloned().filter(|s| *s != 0.0).collect();
    if grid.is_empty() || probes.is_empty() {
        return Err(Error::input("lambda_mgf_estimate needs nonzero grid points and probes"));
    }
    let cells: Vec<(f64, f64)> = probes
        .iter()
        .flat_map(|&x| grid.iter().map(move |&s| (s, x)))
        .collect();
    let vals: Vec<Result<f64>> = cells
        .par_iter()
        .map(|&(s, x)| {
            let (m, s2) = model.scalar_kernel(x).unwrap();
            let log_lambda = match grad {
                None => {
                    let slope = model.scalar_kernel_slope(x).unwrap();
                    s * s * slope * slope / (2.0 * s2)
                }
                Some(g) => {
                    let eval = |order: usize| {
                        let rule = gauss_hermite(order);
        let (z, w) = (&rule.0, &rule.1);
                        let e: Vec<f64> = z.iter().map(|z| s * g(x, m + s2.sqrt() * z)).collect();
                        log_sum_exp_weighted(&w, &e)
                    };
                    let (lo, hi) = (eval(GH_ORDERS.0), eval(GH_ORDERS.1));
                    if !hi.is_finite() || (lo - hi).abs() > GH_AGREEMENT * hi.abs().max(1.0) {
                        return Err(Error::input(format!(
                            "MGF diverges at s = {s}, x = {x} ({lo} vs {hi} under node doubling)"
                        )));
                    }
                    hi
                }
            };
            Ok(2.0 * log_lambda / (s * s))
        })
        .collect();
    let mut best = LambdaEstimate {
        kappa_hat: f64::NEG_INFINITY,
        s: 0.0,
        x: 0.0,
    };
    for (v, &(s, x)) in vals.into_iter().zip(&cells) {
        let v = v?;
        if v > best.kappa_hat {
            best = LambdaEstimate { kappa_hat: v, s, x };
        }
    }
    Ok(best)
}

/// Covariance of `(Z_0, ..., Z_{n-1})` for `Z_{j+1} = A Z_j + B Y_{j+1}`, `Z_0 ~ N(0, I)`.
pub fn arma_joint_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>, n: usize) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    if a.ncols() != m || b.nrows() != m || b.ncols() != m || m == 0 {
        return Err(Error::input("A and B must be square matrices of equal dimension"));
    }
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    let bbt = b * b.transpose();
    let mut marginals = vec![DMatrix::<f64>::identity(m, m)];
    for j in 1..n {
        let prev = &marginals[j - 1];
        let next = a * prev * a.transpose() + &bbt;
        marginals.push((&next + next.transpose()) * 0.5);
    }
    let mut cov = DMatrix::<f64>::zeros(n * m, n * m);
    for j in 0..n {
        let mut block = marginals[j].clone();
        for i in j..n {
            cov.view_mut((i * m, j * m), (m, m)).copy_from(&block);
            if i != j {
                cov.view_mut((j * m, i * m), (m, m)).copy_from(&block.transpose());
            }
            block = a * block;
        }
    }
    Ok(cov)
}

/// Smallest eigenvalue helper for PSD assertions on covariances.
pub fn covariance_min_eigenvalue(cov: &DMatrix<f64>) -> f64 {
    min_eigenvalue(cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state(p01: f64, p11: f64) -> TabularChain {
        TabularChain::new(
            vec!["0".into(), "1".into()],
            vec![0.5, 0.5],
            vec![vec![1.0 - p01, p01], vec![1.0 - p11, p11]],
        )
        .unwrap()
    }

    #[test]
    fn identity_chain_is_absorbing() {
        let c = TabularChain::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec![0.0, 1.0, 0.0],
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        )
        .unwrap();
        let paths = simulate_joint(&MarkovModel::Tabular(c), 6, 50, 3).unwrap();
        assert!(paths.values.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn independent_columns_when_theta_zero() {
        let n = 20_000;
        let paths = simulate_joint(&MarkovModel::gaussian_kernel(0.0, 1.0, 0.0), 3, n, 11).unwrap();
        let a: Vec<f64> = (0..n).map(|p| paths.state(p, 1)[0]).collect();
        let b: Vec<f64> = (0..n).map(|p| paths.state(p, 2)[0]).collect();
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n as f64;
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n as f64;
        let vb: f64 = b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n as f64;
        assert!((cov / (va * vb).sqrt()).abs() < 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn variance_recursion() {
        let n = 100_000;
        let paths = simulate_joint(&MarkovModel::gaussian_kernel(0.5, 1.0, 0.0), 2, n, 5).unwrap();
        let x: Vec<f64> = (0..n).map(|p| paths.state(p, 1)[0]).collect();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let v = 1.25;
        assert!(mean.abs() < 3.0 * (v / n as f64).sqrt());
        // standard error of the sample variance of a Gaussian
        assert!((var - v).abs() < 3.0 * v * (2.0 / (n - 1) as f64).sqrt());
    }

    #[test]
    fn simulation_is_reproducible_across_pools() {
        let m = MarkovModel::Tabular(two_state(0.3, 0.6));
        let a = simulate_joint(&m, 5, 200, 9).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_joint(&m, 5, 200, 9).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn ou_transition_examples() {
        let g = ou_transition(1.7, 0.0, 2.0).unwrap();
        assert_eq!((g.mean()[0], g.cov()[(0, 0)]), (1.7, 2.0));
        assert_eq!(ou_transition(0.0, 3.0, 1.0).unwrap().mean()[0], 0.0);
        let g = ou_transition(2.0, 2f64.ln(), 1.0).unwrap();
        assert!((g.mean()[0] - 1.0).abs() < 1e-15);
        assert!((g.cov()[(0, 0)] - 3.0 / (8.0 * 2f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn kernel_lipschitz_examples() {
        let pairs = [(0.0, 1.0), (-2.0, 3.5), (4.0, 4.0)];
        for s in [1.0, 1.5, 2.0] {
            let l = kernel_lipschitz_estimate(&MarkovModel::gaussian_kernel(0.7, 2.0, 0.0), &pairs, s).unwrap();
            assert!((l - 0.7).abs() < 1e-12);
        }
        let constant = MarkovModel::Tabular(two_state(0.4, 0.4));
        assert_eq!(kernel_lipschitz_estimate(&constant, &[(0.0, 1.0)], 1.0).unwrap(), 0.0);
        let ou = MarkovModel::Ou {
            rho: 2f64.ln(),
            tau: 1.0,
            x0: 0.0,
        };
        assert!((kernel_lipschitz_estimate(&ou, &pairs, 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(kernel_lipschitz_estimate(&ou, &[(1.0, 1.0)], 1.0).unwrap_err().is_input());
    }

    #[test]
    fn ms_and_lambda_examples() {
        let (theta, s2) = (0.6, 1.5);
        let m = MarkovModel::gaussian_kernel(theta, s2, 0.0);
        let grad = move |h: &[f64], y: f64| {
            let x = *h.last().unwrap();
            vec![-theta * (y - theta * x) / s2]
        };
        let probes = vec![vec![0.0], vec![-1.0, 2.0], vec![3.0]];
        let est = ms_estimate(Some(&grad), &m, 2.0, &probes).unwrap();
        assert!((est.value - theta * theta / s2).abs() < 1e-10);
        let closed = ms_estimate(None, &m, 1.0, &probes).unwrap();
        assert!((closed.value - theta * theta / s2).abs() < 1e-15);
        let flat = |_: &[f64], _: f64| vec![0.0];
        assert_eq!(ms_estimate(Some(&flat), &m, 2.0, &probes).unwrap().value, 0.0);

        let g1 = move |x: f64, y: f64| -theta * (y - theta * x) / s2;
        let grid = [-2.0, -0.5, 0.25, 1.0, 3.0];
        let lam = lambda_mgf_estimate(Some(&g1), &m, &grid, &[0.0, 1.0]).unwrap();
        assert!((lam.kappa_hat - theta * theta / s2).abs() < 1e-10);
        let lam = lambda_mgf_estimate(None, &m, &grid, &[0.0]).unwrap();
        assert!((lam.kappa_hat - theta * theta / s2).abs() < 1e-15);
        let zero = |_: f64, _: f64| 0.0;
        assert!(lambda_mgf_estimate(Some(&zero), &m, &grid, &[0.0]).unwrap().kappa_hat.abs() < 1e-13);

        let explode = |_: &[f64], y: f64| vec![(y * y).exp()];
        assert!(ms_estimate(Some(&explode), &m, 2.0, &probes).unwrap_err().is_input());
    }

    #[test]
    fn arma_covariance_examples() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let b = DMatrix::from_element(1, 1, 1.0);
        let c = arma_joint_covariance(&a, &b, 2).unwrap();
        assert_eq!(c, DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.25]));
        let b2 = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 2.0]);
        let c = arma_joint_covariance(&DMatrix::zeros(2, 2), &b2, 3).unwrap();
        let bbt = &b2 * b2.transpose();
        assert_eq!(c.view((2, 2), (2, 2)), bbt.view((0, 0), (2, 2)));
        assert_eq!(c.view((2, 0), (2, 2)), DMatrix::<f64>::zeros(2, 2).view((0, 0), (2, 2)));
        assert_eq!(arma_joint_covariance(&a, &b, 1).unwrap(), DMatrix::identity(1, 1));
    }

    #[test]
    fn model_json_round_trip() {
        let m = MarkovModel::Ou {
            rho: 1.0,
            tau: 0.5,
            x0: 0.0,
        };
        let j = serde_json::to_string(&m).unwrap();
        assert_eq!(j, r#"{"kind":"ou","rho":1.0,"tau":0.5,"x0":0.0}"#);
        let back: MarkovModel = serde_json::from_str(&j).unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), j);
        let t: MarkovModel = serde_json::from_str(
            r#"{"kind":"tabular","labels":["0","1"],"initial":[1,0],"transition":[[0.5,0.5],[0,1]]}"#,
        )
        .unwrap();
        t.validate().unwrap();
        let c: MarkovModel = serde_json::from_str(
            r#"{"kind":"contraction_noise","map":{"type":"tanh","scale":0.8},"noise_var":1.0}"#,
        )
        .unwrap();
        assert_eq!(c.scalar_kernel(0.0), Some((0.0, 1.0)));
    }
}
