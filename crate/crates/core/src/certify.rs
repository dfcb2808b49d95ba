//! One-sided numerical checks of GC(κ), T_s(α) and LSI(α).
//!
//! A pass means no violation was found over the declared test family; a fail
//! comes with a witness that replays to the reported slack.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::entropy::relative_entropy_discrete;
use crate::error::{Error, Result};
use crate::measure::{check_order, DiscreteMeasure, Metric, Point};
use crate::numeric::{compensated_sum, log_sum_exp_weighted, KahanSum};
use crate::transport::wasserstein_exact;

/// Pass threshold for GC and transport slacks.
pub const SLACK_TOL: f64 = 1e-9;
/// Base tolerance for the LSI check; `h^2` is added for grid spacing `h`.
pub const LSI_BASE_TOL: f64 = 1e-6;
/// Supports up to this size also get every vertex of the Lipschitz polytope.
pub const VERTEX_ENUM_MAX: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Inequality {
    #[serde(rename = "GC")]
    Gc,
    #[serde(rename = "T_s")]
    Transport,
    #[serde(rename = "LSI")]
    Lsi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// The extremal test object found by a check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub description: String,
    /// Index of the witness in the examined family.
    pub member: usize,
    /// GC: exponent `t`.
    pub t: Option<f64>,
    /// GC: `F` on the support of `mu`. T_s: weights of `nu`. LSI: `f` on the grid.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub inequality: Inequality,
    pub constant: f64,
    pub order_s: Option<f64>,
    /// Most violating margin; positive means violated.
    pub worst_slack: f64,
    pub tolerance: f64,
    pub witness: Witness,
    pub verdict: Verdict,
    pub search_size: usize,
    pub family: String,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

fn verdict(worst: f64, tol: f64) -> Verdict {
    if worst <= tol {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// A test function given by its values on the support (GC) or grid (LSI).
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub label: String,
    pub values: Vec<f64>,
}

/// 20 log-spaced points in `[1/64, 8]`, their negatives, and 0.
pub fn default_t_grid() -> Vec<f64> {
    let (lo, hi) = ((1.0f64 / 64.0).ln(), 8.0f64.ln());
    let pos: Vec<f64> = (0..20).map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp()).collect();
    let mut grid: Vec<f64> = pos.iter().rev().map(|t| -t).collect();
    grid.push(0.0);
    grid.extend(pos);
    grid
}

/// `log E_mu e^{t F} - t E_mu F - kappa t^2 / 2`.
pub fn gc_slack(weights: &[f64], f: &[f64], kappa: f64, t: f64) -> f64 {
    let mean = compensated_sum(weights.iter().zip(f).map(|(w, x)| w * x));
    let exps: Vec<f64> = f.iter().map(|x| t * (x - mean)).collect();
    log_sum_exp_weighted(weights, &exps) - 0.5 * kappa * t * t
}

/// Largest `|F(x) - F(y)| / d(x, y)` over the support.
pub fn lipschitz_constant<P: Point, M: Metric<P>>(metric: &M, support: &[P], f: &[f64]) -> f64 {
    let mut lip: f64 = 0.0;
    for i in 0..support.len() {
        for j in 0..i {
            let diff = (f[i] - f[j]).abs();
            let d = metric.distance(&support[i], &support[j]);
            if d > 0.0 {
                lip = lip.max(diff / d);
            } else if diff > 0.0 {
                return f64::INFINITY;
            }
        }
    }
    lip
}

fn distance_matrix<P: Point, M: Metric<P>>(metric: &M, support: &[P]) -> Vec<Vec<f64>> {
    support
        .iter()
        .map(|a| support.iter().map(|b| metric.distance(a, b)).collect())
        .collect()
}

/// 1-Lipschitz functions on the support of `mu`: every `d(., x_j)`, `family_size`
/// McShane extensions `min_j (v_j + d(., x_j))` with seeded anchor values in
/// `[0, diam]`, and on small supports every vertex of the Lipschitz polytope.
pub fn gc_family<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    family_size: usize,
    seed: u64,
) -> Vec<TestFunction> {
    let d = distance_matrix(metric, mu.support());
    let m = d.len();
    let diam = d.iter().flatten().cloned().fold(0.0, f64::max);
    let mut family: Vec<TestFunction> = (0..m)
        .map(|j| TestFunction {
            label: format!("distance to point {j}"),
            values: d[j].clone(),
        })
        .collect();
    for k in 0..family_size {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let v: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * diam).collect();
        let values = (0..m)
            .map(|i| (0..m).map(|j| v[j] + d[i][j]).fold(f64::INFINITY, f64::min))
            .collect();
        family.push(TestFunction {
            label: format!("McShane extension {k}"),
            values,
        });
    }
    if m <= VERTEX_ENUM_MAX {
        for (k, values) in lipschitz_vertices(&d).into_iter().enumerate() {
            family.push(TestFunction {
                label: format!("Lipschitz polytope vertex {k}"),
                values,
            });
        }
    }
    family
}

fn quantize(v: &[f64]) -> Vec<i64> {
    v.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Vertices of `{F : F(x_0) = 0, F_i - F_j <= d_ij}`: functions whose tight
/// constraints connect the support. Grown one point at a time from `x_0`.
fn lipschitz_vertices(d: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = d.len();
    if m == 0 {
        return Vec::new();
    }
    let full = (1u32 << m) - 1;
    let mut level: Vec<(u32, Vec<f64>)> = vec![(1, vec![0.0; m])];
    for _ in 1..m {
        let mut seen = HashSet::new();
        let mut next = Vec::new();
        for (mask, vals) in &level {
            for k in (0..m).filter(|k| mask & (1 << k) == 0) {
                for j in (0..m).filter(|j| mask & (1 << j) != 0) {
                    for sign in [1.0, -1.0] {
                        let v = vals[j] + sign * d[j][k];
                        let ok = (0..m)
                            .filter(|i| mask & (1 << i) != 0)
                            .all(|i| (v - vals[i]).abs() <= d[i][k] + 1e-12);
                        if !ok {
                            continue;
                        }
                        let mut nv = vals.clone();
                        nv[k] = v;
                        let nm = mask | (1 << k);
                        if seen.insert((nm, quantize(&nv))) {
                            next.push((nm, nv));
                        }
                    }
                }
            }
        }
        level = next;
    }
    level
        .into_iter()
        .filter(|(mask, _)| *mask == full)
        .map(|(_, v)| v)
        .collect()
}

/// GC(κ) over the default 1-Lipschitz family and `t_grid`.
pub fn check_gc<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    kappa: f64,
    t_grid: &[f64],
    family_size: usize,
    seed: u64,
) -> Result<Certificate> {
    let family = gc_family(metric, mu, family_size, seed);
    let description = format!(
        "{} distance functions, {family_size} McShane extensions (seed {seed}){}",
        mu.len(),
        if mu.len() <= VERTEX_ENUM_MAX {
            ", Lipschitz polytope vertices"
        } else {
            ""
        }
    );
    check_gc_family(metric, mu, kappa, t_grid, &family, &description)
}

/// GC(κ) over an explicit family of 1-Lipschitz functions given on the support of `mu`.
pub fn check_gc_family<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    kappa: f64,
    t_grid: &[f64],
    family: &[TestFunction],
    description: &str,
) -> Result<Certificate> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::input(format!("kappa must be positive, got {kappa}")));
    }
    if family.is_empty() || t_grid.is_empty() {
        return Err(Error::input("GC check needs a nonempty family and t grid"));
    }
    for f in family {
        if f.values.len() != mu.len() {
            return Err(Error::input(format!("test function '{}' has the wrong length", f.label)));
        }
        let lip = lipschitz_constant(metric, mu.support(), &f.values);
        if lip > 1.0 + 1e-9 {
            return Err(Error::input(format!("test function '{}' has Lipschitz constant {lip}", f.label)));
        }
    }
    let w = mu.weights();
    let best = family
        .par_iter()
        .enumerate()
        .map(|(idx, f)| {
            let mut best = (f64::NEG_INFINITY, 0.0);
            for &t in t_grid {
                let slack = gc_slack(w, &f.values, kappa, t);
                if t == 0.0 {
                    assert!(slack.abs() <= 1e-12, "GC slack at t = 0 is {slack}");
                    continue;
                }
                if slack > best.0 {
                    best = (slack, t);
                }
            }
            (best.0, best.1, idx)
        })
        .reduce(
            || (f64::NEG_INFINITY, 0.0, usize::MAX),
            |a, b| if b.0 > a.0 || (b.0 == a.0 && b.2 < a.2) { b } else { a },
        );
    let (worst, t, idx) = best;
    if idx == usize::MAX {
        return Err(Error::input("t grid has no nonzero point"));
    }
    Ok(Certificate {
        inequality: Inequality::Gc,
        constant: kappa,
        order_s: None,
        worst_slack: worst,
        tolerance: SLACK_TOL,
        witness: Witness {
            description: family[idx].label.clone(),
            member: idx,
            t: Some(t),
            values: family[idx].values.clone(),
        },
        verdict: verdict(worst, SLACK_TOL),
        search_size: family.len() * t_grid.iter().filter(|t| **t != 0.0).count(),
        family: description.to_string(),
    })
}

/// Re-evaluates a GC certificate's witness.
pub fn replay_gc<P: Point>(mu: &DiscreteMeasure<P>, cert: &Certificate) -> Result<f64> {
    let t = cert
        .witness
        .t
        .ok_or_else(|| Error::input("not a GC certificate"))?;
    if cert.witness.values.len() != mu.len() {
        return Err(Error::input("witness does not match the measure"));
    }
    Ok(gc_slack(mu.weights(), &cert.witness.values, cert.constant, t))
}

/// `W_s(nu, mu) - sqrt(2 Ent(nu | mu) / alpha)`.
pub fn transport_slack<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    nu: &DiscreteMeasure<P>,
    alpha: f64,
    s: f64,
) -> Result<f64> {
    let ent = relative_entropy_discrete(nu, mu);
    if ent.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let (w, _) = wasserstein_exact(metric, nu, mu, s)?;
    Ok(w - (2.0 * ent.max(0.0) / alpha).sqrt())
}

/// Tilts `e^{tF} mu` for the GC family and the nonzero points of `t_grid`,
/// followed by `reweightings` seeded random reweightings `mu_i E_i`, `E_i ~ Exp(1)`.
pub fn default_transport_family<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    t_grid: &[f64],
    family_size: usize,
    reweightings: usize,
    seed: u64,
) -> Result<Vec<DiscreteMeasure<P>>> {
    let w = mu.weights();
    let mut out = Vec::new();
    for f in gc_family(metric, mu, family_size, seed) {
        for &t in t_grid.iter().filter(|t| **t != 0.0) {
            let exps: Vec<f64> = f.values.iter().map(|x| t * x).collect();
            let norm = log_sum_exp_weighted(w, &exps);
            let masses: Vec<f64> = w.iter().zip(&exps).map(|(wi, e)| wi * (e - norm).exp()).collect();
            out.push(DiscreteMeasure::from_masses(mu.support().to_vec(), masses)?);
        }
    }
    for k in 0..reweightings {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream((family_size + k) as u64);
        let masses: Vec<f64> = w
            .iter()
            .map(|wi| {
                let e: f64 = Exp1.sample(&mut rng);
                wi * e
            })
            .collect();
        out.push(DiscreteMeasure::from_masses(mu.support().to_vec(), masses)?);
    }
    Ok(out)
}

/// T_s(α) over a family of perturbed measures.
pub fn check_transport<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    alpha: f64,
    s: f64,
    family: &[DiscreteMeasure<P>],
    description: &str,
) -> Result<Certificate> {
    check_order(s)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::input(format!("alpha must be positive, got {alpha}")));
    }
    if family.is_empty() {
        return Err(Error::input("transport check needs a nonempty perturbation family"));
    }
    let slacks: Vec<Result<f64>> = family
        .par_iter()
        .map(|nu| transport_slack(metric, mu, nu, alpha, s))
        .collect();
    let mut worst = (f64::NEG_INFINITY, 0);
    for (i, r) in slacks.into_iter().enumerate() {
        let v = r?;
        if v > worst.0 || i == 0 {
            worst = (v, i);
        }
    }
    let (worst, idx) = worst;
    Ok(Certificate {
        inequality: Inequality::Transport,
        constant: alpha,
        order_s: Some(s),
        worst_slack: worst,
        tolerance: SLACK_TOL,
        witness: Witness {
            description: format!("perturbation {idx}"),
            member: idx,
            t: None,
            values: family[idx].weights().to_vec(),
        },
        verdict: verdict(worst, SLACK_TOL),
        search_size: family.len(),
        family: description.to_string(),
    })
}

/// Re-evaluates a transport certificate against the family it was issued for.
pub fn replay_transport<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    family: &[DiscreteMeasure<P>],
    cert: &Certificate,
) -> Result<f64> {
    let nu = family
        .get(cert.witness.member)
        .ok_or_else(|| Error::input("witness index outside the family"))?;
    if nu.weights() != &cert.witness.values[..] {
        return Err(Error::input("witness weights do not match the family member"));
    }
    let s = cert.order_s.ok_or_else(|| Error::input("not a transport certificate"))?;
    transport_slack(metric, mu, nu, cert.constant, s)
}

/// A positive density sampled on a uniform 1-D grid, normalized to a probability vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub weights: Vec<f64>,
    pub spacing: f64,
}

impl GridDensity {
    pub fn new(grid: Vec<f64>, density: &[f64]) -> Result<Self> {
        if grid.len() < 3 || grid.len() != density.len() {
            return Err(Error::input("LSI grid needs at least 3 points and one density value per point"));
        }
        let h = grid[1] - grid[0];
        if !(h > 0.0) {
            return Err(Error::input("grid must be increasing"));
        }
        let span = grid[grid.len() - 1] - grid[0];
        for (i, w) in grid.windows(2).enumerate() {
            if ((w[1] - w[0]) - h).abs() > 1e-9 * span.max(1.0) {
                return Err(Error::input(format!("grid is not uniform at index {i}")));
            }
        }
        if let Some(p) = density.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::input(format!("density values must be positive, found {p}")));
        }
        let total = compensated_sum(density.iter().cloned());
        Ok(GridDensity {
            grid,
            weights: density.iter().map(|p| p / total).collect(),
            spacing: h,
        })
    }

    /// The standard Gaussian on `points` uniform nodes of `[-half_width, half_width]`.
    pub fn standard_gaussian(half_width: f64, points: usize) -> Result<Self> {
        let h = 2.0 * half_width / (points - 1) as f64;
        let grid: Vec<f64> = (0..points).map(|i| -half_width + h * i as f64).collect();
        let density: Vec<f64> = grid.iter().map(|x| (-0.5 * x * x).exp()).collect();
        GridDensity::new(grid, &density)
    }

    /// Declared tolerance `1e-6 + h^2`.
    pub fn tolerance(&self) -> f64 {
        LSI_BASE_TOL + self.spacing * self.spacing
    }

    pub fn as_measure(&self) -> Result<DiscreteMeasure<f64>> {
        DiscreteMeasure::new(self.grid.clone(), self.weights.clone())
    }
}

/// Central differences inside, second-order one-sided stencils at the ends.
pub fn finite_difference(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if i == 0 {
                (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h)
            } else if i == n - 1 {
                (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h)
            } else {
                (f[i + 1] - f[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// `Ent_mu(f^2) - (2/alpha) int |f'|^2 dmu` after scaling `f` to `int f^2 dmu = 1`.
pub fn lsi_slack(density: &GridDensity, f: &[f64], alpha: f64) -> f64 {
    let w = &density.weights;
    let m2 = compensated_sum(w.iter().zip(f).map(|(w, x)| w * x * x));
    if m2 == 0.0 {
        return 0.0;
    }
    let scale = m2.sqrt();
    let g: Vec<f64> = f.iter().map(|x| x / scale).collect();
    let mut ent = KahanSum::new();
    for (wi, gi) in w.iter().zip(&g) {
        let g2 = gi * gi;
        if g2 > 0.0 {
            ent.add(wi * g2 * g2.ln());
        }
    }
    let grad = finite_difference(&g, density.spacing);
    let energy = compensated_sum(w.iter().zip(&grad).map(|(w, d)| w * d * d));
    ent.value() - 2.0 / alpha * energy
}

/// Monomials up to degree 4 and a few shifted polynomials, `e^{tx/2}` for
/// `t` in `[-4, 4]`, and `bumps` seeded sums of Gaussian bumps on a constant.
pub fn default_lsi_family(grid: &[f64], bumps: usize, seed: u64) -> Vec<TestFunction> {
    let eval = |label: String, f: &dyn Fn(f64) -> f64| TestFunction {
        label,
        values: grid.iter().map(|x| f(*x)).collect(),
    };
    let mut family = Vec::new();
    for k in 1..=4 {
        family.push(eval(format!("x^{k}"), &|x| x.powi(k)));
        family.push(eval(format!("1 + x^{k}"), &|x| 1.0 + x.powi(k)));
    }
    family.push(eval("1 + x + x^2".into(), &|x| 1.0 + x + x * x));
    family.push(eval("2 - x + x^3/4".into(), &|x| 2.0 - x + 0.25 * x.powi(3)));
    for i in 0..=32 {
        let t = -4.0 + 0.25 * i as f64;
        if t != 0.0 {
            family.push(eval(format!("exp({t} x / 2)"), &|x| (0.5 * t * x).exp()));
        }
    }
    let lo = grid.first().copied().unwrap_or(0.0);
    let hi = grid.last().copied().unwrap_or(0.0);
    for k in 0..bumps {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let terms: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(-0.5..1.0),
                    rng.random_range(0.6 * lo..=0.6 * hi),
                    rng.random_range(0.3..2.0),
                )
            })
            .collect();
        family.push(eval(format!("bump combination {k}"), &|x| {
            1.0 + terms
                .iter()
                .map(|(a, c, w)| a * (-(x - c) * (x - c) / (2.0 * w * w)).exp())
                .sum::<f64>()
        }));
    }
    family
}

/// LSI(α) on a gridded 1-D density.
pub fn check_lsi_grid(
    density: &GridDensity,
    alpha: f64,
    family: &[TestFunction],
    description: &str,
) -> Result<Certificate> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::input(format!("alpha must be positive, got {alpha}")));
    }
    if family.is_empty() {
        return Err(Error::input("LSI check needs a nonempty test family"));
    }
    if let Some(f) = family.iter().find(|f| f.values.len() != density.grid.len()) {
        return Err(Error::input(format!("test function '{}' has the wrong length", f.label)));
    }
    let slacks: Vec<f64> = family
        .par_iter()
        .map(|f| lsi_slack(density, &f.values, alpha))
        .collect();
    let (idx, worst) = slacks
        .iter()
        .cloned()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    let tol = density.tolerance();
    Ok(Certificate {
        inequality: Inequality::Lsi,
        constant: alpha,
        order_s: None,
        worst_slack: worst,
        tolerance: tol,
        witness: Witness {
            description: family[idx].label.clone(),
            member: idx,
            t: None,
            values: family[idx].values.clone(),
        },
        verdict: verdict(worst, tol),
        search_size: family.len(),
        family: description.to_string(),
    })
}

pub fn replay_lsi(density: &GridDensity, cert: &Certificate) -> Result<f64> {
    if cert.witness.values.len() != density.grid.len() {
        return Err(Error::input("witness does not match the grid"));
    }
    Ok(lsi_slack(density, &cert.witness.values, cert.constant))
}

/// Which end of the constant range is the weaker statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Monotonicity {
    /// Larger constants are weaker (GC's κ).
    LargerIsWeaker,
    /// Larger constants are stronger (α in T_s and LSI).
    LargerIsStronger,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestConstant {
    pub value: f64,
    /// Every evaluated `(constant, worst_slack, passed)`.
    pub trace: Vec<(f64, f64, bool)>,
    /// The strong end already passed, so the bracket is not tight.
    pub degenerate: bool,
}

/// Bisects `[lo, hi]` for the boundary between passing and failing constants,
/// to relative width 1e-4, and returns the midpoint of the final bracket.
///
/// The strong end passing returns it as a degenerate answer; the weak end
/// failing is an input error. Verdicts and slacks are checked to be monotone
/// in the constant along the trace.
pub fn best_constant(
    check: impl Fn(f64) -> Result<Certificate>,
    order: Monotonicity,
    lo: f64,
    hi: f64,
) -> Result<BestConstant> {
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::input(format!("bad bracket ({lo}, {hi})")));
    }
    let (strong, weak) = match order {
        Monotonicity::LargerIsWeaker => (lo, hi),
        Monotonicity::LargerIsStronger => (hi, lo),
    };
    let mut trace = Vec::new();
    let eval = |c: f64, trace: &mut Vec<(f64, f64, bool)>| -> Result<bool> {
        let cert = check(c)?;
        trace.push((c, cert.worst_slack, cert.passed()));
        Ok(cert.passed())
    };
    if !eval(weak, &mut trace)? {
        return Err(Error::input(format!(
            "bracket does not straddle: the weak end {weak} already fails"
        )));
    }
    if eval(strong, &mut trace)? {
        return Ok(BestConstant {
            value: strong,
            trace,
            degenerate: true,
        });
    }
    let (mut pass, mut fail) = (weak, strong);
    while (pass - fail).abs() > 1e-4 * pass.abs().max(fail.abs()) {
        let mid = 0.5 * (pass + fail);
        if eval(mid, &mut trace)? {
            pass = mid;
        } else {
            fail = mid;
        }
    }
    check_trace(&trace, order)?;
    Ok(BestConstant {
        value: 0.5 * (pass + fail),
        trace,
        degenerate: false,
    })
}

fn check_trace(trace: &[(f64, f64, bool)], order: Monotonicity) -> Result<()> {
    let mut sorted = trace.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in sorted.windows(2) {
        let (a, b) = (w[0], w[1]);
        // walking toward larger constants
        let (slack_ok, verdict_ok) = match order {
            Monotonicity::LargerIsWeaker => (b.1 <= a.1 + 1e-12 * a.1.abs().max(1.0), !a.2 || b.2),
            Monotonicity::LargerIsStronger => (b.1 >= a.1 - 1e-12 * a.1.abs().max(1.0), a.2 || !b.2),
        };
        if !slack_ok || !verdict_ok {
            return Err(Error::internal(
                "verdict is not monotone in the constant",
                format!("{trace:?}"),
            ));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BgReport {
    pub gc: Certificate,
    pub t1: Certificate,
    pub agree: bool,
    /// Set when the verdicts differ: the families are too small, not a counterexample.
    pub note: Option<String>,
}

/// Runs GC(κ) and T_1(1/κ) with default families and compares the verdicts.
pub fn check_bg_duality<P: Point, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    kappa: f64,
    seed: u64,
) -> Result<BgReport> {
    let grid = default_t_grid();
    let family_size = 16;
    let gc = check_gc(metric, mu, kappa, &grid, family_size, seed)?;
    let family = default_transport_family(metric, mu, &grid, family_size, 16, seed)?;
    let t1 = check_transport(metric, mu, 1.0 / kappa, 1.0, &family, "exponential tilts and random reweightings")?;
    let agree = gc.verdict == t1.verdict;
    Ok(BgReport {
        note: (!agree).then(|| "verdicts differ: test families are insufficient".to_string()),
        gc,
        t1,
        agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{FiniteMetricSpace, RealLine};

    fn two_point() -> (FiniteMetricSpace, DiscreteMeasure<usize>) {
        (
            FiniteMetricSpace::from_matrix(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(),
            DiscreteMeasure::uniform(vec![0, 1]).unwrap(),
        )
    }

    #[test]
    fn t_grid_shape() {
        let g = default_t_grid();
        assert_eq!(g.len(), 41);
        assert_eq!(g[20], 0.0);
        assert!((g[21] - 1.0 / 64.0).abs() < 1e-15 && (g[40] - 8.0).abs() < 1e-12);
        assert_eq!(g[0], -g[40]);
    }

    #[test]
    fn gc_two_point_examples() {
        let (x, mu) = two_point();
        let grid = default_t_grid();
        let ok = check_gc(&x, &mu, 1.0, &grid, 8, 0).unwrap();
        assert!(ok.passed());
        let oracle = grid
            .iter()
            .filter(|t| **t != 0.0)
            .map(|t| (t / 2.0).cosh().ln() - t * t / 2.0)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((ok.worst_slack - oracle).abs() < 1e-12);

        let bad = check_gc(&x, &mu, 0.2, &grid, 8, 0).unwrap();
        assert!(!bad.passed());
        let oracle = grid
            .iter()
            .map(|t| (t / 2.0).cosh().ln() - 0.1 * t * t)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((bad.worst_slack - oracle).abs() < 1e-12);
        let t = bad.witness.t.unwrap().abs();
        assert!(t > 0.5 && t < 3.0, "{t}");
        assert!((replay_gc(&mu, &bad).unwrap() - bad.worst_slack).abs() < 1e-12);
    }

    #[test]
    fn gc_point_mass_passes() {
        let x = FiniteMetricSpace::from_reals(&[0.0, 3.0]).unwrap();
        let mu = DiscreteMeasure::dirac(0usize);
        let c = check_gc(&x, &mu, 0.5, &default_t_grid(), 4, 1).unwrap();
        assert!(c.passed() && c.worst_slack < 0.0);
    }

    #[test]
    fn vertices_of_path_metric() {
        // three points on a line: vertices are the 1-Lipschitz functions with slopes +-1
        let d = vec![vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]];
        let mut v = lipschitz_vertices(&d);
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(
            v,
            vec![
                vec![0.0, -1.0, -2.0],
                vec![0.0, -1.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 1.0, 2.0]
            ]
        );
    }

    #[test]
    fn transport_examples() {
        let mu = DiscreteMeasure::uniform(vec![0.0, 1.0]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        let fam = vec![nu];
        let pass = check_transport(&RealLine, &mu, 4.0, 1.0, &fam, "bernoulli").unwrap();
        let ent = 0.75 * 1.5f64.ln() + 0.25 * 0.5f64.ln();
        assert!((pass.worst_slack - (0.25 - (2.0 * ent / 4.0).sqrt())).abs() < 1e-12);
        assert!(pass.passed() && (pass.worst_slack + 0.0057).abs() < 1e-3);
        let fail = check_transport(&RealLine, &mu, 5.0, 1.0, &fam, "bernoulli").unwrap();
        assert!(!fail.passed() && (fail.worst_slack - 0.0213).abs() < 1e-3);
        assert_eq!(replay_transport(&RealLine, &mu, &fam, &fail).unwrap(), fail.worst_slack);

        let same = check_transport(&RealLine, &mu, 5.0, 2.0, &[mu.clone()], "self").unwrap();
        assert_eq!(same.worst_slack, 0.0);
        assert!(check_transport(&RealLine, &mu, 5.0, 2.0, &[], "").unwrap_err().is_input());
    }

    #[test]
    fn lsi_examples() {
        let g = GridDensity::standard_gaussian(8.0, 2001).unwrap();
        let constant = vec![3.0; g.grid.len()];
        assert!(lsi_slack(&g, &constant, 1.0).abs() < 1e-14);
        let tilts: Vec<TestFunction> = [-2.0, -1.0, -0.1, 0.1, 1.0, 2.0]
            .iter()
            .map(|t: &f64| TestFunction {
                label: format!("{t}"),
                values: g.grid.iter().map(|x| (t * x / 2.0).exp()).collect(),
            })
            .collect();
        let ok = check_lsi_grid(&g, 1.0, &tilts, "tilts").unwrap();
        assert!(ok.passed(), "{}", ok.worst_slack);
        let small = lsi_slack(&g, &tilts[2].values, 1.0).abs();
        assert!(small < 1e-6);
        let bad = check_lsi_grid(&g, 1.2, &tilts, "tilts").unwrap();
        assert!(!bad.passed());
        // slack of e^{x/2} at alpha = 1.2 is (1/2)(1 - 1/1.2)
        let f = &tilts[4].values;
        assert!((lsi_slack(&g, f, 1.2) - 0.5 * (1.0 - 1.0 / 1.2)).abs() < 1e-4);
        assert!((replay_lsi(&g, &bad).unwrap() - bad.worst_slack).abs() < 1e-12);
        assert!(GridDensity::new(vec![0.0, 1.0, 2.0], &[1.0, 0.0, 1.0]).unwrap_err().is_input());
    }

    #[test]
    fn best_constant_examples() {
        let (x, mu) = two_point();
        let grid = default_t_grid();
        let b = best_constant(
            |k| check_gc(&x, &mu, k, &grid, 4, 0),
            Monotonicity::LargerIsWeaker,
            0.05,
            2.0,
        )
        .unwrap();
        assert!((b.value - 0.25).abs() < 1e-3, "{}", b.value);

        let dirac = DiscreteMeasure::dirac(0usize);
        let b = best_constant(
            |k| check_gc(&x, &dirac, k, &grid, 4, 0),
            Monotonicity::LargerIsWeaker,
            0.05,
            2.0,
        )
        .unwrap();
        assert!(b.degenerate && b.value == 0.05);

        let err = best_constant(
            |k| check_gc(&x, &mu, k, &grid, 4, 0),
            Monotonicity::LargerIsWeaker,
            0.01,
            0.1,
        )
        .unwrap_err();
        assert!(err.is_input());
    }

    #[test]
    fn gaussian_gc_with_linear_witness() {
        let g = GridDensity::standard_gaussian(8.0, 1601).unwrap();
        let mu = g.as_measure().unwrap();
        let linear = vec![TestFunction {
            label: "x".into(),
            values: g.grid.clone(),
        }];
        let grid = default_t_grid();
        let b = best_constant(
            |k| check_gc_family(&RealLine, &mu, k, &grid, &linear, "linear"),
            Monotonicity::LargerIsWeaker,
            0.1,
            10.0,
        )
        .unwrap();
        assert!((b.value - 1.0).abs() < 0.02, "{}", b.value);
    }

    #[test]
    fn bg_duality_examples() {
        let (x, mu) = two_point();
        for (k, pass) in [(0.25, true), (0.2, false)] {
            let r = check_bg_duality(&x, &mu, k, 0).unwrap();
            assert!(r.agree && r.gc.passed() == pass && r.t1.passed() == pass, "{k}: {r:?}");
        }
        let r = check_bg_duality(&x, &DiscreteMeasure::dirac(1usize), 0.3, 0).unwrap();
        assert!(r.agree && r.gc.passed());
    }
}
