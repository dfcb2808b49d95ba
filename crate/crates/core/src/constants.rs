//! Closed-form constants for concentration, transportation and log-Sobolev
//! inequalities of dependent sequences.

use std::f64::consts::E;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{geometric_sum, operator_norm, KahanSum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Contractive,
    Critical,
    Expansive,
    /// Formulas without a regime split.
    General,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Contractive => "contractive",
            Regime::Critical => "critical",
            Regime::Expansive => "expansive",
            Regime::General => "general",
        }
    }

    fn of(x: f64, threshold: f64) -> Regime {
        if x < threshold {
            Regime::Contractive
        } else if x == threshold {
            Regime::Critical
        } else {
            Regime::Expansive
        }
    }
}

/// A constant together with the regime and inputs that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeConstant {
    pub value: f64,
    pub regime: Regime,
    pub formula_id: &'static str,
    pub inputs: Vec<(&'static str, f64)>,
}

impl RegimeConstant {
    /// `name=value` pairs joined by `;`.
    pub fn inputs_string(&self) -> String {
        self.inputs
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn check_order(s: f64) -> Result<()> {
    crate::measure::check_order(s)
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    Ok(())
}

fn check_positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::input(format!("{name} must be positive and finite, got {x}")));
    }
    Ok(())
}

fn check_nonneg(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::input(format!("{name} must be nonnegative and finite, got {x}")));
    }
    Ok(())
}

/// `kappa1 * sum_{m=1}^n (sum_{k=0}^{m-1} r^k)^2`.
fn squared_geometric_series(kappa1: f64, r: f64, n: u64) -> f64 {
    let mut acc = KahanSum::new();
    for m in 1..=n {
        let g = geometric_sum(r, m);
        acc.add(g * g);
    }
    kappa1 * acc.value()
}

/// GC constant of a Markov chain with `GC(kappa1)` kernels that are `L`-Lipschitz in `W_1`.
pub fn gc_markov_kappa(kappa1: f64, l: f64, n: u64) -> Result<f64> {
    check_positive("kappa1", kappa1)?;
    check_nonneg("L", l)?;
    check_n(n)?;
    Ok(squared_geometric_series(kappa1, l, n))
}

/// GC constant under the summable dependence condition `sum rho_j <= R`.
pub fn gc_weak_kappa(kappa1: f64, r: f64, n: u64) -> Result<f64> {
    check_positive("kappa1", kappa1)?;
    check_nonneg("R", r)?;
    check_n(n)?;
    Ok(squared_geometric_series(kappa1, r, n))
}

/// GC constant `kappa1 (1+M)^{2n} / M^2` under `rho_j <= M`.
pub fn gc_weak_kappa_general(kappa1: f64, m: f64, n: u64) -> Result<f64> {
    check_positive("kappa1", kappa1)?;
    check_n(n)?;
    if m == 0.0 {
        return Err(Error::input(
            "M = 0 makes the general form singular; use the R form with R = 0",
        ));
    }
    check_positive("M", m)?;
    Ok(kappa1 * (1.0 + m).powf(2.0 * n as f64) / (m * m))
}

fn ts_regimes(alpha: f64, r: f64, s: f64, n: u64) -> (f64, Regime) {
    let nf = n as f64;
    let regime = Regime::of(r, 1.0);
    let value = match regime {
        Regime::Contractive => {
            let g = 1.0 - r.powf(1.0 / s);
            nf.powf(1.0 - 2.0 / s) * g * g * alpha
        }
        Regime::Critical => (2.0 / s - 2.0).exp() * (nf + 1.0).powf(-2.0 / s - 1.0) * alpha,
        _ => ((r - 1.0) / ((s - 1.0).exp() * r.powf(nf))).powf(2.0 / s) * alpha / (nf + 1.0),
    };
    (value, regime)
}

/// `T_s` constant of a Markov chain with `T_s(alpha)` kernels that are `L`-Lipschitz in `W_s`.
///
/// The critical branch uses `e^{2/s-2} (n+1)^{-2/s-1} alpha`.
pub fn ts_markov_alpha(alpha: f64, l: f64, s: f64, n: u64) -> Result<RegimeConstant> {
    check_positive("alpha", alpha)?;
    check_nonneg("L", l)?;
    check_order(s)?;
    check_n(n)?;
    let (value, regime) = ts_regimes(alpha, l, s, n);
    Ok(RegimeConstant {
        value,
        regime,
        formula_id: "ts_markov_alpha",
        inputs: vec![("alpha", alpha), ("L", l), ("s", s), ("n", n as f64)],
    })
}

/// `T_s` constant under `sum rho_j <= R`, same regimes as [`ts_markov_alpha`].
pub fn ts_weak_alpha(alpha: f64, r: f64, s: f64, n: u64) -> Result<RegimeConstant> {
    check_positive("alpha", alpha)?;
    check_nonneg("R", r)?;
    check_order(s)?;
    check_n(n)?;
    let (value, regime) = ts_regimes(alpha, r, s, n);
    Ok(RegimeConstant {
        value,
        regime,
        formula_id: "ts_weak_alpha",
        inputs: vec![("alpha", alpha), ("R", r), ("s", s), ("n", n as f64)],
    })
}

/// `alpha ((n e)^{1-s} M / (1+M)^n)^{2/s}` under `rho_j <= M`.
pub fn ts_general_alpha(alpha: f64, m: f64, s: f64, n: u64) -> Result<f64> {
    check_positive("alpha", alpha)?;
    check_order(s)?;
    check_n(n)?;
    if m == 0.0 {
        return Err(Error::input("M = 0 makes the general form degenerate; use the R form"));
    }
    check_positive("M", m)?;
    let nf = n as f64;
    let inner = (nf * E).powf(1.0 - s) * m / (1.0 + m).powf(nf);
    Ok(alpha * inner.powf(2.0 / s))
}

fn lsi_regimes(alpha: f64, r: f64, n: u64) -> (f64, Regime) {
    let nf = n as f64;
    let regime = Regime::of(r, alpha);
    let value = match regime {
        Regime::Contractive if r == 0.0 => alpha,
        Regime::Contractive => {
            let g = alpha.sqrt() - r.sqrt();
            g * g
        }
        Regime::Critical => alpha / (nf * (nf + 1.0) * (E - 1.0)),
        _ => (alpha / r).powf(nf) * (r - alpha) / (E * (nf + 1.0)),
    };
    (value, regime)
}

/// LSI constant of a Markov chain on `R^m` whose potential has mixed Hessian bounded by `L`.
pub fn lsi_markov_alpha(alpha: f64, l: f64, n: u64) -> Result<RegimeConstant> {
    check_positive("alpha", alpha)?;
    check_nonneg("L", l)?;
    check_n(n)?;
    let nf = n as f64;
    let regime = Regime::of(l, alpha);
    let value = match regime {
        Regime::Contractive => (alpha - l) * (alpha - l) / alpha,
        Regime::Critical => alpha / (nf * (nf + 1.0) * (E - 1.0)),
        _ => (alpha / l).powf(2.0 * nf) * (l * l - alpha * alpha) / (alpha * E * (nf + 1.0)),
    };
    Ok(RegimeConstant {
        value,
        regime,
        formula_id: "lsi_markov_alpha",
        inputs: vec![("alpha", alpha), ("L", l), ("n", n as f64)],
    })
}

/// How `epsilon` is chosen in [`lsi_weak_alpha_general`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Epsilon {
    Fixed(f64),
    Auto,
}

/// `alpha_n(eps)` for a lower-triangular coupling matrix; `kappa[j-1][k-1]` holds `kappa_{j,k}`.
fn lsi_general_at(alpha: f64, kappa: &[Vec<f64>], n: usize, eps: f64) -> f64 {
    let kk = |j: usize, k: usize| kappa[j - 1][k - 1];
    // K_j for j = 1..n-1
    let big_k: Vec<f64> = (1..n)
        .map(|j| {
            let s: f64 = (0..j).map(|l| kk(n - l, n - j)).sum();
            (1.0 + 1.0 / eps) * s / alpha
        })
        .collect();
    let mut bracket = KahanSum::new();
    bracket.add(1.0);
    for k in 0..n.saturating_sub(1) {
        let prod: f64 = (k + 1..n).map(|m| 1.0 + big_k[m - 1]).product();
        bracket.add(prod);
    }
    alpha / (1.0 + eps) / bracket.value()
}

const LOG_EPS_RANGE: (f64, f64) = (-12.0, 12.0);
const GOLDEN_ITERATIONS: usize = 200;

/// LSI constant for a weakly dependent sequence with coupling integrals bounded
/// by `exp(kappa_{j,k} |s|^2 / 2)`.
///
/// `kappa` is an `n x n` matrix read below the diagonal. With [`Epsilon::Auto`]
/// the free parameter is optimized over `log eps in [-12, 12]`.
pub fn lsi_weak_alpha_general(alpha: f64, kappa: &[Vec<f64>], n: usize, epsilon: Epsilon) -> Result<f64> {
    check_positive("alpha", alpha)?;
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    if kappa.len() < n || kappa.iter().take(n).any(|r| r.len() < n) {
        return Err(Error::input(format!("kappa must be at least {n} x {n}")));
    }
    let mut all_zero = true;
    for j in 1..n {
        for k in 0..j {
            let v = kappa[j][k];
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::input(format!(
                    "kappa_{{{},{}}} = {v} must be nonnegative and finite",
                    j + 1,
                    k + 1
                )));
            }
            all_zero &= v == 0.0;
        }
    }
    match epsilon {
        Epsilon::Fixed(eps) => {
            check_positive("epsilon", eps)?;
            Ok(lsi_general_at(alpha, kappa, n, eps))
        }
        // the objective is alpha / ((1 + eps) n), whose supremum is the eps -> 0 limit
        Epsilon::Auto if all_zero => Ok(alpha / n as f64),
        Epsilon::Auto => Ok(maximize_log_eps(|eps| lsi_general_at(alpha, kappa, n, eps))),
    }
}

fn maximize_log_eps(f: impl Fn(f64) -> f64) -> f64 {
    let g = |t: f64| f(t.exp());
    let (lo, hi) = LOG_EPS_RANGE;
    let grid: Vec<f64> = (0..=48).map(|i| lo + (hi - lo) * i as f64 / 48.0).collect();
    let vals: Vec<f64> = grid.iter().map(|&t| g(t)).collect();
    let best_grid = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // unimodal means nondecreasing then nonincreasing along the grid
    let peak = vals.iter().position(|&v| v == best_grid).unwrap_or(0);
    let rel = 1e-12 * best_grid.abs();
    let unimodal = vals[..=peak].windows(2).all(|w| w[1] >= w[0] - rel)
        && vals[peak..].windows(2).all(|w| w[1] <= w[0] + rel);

    let (mut a, mut b) = if unimodal {
        (
            grid[peak.saturating_sub(1)],
            grid[(peak + 1).min(grid.len() - 1)],
        )
    } else {
        log::debug!("epsilon objective not unimodal on the coarse grid; scanning densely");
        let fine: Vec<f64> = (0..=4000).map(|i| lo + (hi - lo) * i as f64 / 4000.0).collect();
        let (i, _) = fine
            .iter()
            .map(|&t| g(t))
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        (fine[i.saturating_sub(1)], fine[(i + 1).min(fine.len() - 1)])
    };
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    for _ in 0..GOLDEN_ITERATIONS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g(d);
        }
        if (b - a).abs() < 1e-14 {
            break;
        }
    }
    [fc, fd, g(a), g(b), best_grid]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// LSI constant under `sum sqrt(rho_l) <= sqrt(R)`.
pub fn lsi_weak_alpha(alpha: f64, r: f64, n: u64) -> Result<RegimeConstant> {
    check_positive("alpha", alpha)?;
    check_nonneg("R", r)?;
    check_n(n)?;
    let (value, regime) = lsi_regimes(alpha, r, n);
    Ok(RegimeConstant {
        value,
        regime,
        formula_id: "lsi_weak_alpha",
        inputs: vec![("alpha", alpha), ("R", r), ("n", n as f64)],
    })
}

/// LSI constant of a homogeneous Markov chain whose coupling integral is bounded by
/// `exp(kappa |s|^2 / 2)`.
pub fn lsi_markov_kernel_alpha(alpha: f64, kappa: f64, n: u64) -> Result<RegimeConstant> {
    check_positive("alpha", alpha)?;
    check_nonneg("kappa", kappa)?;
    check_n(n)?;
    let (value, regime) = lsi_regimes(alpha, kappa, n);
    Ok(RegimeConstant {
        value,
        regime,
        formula_id: "lsi_markov_kernel_alpha",
        inputs: vec![("alpha", alpha), ("kappa", kappa), ("n", n as f64)],
    })
}

/// LSI constant of `Z_{j+1} = Theta(Z_j) + Y_{j+1}` with `Theta` `L`-Lipschitz.
pub fn contraction_noise_alpha(alpha: f64, l: f64, n: u64) -> Result<RegimeConstant> {
    check_positive("alpha", alpha)?;
    check_nonneg("L", l)?;
    check_n(n)?;
    let nf = n as f64;
    let regime = Regime::of(l, 1.0);
    let value = match regime {
        Regime::Contractive => (1.0 - l) * (1.0 - l) * alpha,
        Regime::Critical => alpha / (nf * (nf + 1.0) * (E - 1.0)),
        _ => (l - 1.0) / l.powf(nf) * alpha / (E * (nf + 1.0)),
    };
    Ok(RegimeConstant {
        value,
        regime,
        formula_id: "contraction_noise_alpha",
        inputs: vec![("alpha", alpha), ("L", l), ("n", n as f64)],
    })
}

/// Spectral radius by eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

const ARMA_MAX_TERMS: usize = 1_000_000;

/// LSI constant of the stationary-noise ARMA recursion `Z_{j+1} = A Z_j + B Y_{j+1}`.
///
/// `sum_j rho^{-j} |A^j|^2` is accumulated until a tail bound falls below `tol` times
/// the partial sum: either a geometric bound from settled term ratios, or the
/// submultiplicative bound `(S_j - 1) t_j / (1 - t_j)` once some term `t_j < 1`.
pub fn arma_lsi_alpha(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let m = a.nrows();
    if a.ncols() != m || b.nrows() != m || b.ncols() != m || m == 0 {
        return Err(Error::input("A and B must be square matrices of equal dimension"));
    }
    check_positive("tol", tol)?;
    let rho = spectral_radius(a);
    if rho >= 1.0 {
        return Err(Error::input(format!(
            "spectral radius of A is {rho}; the ARMA constant requires rho(A) < 1"
        )));
    }
    let bnorm = operator_norm(b).max(1.0);
    let scale = a.abs().max();
    if scale == 0.0 {
        // only the j = 0 term survives
        return Ok((1.0 / bnorm).powi(2));
    }
    // nilpotent A has rho = 0 while some power is nonzero: the series is undefined
    let am = a.pow(m as u32);
    if rho <= 1e-12 * scale || am.abs().max() <= 1e-12 * scale.powi(m as i32) {
        return Err(Error::input(
            "A is nilpotent (spectral radius 0 with A != 0); the series sum rho^{-j} |A^j|^2 is undefined",
        ));
    }
    // t_j = rho^j |(A / rho)^j|^2, accumulated through normalized powers
    let scaled = a / rho;
    let mut power = DMatrix::<f64>::identity(m, m);
    let mut sum = KahanSum::new();
    let mut prev = 1.0;
    sum.add(1.0);
    let mut ratios: Vec<f64> = Vec::new();
    let mut rho_j = 1.0;
    let g = (1.0 - rho.sqrt()) / bnorm;
    let finish = |total: f64| g * g / (total * total);
    for j in 1..ARMA_MAX_TERMS {
        power = &power * &scaled;
        rho_j *= rho;
        let nrm = operator_norm(&power);
        let t = rho_j * nrm * nrm;
        sum.add(t);
        if prev > 0.0 {
            ratios.push(t / prev);
        }
        prev = t;
        if t == 0.0 {
            // underflow: the remaining terms are below the smallest double
            return Ok(finish(sum.value()));
        }
        if j >= 2 * m + 8 {
            let recent = &ratios[ratios.len() - 8..];
            let r = recent.iter().cloned().fold(0.0, f64::max);
            let spread = recent.iter().cloned().fold(f64::INFINITY, f64::min);
            if r < 1.0 && r - spread < 1e-3 {
                let tail = t * r / (1.0 - r);
                if tail < tol * sum.value() {
                    return Ok(finish(sum.value() + tail));
                }
            }
        }
        // t_{i+j} <= t_i t_j, so the tail after j is at most (S_j - 1) t_j / (1 - t_j);
        // this also covers oscillating ratios from complex eigenvalues
        if t < 1.0 {
            let tail = (sum.value() - 1.0) * t / (1.0 - t);
            if tail < tol * sum.value() {
                return Ok(finish(sum.value() + tail));
            }
        }
    }
    Err(Error::internal(
        "ARMA series did not reach its tail tolerance",
        format!("rho = {rho}, partial sum = {}, last term = {prev}", sum.value()),
    ))
}

/// Output of [`ou_kappa`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuConstants {
    pub theta: f64,
    pub sigma2: f64,
    pub kappa_n: f64,
    pub mean_fn: f64,
}

/// Sampled Ornstein–Uhlenbeck chain: `theta = e^{-rho tau}`, transition `N(theta x, sigma2)`,
/// GC constant of `F_n = sum x_j` and its mean from start `x`.
pub fn ou_kappa(rho: f64, tau: f64, n: u64, x: f64) -> Result<OuConstants> {
    check_positive("tau", tau)?;
    check_n(n)?;
    if !rho.is_finite() || !x.is_finite() {
        return Err(Error::input("rho and x must be finite"));
    }
    let (theta, sigma2) = ou_parameters(rho, tau);
    let mut kappa = KahanSum::new();
    for j in 0..n {
        let g = geometric_sum(theta, n - j);
        kappa.add(g * g);
    }
    let mean_fn = x * theta * geometric_sum(theta, n);
    Ok(OuConstants {
        theta,
        sigma2,
        kappa_n: sigma2 * kappa.value(),
        mean_fn,
    })
}

/// `(theta, sigma2)` of the OU transition over a time step `tau`.
pub fn ou_parameters(rho: f64, tau: f64) -> (f64, f64) {
    let theta = (-rho * tau).exp();
    let sigma2 = if rho == 0.0 {
        tau
    } else {
        // 1 - theta^2 = -expm1(-2 rho tau)
        -(-2.0 * rho * tau).exp_m1() / (2.0 * rho)
    };
    (theta, sigma2)
}
