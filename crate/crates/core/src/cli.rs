//! Command-line front end: parses JSON inputs, dispatches to the library and
//! writes CSV or JSON with the resolved configuration echoed in the header.
//!
//! Exit codes: 0 success or pass, 1 certified failure, 2 input error, 3 internal error.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::certify::{self, Certificate, GridDensity, Monotonicity, TestFunction};
use crate::constants::{self, Epsilon, RegimeConstant};
use crate::coupling::{recursive_coupling_bound, transport_inequality_audit, Perturbation, Resolution};
use crate::entropy::{chain_rule_decompose, markov_breakdown, relative_entropy_discrete, relative_entropy_gaussian, Reference};
use crate::error::{Error, Result};
use crate::io::{fmt17, parse_measure, parse_space, wasserstein_json, MeasureDoc, SupportJson};
use crate::measure::{DiscreteMeasure, Euclidean, FiniteMetricSpace, Metric, RealLine};
use crate::processes::{arma_joint_covariance, simulate_joint, MarkovModel};
use crate::transport::{gaussian_1d_ws, kantorovich_dual_w1, monotone_coupling, wasserstein_exact, wasserstein_gaussian_w2, TransportPlan};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser, Serialize)]
#[command(name = "concentra", version, about = "Concentration, transport and log-Sobolev constants for dependent sequences")]
pub struct Cli {
    #[command(flatten)]
    #[serde(flatten)]
    pub global: Global,
    #[command(subcommand)]
    #[serde(flatten)]
    pub command: Command,
}

#[derive(Debug, Args, Serialize)]
pub struct Global {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo sample or path count.
    #[arg(long, global = true, default_value_t = 10_000)]
    pub samples: usize,
    /// Pass tolerance for audits and identity checks.
    #[arg(long, global = true, default_value_t = 1e-9)]
    pub tol: f64,
    /// Worker threads (defaults to all cores; results do not depend on it).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Evaluate a closed-form constant for one or more horizons.
    Constants(ConstantsArgs),
    /// Wasserstein distance between two measures.
    Wasserstein(WassersteinArgs),
    /// Relative entropy, optionally broken down along a chain.
    Entropy(EntropyArgs),
    /// Check GC, T_s or LSI for a measure, or search for the best constant.
    Certify(CertifyArgs),
    /// Simulate paths of a Markov model; one CSV row per path.
    Simulate(SimulateArgs),
    /// Recursive coupling bound between two chains, with an optional transport audit.
    Couple(CoupleArgs),
    /// OU constant identity and MGF exactness check.
    VerifyOu(VerifyOuArgs),
    /// ARMA log-Sobolev constant against the exact Gaussian constant.
    VerifyArma(VerifyArmaArgs),
}

#[derive(Debug, Args, Serialize, Deserialize)]
pub struct ConstantsArgs {
    /// Formula id, e.g. gc_markov_kappa, ts_weak_alpha, ou_kappa.
    #[arg(long)]
    pub formula: String,
    /// Horizons, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    #[serde(default = "default_horizons")]
    pub n: Vec<u64>,
    #[arg(long)]
    pub kappa1: Option<f64>,
    #[arg(long = "L")]
    #[serde(rename = "L")]
    pub l: Option<f64>,
    #[arg(long = "R")]
    #[serde(rename = "R")]
    pub r: Option<f64>,
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub x: Option<f64>,
    /// Matrix A as inline JSON or a file.
    #[arg(long = "A")]
    #[serde(rename = "A")]
    pub a: Option<String>,
    /// Matrix B as inline JSON or a file.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<String>,
    /// Lower-triangular kappa matrix (n x n) as inline JSON or a file.
    #[arg(long)]
    pub kappa_matrix: Option<String>,
    /// Epsilon for the general LSI formula: a number or "auto".
    #[arg(long, default_value = "auto")]
    #[serde(default = "default_eps")]
    pub eps: String,
    /// Series tolerance for arma_lsi_alpha.
    #[arg(long, default_value_t = 1e-12)]
    #[serde(default = "default_series_tol")]
    pub series_tol: f64,
}

fn default_horizons() -> Vec<u64> {
    vec![1]
}

fn default_eps() -> String {
    "auto".into()
}

fn default_series_tol() -> f64 {
    1e-12
}

#[derive(Debug, Args, Serialize)]
pub struct WassersteinArgs {
    /// Measure JSON (file, inline, or file#/json/pointer).
    #[arg(long)]
    pub mu: String,
    #[arg(long)]
    pub nu: String,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Finite metric space for labeled supports.
    #[arg(long)]
    pub space: Option<String>,
    /// Also solve the Kantorovich-Rubinstein dual (s = 1).
    #[arg(long)]
    pub dual: bool,
}

#[derive(Debug, Args, Serialize)]
pub struct EntropyArgs {
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub space: Option<String>,
    #[arg(long)]
    pub q_model: Option<String>,
    #[arg(long)]
    pub p_model: Option<String>,
    /// Joint law of Q on state tuples of the tabular P model.
    #[arg(long)]
    pub q_joint: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InequalityArg {
    Gc,
    Transport,
    Lsi,
    Bg,
}

#[derive(Debug, Args, Serialize)]
pub struct CertifyArgs {
    #[arg(long, value_enum)]
    pub inequality: InequalityArg,
    /// Measure JSON; for lsi, a discrete measure on a uniform grid (default: standard Gaussian).
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub space: Option<String>,
    /// kappa for gc and bg, alpha for transport and lsi.
    #[arg(long)]
    pub constant: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    /// Random members added to the default family.
    #[arg(long, default_value_t = 16)]
    pub family_size: usize,
    /// Perturbation family for transport: a JSON array of measures.
    #[arg(long)]
    pub family: Option<String>,
    /// Bisect for the best constant in lo,hi.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    pub best: Option<Vec<f64>>,
    /// Re-evaluate the witness of a certificate JSON.
    #[arg(long)]
    pub replay: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub n: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct CoupleArgs {
    /// Reference model P.
    #[arg(long)]
    pub p: String,
    /// Model Q (rows of the coupling).
    #[arg(long)]
    pub q: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub s: f64,
    #[arg(long, default_value_t = 128)]
    pub quantiles: usize,
    #[arg(long, default_value_t = 1 << 20)]
    pub atom_budget: usize,
    /// Hypothesis alpha of P's kernels; with --l runs the transport audit.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Hypothesis constant R of P's kernels.
    #[arg(long)]
    pub l: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyOuArgs {
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 5)]
    pub n: u64,
    #[arg(long, default_value_t = 0.0)]
    pub x: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyArmaArgs {
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
    #[arg(long, default_value_t = 10)]
    pub n_max: usize,
    /// A single matrix A (inline JSON or file) instead of seeded instances.
    #[arg(long = "A")]
    #[serde(rename = "A")]
    pub a: Option<String>,
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub b: Option<String>,
    #[arg(long, default_value_t = 1e-12)]
    pub series_tol: f64,
}

/// What a command produced, in both renderings.
struct Report {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    json: Value,
    failed: bool,
}

impl Report {
    fn new(header: &[&str], rows: Vec<Vec<String>>, json: Value, failed: bool) -> Self {
        Report {
            header: header.iter().map(|h| h.to_string()).collect(),
            rows,
            json,
            failed,
        }
    }
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter("CONCENTRA_LOG")).try_init();
    let result = match cli.global.workers {
        Some(w) => match rayon::ThreadPoolBuilder::new().num_threads(w.max(1)).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(Error::internal("cannot start worker pool", e.to_string())),
        },
        None => execute(&cli),
    };
    match result.and_then(|r| emit(&cli, &r).map(|_| r.failed)) {
        Ok(false) => EXIT_OK,
        Ok(true) => EXIT_FAIL,
        Err(e) => {
            eprintln!("concentra: {e}");
            if let Error::Internal { dump, .. } = &e {
                log::debug!("solver state: {dump}");
            }
            match e {
                Error::Internal { .. } => EXIT_INTERNAL,
                _ => EXIT_INPUT,
            }
        }
    }
}

fn emit(cli: &Cli, report: &Report) -> Result<()> {
    let config = serde_json::to_value(cli).map_err(|e| Error::internal("config echo", e.to_string()))?;
    let text = match cli.global.format {
        Format::Json => {
            let mut obj = json!({"config": config});
            if let (Some(o), Value::Object(r)) = (obj.as_object_mut(), &report.json) {
                for (k, v) in r {
                    o.insert(k.clone(), v.clone());
                }
            } else {
                obj["result"] = report.json.clone();
            }
            let mut s = serde_json::to_string_pretty(&obj).unwrap();
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&report.header).map_err(csv_err)?;
            for r in &report.rows {
                w.write_record(r).map_err(csv_err)?;
            }
            let body = String::from_utf8(w.into_inner().map_err(|e| csv_err(e.into_error()))?).unwrap();
            format!("# config {config}\n{body}")
        }
    };
    match &cli.global.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::input(format!("cannot write {}: {e}", p.display()))),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::internal("cannot write stdout", e.to_string())),
    }
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    Error::internal("csv output failed", e.to_string())
}

/// Inline JSON when the argument starts with `{` or `[`; otherwise a file path,
/// optionally followed by `#/json/pointer`.
pub fn load_json(arg: &str) -> Result<Value> {
    let t = arg.trim_start();
    if t.starts_with('{') || t.starts_with('[') {
        return serde_json::from_str(t).map_err(|e| Error::input(format!("bad inline JSON: {e}")));
    }
    let (path, pointer) = match arg.split_once('#') {
        Some((p, q)) => (p, Some(q)),
        None => (arg, None),
    };
    let text = fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {path}: {e}")))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::input(format!("{path}: {e}")))?;
    match pointer {
        None => Ok(v),
        Some(p) => v
            .pointer(p)
            .cloned()
            .ok_or_else(|| Error::input(format!("{path}: nothing at '{p}'"))),
    }
}

fn load_model(arg: &str) -> Result<MarkovModel> {
    let m: MarkovModel =
        serde_json::from_value(load_json(arg)?).map_err(|e| Error::input(format!("bad model JSON: {e}")))?;
    m.validate()?;
    Ok(m)
}

fn load_matrix(arg: &str, name: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = serde_json::from_value(load_json(arg)?)
        .map_err(|e| Error::input(format!("{name} must be an array of rows: {e}")))?;
    crate::processes::matrix_from_rows(&rows, name)
}

fn load_space(arg: &Option<String>) -> Result<Option<FiniteMetricSpace>> {
    arg.as_deref().map(|a| parse_space(&load_json(a)?)).transpose()
}

fn execute(cli: &Cli) -> Result<Report> {
    log::info!("running {:?}", cli.command);
    let g = &cli.global;
    match &cli.command {
        Command::Constants(a) => constants_cmd(a),
        Command::Wasserstein(a) => wasserstein_cmd(a),
        Command::Entropy(a) => entropy_cmd(a),
        Command::Certify(a) => certify_cmd(a, g),
        Command::Simulate(a) => simulate_cmd(a, g),
        Command::Couple(a) => couple_cmd(a, g),
        Command::VerifyOu(a) => verify_ou_cmd(a, g),
        Command::VerifyArma(a) => verify_arma_cmd(a, g),
    }
}

// ---- constants

/// Canonical formula id for a name or one of its short aliases.
pub fn resolve_formula(name: &str) -> Option<&'static str> {
    const TABLE: &[(&str, &[&str])] = &[
        ("gc_markov_kappa", &["thm1.1"]),
        ("gc_weak_kappa", &["thm3.1"]),
        ("gc_weak_kappa_general", &["thm3.1-general"]),
        ("ts_markov_alpha", &["thm1.2"]),
        ("ts_weak_alpha", &["thm2.1"]),
        ("ts_general_alpha", &["thm2.1-general"]),
        ("lsi_markov_alpha", &["thm1.3"]),
        ("lsi_weak_alpha", &["thm5.1"]),
        ("lsi_weak_alpha_general", &["thm5.1-general"]),
        ("lsi_markov_kernel_alpha", &["cor6.1"]),
        ("contraction_noise_alpha", &["prop4.1"]),
        ("arma_lsi_alpha", &["prop4.2"]),
        ("ou_kappa", &["ex6.3"]),
    ];
    let key = name.to_ascii_lowercase();
    TABLE
        .iter()
        .find(|(id, aliases)| *id == key || aliases.contains(&key.as_str()))
        .map(|(id, _)| *id)
}

fn need(v: Option<f64>, flag: &str, formula: &str) -> Result<f64> {
    v.ok_or_else(|| Error::input(format!("formula {formula} needs --{flag}")))
}

fn constants_cmd(a: &ConstantsArgs) -> Result<Report> {
    let id = resolve_formula(&a.formula)
        .ok_or_else(|| Error::input(format!("unknown formula '{}'", a.formula)))?;
    let mut rows = Vec::new();
    let mut out = Vec::new();
    let horizons: &[u64] = if id == "arma_lsi_alpha" { &[1] } else { &a.n };
    for &n in horizons {
        let (inputs, regime, value) = evaluate_constant(id, a, n)?;
        rows.push(vec![id.to_string(), inputs.clone(), regime.to_string(), fmt17(value)]);
        out.push(json!({"formula_id": id, "inputs": inputs, "regime": regime, "value": value}));
    }
    Ok(Report::new(
        &["formula_id", "inputs", "regime", "value"],
        rows,
        json!({"rows": out}),
        false,
    ))
}

fn regime_row(c: RegimeConstant) -> (String, &'static str, f64) {
    (c.inputs_string(), c.regime.as_str(), c.value)
}

fn plain_row(inputs: &[(&str, f64)], value: f64) -> (String, &'static str, f64) {
    let s = inputs
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";");
    (s, "general", value)
}

/// Evaluates the canonical formula `id` at horizon `n`: `(inputs, regime, value)`.
pub fn evaluate_constant(id: &str, a: &ConstantsArgs, n: u64) -> Result<(String, &'static str, f64)> {
    let nf = n as f64;
    Ok(match id {
        "gc_markov_kappa" => {
            let (k, l) = (need(a.kappa1, "kappa1", id)?, need(a.l, "L", id)?);
            plain_row(&[("kappa1", k), ("L", l), ("n", nf)], constants::gc_markov_kappa(k, l, n)?)
        }
        "gc_weak_kappa" => {
            let (k, r) = (need(a.kappa1, "kappa1", id)?, need(a.r, "R", id)?);
            plain_row(&[("kappa1", k), ("R", r), ("n", nf)], constants::gc_weak_kappa(k, r, n)?)
        }
        "gc_weak_kappa_general" => {
            let (k, m) = (need(a.kappa1, "kappa1", id)?, need(a.m, "M", id)?);
            plain_row(&[("kappa1", k), ("M", m), ("n", nf)], constants::gc_weak_kappa_general(k, m, n)?)
        }
        "ts_markov_alpha" => regime_row(constants::ts_markov_alpha(
            need(a.alpha, "alpha", id)?,
            need(a.l, "L", id)?,
            need(a.s, "s", id)?,
            n,
        )?),
        "ts_weak_alpha" => regime_row(constants::ts_weak_alpha(
            need(a.alpha, "alpha", id)?,
            need(a.r, "R", id)?,
            need(a.s, "s", id)?,
            n,
        )?),
        "ts_general_alpha" => {
            let (al, m, s) = (need(a.alpha, "alpha", id)?, need(a.m, "M", id)?, need(a.s, "s", id)?);
            plain_row(
                &[("alpha", al), ("M", m), ("s", s), ("n", nf)],
                constants::ts_general_alpha(al, m, s, n)?,
            )
        }
        "lsi_markov_alpha" => regime_row(constants::lsi_markov_alpha(need(a.alpha, "alpha", id)?, need(a.l, "L", id)?, n)?),
        "lsi_weak_alpha" => regime_row(constants::lsi_weak_alpha(need(a.alpha, "alpha", id)?, need(a.r, "R", id)?, n)?),
        "lsi_markov_kernel_alpha" => regime_row(constants::lsi_markov_kernel_alpha(
            need(a.alpha, "alpha", id)?,
            need(a.kappa, "kappa", id)?,
            n,
        )?),
        "contraction_noise_alpha" => regime_row(constants::contraction_noise_alpha(
            need(a.alpha, "alpha", id)?,
            need(a.l, "L", id)?,
            n,
        )?),
        "lsi_weak_alpha_general" => {
            let al = need(a.alpha, "alpha", id)?;
            let km: Vec<Vec<f64>> = match &a.kappa_matrix {
                Some(k) => serde_json::from_value(load_json(k)?)
                    .map_err(|e| Error::input(format!("--kappa-matrix must be an array of rows: {e}")))?,
                None => vec![vec![0.0; n as usize]; n as usize],
            };
            let eps = if a.eps == "auto" {
                Epsilon::Auto
            } else {
                Epsilon::Fixed(a.eps.parse().map_err(|_| Error::input("--eps must be a number or 'auto'"))?)
            };
            let v = constants::lsi_weak_alpha_general(al, &km, n as usize, eps)?;
            let mut row = plain_row(&[("alpha", al), ("n", nf)], v);
            row.0.push_str(&format!(";eps={}", a.eps));
            row
        }
        "arma_lsi_alpha" => {
            let am = load_matrix(a.a.as_deref().ok_or_else(|| Error::input("arma_lsi_alpha needs --A"))?, "A")?;
            let bm = match &a.b {
                Some(b) => load_matrix(b, "B")?,
                None => DMatrix::identity(am.nrows(), am.ncols()),
            };
            let v = constants::arma_lsi_alpha(&am, &bm, a.series_tol)?;
            plain_row(
                &[("rho", constants::spectral_radius(&am)), ("norm_B", crate::numeric::operator_norm(&bm))],
                v,
            )
        }
        "ou_kappa" => {
            let (rho, tau) = (need(a.rho, "rho", id)?, need(a.tau, "tau", id)?);
            let x = a.x.unwrap_or(0.0);
            let c = constants::ou_kappa(rho, tau, n, x)?;
            let mut row = plain_row(&[("rho", rho), ("tau", tau), ("x", x), ("n", nf)], c.kappa_n);
            row.0.push_str(&format!(
                ";theta={};sigma2={};mean_Fn={}",
                fmt17(c.theta),
                fmt17(c.sigma2),
                fmt17(c.mean_fn)
            ));
            row
        }
        other => return Err(Error::input(format!("unknown formula '{other}'"))),
    })
}

// ---- wasserstein

fn plan_from_coupling(
    mu: &DiscreteMeasure<f64>,
    nu: &DiscreteMeasure<f64>,
    s: f64,
    cost: f64,
) -> Option<TransportPlan<f64>> {
    if mu.len() * nu.len() > crate::transport::PLAN_ELIDE_ENTRIES {
        return None;
    }
    let mut weights = vec![vec![0.0; nu.len()]; mu.len()];
    for (i, j, m) in monotone_coupling(mu, nu) {
        weights[i][j] += m;
    }
    Some(TransportPlan {
        rows: mu.clone(),
        cols: nu.clone(),
        weights,
        cost,
        order: s,
    })
}

fn dual_json<P: SupportJson, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    nu: &DiscreteMeasure<P>,
    space: Option<&FiniteMetricSpace>,
) -> Result<Value> {
    let d = kantorovich_dual_w1(metric, mu, nu)?;
    Ok(json!({
        "value": d.value,
        "points": d.points.iter().map(|p| p.to_json(space)).collect::<Vec<_>>(),
        "potential": d.potential,
        "lipschitz_violation": d.lipschitz_violation(metric).max(0.0),
    }))
}

fn wasserstein_cmd(a: &WassersteinArgs) -> Result<Report> {
    crate::measure::check_order(a.s)?;
    if a.dual && a.s != 1.0 {
        return Err(Error::input("--dual needs --s 1"));
    }
    let space = load_space(&a.space)?;
    let mu = parse_measure(&load_json(&a.mu)?)?;
    let nu = parse_measure(&load_json(&a.nu)?)?;
    let (w, mut out) = match (&mu, &nu) {
        (MeasureDoc::Real(m), MeasureDoc::Real(n)) => {
            let w = crate::transport::wasserstein_1d(m, n, a.s)?;
            let plan = plan_from_coupling(m, n, a.s, w.powf(a.s));
            let mut out = wasserstein_json(w, a.s, plan.as_ref(), None);
            if a.dual {
                out["dual"] = dual_json(&RealLine, m, n, None)?;
            }
            (w, out)
        }
        (MeasureDoc::Euclidean(m), MeasureDoc::Euclidean(n)) => {
            let (w, plan) = wasserstein_exact(&Euclidean, m, n, a.s)?;
            let mut out = wasserstein_json(w, a.s, Some(&plan), None);
            if a.dual {
                out["dual"] = dual_json(&Euclidean, m, n, None)?;
            }
            (w, out)
        }
        (MeasureDoc::Labeled(..), MeasureDoc::Labeled(..)) => {
            let space = space
                .as_ref()
                .ok_or_else(|| Error::input("labeled measures need --space"))?;
            let (m, n) = (mu.on_space(space)?, nu.on_space(space)?);
            let (w, plan) = wasserstein_exact(space, &m, &n, a.s)?;
            let mut out = wasserstein_json(w, a.s, Some(&plan), Some(space));
            if a.dual {
                out["dual"] = dual_json(space, &m, &n, Some(space))?;
            }
            (w, out)
        }
        (MeasureDoc::Gaussian(g1), MeasureDoc::Gaussian(g2)) => {
            let w = if g1.dim() == 1 && g2.dim() == 1 {
                gaussian_1d_ws(g1.mean()[0], g1.cov()[(0, 0)], g2.mean()[0], g2.cov()[(0, 0)], a.s)
            } else if a.s == 2.0 {
                wasserstein_gaussian_w2(g1, g2)?
            } else {
                return Err(Error::input("multivariate Gaussian distances are available for s = 2 only"));
            };
            if a.dual {
                return Err(Error::input("--dual needs discrete measures"));
            }
            (w, wasserstein_json::<f64>(w, a.s, None, None))
        }
        _ => {
            return Err(Error::input(format!(
                "cannot compare a {} measure with a {} measure",
                mu.kind(),
                nu.kind()
            )))
        }
    };
    if out["dual"].is_null() {
        out.as_object_mut().unwrap().remove("dual");
    }
    let mut row = vec![fmt17(w), fmt17(a.s)];
    let mut header = vec!["w", "s"];
    if let Some(d) = out.get("dual").and_then(|d| d["value"].as_f64()) {
        header.push("dual");
        row.push(fmt17(d));
    }
    Ok(Report::new(&header, vec![row], out, false))
}

// ---- entropy

fn breakdown_report(b: crate::entropy::EntropyBreakdown) -> Report {
    let mut rows = vec![vec!["initial".to_string(), fmt17(b.initial)]];
    for (k, c) in b.conditional.iter().enumerate() {
        rows.push(vec![format!("step {}", k + 2), fmt17(*c)]);
    }
    rows.push(vec!["total".to_string(), fmt17(b.total)]);
    let json = serde_json::to_value(&b).unwrap();
    Report::new(&["component", "value"], rows, json, false)
}

/// Parses a joint law whose support entries are arrays of state labels.
fn parse_joint(v: &Value, labels: &[String]) -> Result<DiscreteMeasure<Vec<usize>>> {
    let support = v
        .get("support")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::input("joint law needs a 'support' array of state tuples"))?;
    let weights: Vec<f64> = serde_json::from_value(v.get("weights").cloned().unwrap_or(Value::Null))
        .map_err(|e| Error::input(format!("joint law weights: {e}")))?;
    let label = |x: &Value| -> Result<usize> {
        let s = match x {
            Value::String(s) => s.clone(),
            Value::Number(n) => n.to_string(),
            _ => return Err(Error::input("state tuples must hold labels")),
        };
        labels
            .iter()
            .position(|l| *l == s)
            .ok_or_else(|| Error::input(format!("unknown state '{s}'")))
    };
    let tuples = support
        .iter()
        .map(|t| {
            t.as_array()
                .ok_or_else(|| Error::input("joint support entries must be arrays"))?
                .iter()
                .map(label)
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    DiscreteMeasure::new(tuples, weights)
}

fn entropy_cmd(a: &EntropyArgs) -> Result<Report> {
    if let (Some(nu), Some(mu)) = (&a.nu, &a.mu) {
        let space = load_space(&a.space)?;
        let (nu, mu) = (parse_measure(&load_json(nu)?)?, parse_measure(&load_json(mu)?)?);
        let v = match (&nu, &mu) {
            (MeasureDoc::Real(x), MeasureDoc::Real(y)) => relative_entropy_discrete(x, y),
            (MeasureDoc::Euclidean(x), MeasureDoc::Euclidean(y)) => relative_entropy_discrete(x, y),
            (MeasureDoc::Labeled(..), MeasureDoc::Labeled(..)) => {
                let space = space
                    .as_ref()
                    .ok_or_else(|| Error::input("labeled measures need --space"))?;
                relative_entropy_discrete(&nu.on_space(space)?, &mu.on_space(space)?)
            }
            (MeasureDoc::Gaussian(x), MeasureDoc::Gaussian(y)) => relative_entropy_gaussian(x, y)?,
            _ => return Err(Error::input("nu and mu must be measures of the same kind")),
        };
        let text = if v.is_infinite() { json!("inf") } else { json!(v) };
        return Ok(Report::new(&["entropy"], vec![vec![fmt17(v)]], json!({ "entropy": text }), false));
    }
    let p = a
        .p_model
        .as_deref()
        .map(load_model)
        .transpose()?
        .ok_or_else(|| Error::input("entropy needs --nu/--mu, or --p-model with --q-model or --q-joint"))?;
    if let Some(qj) = &a.q_joint {
        let chain = p
            .as_tabular()
            .ok_or_else(|| Error::input("--q-joint needs a tabular --p-model"))?;
        let q = parse_joint(&load_json(qj)?, &chain.labels)?;
        let init = chain.initial_law();
        let kernel = |h: &[usize]| chain.row(*h.last().unwrap());
        let b = chain_rule_decompose(
            &q,
            &Reference::Kernel {
                initial: &init,
                kernel: &kernel,
            },
        )?;
        return Ok(breakdown_report(b));
    }
    let q = a
        .q_model
        .as_deref()
        .map(load_model)
        .transpose()?
        .ok_or_else(|| Error::input("entropy needs --q-model or --q-joint with --p-model"))?;
    let n = a.n.ok_or_else(|| Error::input("--q-model needs --n"))?;
    Ok(breakdown_report(markov_breakdown(&q, &p, n)?))
}

// ---- certify

fn certificate_report(c: &Certificate) -> Report {
    let row = vec![
        serde_json::to_value(c.inequality).unwrap().as_str().unwrap().to_string(),
        fmt17(c.constant),
        c.order_s.map(fmt17).unwrap_or_default(),
        fmt17(c.worst_slack),
        fmt17(c.tolerance),
        serde_json::to_value(c.verdict).unwrap().as_str().unwrap().to_string(),
        c.search_size.to_string(),
        c.witness.description.clone(),
        c.witness.t.map(fmt17).unwrap_or_default(),
    ];
    Report::new(
        &[
            "inequality", "constant", "order_s", "worst_slack", "tolerance", "verdict", "search_size", "witness",
            "witness_t",
        ],
        vec![row],
        json!({ "certificate": c }),
        !c.passed(),
    )
}

fn best_report(kind: &str, b: certify::BestConstant) -> Report {
    Report::new(
        &["inequality", "best_constant", "evaluations", "degenerate"],
        vec![vec![
            kind.to_string(),
            fmt17(b.value),
            b.trace.len().to_string(),
            b.degenerate.to_string(),
        ]],
        json!({"inequality": kind, "best_constant": b.value, "degenerate": b.degenerate, "trace": b.trace}),
        false,
    )
}

fn bracket(best: &[f64]) -> Result<(f64, f64)> {
    match best {
        [lo, hi] => Ok((*lo, *hi)),
        _ => Err(Error::input("--best takes lo,hi")),
    }
}

fn certify_discrete<P: SupportJson, M: Metric<P>>(
    metric: &M,
    mu: &DiscreteMeasure<P>,
    a: &CertifyArgs,
    g: &Global,
    parse_family: impl Fn(&Value) -> Result<DiscreteMeasure<P>>,
) -> Result<Report> {
    let grid = certify::default_t_grid();
    let seed = g.seed;
    match a.inequality {
        InequalityArg::Gc => {
            if let Some(r) = &a.replay {
                let cert: Certificate = load_certificate(r)?;
                let slack = certify::replay_gc(mu, &cert)?;
                return Ok(replay_report(&cert, slack));
            }
            let check = |k: f64| certify::check_gc(metric, mu, k, &grid, a.family_size, seed);
            if let Some(b) = &a.best {
                let (lo, hi) = bracket(b)?;
                return Ok(best_report("GC", certify::best_constant(check, Monotonicity::LargerIsWeaker, lo, hi)?));
            }
            Ok(certificate_report(&check(need_constant(a)?)?))
        }
        InequalityArg::Transport => {
            let family = match &a.family {
                Some(f) => load_json(f)?
                    .as_array()
                    .ok_or_else(|| Error::input("--family must be a JSON array of measures"))?
                    .iter()
                    .map(&parse_family)
                    .collect::<Result<Vec<_>>>()?,
                None => certify::default_transport_family(metric, mu, &grid, a.family_size, a.family_size, seed)?,
            };
            let desc = if a.family.is_some() {
                "user family"
            } else {
                "exponential tilts and random reweightings"
            };
            if let Some(r) = &a.replay {
                let cert = load_certificate(r)?;
                let slack = certify::replay_transport(metric, mu, &family, &cert)?;
                return Ok(replay_report(&cert, slack));
            }
            let check = |al: f64| certify::check_transport(metric, mu, al, a.s, &family, desc);
            if let Some(b) = &a.best {
                let (lo, hi) = bracket(b)?;
                return Ok(best_report("T_s", certify::best_constant(check, Monotonicity::LargerIsStronger, lo, hi)?));
            }
            Ok(certificate_report(&check(need_constant(a)?)?))
        }
        InequalityArg::Bg => {
            let r = certify::check_bg_duality(metric, mu, need_constant(a)?, seed)?;
            let rows = vec![
                vec!["GC".into(), fmt17(r.gc.constant), fmt17(r.gc.worst_slack), verdict_str(&r.gc)],
                vec!["T_1".into(), fmt17(r.t1.constant), fmt17(r.t1.worst_slack), verdict_str(&r.t1)],
            ];
            let failed = !r.gc.passed() || !r.t1.passed();
            Ok(Report::new(
                &["inequality", "constant", "worst_slack", "verdict"],
                rows,
                serde_json::to_value(&r).unwrap(),
                failed,
            ))
        }
        InequalityArg::Lsi => unreachable!(),
    }
}

fn verdict_str(c: &Certificate) -> String {
    if c.passed() { "pass" } else { "fail" }.to_string()
}

fn need_constant(a: &CertifyArgs) -> Result<f64> {
    a.constant
        .ok_or_else(|| Error::input("certify needs --constant (or --best lo,hi)"))
}

fn load_certificate(arg: &str) -> Result<Certificate> {
    let v = load_json(arg)?;
    let v = v.get("certificate").cloned().unwrap_or(v);
    serde_json::from_value(v).map_err(|e| Error::input(format!("bad certificate JSON: {e}")))
}

fn replay_report(c: &Certificate, slack: f64) -> Report {
    let diff = (slack - c.worst_slack).abs();
    let ok = diff <= 1e-9 || slack == c.worst_slack;
    Report::new(
        &["recorded_slack", "replayed_slack", "difference", "reproduced"],
        vec![vec![fmt17(c.worst_slack), fmt17(slack), fmt17(diff), ok.to_string()]],
        json!({"recorded_slack": c.worst_slack, "replayed_slack": slack, "reproduced": ok}),
        !ok,
    )
}

fn certify_cmd(a: &CertifyArgs, g: &Global) -> Result<Report> {
    if a.inequality == InequalityArg::Lsi {
        let density = match &a.mu {
            None => GridDensity::standard_gaussian(8.0, 2001)?,
            Some(m) => match parse_measure(&load_json(m)?)? {
                MeasureDoc::Real(mu) => GridDensity::new(mu.support().to_vec(), mu.weights())?,
                _ => return Err(Error::input("lsi needs a discrete measure on a uniform real grid")),
            },
        };
        if let Some(r) = &a.replay {
            let cert = load_certificate(r)?;
            return Ok(replay_report(&cert, certify::replay_lsi(&density, &cert)?));
        }
        let family: Vec<TestFunction> = certify::default_lsi_family(&density.grid, a.family_size, g.seed);
        let desc = format!("polynomials, exponentials, {} bump combinations", a.family_size);
        let check = |al: f64| certify::check_lsi_grid(&density, al, &family, &desc);
        if let Some(b) = &a.best {
            let (lo, hi) = bracket(b)?;
            return Ok(best_report("LSI", certify::best_constant(check, Monotonicity::LargerIsStronger, lo, hi)?));
        }
        return Ok(certificate_report(&check(need_constant(a)?)?));
    }
    let mu_arg = a.mu.as_deref().ok_or_else(|| Error::input("certify needs --mu"))?;
    let space = load_space(&a.space)?;
    let doc = parse_measure(&load_json(mu_arg)?)?;
    match &doc {
        MeasureDoc::Real(mu) => certify_discrete(&RealLine, mu, a, g, |v| match parse_measure(v)? {
            MeasureDoc::Real(m) => Ok(m),
            _ => Err(Error::input("family members must be real-line measures")),
        }),
        MeasureDoc::Euclidean(mu) => certify_discrete(&Euclidean, mu, a, g, |v| match parse_measure(v)? {
            MeasureDoc::Euclidean(m) => Ok(m),
            _ => Err(Error::input("family members must be Euclidean measures")),
        }),
        MeasureDoc::Labeled(..) => {
            let space = space
                .as_ref()
                .ok_or_else(|| Error::input("labeled measures need --space"))?;
            let mu = doc.on_space(space)?;
            certify_discrete(space, &mu, a, g, |v| parse_measure(v)?.on_space(space))
        }
        MeasureDoc::Gaussian(_) => Err(Error::input("certify works on discrete measures")),
    }
}

// ---- simulate

fn simulate_cmd(a: &SimulateArgs, g: &Global) -> Result<Report> {
    let model = load_model(&a.model)?;
    let paths = simulate_joint(&model, a.n, g.samples, g.seed)?;
    let mut header = vec!["path".to_string()];
    for k in 1..=a.n {
        if paths.dim == 1 {
            header.push(format!("x{k}"));
        } else {
            for c in 1..=paths.dim {
                header.push(format!("x{k}_{c}"));
            }
        }
    }
    let rows: Vec<Vec<String>> = (0..paths.n_paths)
        .map(|p| {
            let mut r = vec![p.to_string()];
            r.extend(paths.path(p).iter().map(|v| match &paths.labels {
                Some(l) => l[*v as usize].clone(),
                None => fmt17(*v),
            }));
            r
        })
        .collect();
    Ok(Report {
        header,
        rows,
        json: json!({ "paths": paths }),
        failed: false,
    })
}

// ---- couple

fn couple_cmd(a: &CoupleArgs, g: &Global) -> Result<Report> {
    let p = load_model(&a.p)?;
    let q = load_model(&a.q)?;
    let res = Resolution {
        quantiles: a.quantiles,
        atom_budget: a.atom_budget,
    };
    let bound = recursive_coupling_bound(&p, &q, a.n, a.s, &res)?;
    let mut rows: Vec<Vec<String>> = bound
        .step_costs
        .iter()
        .enumerate()
        .map(|(k, d)| vec![format!("d_{}", k + 1), fmt17(*d)])
        .collect();
    rows.push(vec!["upper_bound".into(), fmt17(bound.upper_bound)]);
    rows.push(vec!["error_budget".into(), fmt17(bound.error_budget)]);
    let mut out = json!({ "bound": bound });
    let mut failed = false;
    match (a.alpha, a.l) {
        (Some(alpha), Some(l)) => {
            let audit = transport_inequality_audit(
                &p,
                alpha,
                a.s,
                l,
                a.n,
                &[Perturbation::Model(q.clone())],
                g.seed,
                g.tol,
                &res,
            )?;
            rows.push(vec!["alpha_n".into(), fmt17(audit.alpha_n.value)]);
            rows.push(vec!["worst_slack".into(), fmt17(audit.worst_slack)]);
            rows.push(vec!["verdict".into(), if audit.pass { "pass" } else { "fail" }.into()]);
            failed = !audit.pass;
            out["audit"] = serde_json::to_value(&audit).unwrap();
        }
        (None, None) => {}
        _ => return Err(Error::input("the audit needs both --alpha and --l")),
    }
    Ok(Report::new(&["quantity", "value"], rows, out, failed))
}

// ---- verify-ou

/// Steps `s` used for the MGF exactness check.
pub const OU_MGF_POINTS: [f64; 6] = [-1.0, -0.5, -0.25, 0.25, 0.5, 1.0];

fn verify_ou_cmd(a: &VerifyOuArgs, g: &Global) -> Result<Report> {
    let c = constants::ou_kappa(a.rho, a.tau, a.n, a.x)?;
    let direct = constants::gc_markov_kappa(c.sigma2, c.theta, a.n)?;
    let rel = (c.kappa_n - direct).abs() / direct.abs().max(f64::MIN_POSITIVE);
    let identity_ok = rel <= 1e-12;
    let mut rows = vec![vec![
        "identity".into(),
        String::new(),
        fmt17(direct),
        fmt17(c.kappa_n),
        fmt17(rel),
        identity_ok.to_string(),
    ]];
    let mut checks = vec![json!({"check": "identity", "gc_markov_kappa": direct, "kappa_n": c.kappa_n, "relative_error": rel, "pass": identity_ok})];
    let mut failed = !identity_ok;
    if g.samples > 0 {
        let model = MarkovModel::Ou {
            rho: a.rho,
            tau: a.tau,
            x0: a.x,
        };
        let n = a.n as usize;
        let paths = simulate_joint(&model, n, g.samples, g.seed)?;
        let sums: Vec<f64> = (0..paths.n_paths)
            .map(|p| crate::numeric::compensated_sum(paths.path(p).iter().cloned()))
            .collect();
        for s in OU_MGF_POINTS {
            let (obs, se) = log_mgf(&sums, s);
            let expected = s * c.mean_fn + 0.5 * s * s * c.kappa_n;
            let ok = (obs - expected).abs() <= 3.0 * se;
            failed |= !ok;
            rows.push(vec![
                "mgf".into(),
                fmt17(s),
                fmt17(expected),
                fmt17(obs),
                fmt17(se),
                ok.to_string(),
            ]);
            checks.push(json!({"check": "mgf", "s": s, "expected": expected, "observed": obs, "std_error": se, "pass": ok}));
        }
    }
    Ok(Report::new(
        &["check", "s", "expected", "observed", "error", "pass"],
        rows,
        json!({"theta": c.theta, "sigma2": c.sigma2, "kappa_n": c.kappa_n, "mean_Fn": c.mean_fn, "checks": checks}),
        failed,
    ))
}

/// Empirical `log E e^{sF}` and its delta-method standard error.
pub fn log_mgf(samples: &[f64], s: f64) -> (f64, f64) {
    let n = samples.len() as f64;
    // factor out the largest exponent to stay finite
    let shift = samples.iter().map(|f| s * f).fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = samples.iter().map(|f| (s * f - shift).exp()).collect();
    let mean = crate::numeric::compensated_sum(e.iter().cloned()) / n;
    let var = crate::numeric::compensated_sum(e.iter().map(|x| (x - mean) * (x - mean))) / (n - 1.0);
    (shift + mean.ln(), (var / n).sqrt() / mean)
}

// ---- verify-arma

/// A seeded `m x m` matrix with standard normal entries rescaled to spectral radius `target`.
pub fn random_matrix_with_radius(m: usize, target: f64, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let rho = constants::spectral_radius(&a);
        if rho > 1e-3 {
            return a * (target / rho);
        }
    }
}

/// Seeded ARMA instance `i`: 2x2 for even `i`, 3x3 for odd, radius in `[0.2, 0.9]`.
pub fn arma_instance(seed: u64, i: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    let target = rng.random_range(0.2..=0.9);
    random_matrix_with_radius(2 + i % 2, target, &mut rng)
}

/// `min_{n <= n_max} 1 / lambda_max(Sigma_n)`, the exact LSI constant of the joint Gaussian.
pub fn arma_exact_lsi(a: &DMatrix<f64>, b: &DMatrix<f64>, n_max: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    for n in 1..=n_max {
        let cov = arma_joint_covariance(a, b, n)?;
        best = best.min(1.0 / crate::numeric::max_eigenvalue(&cov));
    }
    Ok(best)
}

fn verify_arma_cmd(a: &VerifyArmaArgs, g: &Global) -> Result<Report> {
    let instances: Vec<(DMatrix<f64>, DMatrix<f64>)> = match &a.a {
        Some(am) => {
            let am = load_matrix(am, "A")?;
            let bm = match &a.b {
                Some(b) => load_matrix(b, "B")?,
                None => DMatrix::identity(am.nrows(), am.ncols()),
            };
            vec![(am, bm)]
        }
        None => (0..a.instances)
            .map(|i| {
                let am = arma_instance(g.seed, i);
                let m = am.nrows();
                (am, DMatrix::identity(m, m))
            })
            .collect(),
    };
    let mut rows = Vec::new();
    let mut out = Vec::new();
    let mut failed = false;
    for (i, (am, bm)) in instances.iter().enumerate() {
        let alpha = constants::arma_lsi_alpha(am, bm, a.series_tol)?;
        let exact = arma_exact_lsi(am, bm, a.n_max)?;
        let ok = alpha <= exact + g.tol;
        failed |= !ok;
        let rho = constants::spectral_radius(am);
        rows.push(vec![
            i.to_string(),
            am.nrows().to_string(),
            fmt17(rho),
            fmt17(alpha),
            fmt17(exact),
            ok.to_string(),
        ]);
        out.push(json!({"instance": i, "dim": am.nrows(), "rho": rho, "alpha": alpha, "exact": exact, "pass": ok}));
    }
    Ok(Report::new(
        &["instance", "dim", "rho", "alpha", "exact_lsi", "pass"],
        rows,
        json!({ "instances": out }),
        failed,
    ))
}
