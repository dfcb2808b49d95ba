//! Step-by-step coupling of two sequential laws: an optimal plan between the
//! initial laws, then between the conditional laws along every coupled history.
//! The accumulated cost bounds `W_s` of the joint laws from above.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{ts_weak_alpha, RegimeConstant};
use crate::entropy::{chain_rule_decompose, markov_breakdown, Reference};
use crate::error::{Error, Result};
use crate::measure::{check_order, DiscreteMeasure, FiniteMetricSpace, ProductSpace};
use crate::numeric::{compensated_sum, gaussian_abs_moment, normal_quantile, KahanSum};
use crate::processes::{MarkovModel, TabularChain};
use crate::transport::{wasserstein_exact, wasserstein_gaussian_w2};

/// Atoms closer than this (in every coordinate) are merged.
pub const MERGE_TOL: f64 = 1e-12;
/// Atoms lighter than this are dropped into the error budget.
pub const DROP_WEIGHT: f64 = 1e-15;

/// Discretization and size limits for the coupled history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resolution {
    /// Quantiles per continuous step law.
    pub quantiles: usize,
    /// Largest number of coupled history atoms kept at any step.
    pub atom_budget: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Resolution {
            quantiles: 128,
            atom_budget: 1 << 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingBound {
    /// `(sum_k d_k)^(1/s)`, an upper bound on `W_s(Q^(n), P^(n))` for the product metric `d^(s)`.
    pub upper_bound: f64,
    pub step_costs: Vec<f64>,
    pub s: f64,
    pub method: String,
    /// Mass dropped with negligible atoms.
    pub error_budget: f64,
    /// Coupled atoms carried into each step.
    pub atoms: Vec<usize>,
}

impl CouplingBound {
    fn new(step_costs: Vec<f64>, s: f64, method: String, error_budget: f64, atoms: Vec<usize>) -> Self {
        let total = compensated_sum(step_costs.iter().cloned()).max(0.0);
        CouplingBound {
            upper_bound: total.powf(1.0 / s),
            step_costs,
            s,
            method,
            error_budget,
            atoms,
        }
    }
}

/// A sequential law on a finite state space.
pub trait FiniteLaw: Sync {
    /// Whether the next law depends only on the last state.
    fn is_markov(&self) -> bool;
    fn initial(&self) -> DiscreteMeasure<usize>;
    fn conditional(&self, history: &[usize]) -> Result<DiscreteMeasure<usize>>;
}

impl FiniteLaw for TabularChain {
    fn is_markov(&self) -> bool {
        true
    }

    fn initial(&self) -> DiscreteMeasure<usize> {
        self.initial_law()
    }

    fn conditional(&self, history: &[usize]) -> Result<DiscreteMeasure<usize>> {
        let last = *history
            .last()
            .ok_or_else(|| Error::input("conditional law needs a nonempty history"))?;
        Ok(self.row(last))
    }
}

/// An explicit joint law on `X^n`, read through its conditional laws.
pub struct JointLaw {
    table: crate::entropy::PrefixTable<usize>,
    horizon: usize,
}

impl JointLaw {
    pub fn new(joint: &DiscreteMeasure<Vec<usize>>) -> Result<Self> {
        let n = joint.support()[0].len();
        if n == 0 || joint.support().iter().any(|x| x.len() != n) {
            return Err(Error::input("joint law support must be tuples of one common length"));
        }
        Ok(JointLaw {
            table: crate::entropy::PrefixTable::new(joint, n),
            horizon: n,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

impl FiniteLaw for JointLaw {
    fn is_markov(&self) -> bool {
        false
    }

    fn initial(&self) -> DiscreteMeasure<usize> {
        self.table.conditional(&[]).expect("joint law has mass").1
    }

    fn conditional(&self, history: &[usize]) -> Result<DiscreteMeasure<usize>> {
        self.table
            .conditional(history)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::input(format!("history {history:?} is not charged by the joint law")))
    }
}

type Atom = (Vec<usize>, Vec<usize>, f64);

fn prune(atoms: Vec<Atom>, budget: usize, error: &mut f64) -> Result<Vec<Atom>> {
    let dropped: f64 = atoms.iter().filter(|a| a.2 < DROP_WEIGHT).map(|a| a.2).sum();
    let mut kept: Vec<Atom> = atoms.into_iter().filter(|a| a.2 >= DROP_WEIGHT).collect();
    if dropped > 0.0 {
        *error += dropped;
        let total = compensated_sum(kept.iter().map(|a| a.2));
        kept.iter_mut().for_each(|a| a.2 /= total);
    }
    if kept.len() > budget {
        return Err(Error::Resource(format!(
            "coupled history has {} atoms, above the budget of {budget}; use a coarser resolution",
            kept.len()
        )));
    }
    Ok(kept)
}

/// Recursive coupling bound between two sequential laws on one finite space; rows follow `q`.
pub fn recursive_coupling_finite(
    space: &FiniteMetricSpace,
    q: &dyn FiniteLaw,
    p: &dyn FiniteLaw,
    n: usize,
    s: f64,
    resolution: &Resolution,
) -> Result<CouplingBound> {
    check_order(s)?;
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    let markov = q.is_markov() && p.is_markov();
    let (_, plan) = wasserstein_exact(space, &q.initial(), &p.initial(), s)?;
    let mut costs = vec![plan.cost];
    let mut error = 0.0;
    let mut atoms: Vec<Atom> = Vec::new();
    for (i, row) in plan.weights.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            if *w > 0.0 {
                atoms.push((vec![plan.rows.support()[i]], vec![plan.cols.support()[j]], *w));
            }
        }
    }
    let mut sizes = vec![1];
    for k in 1..n {
        atoms = prune(atoms, resolution.atom_budget, &mut error)?;
        sizes.push(atoms.len());
        let last_step = k + 1 == n;
        let results: Vec<Result<(f64, Vec<Atom>)>> = atoms
            .par_iter()
            .map(|(hx, hy, w)| {
                let (_, plan) = wasserstein_exact(space, &q.conditional(hx)?, &p.conditional(hy)?, s)?;
                let mut next = Vec::new();
                if !last_step {
                    for (i, row) in plan.weights.iter().enumerate() {
                        for (j, pij) in row.iter().enumerate() {
                            if *pij > 0.0 {
                                let (x, y) = (plan.rows.support()[i], plan.cols.support()[j]);
                                let (mut nx, mut ny) = if markov {
                                    (Vec::new(), Vec::new())
                                } else {
                                    (hx.clone(), hy.clone())
                                };
                                nx.push(x);
                                ny.push(y);
                                next.push((nx, ny, w * pij));
                            }
                        }
                    }
                }
                Ok((w * plan.cost, next))
            })
            .collect();
        let mut cost = KahanSum::new();
        let mut merged: HashMap<(Vec<usize>, Vec<usize>), usize> = HashMap::new();
        let mut next_atoms: Vec<Atom> = Vec::new();
        for r in results {
            let (c, next) = r?;
            cost.add(c);
            for (x, y, w) in next {
                match merged.get(&(x.clone(), y.clone())) {
                    Some(&i) => next_atoms[i].2 += w,
                    None => {
                        merged.insert((x.clone(), y.clone()), next_atoms.len());
                        next_atoms.push((x, y, w));
                    }
                }
            }
        }
        costs.push(cost.value().max(0.0));
        atoms = next_atoms;
    }
    let method = if markov {
        "exact LP per step on last-state pairs"
    } else {
        "exact LP per step on full histories"
    };
    Ok(CouplingBound::new(costs, s, method.into(), error, sizes))
}

/// Recursive coupling bound between two scalar Gaussian-kernel chains.
///
/// Each step cost is the exact `W_s^s` between the two Gaussian conditional laws;
/// the coupled history is carried forward on matched quantile grids.
pub fn recursive_coupling_gaussian(
    q: &MarkovModel,
    p: &MarkovModel,
    n: usize,
    s: f64,
    resolution: &Resolution,
) -> Result<CouplingBound> {
    check_order(s)?;
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    let (Some((mq, vq)), Some((mp, vp))) = (q.scalar_initial(), p.scalar_initial()) else {
        return Err(Error::input("gaussian coupling needs scalar Gaussian-kernel chains"));
    };
    let k = resolution.quantiles.max(1);
    let z: Vec<f64> = (0..k)
        .map(|i| normal_quantile((i as f64 + 0.5) / k as f64))
        .collect();
    let step = |mx: f64, vx: f64, my: f64, vy: f64| gaussian_abs_moment(mx - my, vx.sqrt() - vy.sqrt(), s);
    let mut costs = vec![step(mq, vq, mp, vp)];
    let mut atoms: Vec<(f64, f64, f64)> = z
        .iter()
        .map(|z| (mq + vq.sqrt() * z, mp + vp.sqrt() * z, 1.0 / k as f64))
        .collect();
    let mut sizes = vec![1];
    let mut error = 0.0;
    for t in 1..n {
        atoms = merge_real_atoms(atoms, &mut error);
        if atoms.len() > resolution.atom_budget {
            return Err(Error::Resource(format!(
                "coupled history has {} atoms, above the budget of {}; use fewer quantiles",
                atoms.len(),
                resolution.atom_budget
            )));
        }
        sizes.push(atoms.len());
        let last_step = t + 1 == n;
        let parts: Vec<(f64, Vec<(f64, f64, f64)>)> = atoms
            .par_iter()
            .map(|&(x, y, w)| {
                let (mx, vx) = q.scalar_kernel(x).unwrap();
                let (my, vy) = p.scalar_kernel(y).unwrap();
                let next = if last_step {
                    Vec::new()
                } else {
                    z.iter()
                        .map(|z| (mx + vx.sqrt() * z, my + vy.sqrt() * z, w / k as f64))
                        .collect()
                };
                (w * step(mx, vx, my, vy), next)
            })
            .collect();
        let mut cost = KahanSum::new();
        let mut next_atoms = Vec::new();
        for (c, next) in parts {
            cost.add(c);
            next_atoms.extend(next);
        }
        costs.push(cost.value().max(0.0));
        atoms = next_atoms;
    }
    Ok(CouplingBound::new(
        costs,
        s,
        format!("closed-form Gaussian steps on {k}-quantile histories"),
        error,
        sizes,
    ))
}

fn merge_real_atoms(mut atoms: Vec<(f64, f64, f64)>, error: &mut f64) -> Vec<(f64, f64, f64)> {
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out: Vec<(f64, f64, f64)> = Vec::with_capacity(atoms.len());
    for a in atoms {
        match out.last_mut() {
            Some(l) if (l.0 - a.0).abs() <= MERGE_TOL && (l.1 - a.1).abs() <= MERGE_TOL => l.2 += a.2,
            _ => out.push(a),
        }
    }
    let dropped: f64 = out.iter().filter(|a| a.2 < DROP_WEIGHT).map(|a| a.2).sum();
    if dropped > 0.0 {
        *error += dropped;
        out.retain(|a| a.2 >= DROP_WEIGHT);
        let total = compensated_sum(out.iter().map(|a| a.2));
        out.iter_mut().for_each(|a| a.2 /= total);
    }
    out
}

/// Recursive coupling bound between `Q` (rows) and `P` over `n` steps.
pub fn recursive_coupling_bound(
    p: &MarkovModel,
    q: &MarkovModel,
    n: usize,
    s: f64,
    resolution: &Resolution,
) -> Result<CouplingBound> {
    p.validate()?;
    q.validate()?;
    match (q, p) {
        (MarkovModel::Tabular(qc), MarkovModel::Tabular(pc)) => {
            let space = pc.space()?;
            if qc.space()? != space {
                return Err(Error::input("tabular models live on different state spaces"));
            }
            recursive_coupling_finite(&space, qc, pc, n, s, resolution)
        }
        _ if q.scalar_initial().is_some() && p.scalar_initial().is_some() => {
            recursive_coupling_gaussian(q, p, n, s, resolution)
        }
        _ => Err(Error::input(
            "recursive coupling needs two tabular chains or two scalar Gaussian-kernel chains",
        )),
    }
}

/// A law `Q` compared against the reference chain in an audit.
#[derive(Debug, Clone)]
pub enum Perturbation {
    Model(MarkovModel),
    /// A joint law on `X^n` over state indices of a tabular reference.
    Joint(DiscreteMeasure<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditEntry {
    pub label: String,
    pub w_bound: f64,
    pub w_exact: Option<f64>,
    pub entropy: f64,
    /// `W - sqrt(2 Ent / alpha_n)` with the exact `W` when available.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub alpha_n: RegimeConstant,
    pub s: f64,
    pub n: usize,
    pub tolerance: f64,
    pub worst_slack: f64,
    pub pass: bool,
    pub entries: Vec<AuditEntry>,
}

const EXACT_JOINT_LIMIT: usize = 1024;

/// Largest joint support for which exact joint `W_s` is computed in audits.
pub fn exact_joint_limit() -> usize {
    EXACT_JOINT_LIMIT
}

/// Exponential tilts `Q ∝ e^{t F} P^(n)` of a tabular chain's joint law, with
/// `F(x) = sum_j c_j d(x_j, x_ref)` for seeded random coefficients `c_j in [-1, 1]`.
pub fn exponential_tilts(
    chain: &TabularChain,
    n: usize,
    t_grid: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<DiscreteMeasure<Vec<usize>>>> {
    use rand::{Rng, SeedableRng};
    let joint = chain.joint(n)?;
    let space = chain.space()?;
    let mut out = Vec::new();
    for i in 0..count {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let coef: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let anchor = rng.random_range(0..chain.states());
        for &t in t_grid {
            let masses: Vec<f64> = joint
                .iter()
                .map(|(x, w)| {
                    let f: f64 = x.iter().zip(&coef).map(|(xj, c)| c * space.d(*xj, anchor)).sum();
                    w * (t * f).exp()
                })
                .collect();
            out.push(DiscreteMeasure::from_masses(joint.support().to_vec(), masses)?);
        }
    }
    Ok(out)
}

/// Checks `W_s(Q, P^(n)) <= sqrt(2 Ent(Q | P^(n)) / alpha_n)` with
/// `alpha_n = ts_weak_alpha(alpha_hyp, l_hyp, s, n)` over the perturbations.
///
/// An empty perturbation list selects a default family: seeded exponential tilts
/// for tabular chains, initial mean shifts `c in {+-0.5, +-1, +-2}` for Gaussian chains.
#[allow(clippy::too_many_arguments)]
pub fn transport_inequality_audit(
    p: &MarkovModel,
    alpha_hyp: f64,
    s: f64,
    l_hyp: f64,
    n: usize,
    perturbations: &[Perturbation],
    seed: u64,
    tolerance: f64,
    resolution: &Resolution,
) -> Result<AuditReport> {
    p.validate()?;
    let alpha_n = ts_weak_alpha(alpha_hyp, l_hyp, s, n as u64)?;
    let defaults;
    let perturbations = if perturbations.is_empty() {
        defaults = default_perturbations(p, n, seed)?;
        &defaults[..]
    } else {
        perturbations
    };
    let mut entries = Vec::with_capacity(perturbations.len());
    for (idx, pert) in perturbations.iter().enumerate() {
        let (label, w_bound, w_exact, entropy) = match pert {
            Perturbation::Model(q) => {
                q.validate()?;
                let bound = recursive_coupling_bound(p, q, n, s, resolution)?;
                let exact = exact_model_distance(q, p, n, s)?;
                let ent = markov_breakdown(q, p, n)?.total;
                (format!("model {idx}"), bound.upper_bound, exact, ent)
            }
            Perturbation::Joint(qj) => {
                let pc = p
                    .as_tabular()
                    .ok_or_else(|| Error::input("joint perturbations need a tabular reference chain"))?;
                let law = JointLaw::new(qj)?;
                if law.horizon() != n {
                    return Err(Error::input("joint perturbation has the wrong horizon"));
                }
                let space = pc.space()?;
                let bound = recursive_coupling_finite(&space, &law, pc, n, s, resolution)?;
                let pj = pc.joint(n)?;
                let exact = if qj.len() <= EXACT_JOINT_LIMIT && pj.len() <= EXACT_JOINT_LIMIT {
                    let prod = ProductSpace::new(space, n, s)?;
                    Some(wasserstein_exact(&prod, qj, &pj, s)?.0)
                } else {
                    None
                };
                let init = pc.initial_law();
                let kernel = |h: &[usize]| pc.row(*h.last().unwrap());
                let ent = chain_rule_decompose(
                    qj,
                    &Reference::Kernel {
                        initial: &init,
                        kernel: &kernel,
                    },
                )?
                .total;
                (format!("joint {idx}"), bound.upper_bound, exact, ent)
            }
        };
        let w = w_exact.unwrap_or(w_bound);
        let slack = if entropy.is_infinite() {
            f64::NEG_INFINITY
        } else {
            w - (2.0 * entropy / alpha_n.value).sqrt()
        };
        entries.push(AuditEntry {
            label,
            w_bound,
            w_exact,
            entropy,
            slack,
        });
    }
    let worst_slack = entries.iter().map(|e| e.slack).fold(f64::NEG_INFINITY, f64::max);
    Ok(AuditReport {
        alpha_n,
        s,
        n,
        tolerance,
        worst_slack,
        pass: worst_slack <= tolerance,
        entries,
    })
}

fn default_perturbations(p: &MarkovModel, n: usize, seed: u64) -> Result<Vec<Perturbation>> {
    match p {
        MarkovModel::Tabular(c) => Ok(exponential_tilts(c, n, &[-2.0, -0.5, 0.5, 2.0], 4, seed)?
            .into_iter()
            .map(Perturbation::Joint)
            .collect()),
        _ => {
            let (_, v) = p
                .scalar_initial()
                .ok_or_else(|| Error::input("no default perturbations for this model"))?;
            let (m, _) = p.scalar_initial().unwrap();
            Ok([-2.0, -1.0, -0.5, 0.5, 1.0, 2.0]
                .iter()
                .map(|c| Perturbation::Model(with_initial(p, m + c, v)))
                .collect())
        }
    }
}

/// `p` with its initial law replaced by `N(mean, var)`.
pub fn with_initial(p: &MarkovModel, mean: f64, var: f64) -> MarkovModel {
    let law = Some(crate::processes::InitialLaw { mean, var });
    match p.clone() {
        MarkovModel::Ou { rho, tau, .. } => {
            let (theta, sigma2) = crate::constants::ou_parameters(rho, tau);
            MarkovModel::GaussianKernel {
                theta,
                sigma2,
                x0: 0.0,
                initial: law,
            }
        }
        MarkovModel::GaussianKernel { theta, sigma2, x0, .. } => MarkovModel::GaussianKernel {
            theta,
            sigma2,
            x0,
            initial: law,
        },
        MarkovModel::ContractionNoise { map, noise_var, x0, .. } => MarkovModel::ContractionNoise {
            map,
            noise_var,
            x0,
            initial: law,
        },
        other => other,
    }
}

/// Exact `W_s` between joint laws when it has a closed form or a small LP.
fn exact_model_distance(q: &MarkovModel, p: &MarkovModel, n: usize, s: f64) -> Result<Option<f64>> {
    match (q, p) {
        (MarkovModel::Tabular(qc), MarkovModel::Tabular(pc)) => {
            let (qj, pj) = (qc.joint(n)?, pc.joint(n)?);
            if qj.len() > EXACT_JOINT_LIMIT || pj.len() > EXACT_JOINT_LIMIT {
                return Ok(None);
            }
            let prod = ProductSpace::new(pc.space()?, n, s)?;
            Ok(Some(wasserstein_exact(&prod, &qj, &pj, s)?.0))
        }
        _ => {
            let (Some(gq), Some(gp)) = (q.gaussian_joint(n)?, p.gaussian_joint(n)?) else {
                return Ok(None);
            };
            if s == 2.0 {
                return wasserstein_gaussian_w2(&gq, &gp).map(Some);
            }
            // equal covariances: the translation coupling is optimal for every s >= 1
            let scale = gp.cov().abs().max().max(1.0);
            if (gq.cov() - gp.cov()).abs().max() <= 1e-12 * scale {
                let dm = gq.mean() - gp.mean();
                let c = compensated_sum(dm.iter().map(|d| d.abs().powf(s)));
                return Ok(Some(c.powf(1.0 / s)));
            }
            Ok(None)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::processes::InitialLaw;

    fn chain(init: f64, p01: f64, p11: f64) -> TabularChain {
        TabularChain::new(
            vec!["0".into(), "1".into()],
            vec![1.0 - init, init],
            vec![vec![1.0 - p01, p01], vec![1.0 - p11, p11]],
        )
        .unwrap()
    }

    #[test]
    fn identical_chains_cost_nothing() {
        let p = MarkovModel::Tabular(chain(0.3, 0.2, 0.7));
        let b = recursive_coupling_bound(&p, &p, 4, 1.0, &Resolution::default()).unwrap();
        assert_eq!(b.upper_bound, 0.0);
        assert!(b.step_costs.iter().all(|c| *c == 0.0));
        let g = MarkovModel::gaussian_kernel(0.5, 1.0, 0.3);
        let b = recursive_coupling_bound(&g, &g, 3, 2.0, &Resolution::default()).unwrap();
        assert!(b.upper_bound < 1e-12);
    }

    #[test]
    fn single_step_is_exact() {
        let p = chain(0.3, 0.2, 0.7);
        let q = chain(0.8, 0.5, 0.5);
        let b = recursive_coupling_bound(
            &MarkovModel::Tabular(p.clone()),
            &MarkovModel::Tabular(q.clone()),
            1,
            2.0,
            &Resolution::default(),
        )
        .unwrap();
        let (w, _) = wasserstein_exact(&p.space().unwrap(), &q.initial_law(), &p.initial_law(), 2.0).unwrap();
        assert!((b.upper_bound - w).abs() < 1e-12);
    }

    #[test]
    fn bound_dominates_exact_joint_distance() {
        let p = chain(0.3, 0.2, 0.7);
        let q = chain(0.6, 0.9, 0.1);
        for s in [1.0, 2.0] {
            let b = recursive_coupling_bound(
                &MarkovModel::Tabular(p.clone()),
                &MarkovModel::Tabular(q.clone()),
                2,
                s,
                &Resolution::default(),
            )
            .unwrap();
            let prod = ProductSpace::new(p.space().unwrap(), 2, s).unwrap();
            let (w, _) = wasserstein_exact(&prod, &q.joint(2).unwrap(), &p.joint(2).unwrap(), s).unwrap();
            assert!(b.upper_bound >= w - 1e-12, "{} < {w}", b.upper_bound);
            assert!((b.upper_bound.powf(s) - b.step_costs.iter().sum::<f64>()).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_mean_shift_is_exact() {
        let p = MarkovModel::gaussian_kernel(0.5, 1.0, 0.0);
        let q = MarkovModel::GaussianKernel {
            theta: 0.5,
            sigma2: 1.0,
            x0: 0.0,
            initial: Some(InitialLaw { mean: 1.0, var: 1.0 }),
        };
        let b = recursive_coupling_bound(&p, &q, 3, 2.0, &Resolution::default()).unwrap();
        let want = (1.0f64 + 0.25 + 0.0625).sqrt();
        assert!((b.upper_bound - want).abs() < 1e-12);
        let exact = exact_model_distance(&q, &p, 3, 2.0).unwrap().unwrap();
        assert!((exact - want).abs() < 1e-10);
    }

    #[test]
    fn atom_budget_is_enforced() {
        let p = MarkovModel::gaussian_kernel(0.5, 1.0, 0.0);
        let q = MarkovModel::gaussian_kernel(0.9, 2.0, 0.0);
        let res = Resolution {
            quantiles: 64,
            atom_budget: 100,
        };
        let err = recursive_coupling_bound(&p, &q, 3, 1.0, &res).unwrap_err();
        assert!(matches!(err, Error::Resource(_)));
    }

    #[test]
    fn mismatched_models_are_rejected() {
        let p = MarkovModel::Tabular(chain(0.3, 0.2, 0.7));
        let g = MarkovModel::gaussian_kernel(0.5, 1.0, 0.0);
        assert!(recursive_coupling_bound(&p, &g, 2, 1.0, &Resolution::default())
            .unwrap_err()
            .is_input());
    }

    #[test]
    fn audit_examples() {
        let p = MarkovModel::gaussian_kernel(0.5, 1.0, 0.0);
        let same = transport_inequality_audit(
            &p,
            1.0,
            2.0,
            0.25,
            3,
            &[Perturbation::Model(p.clone())],
            0,
            1e-9,
            &Resolution::default(),
        )
        .unwrap();
        assert_eq!(same.worst_slack, 0.0);
        let shifted = transport_inequality_audit(&p, 1.0, 2.0, 0.25, 3, &[], 0, 1e-9, &Resolution::default()).unwrap();
        assert!(shifted.pass);
        assert_eq!(shifted.entries.len(), 6);

        let t = MarkovModel::Tabular(chain(0.5, 0.3, 0.6));
        let report = transport_inequality_audit(&t, 4.0, 1.0, 0.3, 3, &[], 7, 1e-9, &Resolution::default()).unwrap();
        assert!(report.pass, "{report:?}");
        assert!(report.entries.iter().all(|e| e.w_exact.unwrap() <= e.w_bound + 1e-12));
    }
}
