//! Relative entropy of discrete and Gaussian laws, and its chain-rule
//! decomposition over the steps of a sequence. Natural logarithms throughout.

use std::collections::HashMap;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, GaussianMeasure, Point};
use crate::numeric::KahanSum;
use crate::processes::MarkovModel;

/// `Ent(nu | mu) = sum nu_i log(nu_i / mu_i)`, `+inf` when `nu` charges a `mu`-null point.
pub fn relative_entropy_discrete<P: Point>(nu: &DiscreteMeasure<P>, mu: &DiscreteMeasure<P>) -> f64 {
    let index = mu.index();
    let mut acc = KahanSum::new();
    for (p, w) in nu.iter() {
        if w == 0.0 {
            continue;
        }
        let m = index.get(&p.key()).map_or(0.0, |&i| mu.weights()[i]);
        if m == 0.0 {
            return f64::INFINITY;
        }
        acc.add(w * (w / m).ln());
    }
    acc.value().max(0.0)
}

/// Closed-form `Ent(nu | mu)` for Gaussian laws; `+inf` when `nu` is degenerate.
pub fn relative_entropy_gaussian(nu: &GaussianMeasure, mu: &GaussianMeasure) -> Result<f64> {
    let m = mu.dim();
    if nu.dim() != m {
        return Err(Error::input(format!("gaussian dimensions differ ({} vs {m})", nu.dim())));
    }
    let chol_mu = mu
        .cov()
        .clone()
        .cholesky()
        .ok_or_else(|| Error::input("reference covariance is singular"))?;
    let Some(chol_nu) = nu.cov().clone().cholesky() else {
        return Ok(f64::INFINITY);
    };
    let logdet = |l: &nalgebra::DMatrix<f64>| 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let tr = chol_mu.solve(nu.cov()).trace();
    let dm = mu.mean() - nu.mean();
    let maha = dm.dot(&chol_mu.solve(&dm));
    let v = 0.5 * (tr - m as f64 + maha + logdet(&chol_mu.l()) - logdet(&chol_nu.l()));
    Ok(v.max(0.0))
}

fn serialize_real<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else if *x > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn serialize_reals<S: Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else {
            seq.serialize_element(if *x > 0.0 { "inf" } else { "-inf" })?;
        }
    }
    seq.end()
}

/// `Ent(Q^(n) | P^(n))` split into the initial term and one conditional term per step `k = 2..n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyBreakdown {
    #[serde(serialize_with = "serialize_real")]
    pub total: f64,
    #[serde(serialize_with = "serialize_real")]
    pub initial: f64,
    #[serde(serialize_with = "serialize_reals")]
    pub conditional: Vec<f64>,
    /// First step (1-based) at which absolute continuity fails, when `total` is infinite.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub infinite_at: Option<usize>,
}

impl EntropyBreakdown {
    fn finish(initial: f64, conditional: Vec<f64>) -> Self {
        let mut acc = KahanSum::new();
        acc.add(initial);
        conditional.iter().for_each(|c| acc.add(*c));
        EntropyBreakdown {
            total: acc.value(),
            initial,
            conditional,
            infinite_at: None,
        }
    }

    fn infinite(step: usize, initial: f64, conditional: Vec<f64>) -> Self {
        EntropyBreakdown {
            total: f64::INFINITY,
            initial,
            conditional,
            infinite_at: Some(step),
        }
    }
}

/// Reference law for [`chain_rule_decompose`].
pub enum Reference<'a, P> {
    /// An explicit joint law on `X^n`.
    Joint(&'a DiscreteMeasure<Vec<P>>),
    /// An initial law and a history-dependent kernel.
    Kernel {
        initial: &'a DiscreteMeasure<P>,
        kernel: &'a dyn Fn(&[P]) -> DiscreteMeasure<P>,
    },
}

/// Conditional laws of a joint measure given each prefix of length `k`.
pub(crate) struct PrefixTable<P: Point> {
    // prefix key -> (prefix mass, next point key -> (point, mass))
    levels: Vec<HashMap<Vec<P::Key>, (f64, Vec<(P, f64)>)>>,
}

impl<P: Point> PrefixTable<P> {
    pub(crate) fn new(joint: &DiscreteMeasure<Vec<P>>, n: usize) -> Self {
        let mut levels: Vec<HashMap<Vec<P::Key>, (f64, Vec<(P, f64)>)>> =
            (0..n).map(|_| HashMap::new()).collect();
        for (x, w) in joint.iter() {
            if w == 0.0 {
                continue;
            }
            let keys: Vec<P::Key> = x.iter().map(|p| p.key()).collect();
            for (k, level) in levels.iter_mut().enumerate() {
                let e = level.entry(keys[..k].to_vec()).or_insert((0.0, Vec::new()));
                e.0 += w;
                match e.1.iter_mut().find(|(p, _)| p.key() == keys[k]) {
                    Some(slot) => slot.1 += w,
                    None => e.1.push((x[k].clone(), w)),
                }
            }
        }
        PrefixTable { levels }
    }

    /// Mass of the prefix and the conditional law of the next coordinate, if charged.
    pub(crate) fn conditional(&self, prefix: &[P]) -> Option<(f64, DiscreteMeasure<P>)> {
        let key: Vec<P::Key> = prefix.iter().map(|p| p.key()).collect();
        let (mass, next) = self.levels.get(prefix.len())?.get(&key)?;
        let (support, masses): (Vec<P>, Vec<f64>) = next.iter().cloned().unzip();
        DiscreteMeasure::from_masses(support, masses)
            .ok()
            .map(|m| (*mass, m))
    }

    /// Prefixes of length `k` with their masses.
    pub(crate) fn prefixes(&self, k: usize) -> Vec<Vec<P::Key>> {
        self.levels[k].keys().cloned().collect()
    }
}

fn tuple_length<P: Point>(q: &DiscreteMeasure<Vec<P>>) -> Result<usize> {
    let n = q.support()[0].len();
    if n == 0 || q.support().iter().any(|x| x.len() != n) {
        return Err(Error::input("joint law support must be tuples of one common positive length"));
    }
    Ok(n)
}

/// Decomposes `Ent(Q | P)` step by step. Histories that `Q` does not charge contribute nothing.
pub fn chain_rule_decompose<P: Point>(q: &DiscreteMeasure<Vec<P>>, p: &Reference<P>) -> Result<EntropyBreakdown> {
    let n = tuple_length(q)?;
    if let Reference::Joint(pj) = p {
        if tuple_length(pj)? != n {
            return Err(Error::input("joint laws live on product spaces of different length"));
        }
    }
    let qt = PrefixTable::new(q, n);
    let pt = match p {
        Reference::Joint(pj) => Some(PrefixTable::new(pj, n)),
        Reference::Kernel { .. } => None,
    };
    // representative prefix points by key, so kernels can be evaluated
    let mut reps: HashMap<Vec<P::Key>, Vec<P>> = HashMap::new();
    for x in q.support() {
        for k in 0..n {
            reps.entry(x[..k].iter().map(|p| p.key()).collect())
                .or_insert_with(|| x[..k].to_vec());
        }
    }
    let mut terms = Vec::with_capacity(n);
    for k in 0..n {
        let mut acc = KahanSum::new();
        let mut prefixes = qt.prefixes(k);
        prefixes.sort_by_key(|key| format!("{key:?}"));
        for key in prefixes {
            let prefix = &reps[&key];
            let (mass, q_cond) = qt.conditional(prefix).expect("prefix charged by Q");
            let p_cond = match (p, &pt) {
                (Reference::Joint(_), Some(pt)) => pt.conditional(prefix).map(|(_, m)| m),
                (Reference::Kernel { initial, .. }, _) if k == 0 => Some((*initial).clone()),
                (Reference::Kernel { kernel, .. }, _) => Some(kernel(prefix)),
                _ => unreachable!(),
            };
            let e = match p_cond {
                Some(pc) => relative_entropy_discrete(&q_cond, &pc),
                None => f64::INFINITY,
            };
            if e.is_infinite() {
                let initial = terms.first().cloned().unwrap_or(f64::INFINITY);
                let conditional = terms.iter().skip(1).cloned().collect();
                return Ok(EntropyBreakdown::infinite(k + 1, initial, conditional));
            }
            acc.add(mass * e);
        }
        terms.push(acc.value().max(0.0));
    }
    Ok(EntropyBreakdown::finish(terms[0], terms[1..].to_vec()))
}

/// Breakdown between two Markov models over `n` steps.
///
/// Tabular models are decomposed exactly over the joint law of `Q`; affine scalar
/// Gaussian chains use the closed form for each step.
pub fn markov_breakdown(q: &MarkovModel, p: &MarkovModel, n: usize) -> Result<EntropyBreakdown> {
    q.validate()?;
    p.validate()?;
    if n == 0 {
        return Err(Error::input("n must be at least 1"));
    }
    match (q, p) {
        (MarkovModel::Tabular(qc), MarkovModel::Tabular(pc)) => {
            if qc.labels != pc.labels {
                return Err(Error::input("tabular models have different state spaces"));
            }
            let qj = qc.joint(n)?;
            let init = pc.initial_law();
            let kernel = |h: &[usize]| pc.row(*h.last().unwrap());
            chain_rule_decompose(
                &qj,
                &Reference::Kernel {
                    initial: &init,
                    kernel: &kernel,
                },
            )
        }
        _ => gaussian_chain_breakdown(q, p, n),
    }
}

fn gaussian_kl_1d(mq: f64, vq: f64, mp: f64, vp: f64) -> f64 {
    0.5 * (vq / vp - 1.0 + (mq - mp).powi(2) / vp + (vp / vq).ln())
}

fn gaussian_chain_breakdown(q: &MarkovModel, p: &MarkovModel, n: usize) -> Result<EntropyBreakdown> {
    let unsupported = || Error::input("closed-form chain entropy needs affine scalar Gaussian chains");
    let (aq, bq) = q.affine().ok_or_else(unsupported)?;
    let (ap, bp) = p.affine().ok_or_else(unsupported)?;
    let (mq, vq) = q.scalar_initial().ok_or_else(unsupported)?;
    let (mp, vp) = p.scalar_initial().ok_or_else(unsupported)?;
    let sq = q.scalar_kernel(0.0).unwrap().1;
    let sp = p.scalar_kernel(0.0).unwrap().1;
    let initial = gaussian_kl_1d(mq, vq, mp, vp);
    let (mut m, mut v) = (mq, vq);
    let mut conditional = Vec::with_capacity(n.saturating_sub(1));
    for _ in 1..n {
        // E_Q over x ~ N(m, v) of KL(N(aq x + bq, sq) | N(ap x + bp, sp))
        let (c, d) = (aq - ap, bq - bp);
        let shift2 = (c * m + d).powi(2) + c * c * v;
        conditional.push((0.5 * (sq / sp - 1.0 + shift2 / sp + (sp / sq).ln())).max(0.0));
        m = aq * m + bq;
        v = aq * aq * v + sq;
    }
    Ok(EntropyBreakdown::finish(initial.max(0.0), conditional))
}
