//! JSON documents for metric spaces, measures and transport results.
//!
//! ```text
//! {"type":"finite","labels":[...],"dist":[[...]]}
//! {"type":"discrete","support":[...],"weights":[...]}
//! {"type":"gaussian","mean":[...],"cov":[[...]]}
//! ```
//! Discrete supports are numbers (the real line), arrays (Euclidean space) or
//! strings (labels of a finite metric space supplied separately).

use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::measure::{DiscreteMeasure, FiniteMetricSpace, GaussianMeasure, Point};
use crate::transport::{TransportPlan, PLAN_ELIDE_ENTRIES};

/// A parsed measure document.
#[derive(Debug, Clone, PartialEq)]
pub enum MeasureDoc {
    Real(DiscreteMeasure<f64>),
    Euclidean(DiscreteMeasure<Vec<f64>>),
    /// Labels and weights, resolved against a [`FiniteMetricSpace`].
    Labeled(Vec<String>, Vec<f64>),
    Gaussian(GaussianMeasure),
}

impl MeasureDoc {
    pub fn kind(&self) -> &'static str {
        match self {
            MeasureDoc::Real(_) => "real",
            MeasureDoc::Euclidean(_) => "euclidean",
            MeasureDoc::Labeled(..) => "labeled",
            MeasureDoc::Gaussian(_) => "gaussian",
        }
    }

    /// Resolves labels to indices of `space`.
    pub fn on_space(&self, space: &FiniteMetricSpace) -> Result<DiscreteMeasure<usize>> {
        match self {
            MeasureDoc::Labeled(labels, weights) => {
                let idx = labels
                    .iter()
                    .map(|l| {
                        space
                            .index_of(l)
                            .ok_or_else(|| Error::input(format!("label '{l}' is not a point of the space")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                DiscreteMeasure::new(idx, weights.clone())
            }
            other => Err(Error::input(format!(
                "a {} measure cannot be placed on a finite space; use label support",
                other.kind()
            ))),
        }
    }
}

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value> {
    v.get(name)
        .ok_or_else(|| Error::input(format!("missing field '{name}'")))
}

fn reals(v: &Value, what: &str) -> Result<Vec<f64>> {
    let arr = v
        .as_array()
        .ok_or_else(|| Error::input(format!("'{what}' must be an array of numbers")))?;
    arr.iter()
        .map(|x| real(x, what))
        .collect()
}

fn real(v: &Value, what: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| Error::input(format!("'{what}' is out of range"))),
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        _ => Err(Error::input(format!("'{what}' must contain numbers"))),
    }
}

fn matrix(v: &Value, what: &str) -> Result<Vec<Vec<f64>>> {
    v.as_array()
        .ok_or_else(|| Error::input(format!("'{what}' must be an array of rows")))?
        .iter()
        .map(|r| reals(r, what))
        .collect()
}

fn doc_type(v: &Value) -> Result<&str> {
    field(v, "type")?
        .as_str()
        .ok_or_else(|| Error::input("'type' must be a string"))
}

pub fn parse_space(v: &Value) -> Result<FiniteMetricSpace> {
    if doc_type(v)? != "finite" {
        return Err(Error::input("expected a document of type 'finite'"));
    }
    let labels = field(v, "labels")?
        .as_array()
        .ok_or_else(|| Error::input("'labels' must be an array"))?
        .iter()
        .map(|l| match l {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(Error::input("labels must be strings")),
        })
        .collect::<Result<Vec<_>>>()?;
    FiniteMetricSpace::new(labels, matrix(field(v, "dist")?, "dist")?)
}

pub fn parse_measure(v: &Value) -> Result<MeasureDoc> {
    match doc_type(v)? {
        "discrete" => {
            let support = field(v, "support")?
                .as_array()
                .ok_or_else(|| Error::input("'support' must be an array"))?;
            let weights = reals(field(v, "weights")?, "weights")?;
            match support.first() {
                None => Err(Error::input("support is empty")),
                Some(Value::Number(_)) => {
                    DiscreteMeasure::new(reals(field(v, "support")?, "support")?, weights).map(MeasureDoc::Real)
                }
                Some(Value::Array(_)) => {
                    DiscreteMeasure::new(matrix(field(v, "support")?, "support")?, weights).map(MeasureDoc::Euclidean)
                }
                Some(Value::String(_)) => {
                    let labels = support
                        .iter()
                        .map(|l| {
                            l.as_str()
                                .map(str::to_string)
                                .ok_or_else(|| Error::input("support mixes labels and other values"))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    if labels.len() != weights.len() {
                        return Err(Error::input("support and weights differ in length"));
                    }
                    Ok(MeasureDoc::Labeled(labels, weights))
                }
                Some(_) => Err(Error::input("support points must be numbers, arrays or labels")),
            }
        }
        "gaussian" => {
            let mean = reals(field(v, "mean")?, "mean")?;
            let cov = matrix(field(v, "cov")?, "cov")?;
            let d = mean.len();
            if cov.len() != d || cov.iter().any(|r| r.len() != d) {
                return Err(Error::input("'cov' must be a square matrix matching 'mean'"));
            }
            GaussianMeasure::new(
                DVector::from_vec(mean),
                DMatrix::from_fn(d, d, |i, j| cov[i][j]),
            )
            .map(MeasureDoc::Gaussian)
        }
        "finite" => Err(Error::input("a 'finite' document is a metric space, not a measure")),
        other => Err(Error::input(format!("unknown document type '{other}'"))),
    }
}

/// JSON for support points: labels use the space when given.
pub trait SupportJson: Point {
    fn to_json(&self, space: Option<&FiniteMetricSpace>) -> Value;
}

impl SupportJson for f64 {
    fn to_json(&self, _: Option<&FiniteMetricSpace>) -> Value {
        json!(self)
    }
}

impl SupportJson for Vec<f64> {
    fn to_json(&self, _: Option<&FiniteMetricSpace>) -> Value {
        json!(self)
    }
}

impl SupportJson for usize {
    fn to_json(&self, space: Option<&FiniteMetricSpace>) -> Value {
        match space {
            Some(s) => json!(s.labels()[*self]),
            None => json!(self.to_string()),
        }
    }
}

pub fn measure_json<P: SupportJson>(mu: &DiscreteMeasure<P>, space: Option<&FiniteMetricSpace>) -> Value {
    json!({
        "type": "discrete",
        "support": mu.support().iter().map(|p| p.to_json(space)).collect::<Vec<_>>(),
        "weights": mu.weights(),
    })
}

pub fn gaussian_json(g: &GaussianMeasure) -> Value {
    let d = g.dim();
    json!({
        "type": "gaussian",
        "mean": g.mean().iter().cloned().collect::<Vec<_>>(),
        "cov": (0..d).map(|i| (0..d).map(|j| g.cov()[(i, j)]).collect::<Vec<_>>()).collect::<Vec<_>>(),
    })
}

pub fn space_json(space: &FiniteMetricSpace) -> Value {
    json!({"type": "finite", "labels": space.labels(), "dist": space.matrix()})
}

/// `{"w","s","plan"}`; the plan is `null` above the elision limit.
pub fn wasserstein_json<P: SupportJson>(
    w: f64,
    s: f64,
    plan: Option<&TransportPlan<P>>,
    space: Option<&FiniteMetricSpace>,
) -> Value {
    let plan = plan.filter(|p| p.entries() <= PLAN_ELIDE_ENTRIES).map(|p| {
        json!({
            "rows": measure_json(&p.rows, space),
            "cols": measure_json(&p.cols, space),
            "weights": p.weights,
            "cost": p.cost,
        })
    });
    json!({"w": w, "s": s, "plan": plan})
}

/// Shortest decimal form that reads back to the same `f64` (at most 17 significant digits).
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:?}");
    match s.strip_suffix(".0") {
        Some(t) => t.to_string(),
        None => s,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_round_trip() {
        let docs = [
            json!({"type":"discrete","support":[0.0, 1.5],"weights":[0.25, 0.75]}),
            json!({"type":"discrete","support":[[0.0, 1.0],[2.0, 3.0]],"weights":[0.5, 0.5]}),
            json!({"type":"gaussian","mean":[1.0],"cov":[[2.0]]}),
        ];
        for d in docs {
            let m = parse_measure(&d).unwrap();
            let back = match &m {
                MeasureDoc::Real(mu) => measure_json(mu, None),
                MeasureDoc::Euclidean(mu) => measure_json(mu, None),
                MeasureDoc::Gaussian(g) => gaussian_json(g),
                MeasureDoc::Labeled(..) => unreachable!(),
            };
            assert_eq!(parse_measure(&back).unwrap(), m);
        }
    }

    #[test]
    fn labeled_measures_need_a_space() {
        let space = parse_space(&json!({"type":"finite","labels":["a","b"],"dist":[[0,1],[1,0]]})).unwrap();
        let m = parse_measure(&json!({"type":"discrete","support":["b","a"],"weights":[0.3,0.7]})).unwrap();
        let mu = m.on_space(&space).unwrap();
        assert_eq!(mu.support(), &[1, 0]);
        let back = parse_measure(&measure_json(&mu, Some(&space))).unwrap();
        assert_eq!(back, m);
        let bad = parse_measure(&json!({"type":"discrete","support":["c"],"weights":[1]})).unwrap();
        assert!(bad.on_space(&space).unwrap_err().is_input());
        assert!(parse_space(&space_json(&space)).unwrap() == space);
    }

    #[test]
    fn malformed_documents_are_input_errors() {
        for d in [
            json!({"support":[1],"weights":[1]}),
            json!({"type":"discrete","support":[1, 2],"weights":[1]}),
            json!({"type":"gaussian","mean":[0, 0],"cov":[[1]]}),
            json!({"type":"circle"}),
        ] {
            assert!(parse_measure(&d).unwrap_err().is_input(), "{d}");
        }
    }

    #[test]
    fn seventeen_digits() {
        for x in [0.1, 1.0 / 3.0, 14.0, -2.5e-300, 1e21, 0.0] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt17(14.0), "14");
        assert_eq!(fmt17(f64::INFINITY), "inf");
    }
}
