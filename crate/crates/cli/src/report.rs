//! Run reports. JSON keeps full `f64` precision; non-finite numbers are
//! written as the strings `"inf"`, `"-inf"` and `"nan"`.

use std::io::Write;

use dhop_core::bounds::BoundReport;
use dhop_core::certify::LowerBoundCurve;
use dhop_core::quadrature::QuadratureResult;
use dhop_core::sweep::{RegionCheck, SweepSummary};
use serde_json::{json, Map, Value};

pub fn num(x: f64) -> Value {
    if x.is_nan() {
        Value::from("nan")
    } else if x == f64::INFINITY {
        Value::from("inf")
    } else if x == f64::NEG_INFINITY {
        Value::from("-inf")
    } else {
        json!(x)
    }
}

fn opt_num(x: Option<f64>) -> Value {
    x.map_or(Value::Null, num)
}

fn csv_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:?}")
    }
}

/// Converts a config table to JSON without losing infinite bounds.
pub fn toml_to_json(v: &toml::Value) -> Value {
    match v {
        toml::Value::String(s) => Value::from(s.as_str()),
        toml::Value::Integer(i) => Value::from(*i),
        toml::Value::Float(f) => num(*f),
        toml::Value::Boolean(b) => Value::from(*b),
        toml::Value::Datetime(d) => Value::from(d.to_string()),
        toml::Value::Array(a) => Value::Array(a.iter().map(toml_to_json).collect()),
        toml::Value::Table(t) => Value::Object(
            t.iter()
                .map(|(k, v)| (k.clone(), toml_to_json(v)))
                .collect(),
        ),
    }
}

#[derive(Debug, Clone)]
pub struct Scalar {
    pub name: String,
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

impl Scalar {
    pub fn from_quad(name: impl Into<String>, r: &QuadratureResult) -> Self {
        Scalar {
            name: name.into(),
            value: r.value,
            error: r.abs_error_estimate,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ApplyPoint {
    pub x: Vec<f64>,
    pub value: f64,
    pub error: f64,
    pub converged: bool,
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Body {
    Bound(BoundReport),
    Curve {
        curve: LowerBoundCurve,
        /// Whether every point is the full bilinear form rather than the
        /// relaxed envelope estimate.
        exact: bool,
        relaxed: Option<LowerBoundCurve>,
    },
    Scalars(Vec<Scalar>),
    Apply(Vec<ApplyPoint>),
    Sweep {
        summary: SweepSummary,
        constant: Option<BoundReport>,
    },
    Region(RegionCheck),
}

#[derive(Debug, Clone)]
pub struct Entry {
    pub label: String,
    pub command: String,
    pub body: Body,
}

#[derive(Debug, Clone)]
pub struct Report {
    pub version: String,
    pub timestamp: String,
    pub config: Value,
    pub config_path: Option<String>,
    pub results: Vec<Entry>,
    pub warnings: Vec<String>,
}

fn bound_json(b: &BoundReport) -> Value {
    json!({
        "kind": b.kind.as_str(),
        "value": num(b.value),
        "error_estimate": num(b.error_estimate),
        "converged": b.converged,
        "n_evals": b.n_evals,
        "inputs": {
            "alpha": opt_num(b.inputs.alpha),
            "p": num(b.inputs.p),
            "q": opt_num(b.inputs.q),
            "weights": b.inputs.weights,
            "kernel": b.inputs.kernel,
        },
        "warnings": b.warnings,
    })
}

fn curve_json(c: &LowerBoundCurve) -> Value {
    json!({
        "points": c.points.iter().map(|p| json!({
            "u": num(p.u),
            "value": num(p.value),
            "error": num(p.error),
            "converged": p.converged,
        })).collect::<Vec<_>>(),
        "limit_estimate": num(c.limit_estimate),
        "extrapolated_limit": opt_num(c.extrapolated_limit),
    })
}

impl Entry {
    pub fn kind(&self) -> &'static str {
        match self.body {
            Body::Bound(_) => "bound",
            Body::Curve { .. } => "curve",
            Body::Scalars(_) => "scalar",
            Body::Apply(_) => "apply",
            Body::Sweep { .. } => "sweep",
            Body::Region(_) => "region",
        }
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("label".into(), Value::from(self.label.as_str()));
        m.insert("command".into(), Value::from(self.command.as_str()));
        m.insert("type".into(), Value::from(self.kind()));
        match &self.body {
            Body::Bound(b) => {
                m.insert("bound".into(), bound_json(b));
            }
            Body::Curve {
                curve,
                exact,
                relaxed,
            } => {
                m.insert("curve".into(), curve_json(curve));
                m.insert("exact".into(), Value::from(*exact));
                if let Some(r) = relaxed {
                    m.insert("relaxed".into(), curve_json(r));
                }
            }
            Body::Scalars(s) => {
                m.insert(
                    "values".into(),
                    s.iter()
                        .map(|s| {
                            json!({
                                "name": s.name,
                                "value": num(s.value),
                                "error": num(s.error),
                                "converged": s.converged,
                            })
                        })
                        .collect(),
                );
            }
            Body::Apply(pts) => {
                m.insert(
                    "points".into(),
                    pts.iter()
                        .map(|p| {
                            json!({
                                "x": p.x.iter().map(|&x| num(x)).collect::<Vec<_>>(),
                                "value": num(p.value),
                                "error": num(p.error),
                                "converged": p.converged,
                                "oracle": opt_num(p.oracle),
                            })
                        })
                        .collect(),
                );
            }
            Body::Sweep { summary, constant } => {
                m.insert(
                    "sweep".into(),
                    json!({
                        "n": summary.records.len(),
                        "violations": summary.violations(),
                        "max_ratio": num(summary.max_ratio()),
                        "records": summary.records.iter().map(|r| json!({
                            "label": r.label,
                            "lhs": num(r.lhs),
                            "rhs": num(r.rhs),
                            "error": num(r.error),
                            "ok": r.ok,
                        })).collect::<Vec<_>>(),
                    }),
                );
                if let Some(b) = constant {
                    m.insert("bound".into(), bound_json(b));
                }
            }
            Body::Region(r) => {
                m.insert(
                    "region".into(),
                    json!({
                        "n_1d": r.n_1d,
                        "n_2d": r.n_2d,
                        "max_dev_1d": num(r.max_dev_1d),
                        "max_dev_2d": num(r.max_dev_2d),
                    }),
                );
            }
        }
        Value::Object(m)
    }

    /// Header and rows of this entry's CSV block.
    pub fn csv_rows(&self) -> (Vec<&'static str>, Vec<Vec<String>>) {
        let l = || self.label.clone();
        match &self.body {
            Body::Bound(b) => (
                vec![
                    "label",
                    "kind",
                    "value",
                    "error_estimate",
                    "converged",
                    "n_evals",
                ],
                vec![vec![
                    l(),
                    b.kind.as_str().into(),
                    csv_num(b.value),
                    csv_num(b.error_estimate),
                    b.converged.to_string(),
                    b.n_evals.to_string(),
                ]],
            ),
            Body::Curve { curve, relaxed, .. } => {
                let mut rows: Vec<Vec<String>> = curve
                    .points
                    .iter()
                    .map(|p| vec![csv_num(p.u), csv_num(p.value), csv_num(p.error)])
                    .collect();
                if let Some(r) = relaxed {
                    rows.push(vec![]);
                    rows.extend(
                        r.points
                            .iter()
                            .map(|p| vec![csv_num(p.u), csv_num(p.value), csv_num(p.error)]),
                    );
                }
                (vec!["u", "L", "err"], rows)
            }
            Body::Scalars(s) => (
                vec!["label", "name", "value", "error", "converged"],
                s.iter()
                    .map(|s| {
                        vec![
                            l(),
                            s.name.clone(),
                            csv_num(s.value),
                            csv_num(s.error),
                            s.converged.to_string(),
                        ]
                    })
                    .collect(),
            ),
            Body::Apply(pts) => (
                vec!["x", "y", "value", "error", "converged", "oracle"],
                pts.iter()
                    .map(|p| {
                        vec![
                            csv_num(p.x[0]),
                            p.x.get(1).map_or(String::new(), |&y| csv_num(y)),
                            csv_num(p.value),
                            csv_num(p.error),
                            p.converged.to_string(),
                            p.oracle.map_or(String::new(), csv_num),
                        ]
                    })
                    .collect(),
            ),
            Body::Sweep { summary, .. } => (
                vec!["label", "lhs", "rhs", "error", "ok"],
                summary
                    .records
                    .iter()
                    .map(|r| {
                        vec![
                            r.label.clone(),
                            csv_num(r.lhs),
                            csv_num(r.rhs),
                            csv_num(r.error),
                            r.ok.to_string(),
                        ]
                    })
                    .collect(),
            ),
            Body::Region(r) => (
                vec!["label", "n_1d", "n_2d", "max_dev_1d", "max_dev_2d"],
                vec![vec![
                    l(),
                    r.n_1d.to_string(),
                    r.n_2d.to_string(),
                    csv_num(r.max_dev_1d),
                    csv_num(r.max_dev_2d),
                ]],
            ),
        }
    }
}

impl Report {
    pub fn to_json(&self) -> Value {
        json!({
            "meta": {
                "version": self.version,
                "timestamp": self.timestamp,
                "config_path": self.config_path,
                "config": self.config,
            },
            "results": self.results.iter().map(Entry::to_json).collect::<Vec<_>>(),
            "warnings": self.warnings,
        })
    }

    pub fn write_json(&self, out: &mut impl Write) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut *out, &self.to_json())?;
        writeln!(out)
    }

    /// One block per result, separated by blank lines. An empty row inside a
    /// block separates the exact curve from its relaxed counterpart.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        for (i, e) in self.results.iter().enumerate() {
            if i > 0 {
                writeln!(out)?;
            }
            let (header, rows) = e.csv_rows();
            let mut w = csv::WriterBuilder::new()
                .flexible(true)
                .from_writer(Vec::new());
            w.write_record(&header)?;
            for r in rows {
                if r.is_empty() {
                    w.flush()?;
                    let buf = w.into_inner().map_err(|e| e.into_error())?;
                    out.write_all(&buf)?;
                    writeln!(out)?;
                    w = csv::WriterBuilder::new()
                        .flexible(true)
                        .from_writer(Vec::new());
                    w.write_record(&header)?;
                } else {
                    w.write_record(&r)?;
                }
            }
            let buf = w.into_inner().map_err(|e| e.into_error())?;
            out.write_all(&buf)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_numbers_become_strings() {
        assert_eq!(num(f64::INFINITY), Value::from("inf"));
        assert_eq!(num(f64::NEG_INFINITY), Value::from("-inf"));
        assert_eq!(num(f64::NAN), Value::from("nan"));
        assert_eq!(num(0.1), json!(0.1));
        let t: toml::Value = toml::from_str::<toml::Table>("hi = inf\nn = [1, -inf]")
            .map(toml::Value::Table)
            .unwrap();
        assert_eq!(toml_to_json(&t), json!({"hi": "inf", "n": [1, "-inf"]}));
    }

    #[test]
    fn full_precision_round_trips() {
        let x = std::f64::consts::PI / 7.0;
        let s = serde_json::to_string(&num(x)).unwrap();
        assert_eq!(s.parse::<f64>().unwrap(), x);
        assert_eq!(csv_num(x).parse::<f64>().unwrap(), x);
    }
}
