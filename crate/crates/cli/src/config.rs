//! Experiment configs: one TOML file per run. A top-level `[[batch]]` array
//! expands the file into several jobs, each entry overriding keys of the
//! base table (nested tables are merged).

use std::path::Path;

use dhop_core::bounds::BoundKind;
use dhop_core::kernels::{Kernel2DSpec, KernelSpec, PowerExpTerm};
use dhop_core::operator::{OperatorSpec1D, OperatorSpec2D, SampledFunction, SampledFunction2D};
use dhop_core::quadrature::{Domain1D, SingularityHint};
use dhop_core::weights::{Weight2D, WeightModel};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SEED: u64 = 20240611;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(String),
    #[error("{job}: field `{field}`: {message}")]
    Invalid {
        job: String,
        field: &'static str,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Constant,
    Apply,
    Norm,
    Certify,
    Certify2d,
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    UpperBoundSweep,
    TwoIndexSweep,
    RegionOracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    Hardy,
    AdjointHardy,
    Hardy2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// `c |t|^a e^{-b|t|}` on the closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermCfg {
    #[serde(default = "one")]
    pub c: f64,
    #[serde(default)]
    pub a: f64,
    #[serde(default)]
    pub b: f64,
    pub lo: f64,
    pub hi: f64,
}

fn one() -> f64 {
    1.0
}

impl From<TermCfg> for PowerExpTerm {
    fn from(t: TermCfg) -> Self {
        PowerExpTerm {
            c: t.c,
            a: t.a,
            b: t.b,
            lo: t.lo,
            hi: t.hi,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum KernelCfg {
    Preset(String),
    Terms {
        terms: Vec<TermCfg>,
        name: Option<String>,
    },
    /// `φ(s) = ψ(1/s)/s` with `ψ` given by terms.
    Psi {
        psi: Vec<TermCfg>,
        name: Option<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorCfg {
    pub alpha: f64,
    pub kernel: KernelCfg,
    /// Second factor of a tensor kernel; makes the operator two-dimensional.
    pub kernel_y: Option<KernelCfg>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightCfg {
    Unit,
    Power {
        beta: f64,
    },
    Dunkl {
        alpha: f64,
    },
    /// `(1 + |x|^a)^b`.
    Bracket {
        a: f64,
        b: f64,
    },
    /// Two-column CSV `x, v(x)`.
    Table {
        path: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionCfg {
    pub terms: Vec<TermCfg>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputCfg {
    pub path: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandConfig {
    pub command: Command,
    pub label: Option<String>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub kind: Option<String>,
    pub operator: Option<OperatorCfg>,
    /// `v`: the weight of a one-weight constant, or the target weight.
    pub weight: Option<WeightCfg>,
    pub weight_y: Option<WeightCfg>,
    /// `w`: the source weight of two-weight and two-index constants.
    pub weight_w: Option<WeightCfg>,
    pub weight_w_y: Option<WeightCfg>,
    pub function: Option<FunctionCfg>,
    pub function_y: Option<FunctionCfg>,
    pub points: Option<Vec<f64>>,
    pub points_2d: Option<Vec<[f64; 2]>>,
    pub oracle: Option<Oracle>,
    pub u_grid: Option<Vec<f64>>,
    pub relaxed: Option<bool>,
    pub check: Option<Check>,
    pub n: Option<usize>,
    pub n_2d: Option<usize>,
    pub output: Option<OutputCfg>,
}

/// A parsed config: the jobs it expands to and the raw table for echoing.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub raw: toml::Table,
    pub jobs: Vec<Job>,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub label: String,
    pub cfg: CommandConfig,
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

pub fn parse(text: &str) -> Result<Experiment, ConfigError> {
    let raw: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let mut base = raw.clone();
    let batch = match base.remove("batch") {
        None => None,
        Some(toml::Value::Array(items)) => Some(items),
        Some(_) => {
            return Err(ConfigError::Parse(
                "`batch` must be an array of tables".into(),
            ))
        }
    };
    let tables: Vec<toml::Table> = match batch {
        None => vec![base],
        Some(items) => items
            .into_iter()
            .enumerate()
            .map(|(i, item)| match item {
                toml::Value::Table(t) => {
                    let mut merged = base.clone();
                    merge(&mut merged, t);
                    Ok(merged)
                }
                _ => Err(ConfigError::Parse(format!(
                    "batch entry {i} is not a table"
                ))),
            })
            .collect::<Result<_, _>>()?,
    };
    let n = tables.len();
    let mut jobs = Vec::with_capacity(n);
    for (i, t) in tables.into_iter().enumerate() {
        let where_ = if n > 1 {
            format!("batch entry {i}: ")
        } else {
            String::new()
        };
        // Re-serialising keeps the diagnostics pointing at field names.
        let text = toml::to_string(&t).map_err(|e| ConfigError::Parse(format!("{where_}{e}")))?;
        let cfg: CommandConfig = toml::from_str(&text)
            .map_err(|e| ConfigError::Parse(format!("{where_}{}", e.message())))?;
        let label = cfg.label.clone().unwrap_or_else(|| {
            if n > 1 {
                format!("job {i}")
            } else {
                "job".into()
            }
        });
        let job = Job { label, cfg };
        job.validate()?;
        jobs.push(job);
    }
    Ok(Experiment { raw, jobs })
}

pub fn load(path: &Path) -> Result<Experiment, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse(&text).map_err(|e| match e {
        ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

impl Job {
    pub(crate) fn invalid(&self, field: &'static str, message: impl Into<String>) -> ConfigError {
        ConfigError::Invalid {
            job: self.label.clone(),
            field,
            message: message.into(),
        }
    }

    pub fn tol(&self) -> f64 {
        self.cfg.tol.unwrap_or(DEFAULT_TOL)
    }

    pub fn seed(&self) -> u64 {
        self.cfg.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn p(&self) -> Result<f64, ConfigError> {
        let p = self.cfg.p.ok_or_else(|| self.invalid("p", "required"))?;
        if !(p > 1.0 && p.is_finite()) {
            return Err(self.invalid("p", format!("must lie in (1, ∞), got {p}")));
        }
        Ok(p)
    }

    pub fn q(&self) -> Result<f64, ConfigError> {
        let q = self.cfg.q.ok_or_else(|| self.invalid("q", "required"))?;
        if !(q > 1.0 && q.is_finite()) {
            return Err(self.invalid("q", format!("must lie in (1, ∞), got {q}")));
        }
        Ok(q)
    }

    pub fn kind(&self) -> Result<BoundKind, ConfigError> {
        let k = self
            .cfg
            .kind
            .as_deref()
            .ok_or_else(|| self.invalid("kind", "required"))?;
        k.parse().map_err(|_| {
            let names: Vec<&str> = BoundKind::ALL.iter().map(|k| k.as_str()).collect();
            self.invalid(
                "kind",
                format!(
                    "unknown bound kind `{k}` (expected one of {})",
                    names.join(", ")
                ),
            )
        })
    }

    pub fn is_2d(&self) -> bool {
        self.cfg
            .operator
            .as_ref()
            .is_some_and(|o| o.kernel_y.is_some())
    }

    fn operator_cfg(&self) -> Result<&OperatorCfg, ConfigError> {
        self.cfg
            .operator
            .as_ref()
            .ok_or_else(|| self.invalid("operator", "required"))
    }

    pub fn operator(&self) -> Result<OperatorSpec1D, ConfigError> {
        let o = self.operator_cfg()?;
        Ok(OperatorSpec1D::new(
            o.alpha,
            self.kernel(&o.kernel, "operator.kernel")?,
        ))
    }

    pub fn operator_2d(&self) -> Result<OperatorSpec2D, ConfigError> {
        let o = self.operator_cfg()?;
        let ky = o.kernel_y.as_ref().ok_or_else(|| {
            self.invalid("operator.kernel_y", "required for two-dimensional runs")
        })?;
        let k = Kernel2DSpec::tensor(
            self.kernel(&o.kernel, "operator.kernel")?,
            self.kernel(ky, "operator.kernel_y")?,
        );
        Ok(OperatorSpec2D::new(o.alpha, k))
    }

    fn kernel(&self, k: &KernelCfg, field: &'static str) -> Result<KernelSpec, ConfigError> {
        match k {
            KernelCfg::Preset(name) => {
                KernelSpec::preset(name).map_err(|e| self.invalid(field, e.to_string()))
            }
            KernelCfg::Terms { terms, name } => {
                KernelSpec::piecewise(name.clone(), terms.iter().map(|&t| t.into()).collect())
                    .map_err(|e| self.invalid(field, e.to_string()))
            }
            KernelCfg::Psi { psi, name } => {
                let k = KernelSpec::piecewise(None, psi.iter().map(|&t| t.into()).collect())
                    .map_err(|e| self.invalid(field, e.to_string()))?;
                let support = k.support;
                let hints = k.hints.clone();
                KernelSpec::from_psi(name.clone(), move |t| k.eval(t), support, &hints)
                    .map_err(|e| self.invalid(field, e.to_string()))
            }
        }
    }

    fn weight_from(
        &self,
        w: Option<&WeightCfg>,
        field: &'static str,
    ) -> Result<WeightModel, ConfigError> {
        Ok(match w {
            None | Some(WeightCfg::Unit) => WeightModel::unit(),
            Some(WeightCfg::Power { beta }) => WeightModel::power(*beta),
            Some(WeightCfg::Dunkl { alpha }) => WeightModel::dunkl(*alpha),
            Some(&WeightCfg::Bracket { a, b }) => {
                if !(a > 0.0 && a.is_finite() && b.is_finite()) {
                    return Err(self.invalid(
                        field,
                        format!("bracket weight needs a > 0 and finite b, got a = {a}, b = {b}"),
                    ));
                }
                WeightModel::function(
                    format!("(1+|x|^{a})^{b}"),
                    move |x: f64| (1.0 + x.abs().powf(a)).powf(b),
                    vec![
                        SingularityHint::pos_tail(-a * b),
                        SingularityHint::neg_tail(-a * b),
                    ],
                )
            }
            Some(WeightCfg::Table { path }) => WeightModel::from_csv(Path::new(path))
                .map_err(|e| self.invalid(field, e.to_string()))?,
        })
    }

    /// `v`.
    pub fn weight(&self) -> Result<WeightModel, ConfigError> {
        self.weight_from(self.cfg.weight.as_ref(), "weight")
    }

    /// `w`, defaulting to `v`.
    pub fn weight_w(&self) -> Result<WeightModel, ConfigError> {
        match &self.cfg.weight_w {
            Some(w) => self.weight_from(Some(w), "weight_w"),
            None => self.weight(),
        }
    }

    pub fn weight_2d(&self) -> Result<Weight2D, ConfigError> {
        Ok(Weight2D::Tensor(
            self.weight()?,
            self.weight_from(self.cfg.weight_y.as_ref(), "weight_y")?,
        ))
    }

    pub fn weight_w_2d(&self) -> Result<Weight2D, ConfigError> {
        if self.cfg.weight_w.is_none() && self.cfg.weight_w_y.is_none() {
            return self.weight_2d();
        }
        Ok(Weight2D::Tensor(
            self.weight_from(self.cfg.weight_w.as_ref(), "weight_w")?,
            self.weight_from(self.cfg.weight_w_y.as_ref(), "weight_w_y")?,
        ))
    }

    fn function_from(
        &self,
        f: Option<&FunctionCfg>,
        field: &'static str,
    ) -> Result<SampledFunction, ConfigError> {
        let f = f.ok_or_else(|| self.invalid(field, "required"))?;
        build_function(&f.terms).map_err(|m| self.invalid(field, m))
    }

    pub fn function(&self) -> Result<SampledFunction, ConfigError> {
        self.function_from(self.cfg.function.as_ref(), "function")
    }

    pub fn function_2d(&self) -> Result<SampledFunction2D, ConfigError> {
        let fx = self.function_from(self.cfg.function.as_ref(), "function")?;
        let fy = self.function_from(self.cfg.function_y.as_ref(), "function_y")?;
        Ok(SampledFunction2D::tensor(&fx, &fy))
    }

    pub fn u_grid(&self) -> Result<Option<Vec<f64>>, ConfigError> {
        match &self.cfg.u_grid {
            None => Ok(None),
            Some(g) if g.is_empty() => Err(self.invalid("u_grid", "must not be empty")),
            Some(g) if g.iter().any(|&u| !(u > 0.0 && u < 1.0)) => {
                Err(self.invalid("u_grid", "values must lie in (0, 1)"))
            }
            Some(g) if g.windows(2).any(|w| w[1] >= w[0]) => {
                Err(self.invalid("u_grid", "must be strictly decreasing"))
            }
            Some(g) => Ok(Some(g.clone())),
        }
    }

    /// Checks everything that can be checked without numerics.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let tol = self.tol();
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(self.invalid("tol", format!("must be positive, got {tol}")));
        }
        match self.cfg.command {
            Command::Constant => {
                let kind = self.kind()?;
                self.p()?;
                if kind == BoundKind::HardyPower {
                    if !matches!(
                        self.cfg.weight,
                        Some(WeightCfg::Power { .. }) | Some(WeightCfg::Unit) | None
                    ) {
                        return Err(self.invalid("weight", "hardy_power needs a power weight"));
                    }
                    return Ok(());
                }
                let two_d = matches!(
                    kind,
                    BoundKind::A2Sup | BoundKind::A2Inf | BoundKind::B2Sup | BoundKind::D2Sup
                );
                if two_d {
                    self.operator_2d()?;
                    self.weight_2d()?;
                    self.weight_w_2d()?;
                } else {
                    self.operator()?;
                    self.weight()?;
                    self.weight_w()?;
                }
                if matches!(kind, BoundKind::DSup | BoundKind::D2Sup) {
                    self.q()?;
                }
            }
            Command::Apply => {
                if self.is_2d() {
                    self.operator_2d()?;
                    self.function_2d()?;
                    if self.cfg.points_2d.as_ref().is_none_or(|p| p.is_empty()) {
                        return Err(self.invalid("points_2d", "required for two-dimensional apply"));
                    }
                } else {
                    self.operator()?;
                    self.function()?;
                    if self.cfg.points.as_ref().is_none_or(|p| p.is_empty()) {
                        return Err(self.invalid("points", "required"));
                    }
                }
            }
            Command::Norm => {
                self.operator()?;
                self.function()?;
                self.weight()?;
                self.weight_w()?;
                self.p()?;
                if self.cfg.q.is_some() {
                    self.q()?;
                }
            }
            Command::Certify => {
                self.operator()?;
                self.weight()?;
                self.p()?;
                self.u_grid()?;
            }
            Command::Certify2d => {
                self.operator_2d()?;
                self.weight_2d()?;
                self.p()?;
                self.u_grid()?;
            }
            Command::Report => match self.cfg.check {
                None => return Err(self.invalid("check", "required for report")),
                Some(Check::UpperBoundSweep) | Some(Check::RegionOracle) => {}
                Some(Check::TwoIndexSweep) => {
                    self.operator()?;
                    self.weight()?;
                    self.weight_w()?;
                    self.p()?;
                    self.q()?;
                }
            },
        }
        Ok(())
    }
}

/// Sum of power-exponential terms, supported on the union of the term
/// intervals.
pub fn build_function(terms: &[TermCfg]) -> Result<SampledFunction, String> {
    if terms.is_empty() {
        return Err("needs at least one term".into());
    }
    let k = KernelSpec::piecewise(None, terms.iter().map(|&t| t.into()).collect())
        .map_err(|e| e.to_string())?;
    let mut pieces: Vec<(f64, f64)> = terms.iter().map(|t| (t.lo, t.hi)).collect();
    pieces.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (lo, hi) in pieces {
        match merged.last_mut() {
            Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    let support = merged
        .into_iter()
        .map(|(lo, hi)| Domain1D::new(lo, hi).map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let hints = k.hints.clone();
    Ok(SampledFunction::new(move |s| k.eval(s), support, hints))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_entries_override_base() {
        let e = parse(
            r#"
command = "constant"
kind = "A_sup"
p = 2.0
operator = { alpha = -0.5, kernel = "hardy" }
[[batch]]
label = "plain"
[[batch]]
p = 3.0
weight = { type = "power", beta = 1.0 }
"#,
        )
        .unwrap();
        assert_eq!(e.jobs.len(), 2);
        assert_eq!(e.jobs[0].label, "plain");
        assert_eq!(e.jobs[1].cfg.p, Some(3.0));
        assert!(matches!(e.jobs[1].cfg.weight, Some(WeightCfg::Power { beta }) if beta == 1.0));
    }

    #[test]
    fn unknown_fields_and_presets_are_rejected() {
        let err =
            parse("command = \"constant\"\nkind = \"A_sup\"\np = 2.0\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
        let err = parse("command = \"constant\"\nkind = \"A_sup\"\np = 2.0\noperator = { alpha = -0.5, kernel = \"nope\" }\n")
            .unwrap_err();
        assert!(err.to_string().contains("operator.kernel"), "{err}");
        let err = parse("command = \"constant\"\nkind = \"A_sup\"\np = 2.0\ntol = -1.0\noperator = { alpha = -0.5, kernel = \"hardy\" }\n")
            .unwrap_err();
        assert!(err.to_string().contains("tol"), "{err}");
        let err = parse("command = \"constant\"\nkind = \"Z\"\np = 2.0\n").unwrap_err();
        assert!(err.to_string().contains("unknown bound kind"), "{err}");
    }

    #[test]
    fn parse_errors_carry_a_line() {
        let err = parse("command = \"constant\"\np = \n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn functions_merge_overlapping_terms() {
        let f = build_function(&[
            TermCfg {
                c: 1.0,
                a: 0.0,
                b: 0.0,
                lo: 0.0,
                hi: 2.0,
            },
            TermCfg {
                c: 1.0,
                a: 0.0,
                b: 0.0,
                lo: 1.0,
                hi: 3.0,
            },
        ])
        .unwrap();
        assert_eq!(f.support.len(), 1);
        assert_eq!(f.eval(1.5), 2.0);
        assert_eq!(f.eval(2.5), 1.0);
    }
}
