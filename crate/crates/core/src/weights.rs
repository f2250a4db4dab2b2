//! Weight functions and their dilation-ratio envelopes
//! `sup_y v(ty)/v(y)` and `inf_y v(ty)/v(y)`.
//!
//! Power, Dunkl and multiplicative weights have closed-form envelopes
//! (`|t|^β` or `h(t)`). Closed-form weights without dilation structure and
//! tabulated weights fall back to a grid search and are flagged inexact.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use thiserror::Error;

use crate::quadrature::SingularityHint;

pub type RealFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Default half-grid size and range for tabulated weights.
pub const DEFAULT_TABLE_POINTS: usize = 512;
pub const DEFAULT_TABLE_RANGE: (f64, f64) = (1e-3, 1e3);

const COCYCLE_SAMPLES: [f64; 8] = [0.25, 0.7, 1.0, 1.9, 3.5, -0.4, -1.3, -6.0];
const COCYCLE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("weight {weight} is not defined at x = {x}")]
    DomainError { weight: String, x: f64 },
    #[error("x = {x} lies outside the tabulated range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("weight {0} is not multiplicative")]
    NotMultiplicative(String),
    #[error("invalid weight table: {0}")]
    InvalidTable(String),
    #[error("no grid point y with both y and t·y tabulated (t = {t})")]
    EmptyScan { t: f64 },
}

/// A positive weight `v` on the real line.
#[derive(Clone)]
pub enum WeightModel {
    /// `|x|^β`.
    Power {
        beta: f64,
    },
    /// `|x|^{2α+1}`.
    Dunkl {
        alpha: f64,
    },
    /// `v(xy) = v(x) h(y)`; `exponent`, when known, is the power behaviour
    /// of `h` at 0 and at infinity (`h(t) ~ |t|^exponent`).
    Multiplicative {
        name: String,
        base: RealFn,
        factor: RealFn,
        exponent: Option<f64>,
    },
    /// Closed-form weight without dilation structure; `hints` describe the
    /// behaviour of `v` itself (e.g. a decaying tail).
    Function {
        name: String,
        eval: RealFn,
        hints: Vec<SingularityHint>,
    },
    Tabulated(Table),
}

impl fmt::Debug for WeightModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WeightModel({})", self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEnvelope {
    pub t: f64,
    pub sup_ratio: f64,
    pub inf_ratio: f64,
    pub exact: bool,
}

impl WeightModel {
    pub fn power(beta: f64) -> Self {
        WeightModel::Power { beta }
    }

    pub fn dunkl(alpha: f64) -> Self {
        WeightModel::Dunkl { alpha }
    }

    pub fn unit() -> Self {
        WeightModel::Power { beta: 0.0 }
    }

    /// Multiplicative weight, checked for `h(st) = h(s)h(t)` and
    /// `v(xy) = v(x)h(y)` on a fixed sample set.
    pub fn multiplicative(
        name: impl Into<String>,
        base: impl Fn(f64) -> f64 + Send + Sync + 'static,
        factor: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, WeightError> {
        let w = WeightModel::Multiplicative {
            name: name.into(),
            base: Arc::new(base),
            factor: Arc::new(factor),
            exponent: None,
        };
        w.check_cocycle(&COCYCLE_SAMPLES)?;
        Ok(w)
    }

    /// Declares `h(t) ~ |t|^exponent`, used for integrability bookkeeping.
    pub fn with_dilation_exponent(mut self, e: f64) -> Self {
        if let WeightModel::Multiplicative { exponent, .. } = &mut self {
            *exponent = Some(e);
        }
        self
    }

    pub fn function(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        hints: Vec<SingularityHint>,
    ) -> Self {
        WeightModel::Function {
            name: name.into(),
            eval: Arc::new(eval),
            hints,
        }
    }

    /// Samples `v` on the default mirrored logarithmic grid.
    pub fn tabulate(name: impl Into<String>, v: impl Fn(f64) -> f64) -> Result<Self, WeightError> {
        let (lo, hi) = DEFAULT_TABLE_RANGE;
        Table::sample(name, v, lo, hi, DEFAULT_TABLE_POINTS, true).map(WeightModel::Tabulated)
    }

    /// Table loaded from a two-column CSV `(x, v(x))`.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, WeightError> {
        Table::from_csv(path).map(WeightModel::Tabulated)
    }

    pub fn id(&self) -> String {
        match self {
            WeightModel::Power { beta } => format!("power({beta})"),
            WeightModel::Dunkl { alpha } => format!("dunkl({alpha})"),
            WeightModel::Multiplicative { name, .. } => format!("multiplicative({name})"),
            WeightModel::Function { name, .. } => format!("function({name})"),
            WeightModel::Tabulated(t) => format!("tabulated({})", t.name),
        }
    }

    /// `β` with `v(x) = |x|^β` for the power-type variants.
    pub fn power_exponent(&self) -> Option<f64> {
        match self {
            WeightModel::Power { beta } => Some(*beta),
            WeightModel::Dunkl { alpha } => Some(2.0 * alpha + 1.0),
            _ => None,
        }
    }

    /// Power behaviour of the dilation factor `h(t)`, when known.
    pub fn dilation_exponent(&self) -> Option<f64> {
        match self {
            WeightModel::Multiplicative { exponent, .. } => *exponent,
            _ => self.power_exponent(),
        }
    }

    pub fn is_multiplicative(&self) -> bool {
        matches!(
            self,
            WeightModel::Power { .. }
                | WeightModel::Dunkl { .. }
                | WeightModel::Multiplicative { .. }
        )
    }

    /// `h(t)` for multiplicative variants.
    pub fn dilation_factor(&self, t: f64) -> Result<f64, WeightError> {
        if t == 0.0 {
            return Err(self.domain_error(t));
        }
        match self {
            WeightModel::Multiplicative { factor, .. } => Ok(factor(t)),
            _ => match self.power_exponent() {
                Some(beta) => Ok(t.abs().powf(beta)),
                None => Err(WeightError::NotMultiplicative(self.id())),
            },
        }
    }

    fn domain_error(&self, x: f64) -> WeightError {
        WeightError::DomainError {
            weight: self.id(),
            x,
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, WeightError> {
        if let Some(beta) = self.power_exponent() {
            if x == 0.0 {
                return match beta {
                    b if b < 0.0 => Err(self.domain_error(x)),
                    b if b == 0.0 => Ok(1.0),
                    _ => Ok(0.0),
                };
            }
            return Ok(x.abs().powf(beta));
        }
        match self {
            WeightModel::Multiplicative { base, .. } => Ok(base(x)),
            WeightModel::Function { eval, .. } => Ok(eval(x)),
            WeightModel::Tabulated(t) => t.eval(x),
            _ => unreachable!(),
        }
    }

    /// Behaviour of `v` near 0 and at `±∞`, as quadrature hints for `v`
    /// itself (`v ~ |x|^β` is an exponent `-β`).
    pub fn hints(&self) -> Vec<SingularityHint> {
        match self {
            WeightModel::Function { hints, .. } => hints.clone(),
            _ => match self.power_exponent().or(self.dilation_exponent()) {
                Some(beta) => vec![
                    SingularityHint::point(0.0, -beta),
                    SingularityHint::pos_tail(-beta),
                    SingularityHint::neg_tail(-beta),
                ],
                None => Vec::new(),
            },
        }
    }

    /// Checks the multiplicative identities on the given sample points.
    pub fn check_cocycle(&self, samples: &[f64]) -> Result<(), WeightError> {
        let not_mult = || WeightError::NotMultiplicative(self.id());
        if !self.is_multiplicative() {
            return Err(not_mult());
        }
        let close = |a: f64, b: f64| (a - b).abs() <= COCYCLE_RTOL * a.abs().max(b.abs());
        for &s in samples {
            for &t in samples {
                let (hs, ht, hst) = (
                    self.dilation_factor(s)?,
                    self.dilation_factor(t)?,
                    self.dilation_factor(s * t)?,
                );
                if !(hs > 0.0 && ht > 0.0 && close(hst, hs * ht)) {
                    return Err(not_mult());
                }
                if !close(self.eval(s * t)?, self.eval(s)? * ht) {
                    return Err(not_mult());
                }
            }
        }
        Ok(())
    }

    /// `sup_y v(ty)/v(y)` and `inf_y v(ty)/v(y)`.
    pub fn ratio_envelope(&self, t: f64) -> Result<RatioEnvelope, WeightError> {
        if t == 0.0 || !t.is_finite() {
            return Err(self.domain_error(t));
        }
        match self {
            WeightModel::Tabulated(table) => table.envelope(t, &table.default_scan()),
            WeightModel::Function { eval, .. } => {
                let (sup, inf) = scan_ratio(|y| eval(t * y), |y| eval(y), &default_scan());
                Ok(RatioEnvelope {
                    t,
                    sup_ratio: sup,
                    inf_ratio: inf,
                    exact: false,
                })
            }
            _ => {
                let h = self.dilation_factor(t)?;
                Ok(RatioEnvelope {
                    t,
                    sup_ratio: h,
                    inf_ratio: h,
                    exact: true,
                })
            }
        }
    }

    /// `|t|`-range on which a tabulated envelope is defined: some `y` has
    /// both `y` and `t·y` in the table.
    pub fn envelope_window(&self) -> Option<(f64, f64)> {
        match self {
            WeightModel::Tabulated(table) => {
                let (lo, hi) = table.abs_range();
                Some((lo / hi, hi / lo))
            }
            _ => None,
        }
    }

    /// `sup_y v(ty)/w(y)` with `v = self`: closed form for power pairs and
    /// for identical weights, grid search otherwise.
    pub fn cross_envelope_sup(&self, w: &WeightModel, t: f64) -> Result<(f64, bool), WeightError> {
        if t == 0.0 || !t.is_finite() {
            return Err(self.domain_error(t));
        }
        if self.same_as(w) {
            let env = self.ratio_envelope(t)?;
            return Ok((env.sup_ratio, env.exact));
        }
        if let (Some(bv), Some(bw)) = (self.power_exponent(), w.power_exponent()) {
            // |t|^{bv} |y|^{bv - bw} is unbounded in y unless the exponents match.
            return Ok(if bv == bw {
                (t.abs().powf(bv), true)
            } else {
                (f64::INFINITY, true)
            });
        }
        let ratio = |y: f64| -> f64 {
            match (self.eval(t * y), w.eval(y)) {
                (Ok(a), Ok(b)) if b > 0.0 => a / b,
                _ => f64::NAN,
            }
        };
        let grid = default_scan();
        let sup = grid
            .iter()
            .map(|&y| ratio(y))
            .filter(|r| !r.is_nan())
            .fold(f64::NEG_INFINITY, f64::max);
        if sup == f64::NEG_INFINITY {
            return Err(WeightError::EmptyScan { t });
        }
        Ok((sup, false))
    }

    /// Structural identity: equal power exponents or the same shared model.
    pub fn same_as(&self, other: &WeightModel) -> bool {
        if let (Some(a), Some(b)) = (self.power_exponent(), other.power_exponent()) {
            return a == b;
        }
        match (self, other) {
            (
                WeightModel::Multiplicative {
                    base: a,
                    factor: fa,
                    ..
                },
                WeightModel::Multiplicative {
                    base: b,
                    factor: fb,
                    ..
                },
            ) => Arc::ptr_eq(a, b) && Arc::ptr_eq(fa, fb),
            (WeightModel::Function { eval: a, .. }, WeightModel::Function { eval: b, .. }) => {
                Arc::ptr_eq(a, b)
            }
            (WeightModel::Tabulated(a), WeightModel::Tabulated(b)) => a.xs == b.xs && a.vs == b.vs,
            _ => false,
        }
    }
}

pub type RealFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// A weight on the plane: a tensor product of line weights, or a
/// multiplicative weight `v(x₁y₁, x₂y₂) = v(x₁, x₂) h(y₁, y₂)`.
#[derive(Clone)]
pub enum Weight2D {
    Tensor(WeightModel, WeightModel),
    Multiplicative {
        name: String,
        base: RealFn2,
        factor: RealFn2,
        exponents: Option<(f64, f64)>,
    },
}

impl fmt::Debug for Weight2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Weight2D({})", self.id())
    }
}

impl Weight2D {
    pub fn unit() -> Self {
        Weight2D::Tensor(WeightModel::unit(), WeightModel::unit())
    }

    pub fn multiplicative(
        name: impl Into<String>,
        base: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        factor: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, WeightError> {
        let w = Weight2D::Multiplicative {
            name: name.into(),
            base: Arc::new(base),
            factor: Arc::new(factor),
            exponents: None,
        };
        if let Weight2D::Multiplicative { base, factor, .. } = &w {
            let close = |a: f64, b: f64| (a - b).abs() <= COCYCLE_RTOL * a.abs().max(b.abs());
            for &x1 in &COCYCLE_SAMPLES[..4] {
                for &x2 in &COCYCLE_SAMPLES[4..] {
                    for &(y1, y2) in &[(0.5, 3.0), (-2.0, 0.3), (7.0, -1.5)] {
                        let ok = close(factor(x1 * y1, x2 * y2), factor(x1, x2) * factor(y1, y2))
                            && close(base(x1 * y1, x2 * y2), base(x1, x2) * factor(y1, y2));
                        if !ok {
                            return Err(WeightError::NotMultiplicative(w.id()));
                        }
                    }
                }
            }
        }
        Ok(w)
    }

    /// Declares `h(t₁, t₂) ~ |t₁|^{e₁} |t₂|^{e₂}`.
    pub fn with_dilation_exponents(mut self, e1: f64, e2: f64) -> Self {
        if let Weight2D::Multiplicative { exponents, .. } = &mut self {
            *exponents = Some((e1, e2));
        }
        self
    }

    pub fn id(&self) -> String {
        match self {
            Weight2D::Tensor(a, b) => format!("{}⊗{}", a.id(), b.id()),
            Weight2D::Multiplicative { name, .. } => format!("multiplicative2d({name})"),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> Result<f64, WeightError> {
        match self {
            Weight2D::Tensor(a, b) => Ok(a.eval(x)? * b.eval(y)?),
            Weight2D::Multiplicative { base, .. } => Ok(base(x, y)),
        }
    }

    pub fn is_multiplicative(&self) -> bool {
        match self {
            Weight2D::Tensor(a, b) => a.is_multiplicative() && b.is_multiplicative(),
            Weight2D::Multiplicative { .. } => true,
        }
    }

    /// Per-axis power behaviour of the dilation envelope, when known.
    pub fn dilation_exponents(&self) -> (Option<f64>, Option<f64>) {
        match self {
            Weight2D::Tensor(a, b) => (a.dilation_exponent(), b.dilation_exponent()),
            Weight2D::Multiplicative { exponents, .. } => {
                (exponents.map(|e| e.0), exponents.map(|e| e.1))
            }
        }
    }

    /// `sup` and `inf` over `y` of `v(t₁y₁, t₂y₂)/v(y₁, y₂)`.
    pub fn ratio_envelope(&self, t1: f64, t2: f64) -> Result<(f64, f64, bool), WeightError> {
        match self {
            Weight2D::Tensor(a, b) => {
                let (ea, eb) = (a.ratio_envelope(t1)?, b.ratio_envelope(t2)?);
                Ok((
                    ea.sup_ratio * eb.sup_ratio,
                    ea.inf_ratio * eb.inf_ratio,
                    ea.exact && eb.exact,
                ))
            }
            Weight2D::Multiplicative { factor, .. } => {
                if t1 == 0.0 || t2 == 0.0 {
                    return Err(WeightError::DomainError {
                        weight: self.id(),
                        x: t1 * t2,
                    });
                }
                let h = factor(t1, t2);
                Ok((h, h, true))
            }
        }
    }

    /// `sup_y v(t₁y₁, t₂y₂)/w(y₁, y₂)` with `v = self`.
    pub fn cross_envelope_sup(
        &self,
        w: &Weight2D,
        t1: f64,
        t2: f64,
    ) -> Result<(f64, bool), WeightError> {
        match (self, w) {
            (Weight2D::Tensor(v1, v2), Weight2D::Tensor(w1, w2)) => {
                let (a, ea) = v1.cross_envelope_sup(w1, t1)?;
                let (b, eb) = v2.cross_envelope_sup(w2, t2)?;
                Ok((a * b, ea && eb))
            }
            (
                Weight2D::Multiplicative {
                    base: a,
                    factor: fa,
                    ..
                },
                Weight2D::Multiplicative {
                    base: b,
                    factor: fb,
                    ..
                },
            ) if Arc::ptr_eq(a, b) && Arc::ptr_eq(fa, fb) => {
                let (s, _, exact) = self.ratio_envelope(t1, t2)?;
                Ok((s, exact))
            }
            _ => Err(WeightError::NotMultiplicative(format!(
                "no cross envelope for {} over {}",
                self.id(),
                w.id()
            ))),
        }
    }
}

/// `max over t of sup_ratio / inf_ratio`, `+∞` when some inf vanishes.
pub fn comparability_constant(w: &WeightModel, t_grid: &[f64]) -> Result<f64, WeightError> {
    let mut c: f64 = 1.0;
    for &t in t_grid {
        let env = w.ratio_envelope(t)?;
        if env.inf_ratio <= 0.0 {
            return Ok(f64::INFINITY);
        }
        c = c.max(env.sup_ratio / env.inf_ratio);
    }
    Ok(c)
}

/// Mirrored log grid used for closed-form weights without structure.
fn default_scan() -> Vec<f64> {
    let (lo, hi) = DEFAULT_TABLE_RANGE;
    let pos = log_grid(lo, hi, DEFAULT_TABLE_POINTS);
    pos.iter()
        .rev()
        .map(|y| -y)
        .chain(pos.iter().copied())
        .collect()
}

fn scan_ratio(num: impl Fn(f64) -> f64, den: impl Fn(f64) -> f64, ys: &[f64]) -> (f64, f64) {
    let mut sup = f64::NEG_INFINITY;
    let mut inf = f64::INFINITY;
    for &y in ys {
        let r = num(y) / den(y);
        if r.is_finite() {
            sup = sup.max(r);
            inf = inf.min(r);
        }
    }
    (sup, inf.max(0.0))
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Piecewise-linear weight table with strictly increasing abscissae. A
/// table whose abscissae are all positive is read as an even function.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    xs: Vec<f64>,
    vs: Vec<f64>,
    even: bool,
}

/// Search grid for tabulated envelopes: strictly increasing positive `|y|`
/// cell boundaries, scanned on both signs when the table is not even.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    pub abs_points: Vec<f64>,
}

impl ScanGrid {
    pub fn log(lo: f64, hi: f64, n: usize) -> Self {
        ScanGrid {
            abs_points: log_grid(lo, hi, n),
        }
    }

    /// Nested refinement: inserts the geometric midpoint of every cell.
    pub fn refined(&self) -> Self {
        let mut pts = Vec::with_capacity(2 * self.abs_points.len());
        for w in self.abs_points.windows(2) {
            pts.push(w[0]);
            pts.push((w[0] * w[1]).sqrt());
        }
        pts.extend(self.abs_points.last());
        ScanGrid { abs_points: pts }
    }
}

impl Table {
    pub fn new(name: impl Into<String>, xs: Vec<f64>, vs: Vec<f64>) -> Result<Self, WeightError> {
        if xs.len() < 2 || xs.len() != vs.len() {
            return Err(WeightError::InvalidTable(format!(
                "need matching columns with at least two rows, got {} and {}",
                xs.len(),
                vs.len()
            )));
        }
        if let Some(w) = xs.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(WeightError::InvalidTable(format!(
                "abscissae must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(v) = vs.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(WeightError::InvalidTable(format!(
                "weight values must be positive and finite, got {v}"
            )));
        }
        let even = xs[0] > 0.0;
        Ok(Table {
            name: name.into(),
            xs,
            vs,
            even,
        })
    }

    /// Tabulates `v` on `n` log-spaced points of `[lo, hi]`, mirrored
    /// across 0 when `mirrored`.
    pub fn sample(
        name: impl Into<String>,
        v: impl Fn(f64) -> f64,
        lo: f64,
        hi: f64,
        n: usize,
        mirrored: bool,
    ) -> Result<Self, WeightError> {
        let pos = log_grid(lo, hi, n);
        let xs: Vec<f64> = if mirrored {
            pos.iter()
                .rev()
                .map(|y| -y)
                .chain(pos.iter().copied())
                .collect()
        } else {
            pos
        };
        let vs = xs.iter().map(|&x| v(x)).collect();
        Table::new(name, xs, vs)
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self, WeightError> {
        let path = path.as_ref();
        let bad = |m: String| WeightError::InvalidTable(format!("{}: {m}", path.display()));
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| bad(e.to_string()))?;
        let (mut xs, mut vs) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            if rec.len() != 2 {
                return Err(bad(format!("row {}: expected 2 columns", line + 1)));
            }
            let parse = |s: &str| s.parse::<f64>();
            match (parse(&rec[0]), parse(&rec[1])) {
                (Ok(x), Ok(v)) => {
                    xs.push(x);
                    vs.push(v);
                }
                // a non-numeric first row is a header
                _ if line == 0 => continue,
                _ => return Err(bad(format!("row {}: not numeric", line + 1))),
            }
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Table::new(name, xs, vs).map_err(|e| bad(e.to_string()))
    }

    fn abs_range(&self) -> (f64, f64) {
        if self.even {
            (self.xs[0], *self.xs.last().unwrap())
        } else {
            let min_abs = self
                .xs
                .iter()
                .map(|x| x.abs())
                .filter(|&a| a > 0.0)
                .fold(f64::INFINITY, f64::min);
            let max_abs = self.xs[0].abs().max(self.xs.last().unwrap().abs());
            (min_abs, max_abs)
        }
    }

    fn default_scan(&self) -> ScanGrid {
        let (lo, hi) = self.abs_range();
        ScanGrid::log(lo, hi, DEFAULT_TABLE_POINTS)
    }

    fn key(&self, x: f64) -> f64 {
        if self.even {
            x.abs()
        } else {
            x
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, WeightError> {
        let k = self.key(x);
        let (lo, hi) = (self.xs[0], *self.xs.last().unwrap());
        if !(k >= lo && k <= hi) {
            return Err(WeightError::OutOfRange { x, lo, hi });
        }
        let i = self.xs.partition_point(|&xi| xi <= k);
        if i == 0 {
            return Ok(self.vs[0]);
        }
        if i == self.xs.len() {
            return Ok(*self.vs.last().unwrap());
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let (v0, v1) = (self.vs[i - 1], self.vs[i]);
        Ok(v0 + (v1 - v0) * (k - x0) / (x1 - x0))
    }

    /// Min and max of the interpolant over `[a, b]` (in table keys).
    fn range_extrema(&self, a: f64, b: f64) -> (f64, f64) {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        let (ka, kb) = (self.key(a), self.key(b));
        let (lo, hi) = if ka <= kb { (ka, kb) } else { (kb, ka) };
        let clamp = |x: f64| {
            let k = self.key(x).clamp(self.xs[0], *self.xs.last().unwrap());
            self.eval(k).unwrap()
        };
        let (va, vb) = (clamp(a), clamp(b));
        let mut mn = va.min(vb);
        let mut mx = va.max(vb);
        let start = self.xs.partition_point(|&x| x <= lo);
        for i in start..self.xs.len() {
            if self.xs[i] >= hi {
                break;
            }
            mn = mn.min(self.vs[i]);
            mx = mx.max(self.vs[i]);
        }
        (mn, mx)
    }

    /// Cell-wise enclosure of the ratio range over `[ya, yb]`:
    /// `(min v(t·cell) / max v(cell), max v(t·cell) / min v(cell))`.
    fn cell_bounds(&self, t: f64, ya: f64, yb: f64) -> Option<(f64, f64)> {
        let (ya, yb) = self.clip_admissible(t, ya.min(yb), ya.max(yb))?;
        let (dmin, dmax) = self.range_extrema(ya, yb);
        let (nmin, nmax) = self.range_extrema(t * ya, t * yb);
        Some((nmin / dmax, nmax / dmin))
    }

    /// Clips `[a, b]` to the `y` with both `y` and `t·y` tabulated.
    fn clip_admissible(&self, t: f64, a: f64, b: f64) -> Option<(f64, f64)> {
        let (x0, xn) = (self.xs[0], *self.xs.last().unwrap());
        let (lo, hi) = if self.even {
            let s = a.signum();
            let (p, q) = (x0.max(x0 / t.abs()), xn.min(xn / t.abs()));
            let (ca, cb) = (a.abs().min(b.abs()).max(p), a.abs().max(b.abs()).min(q));
            if ca > cb {
                return None;
            }
            return Some(if s < 0.0 { (-cb, -ca) } else { (ca, cb) });
        } else {
            let (u, v) = (x0 / t, xn / t);
            (x0.max(u.min(v)), xn.min(u.max(v)))
        };
        let (ca, cb) = (a.max(lo), b.min(hi));
        (ca <= cb).then_some((ca, cb))
    }

    /// Grid envelope: sup and inf of the cell enclosures, each cell bisected
    /// once at its geometric midpoint.
    pub fn envelope(&self, t: f64, grid: &ScanGrid) -> Result<RatioEnvelope, WeightError> {
        let signs: &[f64] = if self.even { &[1.0] } else { &[1.0, -1.0] };
        let mut sup_ratio = f64::NEG_INFINITY;
        let mut inf_ratio = f64::INFINITY;
        for &sgn in signs {
            for w in grid.abs_points.windows(2) {
                let m = (w[0] * w[1]).sqrt();
                for (a, b) in [(w[0], m), (m, w[1])] {
                    if let Some((lo, hi)) = self.cell_bounds(t, sgn * a, sgn * b) {
                        sup_ratio = sup_ratio.max(hi);
                        inf_ratio = inf_ratio.min(lo);
                    }
                }
            }
        }
        if sup_ratio == f64::NEG_INFINITY {
            return Err(WeightError::EmptyScan { t });
        }
        Ok(RatioEnvelope {
            t,
            sup_ratio,
            inf_ratio,
            exact: false,
        })
    }
}
