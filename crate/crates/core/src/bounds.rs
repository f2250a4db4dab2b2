//! Boundedness constants of the operator on weighted `L^p`: the one-weight
//! constants `A_sup`/`A_inf`, the exact norm for multiplicative weights, the
//! sharp Hardy power-weight constant, the two-weight `B_sup`, the two-index
//! `D_sup`, and their two-dimensional analogues.
//!
//! Every constant is an integral over the kernel variable `t` of
//! `|φ(t)| |t|^{-s} E(t)` with a shift `s` and a weight-dependent factor
//! `E`. Unbounded constants are reported as `+∞` with a reason, never as
//! errors.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::kernels::KernelSpec;
use crate::operator::{OperatorError, OperatorSpec1D, OperatorSpec2D};
use crate::quadrature::{
    inner_options, integrate_line_nested, pow_product, Domain1D, Location, PointEstimate,
    QuadOptions, QuadratureError, QuadratureResult, SingularityHint,
};
use crate::weights::{Weight2D, WeightError, WeightModel};

pub const D_EXPONENT_NOTE: &str = "convention: D_sup integrates |φ(t)| against |t|^-(2α+2-1/q)";
pub const D_MEASURE_NOTE: &str = "convention: the D_sup inner integral runs over y with t fixed";
pub const HARDY_SIGN_NOTE: &str =
    "convention: the power-weight Hardy constant is p/(p-1-β) for |x|^β";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("invalid parameters: {0}")]
    ParamError(String),
    #[error("weight {0} is not multiplicative")]
    NotMultiplicative(String),
    #[error("unsupported input: {0}")]
    Unsupported(String),
    #[error("envelope is infinite at t = {t}")]
    UnboundedEnvelope { t: f64 },
    #[error("inner integral diverges at t = {t}")]
    InnerDivergence { t: f64 },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

impl From<QuadratureError> for BoundError {
    fn from(e: QuadratureError) -> Self {
        BoundError::Operator(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundKind {
    ASup,
    AInf,
    ExactMultiplicative,
    BSup,
    DSup,
    A2Sup,
    A2Inf,
    B2Sup,
    D2Sup,
    HardyPower,
}

impl BoundKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            BoundKind::ASup => "A_sup",
            BoundKind::AInf => "A_inf",
            BoundKind::ExactMultiplicative => "exact_multiplicative",
            BoundKind::BSup => "B_sup",
            BoundKind::DSup => "D_sup",
            BoundKind::A2Sup => "A2_sup",
            BoundKind::A2Inf => "A2_inf",
            BoundKind::B2Sup => "B2_sup",
            BoundKind::D2Sup => "D2_sup",
            BoundKind::HardyPower => "hardy_power",
        }
    }

    pub const ALL: [BoundKind; 10] = [
        BoundKind::ASup,
        BoundKind::AInf,
        BoundKind::ExactMultiplicative,
        BoundKind::BSup,
        BoundKind::DSup,
        BoundKind::A2Sup,
        BoundKind::A2Inf,
        BoundKind::B2Sup,
        BoundKind::D2Sup,
        BoundKind::HardyPower,
    ];
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BoundKind {
    type Err = BoundError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        BoundKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| BoundError::ParamError(format!("unknown bound kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeMode {
    Sup,
    Inf,
}

/// Lebesgue exponents; `q` is only used by the two-index constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentPair {
    pub p: f64,
    pub q: Option<f64>,
}

impl ExponentPair {
    pub fn new(p: f64) -> Result<Self, BoundError> {
        if !(p > 1.0 && p.is_finite()) {
            return Err(BoundError::ParamError(format!(
                "p must lie in (1, ∞), got {p}"
            )));
        }
        Ok(ExponentPair { p, q: None })
    }

    pub fn two_index(p: f64, q: f64) -> Result<Self, BoundError> {
        let e = ExponentPair::new(p)?;
        if !(q > 1.0 && q < p) {
            return Err(BoundError::ParamError(format!(
                "two-index constants need 1 < q < p, got p = {p}, q = {q}"
            )));
        }
        Ok(ExponentPair { q: Some(q), ..e })
    }

    pub fn conjugate(&self) -> f64 {
        self.p / (self.p - 1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub alpha: Option<f64>,
    pub p: f64,
    pub q: Option<f64>,
    pub weights: Vec<String>,
    pub kernel: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub kind: BoundKind,
    /// `+∞` when the constant is unbounded.
    pub value: f64,
    pub error_estimate: f64,
    pub inputs: BoundInputs,
    pub converged: bool,
    pub n_evals: usize,
    pub warnings: Vec<String>,
}

impl BoundReport {
    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
    }
}

enum Outcome {
    Finite(QuadratureResult),
    Unbounded(String),
}

fn report(
    kind: BoundKind,
    inputs: BoundInputs,
    outcome: Outcome,
    mut warnings: Vec<String>,
) -> BoundReport {
    match outcome {
        Outcome::Finite(r) => {
            if !r.converged {
                warnings.push(format!(
                    "{kind}: quadrature did not reach the tolerance (estimate {:.3e} ± {:.1e})",
                    r.value, r.abs_error_estimate
                ));
            }
            BoundReport {
                kind,
                value: r.value,
                error_estimate: r.abs_error_estimate,
                inputs,
                converged: r.converged,
                n_evals: r.n_evals,
                warnings,
            }
        }
        Outcome::Unbounded(why) => {
            warnings.push(format!("{kind} is infinite: {why}"));
            BoundReport {
                kind,
                value: f64::INFINITY,
                error_estimate: 0.0,
                inputs,
                converged: true,
                n_evals: 0,
                warnings,
            }
        }
    }
}

/// Power behaviour `E(t) ~ |t|^e` of the weight factor at 0 and at `±∞`.
/// `gate` turns a non-integrable exponent into `+∞`; otherwise such hints
/// are dropped and the quadrature decides.
#[derive(Debug, Clone, Copy)]
struct EnvPowers {
    at_zero: Option<f64>,
    at_inf: Option<f64>,
    gate: bool,
}

impl EnvPowers {
    fn known(e: Option<f64>) -> Self {
        EnvPowers {
            at_zero: e,
            at_inf: e,
            gate: true,
        }
    }
}

/// Kernel support pieces (split at 0, clipped to `|t| ∈ window`) with hints
/// for `|φ(t)| |t|^{-shift} E(t)`.
fn kernel_pieces(
    k: &KernelSpec,
    shift: f64,
    env: EnvPowers,
    window: Option<(f64, f64)>,
) -> Result<Vec<(Domain1D, Vec<SingularityHint>)>, String> {
    let (neg, pos) = k.support.split_at_zero();
    let mut out = Vec::new();
    for half in [neg, pos].into_iter().flatten() {
        let half = match window {
            Some((a, b)) => {
                let w = if half.hi() <= 0.0 {
                    Domain1D::new(-b, -a)
                } else {
                    Domain1D::new(a, b)
                };
                match w.ok().and_then(|w| half.intersect(&w)) {
                    Some(d) => d,
                    None => continue,
                }
            }
            None => half,
        };
        let mut hints: Vec<SingularityHint> = k
            .hints
            .iter()
            .filter(|h| matches!(h.at_point(), Some(x) if x != 0.0))
            .copied()
            .collect();
        if half.touches(0.0) {
            if let Some(e) = env.at_zero {
                let gamma = k.exponent_at_zero() + shift - e;
                if gamma >= 1.0 {
                    if env.gate {
                        return Err(format!("integrand ~ |t|^(-{gamma}) at t = 0"));
                    }
                } else if gamma.is_finite() {
                    hints.push(SingularityHint::point(0.0, gamma));
                }
            }
        }
        let loc = if half.hi() <= 0.0 {
            Location::NegInf
        } else {
            Location::PosInf
        };
        let unbounded = half.lo() == f64::NEG_INFINITY || half.hi() == f64::INFINITY;
        if unbounded {
            if let (Some(tk), Some(e)) = (k.tail_exponent(loc), env.at_inf) {
                let tau = tk + shift - e;
                if tau <= 1.0 {
                    if env.gate {
                        return Err(format!("integrand ~ |t|^(-{tau}) as t -> {loc}"));
                    }
                } else if !tau.is_nan() {
                    hints.push(SingularityHint {
                        location: loc,
                        exponent: tau,
                    });
                }
            }
        }
        out.push((half, hints));
    }
    Ok(out)
}

/// `∫ |φ(t)| |t|^{-shift} E(t) dt`.
fn line_integral<F>(
    k: &KernelSpec,
    shift: f64,
    env_powers: EnvPowers,
    window: Option<(f64, f64)>,
    env: F,
    tol: f64,
) -> Result<Outcome, BoundError>
where
    F: Fn(f64) -> Result<PointEstimate, BoundError>,
{
    let pieces = match kernel_pieces(k, shift, env_powers, window) {
        Ok(p) => p,
        Err(why) => return Ok(Outcome::Unbounded(why)),
    };
    let mut total = QuadratureResult::zero();
    if pieces.is_empty() {
        return Ok(Outcome::Finite(total));
    }
    let opts = QuadOptions::abs(tol / pieces.len() as f64);
    for (d, hints) in &pieces {
        let r = integrate_line_nested::<BoundError, _>(
            |t| {
                let kv = k.abs_eval(t);
                if kv == 0.0 {
                    return Ok(PointEstimate::exact(0.0));
                }
                let e = env(t)?;
                Ok(PointEstimate {
                    value: pow_product(&[kv, e.value], &[(t, -shift)]),
                    error: pow_product(&[kv, e.error], &[(t, -shift)]),
                    evals: e.evals,
                })
            },
            d,
            hints,
            &opts,
        );
        let r = match r {
            Ok(r) => r,
            Err(BoundError::Operator(OperatorError::NonIntegrable { location, exponent })) => {
                return Ok(Outcome::Unbounded(format!(
                    "integrand ~ |t|^(-{exponent}) near {location}"
                )))
            }
            Err(e) => return Err(e),
        };
        if r.diverging {
            return Ok(Outcome::Unbounded(format!(
                "quadrature on {d} does not settle (estimate {:.3e} after {} evaluations)",
                r.value, r.n_evals
            )));
        }
        total = total.combine(r);
    }
    Ok(Outcome::Finite(total))
}

fn envelope_warnings(w: &WeightModel, exact: bool) -> Vec<String> {
    let mut warnings = Vec::new();
    if !exact {
        warnings.push(format!(
            "heuristic envelope: sup/inf over y of the ratio for {} taken on a grid",
            w.id()
        ));
    }
    if let Some((a, b)) = w.envelope_window() {
        warnings.push(format!(
            "t-integral truncated to |t| in [{a:.3e}, {b:.3e}] where the table defines the ratio"
        ));
    }
    warnings
}

fn inputs_1d(op: &OperatorSpec1D, p: f64, q: Option<f64>, weights: &[&WeightModel]) -> BoundInputs {
    BoundInputs {
        alpha: Some(op.alpha),
        p,
        q,
        weights: weights.iter().map(|w| w.id()).collect(),
        kernel: Some(op.kernel.label()),
    }
}

/// `A_sup` or `A_inf`: `∫ |φ(t)| |t|^{-(2α+2-1/p)} (env(t))^{1/p} dt` with
/// `env` the sup or inf over `y` of `v(ty)/v(y)`.
pub fn bound_a(
    op: &OperatorSpec1D,
    w: &WeightModel,
    p: f64,
    mode: EnvelopeMode,
    tol: f64,
) -> Result<BoundReport, BoundError> {
    let e = ExponentPair::new(p)?;
    check_tol(tol)?;
    let kind = match mode {
        EnvelopeMode::Sup => BoundKind::ASup,
        EnvelopeMode::Inf => BoundKind::AInf,
    };
    let shift = op.dilation_power() - 1.0 / e.p;
    let powers = EnvPowers::known(w.dilation_exponent().map(|b| b / e.p));
    let outcome = line_integral(
        &op.kernel,
        shift,
        powers,
        w.envelope_window(),
        |t| {
            let env = w.ratio_envelope(t)?;
            let r = match mode {
                EnvelopeMode::Sup => env.sup_ratio,
                EnvelopeMode::Inf => env.inf_ratio,
            };
            Ok(PointEstimate::exact(r.powf(1.0 / e.p)))
        },
        tol,
    )?;
    let exact = w.is_multiplicative();
    Ok(report(
        kind,
        inputs_1d(op, p, None, &[w]),
        outcome,
        envelope_warnings(w, exact),
    ))
}

/// The operator norm for a multiplicative weight,
/// `∫ |φ(t)| |t|^{-(2α+2-1/p)} h(t)^{1/p} dt`.
pub fn exact_norm_multiplicative(
    op: &OperatorSpec1D,
    w: &WeightModel,
    p: f64,
    tol: f64,
) -> Result<BoundReport, BoundError> {
    let e = ExponentPair::new(p)?;
    check_tol(tol)?;
    if !w.is_multiplicative() {
        return Err(BoundError::NotMultiplicative(w.id()));
    }
    let shift = op.dilation_power() - 1.0 / e.p;
    let powers = EnvPowers::known(w.dilation_exponent().map(|b| b / e.p));
    let outcome = line_integral(
        &op.kernel,
        shift,
        powers,
        None,
        |t| Ok(PointEstimate::exact(w.dilation_factor(t)?.powf(1.0 / e.p))),
        tol,
    )?;
    Ok(report(
        BoundKind::ExactMultiplicative,
        inputs_1d(op, p, None, &[w]),
        outcome,
        Vec::new(),
    ))
}

/// Sharp constant `p/(p-1-β)` of the Hardy average on `L^p(|x|^β)`.
pub fn hardy_power_constant(p: f64, beta: f64) -> Result<f64, BoundError> {
    ExponentPair::new(p)?;
    if !beta.is_finite() || beta >= p - 1.0 {
        return Err(BoundError::ParamError(format!(
            "Hardy power-weight constant needs β < p - 1 (p = {p}, β = {beta}); it is infinite otherwise"
        )));
    }
    Ok(p / (p - 1.0 - beta))
}

/// [`hardy_power_constant`] packaged as a report.
pub fn hardy_power_report(p: f64, beta: f64) -> Result<BoundReport, BoundError> {
    let value = hardy_power_constant(p, beta)?;
    Ok(BoundReport {
        kind: BoundKind::HardyPower,
        value,
        error_estimate: 0.0,
        inputs: BoundInputs {
            alpha: Some(-0.5),
            p,
            q: None,
            weights: vec![WeightModel::power(beta).id()],
            kernel: Some("hardy".into()),
        },
        converged: true,
        n_evals: 0,
        warnings: vec![HARDY_SIGN_NOTE.into()],
    })
}

/// `B_sup`: `∫ |φ(t)| |t|^{-(2α+2-1/p)} (sup_y v(ty)/w(y))^{1/p} dt`.
pub fn bound_b_two_weight(
    op: &OperatorSpec1D,
    v: &WeightModel,
    w: &WeightModel,
    p: f64,
    tol: f64,
) -> Result<BoundReport, BoundError> {
    let e = ExponentPair::new(p)?;
    check_tol(tol)?;
    let inputs = inputs_1d(op, p, None, &[v, w]);
    if let (Some(bv), Some(bw)) = (v.power_exponent(), w.power_exponent()) {
        if bv != bw {
            let why = format!(
                "sup over y of |ty|^{bv}/|y|^{bw} is infinite for every t (exponents differ)"
            );
            return Ok(report(
                BoundKind::BSup,
                inputs,
                Outcome::Unbounded(why),
                Vec::new(),
            ));
        }
    }
    let same = v.same_as(w);
    let powers = if same || v.power_exponent().is_some() {
        EnvPowers::known(v.dilation_exponent().map(|b| b / e.p))
    } else {
        EnvPowers::known(None)
    };
    let window = v.envelope_window().or(w.envelope_window());
    let result = line_integral(
        &op.kernel,
        shift_for(op, e.p),
        powers,
        window,
        |t| {
            let (s, _) = v.cross_envelope_sup(w, t)?;
            if !s.is_finite() {
                return Err(BoundError::UnboundedEnvelope { t });
            }
            Ok(PointEstimate::exact(s.powf(1.0 / e.p)))
        },
        tol,
    );
    let outcome = match result {
        Err(BoundError::UnboundedEnvelope { t }) => {
            Outcome::Unbounded(format!("sup over y of v(ty)/w(y) is infinite at t = {t}"))
        }
        other => other?,
    };
    let exact = (same && v.is_multiplicative())
        || (v.power_exponent().is_some() && w.power_exponent().is_some());
    let mut warnings = envelope_warnings(v, exact);
    if !exact && !same {
        warnings.retain(|m| !m.starts_with("heuristic"));
        warnings.push(format!(
            "heuristic envelope: sup over y of {}(ty)/{}(y) taken on a grid",
            v.id(),
            w.id()
        ));
    }
    Ok(report(BoundKind::BSup, inputs, outcome, warnings))
}

fn shift_for(op: &OperatorSpec1D, r: f64) -> f64 {
    op.dilation_power() - 1.0 / r
}

fn check_tol(tol: f64) -> Result<(), BoundError> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(BoundError::ParamError(format!(
            "tolerance must be positive, got {tol}"
        )))
    }
}

/// Inner integral of the two-index constant,
/// `I(t) = ∫ v(ty)^{p/(p-q)} w(y)^{-q/(p-q)} dy`.
struct TwoIndexInner<'a> {
    v: &'a WeightModel,
    w: &'a WeightModel,
    a: f64,
    b: f64,
    hints: InnerHints,
    opts: QuadOptions,
}

#[derive(Debug, Clone)]
struct InnerHints {
    at_zero: Option<f64>,
    pos: Option<f64>,
    neg: Option<f64>,
}

fn weight_local(w: &WeightModel, loc: Location) -> Option<f64> {
    let hs = w.hints();
    let it = hs.iter().filter(|h| h.location == loc).map(|h| h.exponent);
    match loc {
        Location::Point(_) => it.reduce(f64::max),
        _ => it.reduce(f64::min),
    }
}

impl<'a> TwoIndexInner<'a> {
    fn new(v: &'a WeightModel, w: &'a WeightModel, p: f64, q: f64, tol: f64) -> Self {
        let (a, b) = (p / (p - q), q / (p - q));
        let combine = |loc| match (weight_local(v, loc), weight_local(w, loc)) {
            (Some(gv), Some(gw)) => Some(a * gv - b * gw),
            _ => None,
        };
        TwoIndexInner {
            v,
            w,
            a,
            b,
            hints: InnerHints {
                at_zero: combine(Location::Point(0.0)),
                pos: combine(Location::PosInf),
                neg: combine(Location::NegInf),
            },
            opts: QuadOptions::new(tol, tol),
        }
    }

    /// `None` when the integral diverges.
    fn eval(&self, t: f64) -> Result<Option<QuadratureResult>, BoundError> {
        let mut hints = vec![
            SingularityHint::breakpoint(1.0),
            SingularityHint::breakpoint(-1.0),
        ];
        if t.abs() != 1.0 {
            hints.push(SingularityHint::breakpoint(1.0 / t.abs()));
            hints.push(SingularityHint::breakpoint(-1.0 / t.abs()));
        }
        if let Some(g) = self.hints.at_zero {
            if g >= 1.0 {
                return Ok(None);
            }
            hints.push(SingularityHint::point(0.0, g));
        } else {
            hints.push(SingularityHint::breakpoint(0.0));
        }
        for (loc, tau) in [
            (Location::PosInf, self.hints.pos),
            (Location::NegInf, self.hints.neg),
        ] {
            if let Some(tau) = tau {
                if tau <= 1.0 {
                    return Ok(None);
                }
                hints.push(SingularityHint {
                    location: loc,
                    exponent: tau,
                });
            }
        }
        let r = integrate_line_nested::<BoundError, _>(
            |y| {
                let vv = self.v.eval(t * y)?;
                if vv == 0.0 {
                    return Ok(PointEstimate::exact(0.0));
                }
                let ww = self.w.eval(y)?;
                Ok(PointEstimate::exact(vv.powf(self.a) * ww.powf(-self.b)))
            },
            &Domain1D::FULL_LINE,
            &hints,
            &self.opts,
        )?;
        Ok((!r.diverging && r.value.is_finite()).then_some(r))
    }

    /// `I(t)^r` as a pointwise estimate.
    fn powered(&self, t: f64, r: f64) -> Result<PointEstimate, BoundError> {
        match self.eval(t)? {
            Some(i) => {
                let value = i.value.max(0.0).powf(r);
                let error = if i.value > 0.0 {
                    r * value / i.value * i.abs_error_estimate
                } else {
                    i.abs_error_estimate.powf(r)
                };
                Ok(PointEstimate {
                    value,
                    error,
                    evals: i.n_evals,
                })
            }
            None => Err(BoundError::InnerDivergence { t }),
        }
    }

    /// Local power of `I(t)` near `t = 0` and `t = ±∞`, estimated from two
    /// samples on each side of the kernel support.
    fn probe_powers(&self, k: &KernelSpec) -> Result<(Option<f64>, Option<f64>), BoundError> {
        let slope = |t1: f64, t2: f64| -> Result<Option<f64>, BoundError> {
            match (self.eval(t1)?, self.eval(t2)?) {
                (Some(a), Some(b)) if a.value > 0.0 && b.value > 0.0 => {
                    Ok(Some((b.value / a.value).ln() / (t2 / t1).abs().ln()))
                }
                _ => Ok(None),
            }
        };
        let d = &k.support;
        let at_zero = if d.touches(0.0) {
            let s = if d.hi() > 0.0 { 1.0 } else { -1.0 };
            slope(s * 1e-4, s * 1e-5)?
        } else {
            None
        };
        let at_inf = if d.hi() == f64::INFINITY {
            slope(1e4, 1e5)?
        } else if d.lo() == f64::NEG_INFINITY {
            slope(-1e4, -1e5)?
        } else {
            None
        };
        Ok((at_zero, at_inf))
    }
}

/// `D_sup`: `∫ |φ(t)| |t|^{-(2α+2-1/q)} I(t)^{(p-q)/(pq)} dt` with the inner
/// integral `I(t) = ∫ v(ty)^{p/(p-q)} w(y)^{-q/(p-q)} dy`.
pub fn bound_d_two_index(
    op: &OperatorSpec1D,
    v: &WeightModel,
    w: &WeightModel,
    p: f64,
    q: f64,
    tol: f64,
) -> Result<BoundReport, BoundError> {
    let e = ExponentPair::two_index(p, q)?;
    check_tol(tol)?;
    let r = (p - q) / (p * q);
    let inputs = inputs_1d(op, p, Some(q), &[v, w]);
    let notes = vec![D_EXPONENT_NOTE.to_string(), D_MEASURE_NOTE.to_string()];
    let inner = TwoIndexInner::new(v, w, e.p, q, tol * 1e-3);
    let probe = match inner.probe_powers(&op.kernel) {
        Ok(pw) => pw,
        Err(BoundError::Weight(_)) => (None, None),
        Err(err) => return Err(err),
    };
    let powers = EnvPowers {
        at_zero: probe.0.map(|s| s * r),
        at_inf: probe.1.map(|s| s * r),
        gate: false,
    };
    let result = line_integral(
        &op.kernel,
        shift_for(op, q),
        powers,
        None,
        |t| inner.powered(t, r),
        tol,
    );
    let outcome = match result {
        Err(BoundError::InnerDivergence { t }) => {
            Outcome::Unbounded(format!("inner integral over y diverges at t = {t}"))
        }
        other => other?,
    };
    Ok(report(BoundKind::DSup, inputs, outcome, notes))
}

/// Per-axis kernel view used for hints on the plane.
fn axis_kernel(op: &OperatorSpec2D, axis: usize) -> KernelSpec {
    let k = &op.kernel;
    match (&k.tensor, axis) {
        (Some((k1, _)), 0) => k1.clone(),
        (Some((_, k2)), _) => k2.clone(),
        (None, 0) => KernelSpec::new(None, |_| 1.0, k.support.dx, k.hints_x.clone()),
        (None, _) => KernelSpec::new(None, |_| 1.0, k.support.dy, k.hints_y.clone()),
    }
}

/// `∬ |φ(t₁,t₂)| |t₁t₂|^{-shift} R(t₁) C(t₁,t₂) dt`, where the row factor `R`
/// is computed once per outer node.
fn plane_integral<R, C>(
    op: &OperatorSpec2D,
    shift: f64,
    powers: [EnvPowers; 2],
    row: R,
    cell: C,
    tol: f64,
) -> Result<Outcome, BoundError>
where
    R: Fn(f64) -> Result<PointEstimate, BoundError>,
    C: Fn(f64, f64) -> Result<PointEstimate, BoundError>,
{
    let kx = axis_kernel(op, 0);
    let ky = axis_kernel(op, 1);
    let px = match kernel_pieces(&kx, shift, powers[0], None) {
        Ok(p) => p,
        Err(why) => return Ok(Outcome::Unbounded(format!("axis 1: {why}"))),
    };
    let py = match kernel_pieces(&ky, shift, powers[1], None) {
        Ok(p) => p,
        Err(why) => return Ok(Outcome::Unbounded(format!("axis 2: {why}"))),
    };
    let mut total = QuadratureResult::zero();
    let n = px.len() * py.len();
    if n == 0 {
        return Ok(Outcome::Finite(total));
    }
    let opts = QuadOptions::abs(tol / n as f64);
    let k = &op.kernel;
    for (dx, hx) in &px {
        let inner_opts = inner_options(&opts, dx);
        for (dy, hy) in &py {
            let res = integrate_line_nested::<BoundError, _>(
                |t1| {
                    let rv = row(t1)?;
                    let inner = integrate_line_nested::<BoundError, _>(
                        |t2| {
                            let kv = k.abs_eval(t1, t2);
                            if kv == 0.0 {
                                return Ok(PointEstimate::exact(0.0));
                            }
                            let c = cell(t1, t2)?;
                            let pw = [(t1, -shift), (t2, -shift)];
                            Ok(PointEstimate {
                                value: pow_product(&[kv, rv.value, c.value], &pw),
                                error: pow_product(
                                    &[kv, rv.value * c.error + rv.error * c.value.abs()],
                                    &pw,
                                ),
                                evals: c.evals,
                            })
                        },
                        dy,
                        hy,
                        &inner_opts,
                    )?;
                    Ok(PointEstimate {
                        evals: inner.n_evals + rv.evals,
                        ..PointEstimate::from(inner)
                    })
                },
                dx,
                hx,
                &opts,
            );
            let res = match res {
                Ok(r) => r,
                Err(BoundError::Operator(OperatorError::NonIntegrable { location, exponent })) => {
                    return Ok(Outcome::Unbounded(format!(
                        "integrand ~ |t|^(-{exponent}) near {location}"
                    )))
                }
                Err(e) => return Err(e),
            };
            if res.diverging {
                return Ok(Outcome::Unbounded(format!(
                    "quadrature on {dx} × {dy} does not settle"
                )));
            }
            total = total.combine(res);
        }
    }
    Ok(Outcome::Finite(total))
}

/// Weights entering a two-dimensional constant.
#[derive(Debug, Clone, Copy)]
pub enum Weights2D<'a> {
    One(&'a Weight2D),
    Two(&'a Weight2D, &'a Weight2D),
}

/// Two-dimensional constants `A2_sup`, `A2_inf`, `B2_sup`, `D2_sup`.
/// `D2_sup` needs tensor weights, for which the inner integral factors.
pub fn bound_2d(
    op: &OperatorSpec2D,
    weights: Weights2D<'_>,
    p: f64,
    q: Option<f64>,
    kind: BoundKind,
    tol: f64,
) -> Result<BoundReport, BoundError> {
    check_tol(tol)?;
    let e = match (kind, q) {
        (BoundKind::D2Sup, Some(q)) => ExponentPair::two_index(p, q)?,
        (BoundKind::D2Sup, None) => {
            return Err(BoundError::ParamError("D2_sup needs q".into()));
        }
        _ => ExponentPair::new(p)?,
    };
    let (v, w) = match (kind, weights) {
        (BoundKind::A2Sup | BoundKind::A2Inf, Weights2D::One(v)) => (v, v),
        (BoundKind::B2Sup | BoundKind::D2Sup, Weights2D::Two(v, w)) => (v, w),
        (k @ (BoundKind::A2Sup | BoundKind::A2Inf), _) => {
            return Err(BoundError::ParamError(format!("{k} takes a single weight")))
        }
        (k @ (BoundKind::B2Sup | BoundKind::D2Sup), _) => {
            return Err(BoundError::ParamError(format!("{k} takes two weights")))
        }
        (k, _) => {
            return Err(BoundError::ParamError(format!(
                "{k} is not a two-dimensional constant"
            )))
        }
    };
    let inputs = BoundInputs {
        alpha: Some(op.alpha),
        p,
        q: e.q,
        weights: match weights {
            Weights2D::One(v) => vec![v.id()],
            Weights2D::Two(v, w) => vec![v.id(), w.id()],
        },
        kernel: Some(op.kernel.label()),
    };
    let one = |_t1: f64| Ok(PointEstimate::exact(1.0));
    let env_powers = |wt: &Weight2D, scale: f64| {
        let (a, b) = wt.dilation_exponents();
        [
            EnvPowers::known(a.map(|x| x * scale)),
            EnvPowers::known(b.map(|x| x * scale)),
        ]
    };
    let mut warnings = Vec::new();
    let outcome = match kind {
        BoundKind::A2Sup | BoundKind::A2Inf => {
            let sup = kind == BoundKind::A2Sup;
            if !v.is_multiplicative() {
                warnings.push(format!("heuristic envelope for {}", v.id()));
            }
            plane_integral(
                op,
                op.dilation_power() - 1.0 / e.p,
                env_powers(v, 1.0 / e.p),
                one,
                |t1, t2| {
                    let (s, i, _) = v.ratio_envelope(t1, t2)?;
                    Ok(PointEstimate::exact(
                        if sup { s } else { i }.powf(1.0 / e.p),
                    ))
                },
                tol,
            )?
        }
        BoundKind::B2Sup => {
            let powers = match (v, w) {
                (Weight2D::Tensor(v1, v2), Weight2D::Tensor(w1, w2)) => {
                    let axis = |a: &WeightModel, b: &WeightModel| match (
                        a.power_exponent(),
                        b.power_exponent(),
                    ) {
                        (Some(x), Some(y)) if x != y => Err(()),
                        _ if a.same_as(b) || a.power_exponent().is_some() => {
                            Ok(a.dilation_exponent().map(|x| x / e.p))
                        }
                        _ => Ok(None),
                    };
                    match (axis(v1, w1), axis(v2, w2)) {
                        (Ok(a), Ok(b)) => Some([EnvPowers::known(a), EnvPowers::known(b)]),
                        _ => None,
                    }
                }
                _ => Some(env_powers(v, 1.0 / e.p)),
            };
            match powers {
                None => Outcome::Unbounded(
                    "cross envelope of power weights with different exponents is infinite".into(),
                ),
                Some(powers) => {
                    let r = plane_integral(
                        op,
                        op.dilation_power() - 1.0 / e.p,
                        powers,
                        one,
                        |t1, t2| {
                            let (s, _) = v.cross_envelope_sup(w, t1, t2)?;
                            if !s.is_finite() {
                                return Err(BoundError::UnboundedEnvelope { t: t1 * t2 });
                            }
                            Ok(PointEstimate::exact(s.powf(1.0 / e.p)))
                        },
                        tol,
                    );
                    match r {
                        Err(BoundError::UnboundedEnvelope { t }) => {
                            Outcome::Unbounded(format!("cross envelope infinite at t1·t2 = {t}"))
                        }
                        other => other?,
                    }
                }
            }
        }
        BoundKind::D2Sup => {
            let q = e.q.expect("two-index pair");
            let (Weight2D::Tensor(v1, v2), Weight2D::Tensor(w1, w2)) = (v, w) else {
                return Err(BoundError::Unsupported(
                    "D2_sup is implemented for tensor-product weights".into(),
                ));
            };
            warnings.push(D_EXPONENT_NOTE.to_string());
            warnings.push(D_MEASURE_NOTE.to_string());
            let r = (e.p - q) / (e.p * q);
            let i1 = TwoIndexInner::new(v1, w1, e.p, q, tol * 1e-3);
            let i2 = TwoIndexInner::new(v2, w2, e.p, q, tol * 1e-3);
            let (kx, ky) = (axis_kernel(op, 0), axis_kernel(op, 1));
            let probe = |inner: &TwoIndexInner<'_>, k: &KernelSpec| match inner.probe_powers(k) {
                Ok((a, b)) => Ok(EnvPowers {
                    at_zero: a.map(|s| s * r),
                    at_inf: b.map(|s| s * r),
                    gate: false,
                }),
                Err(BoundError::Weight(_)) => Ok(EnvPowers {
                    at_zero: None,
                    at_inf: None,
                    gate: false,
                }),
                Err(err) => Err(err),
            };
            let powers = [probe(&i1, &kx)?, probe(&i2, &ky)?];
            let res = plane_integral(
                op,
                op.dilation_power() - 1.0 / q,
                powers,
                |t1| i1.powered(t1, r),
                |_, t2| i2.powered(t2, r),
                tol,
            );
            match res {
                Err(BoundError::InnerDivergence { t }) => {
                    Outcome::Unbounded(format!("inner integral diverges at t = {t}"))
                }
                other => other?,
            }
        }
        _ => unreachable!(),
    };
    Ok(report(kind, inputs, outcome, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Kernel2DSpec, PowerExpTerm};

    fn hardy() -> OperatorSpec1D {
        OperatorSpec1D::new(-0.5, KernelSpec::preset("hardy").unwrap())
    }

    #[test]
    fn a_sup_examples() {
        let r = bound_a(
            &hardy(),
            &WeightModel::unit(),
            2.0,
            EnvelopeMode::Sup,
            1e-10,
        )
        .unwrap();
        assert!((r.value - 2.0).abs() < 1e-9 && r.converged, "{r:?}");
        let zero = OperatorSpec1D::new(-0.5, KernelSpec::zero());
        let r = bound_a(
            &zero,
            &WeightModel::power(1.0),
            2.0,
            EnvelopeMode::Sup,
            1e-10,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
        assert!(bound_a(&hardy(), &WeightModel::unit(), 1.0, EnvelopeMode::Sup, 1e-8).is_err());
    }

    #[test]
    fn hardy_constant_matches_quadrature() {
        for (p, beta) in [(2.0, 0.0), (3.0, 1.0), (2.0, 0.5)] {
            let exact = hardy_power_constant(p, beta).unwrap();
            let r = bound_a(
                &hardy(),
                &WeightModel::power(beta),
                p,
                EnvelopeMode::Sup,
                1e-9,
            )
            .unwrap();
            assert!(
                (r.value - exact).abs() <= 1e-6 * exact,
                "p={p} β={beta}: {r:?}"
            );
        }
        assert_eq!(hardy_power_constant(3.0, 1.0).unwrap(), 3.0);
        assert!(matches!(
            hardy_power_constant(2.0, 1.0),
            Err(BoundError::ParamError(_))
        ));
        assert!(hardy_power_constant(2.0, 0.999).unwrap() > 1e3);
    }

    #[test]
    fn unbounded_when_beta_too_large() {
        let r = bound_a(
            &hardy(),
            &WeightModel::power(1.5),
            2.0,
            EnvelopeMode::Sup,
            1e-8,
        )
        .unwrap();
        assert_eq!(r.value, f64::INFINITY);
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn multiplicative_modes_agree() {
        let op = OperatorSpec1D::new(-0.5, KernelSpec::preset("adjoint_hardy").unwrap());
        let w = WeightModel::power(0.7);
        let s = bound_a(&op, &w, 2.0, EnvelopeMode::Sup, 1e-10).unwrap();
        let i = bound_a(&op, &w, 2.0, EnvelopeMode::Inf, 1e-10).unwrap();
        let x = exact_norm_multiplicative(&op, &w, 2.0, 1e-10).unwrap();
        assert!((s.value - i.value).abs() < 1e-12 && (s.value - x.value).abs() < 1e-12);
        // ∫_0^1 t^{-1/2} t^{0.35} dt = 1/0.85
        assert!((x.value - 1.0 / 0.85).abs() < 1e-9, "{x:?}");
        assert!(matches!(
            exact_norm_multiplicative(
                &op,
                &WeightModel::tabulate("t", |x: f64| 1.0 + x.abs()).unwrap(),
                2.0,
                1e-8
            ),
            Err(BoundError::NotMultiplicative(_))
        ));
    }

    #[test]
    fn two_weight_examples() {
        let a = bound_a(
            &hardy(),
            &WeightModel::unit(),
            2.0,
            EnvelopeMode::Sup,
            1e-10,
        )
        .unwrap();
        let b = bound_b_two_weight(
            &hardy(),
            &WeightModel::unit(),
            &WeightModel::unit(),
            2.0,
            1e-10,
        )
        .unwrap();
        assert_eq!(a.value, b.value);
        let b = bound_b_two_weight(
            &hardy(),
            &WeightModel::power(1.0),
            &WeightModel::power(2.0),
            2.0,
            1e-10,
        )
        .unwrap();
        assert_eq!(b.value, f64::INFINITY);
    }

    #[test]
    fn two_index_worked_instance() {
        let v = WeightModel::function(
            "1/(1+y^2)",
            |y: f64| 1.0 / (1.0 + y * y),
            vec![
                SingularityHint::pos_tail(2.0),
                SingularityHint::neg_tail(2.0),
            ],
        );
        let r =
            bound_d_two_index(&hardy(), &v, &WeightModel::unit(), 2.0, 4.0 / 3.0, 1e-8).unwrap();
        let exact = 2.0 * (3.0 * std::f64::consts::PI / 8.0).powf(0.25);
        assert!((r.value - exact).abs() < 1e-6, "{r:?} vs {exact}");
        let r = bound_d_two_index(
            &hardy(),
            &WeightModel::unit(),
            &WeightModel::unit(),
            2.0,
            4.0 / 3.0,
            1e-8,
        )
        .unwrap();
        assert_eq!(r.value, f64::INFINITY);
        assert!(bound_d_two_index(&hardy(), &v, &v, 2.0, 3.0, 1e-8).is_err());
    }

    #[test]
    fn tensor_2d_factorizes() {
        let h = KernelSpec::preset("hardy").unwrap();
        let op = OperatorSpec2D::new(-0.5, Kernel2DSpec::tensor(h.clone(), h));
        let r = bound_2d(
            &op,
            Weights2D::One(&Weight2D::unit()),
            2.0,
            None,
            BoundKind::A2Sup,
            1e-8,
        )
        .unwrap();
        assert!((r.value - 4.0).abs() < 1e-6, "{r:?}");

        let e = KernelSpec::piecewise(
            None,
            vec![PowerExpTerm {
                c: 1.0,
                a: 0.5,
                b: 1.0,
                lo: 0.0,
                hi: f64::INFINITY,
            }],
        )
        .unwrap();
        let a = KernelSpec::preset("adjoint_hardy").unwrap();
        let alpha = -0.25;
        let op = OperatorSpec2D::new(alpha, Kernel2DSpec::tensor(e.clone(), a.clone()));
        let (w1, w2) = (WeightModel::power(0.5), WeightModel::power(1.0));
        let w = Weight2D::Tensor(w1.clone(), w2.clone());
        let r = bound_2d(&op, Weights2D::One(&w), 2.0, None, BoundKind::A2Sup, 1e-9).unwrap();
        let x1 =
            exact_norm_multiplicative(&OperatorSpec1D::new(alpha, e), &w1, 2.0, 1e-11).unwrap();
        let x2 =
            exact_norm_multiplicative(&OperatorSpec1D::new(alpha, a), &w2, 2.0, 1e-11).unwrap();
        let prod = x1.value * x2.value;
        assert!((r.value - prod).abs() <= 1e-5 * prod, "{r:?} vs {prod}");

        let zero = OperatorSpec2D::new(-0.5, Kernel2DSpec::zero());
        let r = bound_2d(
            &zero,
            Weights2D::One(&Weight2D::unit()),
            2.0,
            None,
            BoundKind::A2Inf,
            1e-8,
        )
        .unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn two_index_2d_factorizes() {
        let h = KernelSpec::preset("hardy").unwrap();
        let op = OperatorSpec2D::new(-0.5, Kernel2DSpec::tensor(h.clone(), h));
        let v1 = WeightModel::function(
            "1/(1+y^2)",
            |y: f64| 1.0 / (1.0 + y * y),
            vec![
                SingularityHint::pos_tail(2.0),
                SingularityHint::neg_tail(2.0),
            ],
        );
        let v = Weight2D::Tensor(v1.clone(), v1);
        let w = Weight2D::unit();
        let r = bound_2d(
            &op,
            Weights2D::Two(&v, &w),
            2.0,
            Some(4.0 / 3.0),
            BoundKind::D2Sup,
            1e-7,
        )
        .unwrap();
        let one = 2.0 * (3.0 * std::f64::consts::PI / 8.0).powf(0.25);
        assert!((r.value - one * one).abs() < 1e-5, "{r:?}");
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in BoundKind::ALL {
            assert_eq!(k.as_str().parse::<BoundKind>().unwrap(), k);
        }
        assert!("nope".parse::<BoundKind>().is_err());
    }
}
