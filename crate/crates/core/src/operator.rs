//! Application of the Dunkl-Hausdorff operator
//! `H f(x) = ∫ |φ(t)| |t|^{-(2α+2)} f(x/t) dt` in one and two dimensions,
//! the direct Hardy-type averages used as oracles, and weighted `L^p` norms.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use crate::kernels::{Kernel2DSpec, KernelError, KernelSpec};
use crate::quadrature::{
    inner_options, integrate_line_nested, pow_product, Domain1D, Domain2D, Location, PointEstimate,
    QuadOptions, QuadratureError, QuadratureResult, SingularityHint,
};
use crate::weights::{WeightError, WeightModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("integrand is not integrable near {location} (local exponent {exponent})")]
    NonIntegrable { location: Location, exponent: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Quadrature(QuadratureError),
}

impl From<QuadratureError> for OperatorError {
    fn from(e: QuadratureError) -> Self {
        match e {
            QuadratureError::NonIntegrableHint { location, exponent } => {
                OperatorError::NonIntegrable { location, exponent }
            }
            other => OperatorError::Quadrature(other),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OperatorSpec1D {
    pub alpha: f64,
    pub kernel: KernelSpec,
}

#[derive(Debug, Clone)]
pub struct OperatorSpec2D {
    pub alpha: f64,
    pub kernel: Kernel2DSpec,
}

impl OperatorSpec1D {
    pub fn new(alpha: f64, kernel: KernelSpec) -> Self {
        OperatorSpec1D { alpha, kernel }
    }

    /// `2α + 2`, the power of `|t|` in the denominator.
    pub fn dilation_power(&self) -> f64 {
        2.0 * self.alpha + 2.0
    }
}

impl OperatorSpec2D {
    pub fn new(alpha: f64, kernel: Kernel2DSpec) -> Self {
        OperatorSpec2D { alpha, kernel }
    }

    pub fn dilation_power(&self) -> f64 {
        2.0 * self.alpha + 2.0
    }
}

/// A function on the line given by a closure, its support as disjoint open
/// intervals, and quadrature hints describing its singular behaviour.
#[derive(Clone)]
pub struct SampledFunction {
    pub name: Option<String>,
    pub support: Vec<Domain1D>,
    pub hints: Vec<SingularityHint>,
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for SampledFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledFunction")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("hints", &self.hints)
            .finish_non_exhaustive()
    }
}

impl SampledFunction {
    pub fn new(
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: Vec<Domain1D>,
        hints: Vec<SingularityHint>,
    ) -> Self {
        SampledFunction {
            name: None,
            support,
            hints,
            eval: Arc::new(eval),
        }
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// `χ_(a,b)`.
    pub fn indicator(a: f64, b: f64) -> Result<Self, OperatorError> {
        let d = Domain1D::new(a, b)?;
        let mut hints = Vec::new();
        if a.is_finite() {
            hints.push(SingularityHint::breakpoint(a));
        }
        if b.is_finite() {
            hints.push(SingularityHint::breakpoint(b));
        }
        if b == f64::INFINITY {
            hints.push(SingularityHint::pos_tail(0.0));
        }
        if a == f64::NEG_INFINITY {
            hints.push(SingularityHint::neg_tail(0.0));
        }
        Ok(SampledFunction::new(
            move |s| if s > a && s < b { 1.0 } else { 0.0 },
            vec![d],
            hints,
        ))
    }

    pub fn eval(&self, s: f64) -> f64 {
        if self.support.iter().any(|d| d.contains(s)) {
            (self.eval)(s)
        } else {
            0.0
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.eval.clone();
        SampledFunction {
            name: self.name.clone(),
            support: self.support.clone(),
            hints: self.hints.clone(),
            eval: Arc::new(move |s| c * inner(s)),
        }
    }

    fn profile(&self) -> Profile {
        let touches_zero = self.support.iter().any(|d| d.touches(0.0));
        let unbounded_pos = self.support.iter().any(|d| d.hi() == f64::INFINITY);
        let unbounded_neg = self.support.iter().any(|d| d.lo() == f64::NEG_INFINITY);
        Profile::from_hints(&self.hints, touches_zero, unbounded_pos, unbounded_neg)
    }
}

/// A function on the plane with rectangular support pieces and per-axis
/// hints.
#[derive(Clone)]
pub struct SampledFunction2D {
    pub support: Vec<Domain2D>,
    pub hints_x: Vec<SingularityHint>,
    pub hints_y: Vec<SingularityHint>,
    eval: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl fmt::Debug for SampledFunction2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SampledFunction2D")
            .field("support", &self.support)
            .finish_non_exhaustive()
    }
}

impl SampledFunction2D {
    pub fn new(
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        support: Vec<Domain2D>,
        hints_x: Vec<SingularityHint>,
        hints_y: Vec<SingularityHint>,
    ) -> Self {
        SampledFunction2D {
            support,
            hints_x,
            hints_y,
            eval: Arc::new(eval),
        }
    }

    /// `f₁(x) f₂(y)`.
    pub fn tensor(f1: &SampledFunction, f2: &SampledFunction) -> Self {
        let support = f1
            .support
            .iter()
            .flat_map(|a| f2.support.iter().map(|b| Domain2D::new(*a, *b)))
            .collect();
        let (a, b) = (f1.clone(), f2.clone());
        SampledFunction2D {
            support,
            hints_x: f1.hints.clone(),
            hints_y: f2.hints.clone(),
            eval: Arc::new(move |x, y| a.eval(x) * b.eval(y)),
        }
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if self
            .support
            .iter()
            .any(|d| d.dx.contains(x) && d.dy.contains(y))
        {
            (self.eval)(x, y)
        } else {
            0.0
        }
    }

    fn profiles(&self) -> (Profile, Profile) {
        let axis = |pick: fn(&Domain2D) -> Domain1D, hints: &[SingularityHint]| {
            let ds: Vec<Domain1D> = self.support.iter().map(pick).collect();
            Profile::from_hints(
                hints,
                ds.iter().any(|d| d.touches(0.0)),
                ds.iter().any(|d| d.hi() == f64::INFINITY),
                ds.iter().any(|d| d.lo() == f64::NEG_INFINITY),
            )
        };
        (axis(|d| d.dx, &self.hints_x), axis(|d| d.dy, &self.hints_y))
    }
}

/// Local power behaviour `|g| ~ |t|^{-γ}` at 0 and `|g| ~ |t|^{-τ}` at
/// `±∞`, plus the remaining finite-point hints.
#[derive(Debug, Clone)]
struct Profile {
    at_zero: f64,
    pos_tail: Option<f64>,
    neg_tail: Option<f64>,
    points: Vec<SingularityHint>,
}

impl Profile {
    fn from_hints(
        hints: &[SingularityHint],
        touches_zero: bool,
        unbounded_pos: bool,
        unbounded_neg: bool,
    ) -> Self {
        let tail = |loc: Location, unbounded: bool| {
            if !unbounded {
                return Some(f64::INFINITY);
            }
            hints
                .iter()
                .filter(|h| h.location == loc)
                .map(|h| h.exponent)
                .reduce(f64::min)
        };
        let at_zero = if touches_zero {
            hints
                .iter()
                .filter(|h| h.at_point() == Some(0.0))
                .map(|h| h.exponent)
                .fold(0.0, f64::max)
        } else {
            f64::NEG_INFINITY
        };
        Profile {
            at_zero,
            pos_tail: tail(Location::PosInf, unbounded_pos),
            neg_tail: tail(Location::NegInf, unbounded_neg),
            points: hints
                .iter()
                .filter(|h| matches!(h.at_point(), Some(x) if x != 0.0))
                .copied()
                .collect(),
        }
    }

    fn of_kernel(k: &KernelSpec) -> Self {
        Profile {
            at_zero: k.exponent_at_zero(),
            pos_tail: k.tail_exponent(Location::PosInf),
            neg_tail: k.tail_exponent(Location::NegInf),
            points: k
                .hints
                .iter()
                .filter(|h| matches!(h.at_point(), Some(x) if x != 0.0))
                .copied()
                .collect(),
        }
    }

    fn of_axis(support: &Domain1D, hints: &[SingularityHint]) -> Self {
        Profile::from_hints(
            hints,
            support.touches(0.0),
            support.hi() == f64::INFINITY,
            support.lo() == f64::NEG_INFINITY,
        )
    }
}

fn recip(s: f64, negative_side: bool) -> f64 {
    if s == 0.0 {
        if negative_side {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        }
    } else if s.is_infinite() {
        if negative_side {
            -0.0
        } else {
            0.0
        }
    } else {
        1.0 / s
    }
}

/// `{t : x/t ∈ piece}` as disjoint open intervals.
pub fn dilation_preimage(x: f64, piece: &Domain1D) -> Vec<Domain1D> {
    if x == 0.0 {
        return if piece.contains(0.0) {
            vec![Domain1D::FULL_LINE]
        } else {
            Vec::new()
        };
    }
    let (c, d) = (piece.lo(), piece.hi());
    let (s1, s2) = if x > 0.0 {
        (c / x, d / x)
    } else {
        (d / x, c / x)
    };
    let mut out = Vec::new();
    let mut push = |lo: f64, hi: f64| {
        if lo < hi {
            out.push(Domain1D::new(lo, hi).expect("ordered interval"));
        }
    };
    if s1 >= 0.0 {
        push(recip(s2, false), recip(s1, false));
    } else if s2 <= 0.0 {
        push(recip(s2, true), recip(s1, true));
    } else {
        push(f64::NEG_INFINITY, recip(s1, true));
        push(recip(s2, false), f64::INFINITY);
    }
    out
}

/// Hints for `t ↦ |φ(t)| |t|^{-c} f(x/t)` on `d`.
fn compose_hints(
    kernel: &Profile,
    f: &Profile,
    x: f64,
    c: f64,
    d: &Domain1D,
) -> Vec<SingularityHint> {
    let mut hints: Vec<SingularityHint> = kernel.points.clone();
    let (f_zero, f_pos, f_neg) = if x == 0.0 {
        (0.0, Some(0.0), Some(0.0))
    } else {
        (f.at_zero.max(0.0), f.pos_tail, f.neg_tail)
    };
    if d.touches(0.0) {
        // t -> 0± sends x/t to ±sign(x)·∞.
        let side_tail = |positive_t: bool| {
            if (x > 0.0) == positive_t {
                f_pos
            } else {
                f_neg
            }
        };
        let tau_f = match (d.lo() < 0.0, d.hi() > 0.0) {
            (true, true) => side_tail(true).zip(side_tail(false)).map(|(a, b)| a.min(b)),
            (false, true) => side_tail(true),
            _ => side_tail(false),
        }
        .unwrap_or(0.0);
        // A kernel vanishing to all orders at 0 kills any growth of f.
        let gamma = if kernel.at_zero == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            kernel.at_zero.max(0.0) + c - tau_f.min(f64::MAX)
        };
        if gamma.is_finite() {
            hints.push(SingularityHint::point(0.0, gamma));
        } else {
            hints.push(SingularityHint::breakpoint(0.0));
        }
    }
    for (loc, k_tail) in [
        (Location::PosInf, kernel.pos_tail),
        (Location::NegInf, kernel.neg_tail),
    ] {
        if let Some(tk) = k_tail {
            let tau = tk + c - f_zero;
            if !tau.is_nan() {
                hints.push(SingularityHint {
                    location: loc,
                    exponent: tau,
                });
            }
        }
    }
    if x != 0.0 {
        for h in &f.points {
            if let Some(s0) = h.at_point() {
                hints.push(SingularityHint::point(x / s0, h.exponent));
            }
        }
    }
    hints
}

/// `H_{α,φ} f(x)`. Non-convergence is reported through the result flags.
pub fn apply_1d(
    op: &OperatorSpec1D,
    f: &SampledFunction,
    x: f64,
    tol: f64,
) -> Result<QuadratureResult, OperatorError> {
    apply_1d_with(op, f, x, &QuadOptions::abs(tol))
}

pub fn apply_1d_with(
    op: &OperatorSpec1D,
    f: &SampledFunction,
    x: f64,
    opts: &QuadOptions,
) -> Result<QuadratureResult, OperatorError> {
    if !x.is_finite() {
        return Err(OperatorError::InvalidArgument(format!("x = {x}")));
    }
    let c = op.dilation_power();
    let kp = Profile::of_kernel(&op.kernel);
    let fp = f.profile();
    let domains: Vec<Domain1D> = f
        .support
        .iter()
        .flat_map(|piece| dilation_preimage(x, piece))
        .filter_map(|d| d.intersect(&op.kernel.support))
        .collect();
    let mut total = QuadratureResult::zero();
    if domains.is_empty() {
        return Ok(total);
    }
    let piece_opts = QuadOptions {
        abs_tol: opts.abs_tol / domains.len() as f64,
        ..*opts
    };
    // In r = t/x the integrand is |x|^{1-c} |φ(xr)| |r|^{-c} f(1/r), whose
    // r-support does not move with x; the t-form overflows for tiny |x|.
    let inv = 1.0 / x;
    let rescale = x != 0.0 && inv.is_normal();
    for d in &domains {
        let hints = compose_hints(&kp, &fp, x, c, d);
        let r = if rescale {
            integrate_line_nested::<OperatorError, _>(
                |r| {
                    let k = op.kernel.abs_eval(x * r);
                    if k == 0.0 {
                        return Ok(PointEstimate::exact(0.0));
                    }
                    Ok(PointEstimate::exact(pow_product(
                        &[k, f.eval(1.0 / r)],
                        &[(x, 1.0 - c), (r, -c)],
                    )))
                },
                &scale_domain(d, inv),
                &scale_hints(&hints, inv),
                &piece_opts,
            )?
        } else {
            integrate_line_nested::<OperatorError, _>(
                |t| {
                    let k = op.kernel.abs_eval(t);
                    if k == 0.0 {
                        return Ok(PointEstimate::exact(0.0));
                    }
                    Ok(PointEstimate::exact(pow_product(
                        &[k, f.eval(x / t)],
                        &[(t, -c)],
                    )))
                },
                d,
                &hints,
                &piece_opts,
            )?
        };
        total = total.combine(r);
    }
    Ok(total)
}

/// `{s·t : t ∈ d}` for `s ≠ 0`.
fn scale_domain(d: &Domain1D, s: f64) -> Domain1D {
    let (a, b) = (d.lo() * s, d.hi() * s);
    Domain1D::new(a.min(b), a.max(b)).expect("non-degenerate")
}

/// Hints after the substitution `t = r/s`: points move, exponents stay and
/// the tails swap sides when `s < 0`.
fn scale_hints(hints: &[SingularityHint], s: f64) -> Vec<SingularityHint> {
    hints
        .iter()
        .map(|h| {
            let location = match h.location {
                Location::Point(p) => Location::Point(p * s),
                Location::PosInf if s < 0.0 => Location::NegInf,
                Location::NegInf if s < 0.0 => Location::PosInf,
                other => other,
            };
            SingularityHint { location, ..*h }
        })
        .collect()
}

/// [`apply_1d`] at many points in parallel.
pub fn apply_1d_many(
    op: &OperatorSpec1D,
    f: &SampledFunction,
    xs: &[f64],
    tol: f64,
) -> Vec<Result<QuadratureResult, OperatorError>> {
    xs.par_iter().map(|&x| apply_1d(op, f, x, tol)).collect()
}

/// `ℋ_{α,φ} f(x₁, x₂) = ∬ |φ(t₁,t₂)| |t₁t₂|^{-(2α+2)} f(x₁/t₁, x₂/t₂) dt`.
pub fn apply_2d(
    op: &OperatorSpec2D,
    f: &SampledFunction2D,
    x: (f64, f64),
    tol: f64,
) -> Result<QuadratureResult, OperatorError> {
    let (x1, x2) = x;
    if !(x1.is_finite() && x2.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!("x = ({x1}, {x2})")));
    }
    let c = op.dilation_power();
    let k = &op.kernel;
    let (kx, ky) = match &k.tensor {
        Some((k1, k2)) => (Profile::of_kernel(k1), Profile::of_kernel(k2)),
        None => (
            Profile::of_axis(&k.support.dx, &k.hints_x),
            Profile::of_axis(&k.support.dy, &k.hints_y),
        ),
    };
    let (fx, fy) = f.profiles();
    let mut rects = Vec::new();
    for piece in &f.support {
        for dx in dilation_preimage(x1, &piece.dx) {
            let Some(dx) = dx.intersect(&k.support.dx) else {
                continue;
            };
            for dy in dilation_preimage(x2, &piece.dy) {
                if let Some(dy) = dy.intersect(&k.support.dy) {
                    rects.push(Domain2D::new(dx, dy));
                }
            }
        }
    }
    let mut total = QuadratureResult::zero();
    if rects.is_empty() {
        return Ok(total);
    }
    let opts = QuadOptions::abs(tol / rects.len() as f64);
    for r in &rects {
        let hx = compose_hints(&kx, &fx, x1, c, &r.dx);
        let hy = compose_hints(&ky, &fy, x2, c, &r.dy);
        let inner = inner_options(&opts, &r.dx);
        let res = integrate_line_nested::<OperatorError, _>(
            |t1| {
                let s1 = x1 / t1;
                let inner_res = integrate_line_nested::<OperatorError, _>(
                    |t2| {
                        let kv = k.abs_eval(t1, t2);
                        if kv == 0.0 {
                            return Ok(PointEstimate::exact(0.0));
                        }
                        Ok(PointEstimate::exact(pow_product(
                            &[kv, f.eval(s1, x2 / t2)],
                            &[(t1, -c), (t2, -c)],
                        )))
                    },
                    &r.dy,
                    &hy,
                    &inner,
                )?;
                Ok(PointEstimate::from(inner_res))
            },
            &r.dx,
            &hx,
            &opts,
        )?;
        total = total.combine(res);
    }
    Ok(total)
}

fn restricted(f: &SampledFunction, window: &Domain1D) -> Vec<(Domain1D, Vec<SingularityHint>)> {
    f.support
        .iter()
        .filter_map(|d| d.intersect(window))
        .map(|d| (d, f.hints.clone()))
        .collect()
}

/// `(1/x) ∫₀^x f`, the Hardy average.
pub fn hardy_direct(
    f: &SampledFunction,
    x: f64,
    tol: f64,
) -> Result<QuadratureResult, OperatorError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!(
            "Hardy average needs x > 0, got {x}"
        )));
    }
    let window = Domain1D::new(0.0, x)?;
    let mut total = QuadratureResult::zero();
    for (d, hints) in restricted(f, &window) {
        let r = integrate_line_nested::<OperatorError, _>(
            |s| Ok(PointEstimate::exact(f.eval(s))),
            &d,
            &hints,
            &QuadOptions::abs(tol * x),
        )?;
        total = total.combine(r);
    }
    Ok(total.scale(1.0 / x))
}

/// `∫_x^∞ f(s)/s ds`, the adjoint Hardy average.
pub fn adjoint_hardy_direct(
    f: &SampledFunction,
    x: f64,
    tol: f64,
) -> Result<QuadratureResult, OperatorError> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!(
            "adjoint Hardy average needs x > 0, got {x}"
        )));
    }
    let window = Domain1D::new(x, f64::INFINITY)?;
    let fp = f.profile();
    let mut total = QuadratureResult::zero();
    for (d, mut hints) in restricted(f, &window) {
        hints.retain(|h| h.at_point().is_some());
        if let Some(tau) = fp.pos_tail {
            hints.push(SingularityHint::pos_tail(tau + 1.0));
        }
        let r = integrate_line_nested::<OperatorError, _>(
            |s| Ok(PointEstimate::exact(f.eval(s) / s)),
            &d,
            &hints,
            &QuadOptions::abs(tol),
        )?;
        total = total.combine(r);
    }
    Ok(total)
}

/// `(1/(x₁x₂)) ∫₀^{x₁}∫₀^{x₂} f`, the two-dimensional Hardy average.
pub fn hardy2_direct(
    f: &SampledFunction2D,
    x: (f64, f64),
    tol: f64,
) -> Result<QuadratureResult, OperatorError> {
    let (x1, x2) = x;
    if !(x1 > 0.0 && x2 > 0.0 && x1.is_finite() && x2.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!(
            "two-dimensional Hardy average needs x > 0, got ({x1}, {x2})"
        )));
    }
    let (w1, w2) = (Domain1D::new(0.0, x1)?, Domain1D::new(0.0, x2)?);
    let opts = QuadOptions::abs(tol * x1 * x2);
    let mut total = QuadratureResult::zero();
    for piece in &f.support {
        let (Some(dx), Some(dy)) = (piece.dx.intersect(&w1), piece.dy.intersect(&w2)) else {
            continue;
        };
        let inner = inner_options(&opts, &dx);
        let r = integrate_line_nested::<OperatorError, _>(
            |s1| {
                let r = integrate_line_nested::<OperatorError, _>(
                    |s2| Ok(PointEstimate::exact(f.eval(s1, s2))),
                    &dy,
                    &f.hints_y,
                    &inner,
                )?;
                Ok(PointEstimate::from(r))
            },
            &dx,
            &f.hints_x,
            &opts,
        )?;
        total = total.combine(r);
    }
    Ok(total.scale(1.0 / (x1 * x2)))
}

/// `(∫_domain |f|^p v)^{1/p}`.
pub fn weighted_lp_norm(
    f: &SampledFunction,
    w: &WeightModel,
    p: f64,
    domain: &Domain1D,
    tol: f64,
) -> Result<QuadratureResult, OperatorError> {
    weighted_lp_norm_nested(
        |s| Ok(PointEstimate::exact(f.eval(s))),
        &f.support,
        &f.hints,
        w,
        p,
        domain,
        tol,
    )
}

/// Weighted norm of a function known only through pointwise estimates
/// (such as an operator image). `hints` describe `g` itself.
pub fn weighted_lp_norm_nested<G>(
    g: G,
    support: &[Domain1D],
    hints: &[SingularityHint],
    w: &WeightModel,
    p: f64,
    domain: &Domain1D,
    tol: f64,
) -> Result<QuadratureResult, OperatorError>
where
    G: Fn(f64) -> Result<PointEstimate, OperatorError>,
{
    if !(p >= 1.0 && p.is_finite()) {
        return Err(OperatorError::InvalidArgument(format!(
            "p must be in [1, ∞), got {p}"
        )));
    }
    let pieces: Vec<Domain1D> = support
        .iter()
        .filter_map(|d| d.intersect(domain))
        .flat_map(|d| {
            let (neg, pos) = d.split_at_zero();
            neg.into_iter().chain(pos)
        })
        .collect();
    if pieces.is_empty() {
        return Ok(QuadratureResult::zero());
    }
    let whints = w.hints();
    let hint_exp = |hs: &[SingularityHint], loc: Location| {
        hs.iter()
            .filter(|h| h.location == loc)
            .map(|h| h.exponent)
            .reduce(if matches!(loc, Location::Point(_)) {
                f64::max
            } else {
                f64::min
            })
    };
    let opts = QuadOptions::new(tol / pieces.len() as f64, tol);
    let mut total = QuadratureResult::zero();
    for d in &pieces {
        let mut ph: Vec<SingularityHint> = hints
            .iter()
            .filter(|h| matches!(h.at_point(), Some(x) if x != 0.0))
            .map(|h| SingularityHint::point(h.at_point().unwrap(), p * h.exponent))
            .collect();
        if d.touches(0.0) {
            let gf = hint_exp(hints, Location::Point(0.0)).unwrap_or(0.0);
            let gw = hint_exp(&whints, Location::Point(0.0)).unwrap_or(0.0);
            ph.push(SingularityHint::point(0.0, p * gf + gw));
        }
        for loc in [Location::PosInf, Location::NegInf] {
            if let Some(tf) = hint_exp(hints, loc) {
                let tw = hint_exp(&whints, loc).unwrap_or(0.0);
                let tau = p * tf + tw;
                if !tau.is_nan() {
                    ph.push(SingularityHint {
                        location: loc,
                        exponent: tau,
                    });
                }
            }
        }
        let r = integrate_line_nested::<OperatorError, _>(
            |s| {
                let e = g(s)?;
                if e.value == 0.0 && e.error == 0.0 {
                    return Ok(PointEstimate {
                        evals: e.evals,
                        ..PointEstimate::exact(0.0)
                    });
                }
                let v = w.eval(s)?;
                let a = e.value.abs();
                Ok(PointEstimate {
                    value: pow_product(&[v], &[(a, p)]),
                    error: pow_product(&[p, e.error, v], &[(a, p - 1.0)]),
                    evals: e.evals,
                })
            },
            d,
            &ph,
            &opts,
        )?;
        total = total.combine(r);
    }
    Ok(lp_root(total, p))
}

/// `I ↦ I^{1/p}` with first-order error propagation.
pub fn lp_root(r: QuadratureResult, p: f64) -> QuadratureResult {
    let value = r.value.max(0.0).powf(1.0 / p);
    let abs_error_estimate = if r.value > 0.0 {
        (r.abs_error_estimate / (p * r.value.powf(1.0 - 1.0 / p)))
            .min(r.abs_error_estimate.powf(1.0 / p))
    } else {
        r.abs_error_estimate.powf(1.0 / p)
    };
    QuadratureResult {
        value,
        abs_error_estimate,
        ..r
    }
}

/// Support of `H f`: the products `t·s` with `t` in the kernel support and
/// `s` in the support of `f`, as a sorted list of disjoint intervals.
pub fn image_support(kernel: &Domain1D, f_support: &[Domain1D]) -> Vec<Domain1D> {
    let mut pieces = Vec::new();
    let (kn, kp) = kernel.split_at_zero();
    for fs in f_support {
        let (fneg, fpos) = fs.split_at_zero();
        for k in [kn, kp].into_iter().flatten() {
            for s in [fneg, fpos].into_iter().flatten() {
                let ka = (
                    k.lo().abs().min(k.hi().abs()),
                    k.lo().abs().max(k.hi().abs()),
                );
                let sa = (
                    s.lo().abs().min(s.hi().abs()),
                    s.lo().abs().max(s.hi().abs()),
                );
                let (lo, hi) = (ka.0 * sa.0, ka.1 * sa.1);
                if !(lo < hi) {
                    continue;
                }
                let negative = (k.hi() <= 0.0) != (s.hi() <= 0.0);
                let d = if negative {
                    Domain1D::new(-hi, -lo)
                } else {
                    Domain1D::new(lo, hi)
                };
                pieces.extend(d.ok());
            }
        }
    }
    pieces.sort_by(|a, b| a.lo().total_cmp(&b.lo()));
    let mut merged: Vec<Domain1D> = Vec::new();
    for d in pieces {
        // pieces on opposite sides of 0 stay separate so norms still split there
        match merged.last_mut() {
            Some(last) if d.lo() <= last.hi() && (d.lo() >= 0.0) == (last.lo() >= 0.0) => {
                *last = Domain1D::new(last.lo(), last.hi().max(d.hi())).unwrap();
            }
            _ => merged.push(d),
        }
    }
    merged
}

/// Asymptotic hints for `H f`: near 0 the image behaves like
/// `|x|^{-max(γ_φ + c - 1, γ_f)}`, at infinity like `|x|^{-min(τ_φ + c - 1, τ_f)}`,
/// with `c = 2α + 2`.
pub fn image_hints(op: &OperatorSpec1D, f: &SampledFunction) -> Vec<SingularityHint> {
    let c = op.dilation_power();
    let k = &op.kernel;
    let f_touches = f.support.iter().any(|d| d.touches(0.0));
    let f_unbounded = f.support.iter().any(|d| !d.is_bounded());
    let hint = |loc: Location, pick: fn(f64, f64) -> f64| {
        f.hints
            .iter()
            .filter(|h| h.location == loc)
            .map(|h| h.exponent)
            .reduce(pick)
    };
    let mut out = Vec::new();
    let f0 = if f_touches {
        hint(Location::Point(0.0), f64::max).unwrap_or(0.0)
    } else {
        f64::NEG_INFINITY
    };
    let g0 = (k.exponent_at_zero() + c - 1.0).max(f0);
    if g0.is_finite() {
        out.push(SingularityHint::point(0.0, g0));
    }
    for loc in [Location::PosInf, Location::NegInf] {
        let kt = [Location::PosInf, Location::NegInf]
            .into_iter()
            .map(|l| k.tail_exponent(l).unwrap_or(1.0))
            .fold(f64::INFINITY, f64::min);
        let ft = if f_unbounded {
            hint(loc, f64::min).unwrap_or(0.0)
        } else {
            f64::INFINITY
        };
        let tau = (kt + c - 1.0).min(ft);
        if !tau.is_nan() {
            out.push(SingularityHint {
                location: loc,
                exponent: tau,
            });
        }
    }
    out
}

/// `‖H f‖_{L^p_w}` over the line.
pub fn image_norm(
    op: &OperatorSpec1D,
    f: &SampledFunction,
    w: &WeightModel,
    p: f64,
    tol: f64,
) -> Result<QuadratureResult, OperatorError> {
    let support = image_support(&op.kernel.support, &f.support);
    let hints = image_hints(op, f);
    let inner = inner_options(&QuadOptions::new(tol, tol), &Domain1D::FULL_LINE);
    weighted_lp_norm_nested(
        |x| Ok(PointEstimate::from(apply_1d_with(op, f, x, &inner)?)),
        &support,
        &hints,
        w,
        p,
        &Domain1D::FULL_LINE,
        tol,
    )
}
