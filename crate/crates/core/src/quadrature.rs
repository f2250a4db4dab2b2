//! Adaptive Gauss-Kronrod integration over lines and planes.
//!
//! A domain is cut at every hinted point, each resulting segment is mapped
//! onto a finite reference interval and all reference panels are refined
//! together by repeatedly bisecting the panel with the largest error
//! estimate. The error of a panel is the (QUADPACK-rescaled) difference of
//! the embedded 7-point Gauss and 15-point Kronrod rules; the global error
//! is the sum over panels.
//!
//! Charts used for the reference map:
//!
//! * finite intervals: affine, graded as `r^k` toward an endpoint carrying a
//!   declared singularity `|t - a|^{-γ}` (with `k = 1/(1-γ)`), or
//!   exponential when the interval spans several decades on one side of 0;
//! * half-lines `(a, ∞)`: `t = a + s/(1-s)`, graded toward `s = 1` when a
//!   slow tail is declared;
//! * half-lines starting at the origin: `t = ±exp(s/(1-s²))`, which turns
//!   both a power singularity at 0 and a power tail into exponential decay;
//! * the full line without interior hints: `t = s/(1-s²)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use thiserror::Error;

/// Default evaluation budget per integral.
pub const DEFAULT_MAX_EVALS: usize = 1_000_000;

const MAX_GRADING: f64 = 8.0;
const LOG_CHART_RATIO: f64 = 64.0;
const INITIAL_PANELS: usize = 4;
const MAX_DEPTH: u32 = 200;
// The exponential chart is truncated at |log|t|| = LOG_SPAN; the remainder
// beyond is estimated from the decay of |t f(t)| and added to the error.
const LOG_SPAN: f64 = 300.0;
// Root of s / (1 - s²) = LOG_SPAN.
const LOG_S_MAX: f64 = 0.998_334_722_221_257_6;

// Kronrod abscissae on [-1, 1], positive half; even indices are new
// Kronrod nodes, odd indices are the 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("tolerance must be positive (abs = {abs}, rel = {rel})")]
    InvalidTolerance { abs: f64, rel: f64 },
    #[error("invalid domain ({lo}, {hi})")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("non-integrable singularity declared at {location}: exponent {exponent}")]
    NonIntegrableHint { location: Location, exponent: f64 },
    #[error("integrand is not finite at t = {at}")]
    NonFinite { at: f64 },
}

/// Integration domain on the extended real line, always an open interval
/// `(lo, hi)` with `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain1D {
    lo: f64,
    hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainKind {
    FullLine,
    PositiveHalfLine,
    NegativeHalfLine,
    Interval,
    /// `(a, ∞)` with `a ≠ 0`.
    RayAbove,
    /// `(-∞, b)` with `b ≠ 0`.
    RayBelow,
}

impl Domain1D {
    pub const FULL_LINE: Domain1D = Domain1D {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };
    pub const POSITIVE: Domain1D = Domain1D {
        lo: 0.0,
        hi: f64::INFINITY,
    };
    pub const NEGATIVE: Domain1D = Domain1D {
        lo: f64::NEG_INFINITY,
        hi: 0.0,
    };

    /// General constructor accepting infinite endpoints.
    pub fn new(lo: f64, hi: f64) -> Result<Self, QuadratureError> {
        if lo.is_nan() || hi.is_nan() || lo >= hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
        {
            return Err(QuadratureError::InvalidDomain { lo, hi });
        }
        Ok(Domain1D { lo, hi })
    }

    /// Finite interval `(a, b)`.
    pub fn interval(a: f64, b: f64) -> Result<Self, QuadratureError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(QuadratureError::InvalidDomain { lo: a, hi: b });
        }
        Self::new(a, b)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn kind(&self) -> DomainKind {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (true, true) => DomainKind::Interval,
            (false, false) => DomainKind::FullLine,
            (true, false) if self.lo == 0.0 => DomainKind::PositiveHalfLine,
            (true, false) => DomainKind::RayAbove,
            (false, true) if self.hi == 0.0 => DomainKind::NegativeHalfLine,
            (false, true) => DomainKind::RayBelow,
        }
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Open-interval membership.
    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// Closure membership for finite points.
    pub fn touches(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn intersect(&self, other: &Domain1D) -> Option<Domain1D> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(Domain1D { lo, hi })
    }

    /// `(-hi, -lo)`.
    pub fn mirror(&self) -> Domain1D {
        Domain1D {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    /// Negative and positive parts.
    pub fn split_at_zero(&self) -> (Option<Domain1D>, Option<Domain1D>) {
        (
            self.intersect(&Domain1D::NEGATIVE),
            self.intersect(&Domain1D::POSITIVE),
        )
    }
}

impl fmt::Display for Domain1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}

/// Product domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain2D {
    pub dx: Domain1D,
    pub dy: Domain1D,
}

impl Domain2D {
    pub fn new(dx: Domain1D, dy: Domain1D) -> Self {
        Domain2D { dx, dy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Location {
    Point(f64),
    PosInf,
    NegInf,
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Point(x) => write!(f, "t = {x}"),
            Location::PosInf => write!(f, "+inf"),
            Location::NegInf => write!(f, "-inf"),
        }
    }
}

/// Declared local behaviour of an integrand.
///
/// At a finite point `exponent = γ` means `|f(t)| ~ |t - loc|^{-γ}`; at
/// `±∞` it means `|f(t)| ~ |t|^{-exponent}`. A finite-point hint with
/// `γ = 0` is a plain breakpoint (kink or jump). `f64::NEG_INFINITY` at a
/// point and `f64::INFINITY` at a tail stand for faster-than-power decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularityHint {
    pub location: Location,
    pub exponent: f64,
}

impl SingularityHint {
    pub fn point(at: f64, exponent: f64) -> Self {
        SingularityHint {
            location: Location::Point(at),
            exponent,
        }
    }

    pub fn breakpoint(at: f64) -> Self {
        Self::point(at, 0.0)
    }

    pub fn pos_tail(exponent: f64) -> Self {
        SingularityHint {
            location: Location::PosInf,
            exponent,
        }
    }

    pub fn neg_tail(exponent: f64) -> Self {
        SingularityHint {
            location: Location::NegInf,
            exponent,
        }
    }

    pub fn at_point(&self) -> Option<f64> {
        match self.location {
            Location::Point(x) => Some(x),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub abs_error_estimate: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Set when the refinement stalled on an end panel whose contribution
    /// does not shrink under bisection: the integral most likely diverges.
    pub diverging: bool,
}

impl QuadratureResult {
    pub fn zero() -> Self {
        QuadratureResult {
            value: 0.0,
            abs_error_estimate: 0.0,
            n_evals: 0,
            converged: true,
            diverging: false,
        }
    }

    /// Sum of independent integrals over disjoint pieces.
    pub fn combine(self, other: QuadratureResult) -> QuadratureResult {
        QuadratureResult {
            value: self.value + other.value,
            abs_error_estimate: self.abs_error_estimate + other.abs_error_estimate,
            n_evals: self.n_evals + other.n_evals,
            converged: self.converged && other.converged,
            diverging: self.diverging || other.diverging,
        }
    }

    pub fn scale(mut self, c: f64) -> QuadratureResult {
        self.value *= c;
        self.abs_error_estimate *= c.abs();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl QuadOptions {
    pub fn abs(tol: f64) -> Self {
        QuadOptions {
            abs_tol: tol,
            rel_tol: 0.0,
            max_evals: DEFAULT_MAX_EVALS,
        }
    }

    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            rel_tol,
            max_evals: DEFAULT_MAX_EVALS,
        }
    }

    pub fn with_max_evals(mut self, max_evals: usize) -> Self {
        self.max_evals = max_evals;
        self
    }

    fn validate(&self) -> Result<(), QuadratureError> {
        let ok_abs = self.abs_tol.is_finite() && self.abs_tol >= 0.0;
        let ok_rel = self.rel_tol.is_finite() && self.rel_tol >= 0.0;
        if !(ok_abs && ok_rel) || (self.abs_tol == 0.0 && self.rel_tol == 0.0) {
            return Err(QuadratureError::InvalidTolerance {
                abs: self.abs_tol,
                rel: self.rel_tol,
            });
        }
        Ok(())
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Integrand sample carrying its own uncertainty, used for nested integrals
/// where the inner value is itself a quadrature estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointEstimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
}

impl PointEstimate {
    pub fn exact(value: f64) -> Self {
        PointEstimate {
            value,
            error: 0.0,
            evals: 0,
        }
    }
}

impl From<QuadratureResult> for PointEstimate {
    fn from(r: QuadratureResult) -> Self {
        PointEstimate {
            value: r.value,
            error: r.abs_error_estimate,
            evals: r.n_evals,
        }
    }
}

/// `∫_d f` to absolute tolerance `tol`.
pub fn integrate_line<F>(
    f: F,
    d: &Domain1D,
    hints: &[SingularityHint],
    tol: f64,
) -> Result<QuadratureResult, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    integrate_line_with(f, d, hints, &QuadOptions::abs(tol))
}

pub fn integrate_line_with<F>(
    f: F,
    d: &Domain1D,
    hints: &[SingularityHint],
    opts: &QuadOptions,
) -> Result<QuadratureResult, QuadratureError>
where
    F: Fn(f64) -> f64,
{
    integrate_line_nested::<QuadratureError, _>(|t| Ok(PointEstimate::exact(f(t))), d, hints, opts)
}

/// Core entry point: the integrand may fail and may report a pointwise
/// uncertainty, which is integrated alongside the value and added to the
/// error estimate.
pub fn integrate_line_nested<E, F>(
    f: F,
    d: &Domain1D,
    hints: &[SingularityHint],
    opts: &QuadOptions,
) -> Result<QuadratureResult, E>
where
    E: From<QuadratureError>,
    F: Fn(f64) -> Result<PointEstimate, E>,
{
    opts.validate()?;
    validate_hints(d, hints)?;
    let pieces = build_pieces(d, hints);
    adapt(&f, &pieces, opts)
}

/// `∬_d f`, iterated as an outer integral over x of inner integrals over y.
pub fn integrate_plane<F>(
    f: F,
    d: &Domain2D,
    hints_x: &[SingularityHint],
    hints_y: &[SingularityHint],
    tol: f64,
) -> Result<QuadratureResult, QuadratureError>
where
    F: Fn(f64, f64) -> f64,
{
    integrate_plane_with(f, d, hints_x, hints_y, &QuadOptions::abs(tol))
}

pub fn integrate_plane_with<F>(
    f: F,
    d: &Domain2D,
    hints_x: &[SingularityHint],
    hints_y: &[SingularityHint],
    opts: &QuadOptions,
) -> Result<QuadratureResult, QuadratureError>
where
    F: Fn(f64, f64) -> f64,
{
    integrate_plane_nested::<QuadratureError, _>(
        |x, y| Ok(PointEstimate::exact(f(x, y))),
        d,
        hints_x,
        hints_y,
        opts,
    )
}

/// Plane integral with a fallible, possibly uncertain integrand.
pub fn integrate_plane_nested<E, F>(
    f: F,
    d: &Domain2D,
    hints_x: &[SingularityHint],
    hints_y: &[SingularityHint],
    opts: &QuadOptions,
) -> Result<QuadratureResult, E>
where
    E: From<QuadratureError>,
    F: Fn(f64, f64) -> Result<PointEstimate, E>,
{
    opts.validate()?;
    validate_hints(&d.dy, hints_y)?;
    let inner = inner_options(opts, &d.dx);
    integrate_line_nested(
        |x| {
            let r = integrate_line_nested(|y| f(x, y), &d.dy, hints_y, &inner)?;
            Ok(PointEstimate::from(r))
        },
        &d.dx,
        hints_x,
        opts,
    )
}

/// Relative accuracy below which inner integrals are not pushed; without it
/// an absolute target can sit under the roundoff floor of a large inner
/// value and exhaust the budget.
const INNER_REL_FLOOR: f64 = 1e-12;

/// `∏ factors · ∏ |tᵢ|^{eᵢ}`, falling back to logarithms when the direct
/// product overflows or underflows part way (graded charts sample `t` down
/// to the subnormal range, where `|t|^{-e}` alone is infinite).
pub fn pow_product(factors: &[f64], powers: &[(f64, f64)]) -> f64 {
    let direct = factors.iter().product::<f64>()
        * powers
            .iter()
            .map(|&(t, e)| t.abs().powf(e))
            .product::<f64>();
    if direct.is_finite() && direct != 0.0 {
        return direct;
    }
    if factors.iter().any(|&f| f == 0.0 || f.is_nan()) {
        return if factors.iter().any(|f| f.is_nan()) {
            f64::NAN
        } else {
            0.0
        };
    }
    let sign: f64 = factors.iter().map(|f| f.signum()).product();
    let log = factors.iter().map(|f| f.abs().ln()).sum::<f64>()
        + powers
            .iter()
            .map(|&(t, e)| if e == 0.0 { 0.0 } else { e * t.abs().ln() })
            .sum::<f64>();
    sign * log.exp()
}

/// Tolerances for the inner integral of an iterated scheme: the outer rule
/// integrates the inner error estimates, so the inner budget is the outer
/// one spread over the outer extent (or a fixed fraction of it on
/// unbounded outer domains).
pub fn inner_options(outer: &QuadOptions, outer_domain: &Domain1D) -> QuadOptions {
    let spread = if outer_domain.is_bounded() {
        4.0 * (outer_domain.hi() - outer_domain.lo()).max(1.0)
    } else {
        100.0
    };
    QuadOptions {
        abs_tol: outer.abs_tol / spread,
        rel_tol: (outer.rel_tol * 0.1).max(INNER_REL_FLOOR),
        max_evals: outer.max_evals,
    }
}

fn validate_hints(d: &Domain1D, hints: &[SingularityHint]) -> Result<(), QuadratureError> {
    for h in hints {
        let bad = match h.location {
            Location::Point(x) => d.touches(x) && h.exponent >= 1.0,
            Location::PosInf => d.hi == f64::INFINITY && h.exponent <= 1.0,
            Location::NegInf => d.lo == f64::NEG_INFINITY && h.exponent <= 1.0,
        };
        if bad {
            return Err(QuadratureError::NonIntegrableHint {
                location: h.location,
                exponent: h.exponent,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
enum Chart {
    /// `t = a + (b - a) s`, `s ∈ (0, 1)`.
    Affine { a: f64, b: f64 },
    /// `t = sign · exp(la + (lb - la) s)`, `s ∈ (0, 1)`.
    LogAffine { sign: f64, la: f64, lb: f64 },
    /// `t = a + s / (1 - s)`, `s ∈ (0, 1)`.
    RayUp { a: f64 },
    /// `t = b - s / (1 - s)`, `s ∈ (0, 1)`.
    RayDown { b: f64 },
    /// `t = sign · exp(s / (1 - s²))`, `s ∈ (-LOG_S_MAX, LOG_S_MAX)`.
    LogRay { sign: f64 },
    /// `t = s / (1 - s²)`, `s ∈ (-1, 1)`.
    Line,
}

impl Chart {
    fn range(&self) -> (f64, f64) {
        match self {
            Chart::LogRay { .. } => (-LOG_S_MAX, LOG_S_MAX),
            Chart::Line => (-1.0, 1.0),
            _ => (0.0, 1.0),
        }
    }

    fn at(&self, s: f64) -> (f64, f64) {
        match *self {
            Chart::Affine { a, b } => (a + (b - a) * s, b - a),
            Chart::LogAffine { sign, la, lb } => {
                let e = (la + (lb - la) * s).exp();
                (sign * e, e * (lb - la))
            }
            Chart::RayUp { a } => {
                let w = 1.0 - s;
                (a + s / w, 1.0 / (w * w))
            }
            Chart::RayDown { b } => {
                let w = 1.0 - s;
                (b - s / w, 1.0 / (w * w))
            }
            Chart::LogRay { sign } => {
                let q = 1.0 - s * s;
                let e = (s / q).exp();
                (sign * e, e * (1.0 + s * s) / (q * q))
            }
            Chart::Line => {
                let q = 1.0 - s * s;
                (s / q, (1.0 + s * s) / (q * q))
            }
        }
    }

    /// Point at reference offset `w` from `s = 0`.
    fn from_start(&self, w: f64) -> (f64, f64) {
        self.at(w)
    }

    /// Point at reference offset `w` from `s = 1`, computed without
    /// forming `1 - w`.
    fn from_end(&self, w: f64) -> (f64, f64) {
        match *self {
            Chart::Affine { a, b } => (b - (b - a) * w, b - a),
            Chart::RayUp { a } => (a + (1.0 - w) / w, 1.0 / (w * w)),
            Chart::RayDown { b } => (b - (1.0 - w) / w, 1.0 / (w * w)),
            _ => self.at(1.0 - w),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Grade {
    Uniform,
    Start(f64),
    End(f64),
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    chart: Chart,
    s0: f64,
    s1: f64,
    grade: Grade,
    t_lo: f64,
    t_hi: f64,
}

impl Piece {
    /// Reference coordinate `r ∈ (0, 1)` to `(t, dt/dr)`.
    fn map(&self, r: f64) -> (f64, f64) {
        let len = self.s1 - self.s0;
        match self.grade {
            Grade::Uniform => {
                let (t, j) = self.chart.at(self.s0 + len * r);
                (t, j * len)
            }
            Grade::Start(k) => {
                let rk1 = r.powf(k - 1.0);
                let (t, j) = self.chart.from_start(len * rk1 * r);
                (t, j * len * k * rk1)
            }
            Grade::End(k) => {
                let rk1 = r.powf(k - 1.0);
                let (t, j) = self.chart.from_end(len * rk1 * r);
                (t, j * len * k * rk1)
            }
        }
    }
}

fn grading(gamma: f64) -> Option<f64> {
    (gamma > 0.0).then(|| (1.0 / (1.0 - gamma)).min(MAX_GRADING))
}

fn endpoint_exponent(hints: &[SingularityHint], x: f64) -> f64 {
    hints
        .iter()
        .filter(|h| h.at_point() == Some(x))
        .map(|h| h.exponent)
        .fold(0.0, f64::max)
}

fn tail_exponent(hints: &[SingularityHint], loc: Location) -> Option<f64> {
    hints
        .iter()
        .filter(|h| h.location == loc)
        .map(|h| h.exponent)
        .reduce(f64::min)
}

fn build_pieces(d: &Domain1D, hints: &[SingularityHint]) -> Vec<Piece> {
    let mut cuts: Vec<f64> = hints
        .iter()
        .filter_map(|h| h.at_point())
        .filter(|&x| d.contains(x))
        .collect();
    if d.kind() == DomainKind::FullLine && cuts.is_empty() {
        let slow = |loc| tail_exponent(hints, loc).is_some_and(|tau| tau < 2.0);
        if slow(Location::PosInf) || slow(Location::NegInf) {
            cuts.push(0.0);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let mut bounds = Vec::with_capacity(cuts.len() + 2);
    bounds.push(d.lo);
    bounds.extend(cuts);
    bounds.push(d.hi);

    let mut pieces = Vec::new();
    for w in bounds.windows(2) {
        segment_pieces(w[0], w[1], hints, &mut pieces);
    }
    pieces
}

fn segment_pieces(lo: f64, hi: f64, hints: &[SingularityHint], out: &mut Vec<Piece>) {
    let end_gamma = |tail: Location| {
        tail_exponent(hints, tail).map_or(0.0, |tau| if tau.is_finite() { 2.0 - tau } else { 0.0 })
    };
    let (chart, g_start, g_end) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            let (ga, gb) = (endpoint_exponent(hints, lo), endpoint_exponent(hints, hi));
            let same_side = lo > 0.0 || hi < 0.0;
            let (alo, ahi) = (lo.abs().min(hi.abs()), lo.abs().max(hi.abs()));
            if same_side && ga <= 0.0 && gb <= 0.0 && ahi / alo > LOG_CHART_RATIO {
                let sign = lo.signum();
                let (la, lb) = if sign > 0.0 {
                    (lo.ln(), hi.ln())
                } else {
                    ((-hi).ln(), (-lo).ln())
                };
                (Chart::LogAffine { sign, la, lb }, 0.0, 0.0)
            } else {
                (Chart::Affine { a: lo, b: hi }, ga, gb)
            }
        }
        (true, false) if lo == 0.0 => (Chart::LogRay { sign: 1.0 }, 0.0, 0.0),
        (true, false) => (
            Chart::RayUp { a: lo },
            endpoint_exponent(hints, lo),
            end_gamma(Location::PosInf).max(f64::MIN_POSITIVE),
        ),
        (false, true) if hi == 0.0 => (Chart::LogRay { sign: -1.0 }, 0.0, 0.0),
        (false, true) => (
            Chart::RayDown { b: hi },
            endpoint_exponent(hints, hi),
            end_gamma(Location::NegInf).max(f64::MIN_POSITIVE),
        ),
        (false, false) => (Chart::Line, 0.0, 0.0),
    };
    // Rays always carry an end grade (at least k = 1) so that points near the
    // infinite end are formed from the offset `w` rather than from `1 - w`.
    let (s0, s1) = chart.range();
    let piece = |s0, s1, grade| Piece {
        chart,
        s0,
        s1,
        grade,
        t_lo: lo,
        t_hi: hi,
    };
    match (grading(g_start), grading(g_end)) {
        (Some(ks), Some(ke)) => {
            let mid = 0.5 * (s0 + s1);
            out.push(piece(s0, mid, Grade::Start(ks)));
            out.push(piece(mid, s1, Grade::End(ke)));
        }
        (Some(ks), None) => out.push(piece(s0, s1, Grade::Start(ks))),
        (None, Some(ke)) => out.push(piece(s0, s1, Grade::End(ke))),
        (None, None) => out.push(piece(s0, s1, Grade::Uniform)),
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    piece: usize,
    ra: f64,
    rb: f64,
    value: f64,
    err: f64,
    depth: u32,
    parent_abs: f64,
    saturated: bool,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.err
            .total_cmp(&other.err)
            .then_with(|| other.piece.cmp(&self.piece))
            .then_with(|| other.ra.total_cmp(&self.ra))
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut scaled = err.abs();
    if res_asc != 0.0 && scaled != 0.0 {
        let scale = (200.0 * scaled / res_asc).powf(1.5);
        scaled = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        scaled = scaled.max(50.0 * f64::EPSILON * res_abs);
    }
    scaled
}

struct PanelEval {
    value: f64,
    err: f64,
    evals: usize,
    saturated: bool,
}

fn gk15<E, F>(f: &F, piece: &Piece, ra: f64, rb: f64) -> Result<PanelEval, E>
where
    E: From<QuadratureError>,
    F: Fn(f64) -> Result<PointEstimate, E>,
{
    let center = 0.5 * (ra + rb);
    let half = 0.5 * (rb - ra);
    let mut evals = 0usize;
    let mut saturated = false;
    let log_chart = matches!(piece.chart, Chart::LogRay { .. });
    let mut sample = |r: f64| -> Result<(f64, f64), E> {
        let (t, jac) = piece.map(r);
        if !(t > piece.t_lo && t < piece.t_hi) || jac == 0.0 || !jac.is_finite() {
            // Nodes beyond floating-point reach of an infinite end (or of the
            // origin under the exponential chart) are dropped; the panel is
            // marked so that a non-negligible value there is not trusted.
            if !t.is_finite() || !jac.is_finite() || (log_chart && t == 0.0) {
                saturated = true;
            }
            return Ok((0.0, 0.0));
        }
        let p = f(t)?;
        evals += 1 + p.evals;
        if !p.value.is_finite() {
            return Err(QuadratureError::NonFinite { at: t }.into());
        }
        Ok((p.value * jac, p.error.abs() * jac.abs()))
    };

    let mut fv = [0.0f64; 15];
    let mut unc = 0.0;
    let (fc, uc) = sample(center)?;
    fv[7] = fc;
    unc += WGK[7] * uc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let (f1, u1) = sample(center - dx)?;
        let (f2, u2) = sample(center + dx)?;
        fv[j] = f1;
        fv[14 - j] = f2;
        unc += WGK[j] * (u1 + u2);
    }

    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let s = fv[j] + fv[14 - j];
        res_k += WGK[j] * s;
        res_abs += WGK[j] * (fv[j].abs() + fv[14 - j].abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * s;
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv[j] - mean).abs() + (fv[14 - j] - mean).abs());
    }
    let h = half.abs();
    let mut err = rescale_error((res_k - res_g) * half, res_abs * h, res_asc * h) + unc * h;
    if saturated {
        err = err.max(res_abs * h);
    }
    Ok(PanelEval {
        value: res_k * half,
        err,
        evals,
        saturated,
    })
}

/// Remainder of the exponential chart beyond `|log|t|| = LOG_SPAN`,
/// modelled as `g(σ) ~ A e^{-κσ}` for the log-density `g = |t f(t)|`.
/// Returns the estimate and whether the density failed to decay.
fn log_tail_remainder<E, F>(f: &F, pieces: &[Piece]) -> (f64, bool)
where
    F: Fn(f64) -> Result<PointEstimate, E>,
{
    let density = |t: f64| match f(t) {
        Ok(p) if p.value.is_finite() => (p.value * t).abs(),
        _ => 0.0,
    };
    let mut remainder = 0.0;
    let mut stalled = false;
    for piece in pieces {
        let Chart::LogRay { sign } = piece.chart else {
            continue;
        };
        for dir in [1.0, -1.0] {
            let edge = density(sign * (dir * LOG_SPAN).exp());
            if edge == 0.0 {
                continue;
            }
            let inner = density(sign * (dir * (LOG_SPAN - 10.0)).exp());
            let kappa = if inner > 0.0 {
                (inner / edge).ln() / 10.0
            } else {
                0.0
            };
            if kappa > 0.05 {
                remainder += edge / kappa;
            } else {
                remainder += 20.0 * edge.max(inner);
                stalled = true;
            }
        }
    }
    (remainder, stalled)
}

fn adapt<E, F>(f: &F, pieces: &[Piece], opts: &QuadOptions) -> Result<QuadratureResult, E>
where
    E: From<QuadratureError>,
    F: Fn(f64) -> Result<PointEstimate, E>,
{
    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel> = Vec::new();
    let mut n_evals = 0usize;

    for (idx, piece) in pieces.iter().enumerate() {
        for k in 0..INITIAL_PANELS {
            let ra = k as f64 / INITIAL_PANELS as f64;
            let rb = (k + 1) as f64 / INITIAL_PANELS as f64;
            let pe = gk15(f, piece, ra, rb)?;
            n_evals += pe.evals;
            heap.push(Panel {
                piece: idx,
                ra,
                rb,
                value: pe.value,
                err: pe.err,
                depth: 0,
                parent_abs: f64::INFINITY,
                saturated: pe.saturated,
            });
        }
    }

    let sums = |heap: &BinaryHeap<Panel>, frozen: &[Panel]| {
        let mut v = 0.0;
        let mut e = 0.0;
        for p in heap.iter().chain(frozen.iter()) {
            v += p.value;
            e += p.err;
        }
        (v, e)
    };

    let (tail_err, tail_stalled) = log_tail_remainder(f, pieces);
    let (mut total, mut err_total) = sums(&heap, &frozen);
    err_total += tail_err;
    let mut frozen_err = tail_err;
    let mut converged = false;
    let mut iter = 0usize;
    loop {
        iter += 1;
        if iter.is_multiple_of(128) {
            (total, err_total) = sums(&heap, &frozen);
            err_total += tail_err;
        }
        let target = opts.target(total);
        if err_total <= target {
            (total, err_total) = sums(&heap, &frozen);
            err_total += tail_err;
            if err_total <= opts.target(total) {
                converged = true;
                break;
            }
        }
        if frozen_err > target || n_evals + 30 > opts.max_evals {
            break;
        }
        let Some(worst) = heap.pop() else { break };
        let piece = &pieces[worst.piece];
        let mid = 0.5 * (worst.ra + worst.rb);
        let unresolvable = worst.depth >= MAX_DEPTH
            || mid <= worst.ra
            || mid >= worst.rb
            || piece.map(worst.ra).0 == piece.map(worst.rb).0;
        if unresolvable {
            frozen_err += worst.err;
            frozen.push(worst);
            continue;
        }
        let left = gk15(f, piece, worst.ra, mid)?;
        let right = gk15(f, piece, mid, worst.rb)?;
        n_evals += left.evals + right.evals;
        total += left.value + right.value - worst.value;
        err_total += left.err + right.err - worst.err;
        for (ra, rb, pe) in [(worst.ra, mid, left), (mid, worst.rb, right)] {
            heap.push(Panel {
                piece: worst.piece,
                ra,
                rb,
                value: pe.value,
                err: pe.err,
                depth: worst.depth + 1,
                parent_abs: worst.value.abs(),
                saturated: pe.saturated,
            });
        }
    }

    let mut all: Vec<Panel> = heap.into_vec();
    all.extend(frozen);
    all.sort_by(|a, b| a.piece.cmp(&b.piece).then(a.ra.total_cmp(&b.ra)));
    let value: f64 = all.iter().map(|p| p.value).sum();
    let err: f64 = all.iter().map(|p| p.err).sum::<f64>() + tail_err;

    let diverging = !converged
        && (tail_stalled
            || all
                .iter()
                .max_by(|a, b| a.err.total_cmp(&b.err))
                .is_some_and(|w| {
                    let at_edge = w.ra == 0.0 || w.rb == 1.0;
                    w.saturated || (at_edge && w.depth >= 12 && w.value.abs() >= 0.9 * w.parent_abs)
                }));

    Ok(QuadratureResult {
        value,
        abs_error_estimate: err,
        n_evals,
        converged,
        diverging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kronrod_weights_integrate_polynomials() {
        // K15 is exact through degree 22, G7 through degree 13.
        let piece = Piece {
            chart: Chart::Affine { a: -1.0, b: 1.0 },
            s0: 0.0,
            s1: 1.0,
            grade: Grade::Uniform,
            t_lo: -1.0,
            t_hi: 1.0,
        };
        for deg in 0..=22 {
            let f = |t: f64| Ok::<_, QuadratureError>(PointEstimate::exact(t.powi(deg)));
            let pe = gk15(&f, &piece, 0.0, 1.0).unwrap();
            let exact = if deg % 2 == 1 {
                0.0
            } else {
                2.0 / (deg as f64 + 1.0)
            };
            assert!(close(pe.value, exact, 1e-14), "degree {deg}: {}", pe.value);
        }
        let wsum: f64 = WG[3] + 2.0 * (WG[0] + WG[1] + WG[2]);
        assert!(close(wsum, 2.0, 1e-15));
    }

    #[test]
    fn inverse_sqrt_with_hint() {
        let d = Domain1D::interval(0.0, 1.0).unwrap();
        let r = integrate_line(
            |t| t.powf(-0.5),
            &d,
            &[SingularityHint::point(0.0, 0.5)],
            1e-12,
        )
        .unwrap();
        assert!(r.converged);
        assert!(close(r.value, 2.0, 1e-11), "{}", r.value);
    }

    #[test]
    fn inverse_sqrt_without_hint_still_converges() {
        let d = Domain1D::interval(0.0, 1.0).unwrap();
        let r = integrate_line(|t| t.powf(-0.5), &d, &[], 1e-8).unwrap();
        assert!(r.converged);
        assert!(close(r.value, 2.0, 1e-7), "{}", r.value);
    }

    #[test]
    fn inverse_square_tail() {
        let d = Domain1D::new(1.0, f64::INFINITY).unwrap();
        let r = integrate_line(|t| t.powi(-2), &d, &[], 1e-12).unwrap();
        assert!(r.converged);
        assert!(close(r.value, 1.0, 1e-11));
        let r = integrate_line(
            |t| t.powf(-1.5),
            &d,
            &[SingularityHint::pos_tail(1.5)],
            1e-12,
        )
        .unwrap();
        assert!(close(r.value, 2.0, 1e-11), "{}", r.value);
    }

    #[test]
    fn gaussian_full_line() {
        let r = integrate_line(|t| (-t * t).exp(), &Domain1D::FULL_LINE, &[], 1e-12).unwrap();
        assert!(r.converged);
        assert!(close(r.value, std::f64::consts::PI.sqrt(), 1e-11));
    }

    #[test]
    fn half_lines_use_exponential_chart() {
        let r = integrate_line(
            |t: f64| t.powf(-0.5) / (1.0 + t),
            &Domain1D::POSITIVE,
            &[],
            1e-12,
        )
        .unwrap();
        assert!(close(r.value, std::f64::consts::PI, 1e-11), "{}", r.value);
        let r = integrate_line(|t: f64| t.exp(), &Domain1D::NEGATIVE, &[], 1e-12).unwrap();
        assert!(close(r.value, 1.0, 1e-11));
    }

    #[test]
    fn non_integrable_hints_rejected() {
        let d = Domain1D::interval(0.0, 1.0).unwrap();
        let e =
            integrate_line(|t| 1.0 / t, &d, &[SingularityHint::point(0.0, 1.0)], 1e-8).unwrap_err();
        assert!(matches!(e, QuadratureError::NonIntegrableHint { .. }));
        let d = Domain1D::new(1.0, f64::INFINITY).unwrap();
        let e =
            integrate_line(|t| 1.0 / t, &d, &[SingularityHint::pos_tail(1.0)], 1e-8).unwrap_err();
        assert!(matches!(e, QuadratureError::NonIntegrableHint { .. }));
    }

    #[test]
    fn harmonic_tail_flagged_as_diverging() {
        let d = Domain1D::new(1.0, f64::INFINITY).unwrap();
        let r = integrate_line(|t| 1.0 / t, &d, &[], 1e-8).unwrap();
        assert!(!r.converged, "{r:?}");
        assert!(r.diverging);
        let r = integrate_line(|t| 1.0 / (1.0 + t), &Domain1D::POSITIVE, &[], 1e-8).unwrap();
        assert!(!r.converged && r.diverging, "{r:?}");
    }

    #[test]
    fn bad_tolerance_and_domain() {
        assert!(matches!(
            Domain1D::new(1.0, 1.0),
            Err(QuadratureError::InvalidDomain { .. })
        ));
        assert!(Domain1D::interval(0.0, f64::INFINITY).is_err());
        let d = Domain1D::interval(0.0, 1.0).unwrap();
        assert!(matches!(
            integrate_line(|t| t, &d, &[], 0.0),
            Err(QuadratureError::InvalidTolerance { .. })
        ));
    }

    #[test]
    fn budget_exhaustion_reports_unconverged() {
        let d = Domain1D::interval(0.0, 1.0).unwrap();
        let opts = QuadOptions::abs(1e-14).with_max_evals(200);
        let r = integrate_line_with(|t: f64| (1.0 / (t + 1e-6)).sin(), &d, &[], &opts).unwrap();
        assert!(!r.converged);
        assert!(r.n_evals <= 200);
    }

    #[test]
    fn nan_integrand_is_an_error() {
        let d = Domain1D::interval(0.0, 1.0).unwrap();
        let e = integrate_line(|_| f64::NAN, &d, &[], 1e-8).unwrap_err();
        assert!(matches!(e, QuadratureError::NonFinite { .. }));
    }

    #[test]
    fn plane_examples() {
        let d = Domain2D::new(
            Domain1D::interval(0.0, 1.0).unwrap(),
            Domain1D::interval(0.0, 2.0).unwrap(),
        );
        let r = integrate_plane(|_, _| 1.0, &d, &[], &[], 1e-12).unwrap();
        assert!(close(r.value, 2.0, 1e-12));

        let ray = Domain1D::new(1.0, f64::INFINITY).unwrap();
        let d = Domain2D::new(ray, ray);
        let r = integrate_plane(|x, y| (x * y).powi(-2), &d, &[], &[], 1e-10).unwrap();
        assert!(r.converged);
        assert!(close(r.value, 1.0, 1e-9));

        let u: f64 = 0.1;
        let box_ = Domain1D::interval(u, 1.0 / u).unwrap();
        let d = Domain2D::new(box_, box_);
        let r = integrate_plane(|x, y| 1.0 / (x * y).abs(), &d, &[], &[], 1e-9).unwrap();
        let exact = (2.0 * 10f64.ln()).powi(2);
        assert!(close(r.value, exact, 1e-8), "{} vs {exact}", r.value);
    }

    #[test]
    fn domain_kinds() {
        assert_eq!(Domain1D::FULL_LINE.kind(), DomainKind::FullLine);
        assert_eq!(Domain1D::POSITIVE.kind(), DomainKind::PositiveHalfLine);
        assert_eq!(Domain1D::NEGATIVE.kind(), DomainKind::NegativeHalfLine);
        assert_eq!(
            Domain1D::interval(-1.0, 2.0).unwrap().kind(),
            DomainKind::Interval
        );
        assert_eq!(
            Domain1D::new(1.0, f64::INFINITY).unwrap().kind(),
            DomainKind::RayAbove
        );
        let d = Domain1D::interval(-1.0, 2.0).unwrap();
        assert_eq!(d.mirror(), Domain1D::interval(-2.0, 1.0).unwrap());
        let (neg, pos) = d.split_at_zero();
        assert_eq!(neg.unwrap(), Domain1D::interval(-1.0, 0.0).unwrap());
        assert_eq!(pos.unwrap(), Domain1D::interval(0.0, 2.0).unwrap());
    }
}
