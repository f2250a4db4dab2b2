//! Sharpness certificates. The extremal pair
//! `f_u = v^{-1/p}|x|^{-1/p}`, `g_u = v^{1/p}|x|^{-1/p'}` on
//! `u < |x| < 1/u` gives `L(u) = J(f_u, g_u)/(‖f_u‖ ‖g_u‖)`, a lower bound for
//! the operator norm that increases as `u → 0`. The inner `x`-integral of
//! `J` reduces to a logarithmic region measure with a closed form.

use rayon::prelude::*;
use thiserror::Error;

use crate::bounds::{BoundError, EnvelopeMode};
use crate::kernels::KernelSpec;
use crate::operator::{
    apply_1d_with, weighted_lp_norm, OperatorError, OperatorSpec1D, OperatorSpec2D,
    SampledFunction, SampledFunction2D,
};
use crate::quadrature::{
    inner_options, integrate_line_nested, pow_product, Domain1D, PointEstimate, QuadOptions,
    QuadratureError, QuadratureResult, SingularityHint,
};
use crate::weights::{Weight2D, WeightError, WeightModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("invalid parameters: {0}")]
    ParamError(String),
    #[error("test-pair norm {which} is {got}, expected {expected}")]
    NormMismatch {
        which: &'static str,
        got: f64,
        expected: f64,
    },
    #[error(
        "lower-bound curve decreases beyond its error bars between u = {u_prev} (L = {l_prev}) and u = {u_next} (L = {l_next})"
    )]
    MonotonicityViolation {
        u_prev: f64,
        l_prev: f64,
        u_next: f64,
        l_next: f64,
    },
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Bound(#[from] BoundError),
}

impl From<QuadratureError> for CertifyError {
    fn from(e: QuadratureError) -> Self {
        CertifyError::Operator(e.into())
    }
}

/// `{10^{-1}, 10^{-1.5}, …, 10^{-4}}`.
pub fn default_u_grid() -> Vec<f64> {
    (2..=8).map(|k| 10f64.powf(-(k as f64) / 2.0)).collect()
}

fn check_u(u: f64) -> Result<f64, CertifyError> {
    if u > 0.0 && u < 1.0 {
        Ok((1.0 / u).ln())
    } else {
        Err(CertifyError::ParamError(format!(
            "u must lie in (0, 1), got {u}"
        )))
    }
}

fn check_p(p: f64) -> Result<(), CertifyError> {
    if p > 1.0 && p.is_finite() {
        Ok(())
    } else {
        Err(CertifyError::ParamError(format!(
            "p must lie in (1, ∞), got {p}"
        )))
    }
}

/// `(u, 1/u) ∪ (-1/u, -u)`.
fn test_support(u: f64) -> Vec<Domain1D> {
    vec![
        Domain1D::new(-1.0 / u, -u).expect("u < 1"),
        Domain1D::new(u, 1.0 / u).expect("u < 1"),
    ]
}

#[derive(Debug, Clone)]
pub struct TestPair {
    pub u: f64,
    pub p: f64,
    pub weight: WeightModel,
    pub f: SampledFunction,
    pub g: SampledFunction,
    /// `‖f_u‖_{L^p_v}` and `‖g_u‖_{L^{p'}_{v^{1-p'}}}` as computed numerically.
    pub norm_f: QuadratureResult,
    pub norm_g: QuadratureResult,
}

impl TestPair {
    /// `4 log(1/u)`, the common value of `‖f_u‖^p` and `‖g_u‖^{p'}`.
    pub fn norm_power(&self) -> f64 {
        4.0 * (1.0 / self.u).ln()
    }

    /// `‖f_u‖ ‖g_u‖ = 4 log(1/u)`.
    pub fn norm_product(&self) -> f64 {
        self.norm_power()
    }
}

/// `v^{1-p'}`, the dual weight.
pub fn dual_weight(w: &WeightModel, p: f64) -> WeightModel {
    let e = 1.0 - p / (p - 1.0);
    let base = w.clone();
    let hints = w
        .hints()
        .into_iter()
        .map(|h| SingularityHint {
            exponent: h.exponent * e,
            ..h
        })
        .collect();
    WeightModel::function(
        format!("({})^(1-p')", w.id()),
        move |x| base.eval(x).map_or(f64::NAN, |v| v.powf(e)),
        hints,
    )
}

/// The extremal pair at level `u`, with both norm identities checked by
/// quadrature to `tol`.
pub fn make_test_pair(u: f64, p: f64, w: &WeightModel, tol: f64) -> Result<TestPair, CertifyError> {
    let l = check_u(u)?;
    check_p(p)?;
    let pp = p / (p - 1.0);
    let (wf, wg) = (w.clone(), w.clone());
    let mut hints = vec![
        SingularityHint::breakpoint(u),
        SingularityHint::breakpoint(-u),
        SingularityHint::breakpoint(1.0 / u),
        SingularityHint::breakpoint(-1.0 / u),
    ];
    hints.dedup();
    let f = SampledFunction::new(
        move |x: f64| {
            wf.eval(x)
                .map_or(f64::NAN, |v| v.powf(-1.0 / p) * x.abs().powf(-1.0 / p))
        },
        test_support(u),
        hints.clone(),
    )
    .named(format!("f_u(u={u})"));
    let g = SampledFunction::new(
        move |x: f64| {
            wg.eval(x)
                .map_or(f64::NAN, |v| v.powf(1.0 / p) * x.abs().powf(-1.0 / pp))
        },
        test_support(u),
        hints,
    )
    .named(format!("g_u(u={u})"));
    let norm_f = weighted_lp_norm(&f, w, p, &Domain1D::FULL_LINE, tol)?;
    let norm_g = weighted_lp_norm(&g, &dual_weight(w, p), pp, &Domain1D::FULL_LINE, tol)?;
    let expected = 4.0 * l;
    for (which, r, q) in [("f_u", &norm_f, p), ("g_u", &norm_g, pp)] {
        let got = r.value.powf(q);
        // ‖·‖^q = 4L, so a norm error δ moves ‖·‖^q by about q‖·‖^{q-1}δ.
        let slack = 10.0 * (tol + r.abs_error_estimate) * q * r.value.powf(q - 1.0);
        if !((got - expected).abs() <= slack.max(1e-12 * expected)) {
            return Err(CertifyError::NormMismatch {
                which,
                got,
                expected,
            });
        }
    }
    Ok(TestPair {
        u,
        p,
        weight: w.clone(),
        f,
        g,
        norm_f,
        norm_g,
    })
}

#[derive(Debug, Clone)]
pub struct TestPair2D {
    pub u: f64,
    pub p: f64,
    pub weight: Weight2D,
    pub f: SampledFunction2D,
    pub g: SampledFunction2D,
}

impl TestPair2D {
    /// `(4 log(1/u))²`.
    pub fn norm_product(&self) -> f64 {
        let l = (1.0 / self.u).ln();
        16.0 * l * l
    }
}

/// The planar extremal pair on `S × S`, `S = (u, 1/u) ∪ (-1/u, -u)`.
pub fn make_test_pair_2d(u: f64, p: f64, w: &Weight2D) -> Result<TestPair2D, CertifyError> {
    check_u(u)?;
    check_p(p)?;
    let pp = p / (p - 1.0);
    let support: Vec<_> = test_support(u)
        .into_iter()
        .flat_map(|a| {
            test_support(u)
                .into_iter()
                .map(move |b| crate::quadrature::Domain2D::new(a, b))
        })
        .collect();
    let hints = vec![
        SingularityHint::breakpoint(u),
        SingularityHint::breakpoint(-u),
        SingularityHint::breakpoint(1.0 / u),
        SingularityHint::breakpoint(-1.0 / u),
    ];
    let (wf, wg) = (w.clone(), w.clone());
    let f = SampledFunction2D::new(
        move |x, y| {
            wf.eval(x, y).map_or(f64::NAN, |v| {
                v.powf(-1.0 / p) * (x * y).abs().powf(-1.0 / p)
            })
        },
        support.clone(),
        hints.clone(),
        hints.clone(),
    );
    let g = SampledFunction2D::new(
        move |x, y| {
            wg.eval(x, y).map_or(f64::NAN, |v| {
                v.powf(1.0 / p) * (x * y).abs().powf(-1.0 / pp)
            })
        },
        support,
        hints.clone(),
        hints,
    );
    Ok(TestPair2D {
        u,
        p,
        weight: w.clone(),
        f,
        g,
    })
}

/// `‖f‖^p` of a planar function for a planar weight, over its support.
pub fn weighted_lp_norm_2d(
    f: &SampledFunction2D,
    w: &Weight2D,
    p: f64,
    tol: f64,
) -> Result<QuadratureResult, CertifyError> {
    let opts = QuadOptions::new(tol / f.support.len().max(1) as f64, tol);
    let mut total = QuadratureResult::zero();
    for d in &f.support {
        let inner = inner_options(&opts, &d.dx);
        let r = integrate_line_nested::<CertifyError, _>(
            |x| {
                let r = integrate_line_nested::<CertifyError, _>(
                    |y| {
                        Ok(PointEstimate::exact(pow_product(
                            &[w.eval(x, y)?],
                            &[(f.eval(x, y), p)],
                        )))
                    },
                    &d.dy,
                    &f.hints_y,
                    &inner,
                )?;
                Ok(PointEstimate::from(r))
            },
            &d.dx,
            &f.hints_x,
            &opts,
        )?;
        total = total.combine(r);
    }
    Ok(crate::operator::lp_root(total, p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionValue {
    pub t: f64,
    pub u: f64,
    pub measure: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionValue2D {
    pub t1: f64,
    pub t2: f64,
    pub u: f64,
    pub measure: f64,
}

/// `ξ(t) = |log|t||` on `u² < |t| < 1/u²`, `None` outside.
fn xi(t: f64, u: f64) -> Option<f64> {
    let a = t.abs();
    (a > u * u && a < 1.0 / (u * u)).then(|| a.ln().abs())
}

/// `∫ χ_{I_{t,u}}(y) dy/|y|` with `I_{t,u} = {y : y ∈ S, y/t ∈ S}`:
/// `4 log(1/u) - 2|log|t||` for `u² < |t| < 1/u²`, else 0.
pub fn region_measure_1d(t: f64, u: f64) -> Result<RegionValue, CertifyError> {
    let l = check_u(u)?;
    if t == 0.0 || !t.is_finite() {
        return Err(CertifyError::ParamError(format!(
            "t must be finite and non-zero, got {t}"
        )));
    }
    let measure = xi(t, u).map_or(0.0, |x| 4.0 * l - 2.0 * x);
    Ok(RegionValue { t, u, measure })
}

/// Planar region measure `(4L)² (1 - ξ(t₁)/(2L)) (1 - ξ(t₂)/(2L))`,
/// `L = log(1/u)`, zero when either `|tᵢ|` leaves `(u², 1/u²)`.
pub fn region_measure_2d(t1: f64, t2: f64, u: f64) -> Result<RegionValue2D, CertifyError> {
    let l = check_u(u)?;
    for t in [t1, t2] {
        if t == 0.0 || !t.is_finite() {
            return Err(CertifyError::ParamError(format!(
                "t must be finite and non-zero, got {t}"
            )));
        }
    }
    let measure = match (xi(t1, u), xi(t2, u)) {
        (Some(a), Some(b)) => 16.0 * l * l * (1.0 - a / (2.0 * l)) * (1.0 - b / (2.0 * l)),
        _ => 0.0,
    };
    Ok(RegionValue2D { t1, t2, u, measure })
}

fn in_test_set(y: f64, u: f64) -> f64 {
    (u < y.abs() && y.abs() < 1.0 / u) as u8 as f64
}

fn overlap_breaks(t: f64, u: f64) -> Vec<SingularityHint> {
    let a = t.abs();
    [a * u, a / u, -a * u, -a / u]
        .into_iter()
        .map(SingularityHint::breakpoint)
        .collect()
}

/// [`region_measure_1d`] by quadrature of the indicator of `I_{t,u}` itself.
pub fn region_measure_1d_direct(
    t: f64,
    u: f64,
    tol: f64,
) -> Result<QuadratureResult, CertifyError> {
    region_measure_1d(t, u)?;
    let hints = overlap_breaks(t, u);
    let mut total = QuadratureResult::zero();
    for d in test_support(u) {
        let r = crate::quadrature::integrate_line(
            |y| in_test_set(y / t, u) / y.abs(),
            &d,
            &hints,
            tol / 2.0,
        )?;
        total = total.combine(r);
    }
    Ok(total)
}

/// [`region_measure_2d`] by iterated quadrature over `S × S`.
pub fn region_measure_2d_direct(
    t1: f64,
    t2: f64,
    u: f64,
    tol: f64,
) -> Result<QuadratureResult, CertifyError> {
    region_measure_2d(t1, t2, u)?;
    let (h1, h2) = (overlap_breaks(t1, u), overlap_breaks(t2, u));
    let mut total = QuadratureResult::zero();
    for a in test_support(u) {
        for b in test_support(u) {
            let r = crate::quadrature::integrate_plane(
                |y1, y2| in_test_set(y1 / t1, u) * in_test_set(y2 / t2, u) / (y1 * y2).abs(),
                &crate::quadrature::Domain2D::new(a, b),
                &h1,
                &h2,
                tol / 4.0,
            )?;
            total = total.combine(r);
        }
    }
    Ok(total)
}

/// Sign-split view of a support piece: sign and `|x|`-range.
#[derive(Debug, Clone, Copy)]
struct SignedPiece {
    sign: f64,
    lo: f64,
    hi: f64,
}

fn signed_pieces(support: &[Domain1D]) -> Vec<SignedPiece> {
    support
        .iter()
        .flat_map(|d| {
            let (n, p) = d.split_at_zero();
            n.map(|n| SignedPiece {
                sign: -1.0,
                lo: -n.hi(),
                hi: -n.lo(),
            })
            .into_iter()
            .chain(p.map(|p| SignedPiece {
                sign: 1.0,
                lo: p.lo(),
                hi: p.hi(),
            }))
        })
        .collect()
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        f64::INFINITY
    } else if b.is_infinite() {
        0.0
    } else {
        a / b
    }
}

/// `J = ∫ |φ(t)| |t|^{-(2α+2)} (∫ f(x/t) g(x) dx) dt`.
pub fn bilinear_form(
    op: &OperatorSpec1D,
    f: &SampledFunction,
    g: &SampledFunction,
    tol: f64,
) -> Result<QuadratureResult, CertifyError> {
    let c = op.dilation_power();
    let fs = signed_pieces(&f.support);
    let gs = signed_pieces(&g.support);
    // t-sets where x ∈ B and x/t ∈ A overlap: |t| ∈ (|B|.lo/|A|.hi, |B|.hi/|A|.lo).
    let mut t_sets: Vec<(Domain1D, Vec<f64>)> = Vec::new();
    for a in &fs {
        for b in &gs {
            let (lo, hi) = (ratio(b.lo, a.hi), ratio(b.hi, a.lo));
            if !(lo < hi) {
                continue;
            }
            let sign = a.sign * b.sign;
            let d = if sign > 0.0 {
                Domain1D::new(lo, hi)
            } else {
                Domain1D::new(-hi, -lo)
            }
            .expect("ordered");
            let Some(d) = d.intersect(&op.kernel.support) else {
                continue;
            };
            let kinks = [ratio(b.lo, a.lo), ratio(b.hi, a.hi)]
                .into_iter()
                .filter(|k| k.is_finite() && *k > 0.0)
                .map(|k| sign * k)
                .collect();
            t_sets.push((d, kinks));
        }
    }
    let t_sets = merge_sets(t_sets);
    let mut total = QuadratureResult::zero();
    if t_sets.is_empty() {
        return Ok(total);
    }
    let opts = QuadOptions::abs(tol / t_sets.len() as f64);
    let gh: Vec<SingularityHint> = g
        .hints
        .iter()
        .filter(|h| h.at_point().is_some())
        .copied()
        .collect();
    let fh: Vec<SingularityHint> = f
        .hints
        .iter()
        .filter(|h| h.at_point().is_some())
        .copied()
        .collect();
    for (d, kinks) in &t_sets {
        let mut hints: Vec<SingularityHint> = op
            .kernel
            .hints
            .iter()
            .filter(|h| h.at_point().is_some())
            .copied()
            .collect();
        hints.extend(kinks.iter().map(|&k| SingularityHint::breakpoint(k)));
        let inner_opts = inner_options(&opts, d);
        let r = integrate_line_nested::<CertifyError, _>(
            |t| {
                let kv = op.kernel.abs_eval(t);
                if kv == 0.0 {
                    return Ok(PointEstimate::exact(0.0));
                }
                let inner = inner_product_dilated(f, g, &fs, &gs, &fh, &gh, t, &inner_opts)?;
                Ok(PointEstimate {
                    value: pow_product(&[kv, inner.value], &[(t, -c)]),
                    error: pow_product(&[kv, inner.abs_error_estimate], &[(t, -c)]),
                    evals: inner.n_evals,
                })
            },
            d,
            &hints,
            &opts,
        )?;
        total = total.combine(r);
    }
    Ok(total)
}

/// Disjoint union of the outer sets; the inner integral already sums over
/// every piece pair, so overlapping sets must not be visited twice.
fn merge_sets(mut sets: Vec<(Domain1D, Vec<f64>)>) -> Vec<(Domain1D, Vec<f64>)> {
    sets.sort_by(|a, b| a.0.lo().total_cmp(&b.0.lo()));
    let mut out: Vec<(Domain1D, Vec<f64>)> = Vec::new();
    for (d, kinks) in sets {
        match out.last_mut() {
            Some((last, k)) if d.lo() <= last.hi() && (d.lo() >= 0.0) == (last.lo() >= 0.0) => {
                if d.hi() > last.hi() {
                    *last = Domain1D::new(last.lo(), d.hi()).expect("ordered");
                }
                k.extend(kinks);
            }
            _ => out.push((d, kinks)),
        }
    }
    out
}

/// `∫ f(x/t) g(x) dx` over the overlap of `supp g` with `t · supp f`.
#[allow(clippy::too_many_arguments)]
fn inner_product_dilated(
    f: &SampledFunction,
    g: &SampledFunction,
    fs: &[SignedPiece],
    gs: &[SignedPiece],
    fh: &[SingularityHint],
    gh: &[SingularityHint],
    t: f64,
    opts: &QuadOptions,
) -> Result<QuadratureResult, CertifyError> {
    let mut total = QuadratureResult::zero();
    for a in fs {
        for b in gs {
            if a.sign * b.sign * t.signum() < 0.0 {
                continue;
            }
            let at = t.abs();
            let (lo, hi) = (b.lo.max(a.lo * at), b.hi.min(a.hi * at));
            if !(lo < hi) {
                continue;
            }
            let d = if b.sign > 0.0 {
                Domain1D::new(lo, hi)
            } else {
                Domain1D::new(-hi, -lo)
            }
            .expect("ordered");
            let mut hints: Vec<SingularityHint> = gh.to_vec();
            hints.extend(fh.iter().map(|h| SingularityHint {
                location: crate::quadrature::Location::Point(h.at_point().unwrap() * t),
                exponent: h.exponent,
            }));
            let r = integrate_line_nested::<CertifyError, _>(
                |x| Ok(PointEstimate::exact(f.eval(x / t) * g.eval(x))),
                &d,
                &hints,
                opts,
            )?;
            total = total.combine(r);
        }
    }
    Ok(total)
}

/// `J` in the other order, `∫ g(x) H f(x) dx`; a Fubini cross-check of
/// [`bilinear_form`] for `g` with bounded support.
pub fn bilinear_form_swapped(
    op: &OperatorSpec1D,
    f: &SampledFunction,
    g: &SampledFunction,
    tol: f64,
) -> Result<QuadratureResult, CertifyError> {
    let opts = QuadOptions::abs(tol / g.support.len().max(1) as f64);
    let mut total = QuadratureResult::zero();
    for d in &g.support {
        let inner = inner_options(&opts, d);
        let r = integrate_line_nested::<CertifyError, _>(
            |x| {
                let gx = g.eval(x);
                if gx == 0.0 {
                    return Ok(PointEstimate::exact(0.0));
                }
                let h = apply_1d_with(op, f, x, &inner)?;
                Ok(PointEstimate {
                    value: gx * h.value,
                    error: gx.abs() * h.abs_error_estimate,
                    evals: h.n_evals,
                })
            },
            d,
            &g.hints,
            &opts,
        )?;
        total = total.combine(r);
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBoundPoint {
    pub u: f64,
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

/// `L(u) = J(f_u, g_u) / (‖f_u‖ ‖g_u‖)` with the true weight inside `J`.
pub fn lower_bound_value(
    op: &OperatorSpec1D,
    w: &WeightModel,
    p: f64,
    u: f64,
    tol: f64,
) -> Result<LowerBoundPoint, CertifyError> {
    let pair = make_test_pair(u, p, w, tol)?;
    let norm = pair.norm_product();
    let j = bilinear_form(op, &pair.f, &pair.g, tol * norm)?;
    Ok(LowerBoundPoint {
        u,
        value: j.value / norm,
        error: j.abs_error_estimate / norm,
        converged: j.converged,
    })
}

/// The relaxed certificate: the weight ratio inside `J` replaced by its
/// infimum envelope, so `J ≥ ∫ |φ(t)| |t|^{1/p-(2α+2)} inf_y(v(ty)/v(y))^{1/p} m(t) dt`
/// with `m` the region measure.
pub fn lower_bound_relaxed(
    op: &OperatorSpec1D,
    w: &WeightModel,
    p: f64,
    u: f64,
    tol: f64,
) -> Result<LowerBoundPoint, CertifyError> {
    let l = check_u(u)?;
    check_p(p)?;
    let norm = 4.0 * l;
    let c = op.dilation_power();
    let mut total = QuadratureResult::zero();
    let (lo, hi) = (u * u, 1.0 / (u * u));
    let windows = [
        Domain1D::new(-hi, -lo).unwrap(),
        Domain1D::new(lo, hi).unwrap(),
    ];
    for win in windows {
        let Some(d) = win.intersect(&op.kernel.support) else {
            continue;
        };
        let mut hints: Vec<SingularityHint> = op
            .kernel
            .hints
            .iter()
            .filter(|h| h.at_point().is_some())
            .copied()
            .collect();
        hints.push(SingularityHint::breakpoint(win.lo().signum()));
        let r = integrate_line_nested::<CertifyError, _>(
            |t| {
                let kv = op.kernel.abs_eval(t);
                if kv == 0.0 {
                    return Ok(PointEstimate::exact(0.0));
                }
                let env = w.ratio_envelope(t)?.inf_ratio;
                let m = region_measure_1d(t, u)?.measure;
                Ok(PointEstimate::exact(
                    kv * t.abs().powf(1.0 / p - c) * env.powf(1.0 / p) * m,
                ))
            },
            &d,
            &hints,
            &QuadOptions::abs(tol * norm / 2.0),
        )?;
        total = total.combine(r);
    }
    Ok(LowerBoundPoint {
        u,
        value: total.value / norm,
        error: total.abs_error_estimate / norm,
        converged: total.converged,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowerBoundCurve {
    pub points: Vec<LowerBoundPoint>,
    /// `L` at the smallest `u`.
    pub limit_estimate: f64,
    /// Limit of the fit `L(u) ≈ A - B/log(1/u)` through the last two points.
    pub extrapolated_limit: Option<f64>,
}

fn check_u_list(u_list: &[f64]) -> Result<(), CertifyError> {
    if u_list.is_empty() {
        return Err(CertifyError::ParamError("empty u grid".into()));
    }
    for &u in u_list {
        check_u(u)?;
    }
    if u_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(CertifyError::ParamError(
            "u grid must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

fn assemble_curve(points: Vec<LowerBoundPoint>) -> Result<LowerBoundCurve, CertifyError> {
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b.value < a.value - (a.error + b.error) {
            return Err(CertifyError::MonotonicityViolation {
                u_prev: a.u,
                l_prev: a.value,
                u_next: b.u,
                l_next: b.value,
            });
        }
    }
    let last = *points.last().expect("non-empty");
    let extrapolated_limit = (points.len() >= 2).then(|| {
        let a = points[points.len() - 2];
        let (x1, x2) = (1.0 / (1.0 / a.u).ln(), 1.0 / (1.0 / last.u).ln());
        (last.value * x1 - a.value * x2) / (x1 - x2)
    });
    Ok(LowerBoundCurve {
        limit_estimate: last.value,
        extrapolated_limit,
        points,
    })
}

/// `L(u)` over a decreasing grid, evaluated in parallel.
pub fn lower_bound_curve(
    op: &OperatorSpec1D,
    w: &WeightModel,
    p: f64,
    u_list: &[f64],
    tol: f64,
) -> Result<LowerBoundCurve, CertifyError> {
    check_u_list(u_list)?;
    let points = u_list
        .par_iter()
        .map(|&u| lower_bound_value(op, w, p, u, tol))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_curve(points)
}

/// [`lower_bound_relaxed`] over a decreasing grid.
pub fn lower_bound_curve_relaxed(
    op: &OperatorSpec1D,
    w: &WeightModel,
    p: f64,
    u_list: &[f64],
    tol: f64,
) -> Result<LowerBoundCurve, CertifyError> {
    check_u_list(u_list)?;
    let points = u_list
        .par_iter()
        .map(|&u| lower_bound_relaxed(op, w, p, u, tol))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_curve(points)
}

/// Planar `L(u)`. For multiplicative weights the inner integral is exactly
/// `h(t)^{1/p} |t₁t₂|^{1/p}` times the region measure; otherwise the infimum
/// envelope stands in for the ratio and the value is the relaxed bound.
pub fn lower_bound_value_2d(
    op: &OperatorSpec2D,
    w: &Weight2D,
    p: f64,
    u: f64,
    tol: f64,
) -> Result<(LowerBoundPoint, bool), CertifyError> {
    let l = check_u(u)?;
    check_p(p)?;
    let norm = 16.0 * l * l;
    let c = op.dilation_power();
    let exact = w.is_multiplicative();
    let (lo, hi) = (u * u, 1.0 / (u * u));
    let wins = [
        Domain1D::new(-hi, -lo).unwrap(),
        Domain1D::new(lo, hi).unwrap(),
    ];
    let k = &op.kernel;
    let mut rects = Vec::new();
    for a in wins {
        let Some(dx) = a.intersect(&k.support.dx) else {
            continue;
        };
        for b in wins {
            if let Some(dy) = b.intersect(&k.support.dy) {
                rects.push((dx, dy));
            }
        }
    }
    let mut total = QuadratureResult::zero();
    if rects.is_empty() {
        return Ok((
            LowerBoundPoint {
                u,
                value: 0.0,
                error: 0.0,
                converged: true,
            },
            exact,
        ));
    }
    let opts = QuadOptions::abs(tol * norm / rects.len() as f64);
    let axis_hints = |d: &Domain1D, hs: &[SingularityHint]| {
        let mut h: Vec<SingularityHint> = hs
            .iter()
            .filter(|h| h.at_point().is_some())
            .copied()
            .collect();
        h.push(SingularityHint::breakpoint(d.lo().signum()));
        h
    };
    let (hx_src, hy_src): (Vec<_>, Vec<_>) = match &k.tensor {
        Some((k1, k2)) => (k1.hints.clone(), k2.hints.clone()),
        None => (k.hints_x.clone(), k.hints_y.clone()),
    };
    for (dx, dy) in &rects {
        let (hx, hy) = (axis_hints(dx, &hx_src), axis_hints(dy, &hy_src));
        let inner = inner_options(&opts, dx);
        let r = integrate_line_nested::<CertifyError, _>(
            |t1| {
                let r = integrate_line_nested::<CertifyError, _>(
                    |t2| {
                        let kv = k.abs_eval(t1, t2);
                        if kv == 0.0 {
                            return Ok(PointEstimate::exact(0.0));
                        }
                        let (_, inf, _) = w.ratio_envelope(t1, t2)?;
                        let m = region_measure_2d(t1, t2, u)?.measure;
                        Ok(PointEstimate::exact(
                            kv * (t1 * t2).abs().powf(1.0 / p - c) * inf.powf(1.0 / p) * m,
                        ))
                    },
                    dy,
                    &hy,
                    &inner,
                )?;
                Ok(PointEstimate::from(r))
            },
            dx,
            &hx,
            &opts,
        )?;
        total = total.combine(r);
    }
    Ok((
        LowerBoundPoint {
            u,
            value: total.value / norm,
            error: total.abs_error_estimate / norm,
            converged: total.converged,
        },
        exact,
    ))
}

pub fn lower_bound_curve_2d(
    op: &OperatorSpec2D,
    w: &Weight2D,
    p: f64,
    u_list: &[f64],
    tol: f64,
) -> Result<(LowerBoundCurve, bool), CertifyError> {
    check_u_list(u_list)?;
    let results = u_list
        .par_iter()
        .map(|&u| lower_bound_value_2d(op, w, p, u, tol))
        .collect::<Result<Vec<_>, _>>()?;
    let exact = results.iter().all(|r| r.1);
    Ok((
        assemble_curve(results.into_iter().map(|r| r.0).collect())?,
        exact,
    ))
}

/// `A_inf` for comparing against a curve; shorthand used by reports.
pub fn a_inf(op: &OperatorSpec1D, w: &WeightModel, p: f64, tol: f64) -> Result<f64, CertifyError> {
    Ok(crate::bounds::bound_a(op, w, p, EnvelopeMode::Inf, tol)?.value)
}

/// Kernel whose `J` with the test pair is zero; used by trivial examples.
pub fn zero_operator(alpha: f64) -> OperatorSpec1D {
    OperatorSpec1D::new(alpha, KernelSpec::zero())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hardy() -> OperatorSpec1D {
        OperatorSpec1D::new(-0.5, KernelSpec::preset("hardy").unwrap())
    }

    /// `L(u)` for the Hardy kernel, `v ≡ 1`, `p = 2`, in closed form.
    fn hardy_curve_exact(u: f64) -> f64 {
        2.0 - 2.0 * (1.0 - u) / (1.0 / u).ln()
    }

    #[test]
    fn test_pair_norms() {
        let pair = make_test_pair(0.1, 2.0, &WeightModel::unit(), 1e-10).unwrap();
        assert!((pair.norm_f.value.powi(2) - 4.0 * 10f64.ln()).abs() < 1e-8);
        assert!((pair.norm_power() - 9.21034).abs() < 1e-5);
        for w in [
            WeightModel::power(0.7),
            WeightModel::dunkl(0.3),
            WeightModel::tabulate("1+|x|", |x: f64| 1.0 + x.abs()).unwrap(),
        ] {
            let pair = make_test_pair(0.05, 3.0, &w, 1e-10).unwrap();
            let expect = 4.0 * 20f64.ln();
            assert!((pair.norm_f.value.powf(3.0) - expect).abs() < 1e-7, "{w:?}");
            assert!((pair.norm_g.value.powf(1.5) - expect).abs() < 1e-7, "{w:?}");
        }
        assert!(make_test_pair(1.0, 2.0, &WeightModel::unit(), 1e-8).is_err());
        let near_one = make_test_pair(0.999, 2.0, &WeightModel::unit(), 1e-12).unwrap();
        assert!(near_one.norm_power() < 0.005);
    }

    #[test]
    fn test_pair_2d_norm() {
        let pair = make_test_pair_2d(0.1, 2.0, &Weight2D::unit()).unwrap();
        let n = weighted_lp_norm_2d(&pair.f, &Weight2D::unit(), 2.0, 1e-8).unwrap();
        assert!((n.value.powi(2) - 84.830).abs() < 1e-3, "{n:?}");
    }

    #[test]
    fn region_examples() {
        let r = region_measure_1d(2.0, 0.1).unwrap().measure;
        assert!((r - 7.82405).abs() < 1e-5, "{r}");
        assert_eq!(region_measure_1d(100.0, 0.1).unwrap().measure, 0.0);
        assert_eq!(
            region_measure_1d(1.0, 0.3).unwrap().measure,
            4.0 * (1.0f64 / 0.3).ln()
        );
        assert!(region_measure_1d(0.0, 0.3).is_err());
        assert!(region_measure_1d(1.0, 1.5).is_err());
        let r = region_measure_2d(2.0, 2.0, 0.1).unwrap().measure;
        assert!((r - 61.22).abs() < 5e-3, "{r}");
        assert_eq!(region_measure_2d(2.0, 200.0, 0.1).unwrap().measure, 0.0);
        let l = (1.0f64 / 0.2).ln();
        assert!((region_measure_2d(1.0, 1.0, 0.2).unwrap().measure - 16.0 * l * l).abs() < 1e-12);
    }

    #[test]
    fn bilinear_form_matches_region_oracle() {
        let u: f64 = 0.1;
        let pair = make_test_pair(u, 2.0, &WeightModel::unit(), 1e-10).unwrap();
        let j = bilinear_form(&hardy(), &pair.f, &pair.g, 1e-8).unwrap();
        let oracle = crate::quadrature::integrate_line(
            |t: f64| t.powf(-1.5) * region_measure_1d(t, u).unwrap().measure,
            &Domain1D::new(1.0, 100.0).unwrap(),
            &[],
            1e-10,
        )
        .unwrap();
        assert!((j.value - oracle.value).abs() < 2e-8, "{j:?} {oracle:?}");
        assert!((j.value / pair.norm_product() - hardy_curve_exact(u)).abs() < 1e-9);
    }

    #[test]
    fn bilinear_orders_agree() {
        let e = KernelSpec::piecewise(
            None,
            vec![crate::kernels::PowerExpTerm {
                c: 1.0,
                a: 1.0,
                b: 2.0,
                lo: 0.0,
                hi: f64::INFINITY,
            }],
        )
        .unwrap();
        let op = OperatorSpec1D::new(-0.5, e);
        let f = SampledFunction::indicator(1.0, 2.0).unwrap();
        let g = SampledFunction::indicator(1.0, 2.0).unwrap();
        let a = bilinear_form(&op, &f, &g, 1e-10).unwrap();
        let b = bilinear_form_swapped(&op, &f, &g, 1e-10).unwrap();
        assert!((a.value - b.value).abs() < 1e-8, "{a:?} {b:?}");
        assert!(a.value > 0.0);
        let z = bilinear_form(&zero_operator(-0.5), &f, &g, 1e-10).unwrap();
        assert_eq!(z.value, 0.0);
    }

    #[test]
    fn hardy_curve_points() {
        for u in [1e-1, 1e-2, 1e-3] {
            let p = lower_bound_value(&hardy(), &WeightModel::unit(), 2.0, u, 1e-9).unwrap();
            assert!(
                (p.value - hardy_curve_exact(u)).abs() < 1e-7,
                "u={u}: {p:?}"
            );
        }
    }

    #[test]
    fn relaxed_equals_full_for_unit_weight() {
        let u = 0.05;
        let a = lower_bound_value(&hardy(), &WeightModel::unit(), 2.0, u, 1e-9).unwrap();
        let b = lower_bound_relaxed(&hardy(), &WeightModel::unit(), 2.0, u, 1e-9).unwrap();
        assert!((a.value - b.value).abs() < 1e-7);
        let w = WeightModel::tabulate("1+|x|", |x: f64| 1.0 + x.abs()).unwrap();
        let full = lower_bound_value(&hardy(), &w, 2.0, u, 1e-8).unwrap();
        let relaxed = lower_bound_relaxed(&hardy(), &w, 2.0, u, 1e-8).unwrap();
        assert!(relaxed.value <= full.value + full.error + relaxed.error + 1e-9);
    }

    #[test]
    fn curve_checks() {
        let c =
            lower_bound_curve(&hardy(), &WeightModel::unit(), 2.0, &[1e-1, 1e-2], 1e-9).unwrap();
        assert!(c.points[1].value > c.points[0].value);
        assert_eq!(c.limit_estimate, c.points[1].value);
        assert!(
            lower_bound_curve(&hardy(), &WeightModel::unit(), 2.0, &[1e-2, 1e-1], 1e-9).is_err()
        );
        let z = lower_bound_curve(
            &zero_operator(-0.5),
            &WeightModel::unit(),
            2.0,
            &[0.1, 0.01],
            1e-9,
        )
        .unwrap();
        assert!(z.points.iter().all(|p| p.value == 0.0));
        assert_eq!(default_u_grid().len(), 7);
        assert!((default_u_grid()[6] - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn curve_violation_is_reported() {
        let pts = vec![
            LowerBoundPoint {
                u: 0.1,
                value: 1.5,
                error: 1e-6,
                converged: true,
            },
            LowerBoundPoint {
                u: 0.01,
                value: 1.4,
                error: 1e-6,
                converged: true,
            },
        ];
        assert!(matches!(
            assemble_curve(pts),
            Err(CertifyError::MonotonicityViolation { .. })
        ));
    }

    #[test]
    fn planar_curve_exact_for_unit_weight() {
        let h = KernelSpec::preset("hardy").unwrap();
        let op = OperatorSpec2D::new(-0.5, crate::kernels::Kernel2DSpec::tensor(h.clone(), h));
        let (p, exact) = lower_bound_value_2d(&op, &Weight2D::unit(), 2.0, 0.1, 1e-8).unwrap();
        assert!(exact);
        let one = hardy_curve_exact(0.1);
        assert!((p.value - one * one).abs() < 1e-6, "{p:?}");
    }
}
