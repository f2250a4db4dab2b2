//! Kernels `φ` of the Hausdorff-type averaging: presets, the `ψ → φ`
//! substitution `φ(s) = ψ(1/s)/s`, piecewise power-exponential kernels, and
//! `L¹` checks.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::quadrature::{
    integrate_line, Domain1D, Domain2D, Location, QuadratureError, QuadratureResult,
    SingularityHint,
};

pub type KernelFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type KernelFn2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub const PRESETS: [&str; 2] = ["hardy", "adjoint_hardy"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("unknown kernel preset {0:?} (expected one of hardy, adjoint_hardy)")]
    UnknownPreset(String),
    #[error("kernel {name} is not integrable (estimate {value} after {n_evals} evaluations)")]
    NonIntegrable {
        name: String,
        value: f64,
        n_evals: usize,
    },
    #[error("invalid kernel: {0}")]
    Invalid(String),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// A one-dimensional kernel. Only `|φ|` enters the operator.
#[derive(Clone)]
pub struct KernelSpec {
    pub name: Option<String>,
    pub support: Domain1D,
    pub hints: Vec<SingularityHint>,
    eval: KernelFn,
}

impl fmt::Debug for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSpec")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("hints", &self.hints)
            .finish_non_exhaustive()
    }
}

/// `c·|t|^a·e^{-b|t|}` on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerExpTerm {
    pub c: f64,
    pub a: f64,
    pub b: f64,
    pub lo: f64,
    pub hi: f64,
}

impl PowerExpTerm {
    pub fn eval(&self, t: f64) -> f64 {
        if t < self.lo || t > self.hi {
            return 0.0;
        }
        let at = t.abs();
        let exp = if self.b == 0.0 {
            1.0
        } else {
            (-self.b * at).exp()
        };
        let pow = if self.a == 0.0 { 1.0 } else { at.powf(self.a) };
        self.c * pow * exp
    }

    fn hints(&self) -> Vec<SingularityHint> {
        let mut h = Vec::new();
        for end in [self.lo, self.hi] {
            if end == 0.0 {
                h.push(SingularityHint::point(0.0, -self.a));
            } else if end.is_finite() {
                h.push(SingularityHint::breakpoint(end));
            }
        }
        if self.lo < 0.0 && self.hi > 0.0 && self.a != 0.0 {
            h.push(SingularityHint::point(0.0, -self.a));
        }
        let tail = if self.b > 0.0 { f64::INFINITY } else { -self.a };
        if self.hi == f64::INFINITY {
            h.push(SingularityHint::pos_tail(tail));
        }
        if self.lo == f64::NEG_INFINITY {
            h.push(SingularityHint::neg_tail(tail));
        }
        h
    }
}

impl KernelSpec {
    pub fn new(
        name: Option<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        support: Domain1D,
        hints: Vec<SingularityHint>,
    ) -> Self {
        KernelSpec {
            name,
            support,
            hints,
            eval: Arc::new(eval),
        }
    }

    pub fn preset(name: &str) -> Result<Self, KernelError> {
        match name {
            "hardy" => Ok(KernelSpec::new(
                Some("hardy".into()),
                |t| if t > 1.0 { 1.0 / t } else { 0.0 },
                Domain1D::new(1.0, f64::INFINITY)?,
                vec![SingularityHint::pos_tail(1.0)],
            )),
            "adjoint_hardy" => Ok(KernelSpec::new(
                Some("adjoint_hardy".into()),
                |t| if (0.0..=1.0).contains(&t) { 1.0 } else { 0.0 },
                Domain1D::interval(0.0, 1.0)?,
                Vec::new(),
            )),
            "zero" => Ok(KernelSpec::zero()),
            other => Err(KernelError::UnknownPreset(other.to_string())),
        }
    }

    pub fn zero() -> Self {
        KernelSpec::new(
            Some("zero".into()),
            |_| 0.0,
            Domain1D::FULL_LINE,
            vec![
                SingularityHint::point(0.0, f64::NEG_INFINITY),
                SingularityHint::pos_tail(f64::INFINITY),
                SingularityHint::neg_tail(f64::INFINITY),
            ],
        )
    }

    /// Sum of power-exponential terms; the support is the hull of the term
    /// intervals.
    pub fn piecewise(name: Option<String>, terms: Vec<PowerExpTerm>) -> Result<Self, KernelError> {
        if terms.is_empty() {
            return Err(KernelError::Invalid("no kernel terms".into()));
        }
        for t in &terms {
            if !(t.lo < t.hi) || t.lo.is_nan() || t.hi.is_nan() {
                return Err(KernelError::Invalid(format!(
                    "term interval [{}, {}] is empty",
                    t.lo, t.hi
                )));
            }
            if !(t.c.is_finite() && t.a.is_finite() && t.b.is_finite() && t.b >= 0.0) {
                return Err(KernelError::Invalid(format!(
                    "term coefficients must be finite with b >= 0: {t:?}"
                )));
            }
        }
        let lo = terms.iter().map(|t| t.lo).fold(f64::INFINITY, f64::min);
        let hi = terms.iter().map(|t| t.hi).fold(f64::NEG_INFINITY, f64::max);
        let support = Domain1D::new(lo, hi)?;
        let hints = terms.iter().flat_map(PowerExpTerm::hints).collect();
        Ok(KernelSpec::new(
            name,
            move |t| terms.iter().map(|term| term.eval(t)).sum(),
            support,
            hints,
        ))
    }

    /// `φ(s) = ψ(1/s)/s` for `ψ` given on `psi_support ⊂ [0, ∞]`. Hints of
    /// `ψ` carry over: a point `s₀` maps to `1/s₀`, the behaviour at 0 to
    /// the tail and the tail to the behaviour at 0.
    pub fn from_psi(
        name: Option<String>,
        psi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        psi_support: Domain1D,
        psi_hints: &[SingularityHint],
    ) -> Result<Self, KernelError> {
        if psi_support.lo() < 0.0 {
            return Err(KernelError::Invalid(format!(
                "ψ must live on the positive half-line, got {psi_support}"
            )));
        }
        let inv = |s: f64| {
            if s == 0.0 {
                f64::INFINITY
            } else if s == f64::INFINITY {
                0.0
            } else {
                1.0 / s
            }
        };
        let support = Domain1D::new(inv(psi_support.hi()), inv(psi_support.lo()))?;
        let mut hints = Vec::new();
        for h in psi_hints {
            match h.location {
                Location::Point(s0) if s0 == 0.0 => {
                    hints.push(SingularityHint::pos_tail(1.0 - h.exponent))
                }
                Location::Point(s0) if s0 > 0.0 => {
                    hints.push(SingularityHint::point(1.0 / s0, h.exponent))
                }
                Location::PosInf => {
                    let gamma = if h.exponent.is_finite() {
                        1.0 - h.exponent
                    } else {
                        f64::NEG_INFINITY
                    };
                    if gamma.is_finite() {
                        hints.push(SingularityHint::point(0.0, gamma));
                    }
                }
                _ => {}
            }
        }
        if support.hi() == f64::INFINITY && !hints.iter().any(|h| h.location == Location::PosInf) {
            // ψ bounded near 0: φ(s) ~ ψ(0)/s.
            hints.push(SingularityHint::pos_tail(1.0));
        }
        Ok(KernelSpec::new(
            name,
            move |s| if s > 0.0 { psi(1.0 / s) / s } else { 0.0 },
            support,
            hints,
        ))
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn abs_eval(&self, t: f64) -> f64 {
        (self.eval)(t).abs()
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "custom".into())
    }

    /// Exponent `γ` with `|φ(t)| ~ |t|^{-γ}` at 0; `-∞` when the support
    /// stays away from 0, 0 when nothing is declared.
    pub fn exponent_at_zero(&self) -> f64 {
        if !self.support.touches(0.0) {
            return f64::NEG_INFINITY;
        }
        self.hints
            .iter()
            .filter(|h| h.at_point() == Some(0.0))
            .map(|h| h.exponent)
            .reduce(f64::max)
            .unwrap_or(0.0)
    }

    /// Tail exponent `τ` with `|φ(t)| ~ |t|^{-τ}` toward `loc`; `+∞` for a
    /// bounded side, `None` when undeclared on an unbounded side.
    pub fn tail_exponent(&self, loc: Location) -> Option<f64> {
        let unbounded = match loc {
            Location::PosInf => self.support.hi() == f64::INFINITY,
            Location::NegInf => self.support.lo() == f64::NEG_INFINITY,
            Location::Point(_) => return None,
        };
        if !unbounded {
            return Some(f64::INFINITY);
        }
        self.hints
            .iter()
            .filter(|h| h.location == loc)
            .map(|h| h.exponent)
            .reduce(f64::min)
    }
}

/// Hints that keep the quadrature from rejecting a non-integrable kernel up
/// front, so divergence shows up numerically instead.
fn admissible_hints(d: &Domain1D, hints: &[SingularityHint]) -> Vec<SingularityHint> {
    hints
        .iter()
        .filter(|h| match h.location {
            Location::Point(x) => !(d.touches(x) && h.exponent >= 1.0),
            _ => h.exponent > 1.0,
        })
        .copied()
        .collect()
}

/// `∫|φ|` with error estimate. A divergent kernel comes back unconverged
/// with `diverging` set.
pub fn kernel_l1_norm(k: &KernelSpec, tol: f64) -> Result<QuadratureResult, KernelError> {
    let hints = admissible_hints(&k.support, &k.hints);
    Ok(integrate_line(|t| k.abs_eval(t), &k.support, &hints, tol)?)
}

/// [`kernel_l1_norm`], failing with `NonIntegrable` unless it converged.
pub fn check_integrable(k: &KernelSpec, tol: f64) -> Result<QuadratureResult, KernelError> {
    let r = kernel_l1_norm(k, tol)?;
    if r.converged && r.value.is_finite() {
        Ok(r)
    } else {
        Err(KernelError::NonIntegrable {
            name: k.label(),
            value: r.value,
            n_evals: r.n_evals,
        })
    }
}

/// A two-dimensional kernel, optionally a tensor product `φ₁ ⊗ φ₂`.
#[derive(Clone)]
pub struct Kernel2DSpec {
    pub name: Option<String>,
    pub support: Domain2D,
    pub hints_x: Vec<SingularityHint>,
    pub hints_y: Vec<SingularityHint>,
    pub tensor: Option<(KernelSpec, KernelSpec)>,
    eval: KernelFn2,
}

impl fmt::Debug for Kernel2DSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel2DSpec")
            .field("name", &self.name)
            .field("support", &self.support)
            .field("tensor", &self.tensor.is_some())
            .finish_non_exhaustive()
    }
}

impl Kernel2DSpec {
    pub fn new(
        name: Option<String>,
        eval: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        support: Domain2D,
        hints_x: Vec<SingularityHint>,
        hints_y: Vec<SingularityHint>,
    ) -> Self {
        Kernel2DSpec {
            name,
            support,
            hints_x,
            hints_y,
            tensor: None,
            eval: Arc::new(eval),
        }
    }

    pub fn tensor(k1: KernelSpec, k2: KernelSpec) -> Self {
        let name = Some(format!("{}⊗{}", k1.label(), k2.label()));
        let (a, b) = (k1.clone(), k2.clone());
        Kernel2DSpec {
            name,
            support: Domain2D::new(k1.support, k2.support),
            hints_x: k1.hints.clone(),
            hints_y: k2.hints.clone(),
            tensor: Some((k1, k2)),
            eval: Arc::new(move |s, t| a.eval(s) * b.eval(t)),
        }
    }

    pub fn zero() -> Self {
        Kernel2DSpec::new(
            Some("zero".into()),
            |_, _| 0.0,
            Domain2D::new(Domain1D::FULL_LINE, Domain1D::FULL_LINE),
            Vec::new(),
            Vec::new(),
        )
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        (self.eval)(s, t)
    }

    pub fn abs_eval(&self, s: f64, t: f64) -> f64 {
        (self.eval)(s, t).abs()
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| "custom".into())
    }
}

/// `∫∫|φ|`; tensor kernels factor into two line integrals.
pub fn kernel2d_l1_norm(k: &Kernel2DSpec, tol: f64) -> Result<QuadratureResult, KernelError> {
    if let Some((k1, k2)) = &k.tensor {
        let a = kernel_l1_norm(k1, tol / 4.0)?;
        let b = kernel_l1_norm(k2, tol / 4.0)?;
        return Ok(product(a, b));
    }
    let hx = admissible_hints(&k.support.dx, &k.hints_x);
    let hy = admissible_hints(&k.support.dy, &k.hints_y);
    Ok(crate::quadrature::integrate_plane(
        |s, t| k.abs_eval(s, t),
        &k.support,
        &hx,
        &hy,
        tol,
    )?)
}

/// Product of two independent estimates with first-order error propagation.
pub fn product(a: QuadratureResult, b: QuadratureResult) -> QuadratureResult {
    QuadratureResult {
        value: a.value * b.value,
        abs_error_estimate: a.abs_error_estimate * b.value.abs()
            + b.abs_error_estimate * a.value.abs()
            + a.abs_error_estimate * b.abs_error_estimate,
        n_evals: a.n_evals + b.n_evals,
        converged: a.converged && b.converged,
        diverging: a.diverging || b.diverging,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_examples() {
        let h = KernelSpec::preset("hardy").unwrap();
        assert_eq!(h.eval(2.0), 0.5);
        assert_eq!(h.eval(0.5), 0.0);
        let a = KernelSpec::preset("adjoint_hardy").unwrap();
        assert_eq!(a.eval(0.5), 1.0);
        assert!(matches!(
            KernelSpec::preset("cesaro"),
            Err(KernelError::UnknownPreset(_))
        ));
    }

    #[test]
    fn presets_match_closed_forms_pointwise() {
        let h = KernelSpec::preset("hardy").unwrap();
        let a = KernelSpec::preset("adjoint_hardy").unwrap();
        for i in 0..1000 {
            let t = -3.0 + 9.0 * i as f64 / 999.0;
            assert_eq!(h.eval(t), if t > 1.0 { 1.0 / t } else { 0.0 });
            assert_eq!(a.eval(t), if (0.0..=1.0).contains(&t) { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn from_psi_examples() {
        let hardy = KernelSpec::preset("hardy").unwrap();
        let k = KernelSpec::from_psi(None, |_| 1.0, Domain1D::interval(0.0, 1.0).unwrap(), &[])
            .unwrap();
        assert_eq!((k.support.lo(), k.support.hi()), (1.0, f64::INFINITY));
        for s in [1.5, 2.0, 10.0, 1e3] {
            assert!((k.eval(s) - hardy.eval(s)).abs() < 1e-15);
        }
        assert_eq!(k.tail_exponent(Location::PosInf), Some(1.0));

        let k = KernelSpec::from_psi(
            None,
            |t| t,
            Domain1D::interval(0.0, 1.0).unwrap(),
            &[SingularityHint::point(0.0, -1.0)],
        )
        .unwrap();
        for s in [1.5, 2.0, 10.0] {
            assert!((k.eval(s) - s.powi(-2)).abs() < 1e-15);
        }
        assert_eq!(k.tail_exponent(Location::PosInf), Some(2.0));

        let z = KernelSpec::from_psi(None, |_| 0.0, Domain1D::POSITIVE, &[]).unwrap();
        assert_eq!(z.eval(3.0), 0.0);
    }

    #[test]
    fn l1_norm_examples() {
        let a = KernelSpec::preset("adjoint_hardy").unwrap();
        let r = kernel_l1_norm(&a, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10 && r.converged);

        let e = KernelSpec::piecewise(
            None,
            vec![PowerExpTerm {
                c: 1.0,
                a: 0.0,
                b: 1.0,
                lo: f64::NEG_INFINITY,
                hi: f64::INFINITY,
            }],
        )
        .unwrap();
        let r = kernel_l1_norm(&e, 1e-10).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9 && r.converged, "{r:?}");

        let h = KernelSpec::preset("hardy").unwrap();
        let r = kernel_l1_norm(&h, 1e-8).unwrap();
        assert!(!r.converged && r.diverging, "{r:?}");
        assert!(matches!(
            check_integrable(&h, 1e-8),
            Err(KernelError::NonIntegrable { .. })
        ));
    }

    #[test]
    fn piecewise_terms_sum() {
        let k = KernelSpec::piecewise(
            None,
            vec![
                PowerExpTerm {
                    c: 2.0,
                    a: -0.5,
                    b: 0.0,
                    lo: 0.0,
                    hi: 1.0,
                },
                PowerExpTerm {
                    c: 1.0,
                    a: -2.0,
                    b: 0.0,
                    lo: 1.0,
                    hi: f64::INFINITY,
                },
            ],
        )
        .unwrap();
        assert!((k.eval(0.25) - 4.0).abs() < 1e-15);
        assert!((k.eval(2.0) - 0.25).abs() < 1e-15);
        assert_eq!(k.exponent_at_zero(), 0.5);
        assert_eq!(k.tail_exponent(Location::PosInf), Some(2.0));
        let r = check_integrable(&k, 1e-10).unwrap();
        assert!((r.value - 5.0).abs() < 1e-9, "{r:?}");
        assert!(KernelSpec::piecewise(None, vec![]).is_err());
    }

    #[test]
    fn tensor_kernel_factorizes() {
        let a = KernelSpec::preset("adjoint_hardy").unwrap();
        let e = KernelSpec::piecewise(
            None,
            vec![PowerExpTerm {
                c: 1.0,
                a: 0.0,
                b: 1.0,
                lo: 0.0,
                hi: f64::INFINITY,
            }],
        )
        .unwrap();
        let k = Kernel2DSpec::tensor(a, e);
        assert!((k.eval(0.5, 2.0) - (-2.0f64).exp()).abs() < 1e-15);
        let r = kernel2d_l1_norm(&k, 1e-10).unwrap();
        assert!((r.value - 1.0).abs() < 1e-9 && r.converged);
        assert_eq!(Kernel2DSpec::zero().eval(1.0, 2.0), 0.0);
    }
}
