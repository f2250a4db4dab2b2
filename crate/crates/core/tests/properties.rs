use dhop_core::bounds::{bound_a, EnvelopeMode};
use dhop_core::certify::{lower_bound_value, make_test_pair, region_measure_1d, region_measure_2d};
use dhop_core::kernels::{KernelSpec, PowerExpTerm};
use dhop_core::operator::{apply_1d, OperatorSpec1D, SampledFunction};
use dhop_core::quadrature::{integrate_line, Domain1D, SingularityHint};
use dhop_core::weights::WeightModel;
use proptest::prelude::*;

fn exp_kernel(a: f64, b: f64) -> KernelSpec {
    KernelSpec::piecewise(
        None,
        vec![PowerExpTerm {
            c: 1.0,
            a,
            b,
            lo: 0.0,
            hi: f64::INFINITY,
        }],
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quadrature_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, g in 0.0f64..0.9) {
        let d = Domain1D::new(0.0, 2.0).unwrap();
        let h = [SingularityHint::point(0.0, g)];
        let f1 = |t: f64| t.powf(-g);
        let f2 = |t: f64| (3.0 * t).cos();
        let i1 = integrate_line(f1, &d, &h, 1e-11).unwrap().value;
        let i2 = integrate_line(f2, &d, &h, 1e-11).unwrap().value;
        let i12 = integrate_line(|t| a * f1(t) + b * f2(t), &d, &h, 1e-11).unwrap().value;
        prop_assert!((i12 - (a * i1 + b * i2)).abs() < 1e-8 * (1.0 + i12.abs()));
    }

    #[test]
    fn operator_is_positive_and_homogeneous(
        x in prop_oneof![-5.0f64..-0.05, 0.05f64..5.0],
        c in 0.1f64..10.0,
        a in 0.0f64..1.0,
        b in 0.3f64..2.0,
    ) {
        let op = OperatorSpec1D::new(-0.5, exp_kernel(a, b));
        let f = SampledFunction::indicator(-1.0, 2.0).unwrap();
        let h = apply_1d(&op, &f, x, 1e-10).unwrap();
        let hc = apply_1d(&op, &f.scaled(c), x, 1e-10).unwrap();
        prop_assert!(h.value >= 0.0);
        prop_assert!((hc.value - c * h.value).abs() < 1e-8 * (1.0 + hc.value));
    }

    #[test]
    fn operator_commutes_with_dilation(x in 0.1f64..4.0, lam in 0.2f64..5.0, a in -0.5f64..1.0) {
        // H (f(λ·))(x) = (H f)(λx): both sides are ∫ φ(t)|t|^{-c} f(λx/t) dt.
        let op = OperatorSpec1D::new(-0.5, exp_kernel(a, 1.0));
        let tails = vec![SingularityHint::pos_tail(f64::INFINITY), SingularityHint::neg_tail(f64::INFINITY)];
        let f = SampledFunction::new(|s: f64| (-s * s).exp(), vec![Domain1D::FULL_LINE], tails.clone());
        let fl = SampledFunction::new(move |s: f64| (-(lam * s) * (lam * s)).exp(), vec![Domain1D::FULL_LINE], tails);
        let lhs = apply_1d(&op, &fl, x, 1e-11).unwrap().value;
        let rhs = apply_1d(&op, &f, lam * x, 1e-11).unwrap().value;
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + rhs.abs()), "{lhs} {rhs}");
    }

    #[test]
    fn region_measure_is_even_and_inversion_symmetric(t in 1e-4f64..1e4, u in 0.01f64..0.9) {
        let m = region_measure_1d(t, u).unwrap().measure;
        prop_assert!(m >= 0.0);
        prop_assert!((region_measure_1d(-t, u).unwrap().measure - m).abs() < 1e-12);
        prop_assert!((region_measure_1d(1.0 / t, u).unwrap().measure - m).abs() < 1e-9 * (1.0 + m));
        let m2 = region_measure_2d(t, 1.0, u).unwrap().measure;
        prop_assert!((m2 - m * 4.0 * (1.0 / u).ln()).abs() < 1e-9 * (1.0 + m2));
    }

    #[test]
    fn certificate_never_exceeds_constant(u in 0.002f64..0.5, beta in -0.5f64..0.5, p in 1.5f64..3.5) {
        let op = OperatorSpec1D::new(-0.5, KernelSpec::preset("hardy").unwrap());
        let w = WeightModel::power(beta);
        let l = lower_bound_value(&op, &w, p, u, 1e-9).unwrap();
        let a = bound_a(&op, &w, p, EnvelopeMode::Sup, 1e-10).unwrap();
        prop_assert!(l.value <= a.value + l.error + a.error_estimate + 1e-9, "{} > {}", l.value, a.value);
    }
}

#[test]
fn test_pair_norms_hold_for_exact_weights() {
    for w in [
        WeightModel::power(-0.4),
        WeightModel::power(1.2),
        WeightModel::dunkl(0.75),
    ] {
        for p in [1.5, 2.0, 4.0] {
            let pair = make_test_pair(0.01, p, &w, 1e-9).unwrap();
            let expect = pair.norm_power();
            assert!(
                (pair.norm_f.value.powf(p) - expect).abs() < 1e-6 * expect,
                "{w:?} p={p}"
            );
        }
    }
}
