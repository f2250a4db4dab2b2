#![allow(clippy::type_complexity)]

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use dhop_core::bounds::{
    bound_2d, bound_a, exact_norm_multiplicative, BoundKind, EnvelopeMode, Weights2D,
};
use dhop_core::certify::{default_u_grid, lower_bound_curve};
use dhop_core::kernels::{Kernel2DSpec, KernelSpec, PowerExpTerm};
use dhop_core::operator::{
    apply_2d, hardy2_direct, OperatorSpec1D, OperatorSpec2D, SampledFunction, SampledFunction2D,
};
use dhop_core::quadrature::{Domain1D, SingularityHint};
use dhop_core::sweep::{region_oracle_check, two_index_sweep, upper_bound_sweep};
use dhop_core::weights::{Weight2D, WeightModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20240611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn hardy() -> KernelSpec {
    KernelSpec::preset("hardy").unwrap()
}

fn criterion_1() -> Outcome {
    let op = OperatorSpec1D::new(-0.5, hardy());
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, beta) in [(2.0, 0.0), (3.0, 1.0), (2.0, 0.5)] {
        let start = Instant::now();
        let r = bound_a(&op, &WeightModel::power(beta), p, EnvelopeMode::Sup, 1e-10).unwrap();
        let took = start.elapsed();
        let exact: f64 = p / (p - 1.0 - beta);
        let err = rel(r.value, exact);
        pass &= err < 1e-6 && took < Duration::from_secs(5);
        parts.push(format!(
            "(p={p},β={beta}): {:.9} vs {exact:.9} rel {err:.1e} in {took:.2?}",
            r.value
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_2() -> Outcome {
    let op = OperatorSpec1D::new(-0.5, hardy());
    let start = Instant::now();
    let res = lower_bound_curve(&op, &WeightModel::unit(), 2.0, &default_u_grid(), 1e-9);
    let took = start.elapsed();
    match res {
        Ok(c) => {
            let last = c.limit_estimate;
            let in_range = (1.90..=2.00).contains(&last);
            let pts: Vec<String> = c
                .points
                .iter()
                .map(|p| format!("{:.0e}:{:.5}", p.u, p.value))
                .collect();
            Outcome {
                pass: in_range && took < Duration::from_secs(60),
                detail: format!(
                    "monotone; L = [{}]; final {last:.6} {} [1.90, 2.00]; extrapolated limit {:.6}; {took:.2?}",
                    pts.join(", "),
                    if in_range { "in" } else { "NOT in" },
                    c.extrapolated_limit.unwrap_or(f64::NAN),
                ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("{e}"),
        },
    }
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    match region_oracle_check(100, 50, SEED ^ 3, 1e-10) {
        Ok(c) => {
            let took = start.elapsed();
            Outcome {
                pass: c.max_dev_1d < 1e-8 && c.max_dev_2d < 1e-6 && took < Duration::from_secs(120),
                detail: format!(
                    "max |Δ| 1D {:.1e} ({} draws), 2D {:.1e} ({} draws); {took:.2?}",
                    c.max_dev_1d, c.n_1d, c.max_dev_2d, c.n_2d
                ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("{e}"),
        },
    }
}

fn criterion_4() -> Outcome {
    let pw = |c: f64, a: f64, b: f64, lo: f64, hi: f64| PowerExpTerm { c, a, b, lo, hi };
    let kernels = vec![
        KernelSpec::preset("adjoint_hardy").unwrap(),
        KernelSpec::piecewise(
            Some("t^0.5 on [0,2]".into()),
            vec![pw(1.0, 0.5, 0.0, 0.0, 2.0)],
        )
        .unwrap(),
        KernelSpec::piecewise(
            Some("2|t|^-0.3 on [0.5,3] + |t| on [-2,-1]".into()),
            vec![pw(2.0, -0.3, 0.0, 0.5, 3.0), pw(1.0, 1.0, 0.0, -2.0, -1.0)],
        )
        .unwrap(),
        KernelSpec::piecewise(
            Some("t e^-t".into()),
            vec![pw(1.0, 1.0, 1.0, 0.0, f64::INFINITY)],
        )
        .unwrap(),
        KernelSpec::piecewise(
            Some("e^-2|t| on R".into()),
            vec![
                pw(1.0, 0.0, 2.0, f64::NEG_INFINITY, 0.0),
                pw(1.0, 0.0, 2.0, 0.0, f64::INFINITY),
            ],
        )
        .unwrap(),
    ];
    let p = 2.0;
    let alpha = -0.5;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut issues = Vec::new();
    for k in &kernels {
        let op = OperatorSpec1D::new(alpha, k.clone());
        for beta in [-0.5, 0.3, 0.8] {
            let w = WeightModel::multiplicative(
                format!("|x|^{beta}"),
                move |x: f64| x.abs().powf(beta),
                move |t: f64| t.abs().powf(beta),
            )
            .unwrap();
            let s = bound_a(&op, &w, p, EnvelopeMode::Sup, 1e-10).unwrap();
            let i = bound_a(&op, &w, p, EnvelopeMode::Inf, 1e-10).unwrap();
            let e = exact_norm_multiplicative(&op, &w, p, 1e-10).unwrap();
            if !(e.value.is_finite() && e.value > 0.0) {
                issues.push(format!("{} β={beta}: exact value {}", k.label(), e.value));
                continue;
            }
            worst = worst.max(rel(s.value, e.value)).max(rel(i.value, e.value));
            count += 1;
        }
    }
    Outcome {
        pass: issues.is_empty() && worst < 2e-6,
        detail: format!(
            "{count} (kernel, β) pairs, max rel gap {worst:.1e}{}",
            if issues.is_empty() {
                String::new()
            } else {
                format!("; {}", issues.join("; "))
            }
        ),
    }
}

fn criterion_5() -> Outcome {
    let unit = Domain1D::new(0.0, 1.0).unwrap();
    let psis: Vec<(&str, KernelSpec, Box<dyn Fn(f64) -> f64>)> = vec![
        (
            "χ(0,1)",
            KernelSpec::from_psi(
                None,
                |t| if t > 0.0 && t < 1.0 { 1.0 } else { 0.0 },
                unit,
                &[],
            )
            .unwrap(),
            Box::new(|p: f64| p / (p - 1.0)),
        ),
        (
            "t·χ(0,1)",
            KernelSpec::from_psi(
                None,
                |t| if t > 0.0 && t < 1.0 { t } else { 0.0 },
                unit,
                &[],
            )
            .unwrap(),
            Box::new(|p: f64| p / (2.0 * p - 1.0)),
        ),
        (
            "e^-t",
            KernelSpec::from_psi(
                None,
                |t: f64| (-t).exp(),
                Domain1D::new(0.0, f64::INFINITY).unwrap(),
                &[SingularityHint::pos_tail(f64::INFINITY)],
            )
            .unwrap(),
            Box::new(|p: f64| statrs::function::gamma::gamma(1.0 - 1.0 / p)),
        ),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, k, kp) in &psis {
        let op = OperatorSpec1D::new(-0.5, k.clone());
        for p in [2.0, 3.0] {
            let a = bound_a(&op, &WeightModel::unit(), p, EnvelopeMode::Sup, 1e-10).unwrap();
            let exact = kp(p);
            worst = worst.max((a.value - exact).abs());
            parts.push(format!("{name} p={p}: {:.7}", a.value));
        }
    }
    Outcome {
        pass: worst < 2e-6,
        detail: format!("max |Δ| {worst:.1e}; {}", parts.join(", ")),
    }
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    match upper_bound_sweep(200, SEED, 1e-7) {
        Ok(s) => Outcome {
            pass: s.violations() == 0 && s.records.len() == 200,
            detail: format!(
                "{} instances, {} violations, max ‖Hf‖/(A_sup‖f‖) = {:.6}; {:.2?}",
                s.records.len(),
                s.violations(),
                s.max_ratio(),
                start.elapsed()
            ),
        },
        Err(e) => Outcome {
            pass: false,
            detail: format!("{e}"),
        },
    }
}

fn criterion_7() -> Outcome {
    let pw = |a: f64, b: f64, lo: f64, hi: f64| PowerExpTerm {
        c: 1.0,
        a,
        b,
        lo,
        hi,
    };
    let one_d = [
        hardy(),
        KernelSpec::preset("adjoint_hardy").unwrap(),
        KernelSpec::piecewise(None, vec![pw(0.5, 1.0, 0.0, f64::INFINITY)]).unwrap(),
        KernelSpec::piecewise(None, vec![pw(-0.3, 0.0, 0.5, 3.0)]).unwrap(),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 7);
    let mut worst: f64 = 0.0;
    let mut bad = Vec::new();
    let mut n = 0;
    while n < 10 {
        let (i, j) = (rng.gen_range(0..one_d.len()), rng.gen_range(0..one_d.len()));
        let (b1, b2) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
        let p = rng.gen_range(1.5..3.5);
        let alpha = -0.5;
        let (w1, w2) = (WeightModel::power(b1), WeightModel::power(b2));
        let a1 = bound_a(
            &OperatorSpec1D::new(alpha, one_d[i].clone()),
            &w1,
            p,
            EnvelopeMode::Sup,
            1e-10,
        )
        .unwrap();
        let a2 = bound_a(
            &OperatorSpec1D::new(alpha, one_d[j].clone()),
            &w2,
            p,
            EnvelopeMode::Sup,
            1e-10,
        )
        .unwrap();
        if !(a1.value.is_finite() && a2.value.is_finite()) {
            continue;
        }
        let op2 = OperatorSpec2D::new(
            alpha,
            Kernel2DSpec::tensor(one_d[i].clone(), one_d[j].clone()),
        );
        let w = Weight2D::Tensor(w1, w2);
        match bound_2d(&op2, Weights2D::One(&w), p, None, BoundKind::A2Sup, 1e-8) {
            Ok(r) => worst = worst.max(rel(r.value, a1.value * a2.value)),
            Err(e) => bad.push(format!("{e}")),
        }
        n += 1;
    }
    let tol = 1e-8;
    let op = OperatorSpec2D::new(-0.5, Kernel2DSpec::tensor(hardy(), hardy()));
    let f = SampledFunction2D::tensor(
        &SampledFunction::new(
            |s: f64| (1.0 + s * s).recip(),
            vec![Domain1D::new(0.0, 3.0).unwrap()],
            vec![SingularityHint::breakpoint(3.0)],
        ),
        &SampledFunction::indicator(0.5, 2.0).unwrap(),
    );
    let mut worst_pt: f64 = 0.0;
    for _ in 0..20 {
        let x = (rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0));
        let a = apply_2d(&op, &f, x, tol).unwrap().value;
        let d = hardy2_direct(&f, x, tol).unwrap().value;
        worst_pt = worst_pt.max((a - d).abs());
    }
    Outcome {
        pass: bad.is_empty() && worst < 1e-5 && worst_pt < 2.0 * tol,
        detail: format!(
            "10 tensor instances, max rel gap {worst:.1e}; apply_2d vs direct average at 20 points max |Δ| {worst_pt:.1e} (2·tol = {:.0e}){}",
            2.0 * tol,
            if bad.is_empty() { String::new() } else { format!("; errors: {}", bad.join("; ")) }
        ),
    }
}

fn criterion_8() -> Outcome {
    let op = OperatorSpec1D::new(-0.5, hardy());
    let v = WeightModel::function(
        "1/(1+y^2)",
        |y: f64| 1.0 / (1.0 + y * y),
        vec![
            SingularityHint::pos_tail(2.0),
            SingularityHint::neg_tail(2.0),
        ],
    );
    let exact = (3.0 * PI / 8.0).powf(0.25) * 2.0;
    match two_index_sweep(
        &op,
        &v,
        &WeightModel::unit(),
        2.0,
        4.0 / 3.0,
        50,
        SEED ^ 8,
        1e-8,
    ) {
        Ok((d, s)) => {
            let d = d.value;
            Outcome {
            pass: (d - exact).abs() < 1e-5 && s.violations() == 0 && s.records.len() == 50,
            detail: format!(
                "D_sup {d:.8} vs {exact:.8} (|Δ| {:.1e}); 50 random f, {} violations, max ratio {:.4}",
                (d - exact).abs(),
                s.violations(),
                s.max_ratio()
            ),
            }
        }
        Err(e) => Outcome {
            pass: false,
            detail: format!("{e}"),
        },
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("1 sharp Hardy constants", criterion_1),
        ("2 sharpness curve", criterion_2),
        ("3 region measure oracle", criterion_3),
        ("4 multiplicative exactness", criterion_4),
        ("5 K_p identity", criterion_5),
        ("6 upper-bound sweep", criterion_6),
        ("7 2D tensor factorization", criterion_7),
        ("8 two-index bound", criterion_8),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let start = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!o.pass);
        println!(
            "{status} criterion {name} [{:.2?}]: {}",
            start.elapsed(),
            o.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
