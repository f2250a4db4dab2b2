use dhop_core::bounds::{
    bound_2d, bound_a, bound_b_two_weight, bound_d_two_index, exact_norm_multiplicative,
    hardy_power_report, BoundKind, BoundReport, EnvelopeMode, Weights2D,
};
use dhop_core::certify::{
    default_u_grid, lower_bound_curve, lower_bound_curve_2d, lower_bound_curve_relaxed,
    LowerBoundCurve,
};
use dhop_core::operator::{
    adjoint_hardy_direct, apply_1d, apply_2d, hardy2_direct, hardy_direct, image_norm,
    weighted_lp_norm,
};
use dhop_core::quadrature::Domain1D;
use dhop_core::sweep::{region_oracle_check, two_index_sweep, upper_bound_sweep};
use rayon::prelude::*;

use crate::config::{Check, Command, ConfigError, Job, Oracle, WeightCfg};
use crate::report::{ApplyPoint, Body, Entry, Scalar};

pub const DEFAULT_SWEEP_N: usize = 200;
pub const DEFAULT_REGION_N: usize = 100;
pub const DEFAULT_REGION_N_2D: usize = 50;

/// Outcome of one job.
#[derive(Debug)]
pub struct Outcome {
    pub entry: Option<Entry>,
    pub warnings: Vec<String>,
    /// A numeric error or a non-converged result.
    pub numeric_failure: bool,
}

impl Outcome {
    fn done(job: &Job, body: Body) -> Self {
        Outcome {
            entry: Some(Entry {
                label: job.label.clone(),
                command: command_name(job.cfg.command).into(),
                body,
            }),
            warnings: Vec::new(),
            numeric_failure: false,
        }
    }

    fn warn(&mut self, job: &Job, msg: impl AsRef<str>) {
        self.warnings
            .push(format!("{}: {}", job.label, msg.as_ref()));
    }
}

pub fn command_name(c: Command) -> &'static str {
    match c {
        Command::Constant => "constant",
        Command::Apply => "apply",
        Command::Norm => "norm",
        Command::Certify => "certify",
        Command::Certify2d => "certify2d",
        Command::Report => "report",
    }
}

/// Runs one job. Config problems surface as errors; numeric ones are folded
/// into the outcome.
pub fn run_job(job: &Job) -> Result<Outcome, ConfigError> {
    match execute(job) {
        Ok(o) => Ok(o),
        Err(Failure::Config(e)) => Err(e),
        Err(Failure::Numeric(msg)) => {
            let mut o = Outcome {
                entry: None,
                warnings: Vec::new(),
                numeric_failure: true,
            };
            o.warn(job, format!("numeric error: {msg}"));
            Ok(o)
        }
    }
}

enum Failure {
    Config(ConfigError),
    Numeric(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

fn numeric<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Numeric(e.to_string())
}

fn execute(job: &Job) -> Result<Outcome, Failure> {
    let tol = job.tol();
    match job.cfg.command {
        Command::Constant => constant(job, tol),
        Command::Apply => apply(job, tol),
        Command::Norm => norm(job, tol),
        Command::Certify => {
            let op = job.operator()?;
            let v = job.weight()?;
            let p = job.p()?;
            let grid = job.u_grid()?.unwrap_or_else(default_u_grid);
            let curve = lower_bound_curve(&op, &v, p, &grid, tol).map_err(numeric)?;
            let relaxed = if job.cfg.relaxed.unwrap_or(false) {
                Some(lower_bound_curve_relaxed(&op, &v, p, &grid, tol).map_err(numeric)?)
            } else {
                None
            };
            let mut o = Outcome::done(
                job,
                Body::Curve {
                    curve: curve.clone(),
                    exact: true,
                    relaxed: relaxed.clone(),
                },
            );
            check_curve(&mut o, job, &curve);
            if let Some(r) = &relaxed {
                check_curve(&mut o, job, r);
            }
            Ok(o)
        }
        Command::Certify2d => {
            let op = job.operator_2d()?;
            let v = job.weight_2d()?;
            let p = job.p()?;
            let grid = job.u_grid()?.unwrap_or_else(default_u_grid);
            let (curve, exact) = lower_bound_curve_2d(&op, &v, p, &grid, tol).map_err(numeric)?;
            let mut o = Outcome::done(
                job,
                Body::Curve {
                    curve: curve.clone(),
                    exact,
                    relaxed: None,
                },
            );
            if !exact {
                o.warn(
                    job,
                    "weight is not multiplicative: the curve is the relaxed envelope bound",
                );
            }
            check_curve(&mut o, job, &curve);
            Ok(o)
        }
        Command::Report => report(job, tol),
    }
}

fn check_curve(o: &mut Outcome, job: &Job, c: &LowerBoundCurve) {
    for p in c.points.iter().filter(|p| !p.converged) {
        o.warn(job, format!("L(u) at u = {} did not converge", p.u));
        o.numeric_failure = true;
    }
    for p in c.points.iter().filter(|p| !p.value.is_finite()) {
        o.warn(job, format!("L(u) at u = {} is {}", p.u, p.value));
    }
}

fn check_bound(o: &mut Outcome, job: &Job, b: &BoundReport) {
    for w in &b.warnings {
        o.warn(job, format!("{}: {w}", b.kind));
    }
    if !b.converged {
        o.warn(job, format!("{} did not converge", b.kind));
        o.numeric_failure = true;
    }
}

fn constant(job: &Job, tol: f64) -> Result<Outcome, Failure> {
    let kind = job.kind()?;
    let p = job.p()?;
    let b = match kind {
        BoundKind::HardyPower => {
            let beta = match job.cfg.weight {
                Some(WeightCfg::Power { beta }) => beta,
                _ => 0.0,
            };
            hardy_power_report(p, beta).map_err(numeric)?
        }
        BoundKind::ASup | BoundKind::AInf => {
            let mode = if kind == BoundKind::ASup {
                EnvelopeMode::Sup
            } else {
                EnvelopeMode::Inf
            };
            bound_a(&job.operator()?, &job.weight()?, p, mode, tol).map_err(numeric)?
        }
        BoundKind::ExactMultiplicative => {
            exact_norm_multiplicative(&job.operator()?, &job.weight()?, p, tol).map_err(numeric)?
        }
        BoundKind::BSup => {
            bound_b_two_weight(&job.operator()?, &job.weight()?, &job.weight_w()?, p, tol)
                .map_err(numeric)?
        }
        BoundKind::DSup => bound_d_two_index(
            &job.operator()?,
            &job.weight()?,
            &job.weight_w()?,
            p,
            job.q()?,
            tol,
        )
        .map_err(numeric)?,
        BoundKind::A2Sup | BoundKind::A2Inf | BoundKind::B2Sup | BoundKind::D2Sup => {
            let op = job.operator_2d()?;
            let v = job.weight_2d()?;
            let w = job.weight_w_2d()?;
            let weights = match kind {
                BoundKind::A2Sup | BoundKind::A2Inf => Weights2D::One(&v),
                _ => Weights2D::Two(&v, &w),
            };
            let q = if kind == BoundKind::D2Sup {
                Some(job.q()?)
            } else {
                None
            };
            bound_2d(&op, weights, p, q, kind, tol).map_err(numeric)?
        }
    };
    let mut o = Outcome::done(job, Body::Bound(b.clone()));
    check_bound(&mut o, job, &b);
    Ok(o)
}

fn apply(job: &Job, tol: f64) -> Result<Outcome, Failure> {
    let points: Vec<ApplyPoint> = if job.is_2d() {
        let op = job.operator_2d()?;
        let f = job.function_2d()?;
        let xs = job.cfg.points_2d.clone().unwrap_or_default();
        xs.par_iter()
            .map(|&[x, y]| {
                let r = apply_2d(&op, &f, (x, y), tol).map_err(numeric)?;
                let oracle = match job.cfg.oracle {
                    Some(Oracle::Hardy2) if x > 0.0 && y > 0.0 => {
                        Some(hardy2_direct(&f, (x, y), tol).map_err(numeric)?.value)
                    }
                    _ => None,
                };
                Ok(ApplyPoint {
                    x: vec![x, y],
                    value: r.value,
                    error: r.abs_error_estimate,
                    converged: r.converged,
                    oracle,
                })
            })
            .collect::<Result<_, Failure>>()?
    } else {
        let op = job.operator()?;
        let f = job.function()?;
        let xs = job.cfg.points.clone().unwrap_or_default();
        xs.par_iter()
            .map(|&x| {
                let r = apply_1d(&op, &f, x, tol).map_err(numeric)?;
                let oracle = match job.cfg.oracle {
                    Some(Oracle::Hardy) if x > 0.0 => {
                        Some(hardy_direct(&f, x, tol).map_err(numeric)?.value)
                    }
                    Some(Oracle::AdjointHardy) if x > 0.0 => {
                        Some(adjoint_hardy_direct(&f, x, tol).map_err(numeric)?.value)
                    }
                    _ => None,
                };
                Ok(ApplyPoint {
                    x: vec![x],
                    value: r.value,
                    error: r.abs_error_estimate,
                    converged: r.converged,
                    oracle,
                })
            })
            .collect::<Result<_, Failure>>()?
    };
    let mut o = Outcome::done(job, Body::Apply(points.clone()));
    if job.cfg.oracle == Some(Oracle::Hardy2) && !job.is_2d() {
        o.warn(
            job,
            "oracle hardy2 needs a two-dimensional operator; ignored",
        );
    }
    if matches!(job.cfg.oracle, Some(Oracle::Hardy | Oracle::AdjointHardy)) && job.is_2d() {
        o.warn(
            job,
            "one-dimensional oracle given for a two-dimensional operator; ignored",
        );
    }
    for p in points.iter().filter(|p| !p.converged) {
        o.warn(job, format!("value at x = {:?} did not converge", p.x));
        o.numeric_failure = true;
    }
    for p in points.iter().filter(|p| !p.value.is_finite()) {
        o.warn(job, format!("value at x = {:?} is {}", p.x, p.value));
    }
    Ok(o)
}

fn norm(job: &Job, tol: f64) -> Result<Outcome, Failure> {
    let op = job.operator()?;
    let f = job.function()?;
    let v = job.weight()?;
    let w = job.weight_w()?;
    let p = job.p()?;
    let q = match job.cfg.q {
        Some(_) => job.q()?,
        None => p,
    };
    let nf = weighted_lp_norm(&f, &w, p, &Domain1D::FULL_LINE, tol).map_err(numeric)?;
    let nh = image_norm(&op, &f, &v, q, tol).map_err(numeric)?;
    let ratio = Scalar {
        name: "ratio".into(),
        value: nh.value / nf.value,
        error: nh.abs_error_estimate / nf.value
            + nh.value * nf.abs_error_estimate / (nf.value * nf.value),
        converged: nf.converged && nh.converged,
    };
    let scalars = vec![
        Scalar::from_quad("norm_f", &nf),
        Scalar::from_quad("norm_Hf", &nh),
        ratio,
    ];
    let mut o = Outcome::done(job, Body::Scalars(scalars.clone()));
    for s in scalars.iter().filter(|s| !s.converged) {
        o.warn(job, format!("{} did not converge", s.name));
        o.numeric_failure = true;
    }
    for s in scalars.iter().filter(|s| !s.value.is_finite()) {
        o.warn(job, format!("{} is {}", s.name, s.value));
    }
    Ok(o)
}

fn report(job: &Job, tol: f64) -> Result<Outcome, Failure> {
    let seed = job.seed();
    match job.cfg.check {
        Some(Check::UpperBoundSweep) => {
            let s = upper_bound_sweep(job.cfg.n.unwrap_or(DEFAULT_SWEEP_N), seed, tol)
                .map_err(numeric)?;
            let mut o = Outcome::done(
                job,
                Body::Sweep {
                    summary: s.clone(),
                    constant: None,
                },
            );
            if s.violations() > 0 {
                o.warn(
                    job,
                    format!(
                        "{} of {} instances exceed their constant",
                        s.violations(),
                        s.records.len()
                    ),
                );
            }
            Ok(o)
        }
        Some(Check::TwoIndexSweep) => {
            let (d, s) = two_index_sweep(
                &job.operator()?,
                &job.weight()?,
                &job.weight_w()?,
                job.p()?,
                job.q()?,
                job.cfg.n.unwrap_or(DEFAULT_SWEEP_N),
                seed,
                tol,
            )
            .map_err(numeric)?;
            let mut o = Outcome::done(
                job,
                Body::Sweep {
                    summary: s.clone(),
                    constant: Some(d.clone()),
                },
            );
            check_bound(&mut o, job, &d);
            if s.violations() > 0 {
                o.warn(
                    job,
                    format!(
                        "{} of {} functions exceed the constant",
                        s.violations(),
                        s.records.len()
                    ),
                );
            }
            Ok(o)
        }
        Some(Check::RegionOracle) => {
            let r = region_oracle_check(
                job.cfg.n.unwrap_or(DEFAULT_REGION_N),
                job.cfg.n_2d.unwrap_or(DEFAULT_REGION_N_2D),
                seed,
                tol,
            )
            .map_err(numeric)?;
            Ok(Outcome::done(job, Body::Region(r)))
        }
        None => Err(job.invalid("check", "required for report").into()),
    }
}
