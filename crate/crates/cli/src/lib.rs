//! Config-driven front end for the `dhop-core` library.

pub mod config;
pub mod report;
pub mod run;

use std::path::{Path, PathBuf};

use config::{ConfigError, Experiment, Format};
use report::{toml_to_json, Report};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

/// Overrides taken from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

pub struct RunResult {
    pub report: Report,
    pub exit_code: i32,
}

/// Runs every job of `exp` in order.
pub fn run_experiment(
    exp: &Experiment,
    config_path: Option<&Path>,
    ov: &Overrides,
) -> Result<RunResult, ConfigError> {
    let mut results = Vec::new();
    let mut warnings = Vec::new();
    let mut exit_code = EXIT_OK;
    for job in &exp.jobs {
        let mut job = job.clone();
        if ov.tol.is_some() {
            job.cfg.tol = ov.tol;
        }
        if ov.seed.is_some() {
            job.cfg.seed = ov.seed;
        }
        job.validate()?;
        let o = run::run_job(&job)?;
        if o.numeric_failure {
            exit_code = EXIT_NUMERIC;
        }
        results.extend(o.entry);
        warnings.extend(o.warnings);
    }
    let report = Report {
        version: env!("CARGO_PKG_VERSION").into(),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        config: toml_to_json(&toml::Value::Table(exp.raw.clone())),
        config_path: config_path.map(|p| p.display().to_string()),
        results,
        warnings,
    };
    Ok(RunResult { report, exit_code })
}

/// Output format: explicit choice first, then the file extension, then JSON.
pub fn resolve_format(explicit: Option<Format>, path: Option<&Path>) -> Format {
    explicit.unwrap_or_else(
        || match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Json,
        },
    )
}

/// Output location from the command line or, failing that, the base config.
pub fn resolve_output(cli: Option<PathBuf>, exp: &Experiment) -> Option<PathBuf> {
    cli.or_else(|| {
        exp.raw
            .get("output")
            .and_then(|o| o.get("path"))
            .and_then(|p| p.as_str())
            .map(PathBuf::from)
    })
}

pub fn config_format(exp: &Experiment) -> Option<Format> {
    exp.jobs
        .first()
        .and_then(|j| j.cfg.output.as_ref())
        .and_then(|o| o.format)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_results_still_form_a_report() {
        let r = Report {
            version: "0".into(),
            timestamp: "t".into(),
            config: serde_json::json!({}),
            config_path: None,
            results: Vec::new(),
            warnings: Vec::new(),
        };
        let mut buf = Vec::new();
        r.write_json(&mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["results"], serde_json::json!([]));
        assert!(v["meta"].is_object() && v["warnings"].is_array());
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(buf.is_empty());
    }

    #[test]
    fn format_follows_flag_then_extension() {
        assert_eq!(resolve_format(None, Some(Path::new("a.CSV"))), Format::Csv);
        assert_eq!(
            resolve_format(None, Some(Path::new("a.json"))),
            Format::Json
        );
        assert_eq!(resolve_format(None, None), Format::Json);
        assert_eq!(
            resolve_format(Some(Format::Json), Some(Path::new("a.csv"))),
            Format::Json
        );
    }
}
