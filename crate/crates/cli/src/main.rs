use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use dhop_cli::config::{self, Format};
use dhop_cli::{
    config_format, resolve_format, resolve_output, run_experiment, Overrides, EXIT_CONFIG,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

/// Dunkl-Hausdorff operator bounds, evaluations and lower-bound certificates.
///
/// Threads: set DHOP_THREADS (defaults to all cores).
#[derive(Debug, Parser)]
#[command(name = "dhop", version)]
struct Args {
    /// TOML experiment file.
    #[arg(short, long)]
    config: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(short, long, value_enum)]
    format: Option<FormatArg>,
    /// Overrides `tol` in every job.
    #[arg(long)]
    tol: Option<f64>,
    /// Overrides `seed` in every job.
    #[arg(long)]
    seed: Option<u64>,
}

fn init_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("DHOP_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| format!("DHOP_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let args = Args::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    let exp = match config::load(&args.config) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let ov = Overrides {
        tol: args.tol,
        seed: args.seed,
    };
    let run = match run_experiment(&exp, Some(&args.config), &ov) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    for w in &run.report.warnings {
        eprintln!("warning: {w}");
    }
    let out = resolve_output(args.out, &exp);
    let explicit = args.format.map(|f| match f {
        FormatArg::Json => Format::Json,
        FormatArg::Csv => Format::Csv,
    });
    let format = resolve_format(explicit.or_else(|| config_format(&exp)), out.as_deref());
    let written = match &out {
        Some(p) => File::create(p).and_then(|f| {
            let mut w = BufWriter::new(f);
            write_report(&run.report, format, &mut w)?;
            w.flush()
        }),
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            write_report(&run.report, format, &mut w)
        }
    };
    if let Err(e) = written {
        eprintln!("error: cannot write report: {e}");
        return ExitCode::from(EXIT_CONFIG as u8);
    }
    ExitCode::from(run.exit_code as u8)
}

fn write_report(
    r: &dhop_cli::report::Report,
    f: Format,
    w: &mut impl Write,
) -> std::io::Result<()> {
    match f {
        Format::Json => r.write_json(w),
        Format::Csv => r.write_csv(w),
    }
}
