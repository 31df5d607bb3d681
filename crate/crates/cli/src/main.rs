use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use gradfem::config::{ExperimentConfig, GradingChoice, Mode, UsageError};
use gradfem::run::{run, summary, sweep, sweep_configs, RunError, SWEEP_RATIOS};

/// Graded finite element studies for `(-Δ + δψr⁻² + L) v = 1` on the
/// periodic cube.
///
/// Settings are read from `--config` (lines of `key = value`) and then
/// overridden by flags.
#[derive(Debug, Parser)]
#[command(name = "gradfem", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Potential strength, greater than -1/4.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Nonnegative shift L.
    #[arg(long = "L")]
    shift: Option<f64>,
    /// Grading ratio in (0, 0.5], or `auto` for 2^(-m/a).
    #[arg(long)]
    k: Option<GradingChoice>,
    /// Weight exponent for `k = auto` and the error norm.
    #[arg(long)]
    a: Option<f64>,
    /// Polynomial degree (only 1).
    #[arg(long)]
    m: Option<u32>,
    /// Finest refinement level (at least 2).
    #[arg(long)]
    levels: Option<u32>,
    /// Cutoff parameter r_c of ψ.
    #[arg(long)]
    rc: Option<f64>,
    /// Relative solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Exponent γ of ψ(r) r^γ in interp mode.
    #[arg(long)]
    gamma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write a VTK file per level.
    #[arg(long)]
    vtk: bool,
    /// Write the system matrix per level in Matrix Market format.
    #[arg(long)]
    dump_matrices: bool,
    /// Use the seminorm for errors.
    #[arg(long)]
    seminorm: bool,
    /// Estimate condition numbers in source and eigen modes too.
    #[arg(long)]
    condition: bool,
    /// Eigen mode: deflate the constants.
    #[arg(long)]
    deflate: bool,
    /// Cap on worker threads.
    #[arg(long)]
    threads: Option<usize>,
    /// Run for several grading ratios (comma separated); without a value,
    /// the ratios 0.1, 0.2, 0.3, 0.4, 0.5.
    #[arg(long, num_args = 0..=1, value_delimiter = ',', require_equals = true)]
    sweep: Option<Vec<f64>>,
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, UsageError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    macro_rules! over {
        ($field:ident, $target:ident) => {
            if let Some(v) = cli.$field.clone() {
                cfg.$target = v;
            }
        };
    }
    over!(mode, mode);
    over!(delta, delta);
    over!(shift, shift);
    over!(k, k);
    over!(a, a);
    over!(m, m);
    over!(levels, levels);
    over!(rc, r_c);
    over!(tol, tol);
    over!(gamma, gamma);
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    cfg.vtk |= cli.vtk;
    cfg.dump_matrices |= cli.dump_matrices;
    cfg.seminorm |= cli.seminorm;
    cfg.condition |= cli.condition;
    cfg.deflate |= cli.deflate;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("gradfem: {e}");
            return ExitCode::from(2);
        }
    };
    let status = match &cli.sweep {
        Some(ratios) => {
            let ratios = if ratios.is_empty() { SWEEP_RATIOS.to_vec() } else { ratios.clone() };
            match sweep(&sweep_configs(&cfg, &ratios)) {
                Ok(report) => {
                    for e in &report.entries {
                        if let Some(err) = &e.error {
                            eprintln!("gradfem: k = {}: {err}", e.k);
                        }
                    }
                    print!("{}", report.to_csv().unwrap_or_default());
                    if report.entries.iter().any(|e| e.error.is_some()) { 3 } else { 0 }
                }
                Err(e) => {
                    eprintln!("gradfem: {e}");
                    e.exit_code()
                }
            }
        }
        None => match run(&cfg) {
            Ok(outcome) => {
                print!("{}", summary(&outcome));
                0
            }
            Err(e) => {
                if let RunError::Study { outcome, .. } = &e {
                    print!("{}", summary(outcome));
                }
                eprintln!("gradfem: {e}");
                e.exit_code()
            }
        },
    };
    ExitCode::from(status as u8)
}
