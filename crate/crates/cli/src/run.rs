//! Running studies and writing their artifacts.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use gradfem_core::analysis::{
    condition_study_observed, cutoff_power, eig_rate_study_observed, format_table,
    interpolation_study_observed, rate_study_observed, LevelView, RateTable, StudyError,
};
use gradfem_core::assembly::QuadratureConfig;
use serde::Serialize;

use crate::config::{ExperimentConfig, GradingChoice, Mode, UsageError};
use crate::formats::{write_matrix_market, write_sweep_csv, write_table_csv, write_vtk};

/// The grading ratios of the published tables.
pub const SWEEP_RATIOS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("usage: {0}")]
    Usage(#[from] UsageError),
    /// The study stopped; completed levels were still written.
    #[error("{source}")]
    Study {
        #[source]
        source: StudyError,
        outcome: Box<RunOutcome>,
    },
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl RunError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Study { .. } => 3,
            RunError::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelTiming {
    pub level: u32,
    /// Seconds since the start of the study when the level finished.
    pub finished_at: f64,
    pub seconds: f64,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: ExperimentConfig,
    /// The configuration in the `key = value` file format.
    pub config_text: String,
    pub k: f64,
    pub eta: Option<f64>,
    /// `2^(-m/min(η, m))`: bound on the ratio for the optimal rate.
    pub optimal_threshold: Option<f64>,
    pub quadrature: QuadratureConfig,
    pub threads: usize,
    pub timings: Vec<LevelTiming>,
    pub total_seconds: f64,
    pub error: Option<String>,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub table: RateTable,
    pub manifest: Manifest,
}

/// Caps the worker count of the global pool. Only the first call takes
/// effect; later calls are ignored.
pub fn set_threads(threads: Option<usize>) {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
}

fn worker_count() -> usize {
    #[cfg(feature = "parallel")]
    return rayon::current_num_threads();
    #[cfg(not(feature = "parallel"))]
    1
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Writes the per-level VTK and Matrix Market files requested by `cfg`.
fn level_artifacts(cfg: &ExperimentConfig, dir: &Path, view: &LevelView<'_>) -> anyhow::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if cfg.vtk {
        let path = dir.join(format!("level_{}.vtk", view.level));
        let mut w = create(&path)?;
        let nodal = view.solution.map(|x| view.space.nodal_values(x));
        let name = match cfg.mode {
            Mode::Source => "solution",
            Mode::Eigen => "eigenvector",
            Mode::Interp => "interpolant",
            Mode::Condition => "unused",
        };
        let data: Vec<(&str, &[f64])> = nodal.as_deref().map(|v| (name, v)).into_iter().collect();
        write_vtk(&mut w, view.space.mesh(), &format!("gradfem {} level {}", cfg.mode, view.level), &data)?;
        w.flush()?;
        written.push(path);
    }
    if cfg.dump_matrices {
        if let Some(a) = view.matrix {
            let path = dir.join(format!("level_{}.mtx", view.level));
            let mut w = create(&path)?;
            write_matrix_market(&mut w, a)?;
            w.flush()?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Runs the study selected by `cfg`, writing `table.csv`, `table.json`,
/// `manifest.json` and the optional per-level files into `cfg.out`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutcome, RunError> {
    let study = cfg.study()?;
    set_threads(cfg.threads);
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let start = Instant::now();
    let mut timings = Vec::new();
    let mut artifacts = Vec::new();
    let mut io_error: Option<anyhow::Error> = None;
    let mut last = 0.0;
    let observe = |view: LevelView<'_>| {
        let now = start.elapsed().as_secs_f64();
        timings.push(LevelTiming { level: view.level, finished_at: now, seconds: now - last });
        last = now;
        if let (Some(dir), None) = (&cfg.out, &io_error) {
            match level_artifacts(cfg, dir, &view) {
                Ok(files) => artifacts.extend(files),
                Err(e) => io_error = Some(e),
            }
        }
    };
    let result = match cfg.mode {
        Mode::Source => rate_study_observed(&study, observe),
        Mode::Eigen => eig_rate_study_observed(&study, observe),
        Mode::Interp => interpolation_study_observed(&study, cutoff_power(cfg.gamma, cfg.r_c), observe),
        Mode::Condition => condition_study_observed(&study, observe),
    };
    let (table, failure) = match result {
        Ok(t) => (t, None),
        Err(e) => (e.partial.clone(), Some(e)),
    };
    let eta = study.potential.eta();
    let mut manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        config_text: cfg.to_text(),
        k: study.grading.k,
        eta,
        optimal_threshold: eta.map(|e| gradfem_core::refine::GradingParams::threshold(e.min(cfg.m as f64), cfg.m)),
        quadrature: study.quadrature,
        threads: worker_count(),
        timings,
        total_seconds: start.elapsed().as_secs_f64(),
        error: failure.as_ref().map(|e| e.to_string()),
        artifacts,
    };
    if let Some(dir) = &cfg.out {
        let tables = [dir.join("table.csv"), dir.join("table.json"), dir.join("manifest.json")];
        manifest.artifacts.extend(tables.iter().cloned());
        write_table_csv(create(&tables[0])?, &table)?;
        write_json(&tables[1], &table)?;
        write_json(&tables[2], &manifest)?;
    }
    if let Some(e) = io_error {
        return Err(RunError::Io(e));
    }
    let outcome = RunOutcome { table, manifest };
    match failure {
        None => Ok(outcome),
        Some(source) => Err(RunError::Study { source, outcome: Box::new(outcome) }),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub k: f64,
    pub table: Option<RateTable>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    pub fn table(&self, k: f64) -> Option<&RateTable> {
        self.entries.iter().find(|e| e.k == k).and_then(|e| e.table.as_ref())
    }

    /// Rates side by side, one column per `k`.
    pub fn to_csv(&self) -> anyhow::Result<String> {
        let cols: Vec<(f64, Option<&RateTable>)> = self.entries.iter().map(|e| (e.k, e.table.as_ref())).collect();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &cols)?;
        Ok(String::from_utf8(buf)?)
    }
}

/// Runs every configuration in turn. Failures are recorded and the sweep
/// continues; each run writes into `<out>/k_<k>` when `out` is set on the
/// first configuration, and the merged table goes to `<out>/sweep.csv`.
pub fn sweep(configs: &[ExperimentConfig]) -> Result<SweepReport, RunError> {
    let first = configs.first().ok_or_else(|| UsageError("sweep needs at least one configuration".into()))?;
    for cfg in configs {
        cfg.validate()?;
    }
    let root = first.out.clone();
    let mut entries = Vec::with_capacity(configs.len());
    for cfg in configs {
        let mut cfg = cfg.clone();
        let k = cfg.ratio()?;
        if let Some(root) = &root {
            cfg.out = Some(root.join(format!("k_{k}")));
        }
        let entry = match run(&cfg) {
            Ok(o) => SweepEntry { k, table: Some(o.table), error: None },
            Err(RunError::Study { source, outcome }) => {
                SweepEntry { k, table: Some(outcome.table), error: Some(source.to_string()) }
            }
            Err(e) => SweepEntry { k, table: None, error: Some(e.to_string()) },
        };
        entries.push(entry);
    }
    let report = SweepReport { entries };
    if let Some(root) = &root {
        fs::write(root.join("sweep.csv"), report.to_csv()?).context("writing sweep.csv")?;
        write_json(&root.join("sweep.json"), &report)?;
    }
    Ok(report)
}

/// `base` with `k` replaced by each of `ratios`.
pub fn sweep_configs(base: &ExperimentConfig, ratios: &[f64]) -> Vec<ExperimentConfig> {
    ratios
        .iter()
        .map(|&k| ExperimentConfig { k: GradingChoice::Ratio(k), ..base.clone() })
        .collect()
}

/// Text summary printed by the binary.
pub fn summary(outcome: &RunOutcome) -> String {
    let m = &outcome.manifest;
    let mut s = format!(
        "mode {} delta {} L {} k {} levels {}\n",
        m.config.mode, m.config.delta, m.config.shift, m.k, m.config.levels
    );
    if let (Some(eta), Some(t)) = (m.eta, m.optimal_threshold) {
        s.push_str(&format!("eta {eta:.4} optimal for k < {t:.4}\n"));
    }
    s.push_str(&format_table(&outcome.table));
    s.push_str(&format!("total {:.2} s\n", m.total_seconds));
    s
}
