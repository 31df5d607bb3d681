//! Experiment configuration: a `key = value` file plus command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gradfem_core::analysis::{StudyConfig, WeightedNormParams};
use gradfem_core::assembly::PotentialSpec;
use gradfem_core::refine::GradingParams;
use gradfem_core::solve::PcgOptions;
use serde::{Deserialize, Serialize};

/// An invalid configuration; the binary exits with status 2.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Source problem `(-Δ + δψr⁻² + L) v = 1`.
    Source,
    /// Smallest eigenvalue of `-Δ + δψr⁻²`.
    Eigen,
    /// Modified interpolant of `ψ(r) r^γ`.
    Interp,
    /// Condition number of the scaled system matrix.
    Condition,
}

impl FromStr for Mode {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "source" => Ok(Mode::Source),
            "eigen" => Ok(Mode::Eigen),
            "interp" => Ok(Mode::Interp),
            "condition" => Ok(Mode::Condition),
            other => Err(usage(format!("unknown mode '{other}' (source, eigen, interp, condition)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Source => "source",
            Mode::Eigen => "eigen",
            Mode::Interp => "interp",
            Mode::Condition => "condition",
        })
    }
}

/// Grading ratio, given directly or derived as `k = 2^(-m/a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GradingChoice {
    Auto,
    Ratio(f64),
}

impl FromStr for GradingChoice {
    type Err = UsageError;

    fn from_str(s: &str) -> Result<Self, UsageError> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("auto") {
            return Ok(GradingChoice::Auto);
        }
        s.parse().map(GradingChoice::Ratio).map_err(|_| usage(format!("k must be a number or 'auto', got '{s}'")))
    }
}

impl fmt::Display for GradingChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GradingChoice::Auto => f.write_str("auto"),
            GradingChoice::Ratio(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub delta: f64,
    /// The shift `L`.
    #[serde(rename = "L")]
    pub shift: f64,
    pub k: GradingChoice,
    /// Weight exponent: used for `k = auto` and as the norm index `𝒦ᵐₐ`.
    pub a: f64,
    pub m: u32,
    /// Finest refinement level.
    pub levels: u32,
    pub r_c: f64,
    /// Relative residual tolerance of the linear and eigenvalue solvers.
    pub tol: f64,
    /// Exponent `γ` of the interpolated function `ψ(r) r^γ`.
    pub gamma: f64,
    /// Use the `𝒦ᵐₐ` seminorm for errors.
    pub seminorm: bool,
    /// Also estimate `κ` in source and eigen modes.
    pub condition: bool,
    /// Eigen mode: seek the smallest eigenvalue above the constants.
    pub deflate: bool,
    pub out: Option<PathBuf>,
    /// Write one VTK file per level.
    pub vtk: bool,
    /// Write the system matrix of every level in Matrix Market format.
    pub dump_matrices: bool,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            mode: Mode::Source,
            delta: 4.0,
            shift: 0.0,
            k: GradingChoice::Auto,
            a: 1.0,
            m: 1,
            levels: 5,
            r_c: PotentialSpec::DEFAULT_RC,
            tol: 1e-10,
            gamma: 0.3,
            seminorm: false,
            condition: false,
            deflate: false,
            out: None,
            vtk: false,
            dump_matrices: false,
            threads: None,
        }
    }
}

/// Keys accepted in configuration files, in output order.
pub const KEYS: &[&str] = &[
    "mode", "delta", "L", "k", "a", "m", "levels", "rc", "tol", "gamma", "seminorm", "condition",
    "deflate", "out", "vtk", "dump_matrices", "threads",
];

fn parse_bool(key: &str, v: &str) -> Result<bool, UsageError> {
    match v.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(usage(format!("{key} must be a boolean, got '{v}'"))),
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, UsageError> {
    v.trim().parse().map_err(|_| usage(format!("{key}: cannot parse '{}'", v.trim())))
}

impl ExperimentConfig {
    /// Sets one key. Keys are case-sensitive except that `l` is accepted for `L`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        match key {
            "mode" => self.mode = value.parse()?,
            "delta" => self.delta = parse_num(key, value)?,
            "L" | "l" => self.shift = parse_num(key, value)?,
            "k" => self.k = value.parse()?,
            "a" => self.a = parse_num(key, value)?,
            "m" => self.m = parse_num(key, value)?,
            "levels" => self.levels = parse_num(key, value)?,
            "rc" | "r_c" => self.r_c = parse_num(key, value)?,
            "tol" => self.tol = parse_num(key, value)?,
            "gamma" => self.gamma = parse_num(key, value)?,
            "seminorm" => self.seminorm = parse_bool(key, value)?,
            "condition" => self.condition = parse_bool(key, value)?,
            "deflate" => self.deflate = parse_bool(key, value)?,
            "out" => {
                let v = value.trim();
                self.out = (!v.is_empty()).then(|| PathBuf::from(v));
            }
            "vtk" => self.vtk = parse_bool(key, value)?,
            "dump_matrices" => self.dump_matrices = parse_bool(key, value)?,
            "threads" => self.threads = Some(parse_num(key, value)?),
            _ => return Err(usage(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Applies a `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), UsageError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected key = value, got '{line}'", n + 1)))?;
            self.set(key.trim(), value).map_err(|e| usage(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    /// The configuration as a file that [`ExperimentConfig::apply_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let value = match *key {
                "mode" => self.mode.to_string(),
                "delta" => self.delta.to_string(),
                "L" => self.shift.to_string(),
                "k" => self.k.to_string(),
                "a" => self.a.to_string(),
                "m" => self.m.to_string(),
                "levels" => self.levels.to_string(),
                "rc" => self.r_c.to_string(),
                "tol" => self.tol.to_string(),
                "gamma" => self.gamma.to_string(),
                "seminorm" => self.seminorm.to_string(),
                "condition" => self.condition.to_string(),
                "deflate" => self.deflate.to_string(),
                "out" => self.out.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
                "vtk" => self.vtk.to_string(),
                "dump_matrices" => self.dump_matrices.to_string(),
                "threads" => match self.threads {
                    Some(t) => t.to_string(),
                    None => continue,
                },
                _ => unreachable!(),
            };
            s.push_str(key);
            s.push_str(" = ");
            s.push_str(&value);
            s.push('\n');
        }
        s
    }

    /// The grading ratio, resolving `auto`.
    pub fn ratio(&self) -> Result<f64, UsageError> {
        match self.k {
            GradingChoice::Ratio(k) => Ok(k),
            GradingChoice::Auto => GradingParams::from_weight(self.a, self.m)
                .map(|g| g.k)
                .map_err(|e| usage(format!("k = auto: {e}"))),
        }
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if !(self.delta > -0.25) || !self.delta.is_finite() {
            return Err(usage(format!("delta = {} must exceed -1/4", self.delta)));
        }
        if self.m != 1 {
            return Err(usage(format!("m = {}: only linear elements (m = 1) are implemented", self.m)));
        }
        let k = self.ratio()?;
        if !(k > 0.0 && k <= 0.5) {
            return Err(usage(format!("k = {k} outside (0, 0.5]")));
        }
        if self.levels < 2 {
            return Err(usage(format!("levels = {} must be at least 2", self.levels)));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(usage(format!("tol = {} outside (0, 1)", self.tol)));
        }
        if !(self.a.is_finite()) {
            return Err(usage(format!("a = {} is not finite", self.a)));
        }
        if self.threads == Some(0) {
            return Err(usage("threads must be positive"));
        }
        if (self.vtk || self.dump_matrices) && self.out.is_none() {
            return Err(usage("vtk and dump_matrices need an output directory (--out)"));
        }
        self.potential()?;
        Ok(())
    }

    pub fn potential(&self) -> Result<PotentialSpec, UsageError> {
        PotentialSpec::single(self.delta, self.shift)
            .and_then(|p| p.with_cutoff(self.r_c))
            .map_err(|e| usage(e.to_string()))
    }

    /// The core study configuration.
    pub fn study(&self) -> Result<StudyConfig, UsageError> {
        self.validate()?;
        let potential = self.potential()?;
        let mut grading = GradingParams::new(self.ratio()?).map_err(|e| usage(e.to_string()))?.with_degree(self.m);
        if let Some(eta) = potential.eta() {
            grading = grading.with_eta(eta);
        }
        if self.k == GradingChoice::Auto {
            grading.a = Some(self.a);
        }
        let mut study = StudyConfig::new(potential, grading, self.levels);
        study.solver = PcgOptions { tol: self.tol, ..PcgOptions::default() };
        study.eigen_tol = self.tol;
        let mut norm = WeightedNormParams::new(self.m, self.a).map_err(|e| usage(e.to_string()))?;
        if self.seminorm {
            norm = norm.seminorm();
        }
        study.norm = norm;
        study.condition = self.condition || self.mode == Mode::Condition;
        study.deflate_constants = self.deflate;
        // Above the constants the lowest eigenvalue is repeated whenever the
        // potential respects the cube's symmetries (six-fold for δ = 0).
        study.eigen_block = if self.deflate { 8 } else { 1 };
        Ok(study)
    }
}
