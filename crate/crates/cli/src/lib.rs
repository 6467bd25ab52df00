//! Configuration-driven experiment runner.
//!
//! A run reads one `key = value` file, executes its `command`, and writes
//! comma-separated tables plus `summary.txt` into the output directory.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config;
mod setup;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

pub use config::{Config, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Solve,
    Control,
    Semilinear,
    CarlemanAudit,
    Observability,
    Sweep,
}

impl FromStr for Command {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "validate" => Command::Validate,
            "solve" => Command::Solve,
            "control" => Command::Control,
            "semilinear" => Command::Semilinear,
            "carleman-audit" => Command::CarlemanAudit,
            "observability" => Command::Observability,
            "sweep" => Command::Sweep,
            other => {
                return Err(ConfigError::invalid(
                    "command",
                    format!(
                        "'{other}' is not one of validate, solve, control, semilinear, carleman-audit, observability, sweep"
                    ),
                ))
            }
        })
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Validate => "validate",
            Command::Solve => "solve",
            Command::Control => "control",
            Command::Semilinear => "semilinear",
            Command::CarlemanAudit => "carleman-audit",
            Command::Observability => "observability",
            Command::Sweep => "sweep",
        })
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] degen_core::Error),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    /// 1 for configuration and i/o problems, 2 for hypothesis or input
    /// validation failures, 3 for solver failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Core(degen_core::Error::Io(_)) => 1,
            CliError::Core(e) if e.is_validation() => 2,
            CliError::Core(_) => 3,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "ConfigError",
            CliError::Io(_) => "Io",
            CliError::Core(e) => e.code(),
        }
    }

    /// `ERROR <code>: <message>` on one line.
    pub fn error_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("ERROR {}: {msg}", self.code())
    }
}

/// Files of one run: tables plus the summary, written in a fixed order.
pub struct Output {
    dir: PathBuf,
    files: Vec<String>,
    summary: Vec<(String, String)>,
}

impl Output {
    fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            summary: Vec::new(),
        })
    }

    pub fn table(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
    ) -> Result<(), CliError> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join(name))?);
        write(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl fmt::Display) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn finish(mut self) -> Result<Outcome, CliError> {
        let mut w = BufWriter::new(fs::File::create(self.dir.join("summary.txt"))?);
        for (k, v) in &self.summary {
            writeln!(w, "{k}: {v}")?;
        }
        w.flush()?;
        self.files.push("summary.txt".into());
        Ok(Outcome {
            out_dir: self.dir,
            files: self.files,
            summary: self.summary,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: Vec<(String, String)>,
}

impl Outcome {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

/// Load `config_path` and run it. `out` and `seed` override the `output`
/// and `seed` keys.
pub fn run(config_path: &Path, out: Option<&Path>, seed: Option<u64>) -> Result<Outcome, CliError> {
    let cfg = Config::load(config_path)?;
    run_config(&cfg, out, seed)
}

pub fn run_config(
    cfg: &Config,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<Outcome, CliError> {
    let command: Command = cfg.require("command")?.parse()?;
    let seed = match seed {
        Some(s) => s,
        None => cfg.u64_or("seed", 0)?,
    };
    let dir = match out {
        Some(d) => d.to_path_buf(),
        None => PathBuf::from(cfg.str_or("output", "out")),
    };
    let mut output = Output::new(&dir)?;
    output.note("command", command);
    output.note("seed", seed);
    // A failed run still leaves the partial summary behind for inspection.
    match commands::execute(command, cfg, seed, &mut output) {
        Ok(()) => output.finish(),
        Err(e) => {
            output.note("error", e.error_line());
            output.finish()?;
            Err(e)
        }
    }
}
