//! Construction of core objects from configuration keys.

use std::sync::Arc;

use degen_core::coefficients::{validate_coefficient, Profile};
use degen_core::mesh::build_grid;
use degen_core::sampling::sample_rng;
use degen_core::semilinear::Nonlinearity;
use degen_core::{
    Case, Declaration, DegeneracyCoefficient, DriftEnvelope, GridSpec, LinearProblem,
    SpaceTimeField, StateVector, ValidationReport,
};
use rand::Rng;

use crate::config::{Config, ConfigError};
use crate::CliError;

pub const DEFAULT_N: usize = 64;
pub const DEFAULT_M: usize = 128;
pub const DEFAULT_T: f64 = 0.5;
pub const DEFAULT_OMEGA: (f64, f64) = (0.3, 0.9);
pub const DEFAULT_HYPOTHESIS_SAMPLES: usize = 256;

pub fn profile(cfg: &Config) -> Result<Profile, CliError> {
    let kind = cfg.str_or("a.kind", "power");
    Ok(match kind {
        "power" => Profile::power(cfg.f64("a.alpha")?),
        "constant" => {
            let v = cfg.f64_or("a.value", 1.0)?;
            if !(v > 0.0) {
                return Err(ConfigError::invalid(
                    "a.value",
                    "constant coefficient must be positive",
                )
                .into());
            }
            Profile::constant(v)
        }
        "table" => Profile::from_csv(cfg.path("a.file")?)?,
        "catalog" | "expr-catalog" => Profile::catalog(cfg.require("a.name")?)?,
        other => {
            return Err(ConfigError::invalid(
                "a.kind",
                format!("'{other}' is not one of power, constant, table, catalog"),
            )
            .into())
        }
    })
}

pub fn declaration(cfg: &Config) -> Result<Declaration, CliError> {
    let case = match cfg.raw("a.case") {
        None => None,
        Some(s) => Some(match s.to_ascii_lowercase().as_str() {
            "wdp" => Case::Wdp,
            "sdp" => Case::Sdp,
            _ => {
                return Err(
                    ConfigError::invalid("a.case", format!("'{s}' is not WDP or SDP")).into(),
                )
            }
        }),
    };
    let k = match cfg.raw("a.K") {
        None => None,
        Some(_) => Some(cfg.f64("a.K")?),
    };
    Ok(Declaration { case, k })
}

/// Validated coefficient plus the report (absent for constant coefficients,
/// which are not degenerate and bypass the hypothesis gate).
pub fn coefficient(
    cfg: &Config,
) -> Result<(DegeneracyCoefficient, Option<ValidationReport>), CliError> {
    if cfg.str_or("a.kind", "power") == "constant" {
        let v = cfg.f64_or("a.value", 1.0)?;
        profile(cfg)?;
        return Ok((DegeneracyCoefficient::uniform(v), None));
    }
    let (profile, report) = validation(cfg)?;
    let a = DegeneracyCoefficient::from_report(profile, &report)?;
    Ok((a, Some(report)))
}

pub fn validation(cfg: &Config) -> Result<(Profile, ValidationReport), CliError> {
    let profile = profile(cfg)?;
    let n = cfg.usize_or("hypothesis.samples", DEFAULT_HYPOTHESIS_SAMPLES)?;
    let report = validate_coefficient(&profile, declaration(cfg)?, n)?;
    Ok((profile, report))
}

pub fn beta(cfg: &Config) -> Result<Arc<dyn Fn(f64) -> f64 + Send + Sync>, CliError> {
    let scale = cfg.f64_or("beta.scale", 1.0)?;
    Ok(match cfg.str_or("beta.kind", "linear") {
        "linear" => Arc::new(move |x| scale * x),
        "zero" => Arc::new(|_| 0.0),
        "oscillating" => {
            Arc::new(move |x| scale * x * (1.0 + 0.5 * (8.0 * std::f64::consts::PI * x).sin()))
        }
        "sqrt" => Arc::new(move |x: f64| scale * x.sqrt()),
        other => {
            return Err(ConfigError::invalid(
                "beta.kind",
                format!("'{other}' is not one of linear, zero, oscillating, sqrt"),
            )
            .into())
        }
    })
}

pub fn drift(cfg: &Config, a: &DegeneracyCoefficient) -> Result<DriftEnvelope, CliError> {
    let b = cfg.f64_or("b.value", 0.0)?;
    let c = cfg.f64_or("c.value", 0.0)?;
    let n = cfg.usize_or("hypothesis.samples", DEFAULT_HYPOTHESIS_SAMPLES)?;
    Ok(DriftEnvelope::new(
        beta(cfg)?,
        SpaceTimeField::Constant(b),
        SpaceTimeField::Constant(c),
        a,
        n,
    )?)
}

pub fn grid(cfg: &Config) -> Result<GridSpec, CliError> {
    let n = cfg.usize_or("grid.N", DEFAULT_N)?;
    let gamma = cfg.f64_or("grid.gamma", 1.0)?;
    if !(gamma >= 1.0) {
        return Err(
            ConfigError::invalid("grid.gamma", "grading exponent must be at least 1").into(),
        );
    }
    Ok(build_grid(n, gamma)?)
}

pub fn omega(cfg: &Config) -> Result<(f64, f64), CliError> {
    match cfg.raw("omega") {
        None => Ok(DEFAULT_OMEGA),
        Some(_) => {
            let v = cfg.list("omega")?;
            if v.len() != 2 {
                return Err(ConfigError::invalid("omega", "expected two numbers `lo, hi`").into());
            }
            Ok((v[0], v[1]))
        }
    }
}

pub fn initial_datum(
    cfg: &Config,
    grid: &GridSpec,
    case: Case,
    seed: u64,
) -> Result<StateVector, CliError> {
    let pi = std::f64::consts::PI;
    let n = grid.len();
    Ok(match cfg.str_or("y0.kind", "sine") {
        "sine" => StateVector::from_fn(grid, |x| (pi * x).sin()),
        "zero" => StateVector::zeros(n),
        "gaussian" => StateVector::from_fn(grid, |x| (-((x - 0.5) / 0.1).powi(2)).exp()),
        "noise" => {
            let mut rng = sample_rng(seed, u64::MAX);
            let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            v[n - 1] = 0.0;
            if case == Case::Wdp {
                v[0] = 0.0;
            }
            StateVector(v)
        }
        other => {
            return Err(ConfigError::invalid(
                "y0.kind",
                format!("'{other}' is not one of sine, zero, gaussian, noise"),
            )
            .into())
        }
    })
}

pub fn problem(cfg: &Config, seed: u64) -> Result<LinearProblem, CliError> {
    let (a, _) = coefficient(cfg)?;
    let drift = drift(cfg, &a)?;
    let grid = grid(cfg)?;
    let y0 = initial_datum(cfg, &grid, a.case(), seed)?;
    let horizon = cfg.f64_or("T", DEFAULT_T)?;
    let steps = cfg.usize_or("time.M", DEFAULT_M)?;
    Ok(LinearProblem::new(
        a,
        drift,
        horizon,
        omega(cfg)?,
        grid,
        steps,
        y0,
    )?)
}

pub fn nonlinearity(cfg: &Config, drift: &DriftEnvelope) -> Result<Nonlinearity, CliError> {
    let spec = cfg.str_or("nl", "zero");
    Nonlinearity::catalog(spec, drift).map_err(|e| ConfigError::invalid("nl", e.to_string()).into())
}
