#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use degen_core::{
    build_grid, DegeneracyCoefficient, DriftEnvelope, LinearProblem, SpaceTimeField, StateVector,
};

pub fn coefficient(name: &str) -> DegeneracyCoefficient {
    match name {
        "heat" => DegeneracyCoefficient::uniform(1.0),
        "sqrt" => DegeneracyCoefficient::power(0.5).unwrap(),
        "x1.5" => DegeneracyCoefficient::power(1.5).unwrap(),
        other => panic!("unknown coefficient {other}"),
    }
}

/// Time-dependent zero- and first-order terms, to exercise per-step factors
/// and the upwind stencil in both directions.
pub fn rough_drift(a: &DegeneracyCoefficient) -> DriftEnvelope {
    DriftEnvelope::new(
        Arc::new(|x| x * (1.0 - 0.5 * x)),
        SpaceTimeField::Function(Arc::new(|x, t| 0.3 + x * t)),
        SpaceTimeField::Function(Arc::new(|x, t| (4.0 * x - 2.0 + t).sin())),
        a,
        256,
    )
    .unwrap()
}

pub fn problem(
    a: DegeneracyCoefficient,
    drift: DriftEnvelope,
    n: usize,
    m: usize,
    horizon: f64,
) -> LinearProblem {
    let grid = build_grid(n, 1.0).unwrap();
    let y0 = StateVector::from_fn(&grid, |x| (PI * x).sin());
    LinearProblem::new(a, drift, horizon, (0.3, 0.9), grid, m, y0).unwrap()
}
