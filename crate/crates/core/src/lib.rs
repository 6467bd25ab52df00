//! Numerical null controllability of one-dimensional degenerate parabolic
//! equations
//!
//! `y_t - (a(x) y_x)_x + f(x, t, y, y_x) = h 1_w` on `(0,1) x (0,T)`,
//!
//! where `a` vanishes at `x = 0`. The crate validates the degeneracy
//! hypotheses, discretizes the equation with a flux-form finite-volume
//! operator and implicit Euler stepping whose adjoint is the exact discrete
//! transpose, computes penalized minimal-norm controls by conjugate
//! gradients, iterates frozen-coefficient controls for semilinear terms,
//! and audits Carleman, observability, Hardy and Cacciopoli inequalities on
//! random solution ensembles.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod carleman;
pub mod coefficients;
pub mod control;
pub mod error;
pub mod mesh;
pub mod pde;
pub mod quadrature;
pub mod sampling;
pub mod semilinear;
pub mod tridiag;

pub use coefficients::{
    validate_beta, validate_coefficient, Case, Declaration, DegeneracyCoefficient, DriftEnvelope,
    Profile, SpaceTimeField, ValidationReport,
};
pub use error::{Error, Result};
pub use mesh::{
    assemble_operator, build_grid, hardy_check, GridSpec, StateVector, TriDiagOperator,
};
pub use pde::{
    duality_residual, solve_adjoint, solve_forward, ControlField, LinearProblem, Propagator,
    Trajectory,
};
