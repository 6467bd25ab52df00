mod common;

use std::f64::consts::PI;

use common::coefficient;
use degen_core::mesh::Discretization;
use degen_core::{build_grid, hardy_check};
use nalgebra::{DMatrix, SymmetricEigen};

/// Largest generalized eigenvalue of `W v = mu S v` by a dense solve of
/// `W^{-1/2} S W^{-1/2}`.
fn dense_hardy(name: &str, n: usize) -> f64 {
    let grid = build_grid(n, 1.0).unwrap();
    let disc = Discretization::new(&grid, &coefficient(name), |x| x);
    let s = disc.stiffness();
    let w = disc.weights();
    let k = disc.n_unknowns();
    let m = DMatrix::from_fn(k, k, |i, j| {
        let v = if i == j {
            s.diag[i]
        } else if j + 1 == i {
            s.sub[i]
        } else if i + 1 == j {
            s.sup[i]
        } else {
            0.0
        };
        v / (w[i] * w[j]).sqrt()
    });
    let lambda_min = SymmetricEigen::new(m).eigenvalues.min();
    1.0 / lambda_min
}

#[test]
fn heat_constant_is_inverse_pi_squared() {
    let dense = dense_hardy("heat", 128);
    assert!(
        (dense - 1.0 / (PI * PI)).abs() < 1e-3 / (PI * PI),
        "{dense}"
    );
    let sampled = hardy_check(&build_grid(128, 1.0).unwrap(), &coefficient("heat"), 8, 0).unwrap();
    assert!(
        (sampled - dense).abs() <= 1e-6 * dense,
        "{sampled} vs {dense}"
    );
}

#[test]
fn degenerate_constants_match_dense_oracle() {
    for name in ["sqrt", "x1.5"] {
        let grid = build_grid(64, 1.0).unwrap();
        let dense = dense_hardy(name, 64);
        let sampled = hardy_check(&grid, &coefficient(name), 8, 1).unwrap();
        assert!(sampled <= dense * (1.0 + 1e-12));
        assert!(
            (sampled - dense).abs() <= 1e-6 * dense,
            "{name}: {sampled} vs {dense}"
        );
    }
}
