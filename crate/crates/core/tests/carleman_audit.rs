mod common;

use common::{coefficient, problem};
use degen_core::carleman::{build_weights, cacciopoli_audit, carleman_audit, AuditConfig, Variant};
use degen_core::DriftEnvelope;

#[test]
fn audit_ratios_are_finite_and_grid_stable() {
    let a = coefficient("sqrt");
    let w = build_weights(&a, (0.3, 0.9), 0.5, 1.0, 2.0).unwrap();
    let cfg = AuditConfig {
        samples: 12,
        s_values: vec![1.0, 4.0, 16.0],
        seed: 3,
    };
    let coarse = carleman_audit(
        &problem(a.clone(), DriftEnvelope::zero(), 48, 96, 0.5),
        &w,
        Variant::Theorem,
        &cfg,
    )
    .unwrap();
    let fine = carleman_audit(
        &problem(a, DriftEnvelope::zero(), 96, 96, 0.5),
        &w,
        Variant::Theorem,
        &cfg,
    )
    .unwrap();
    assert!(coarse.bounded_beyond_s0() && fine.bounded_beyond_s0());
    for (c, f) in coarse.rows.iter().zip(&fine.rows) {
        assert!(c.max_ratio > 0.0 && c.median_ratio <= c.max_ratio);
        assert!((f.max_ratio / c.max_ratio - 1.0).abs() < 0.2, "s = {}", c.s);
    }
}

#[test]
fn cacciopoli_ratio_is_finite_and_grid_stable() {
    let a = coefficient("sqrt");
    let w = build_weights(&a, (0.3, 0.9), 1.0, 1.0, 2.0).unwrap();
    let run = |n| {
        cacciopoli_audit(
            &problem(a.clone(), DriftEnvelope::zero(), n, 96, 1.0),
            &w,
            0.01,
            12,
            4,
        )
        .unwrap()
    };
    let (c_max, c_med) = run(48);
    let (f_max, _) = run(96);
    assert!(c_max.is_finite() && c_med <= c_max);
    assert!(((f_max - c_max).exp() - 1.0).abs() < 0.25, "{c_max} vs {f_max}");
}

#[test]
fn cacciopoli_log_ratio_survives_short_horizons() {
    let a = coefficient("sqrt");
    let w = build_weights(&a, (0.3, 0.9), 0.5, 1.0, 2.0).unwrap();
    let p = problem(a, DriftEnvelope::zero(), 48, 96, 0.5);
    let (max, median) = cacciopoli_audit(&p, &w, 0.01, 8, 4).unwrap();
    assert!(max.is_finite() && median.is_finite());
    assert!(max.exp() == 0.0, "ratio itself underflows here");
}
