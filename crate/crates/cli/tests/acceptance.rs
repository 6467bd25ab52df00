//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria listed in `KNOWN_FAILING` are still evaluated and reported as
//! FAIL; they do not fail the run, but an unexpected pass does, so the list
//! is revisited whenever behaviour changes.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use degen_core::carleman::{build_weights, carleman_audit, AuditConfig, Variant};
use degen_core::coefficients::{validate_coefficient, Profile};
use degen_core::control::{epsilon_sweep, fit_slope, hum_solve, observability_estimate};
use degen_core::pde::Propagator;
use degen_core::sampling::sample_rng;
use degen_core::semilinear::{picard_null_control, two_phase_control, Nonlinearity};
use degen_core::{
    build_grid, duality_residual, solve_forward, Case, ControlField, Declaration,
    DegeneracyCoefficient, DriftEnvelope, LinearProblem, SpaceTimeField, StateVector,
};
use rand::Rng;
use rand_distr::StandardNormal;
use sha2::{Digest, Sha256};

const KNOWN_FAILING: &[usize] = &[9];

type Criterion = (&'static str, fn() -> Verdict);

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn coefficient(name: &str) -> DegeneracyCoefficient {
    match name {
        "a=1" => DegeneracyCoefficient::uniform(1.0),
        "a=x^0.5" => DegeneracyCoefficient::power(0.5).unwrap(),
        "a=x^1.5" => DegeneracyCoefficient::power(1.5).unwrap(),
        other => panic!("unknown coefficient {other}"),
    }
}

fn problem(
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

fn normal(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn rel_change(a: f64, b: f64) -> f64 {
    (b - a).abs() / a.abs()
}

fn c1_hypothesis_gate() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut ok = true;
    for alpha in [0.25, 0.5, 0.75, 1.0, 1.5, 1.9] {
        let r = validate_coefficient(&Profile::power(alpha), Declaration::default(), 256).unwrap();
        let expected = if alpha < 1.0 { Case::Wdp } else { Case::Sdp };
        worst = worst.max((r.k - alpha).abs());
        ok &= r.passed() && r.case == expected && (r.k - alpha).abs() <= 1e-8;
    }
    let rejected = match validate_coefficient(&Profile::power(2.0), Declaration::default(), 256) {
        Err(_) => true,
        Ok(r) => !r.passed(),
    };
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        ok && rejected && elapsed < 1.0,
        format!("max |K - alpha| = {worst:.1e}, alpha = 2 rejected: {rejected}, {elapsed:.3} s"),
    )
}

fn c2_duality() -> Verdict {
    let drift = |a: &DegeneracyCoefficient| {
        DriftEnvelope::new(
            Arc::new(|x| x * (1.0 - 0.5 * x)),
            SpaceTimeField::Function(Arc::new(|x, t| 0.3 + x * t)),
            SpaceTimeField::Function(Arc::new(|x, t| (4.0 * x - 2.0 + t).sin())),
            a,
            256,
        )
        .unwrap()
    };
    let mut worst = 0.0_f64;
    for name in ["a=x^0.5", "a=x^1.5", "a=1"] {
        let a = coefficient(name);
        for d in [DriftEnvelope::zero(), drift(&a)] {
            let p = problem(a.clone(), d, 64, 64, 0.5);
            let mask = p.omega_mask();
            for k in 0..20 {
                let mut rng = sample_rng(2024, k);
                let y0 = StateVector(normal(&mut rng, 64));
                let h =
                    ControlField::masked((0..64).map(|_| normal(&mut rng, 64)).collect(), &mask);
                let v_t = StateVector(normal(&mut rng, 64));
                worst = worst.max(duality_residual(&p, &y0, &h, &v_t).unwrap());
            }
        }
    }
    // Brute-force transpose at N = M = 12.
    let mut worst_t = 0.0_f64;
    for name in ["a=x^0.5", "a=x^1.5", "a=1"] {
        let a = coefficient(name);
        let p = problem(a.clone(), drift(&a), 12, 12, 0.5);
        let prop = Propagator::new(&p).unwrap();
        let w = p.grid.weights();
        let unit = |j: usize| {
            let mut e = vec![0.0; 12];
            e[j] = 1.0;
            e
        };
        let first = prop.discretization().first();
        let nu = prop.discretization().n_unknowns();
        for j in first..first + nu {
            let fwd = prop.forward_final(&unit(j), None);
            for i in first..first + nu {
                let adj = prop.adjoint(&unit(i)).initial()[j];
                worst_t = worst_t.max((adj - fwd[i] * w[i] / w[j]).abs());
            }
        }
    }
    verdict(
        worst <= 1e-10 && worst_t <= 1e-12,
        format!("max duality residual {worst:.2e}, transpose mismatch {worst_t:.2e}"),
    )
}

fn heat_error(n: usize, m: usize, horizon: f64) -> f64 {
    let p = problem(coefficient("a=1"), DriftEnvelope::zero(), n, m, horizon);
    let y = solve_forward(&p, &ControlField::zeros(m, n)).unwrap();
    let x = p.grid.nodes();
    let mut err = 0.0_f64;
    for k in 0..=m {
        let t = p.time(k);
        for (i, v) in y.state(k).iter().enumerate() {
            err = err.max((v - (-PI * PI * t).exp() * (PI * x[i]).sin()).abs());
        }
    }
    err
}

fn c3_heat_oracle() -> Verdict {
    let err = heat_error(128, 256, 0.1);
    let ms = [16usize, 32, 64, 128];
    let ldt: Vec<f64> = ms.iter().map(|m| (0.5 / *m as f64).ln()).collect();
    let lerr: Vec<f64> = ms.iter().map(|m| heat_error(512, *m, 0.5).ln()).collect();
    let order = fit_slope(&ldt, &lerr);
    verdict(
        err <= 2e-3 && (order - 1.0).abs() <= 0.2,
        format!("max error {err:.3e} (T = 0.1), temporal order {order:.3}"),
    )
}

fn c4_weights() -> Verdict {
    let a = coefficient("a=x^0.5");
    let w = build_weights(&a, (0.3, 0.9), 0.5, 1.0, 2.0).unwrap();
    let mut min_psi = f64::INFINITY;
    let mut min_deta = f64::INFINITY;
    for n in [64, 128, 256] {
        let grid = build_grid(n, 1.0).unwrap();
        for &x in grid.nodes() {
            min_psi = min_psi.min(w.psi_deg(x));
            if x > w.kappa_plus && x < 0.9 {
                min_deta = min_deta.min(w.eta_deriv(x).abs());
            }
        }
    }
    let ok = min_psi > 0.0
        && (w.c2 - 0.7).abs() <= 1e-12
        && w.c2 > 2.0 / 3.0
        && w.kappa_minus == 0.5
        && w.kappa_plus == 0.7
        && min_deta > 0.0;
    verdict(
        ok,
        format!(
            "c2 = {}, kappa = ({}, {}), min psi_deg = {min_psi:.4}, min |eta'| on (kappa+, 0.9) = {min_deta:.4}",
            w.c2, w.kappa_minus, w.kappa_plus
        ),
    )
}

fn c5_carleman() -> Verdict {
    let start = Instant::now();
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["a=x^0.5", "a=x^1.5"] {
        let a = coefficient(name);
        let w = build_weights(&a, (0.3, 0.9), 0.5, 1.0, 2.0).unwrap();
        for variant in [Variant::Lemma, Variant::Theorem] {
            let cfg = AuditConfig {
                samples: 50,
                s_values: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
                seed: 5,
            };
            let coarse = carleman_audit(
                &problem(a.clone(), DriftEnvelope::zero(), 64, 128, 0.5),
                &w,
                variant,
                &cfg,
            )
            .unwrap();
            let fine = carleman_audit(
                &problem(a.clone(), DriftEnvelope::zero(), 128, 128, 0.5),
                &w,
                variant,
                &cfg,
            )
            .unwrap();
            let change = coarse
                .rows
                .iter()
                .zip(&fine.rows)
                .filter(|(r, _)| r.s >= coarse.s0.unwrap_or(0.0))
                .map(|(c, f)| rel_change(c.max_ratio, f.max_ratio))
                .fold(0.0, f64::max);
            ok &= coarse.bounded_beyond_s0() && fine.bounded_beyond_s0() && change <= 0.2;
            let s0 = coarse.s0.map_or("none".to_string(), |s| s.to_string());
            parts.push(format!(
                "{name} {variant}: s0 {s0}, change {:.1}%",
                100.0 * change
            ));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        ok && elapsed < 300.0,
        format!("{}; {elapsed:.1} s", parts.join("; ")),
    )
}

fn c6_observability() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["a=1", "a=x^0.5", "a=x^1.5"] {
        let q: Vec<f64> = [64, 128]
            .iter()
            .map(|&n| {
                let p = problem(coefficient(name), DriftEnvelope::zero(), n, 128, 0.5);
                observability_estimate(&p, 100, 5, 9).unwrap().max_quotient
            })
            .collect();
        let change = rel_change(q[0], q[1]);
        ok &= q.iter().all(|v| v.is_finite()) && change <= 0.25;
        parts.push(format!(
            "{name}: {:.4e} -> {:.4e} ({:.1}%)",
            q[0],
            q[1],
            100.0 * change
        ));
    }
    verdict(ok, parts.join("; "))
}

fn c7_null_control() -> Verdict {
    let eps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["a=1", "a=x^0.5"] {
        for n in [64, 128] {
            let start = Instant::now();
            let p = problem(coefficient(name), DriftEnvelope::zero(), n, 2 * n, 0.5);
            let r = epsilon_sweep(&p, &eps, 1e-10, 500).unwrap();
            let slope = r.slope.unwrap_or(f64::NAN);
            let ratio = r.cost_ratio.unwrap_or(f64::NAN);
            let elapsed = start.elapsed().as_secs_f64();
            ok &= (0.35..=0.65).contains(&slope)
                && ratio <= 10.0
                && r.worst_optimality <= 10.0 * 1e-10
                && elapsed < 180.0;
            parts.push(format!(
                "{name} N={n}: slope {slope:.3}, cost ratio {ratio:.2}, optimality {:.1e}",
                r.worst_optimality
            ));
        }
    }
    verdict(ok, parts.join("; "))
}

fn c8_semilinear() -> Verdict {
    let mut ok = true;
    let mut constants = Vec::new();
    let mut detail = Vec::new();
    for n in [64, 128] {
        let p = problem(coefficient("a=x^0.5"), DriftEnvelope::zero(), n, 128, 0.5);
        let nl = Nonlinearity::sine(0.5, &p.drift);
        let r = picard_null_control(&p, &nl, 1e-6, 1e-6, 50).unwrap();
        let inc = r.increments();
        let worst_rate = inc.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
        ok &= r.converged && r.iterations <= 20 && worst_rate < 0.5 && r.residual <= 1e-5;
        constants.push(r.cost_constant);
        detail.push(format!(
            "N={n}: {} iters, worst rate {worst_rate:.1e}, residual {:.1e}, C {:.4}",
            r.iterations, r.residual, r.cost_constant
        ));
    }
    let change = rel_change(constants[0], constants[1]);
    ok &= change <= 0.25;
    let p = problem(coefficient("a=x^0.5"), DriftEnvelope::zero(), 64, 128, 0.5);
    let r = picard_null_control(&p, &Nonlinearity::zero(&p.drift), 1e-6, 1e-6, 50).unwrap();
    let lin = hum_solve(&p, 1e-6, 1e-10, 500).unwrap();
    let table = |h: &ControlField| {
        let mut buf = Vec::new();
        h.write_csv(&mut buf, &p.grid, p.dt()).unwrap();
        buf
    };
    let identical = table(&r.hum.h) == table(&lin.h);
    ok &= r.iterations <= 2 && identical;
    detail.push(format!(
        "C change {:.1}%; f = 0: {} iters, control table identical: {identical}",
        100.0 * change,
        r.iterations
    ));
    verdict(ok, detail.join("; "))
}

fn noisy(p: &LinearProblem, seed: u64) -> LinearProblem {
    let n = p.grid.len();
    let mut rng = sample_rng(seed, 0);
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    v[n - 1] = 0.0;
    if p.a.case() == Case::Wdp {
        v[0] = 0.0;
    }
    p.with_y0(StateVector(v))
}

fn c9_two_phase() -> Verdict {
    // Single-phase comparison: control over the whole horizon (0, T) starting
    // from the smoothed datum y(t0).
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, nl_name) in [("a=1", "zero"), ("a=x^0.5", "sine(0.5)")] {
        let p = noisy(
            &problem(coefficient(name), DriftEnvelope::zero(), 64, 128, 0.5),
            17,
        );
        let nl = Nonlinearity::catalog(nl_name, &p.drift).unwrap();
        let two = two_phase_control(&p, &nl, 0.125, 1e-6).unwrap();
        let smoothed = two.phase_one.as_ref().unwrap().y.last().to_vec();
        let single =
            picard_null_control(&p.with_y0(StateVector(smoothed)), &nl, 1e-6, 1e-6, 50).unwrap();
        let ratio = two.norm_y_t / single.norm_y_t;
        ok &= (0.5..=2.0).contains(&ratio);
        parts.push(format!(
            "{name}, f = {nl_name}: |y(T)| two-phase {:.3e}, single-phase {:.3e}, ratio {ratio:.2}",
            two.norm_y_t, single.norm_y_t
        ));
    }
    verdict(ok, parts.join("; "))
}

fn digest_dir(dir: &Path) -> Vec<(String, String)> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    entries.sort();
    entries
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).unwrap();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let hex: String = Sha256::digest(&bytes)
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
            (name, hex)
        })
        .collect()
}

fn c10_determinism() -> Verdict {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut configs: Vec<PathBuf> = std::fs::read_dir(&root)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    configs.sort();
    let tmp = tempfile::tempdir().unwrap();
    let mut ok = !configs.is_empty();
    let mut files = 0;
    for cfg in &configs {
        let stem = cfg.file_stem().unwrap().to_string_lossy().into_owned();
        let run = |tag: &str| {
            let out = tmp.path().join(format!("{stem}-{tag}"));
            let status = Command::new(env!("CARGO_BIN_EXE_degen-control"))
                .arg(cfg)
                .arg("--out")
                .arg(&out)
                .arg("--seed")
                .arg("42")
                .output()
                .unwrap()
                .status;
            (status.success(), digest_dir(&out))
        };
        let (s1, d1) = run("a");
        let (s2, d2) = run("b");
        ok &= s1 && s2 && d1 == d2;
        files += d1.len();
    }
    verdict(
        ok,
        format!(
            "{} configs, {files} files byte-identical across two runs",
            configs.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("hypothesis gate", c1_hypothesis_gate),
        ("duality exactness", c2_duality),
        ("solver accuracy oracle", c3_heat_oracle),
        ("weight validity", c4_weights),
        ("Carleman boundedness audit", c5_carleman),
        ("observability", c6_observability),
        ("null control", c7_null_control),
        ("semilinear fixed point", c8_semilinear),
        ("two-phase control", c9_two_phase),
        ("determinism", c10_determinism),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        let start = Instant::now();
        let v = run();
        let status = if v.passed { "PASS" } else { "FAIL" };
        let known = KNOWN_FAILING.contains(&id);
        let note = if known && !v.passed {
            " (known failure)"
        } else {
            ""
        };
        println!(
            "criterion {id:>2} {status}{note} [{name}] {} ({:.1} s)",
            v.detail,
            start.elapsed().as_secs_f64()
        );
        if v.passed {
            passed += 1;
        }
        if v.passed == known {
            unexpected.push(id);
        }
    }
    println!("{passed}/10 criteria passed");
    if !unexpected.is_empty() {
        println!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}
