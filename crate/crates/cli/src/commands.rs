//! One function per command. Each writes its tables and summary notes
//! into the shared [`Output`].

use std::io::Write;

use degen_core::carleman::{
    build_weights, c2_threshold, cacciopoli_audit, carleman_audit, AuditConfig, AuditReport,
    Variant, DEFAULT_C1, DEFAULT_LAMBDA,
};
use degen_core::control::{
    epsilon_sweep, hum_solve, observability_estimate, DEFAULT_CG_MAX_ITERS, DEFAULT_CG_TOL,
    DEFAULT_EPSILON,
};
use degen_core::mesh::hardy_check;
use degen_core::pde::{fmt17, stability_constant, Propagator};
use degen_core::sampling::sample_rng;
use degen_core::semilinear::{
    picard_with, two_phase_with, PicardOptions, DEFAULT_FP_MAX_ITERS, DEFAULT_FP_TOL,
};
use degen_core::{duality_residual, ControlField, Error, GridSpec, StateVector};
use rand_distr::{Distribution, StandardNormal};

use crate::config::{Config, ConfigError};
use crate::{setup, CliError, Command, Output};

pub fn execute(
    command: Command,
    cfg: &Config,
    seed: u64,
    out: &mut Output,
) -> Result<(), CliError> {
    match command {
        Command::Validate => validate(cfg, seed, out),
        Command::Solve => solve(cfg, seed, out),
        Command::Control => control(cfg, seed, out),
        Command::Semilinear => semilinear(cfg, seed, out),
        Command::CarlemanAudit => carleman(cfg, seed, out),
        Command::Observability => observability(cfg, seed, out),
        Command::Sweep => sweep(cfg, seed, out),
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_state(w: &mut dyn Write, grid: &GridSpec, v: &[f64]) -> std::io::Result<()> {
    writeln!(w, "x,value")?;
    for (x, v) in grid.nodes().iter().zip(v) {
        writeln!(w, "{},{}", fmt17(*x), fmt17(*v))?;
    }
    Ok(())
}

fn cg_settings(cfg: &Config) -> Result<(f64, f64, usize), CliError> {
    let eps = cfg.f64_or("epsilon", DEFAULT_EPSILON)?;
    if !(eps > 0.0) {
        return Err(ConfigError::invalid("epsilon", "penalty must be positive").into());
    }
    Ok((
        eps,
        cfg.f64_or("cg.tol", DEFAULT_CG_TOL)?,
        cfg.usize_or("cg.max_iters", DEFAULT_CG_MAX_ITERS)?,
    ))
}

fn validate(cfg: &Config, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let grid = setup::grid(cfg)?;
    let hardy_samples = cfg.usize_or("hardy.samples", 8)?;
    if cfg.str_or("a.kind", "power") == "constant" {
        let (a, _) = setup::coefficient(cfg)?;
        out.note("classification", "non-degenerate (constant coefficient)");
        let drift = setup::drift(cfg, &a)?;
        out.note("C_beta", drift.c_beta());
        out.note("C_H", hardy_check(&grid, &a, hardy_samples, seed)?);
        return Ok(());
    }
    let (profile, report) = setup::validation(cfg)?;
    out.note("coefficient", profile.label());
    out.note("classification", format!("{}, K={}", report.case, report.k));
    out.note("K_measured", report.k_measured);
    if let Some(sigma) = report.sigma {
        out.note("sigma", sigma);
    }
    out.note("hypothesis_samples", report.n_samples);
    out.table("validation.csv", |w| {
        writeln!(w, "clause,passed,detail")?;
        for c in &report.clauses {
            writeln!(w, "{},{},{}", c.name, c.passed, csv_field(&c.detail))?;
        }
        Ok(())
    })?;
    let a = match degen_core::DegeneracyCoefficient::from_report(profile, &report) {
        Ok(a) => a,
        Err(e) => {
            for c in report.failures() {
                out.note("failed", format!("{}: {}", c.name, c.detail));
            }
            return Err(e.into());
        }
    };
    let drift = setup::drift(cfg, &a)?;
    out.note("C_beta", drift.c_beta());
    out.note("C_H", hardy_check(&grid, &a, hardy_samples, seed)?);
    Ok(())
}

fn describe_problem(out: &mut Output, p: &degen_core::LinearProblem) {
    out.note("classification", format!("{}, K={}", p.a.case(), p.a.k()));
    out.note("C_beta", p.drift.c_beta());
    out.note("N", p.grid.len());
    out.note("M", p.steps);
    out.note("T", p.horizon);
    out.note("omega", format!("({}, {})", p.omega.0, p.omega.1));
}

fn solve(cfg: &Config, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let p = setup::problem(cfg, seed)?;
    describe_problem(out, &p);
    let prop = Propagator::new(&p)?;
    let y = prop.forward(&p.y0, None);
    let grid = &p.grid;
    out.table("trajectory.csv", |w| y.write_csv(w, grid))?;
    out.table("final_state.csv", |w| write_state(w, grid, y.last()))?;
    let mut rng = sample_rng(seed, 0);
    let n = grid.len();
    let mut normal = || -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mask = p.omega_mask();
    let h = ControlField::masked((0..p.steps).map(|_| normal()).collect(), &mask);
    let v_t = StateVector(normal());
    out.note("norm_y0", p.y0.l2_norm(grid));
    out.note("norm_yT", grid.l2_norm(y.last()));
    out.note(
        "stability_constant",
        stability_constant(&p, &y, &ControlField::zeros(p.steps, n)),
    );
    out.note("duality_residual", duality_residual(&p, &p.y0, &h, &v_t)?);
    Ok(())
}

fn control(cfg: &Config, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let p = setup::problem(cfg, seed)?;
    describe_problem(out, &p);
    let (eps, tol, max_iters) = cg_settings(cfg)?;
    let r = hum_solve(&p, eps, tol, max_iters)?;
    let grid = &p.grid;
    out.table("control.csv", |w| r.h.write_csv(w, grid, p.dt()))?;
    out.table("final_state.csv", |w| write_state(w, grid, &r.y_t))?;
    out.table("cg_history.csv", |w| {
        writeln!(w, "iter,residual,functional")?;
        for (k, (res, j)) in r
            .residual_history
            .iter()
            .zip(&r.functional_history)
            .enumerate()
        {
            writeln!(w, "{k},{},{}", fmt17(*res), fmt17(*j))?;
        }
        Ok(())
    })?;
    let y0 = p.y0.l2_norm(grid);
    out.note("epsilon", eps);
    out.note("cg_iters", r.cg_iters);
    out.note("cg_residual", r.cg_residual);
    out.note("norm_y0", y0);
    out.note("norm_yT", r.norm_y_t(grid));
    out.note("cost", r.cost);
    out.note("cost_constant", r.cost_constant);
    out.note("optimality_residual", r.optimality);
    Ok(())
}

fn semilinear(cfg: &Config, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let p = setup::problem(cfg, seed)?;
    describe_problem(out, &p);
    let nl = setup::nonlinearity(cfg, &p.drift)?;
    nl.validate(p.horizon, 1000, seed)?;
    let (epsilon, cg_tol, cg_max_iters) = cg_settings(cfg)?;
    let opts = PicardOptions {
        epsilon,
        fp_tol: cfg.f64_or("fp.tol", DEFAULT_FP_TOL)?,
        max_iters: cfg.usize_or("fp.max_iters", DEFAULT_FP_MAX_ITERS)?,
        cg_tol,
        cg_max_iters,
    };
    let t0 = cfg.f64_or("t0", 0.0)?;
    out.note("nonlinearity", nl.name());
    out.note("lipschitz", nl.lipschitz);
    let r = if t0 > 0.0 {
        two_phase_with(&p, &nl, t0, &opts)?
    } else {
        picard_with(&p, &nl, &opts, 0.0)?
    };
    let grid = &p.grid;
    out.table("fixed_point.csv", |w| r.write_log_csv(w))?;
    out.table("control.csv", |w| r.hum.h.write_csv(w, grid, r.y.dt))?;
    out.table("final_state.csv", |w| write_state(w, grid, r.y.last()))?;
    if let Some(phase) = &r.phase_one {
        out.note("t0", phase.t0);
        out.table("phase_one.csv", |w| phase.y.write_csv(w, grid))?;
    }
    out.note("epsilon", epsilon);
    out.note("fixed_point_iterations", r.iterations);
    out.note("converged", r.converged);
    out.note("last_increment", r.log.last().map_or(0.0, |l| l.increment));
    out.note("semilinear_residual", r.residual);
    out.note("norm_yT", r.norm_y_t);
    out.note("cost_constant", r.cost_constant);
    Ok(())
}

fn variants(cfg: &Config) -> Result<Vec<Variant>, CliError> {
    Ok(match cfg.str_or("carleman.variant", "both") {
        "lemma" => vec![Variant::Lemma],
        "theorem" => vec![Variant::Theorem],
        "both" => vec![Variant::Lemma, Variant::Theorem],
        other => {
            return Err(ConfigError::invalid(
                "carleman.variant",
                format!("'{other}' is not one of lemma, theorem, both"),
            )
            .into())
        }
    })
}

fn carleman(cfg: &Config, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let p = setup::problem(cfg, seed)?;
    describe_problem(out, &p);
    let c1 = cfg.f64_or("carleman.c1", DEFAULT_C1)?;
    let lambda = cfg.f64_or("carleman.lambda", DEFAULT_LAMBDA)?;
    let w = build_weights(&p.a, p.omega, p.horizon, c1, lambda)?;
    w.verify_on_grid(&p.grid)?;
    out.note("c2", w.c2);
    out.note("c2_threshold", c2_threshold(&p.a));
    out.note("kappa_minus", w.kappa_minus);
    out.note("kappa_plus", w.kappa_plus);
    let grid = &p.grid;
    out.table("weights.csv", |out| {
        writeln!(out, "x,psi_deg,psi_cls,xi,eta")?;
        for &x in grid.nodes() {
            writeln!(
                out,
                "{},{},{},{},{}",
                fmt17(x),
                fmt17(w.psi_deg(x)),
                fmt17(w.psi_cls(x)),
                fmt17(w.xi(x)),
                fmt17(w.eta(x))
            )?;
        }
        Ok(())
    })?;
    let audit = AuditConfig {
        samples: cfg.usize_or("carleman.samples", 50)?,
        s_values: cfg.list_or("s_list", &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0])?,
        seed,
    };
    if audit.s_values.is_empty() || audit.s_values.iter().any(|s| !(*s > 0.0)) {
        return Err(ConfigError::invalid("s_list", "values must be positive").into());
    }
    let reports: Vec<AuditReport> = variants(cfg)?
        .into_iter()
        .map(|v| carleman_audit(&p, &w, v, &audit))
        .collect::<Result<_, Error>>()?;
    out.table("carleman_ratios.csv", |w| {
        writeln!(w, "s,variant,max_ratio,median_ratio,n_samples")?;
        for r in &reports {
            for row in &r.rows {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    fmt17(row.s),
                    row.variant,
                    fmt17(row.max_ratio),
                    fmt17(row.median_ratio),
                    row.n_samples
                )?;
            }
        }
        Ok(())
    })?;
    for r in &reports {
        let s0 = r.s0.map_or_else(
            || "none (ratio does not plateau)".to_string(),
            |s| s.to_string(),
        );
        out.note(&format!("s0_{}", r.variant), s0);
        out.note(&format!("bounded_{}", r.variant), r.bounded_beyond_s0());
    }
    let s = cfg.f64_or("cacciopoli.s", 0.01)?;
    let (max, median) = cacciopoli_audit(&p, &w, s, audit.samples, seed)?;
    out.note("cacciopoli_s", s);
    out.note("cacciopoli_max_log10_ratio", max / std::f64::consts::LN_10);
    out.note("cacciopoli_median_log10_ratio", median / std::f64::consts::LN_10);
    Ok(())
}

fn observability(cfg: &Config, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let p = setup::problem(cfg, seed)?;
    describe_problem(out, &p);
    let samples = cfg.usize_or("samples", 100)?;
    let power_iters = cfg.usize_or("power_iters", 5)?;
    let r = observability_estimate(&p, samples, power_iters, seed)?;
    out.table("observability.csv", |w| r.write_csv(w))?;
    out.note("samples", r.samples);
    out.note("observability_quotient", r.max_quotient);
    out.note(
        "sample_max_quotient",
        r.quotients.iter().copied().fold(0.0, f64::max),
    );
    if let Some(q) = r.refined {
        out.note("refined_quotient", q);
    }
    Ok(())
}

fn sweep(cfg: &Config, seed: u64, out: &mut Output) -> Result<(), CliError> {
    let p = setup::problem(cfg, seed)?;
    describe_problem(out, &p);
    let (_, tol, max_iters) = cg_settings(cfg)?;
    let eps = cfg.list_or("eps_list", &[1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])?;
    let r = epsilon_sweep(&p, &eps, tol, max_iters)?;
    out.table("epsilon_sweep.csv", |w| r.write_csv(w))?;
    match r.slope {
        Some(s) => out.note("epsilon_slope", s),
        None => out.note("epsilon_slope", "undefined (zero final state)"),
    }
    match r.cost_ratio {
        Some(c) => out.note("cost_ratio", c),
        None => out.note("cost_ratio", "undefined (zero cost)"),
    }
    out.note("worst_optimality", r.worst_optimality);
    Ok(())
}
