//! Approximate null controls by penalized HUM and observability sampling.
//!
//! The Gramian `L v_T = y(T)` (adjoint from `v_T`, control `1_w v`, forward
//! from zero) is symmetric positive semidefinite in the trapezoid inner
//! product, so `(L + eps I) v = -y_free(T)` is solved by conjugate gradients
//! in that inner product. The control is then `h = 1_w v` and the achieved
//! final state satisfies `y(T) + eps v_T = 0` up to the CG residual.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coefficients::Case;
use crate::error::{Error, Result};
use crate::mesh::{GridSpec, StateVector};
use crate::pde::{fmt17, ControlField, LinearProblem, Propagator};
use crate::sampling::{sample_rng, SampleRng};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_CG_TOL: f64 = 1e-10;
pub const DEFAULT_CG_MAX_ITERS: usize = 500;
/// Replacement draws allowed when a sample is unobserved on `w`.
pub const OBSERVABILITY_RETRIES: usize = 10;

/// `y(T)` for `y_0 = 0` and control `1_w v`, with `v` the adjoint from `v_t`.
pub fn apply_gramian(p: &LinearProblem, v_t: &StateVector) -> Result<StateVector> {
    if v_t.len() != p.grid.len() {
        return Err(Error::InvalidInput(
            "terminal datum has wrong length".into(),
        ));
    }
    let prop = Propagator::new(p)?;
    Ok(gramian(&prop, v_t).into())
}

fn gramian(prop: &Propagator, v_t: &[f64]) -> Vec<f64> {
    let v = prop.adjoint(v_t);
    let h = prop.restrict_to_omega(&v);
    let zero = vec![0.0; v_t.len()];
    prop.forward_final(&zero, Some(&h))
}

#[derive(Debug, Clone)]
pub struct HUMResult {
    pub vhat_t: StateVector,
    pub h: ControlField,
    pub y_t: StateVector,
    /// `||h||^2` over `w x (0,T)`.
    pub cost: f64,
    pub epsilon: f64,
    pub cg_iters: usize,
    /// Final relative CG residual.
    pub cg_residual: f64,
    /// Relative residual after each iteration.
    pub residual_history: Vec<f64>,
    /// Value of the penalized functional after each iteration.
    pub functional_history: Vec<f64>,
    /// `||y(T) + eps v_T||` computed from the final solves.
    pub optimality: f64,
    /// `cost / ||y_0||^2` (0 when `y_0 = 0`).
    pub cost_constant: f64,
}

impl HUMResult {
    pub fn norm_y_t(&self, grid: &GridSpec) -> f64 {
        self.y_t.l2_norm(grid)
    }
}

struct CgOutput {
    x: Vec<f64>,
    iters: usize,
    residuals: Vec<f64>,
    functionals: Vec<f64>,
}

/// Conjugate gradients for `(L + eps I) x = b` in the grid inner product.
fn penalized_cg(
    prop: &Propagator,
    grid: &GridSpec,
    b: &[f64],
    epsilon: f64,
    tol: f64,
    max_iters: usize,
    warm: Option<&[f64]>,
) -> Result<CgOutput> {
    let apply = |u: &[f64]| -> Vec<f64> {
        let mut y = gramian(prop, u);
        for (y, u) in y.iter_mut().zip(u) {
            *y += epsilon * u;
        }
        y
    };
    let b_norm = grid.l2_norm(b);
    let mut x = warm.map_or_else(|| vec![0.0; b.len()], |w| w.to_vec());
    let mut r = if warm.is_some() {
        let ax = apply(&x);
        b.iter().zip(&ax).map(|(b, a)| b - a).collect()
    } else {
        b.to_vec()
    };
    let functional = |x: &[f64], r: &[f64]| -0.5 * (grid.inner(x, b) + grid.inner(x, r));
    let mut rr = grid.inner(&r, &r);
    let mut residuals = vec![rr.sqrt() / b_norm];
    let mut functionals = vec![functional(&x, &r)];
    if rr.sqrt() <= tol * b_norm {
        return Ok(CgOutput {
            x,
            iters: 0,
            residuals,
            functionals,
        });
    }
    let mut d = r.clone();
    for iter in 1..=max_iters {
        let ad = apply(&d);
        let curvature = grid.inner(&d, &ad);
        if !(curvature > 0.0) {
            return Err(Error::NotSpd { iter, curvature });
        }
        let alpha = rr / curvature;
        for i in 0..x.len() {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        let rr_new = grid.inner(&r, &r);
        residuals.push(rr_new.sqrt() / b_norm);
        functionals.push(functional(&x, &r));
        if rr_new.sqrt() <= tol * b_norm {
            return Ok(CgOutput {
                x,
                iters: iter,
                residuals,
                functionals,
            });
        }
        let beta = rr_new / rr;
        for i in 0..d.len() {
            d[i] = r[i] + beta * d[i];
        }
        rr = rr_new;
    }
    let residual = residuals.last().copied().unwrap_or(f64::NAN);
    Err(Error::NoConvergence {
        iters: max_iters,
        residual,
        history: residuals,
    })
}

pub fn hum_solve(
    p: &LinearProblem,
    epsilon: f64,
    cg_tol: f64,
    max_iters: usize,
) -> Result<HUMResult> {
    let prop = Propagator::new(p)?;
    hum_solve_with(&prop, p, epsilon, cg_tol, max_iters, None)
}

/// [`hum_solve`] on a prebuilt propagator, optionally warm-starting CG.
pub fn hum_solve_with(
    prop: &Propagator,
    p: &LinearProblem,
    epsilon: f64,
    cg_tol: f64,
    max_iters: usize,
    warm: Option<&[f64]>,
) -> Result<HUMResult> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(cg_tol > 0.0) {
        return Err(Error::InvalidInput(format!(
            "cg tolerance must be positive, got {cg_tol}"
        )));
    }
    let grid = &p.grid;
    let n = grid.len();
    let y_free = prop.forward_final(&p.y0, None);
    let rhs: Vec<f64> = y_free.iter().map(|v| -v).collect();
    let y0_sq = grid.l2_norm(&p.y0).powi(2);
    if grid.l2_norm(&rhs) == 0.0 {
        return Ok(HUMResult {
            vhat_t: StateVector::zeros(n),
            h: ControlField::zeros(p.steps, n),
            y_t: y_free.into(),
            cost: 0.0,
            epsilon,
            cg_iters: 0,
            cg_residual: 0.0,
            residual_history: vec![0.0],
            functional_history: vec![0.0],
            optimality: 0.0,
            cost_constant: 0.0,
        });
    }
    let CgOutput {
        x: vhat,
        iters,
        residuals,
        functionals,
    } = penalized_cg(prop, grid, &rhs, epsilon, cg_tol, max_iters, warm)?;
    let v = prop.adjoint(&vhat);
    let h = prop.restrict_to_omega(&v);
    let y_t = prop.forward_final(&p.y0, Some(&h));
    let gap: Vec<f64> = y_t
        .iter()
        .zip(&vhat)
        .map(|(y, v)| y + epsilon * v)
        .collect();
    let cost = h.norm_squared(grid, p.dt());
    Ok(HUMResult {
        vhat_t: vhat.into(),
        h,
        y_t: y_t.into(),
        cost,
        epsilon,
        cg_iters: iters,
        cg_residual: residuals.last().copied().unwrap_or(0.0),
        residual_history: residuals,
        functional_history: functionals,
        optimality: grid.l2_norm(&gap),
        cost_constant: if y0_sq > 0.0 { cost / y0_sq } else { 0.0 },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub norm_y_t: f64,
    pub cost: f64,
    pub cg_iters: usize,
}

#[derive(Debug, Clone)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of `ln ||y(T)||` against `ln eps`; `None` when
    /// some final state vanishes.
    pub slope: Option<f64>,
    /// `max cost / min cost`; `None` when some cost vanishes.
    pub cost_ratio: Option<f64>,
    /// Worst `||y(T) + eps v_T|| / ||y_0||` across the sweep.
    pub worst_optimality: f64,
}

impl SweepReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epsilon,norm_yT,cost,cg_iters")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{}",
                fmt17(r.epsilon),
                fmt17(r.norm_y_t),
                fmt17(r.cost),
                r.cg_iters
            )?;
        }
        Ok(())
    }
}

/// Slope of the least-squares line through `(x_i, y_i)`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// [`hum_solve`] for each `eps` (run concurrently) plus a slope fit.
pub fn epsilon_sweep(
    p: &LinearProblem,
    eps_list: &[f64],
    cg_tol: f64,
    max_iters: usize,
) -> Result<SweepReport> {
    if eps_list.len() < 4 {
        return Err(Error::InvalidInput(
            "epsilon sweep needs at least 4 values".into(),
        ));
    }
    if eps_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidInput(
            "epsilon list must be strictly decreasing".into(),
        ));
    }
    let prop = Propagator::new(p)?;
    let results: Vec<HUMResult> = eps_list
        .par_iter()
        .map(|&eps| hum_solve_with(&prop, p, eps, cg_tol, max_iters, None))
        .collect::<Result<_>>()?;
    let grid = &p.grid;
    let rows: Vec<SweepRow> = results
        .iter()
        .map(|r| SweepRow {
            epsilon: r.epsilon,
            norm_y_t: r.norm_y_t(grid),
            cost: r.cost,
            cg_iters: r.cg_iters,
        })
        .collect();
    let slope = rows.iter().all(|r| r.norm_y_t > 0.0).then(|| {
        let lx: Vec<f64> = rows.iter().map(|r| r.epsilon.ln()).collect();
        let ly: Vec<f64> = rows.iter().map(|r| r.norm_y_t.ln()).collect();
        fit_slope(&lx, &ly)
    });
    let cost_ratio = rows.iter().all(|r| r.cost > 0.0).then(|| {
        let max = rows.iter().map(|r| r.cost).fold(f64::MIN, f64::max);
        let min = rows.iter().map(|r| r.cost).fold(f64::MAX, f64::min);
        max / min
    });
    let y0 = grid.l2_norm(&p.y0);
    let worst_optimality = results
        .iter()
        .map(|r| {
            if y0 > 0.0 {
                r.optimality / y0
            } else {
                r.optimality
            }
        })
        .fold(0.0, f64::max);
    Ok(SweepReport {
        rows,
        slope,
        cost_ratio,
        worst_optimality,
    })
}

/// Nodal standard normal terminal datum with boundary rows zeroed (both
/// ends for WDP, `x = 1` for SDP) and unit norm.
pub fn random_terminal(rng: &mut SampleRng, grid: &GridSpec, case: Case) -> Vec<f64> {
    let n = grid.len();
    let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    v[n - 1] = 0.0;
    if case == Case::Wdp {
        v[0] = 0.0;
    }
    let norm = grid.l2_norm(&v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Clone)]
pub struct ObservabilityReport {
    pub samples: usize,
    /// Largest quotient seen, including the refined candidate.
    pub max_quotient: f64,
    pub quotients: Vec<f64>,
    /// Quotient of the power-iteration candidate, when refinement ran.
    pub refined: Option<f64>,
}

impl ObservabilityReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "sample,quotient")?;
        for (k, q) in self.quotients.iter().enumerate() {
            writeln!(w, "{k},{}", fmt17(*q))?;
        }
        Ok(())
    }
}

/// `||v(0)||^2 / sum_n dt sum_w v^2` for the adjoint solution from `v_t`.
pub fn observability_quotient(prop: &Propagator, v_t: &[f64]) -> Option<f64> {
    let v = prop.adjoint(v_t);
    let den = prop.observed_energy(&v);
    if den > 0.0 {
        Some(prop.grid().l2_norm(v.initial()).powi(2) / den)
    } else {
        None
    }
}

/// Penalty used by the refinement solves.
pub const REFINE_EPSILON: f64 = 1e-6;

/// Sampled lower bounds for the discrete observability constant. When
/// `power_iters > 0` the worst sample is refined by power iteration on
/// `y -> R (L + eps I)^{-1} R* y` where `R v_T = v(0)`; the quotient of the
/// resulting terminal datum is reported alongside the samples.
pub fn observability_estimate(
    p: &LinearProblem,
    n_samples: usize,
    power_iters: usize,
    seed: u64,
) -> Result<ObservabilityReport> {
    if n_samples < 10 {
        return Err(Error::InvalidInput(
            "observability needs at least 10 samples".into(),
        ));
    }
    let prop = Propagator::new(p)?;
    let grid = &p.grid;
    let case = p.a.case();
    let samples: Vec<(f64, Vec<f64>)> = (0..n_samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, k as u64);
            for _ in 0..=OBSERVABILITY_RETRIES {
                let v_t = random_terminal(&mut rng, grid, case);
                if let Some(q) = observability_quotient(&prop, &v_t) {
                    return Ok((q, v_t));
                }
            }
            Err(Error::ZeroDenominator {
                retries: OBSERVABILITY_RETRIES,
            })
        })
        .collect::<Result<_>>()?;
    let quotients: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let mut max_quotient = quotients.iter().copied().fold(0.0, f64::max);
    let mut refined = None;
    if power_iters > 0 {
        let worst = samples
            .iter()
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map(|s| s.1.clone())
            .unwrap_or_default();
        let mut y = prop.adjoint(&worst).initial().to_vec();
        let mut candidate = worst;
        for _ in 0..power_iters {
            let norm = grid.l2_norm(&y);
            if norm == 0.0 {
                break;
            }
            y.iter_mut().for_each(|v| *v /= norm);
            let rhs = prop.forward_final(&y, None);
            if grid.l2_norm(&rhs) == 0.0 {
                break;
            }
            let w = penalized_cg(
                &prop,
                grid,
                &rhs,
                REFINE_EPSILON,
                DEFAULT_CG_TOL,
                DEFAULT_CG_MAX_ITERS,
                None,
            )?
            .x;
            y = prop.adjoint(&w).initial().to_vec();
            candidate = w;
        }
        if let Some(q) = observability_quotient(&prop, &candidate) {
            max_quotient = max_quotient.max(q);
            refined = Some(q);
        }
    }
    Ok(ObservabilityReport {
        samples: n_samples,
        max_quotient,
        quotients,
        refined,
    })
}
