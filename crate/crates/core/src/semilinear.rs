//! Null control of the semilinear equation
//! `y_t - (a y_x)_x + f(x,t,y,y_x) = 1_w h` by frozen-coefficient
//! iteration.
//!
//! Nonlinearities are given in factored form `f = b(x,t,s,p) s + c(x,t,s,p) beta(x) p`.
//! Freezing `(s,p)` along a trajectory `z` turns the equation into the
//! linear problem with zero-order coefficient `b_z` and first-order
//! coefficient `c_z`, which is controlled by penalized HUM. The next iterate
//! is the controlled state.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;

use crate::coefficients::{DriftEnvelope, SpaceTimeField};
use crate::control::{hum_solve_with, HUMResult, DEFAULT_CG_MAX_ITERS, DEFAULT_CG_TOL};
use crate::error::{Error, Result};
use crate::mesh::{Discretization, GridSpec, StateVector};
use crate::pde::{fmt17, implicit_factor, ControlField, LinearProblem, Propagator, Trajectory};
use crate::sampling::sample_rng;

/// Factor `(x, t, s, p) -> value`.
pub type FactorFn = Arc<dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync>;

pub const DEFAULT_FP_TOL: f64 = 1e-6;
pub const DEFAULT_FP_MAX_ITERS: usize = 50;
/// Inner iterations per implicit step of the uncontrolled solve.
const INNER_MAX_ITERS: usize = 100;
const INNER_TOL: f64 = 1e-13;

/// `sin(s)/s` with value 1 at the origin.
fn sinc(s: f64) -> f64 {
    if s.abs() < 1e-8 {
        1.0 - s * s / 6.0
    } else {
        s.sin() / s
    }
}

/// `tanh(p)/p` with value 1 at the origin.
fn tanhc(p: f64) -> f64 {
    if p.abs() < 1e-8 {
        1.0 - p * p / 3.0
    } else {
        p.tanh() / p
    }
}

#[derive(Clone)]
pub struct Nonlinearity {
    name: String,
    b_factor: FactorFn,
    c_factor: FactorFn,
    beta: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub b_cap: f64,
    pub c_cap: f64,
    pub lipschitz: f64,
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("name", &self.name)
            .field("b_cap", &self.b_cap)
            .field("c_cap", &self.c_cap)
            .field("lipschitz", &self.lipschitz)
            .finish()
    }
}

/// Sup of `|beta|` over a uniform sample of `[0,1]`.
fn beta_sup(drift: &DriftEnvelope) -> f64 {
    (0..=1024)
        .map(|k| drift.beta(k as f64 / 1024.0).abs())
        .fold(0.0, f64::max)
}

impl Nonlinearity {
    pub fn new(
        name: impl Into<String>,
        b_factor: FactorFn,
        c_factor: FactorFn,
        drift: &DriftEnvelope,
        b_cap: f64,
        c_cap: f64,
        lipschitz: f64,
    ) -> Self {
        let beta = drift.beta_fn().clone();
        Self {
            name: name.into(),
            b_factor,
            c_factor,
            beta: Arc::new(move |x| beta(x)),
            b_cap,
            c_cap,
            lipschitz,
        }
    }

    pub fn zero(drift: &DriftEnvelope) -> Self {
        let z: FactorFn = Arc::new(|_, _, _, _| 0.0);
        Self::new("zero", z.clone(), z, drift, 0.0, 0.0, 0.0)
    }

    /// `m sin(s)`.
    pub fn sine(m: f64, drift: &DriftEnvelope) -> Self {
        Self::new(
            format!("sine({m})"),
            Arc::new(move |_, _, s, _| m * sinc(s)),
            Arc::new(|_, _, _, _| 0.0),
            drift,
            m.abs(),
            0.0,
            m.abs(),
        )
    }

    /// `beta(x) tanh(p)`.
    pub fn tanh_grad(drift: &DriftEnvelope) -> Self {
        Self::new(
            "tanh-grad",
            Arc::new(|_, _, _, _| 0.0),
            Arc::new(|_, _, _, p| tanhc(p)),
            drift,
            0.0,
            1.0,
            beta_sup(drift),
        )
    }

    /// `m sin(s) + beta(x) tanh(p)`.
    pub fn mixed(m: f64, drift: &DriftEnvelope) -> Self {
        Self::new(
            format!("mixed({m})"),
            Arc::new(move |_, _, s, _| m * sinc(s)),
            Arc::new(|_, _, _, p| tanhc(p)),
            drift,
            m.abs(),
            1.0,
            m.abs().max(beta_sup(drift)),
        )
    }

    /// Parse a catalog entry: `zero`, `sine(m)`, `tanh-grad`, `mixed(m)`.
    pub fn catalog(spec: &str, drift: &DriftEnvelope) -> Result<Self> {
        let spec = spec.trim();
        let arg = |prefix: &str| -> Option<Result<f64>> {
            let rest = spec
                .strip_prefix(prefix)?
                .strip_prefix('(')?
                .strip_suffix(')')?;
            Some(rest.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("bad parameter in nonlinearity '{spec}'"))
            }))
        };
        match spec {
            "zero" => Ok(Self::zero(drift)),
            "tanh-grad" => Ok(Self::tanh_grad(drift)),
            _ => {
                if let Some(m) = arg("sine") {
                    Ok(Self::sine(m?, drift))
                } else if let Some(m) = arg("mixed") {
                    Ok(Self::mixed(m?, drift))
                } else {
                    Err(Error::InvalidInput(format!(
                        "unknown nonlinearity '{spec}' (expected zero, sine(m), tanh-grad, mixed(m))"
                    )))
                }
            }
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Multiply `f` (both factors, caps and Lipschitz constant) by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        let b = self.b_factor.clone();
        let c = self.c_factor.clone();
        Self {
            name: format!("{}*{k}", self.name),
            b_factor: Arc::new(move |x, t, s, p| k * b(x, t, s, p)),
            c_factor: Arc::new(move |x, t, s, p| k * c(x, t, s, p)),
            beta: self.beta.clone(),
            b_cap: self.b_cap * k.abs(),
            c_cap: self.c_cap * k.abs(),
            lipschitz: self.lipschitz * k.abs(),
        }
    }

    pub fn b_factor(&self, x: f64, t: f64, s: f64, p: f64) -> f64 {
        (self.b_factor)(x, t, s, p)
    }

    pub fn c_factor(&self, x: f64, t: f64, s: f64, p: f64) -> f64 {
        (self.c_factor)(x, t, s, p)
    }

    /// Reconstructed `f = b s + c beta p`.
    pub fn eval(&self, x: f64, t: f64, s: f64, p: f64) -> f64 {
        self.b_factor(x, t, s, p) * s + self.c_factor(x, t, s, p) * (self.beta)(x) * p
    }

    /// Check caps and the Lipschitz bound on random points of
    /// `[0,1] x [0,T] x [-R,R]^2`.
    pub fn validate(&self, horizon: f64, n_samples: usize, seed: u64) -> Result<()> {
        let mut rng = sample_rng(seed, 0);
        let radius = 10.0;
        let slack = 1.0 + 1e-9;
        for _ in 0..n_samples {
            let x = rng.random::<f64>();
            let t = horizon * rng.random::<f64>();
            let s1 = rng.random_range(-radius..radius);
            let p1 = rng.random_range(-radius..radius);
            let s2 = rng.random_range(-radius..radius);
            let p2 = rng.random_range(-radius..radius);
            let b = self.b_factor(x, t, s1, p1);
            if !(b.abs() <= self.b_cap * slack) {
                return Err(Error::UnboundedFrozenCoefficient {
                    name: "b",
                    value: b,
                    cap: self.b_cap,
                });
            }
            let c = self.c_factor(x, t, s1, p1);
            if !(c.abs() <= self.c_cap * slack) {
                return Err(Error::UnboundedFrozenCoefficient {
                    name: "c",
                    value: c,
                    cap: self.c_cap,
                });
            }
            let df = (self.eval(x, t, s1, p1) - self.eval(x, t, s2, p2)).abs();
            let bound = self.lipschitz * ((s1 - s2).abs() + (p1 - p2).abs());
            if df > bound * slack + 1e-14 {
                return Err(Error::InvalidInput(format!(
                    "nonlinearity '{}' violates its Lipschitz constant {} at x = {x}, t = {t}",
                    self.name, self.lipschitz
                )));
            }
        }
        Ok(())
    }

    fn frozen_at(&self, x: f64, t: f64, s: f64, p: f64) -> Result<(f64, f64)> {
        let b = self.b_factor(x, t, s, p);
        let c = self.c_factor(x, t, s, p);
        if !(b.abs() <= self.b_cap * (1.0 + 1e-9)) {
            return Err(Error::UnboundedFrozenCoefficient {
                name: "b",
                value: b,
                cap: self.b_cap,
            });
        }
        if !(c.abs() <= self.c_cap * (1.0 + 1e-9)) {
            return Err(Error::UnboundedFrozenCoefficient {
                name: "c",
                value: c,
                cap: self.c_cap,
            });
        }
        Ok((b, c))
    }
}

/// Frozen coefficients `b_z(x_i, t_n) = b(x_i, t_n, z, z_x)` and likewise
/// `c_z`, sampled at every node and time level. `z_x` is the centered nodal
/// difference; `t_offset` shifts the time argument of the nonlinearity.
pub fn freeze_coefficients(
    z: &Trajectory,
    nl: &Nonlinearity,
    grid: &GridSpec,
    t_offset: f64,
) -> Result<(SpaceTimeField, SpaceTimeField)> {
    let x = grid.nodes();
    let mut b = Vec::with_capacity(z.states().len());
    let mut c = Vec::with_capacity(z.states().len());
    for (n, zn) in z.states().iter().enumerate() {
        let t = t_offset + n as f64 * z.dt;
        let zx = grid.nodal_gradient(zn);
        let mut bn = Vec::with_capacity(x.len());
        let mut cn = Vec::with_capacity(x.len());
        for i in 0..x.len() {
            let (bv, cv) = nl.frozen_at(x[i], t, zn[i], zx[i])?;
            bn.push(bv);
            cn.push(cv);
        }
        b.push(bn);
        c.push(cn);
    }
    Ok((
        SpaceTimeField::Sampled(Arc::new(b)),
        SpaceTimeField::Sampled(Arc::new(c)),
    ))
}

/// Discrete `L^2(Q)` norm of the residual of the implicit scheme for the
/// semilinear equation, evaluated at the unknowns:
/// `(y^{n+1} - y^n)/dt + A_0 y^{n+1} + f(y^{n+1}, y_x^{n+1}) - 1_w h^n`
/// where the first-order part of `f` uses the same upwind stencil as the
/// linear operator.
pub fn semilinear_residual(
    p: &LinearProblem,
    nl: &Nonlinearity,
    y: &Trajectory,
    h: Option<&ControlField>,
    t_offset: f64,
) -> Result<f64> {
    let disc = Discretization::new(&p.grid, &p.a, |x| p.drift.beta(x));
    let first = disc.first();
    let nu = disc.n_unknowns();
    let zeros = vec![0.0; nu];
    let a0 = disc.operator(&zeros, &zeros);
    let x = p.grid.nodes();
    let w = p.grid.weights();
    let mask = p.omega_mask();
    let dt = p.dt();
    let mut total = 0.0;
    for n in 0..p.steps {
        let prev = y.state(n);
        let next = y.state(n + 1);
        let t = t_offset + p.time(n + 1);
        let diffusion = a0.apply_full(next);
        let grad = p.grid.nodal_gradient(next);
        for r in 0..nu {
            let i = first + r;
            let (bv, cv) = nl.frozen_at(x[i], t, next[i], grad[i])?;
            let velocity = disc.beta_unknowns()[r] * cv;
            let mut res = (next[i] - prev[i]) / dt
                + diffusion[i]
                + bv * next[i]
                + velocity * disc.upwind_derivative(next, i, velocity);
            if let Some(h) = h {
                if mask[i] {
                    res -= h.step(n)[i];
                }
            }
            total += dt * w[i] * res * res;
        }
    }
    Ok(total.sqrt())
}

#[derive(Debug, Clone)]
pub struct PicardOptions {
    pub epsilon: f64,
    /// Increment tolerance relative to `||y_0||`.
    pub fp_tol: f64,
    pub max_iters: usize,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            epsilon: crate::control::DEFAULT_EPSILON,
            fp_tol: DEFAULT_FP_TOL,
            max_iters: DEFAULT_FP_MAX_ITERS,
            cg_tol: DEFAULT_CG_TOL,
            cg_max_iters: DEFAULT_CG_MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `||z^{k+1} - z^k||` in discrete `L^2(0,T; H^1_a)`.
    pub increment: f64,
    pub control_cost: f64,
    pub norm_y_t: f64,
}

/// Uncontrolled first phase of [`two_phase_control`].
#[derive(Debug, Clone)]
pub struct PhaseOne {
    /// Switching time snapped to the time grid.
    pub t0: f64,
    pub steps: usize,
    pub y: Trajectory,
}

#[derive(Debug, Clone)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub log: Vec<IterationRecord>,
    pub converged: bool,
    /// Absolute increment tolerance used.
    pub tolerance: f64,
    /// HUM result of the last iteration.
    pub hum: HUMResult,
    /// Controlled state of the last iteration.
    pub y: Trajectory,
    pub norm_y_t: f64,
    /// Residual of the discrete semilinear equation at the last iterate.
    pub residual: f64,
    /// `max_k ||h_k||^2 / ||y_0||^2` over the iterations.
    pub cost_constant: f64,
    pub phase_one: Option<PhaseOne>,
}

impl FixedPointReport {
    pub fn increments(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.increment).collect()
    }

    pub fn write_log_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "iter,increment,control_cost,norm_yT")?;
        for r in &self.log {
            writeln!(
                w,
                "{},{},{},{}",
                r.iter,
                fmt17(r.increment),
                fmt17(r.control_cost),
                fmt17(r.norm_y_t)
            )?;
        }
        Ok(())
    }
}

pub fn picard_null_control(
    p: &LinearProblem,
    nl: &Nonlinearity,
    epsilon: f64,
    fp_tol: f64,
    max_fp_iters: usize,
) -> Result<FixedPointReport> {
    let opts = PicardOptions {
        epsilon,
        fp_tol,
        max_iters: max_fp_iters,
        ..PicardOptions::default()
    };
    picard_with(p, nl, &opts, 0.0)
}

fn frozen_problem(
    p: &LinearProblem,
    nl: &Nonlinearity,
    z: &Trajectory,
    t_offset: f64,
) -> Result<LinearProblem> {
    let (b, c) = freeze_coefficients(z, nl, &p.grid, t_offset)?;
    Ok(p.with_drift(p.drift.with_fields(b, c)))
}

/// Frozen-coefficient iteration with explicit options; the nonlinearity
/// sees time `t_offset + t`.
pub fn picard_with(
    p: &LinearProblem,
    nl: &Nonlinearity,
    opts: &PicardOptions,
    t_offset: f64,
) -> Result<FixedPointReport> {
    p.check()?;
    if opts.max_iters == 0 {
        return Err(Error::InvalidInput(
            "fixed-point iteration needs max_iters >= 1".into(),
        ));
    }
    let grid = &p.grid;
    let y0_norm = grid.l2_norm(&p.y0);
    let tolerance = opts.fp_tol * y0_norm;
    let zero_traj = Trajectory::new(p.dt(), vec![vec![0.0; grid.len()]; p.steps + 1]);
    let free = Propagator::new(&frozen_problem(p, nl, &zero_traj, t_offset)?)?;
    let mut z = free.forward(&p.y0, None);
    let mut log = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    let mut cost_constant: f64 = 0.0;
    let mut last: Option<(HUMResult, Trajectory)> = None;
    let mut converged = false;
    for iter in 1..=opts.max_iters {
        let pk = frozen_problem(p, nl, &z, t_offset)?;
        let prop = Propagator::new(&pk)?;
        let hum = hum_solve_with(
            &prop,
            &pk,
            opts.epsilon,
            opts.cg_tol,
            opts.cg_max_iters,
            warm.as_deref(),
        )?;
        let y = prop.forward(&p.y0, Some(&hum.h));
        let increment = y.difference(&z).l2_h1a(grid, &p.a);
        let norm_y_t = grid.l2_norm(y.last());
        if y0_norm > 0.0 {
            cost_constant = cost_constant.max(hum.cost / (y0_norm * y0_norm));
        }
        log.push(IterationRecord {
            iter,
            increment,
            control_cost: hum.cost,
            norm_y_t,
        });
        warm = Some(hum.vhat_t.to_vec());
        z = y.clone();
        last = Some((hum, y));
        if increment <= tolerance {
            converged = true;
            break;
        }
    }
    let (hum, y) = last.expect("at least one iteration");
    if !converged {
        let inc: Vec<f64> = log.iter().map(|r| r.increment).collect();
        let n = inc.len();
        if n >= 2 && inc[n - 1] >= inc[n - 2] {
            return Err(Error::NoFixedPoint {
                iters: n,
                last_increment: inc[n - 1],
            });
        }
    }
    let residual = semilinear_residual(p, nl, &y, Some(&hum.h), t_offset)?;
    Ok(FixedPointReport {
        iterations: log.len(),
        converged,
        tolerance,
        norm_y_t: grid.l2_norm(y.last()),
        log,
        hum,
        y,
        residual,
        cost_constant,
        phase_one: None,
    })
}

/// Uncontrolled semilinear solve with the implicit scheme; each step is
/// solved by freezing the nonlinearity at the current guess of `y^{n+1}`.
pub fn semilinear_forward(
    p: &LinearProblem,
    nl: &Nonlinearity,
    t_offset: f64,
) -> Result<Trajectory> {
    p.check()?;
    march(p, nl, t_offset)
}

/// [`semilinear_forward`] without the minimum step count, for short
/// uncontrolled phases.
fn march(p: &LinearProblem, nl: &Nonlinearity, t_offset: f64) -> Result<Trajectory> {
    let disc = Discretization::new(&p.grid, &p.a, |x| p.drift.beta(x));
    let first = disc.first();
    let nu = disc.n_unknowns();
    let x = p.grid.nodes();
    let dt = p.dt();
    let mut states = Vec::with_capacity(p.steps + 1);
    let mut y = disc.extend(&disc.restrict(&p.y0));
    states.push(y.clone());
    for n in 0..p.steps {
        let t = t_offset + p.time(n + 1);
        let rhs = disc.restrict(&y);
        let mut guess = y.clone();
        let mut done = false;
        for _ in 0..INNER_MAX_ITERS {
            let grad = p.grid.nodal_gradient(&guess);
            let mut b = Vec::with_capacity(nu);
            let mut c = Vec::with_capacity(nu);
            for i in first..first + nu {
                let (bv, cv) = nl.frozen_at(x[i], t, guess[i], grad[i])?;
                b.push(bv);
                c.push(cv);
            }
            let f = implicit_factor(&disc, &b, &c, dt)
                .map_err(|row| Error::SolverBreakdown { step: n + 1, row })?;
            let mut next = rhs.clone();
            f.solve_in_place(&mut next);
            let next = disc.extend(&next);
            let change = p.grid.l2_norm(
                &next
                    .iter()
                    .zip(&guess)
                    .map(|(a, b)| a - b)
                    .collect::<Vec<_>>(),
            );
            let scale = p.grid.l2_norm(&next);
            guess = next;
            if change <= INNER_TOL * scale.max(f64::MIN_POSITIVE) {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::NoFixedPoint {
                iters: INNER_MAX_ITERS,
                last_increment: f64::NAN,
            });
        }
        y = guess;
        states.push(y.clone());
    }
    Ok(Trajectory::new(dt, states))
}

/// No control on `(0, t0)`, then [`picard_with`] on `(t0, T)` from `y(t0)`.
/// `t0` is snapped to the nearest time level; `t0 = 0` skips the first phase.
pub fn two_phase_control(
    p: &LinearProblem,
    nl: &Nonlinearity,
    t0: f64,
    epsilon: f64,
) -> Result<FixedPointReport> {
    let opts = PicardOptions {
        epsilon,
        ..PicardOptions::default()
    };
    two_phase_with(p, nl, t0, &opts)
}

pub fn two_phase_with(
    p: &LinearProblem,
    nl: &Nonlinearity,
    t0: f64,
    opts: &PicardOptions,
) -> Result<FixedPointReport> {
    if !(t0 >= 0.0 && t0 < p.horizon) {
        return Err(Error::InvalidInput(format!(
            "switching time {t0} must lie in [0, {})",
            p.horizon
        )));
    }
    let n0 = (t0 / p.dt()).round() as usize;
    if n0 == 0 {
        return picard_with(p, nl, opts, 0.0);
    }
    if p.steps - n0 < 8 {
        return Err(Error::InvalidInput(format!(
            "switching time {t0} leaves fewer than 8 controlled steps"
        )));
    }
    let first = LinearProblem {
        horizon: p.time(n0),
        steps: n0,
        ..p.clone()
    };
    let y1 = march(&first, nl, 0.0)?;
    let snapped = first.horizon;
    let second = LinearProblem {
        horizon: p.horizon - snapped,
        steps: p.steps - n0,
        y0: StateVector(y1.last().to_vec()),
        ..p.clone()
    };
    let mut report = picard_with(&second, nl, opts, snapped)?;
    report.phase_one = Some(PhaseOne {
        t0: snapped,
        steps: n0,
        y: y1,
    });
    Ok(report)
}
