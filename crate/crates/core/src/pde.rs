//! Implicit Euler integration of the forward linear system and of its
//! discrete adjoint.
//!
//! One forward step is `y^{n+1} = E_{n+1}^{-1} (y^n + dt 1_w h^n)` with
//! `E = I + dt A(t_{n+1})`. The adjoint step is the transpose of that map in
//! the trapezoid-weighted inner product, `v^n = W^{-1} E_{n+1}^{-T} W v^{n+1}`,
//! so for any data
//!
//! `<y(T), v_T> = <y_0, v(0)> + sum_n dt <1_w h^n, v^n>`
//!
//! holds to round-off.

use std::io::Write;

use crate::coefficients::{DegeneracyCoefficient, DriftEnvelope};
use crate::error::{Error, Result};
use crate::mesh::{Discretization, GridSpec, StateVector};
use crate::tridiag::TriFactor;

#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub a: DegeneracyCoefficient,
    pub drift: DriftEnvelope,
    pub horizon: f64,
    pub omega: (f64, f64),
    pub grid: GridSpec,
    pub steps: usize,
    pub y0: StateVector,
}

impl LinearProblem {
    pub fn new(
        a: DegeneracyCoefficient,
        drift: DriftEnvelope,
        horizon: f64,
        omega: (f64, f64),
        grid: GridSpec,
        steps: usize,
        y0: StateVector,
    ) -> Result<Self> {
        let p = Self {
            a,
            drift,
            horizon,
            omega,
            grid,
            steps,
            y0,
        };
        p.check()?;
        Ok(p)
    }

    pub fn check(&self) -> Result<()> {
        let (lo, hi) = self.omega;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return Err(Error::InvalidInput(format!(
                "control region ({lo}, {hi}) must satisfy 0 < w1 < w2 < 1"
            )));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.steps < 8 {
            return Err(Error::InvalidInput(format!(
                "need at least 8 time steps, got {}",
                self.steps
            )));
        }
        if self.y0.len() != self.grid.len() {
            return Err(Error::InvalidInput(format!(
                "initial datum has {} values for {} nodes",
                self.y0.len(),
                self.grid.len()
            )));
        }
        if !self.grid.mask(lo, hi).iter().any(|m| *m) {
            return Err(Error::InvalidInput(
                "control region contains no grid node".into(),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.horizon * n as f64 / self.steps as f64
    }

    pub fn omega_mask(&self) -> Vec<bool> {
        self.grid.mask(self.omega.0, self.omega.1)
    }

    pub fn with_y0(&self, y0: StateVector) -> Self {
        Self { y0, ..self.clone() }
    }

    pub fn with_drift(&self, drift: DriftEnvelope) -> Self {
        Self {
            drift,
            ..self.clone()
        }
    }
}

/// Control values per step: `values[n]` acts on `(t_n, t_{n+1}]`, nodal in
/// space and zero outside the control region.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlField {
    values: Vec<Vec<f64>>,
}

impl ControlField {
    pub fn zeros(steps: usize, nodes: usize) -> Self {
        Self {
            values: vec![vec![0.0; nodes]; steps],
        }
    }

    /// Build from raw values, zeroing entries outside `mask`.
    pub fn masked(mut values: Vec<Vec<f64>>, mask: &[bool]) -> Self {
        for row in &mut values {
            for (v, m) in row.iter_mut().zip(mask) {
                if !m {
                    *v = 0.0;
                }
            }
        }
        Self { values }
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn step(&self, n: usize) -> &[f64] {
        &self.values[n]
    }

    /// `sum_n dt sum_i w_i h_i^2`.
    pub fn norm_squared(&self, grid: &GridSpec, dt: f64) -> f64 {
        self.values.iter().map(|h| dt * grid.inner(h, h)).sum()
    }

    pub fn norm(&self, grid: &GridSpec, dt: f64) -> f64 {
        self.norm_squared(grid, dt).sqrt()
    }

    pub fn add(&self, other: &ControlField) -> ControlField {
        ControlField {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        }
    }

    /// Comma-separated table `t,x,value` (one row per step and node, `t`
    /// the right end of the step).
    pub fn write_csv<W: Write>(&self, mut w: W, grid: &GridSpec, dt: f64) -> std::io::Result<()> {
        writeln!(w, "t,x,value")?;
        for (n, row) in self.values.iter().enumerate() {
            let t = dt * (n + 1) as f64;
            for (x, v) in grid.nodes().iter().zip(row) {
                writeln!(w, "{},{},{}", fmt17(t), fmt17(*x), fmt17(*v))?;
            }
        }
        Ok(())
    }
}

/// Float formatting with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Full nodal states at `t_n = n T / M`, `n = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<Vec<f64>>) -> Self {
        Self { dt, states }
    }

    /// `(M+1, N)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.states.len(), self.states.first().map_or(0, Vec::len))
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn state(&self, n: usize) -> &[f64] {
        &self.states[n]
    }

    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().unwrap()
    }

    /// `max_n ||y^n||`, the discrete `C([0,T]; L^2)` norm.
    pub fn max_l2(&self, grid: &GridSpec) -> f64 {
        self.states
            .iter()
            .map(|s| grid.l2_norm(s))
            .fold(0.0, f64::max)
    }

    /// Discrete `L^2(Q)` norm (right-point rule in time).
    pub fn l2_q(&self, grid: &GridSpec) -> f64 {
        self.states[1..]
            .iter()
            .map(|s| self.dt * grid.inner(s, s))
            .sum::<f64>()
            .sqrt()
    }

    /// Discrete `L^2(0,T; H^1_a)` norm.
    pub fn l2_h1a(&self, grid: &GridSpec, a: &DegeneracyCoefficient) -> f64 {
        self.states[1..]
            .iter()
            .map(|s| {
                let h = grid.h1a_norm(a, s);
                self.dt * h * h
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn difference(&self, other: &Trajectory) -> Trajectory {
        Trajectory {
            dt: self.dt,
            states: self
                .states
                .iter()
                .zip(&other.states)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
                .collect(),
        }
    }

    /// Comma-separated table `t,x,value`, row-major by time.
    pub fn write_csv<W: Write>(&self, mut w: W, grid: &GridSpec) -> std::io::Result<()> {
        writeln!(w, "t,x,value")?;
        for (n, s) in self.states.iter().enumerate() {
            let t = self.dt * n as f64;
            for (x, v) in grid.nodes().iter().zip(s) {
                writeln!(w, "{},{},{}", fmt17(t), fmt17(*x), fmt17(*v))?;
            }
        }
        Ok(())
    }
}

/// Factor `E = I + dt A` for unknown-indexed coefficients `b`, `c`.
/// Couplings to boundary nodes are dropped (homogeneous boundary values).
/// On a zero pivot the failing row is returned.
pub fn implicit_factor(
    disc: &Discretization,
    b: &[f64],
    c: &[f64],
    dt: f64,
) -> std::result::Result<TriFactor, usize> {
    let nu = disc.n_unknowns();
    let mut e = disc.operator(b, c).matrix;
    for r in 0..nu {
        e.diag[r] = 1.0 + dt * e.diag[r];
        e.sub[r] *= dt;
        e.sup[r] *= dt;
    }
    if nu > 0 {
        e.sub[0] = 0.0;
        e.sup[nu - 1] = 0.0;
    }
    e.factor()
}

/// Precomputed step factorizations for one problem. Reused across the
/// many solves of an iterative control computation.
#[derive(Debug, Clone)]
pub struct Propagator {
    disc: Discretization,
    dt: f64,
    steps: usize,
    /// One entry when the coefficients are time independent, else `M`
    /// entries (`factors[n]` advances `t_n -> t_{n+1}`).
    factors: Vec<TriFactor>,
    mask: Vec<bool>,
}

impl Propagator {
    pub fn new(p: &LinearProblem) -> Result<Self> {
        p.check()?;
        let disc = Discretization::new(&p.grid, &p.a, |x| p.drift.beta(x));
        let dt = p.dt();
        let x = p.grid.nodes();
        let first = disc.first();
        let nu = disc.n_unknowns();
        let n_factors = if p.drift.is_time_independent() {
            1
        } else {
            p.steps
        };
        let mut factors = Vec::with_capacity(n_factors);
        for n in 0..n_factors {
            let t = p.time(n + 1);
            let b: Vec<f64> = (first..first + nu)
                .map(|i| p.drift.b.at(x[i], t, n + 1, i))
                .collect();
            let c: Vec<f64> = (first..first + nu)
                .map(|i| p.drift.c.at(x[i], t, n + 1, i))
                .collect();
            let f = implicit_factor(&disc, &b, &c, dt)
                .map_err(|row| Error::SolverBreakdown { step: n + 1, row })?;
            factors.push(f);
        }
        Ok(Self {
            disc,
            dt,
            steps: p.steps,
            factors,
            mask: p.omega_mask(),
        })
    }

    pub fn discretization(&self) -> &Discretization {
        &self.disc
    }

    pub fn grid(&self) -> &GridSpec {
        self.disc.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    fn factor(&self, n: usize) -> &TriFactor {
        &self.factors[n.min(self.factors.len() - 1)]
    }

    fn step_forward(&self, n: usize, y: &mut [f64], h: Option<&[f64]>) {
        let first = self.disc.first();
        if let Some(h) = h {
            for (r, v) in y.iter_mut().enumerate() {
                if self.mask[first + r] {
                    *v += self.dt * h[first + r];
                }
            }
        }
        self.factor(n).solve_in_place(y);
    }

    fn step_adjoint(&self, n: usize, v: &mut [f64]) {
        let w = self.disc.weights();
        for (x, q) in v.iter_mut().zip(w) {
            *x *= q;
        }
        self.factor(n).solve_transpose_in_place(v);
        for (x, q) in v.iter_mut().zip(w) {
            *x /= q;
        }
    }

    pub fn forward(&self, y0: &[f64], h: Option<&ControlField>) -> Trajectory {
        let mut y = self.disc.restrict(y0);
        let mut states = Vec::with_capacity(self.steps + 1);
        states.push(self.disc.extend(&y));
        for n in 0..self.steps {
            self.step_forward(n, &mut y, h.map(|c| c.step(n)));
            states.push(self.disc.extend(&y));
        }
        Trajectory::new(self.dt, states)
    }

    /// Final state only.
    pub fn forward_final(&self, y0: &[f64], h: Option<&ControlField>) -> Vec<f64> {
        let mut y = self.disc.restrict(y0);
        for n in 0..self.steps {
            self.step_forward(n, &mut y, h.map(|c| c.step(n)));
        }
        self.disc.extend(&y)
    }

    pub fn adjoint(&self, v_t: &[f64]) -> Trajectory {
        let mut v = self.disc.restrict(v_t);
        let mut states = vec![Vec::new(); self.steps + 1];
        states[self.steps] = self.disc.extend(&v);
        for n in (0..self.steps).rev() {
            self.step_adjoint(n, &mut v);
            states[n] = self.disc.extend(&v);
        }
        Trajectory::new(self.dt, states)
    }

    /// Backward solve of `v_t - A* v = F` with `F` sampled at `t_n`
    /// (`source[n]`, full nodal vectors, `n = 0..=M`).
    pub fn adjoint_with_source(&self, v_t: &[f64], source: &[Vec<f64>]) -> Trajectory {
        let mut v = self.disc.restrict(v_t);
        let mut states = vec![Vec::new(); self.steps + 1];
        states[self.steps] = self.disc.extend(&v);
        for n in (0..self.steps).rev() {
            let f = self.disc.restrict(&source[n]);
            for (x, s) in v.iter_mut().zip(&f) {
                *x -= self.dt * s;
            }
            self.step_adjoint(n, &mut v);
            states[n] = self.disc.extend(&v);
        }
        Trajectory::new(self.dt, states)
    }

    /// `1_w v^n` for `n = 0..M-1`: the control induced by an adjoint state.
    pub fn restrict_to_omega(&self, v: &Trajectory) -> ControlField {
        ControlField::masked(v.states()[..self.steps].to_vec(), &self.mask)
    }

    /// `sum_n dt sum_{i in w} w_i h_i v_i` over `n = 0..M-1`.
    pub fn observed_pairing(&self, h: &ControlField, v: &Trajectory) -> f64 {
        let grid = self.grid();
        let w = grid.weights();
        (0..self.steps)
            .map(|n| {
                let hn = h.step(n);
                let vn = v.state(n);
                self.dt
                    * (0..grid.len())
                        .filter(|&i| self.mask[i])
                        .map(|i| w[i] * hn[i] * vn[i])
                        .sum::<f64>()
            })
            .sum()
    }

    /// Observed energy `sum_n dt sum_{i in w} w_i (v^n_i)^2`.
    pub fn observed_energy(&self, v: &Trajectory) -> f64 {
        let h = self.restrict_to_omega(v);
        self.observed_pairing(&h, v)
    }
}

pub fn solve_forward(p: &LinearProblem, h: &ControlField) -> Result<Trajectory> {
    check_control(p, h)?;
    let prop = Propagator::new(p)?;
    Ok(prop.forward(&p.y0, Some(h)))
}

pub fn solve_adjoint(p: &LinearProblem, v_t: &StateVector) -> Result<Trajectory> {
    if v_t.len() != p.grid.len() {
        return Err(Error::InvalidInput(
            "terminal datum has wrong length".into(),
        ));
    }
    Ok(Propagator::new(p)?.adjoint(v_t))
}

fn check_control(p: &LinearProblem, h: &ControlField) -> Result<()> {
    if h.steps() != p.steps || h.values().iter().any(|r| r.len() != p.grid.len()) {
        return Err(Error::InvalidInput(
            "control field does not match the grid".into(),
        ));
    }
    Ok(())
}

/// Relative residual of the discrete duality identity,
/// `|<y(T), v_T> - <y_0, v(0)> - sum dt <1_w h, v>| / scale` where `scale`
/// is the sum of the magnitudes of the three terms (0 when all vanish).
pub fn duality_residual(
    p: &LinearProblem,
    y0: &StateVector,
    h: &ControlField,
    v_t: &StateVector,
) -> Result<f64> {
    check_control(p, h)?;
    let prop = Propagator::new(p)?;
    let y = prop.forward(y0, Some(h));
    let v = prop.adjoint(v_t);
    let grid = &p.grid;
    let end = grid.inner(y.last(), v_t);
    let start = grid.inner(y.initial(), v.initial());
    let source = prop.observed_pairing(h, &v);
    let scale = end.abs() + start.abs() + source.abs();
    let residual = (end - start - source).abs();
    Ok(if scale == 0.0 {
        residual
    } else {
        residual / scale
    })
}

/// Measured ratio `max_n ||y^n|| / (||y_0|| + ||h||_{L^2(w x (0,T))})`.
pub fn stability_constant(p: &LinearProblem, y: &Trajectory, h: &ControlField) -> f64 {
    let data = p.y0.l2_norm(&p.grid) + h.norm(&p.grid, p.dt());
    if data == 0.0 {
        return 0.0;
    }
    y.max_l2(&p.grid) / data
}
