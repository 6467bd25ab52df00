//! Carleman weights and numerical audits of the weighted inequalities.
//!
//! The weight blends a degenerate profile near the origin,
//! `psi_deg(x) = c1 (c2 - int_0^x tau / a(tau) dtau)`, with a classical
//! profile away from it, `psi_cls(x) = e^{2 lambda |rho|_inf} - e^{lambda rho(x)}`:
//!
//! `eta = psi_deg xi + (1 - xi) psi_cls`, `phi(x,t) = eta(x) theta(t)`,
//! `theta(t) = (t (T - t))^{-4}`.
//!
//! `xi` is a C2 cutoff equal to 1 left of `kappa-` and 0 right of `kappa+`
//! where `kappa- = (2 w1 + w2)/3`, `kappa+ = (w1 + 2 w2)/3`. Because
//! `e^{-2 s phi}` underflows for any realistic `s`, every weighted integral
//! is accumulated in log space.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::coefficients::{Case, DegeneracyCoefficient, SpaceTimeField};
use crate::error::{Error, Result};
use crate::mesh::GridSpec;
use crate::pde::{LinearProblem, Propagator, Trajectory};
use crate::quadrature::integrate;
use crate::sampling::{sample_rng, SampleRng};

pub const DEFAULT_C1: f64 = 1.0;
pub const DEFAULT_LAMBDA: f64 = 2.0;
/// `c2` is set to this multiple of its positivity threshold `1/(a(1)(2-K))`.
pub const C2_MARGIN: f64 = 1.05;
/// Points used to verify weight validity independently of any grid.
const VERIFY_POINTS: usize = 2048;

#[derive(Debug, Clone)]
pub struct CarlemanWeights {
    a: DegeneracyCoefficient,
    horizon: f64,
    omega: (f64, f64),
    pub c1: f64,
    pub c2: f64,
    pub lambda: f64,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    /// Inner interval `(a', b')` holding the bump maximum.
    pub omega_prime: (f64, f64),
}

/// Weights with `c2 = 1.05 / (a(1) (2 - K))`.
pub fn build_weights(
    a: &DegeneracyCoefficient,
    omega: (f64, f64),
    horizon: f64,
    c1: f64,
    lambda: f64,
) -> Result<CarlemanWeights> {
    let c2 = C2_MARGIN * c2_threshold(a);
    build_weights_with_c2(a, omega, horizon, c1, c2, lambda)
}

/// `1 / (a(1) (2 - K))`: `psi_deg > 0` on `[0,1]` whenever `c2` exceeds it.
pub fn c2_threshold(a: &DegeneracyCoefficient) -> f64 {
    1.0 / (a.value(1.0) * (2.0 - a.k()))
}

pub fn build_weights_with_c2(
    a: &DegeneracyCoefficient,
    omega: (f64, f64),
    horizon: f64,
    c1: f64,
    c2: f64,
    lambda: f64,
) -> Result<CarlemanWeights> {
    let (lo, hi) = omega;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(Error::WeightInvalid(format!(
            "control region ({lo}, {hi}) must lie in (0,1) away from the origin"
        )));
    }
    if !(c1 > 0.0) || !(lambda > 0.0) || !(horizon > 0.0) {
        return Err(Error::WeightInvalid(
            "c1, lambda and T must be positive".into(),
        ));
    }
    let third = (hi - lo) / 3.0;
    let kappa_minus = lo + third;
    let kappa_plus = hi - third;
    let quarter = 0.25 * (kappa_plus - kappa_minus);
    let w = CarlemanWeights {
        a: a.clone(),
        horizon,
        omega,
        c1,
        c2,
        lambda,
        kappa_minus,
        kappa_plus,
        omega_prime: (kappa_minus + quarter, kappa_plus - quarter),
    };
    let xs: Vec<f64> = (0..=VERIFY_POINTS)
        .map(|k| k as f64 / VERIFY_POINTS as f64)
        .collect();
    w.verify_at(&xs)?;
    Ok(w)
}

/// Quintic smoothstep `6u^5 - 15u^4 + 10u^3` on `[0,1]`, clamped outside.
fn smoothstep(u: f64) -> (f64, f64) {
    if u <= 0.0 {
        (0.0, 0.0)
    } else if u >= 1.0 {
        (1.0, 0.0)
    } else {
        let v = u * u * u * (u * (6.0 * u - 15.0) + 10.0);
        let dv = 30.0 * u * u * (u - 1.0) * (u - 1.0);
        (v, dv)
    }
}

impl CarlemanWeights {
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn omega(&self) -> (f64, f64) {
        self.omega
    }

    /// `int_0^x tau / a(tau) dtau`, integrated after `tau = x u^2` to tame the
    /// integrable singularity at the origin.
    pub fn degenerate_integral(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let a = &self.a;
        integrate(
            |u| {
                let tau = x * u * u;
                if tau <= 0.0 {
                    return 0.0;
                }
                tau / a.value(tau) * 2.0 * x * u
            },
            0.0,
            1.0,
            1e-14,
        )
    }

    pub fn psi_deg(&self, x: f64) -> f64 {
        self.c1 * (self.c2 - self.degenerate_integral(x))
    }

    pub fn psi_deg_deriv(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        -self.c1 * x / self.a.value(x)
    }

    fn peak(&self) -> f64 {
        0.5 * (self.omega_prime.0 + self.omega_prime.1)
    }

    /// C2 bump: `1 - (1 - x/m)^3` left of the peak `m`, mirrored on the
    /// right. Maximum 1 at `m`, zero at both ends, strictly monotone on
    /// each side.
    pub fn rho(&self, x: f64) -> f64 {
        let m = self.peak();
        let u = if x <= m { x / m } else { (1.0 - x) / (1.0 - m) };
        let r = 1.0 - u;
        1.0 - r * r * r
    }

    pub fn rho_deriv(&self, x: f64) -> f64 {
        let m = self.peak();
        if x <= m {
            let r = 1.0 - x / m;
            3.0 * r * r / m
        } else {
            let r = 1.0 - (1.0 - x) / (1.0 - m);
            -3.0 * r * r / (1.0 - m)
        }
    }

    pub fn psi_cls(&self, x: f64) -> f64 {
        (2.0 * self.lambda).exp() - (self.lambda * self.rho(x)).exp()
    }

    pub fn psi_cls_deriv(&self, x: f64) -> f64 {
        -self.lambda * self.rho_deriv(x) * (self.lambda * self.rho(x)).exp()
    }

    pub fn xi(&self, x: f64) -> f64 {
        let u = (x - self.kappa_minus) / (self.kappa_plus - self.kappa_minus);
        1.0 - smoothstep(u).0
    }

    pub fn xi_deriv(&self, x: f64) -> f64 {
        let width = self.kappa_plus - self.kappa_minus;
        -smoothstep((x - self.kappa_minus) / width).1 / width
    }

    pub fn eta(&self, x: f64) -> f64 {
        let xi = self.xi(x);
        if xi == 1.0 {
            return self.psi_deg(x);
        }
        if xi == 0.0 {
            return self.psi_cls(x);
        }
        xi * self.psi_deg(x) + (1.0 - xi) * self.psi_cls(x)
    }

    pub fn eta_deriv(&self, x: f64) -> f64 {
        let xi = self.xi(x);
        let dxi = self.xi_deriv(x);
        let mut d = (1.0 - xi) * self.psi_cls_deriv(x);
        if xi != 0.0 {
            d += xi * self.psi_deg_deriv(x);
        }
        if dxi != 0.0 {
            d += dxi * (self.psi_deg(x) - self.psi_cls(x));
        }
        d
    }

    pub fn theta(&self, t: f64) -> Result<f64> {
        Ok(self.log_theta(t)?.exp())
    }

    /// `ln theta(t) = -4 ln(t (T - t))`.
    pub fn log_theta(&self, t: f64) -> Result<f64> {
        if !(t > 0.0 && t < self.horizon) {
            return Err(Error::OutOfDomain {
                t,
                horizon: self.horizon,
            });
        }
        Ok(-4.0 * (t * (self.horizon - t)).ln())
    }

    pub fn phi(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.eta(x) * self.theta(t)?)
    }

    /// `ln e^{-2 s phi} = -2 s phi(x,t)`.
    pub fn weight_log(&self, x: f64, t: f64, s: f64) -> Result<f64> {
        Ok(-2.0 * s * self.phi(x, t)?)
    }

    /// Check positivity of `psi_deg`, `rho_x != 0` outside `omega'` and
    /// `eta' != 0` on `(kappa+, w2)` at the given abscissae.
    pub fn verify_at(&self, xs: &[f64]) -> Result<()> {
        let (ap, bp) = self.omega_prime;
        for &x in xs {
            let p = self.psi_deg(x);
            if !(p > 0.0) {
                return Err(Error::WeightInvalid(format!(
                    "psi_deg({x}) = {p} is not positive (c2 = {}, threshold {})",
                    self.c2,
                    c2_threshold(&self.a)
                )));
            }
            if ((x > 0.0 && x < ap) || (x > bp && x < 1.0)) && self.rho_deriv(x) == 0.0 {
                return Err(Error::WeightInvalid(format!("rho_x vanishes at {x}")));
            }
            if x > self.kappa_plus && x < self.omega.1 && self.eta_deriv(x) == 0.0 {
                return Err(Error::WeightInvalid(format!("eta' vanishes at {x}")));
            }
        }
        Ok(())
    }

    pub fn verify_on_grid(&self, grid: &GridSpec) -> Result<()> {
        self.verify_at(grid.nodes())
    }
}

/// Split source `F0 + (beta F1)_x`, sampled at full grid nodes for
/// `t_n`, `n = 0..=M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceSplit {
    pub f0: Vec<Vec<f64>>,
    pub f1: Vec<Vec<f64>>,
}

impl SourceSplit {
    /// Nodal `F0 + (beta F1)_x` with the centered nodal derivative.
    pub fn combined(&self, grid: &GridSpec, beta: impl Fn(f64) -> f64) -> Vec<Vec<f64>> {
        let bx: Vec<f64> = grid.nodes().iter().map(|&x| beta(x)).collect();
        self.f0
            .iter()
            .zip(&self.f1)
            .map(|(f0, f1)| {
                let bf1: Vec<f64> = bx.iter().zip(f1).map(|(b, f)| b * f).collect();
                let d = grid.nodal_gradient(&bf1);
                f0.iter().zip(d).map(|(a, b)| a + b).collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum CarlemanSource {
    Zero,
    Single(Vec<Vec<f64>>),
    Split(SourceSplit),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Lemma,
    Theorem,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Lemma => write!(f, "lemma"),
            Variant::Theorem => write!(f, "theorem"),
        }
    }
}

/// Two weighted integrals held as logarithms (`-inf` for zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPair {
    pub log_lhs: f64,
    pub log_rhs: f64,
}

impl LogPair {
    pub fn lhs(&self) -> f64 {
        self.log_lhs.exp()
    }

    pub fn rhs(&self) -> f64 {
        self.log_rhs.exp()
    }

    /// `lhs / rhs`; 0 when both vanish, `inf` when only `rhs` does.
    pub fn ratio(&self) -> f64 {
        if self.log_lhs == f64::NEG_INFINITY {
            return 0.0;
        }
        (self.log_lhs - self.log_rhs).exp()
    }

    /// `ln(lhs / rhs)`, finite where [`LogPair::ratio`] under- or overflows.
    pub fn log_ratio(&self) -> f64 {
        if self.log_lhs == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.log_lhs - self.log_rhs
    }
}

/// Streaming `ln sum exp(terms)`.
#[derive(Debug, Clone, Copy)]
struct LogSum {
    max: f64,
    acc: f64,
}

impl LogSum {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            acc: 0.0,
        }
    }

    /// Add `exp(log_value)`.
    fn add(&mut self, log_value: f64) {
        if log_value == f64::NEG_INFINITY {
            return;
        }
        if log_value > self.max {
            self.acc = self.acc * (self.max - log_value).exp() + 1.0;
            self.max = log_value;
        } else {
            self.acc += (log_value - self.max).exp();
        }
    }

    /// Add `value * exp(log_weight)` for `value >= 0`.
    fn add_scaled(&mut self, value: f64, log_weight: f64) {
        if value > 0.0 {
            self.add(value.ln() + log_weight);
        }
    }

    fn value(&self, what: &'static str) -> Result<f64> {
        if self.max == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        let v = self.max + self.acc.ln();
        if v.is_nan() || v == f64::INFINITY {
            return Err(Error::NonFiniteIntegral(what));
        }
        Ok(v)
    }
}

/// Per-grid cache of the spatial weight and coefficient samples.
struct Frame<'a> {
    p: &'a LinearProblem,
    eta: Vec<f64>,
    log_theta: Vec<f64>,
    mask: Vec<bool>,
}

impl<'a> Frame<'a> {
    fn new(p: &'a LinearProblem, w: &CarlemanWeights) -> Result<Self> {
        let eta = p.grid.nodes().iter().map(|&x| w.eta(x)).collect();
        let log_theta = (1..p.steps)
            .map(|n| w.log_theta(p.time(n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            p,
            eta,
            log_theta,
            mask: p.omega_mask(),
        })
    }

    /// Interior time slices `n = 1..M-1` with `(n, ln theta_n)`.
    fn slices(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.log_theta
            .iter()
            .enumerate()
            .map(|(k, lt)| (k + 1, *lt))
    }

    fn log_weight(&self, i: usize, log_theta: f64, s: f64) -> f64 {
        -2.0 * s * self.eta[i] * log_theta.exp()
    }
}

type Field = Vec<Vec<f64>>;

fn check_source_shape(p: &LinearProblem, f: &[Vec<f64>]) -> Result<()> {
    if f.len() != p.steps + 1 || f.iter().any(|r| r.len() != p.grid.len()) {
        return Err(Error::InvalidInput(
            "source field does not match the grid".into(),
        ));
    }
    Ok(())
}

/// Weighted Carleman integrals for one solution `v`.
///
/// `lhs = sum (s theta a v_x^2 + s^3 theta^3 x^2/a v^2) e^{-2 s phi}`;
/// lemma `rhs = sum e^{-2 s phi} F^2 + sum_w e^{-2 s phi} v^2`;
/// theorem `rhs = sum_w e^{-2 s phi} v^2 + sum (F0^2 + s^2 theta^3 beta^2/a F1^2) e^{-2 s phi}`.
/// Sums use trapezoid weights in space and the interior time slices.
pub fn carleman_functionals(
    p: &LinearProblem,
    w: &CarlemanWeights,
    v: &Trajectory,
    src: &CarlemanSource,
    s: f64,
    variant: Variant,
) -> Result<LogPair> {
    let frame = Frame::new(p, w)?;
    functionals_in(&frame, v, src, s, variant)
}

fn functionals_in(
    frame: &Frame<'_>,
    v: &Trajectory,
    src: &CarlemanSource,
    s: f64,
    variant: Variant,
) -> Result<LogPair> {
    if !(s > 0.0) {
        return Err(Error::InvalidInput(
            "Carleman parameter must be positive".into(),
        ));
    }
    let p = frame.p;
    let grid = &p.grid;
    let x = grid.nodes();
    let q = grid.weights();
    let a = &p.a;
    let dt = p.dt();
    let (f0, f1): (Option<Field>, Option<&Field>) = match (src, variant) {
        (CarlemanSource::Zero, _) => (None, None),
        (CarlemanSource::Single(f), _) => {
            check_source_shape(p, f)?;
            (Some(f.clone()), None)
        }
        (CarlemanSource::Split(split), Variant::Lemma) => {
            check_source_shape(p, &split.f0)?;
            check_source_shape(p, &split.f1)?;
            (Some(split.combined(grid, |x| p.drift.beta(x))), None)
        }
        (CarlemanSource::Split(split), Variant::Theorem) => {
            check_source_shape(p, &split.f0)?;
            check_source_shape(p, &split.f1)?;
            (Some(split.f0.clone()), Some(&split.f1))
        }
    };
    let a_nodes: Vec<f64> = x.iter().map(|&xi| a.value(xi)).collect();
    let x2a: Vec<f64> = x.iter().map(|&xi| a.x2_over_a(xi)).collect();
    let b2a: Vec<f64> = x
        .iter()
        .zip(&a_nodes)
        .map(|(&xi, &ai)| {
            if ai > 0.0 {
                p.drift.beta(xi).powi(2) / ai
            } else {
                0.0
            }
        })
        .collect();
    let ln_s = s.ln();
    let mut lhs = LogSum::new();
    let mut rhs = LogSum::new();
    for (n, lt) in frame.slices() {
        let vn = v.state(n);
        let vx = grid.nodal_gradient(vn);
        for i in 0..grid.len() {
            let lw = frame.log_weight(i, lt, s) + (dt * q[i]).ln();
            let grad = a_nodes[i] * vx[i] * vx[i];
            if grad > 0.0 {
                lhs.add(ln_s + lt + grad.ln() + lw);
            }
            let zero = x2a[i] * vn[i] * vn[i];
            if zero > 0.0 {
                lhs.add(3.0 * (ln_s + lt) + zero.ln() + lw);
            }
            if frame.mask[i] {
                rhs.add_scaled(vn[i] * vn[i], lw);
            }
            if let Some(f) = &f0 {
                rhs.add_scaled(f[n][i] * f[n][i], lw);
            }
            if let Some(f1) = f1 {
                let t = b2a[i] * f1[n][i] * f1[n][i];
                if t > 0.0 {
                    rhs.add(2.0 * ln_s + 3.0 * lt + t.ln() + lw);
                }
            }
            if !(vn[i].is_finite() && vx[i].is_finite()) {
                return Err(Error::NonFiniteIntegral("Carleman integrand"));
            }
        }
    }
    Ok(LogPair {
        log_lhs: lhs.value("Carleman lhs")?,
        log_rhs: rhs.value("Carleman rhs")?,
    })
}

/// Panels of the composite Gauss-Legendre rule for the local terms. The
/// weight `e^{-2 s phi}` varies on scales far below typical mesh widths inside
/// `omega`, so node sums there depend on where the nodes fall.
const LOCAL_PANELS: usize = 2048;

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Quadrature point on an interval: `eta(x)`, `ln` of the rule weight and
/// the linear interpolation stencil `(j, frac)` between nodes `j`, `j + 1`.
struct LocalPoint {
    eta: f64,
    log_q: f64,
    j: usize,
    frac: f64,
}

impl LocalPoint {
    fn interp(&self, u: &[f64]) -> f64 {
        u[self.j] + self.frac * (u[self.j + 1] - u[self.j])
    }
}

fn local_rule(grid: &GridSpec, w: &CarlemanWeights, lo: f64, hi: f64) -> Vec<LocalPoint> {
    let nodes = grid.nodes();
    let h = (hi - lo) / LOCAL_PANELS as f64;
    (0..LOCAL_PANELS)
        .flat_map(|k| {
            let mid = lo + (k as f64 + 0.5) * h;
            GAUSS4
                .iter()
                .map(move |&(z, q)| (mid + 0.5 * h * z, 0.5 * h * q))
        })
        .map(|(x, q)| {
            let j = nodes.partition_point(|&n| n <= x).clamp(1, nodes.len() - 1) - 1;
            LocalPoint {
                eta: w.eta(x),
                log_q: q.ln(),
                j,
                frac: (x - nodes[j]) / (nodes[j + 1] - nodes[j]),
            }
        })
        .collect()
}

/// Local energy estimate: `lhs = int_{w'} e^{-2 s phi} v_x^2`,
/// `rhs = int_w e^{-2 s phi} v^2 + int_Q e^{-2 s phi} F^2`.
///
/// The local terms use a fixed fine rule with `v`, `v_x` interpolated
/// linearly from the nodes; the source term is a node sum.
pub fn cacciopoli_check(
    p: &LinearProblem,
    w: &CarlemanWeights,
    v: &Trajectory,
    f: Option<&[Vec<f64>]>,
    s: f64,
) -> Result<LogPair> {
    let frame = Frame::new(p, w)?;
    let rules = CacciopoliRules::new(p, w);
    cacciopoli_in(&frame, &rules, v, f, s)
}

struct CacciopoliRules {
    inner: Vec<LocalPoint>,
    outer: Vec<LocalPoint>,
}

impl CacciopoliRules {
    fn new(p: &LinearProblem, w: &CarlemanWeights) -> Self {
        Self {
            inner: local_rule(&p.grid, w, w.omega_prime.0, w.omega_prime.1),
            outer: local_rule(&p.grid, w, p.omega.0, p.omega.1),
        }
    }
}

fn cacciopoli_in(
    frame: &Frame<'_>,
    rules: &CacciopoliRules,
    v: &Trajectory,
    f: Option<&[Vec<f64>]>,
    s: f64,
) -> Result<LogPair> {
    let p = frame.p;
    if let Some(f) = f {
        check_source_shape(p, f)?;
    }
    let grid = &p.grid;
    let q = grid.weights();
    let dt = p.dt();
    let mut lhs = LogSum::new();
    let mut rhs = LogSum::new();
    for (n, lt) in frame.slices() {
        let vn = v.state(n);
        let vx = grid.nodal_gradient(vn);
        let scale = -2.0 * s * lt.exp();
        for pt in &rules.inner {
            let g = pt.interp(&vx);
            lhs.add_scaled(g * g, scale * pt.eta + pt.log_q + dt.ln());
        }
        for pt in &rules.outer {
            let u = pt.interp(vn);
            rhs.add_scaled(u * u, scale * pt.eta + pt.log_q + dt.ln());
        }
        if let Some(f) = f {
            for i in 0..grid.len() {
                let lw = frame.log_weight(i, lt, s) + (dt * q[i]).ln();
                rhs.add_scaled(f[n][i] * f[n][i], lw);
            }
        }
    }
    Ok(LogPair {
        log_lhs: lhs.value("Cacciopoli lhs")?,
        log_rhs: rhs.value("Cacciopoli rhs")?,
    })
}

/// Number of modes in random smooth terminal data.
pub const TERMINAL_MODES: usize = 4;

/// Smooth random terminal datum: standard normal combination of the first
/// [`TERMINAL_MODES`] modes compatible with the boundary conditions
/// (`sin(k pi x)` for WDP, `cos((k - 1/2) pi x)` for SDP). Coefficients do
/// not depend on the grid, so refinement studies see the same function.
pub fn random_smooth_terminal(rng: &mut SampleRng, grid: &GridSpec, case: Case) -> Vec<f64> {
    let g: Vec<f64> = (0..TERMINAL_MODES)
        .map(|_| rng.sample(StandardNormal))
        .collect();
    grid.nodes()
        .iter()
        .map(|&x| {
            g.iter()
                .enumerate()
                .map(|(k, c)| {
                    let k = (k + 1) as f64;
                    match case {
                        Case::Wdp => c * (k * std::f64::consts::PI * x).sin(),
                        Case::Sdp => c * ((k - 0.5) * std::f64::consts::PI * x).cos(),
                    }
                })
                .sum()
        })
        .collect()
}

/// Smooth random source field bounded away from zero:
/// `sign (1 + u) + sum_{k,l <= 2} g_kl sin(k pi x) cos(l pi t / T)` with
/// `u ~ U[0,1)`, `g_kl ~ U[-0.1, 0.1]`, so `|F| >= 0.6`.
pub fn random_smooth_source(rng: &mut SampleRng, p: &LinearProblem) -> Vec<Vec<f64>> {
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let base = sign * (1.0 + rng.random::<f64>());
    let g: Vec<f64> = (0..4).map(|_| rng.random_range(-0.1..0.1)).collect();
    let pi = std::f64::consts::PI;
    (0..=p.steps)
        .map(|n| {
            let t = p.time(n);
            p.grid
                .nodes()
                .iter()
                .map(|&x| {
                    let mut v = base;
                    for k in 0..2 {
                        for l in 0..2 {
                            v += g[2 * k + l]
                                * ((k + 1) as f64 * pi * x).sin()
                                * ((l + 1) as f64 * pi * t / p.horizon).cos();
                        }
                    }
                    v
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct AuditConfig {
    pub samples: usize,
    pub s_values: Vec<f64>,
    pub seed: u64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            samples: 50,
            s_values: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub s: f64,
    pub variant: Variant,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub variant: Variant,
    pub rows: Vec<AuditRow>,
    /// Smallest `s` where the max-ratio curve plateaus, if it does.
    pub s0: Option<f64>,
}

impl AuditReport {
    /// Every max ratio at `s >= s0` (all `s` when no plateau) is finite.
    pub fn bounded_beyond_s0(&self) -> bool {
        let from = self.s0.unwrap_or(f64::NEG_INFINITY);
        self.rows
            .iter()
            .filter(|r| r.s >= from)
            .all(|r| r.max_ratio.is_finite())
    }
}

/// Relative growth per doubling below which the ratio curve counts as flat.
pub const PLATEAU_SLOPE: f64 = 0.05;

/// Smallest `s_k` from which every subsequent step of the curve grows by
/// less than [`PLATEAU_SLOPE`] per doubling of `s`.
pub fn calibrate_s0(s_values: &[f64], ratios: &[f64]) -> Option<f64> {
    let n = s_values.len();
    if n < 2 {
        return None;
    }
    let flat: Vec<bool> = (0..n - 1)
        .map(|k| {
            let doublings = (s_values[k + 1] / s_values[k]).log2();
            let growth = (ratios[k + 1] / ratios[k]).powf(1.0 / doublings) - 1.0;
            growth.is_finite() && growth.abs() < PLATEAU_SLOPE
        })
        .collect();
    (0..n - 1)
        .find(|&k| flat[k..].iter().all(|f| *f))
        .map(|k| s_values[k])
}

fn summarize(mut values: Vec<f64>) -> (f64, f64) {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = values.len();
    let max = values.last().copied().unwrap_or(0.0);
    let median = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    };
    (max, median)
}

/// The pure degenerate operator (no zero- or first-order terms), which is
/// the setting of the weighted inequalities.
fn bare(p: &LinearProblem) -> LinearProblem {
    p.with_drift(
        p.drift
            .with_fields(SpaceTimeField::zero(), SpaceTimeField::zero()),
    )
}

/// Ratio sweep over a random solution ensemble. Lemma samples are
/// source-free solutions from smooth random terminal data; theorem samples
/// add random smooth `(F0, F1)`.
pub fn carleman_audit(
    p: &LinearProblem,
    w: &CarlemanWeights,
    variant: Variant,
    cfg: &AuditConfig,
) -> Result<AuditReport> {
    let p = bare(p);
    let prop = Propagator::new(&p)?;
    let frame = Frame::new(&p, w)?;
    let per_sample: Vec<Vec<f64>> = (0..cfg.samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(cfg.seed, k as u64);
            let v_t = random_smooth_terminal(&mut rng, &p.grid, p.a.case());
            let (v, src) = match variant {
                Variant::Lemma => (prop.adjoint(&v_t), CarlemanSource::Zero),
                Variant::Theorem => {
                    let split = SourceSplit {
                        f0: random_smooth_source(&mut rng, &p),
                        f1: random_smooth_source(&mut rng, &p),
                    };
                    let f = split.combined(&p.grid, |x| p.drift.beta(x));
                    (
                        prop.adjoint_with_source(&v_t, &f),
                        CarlemanSource::Split(split),
                    )
                }
            };
            cfg.s_values
                .iter()
                .map(|&s| functionals_in(&frame, &v, &src, s, variant).map(|r| r.ratio()))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let rows: Vec<AuditRow> = cfg
        .s_values
        .iter()
        .enumerate()
        .map(|(j, &s)| {
            let (max_ratio, median_ratio) = summarize(per_sample.iter().map(|r| r[j]).collect());
            AuditRow {
                s,
                variant,
                max_ratio,
                median_ratio,
                n_samples: cfg.samples,
            }
        })
        .collect();
    let maxes: Vec<f64> = rows.iter().map(|r| r.max_ratio).collect();
    Ok(AuditReport {
        variant,
        s0: calibrate_s0(&cfg.s_values, &maxes),
        rows,
    })
}

/// Cacciopoli ratios over source-free random solutions; returns
/// `(max, median)` of `ln(lhs / rhs)`, since the ratios themselves underflow
/// for short horizons.
pub fn cacciopoli_audit(
    p: &LinearProblem,
    w: &CarlemanWeights,
    s: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let p = bare(p);
    let prop = Propagator::new(&p)?;
    let frame = Frame::new(&p, w)?;
    let rules = CacciopoliRules::new(&p, w);
    let ratios = (0..samples)
        .into_par_iter()
        .map(|k| {
            let mut rng = sample_rng(seed, k as u64);
            let v_t = random_smooth_terminal(&mut rng, &p.grid, p.a.case());
            let v = prop.adjoint(&v_t);
            cacciopoli_in(&frame, &rules, &v, None, s).map(|r| r.log_ratio())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(ratios))
}
