//! Spatial grid, flux-form operator and discrete norms.
//!
//! The operator is `A y = -W^{-1} S y + b y + beta c D y` where `S` is the
//! symmetric face-flux stiffness matrix (coefficient sampled at face
//! midpoints), `W` holds trapezoid weights and `D` is the upwind difference
//! selected by the sign of `beta c`. Under zero drift `A` is self-adjoint
//! in the `W`-weighted inner product.

use std::ops::{Deref, DerefMut};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::coefficients::{Case, DegeneracyCoefficient};
use crate::error::{Error, Result};
use crate::sampling::sample_rng;
use crate::tridiag::Tridiagonal;

pub const MIN_NODES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    nodes: Vec<f64>,
    gamma: f64,
    weights: Vec<f64>,
}

/// Nodes `x_i = (i/(n-1))^gamma`.
pub fn graded_nodes(n: usize, gamma: f64) -> Vec<f64> {
    let last = (n - 1) as f64;
    (0..n)
        .map(|i| {
            if i == n - 1 {
                1.0
            } else {
                (i as f64 / last).powf(gamma)
            }
        })
        .collect()
}

pub fn build_grid(n: usize, gamma: f64) -> Result<GridSpec> {
    if n < MIN_NODES {
        return Err(Error::BadResolution(n));
    }
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!(
            "grading must be >= 1, got {gamma}"
        )));
    }
    Ok(GridSpec::from_nodes(graded_nodes(n, gamma), gamma))
}

impl GridSpec {
    fn from_nodes(nodes: Vec<f64>, gamma: f64) -> Self {
        let n = nodes.len();
        let weights = (0..n)
            .map(|i| {
                let left = if i > 0 { nodes[i] - nodes[i - 1] } else { 0.0 };
                let right = if i + 1 < n {
                    nodes[i + 1] - nodes[i]
                } else {
                    0.0
                };
                0.5 * (left + right)
            })
            .collect();
        Self {
            nodes,
            gamma,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Trapezoid quadrature weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `x_{i+1} - x_i` for `i = 0..n-1`.
    pub fn spacing(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn face_midpoints(&self) -> Vec<f64> {
        self.nodes.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(w))
            .map(|(q, (a, b))| q * a * b)
            .sum()
    }

    pub fn l2_norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// `|| sqrt(a) u_x ||^2` using face differences.
    pub fn gradient_energy(&self, a: &DegeneracyCoefficient, u: &[f64]) -> f64 {
        self.nodes
            .windows(2)
            .zip(u.windows(2))
            .map(|(x, v)| {
                let h = x[1] - x[0];
                let d = (v[1] - v[0]) / h;
                a.value(0.5 * (x[0] + x[1])) * d * d * h
            })
            .sum()
    }

    pub fn h1a_norm(&self, a: &DegeneracyCoefficient, u: &[f64]) -> f64 {
        (self.inner(u, u) + self.gradient_energy(a, u)).sqrt()
    }

    /// Nodal derivative: centered over the two adjacent cells, one-sided at
    /// the ends.
    pub fn nodal_gradient(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let x = &self.nodes;
        (0..n)
            .map(|i| {
                if i == 0 {
                    (u[1] - u[0]) / (x[1] - x[0])
                } else if i == n - 1 {
                    (u[n - 1] - u[n - 2]) / (x[n - 1] - x[n - 2])
                } else {
                    (u[i + 1] - u[i - 1]) / (x[i + 1] - x[i - 1])
                }
            })
            .collect()
    }

    /// Indices of nodes strictly inside `(lo, hi)`.
    pub fn mask(&self, lo: f64, hi: f64) -> Vec<bool> {
        self.nodes.iter().map(|&x| x > lo && x < hi).collect()
    }
}

/// Nodal values on the full grid. Eliminated boundary nodes hold zero.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self(grid.nodes().iter().map(|&x| f(x)).collect())
    }

    pub fn l2_norm(&self, grid: &GridSpec) -> f64 {
        grid.l2_norm(&self.0)
    }

    pub fn h1a_norm(&self, grid: &GridSpec, a: &DegeneracyCoefficient) -> f64 {
        grid.h1a_norm(a, &self.0)
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for StateVector {
    type Target = Vec<f64>;
    fn deref(&self) -> &Vec<f64> {
        &self.0
    }
}

impl DerefMut for StateVector {
    fn deref_mut(&mut self) -> &mut Vec<f64> {
        &mut self.0
    }
}

impl From<Vec<f64>> for StateVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Assembled operator restricted to the unknowns. Band slots `sub[0]` and
/// `sup[last]` keep the couplings to eliminated Dirichlet nodes so that the
/// stencil can also be applied to full nodal vectors.
#[derive(Debug, Clone)]
pub struct TriDiagOperator {
    pub case: Case,
    /// Grid index of the first unknown.
    pub first: usize,
    pub n_nodes: usize,
    pub matrix: Tridiagonal,
    /// Quadrature weights of the unknowns.
    pub weights: Vec<f64>,
}

impl TriDiagOperator {
    pub fn n_unknowns(&self) -> usize {
        self.matrix.len()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.matrix.matvec(u)
    }

    /// Apply the stencil to a full nodal vector, boundary values included.
    pub fn apply_full(&self, u: &[f64]) -> Vec<f64> {
        let m = &self.matrix;
        let mut out = vec![0.0; self.n_nodes];
        for r in 0..self.n_unknowns() {
            let i = self.first + r;
            let mut acc = m.diag[r] * u[i];
            if i > 0 {
                acc += m.sub[r] * u[i - 1];
            }
            if i + 1 < self.n_nodes {
                acc += m.sup[r] * u[i + 1];
            }
            out[i] = acc;
        }
        out
    }

    /// Weighted inner product over the unknowns.
    pub fn inner(&self, u: &[f64], w: &[f64]) -> f64 {
        self.weights
            .iter()
            .zip(u.iter().zip(w))
            .map(|(q, (a, b))| q * a * b)
            .sum()
    }
}

/// Geometry shared by every operator assembled on one grid for one
/// coefficient: diffusion stencil, weights and upwind spacings.
#[derive(Debug, Clone)]
pub struct Discretization {
    grid: GridSpec,
    case: Case,
    first: usize,
    n_unknowns: usize,
    weights: Vec<f64>,
    stiffness: Tridiagonal,
    beta: Vec<f64>,
}

impl Discretization {
    pub fn new(grid: &GridSpec, a: &DegeneracyCoefficient, beta: impl Fn(f64) -> f64) -> Self {
        let case = a.case();
        let n = grid.len();
        let first = match case {
            Case::Wdp => 1,
            Case::Sdp => 0,
        };
        let last = n - 2;
        let n_unknowns = last + 1 - first;
        let x = grid.nodes();
        let face_flux: Vec<f64> = (0..n - 1)
            .map(|j| a.value(0.5 * (x[j] + x[j + 1])) / (x[j + 1] - x[j]))
            .collect();
        let mut stiffness = Tridiagonal::zeros(n_unknowns);
        for r in 0..n_unknowns {
            let i = first + r;
            let right = face_flux[i];
            let left = if i == 0 { 0.0 } else { face_flux[i - 1] };
            stiffness.diag[r] = left + right;
            stiffness.sub[r] = -left;
            stiffness.sup[r] = -right;
        }
        let weights = grid.weights()[first..=last].to_vec();
        let beta = x[first..=last].iter().map(|&xi| beta(xi)).collect();
        Self {
            grid: grid.clone(),
            case,
            first,
            n_unknowns,
            weights,
            stiffness,
            beta,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn case(&self) -> Case {
        self.case
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn n_unknowns(&self) -> usize {
        self.n_unknowns
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Symmetric stiffness `S` (`v^T S v = ||sqrt(a) v_x||^2`).
    pub fn stiffness(&self) -> &Tridiagonal {
        &self.stiffness
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        full[self.first..self.first + self.n_unknowns].to_vec()
    }

    pub fn extend(&self, unknowns: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.grid.len()];
        full[self.first..self.first + self.n_unknowns].copy_from_slice(unknowns);
        full
    }

    /// Assemble with unknown-indexed zero-order `b` and first-order `c`.
    pub fn operator(&self, b: &[f64], c: &[f64]) -> TriDiagOperator {
        let x = self.grid.nodes();
        let mut m = Tridiagonal::zeros(self.n_unknowns);
        for r in 0..self.n_unknowns {
            let i = self.first + r;
            let w = self.weights[r];
            m.diag[r] = self.stiffness.diag[r] / w + b[r];
            m.sub[r] = self.stiffness.sub[r] / w;
            m.sup[r] = self.stiffness.sup[r] / w;
            let v = self.beta[r] * c[r];
            if v > 0.0 && i > 0 {
                let h = x[i] - x[i - 1];
                m.diag[r] += v / h;
                m.sub[r] -= v / h;
            } else if v != 0.0 {
                let h = x[i + 1] - x[i];
                m.diag[r] -= v / h;
                m.sup[r] += v / h;
            }
        }
        TriDiagOperator {
            case: self.case,
            first: self.first,
            n_nodes: self.grid.len(),
            matrix: m,
            weights: self.weights.clone(),
        }
    }

    /// Upwind first-derivative stencil matching [`Discretization::operator`]
    /// for velocity `beta c`, applied to a full nodal vector at node `i`.
    pub fn upwind_derivative(&self, u: &[f64], i: usize, velocity: f64) -> f64 {
        let x = self.grid.nodes();
        if velocity > 0.0 && i > 0 {
            (u[i] - u[i - 1]) / (x[i] - x[i - 1])
        } else if velocity != 0.0 {
            (u[i + 1] - u[i]) / (x[i + 1] - x[i])
        } else {
            0.0
        }
    }

    pub fn beta_unknowns(&self) -> &[f64] {
        &self.beta
    }

    /// `||(a u_x)_x||` over the unknowns, a diagnostic for the `H^2_a` norm.
    pub fn h2a_seminorm(&self, u_full: &[f64]) -> f64 {
        let u = self.restrict(u_full);
        let su = self.stiffness.matvec(&u);
        su.iter()
            .zip(&self.weights)
            .map(|(s, w)| s * s / w)
            .sum::<f64>()
            .sqrt()
    }
}

/// Operator at time `t` with `b`, `c` evaluated from the drift envelope.
pub fn assemble_operator(
    grid: &GridSpec,
    a: &DegeneracyCoefficient,
    drift: &crate::coefficients::DriftEnvelope,
    t: f64,
) -> TriDiagOperator {
    let disc = Discretization::new(grid, a, |x| drift.beta(x));
    let idx = disc.first()..disc.first() + disc.n_unknowns();
    let x = grid.nodes();
    let b: Vec<f64> = idx.clone().map(|i| drift.b.at(x[i], t, 0, i)).collect();
    let c: Vec<f64> = idx.map(|i| drift.c.at(x[i], t, 0, i)).collect();
    disc.operator(&b, &c)
}

/// Number of inverse-iteration sweeps applied to each Hardy sample.
pub const HARDY_REFINE_ITERS: usize = 40;

/// Largest observed Hardy quotient `||v||^2 / ||sqrt(a) v_x||^2` over
/// random `v` vanishing where the boundary conditions require. Each sample
/// is refined by inverse iteration on `S^{-1} W`, which increases the
/// quotient monotonically toward its maximum.
pub fn hardy_check(
    grid: &GridSpec,
    a: &DegeneracyCoefficient,
    n_samples: usize,
    seed: u64,
) -> Result<f64> {
    let disc = Discretization::new(grid, a, |x| x);
    let s = disc.stiffness();
    let factor = s
        .factor()
        .map_err(|row| Error::SolverBreakdown { step: 0, row })?;
    let quotient = |v: &[f64]| -> Result<f64> {
        let num: f64 = v.iter().zip(disc.weights()).map(|(x, w)| w * x * x).sum();
        let den: f64 = v.iter().zip(s.matvec(v)).map(|(x, y)| x * y).sum();
        if !(den > 0.0) {
            return Err(Error::DegenerateSample);
        }
        Ok(num / den)
    };
    let mut best = 0.0_f64;
    for k in 0..n_samples {
        let mut rng = sample_rng(seed, k as u64);
        let mut v: Vec<f64> = (0..disc.n_unknowns())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        if v.iter().all(|x| *x == 0.0) {
            continue;
        }
        best = best.max(quotient(&v)?);
        for _ in 0..HARDY_REFINE_ITERS {
            let mut next: Vec<f64> = v.iter().zip(disc.weights()).map(|(x, w)| w * x).collect();
            factor.solve_in_place(&mut next);
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = next.into_iter().map(|x| x / norm).collect();
            best = best.max(quotient(&v)?);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::DriftEnvelope;

    #[test]
    fn uniform_nodes() {
        assert_eq!(graded_nodes(5, 1.0), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn squared_nodes() {
        assert_eq!(
            graded_nodes(5, 2.0),
            vec![0.0, 1.0 / 16.0, 0.25, 9.0 / 16.0, 1.0]
        );
    }

    #[test]
    fn seven_nodes_even_spacing() {
        let x = graded_nodes(7, 1.0);
        for w in x.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    #[test]
    fn coarse_grid_rejected() {
        assert_eq!(build_grid(5, 1.0), Err(Error::BadResolution(5)));
        assert!(build_grid(8, 1.0).is_ok());
        assert!(build_grid(16, 0.5).is_err());
    }

    #[test]
    fn sdp_constant_vector_only_right_residual() {
        let grid = build_grid(16, 1.0).unwrap();
        let a = DegeneracyCoefficient::power(1.5).unwrap();
        let op = assemble_operator(&grid, &a, &DriftEnvelope::zero(), 0.0);
        assert_eq!(op.first, 0);
        let u = vec![1.0; op.n_unknowns()];
        let au = op.apply(&u);
        let last = au.len() - 1;
        for (r, v) in au.iter().enumerate() {
            if r == last {
                assert!(*v > 0.0);
            } else {
                assert!(v.abs() < 1e-12, "row {r}: {v}");
            }
        }
        // Zero left flux at node 0.
        let h = grid.spacing(0);
        let expected = a.value(0.5 * h) / (h * 0.5 * h);
        assert!((op.matrix.diag[0] - expected).abs() < 1e-10 * expected);
        assert_eq!(op.matrix.sub[0], 0.0);
    }

    #[test]
    fn row_sum_equals_b() {
        let grid = build_grid(20, 1.3).unwrap();
        let a = DegeneracyCoefficient::power(0.5).unwrap();
        let drift = DriftEnvelope::zero().with_fields(
            crate::coefficients::SpaceTimeField::Constant(5.0),
            crate::coefficients::SpaceTimeField::zero(),
        );
        let op = assemble_operator(&grid, &a, &drift, 0.0);
        let au = op.apply_full(&vec![1.0; grid.len()]);
        for v in &au[1..grid.len() - 1] {
            assert!((v - 5.0).abs() < 1e-9, "{v}");
        }
    }

    #[test]
    fn h1a_dominates_l2() {
        let grid = build_grid(32, 1.0).unwrap();
        let a = DegeneracyCoefficient::power(0.5).unwrap();
        let u = StateVector::from_fn(&grid, |x| x * (1.0 - x));
        assert!(u.h1a_norm(&grid, &a) >= u.l2_norm(&grid));
    }
}
