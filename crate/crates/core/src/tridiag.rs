//! LU factorization of tridiagonal systems (Thomas algorithm) with solves
//! against both the matrix and its transpose.

/// Tridiagonal matrix in band storage. `sub[0]` and `sup[n-1]` are unused.
#[derive(Debug, Clone, PartialEq)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.sub[i] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.sup[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let mut acc = self.diag[j] * x[j];
                if j + 1 < n {
                    acc += self.sub[j + 1] * x[j + 1];
                }
                if j > 0 {
                    acc += self.sup[j - 1] * x[j - 1];
                }
                acc
            })
            .collect()
    }

    /// Factor as `L U` with unit lower `L`. Returns the row of the first
    /// (numerically) zero pivot on failure.
    pub fn factor(&self) -> Result<TriFactor, usize> {
        let n = self.len();
        let mut mult = vec![0.0; n];
        let mut pivot = vec![0.0; n];
        let scale = self
            .diag
            .iter()
            .chain(&self.sub)
            .chain(&self.sup)
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        let tiny = f64::EPSILON * scale.max(f64::MIN_POSITIVE);
        for i in 0..n {
            let mut p = self.diag[i];
            if i > 0 {
                mult[i] = self.sub[i] / pivot[i - 1];
                p -= mult[i] * self.sup[i - 1];
            }
            if !p.is_finite() || p.abs() <= tiny {
                return Err(i);
            }
            pivot[i] = p;
        }
        Ok(TriFactor {
            mult,
            pivot,
            sup: self.sup.clone(),
        })
    }
}

#[derive(Debug, Clone)]
pub struct TriFactor {
    mult: Vec<f64>,
    pivot: Vec<f64>,
    sup: Vec<f64>,
}

impl TriFactor {
    /// Solve `A x = rhs` in place.
    pub fn solve_in_place(&self, rhs: &mut [f64]) {
        let n = self.pivot.len();
        for i in 1..n {
            rhs[i] -= self.mult[i] * rhs[i - 1];
        }
        rhs[n - 1] /= self.pivot[n - 1];
        for i in (0..n - 1).rev() {
            rhs[i] = (rhs[i] - self.sup[i] * rhs[i + 1]) / self.pivot[i];
        }
    }

    /// Solve `A^T x = rhs` in place (`A^T = U^T L^T`).
    pub fn solve_transpose_in_place(&self, rhs: &mut [f64]) {
        let n = self.pivot.len();
        rhs[0] /= self.pivot[0];
        for i in 1..n {
            rhs[i] = (rhs[i] - self.sup[i - 1] * rhs[i - 1]) / self.pivot[i];
        }
        for i in (0..n - 1).rev() {
            rhs[i] -= self.mult[i + 1] * rhs[i + 1];
        }
    }
}
