//! Symmetric tridiagonal matrices and the Thomas solver used by the P1
//! assembly and the implicit stepper.

use crate::error::{CoreError, Result};

/// Tridiagonal matrix stored by bands. `sub` and `sup` have length `n - 1`.
#[derive(Debug, Clone)]
pub struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        assert!(n >= 1);
        Tridiagonal {
            sub: vec![0.0; n - 1],
            diag: vec![0.0; n],
            sup: vec![0.0; n - 1],
        }
    }

    pub fn n(&self) -> usize {
        self.diag.len()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n();
        assert_eq!(x.len(), n);
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut v = self.diag[i] * x[i];
            if i > 0 {
                v += self.sub[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                v += self.sup[i] * x[i + 1];
            }
            y[i] = v;
        }
        y
    }

    /// Quadratic form `x^T A y`.
    pub fn quad_form(&self, x: &[f64], y: &[f64]) -> f64 {
        let ay = self.matvec(y);
        x.iter().zip(&ay).map(|(a, b)| a * b).sum()
    }

    /// Thomas algorithm. Fails on a vanishing pivot (singular or not
    /// diagonally dominant enough for this factorization).
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.n();
        assert_eq!(rhs.len(), n);
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut pivot = self.diag[0];
        if pivot == 0.0 {
            return Err(CoreError::SolverFailure("zero pivot in tridiagonal solve".into()));
        }
        c[0] = if n > 1 { self.sup[0] / pivot } else { 0.0 };
        d[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.sub[i - 1] * c[i - 1];
            if pivot == 0.0 {
                return Err(CoreError::SolverFailure("zero pivot in tridiagonal solve".into()));
            }
            if i + 1 < n {
                c[i] = self.sup[i] / pivot;
            }
            d[i] = (rhs[i] - self.sub[i - 1] * d[i - 1]) / pivot;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            let next = x[i + 1];
            x[i] -= c[i] * next;
        }
        Ok(x)
    }

    /// Max absolute asymmetry `|A[i,j] - A[j,i]|` over the off-diagonal bands.
    pub fn asymmetry(&self) -> f64 {
        self.sub
            .iter()
            .zip(&self.sup)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn solve_recovers_known_vector() {
        let n = 50;
        let mut a = Tridiagonal::zeros(n);
        for i in 0..n {
            a.diag[i] = 2.5;
            if i + 1 < n {
                a.sub[i] = -1.0;
                a.sup[i] = -1.0;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&x);
        let got = a.solve(&b).unwrap();
        for (g, e) in got.iter().zip(&x) {
            assert_relative_eq!(g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn singular_matrix_reports_failure() {
        let mut a = Tridiagonal::zeros(3);
        a.diag = vec![1.0, 0.0, 1.0];
        // second pivot becomes exactly zero
        assert!(a.solve(&[1.0, 1.0, 1.0]).is_err());
    }
}
