//! Matrix functions: dense Padé exponentials and Krylov actions of
//! `exp(tK) v` and `phi_1(tK) v` for operators known only through their action.

mod dense;
mod krylov;

pub use dense::{dense_expm, dense_phi1};
pub use krylov::{krylov_expmv, krylov_phi1v, KrylovParams};

use nalgebra::DMatrix;

use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// A linear map on `R^dim` known through its action.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = K x`; `x` and `y` have length `dim`.
    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()>;

    /// Coarse upper bound on the operator norm, used to pick Krylov substeps.
    fn norm_estimate(&self) -> f64;

    fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.dim()];
        self.apply(x, &mut y)?;
        Ok(y)
    }
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.matvec(x, y);
        Ok(())
    }

    fn norm_estimate(&self) -> f64 {
        self.norm_inf()
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(())
    }

    fn norm_estimate(&self) -> f64 {
        self.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }
}

/// `K = A + B`
pub struct SumOperator<'a> {
    pub first: &'a dyn LinearOperator,
    pub second: &'a dyn LinearOperator,
}

impl LinearOperator for SumOperator<'_> {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        self.first.apply(x, y)?;
        let mut tmp = vec![0.0; y.len()];
        self.second.apply(x, &mut tmp)?;
        y.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        Ok(())
    }

    fn norm_estimate(&self) -> f64 {
        self.first.norm_estimate() + self.second.norm_estimate()
    }
}

/// The diagonal operator `x -> d .* x`.
#[derive(Debug, Clone)]
pub struct DiagonalOperator(pub Vec<f64>);

impl LinearOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.0) {
            *yi = di * xi;
        }
        Ok(())
    }

    fn norm_estimate(&self) -> f64 {
        self.0.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}
