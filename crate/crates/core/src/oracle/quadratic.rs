//! Quadratic loss 1/2 theta^T A theta for a symmetric matrix A. The third
//! derivative vanishes identically, which makes this family the control case
//! for every sharpening-related quantity.

use super::{check_dim, finite_value, Capabilities, LossOracle};
use crate::error::{EosError, Result};
use crate::vector::ParameterVector;

#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    /// Row-major symmetric matrix.
    matrix: Vec<f64>,
    dim: usize,
}

impl QuadraticLoss {
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(EosError::Config("quadratic matrix must be non-empty".into()));
        }
        let mut matrix = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(EosError::Config("quadratic matrix must be square".into()));
            }
            matrix.extend_from_slice(row);
        }
        if !matrix.iter().all(|v| v.is_finite()) {
            return Err(EosError::Config("quadratic matrix must be finite".into()));
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                if (matrix[i * dim + j] - matrix[j * dim + i]).abs()
                    > 1e-12 * (1.0 + matrix[i * dim + j].abs())
                {
                    return Err(EosError::Config("quadratic matrix must be symmetric".into()));
                }
            }
        }
        Ok(Self { matrix, dim })
    }

    pub fn from_spectrum(spectrum: &[f64]) -> Result<Self> {
        let dim = spectrum.len();
        if dim == 0 {
            return Err(EosError::Config("quadratic spectrum must be non-empty".into()));
        }
        let mut matrix = vec![0.0; dim * dim];
        for (i, &s) in spectrum.iter().enumerate() {
            matrix[i * dim + i] = s;
        }
        Self::from_matrix(
            &(0..dim)
                .map(|i| matrix[i * dim..(i + 1) * dim].to_vec())
                .collect::<Vec<_>>(),
        )
    }

    fn apply(&self, v: &ParameterVector) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for i in 0..self.dim {
            let row = &self.matrix[i * self.dim..(i + 1) * self.dim];
            out[i] = row.iter().zip(v.as_slice()).map(|(a, b)| a * b).sum();
        }
        out
    }
}

impl LossOracle for QuadraticLoss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            analytic_grad: true,
            analytic_hvp: true,
            analytic_third: true,
            batched: false,
        }
    }

    fn value(&self, theta: &ParameterVector) -> Result<f64> {
        check_dim(self, theta)?;
        let at = self.apply(theta);
        let v = 0.5
            * at.iter()
                .zip(theta.as_slice())
                .map(|(a, b)| a * b)
                .sum::<f64>();
        finite_value(v, "quadratic value")
    }

    fn gradient(&self, theta: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        ParameterVector::new(self.apply(theta))
    }

    fn hvp(&self, theta: &ParameterVector, v: &ParameterVector) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        check_dim(self, v)?;
        ParameterVector::new(self.apply(v))
    }

    fn third_contract(
        &self,
        theta: &ParameterVector,
        v: &ParameterVector,
        w: &ParameterVector,
    ) -> Result<ParameterVector> {
        check_dim(self, theta)?;
        check_dim(self, v)?;
        check_dim(self, w)?;
        Ok(ParameterVector::zeros(self.dim))
    }

    fn as_dyn(&self) -> &dyn LossOracle {
        self
    }
}
