use crate::error::{EosError, Result};

/// A flat coordinate vector of model parameters.
///
/// Entries are always finite; construction rejects NaN/Inf so that any
/// non-finite value produced downstream is caught at the operation that
/// created it.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    coords: Vec<f64>,
}

impl ParameterVector {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(EosError::Config("parameter vector must have d >= 1".into()));
        }
        if !coords.iter().all(|c| c.is_finite()) {
            return Err(EosError::NonFinite {
                context: "ParameterVector::new".into(),
            });
        }
        Ok(Self { coords })
    }

    /// Like `new`, for values already known to be finite (e.g. constants).
    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        Self::new(coords.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    /// Standard basis vector e_i.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut coords = vec![0.0; dim];
        coords[i] = 1.0;
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_inf(&self) -> f64 {
        self.coords.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            coords: self.coords.iter().map(|c| c * s).collect(),
        }
    }

    /// self + s * other
    pub fn axpy(&self, s: f64, other: &Self) -> Self {
        Self {
            coords: self
                .coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + s * b)
                .collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.axpy(-1.0, other)
    }

    /// Returns a unit vector in the direction of self.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(EosError::NonFinite {
                context: "normalize zero or non-finite vector".into(),
            });
        }
        Ok(self.scale(1.0 / n))
    }

    /// Component of self orthogonal to the unit vector u.
    pub fn reject_from_unit(&self, u: &Self) -> Self {
        self.axpy(-self.dot(u), u)
    }

    pub fn is_finite(&self) -> bool {
        self.coords.iter().all(|c| c.is_finite())
    }

    /// Errors with `NonFinite` unless every entry is finite.
    pub fn check_finite(self, context: &str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(EosError::NonFinite {
                context: context.into(),
            })
        }
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.coords[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite() {
        assert!(ParameterVector::new(vec![1.0, f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![f64::INFINITY]).is_err());
        assert!(ParameterVector::new(vec![]).is_err());
    }

    #[test]
    fn basic_ops() {
        let a = ParameterVector::new(vec![3.0, 4.0]).unwrap();
        let b = ParameterVector::new(vec![1.0, -1.0]).unwrap();
        assert_eq!(a.norm(), 5.0);
        assert_eq!(a.dot(&b), -1.0);
        assert_eq!(a.axpy(2.0, &b).as_slice(), &[5.0, 2.0]);
        let u = b.normalized().unwrap();
        assert!((u.norm() - 1.0).abs() < 1e-15);
        let r = a.reject_from_unit(&u);
        assert!(r.dot(&u).abs() < 1e-12);
    }
}
