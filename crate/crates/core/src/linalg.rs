//! Small dense linear-algebra helpers built on nalgebra.

use nalgebra::{Cholesky, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{Matrix, Vector};

/// `(A + A^T) / 2`.
pub fn sym_part(a: &Matrix) -> Matrix {
    (a + a.transpose()) * 0.5
}

pub fn min_eigenvalue(s: &Matrix) -> f64 {
    let s = sym_part(s);
    SymmetricEigen::new(s).eigenvalues.min()
}

pub fn max_eigenvalue(s: &Matrix) -> f64 {
    let s = sym_part(s);
    SymmetricEigen::new(s).eigenvalues.max()
}

pub fn cholesky(s: &Matrix, context: &str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(sym_part(s)).ok_or_else(|| Error::NotPositiveDefinite { context: context.to_string() })
}

/// Largest `l` with `M v = l S v`, i.e. `max_z z^T M z / z^T S z`.
///
/// `M` symmetric, `S` symmetric positive definite. Reduces to a standard
/// problem through the Cholesky factor of `S`.
pub fn generalized_max_eigenvalue(m: &Matrix, s: &Matrix, context: &str) -> Result<f64> {
    let chol = cholesky(s, context)?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(m)
        .ok_or_else(|| Error::Numerical(format!("triangular solve failed ({context})")))?;
    let z = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::Numerical(format!("triangular solve failed ({context})")))?;
    Ok(max_eigenvalue(&z))
}

/// Squared Euclidean distance.
pub fn dist_sq(a: &Vector, b: &Vector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
