use serde::{Deserialize, Serialize};

use super::{AffineComponent, FiniteSumOperator};
use crate::error::Result;
use crate::linalg::{generalized_max_eigenvalue, min_eigenvalue, sym_part};
use crate::Matrix;

/// Monotonicity and cocoercivity constants of an affine finite sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// Smallest eigenvalue of the symmetric part of the mean matrix.
    pub mu: f64,
    /// Star-cocoercivity: `||A z||^2 <= ell z^T A z`.
    pub ell: f64,
    /// Per-component cocoercivity constants.
    pub ell_i: Vec<f64>,
    pub ell_bar: f64,
    pub ell_max: f64,
    /// Averaged star-cocoercivity: `(1/n) sum ||A_i z||^2 <= ell_hat z^T A z`.
    pub ell_hat: f64,
}

/// Generalized-eigenvalue constant of a family of matrices against the
/// symmetric part of `mean`: `max_z (1/n) sum ||A_i z||^2 / z^T mean z`.
pub fn averaged_cocoercivity<'a>(mats: impl IntoIterator<Item = &'a Matrix>, mean: &Matrix) -> Result<f64> {
    let d = mean.nrows();
    let mut gram = Matrix::zeros(d, d);
    let mut n = 0usize;
    for a in mats {
        gram.gemm_tr(1.0, a, a, 1.0);
        n += 1;
    }
    gram /= n as f64;
    generalized_max_eigenvalue(&gram, &sym_part(mean), "averaged cocoercivity")
}

fn component_cocoercivity(c: &AffineComponent, i: usize) -> Result<f64> {
    let gram = c.matrix.transpose() * &c.matrix;
    generalized_max_eigenvalue(&gram, &sym_part(&c.matrix), &format!("component {i}"))
}

pub fn compute_constants(op: &FiniteSumOperator) -> Result<ProblemConstants> {
    let a = op.mean_matrix();
    let mu = min_eigenvalue(a);
    let ell = averaged_cocoercivity(std::iter::once(a), a)?;
    let ell_i = op.components().iter().enumerate().map(|(i, c)| component_cocoercivity(c, i)).collect::<Result<Vec<_>>>()?;
    let ell_bar = ell_i.iter().sum::<f64>() / ell_i.len() as f64;
    let ell_max = ell_i.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let ell_hat = averaged_cocoercivity(op.components().iter().map(|c| &c.matrix), a)?;
    Ok(ProblemConstants { mu, ell, ell_i, ell_bar, ell_max, ell_hat })
}
