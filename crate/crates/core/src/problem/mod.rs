//! Regularized variational inequality instances.
//!
//! An instance is a finite-sum affine operator `F(x) = (1/n) sum_i (A_i x + b_i)`
//! together with a regularizer `R`. The solution `x*` satisfies
//! `<F(x*), x - x*> + R(x) - R(x*) >= 0` for all `x`.

mod constants;
mod format;
mod generate;

use std::sync::OnceLock;

use nalgebra::LU;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::check_dim;
use crate::{Matrix, Vector};

pub use constants::{averaged_cocoercivity, compute_constants, ProblemConstants};
pub use format::{read_problem, write_problem, ProblemFile};
pub use generate::{generate_quadratic_game, scale_component, GeneratorConfig, GeneratorKind};

/// `F_i(x) = A_i x + b_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineComponent {
    pub matrix: Matrix,
    pub offset: Vector,
}

impl AffineComponent {
    pub fn new(matrix: Matrix, offset: Vector) -> Result<Self> {
        if !matrix.is_square() {
            return Err(invalid("matrix", format!("{}x{} is not square", matrix.nrows(), matrix.ncols())));
        }
        check_dim(matrix.nrows(), offset.len())?;
        Ok(Self { matrix, offset })
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    #[inline]
    pub fn eval(&self, x: &Vector) -> Vector {
        let mut out = self.offset.clone();
        out.gemv(1.0, &self.matrix, x, 1.0);
        out
    }
}

/// Mean of `n` affine components sharing one dimension.
///
/// The averaged matrix and offset are cached at construction. They are used
/// by coordinate oracles and by the exact linear-algebra routines, while
/// [`eval_full`](Self::eval_full) keeps the literal component average.
#[derive(Clone, Debug)]
pub struct FiniteSumOperator {
    components: Vec<AffineComponent>,
    dim: usize,
    mean_matrix: Matrix,
    mean_offset: Vector,
}

impl FiniteSumOperator {
    pub fn new(components: Vec<AffineComponent>) -> Result<Self> {
        let first = components.first().ok_or_else(|| invalid("components", "need at least one"))?;
        let dim = first.dim();
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        let mut mean_matrix = Matrix::zeros(dim, dim);
        let mut mean_offset = Vector::zeros(dim);
        for c in &components {
            check_dim(dim, c.dim())?;
            check_dim(dim, c.matrix.nrows())?;
            mean_matrix += &c.matrix;
            mean_offset += &c.offset;
        }
        let inv = 1.0 / components.len() as f64;
        mean_matrix *= inv;
        mean_offset *= inv;
        Ok(Self { components, dim, mean_matrix, mean_offset })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[AffineComponent] {
        &self.components
    }

    pub fn component(&self, i: usize) -> Result<&AffineComponent> {
        self.components.get(i).ok_or_else(|| invalid("index", format!("{i} out of range for n = {}", self.n())))
    }

    pub fn mean_matrix(&self) -> &Matrix {
        &self.mean_matrix
    }

    pub fn mean_offset(&self) -> &Vector {
        &self.mean_offset
    }

    /// `F_i(x)`.
    pub fn eval_component(&self, i: usize, x: &Vector) -> Result<Vector> {
        let c = self.component(i)?;
        check_dim(self.dim, x.len())?;
        Ok(c.eval(x))
    }

    /// `F(x)` as the arithmetic mean of the `n` component values.
    pub fn eval_full(&self, x: &Vector) -> Result<Vector> {
        check_dim(self.dim, x.len())?;
        let mut acc = Vector::zeros(self.dim);
        for c in &self.components {
            acc.gemv(1.0, &c.matrix, x, 1.0);
            acc += &c.offset;
        }
        acc /= self.n() as f64;
        Ok(acc)
    }

    /// `F(x)` through the cached mean matrix. Same value as
    /// [`eval_full`](Self::eval_full) up to round-off, `n` times cheaper.
    pub fn eval_mean(&self, x: &Vector) -> Vector {
        let mut out = self.mean_offset.clone();
        out.gemv(1.0, &self.mean_matrix, x, 1.0);
        out
    }

    /// `[F(x)]_j`.
    pub fn eval_coordinate(&self, j: usize, x: &Vector) -> f64 {
        self.mean_matrix.row(j).transpose().dot(x) + self.mean_offset[j]
    }

    /// Subset of components as its own operator (used for worker shards).
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.n() || range.is_empty() {
            return Err(invalid("range", format!("{range:?} for n = {}", self.n())));
        }
        Self::new(self.components[range].to_vec())
    }
}

/// `R(x) = lambda ||x||_1 + indicator(||x||_inf <= radius)`, or nothing.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RegularizerRepr", into = "RegularizerRepr")]
pub enum Regularizer {
    #[default]
    None,
    /// `radius = f64::INFINITY` drops the box.
    L1Box { lambda: f64, radius: f64 },
}

impl Regularizer {
    pub fn validate(&self) -> Result<()> {
        if let Regularizer::L1Box { lambda, radius } = *self {
            if !(lambda >= 0.0) || !lambda.is_finite() {
                return Err(invalid("lambda", format!("{lambda} must be a finite value >= 0")));
            }
            if !(radius > 0.0) {
                return Err(invalid("radius", format!("{radius} must be > 0")));
            }
        }
        Ok(())
    }

    /// True when the prox is the identity.
    pub fn is_trivial(&self) -> bool {
        match *self {
            Regularizer::None => true,
            Regularizer::L1Box { lambda, radius } => lambda == 0.0 && radius == f64::INFINITY,
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            Regularizer::None => 0.0,
            Regularizer::L1Box { lambda, .. } => lambda,
        }
    }

    pub fn radius(&self) -> f64 {
        match *self {
            Regularizer::None => f64::INFINITY,
            Regularizer::L1Box { radius, .. } => radius,
        }
    }

    /// `R(x)`; `+inf` outside the box.
    pub fn value(&self, x: &Vector) -> f64 {
        let (lambda, radius) = (self.lambda(), self.radius());
        if x.iter().any(|v| v.abs() > radius) {
            return f64::INFINITY;
        }
        lambda * x.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// One coordinate of the prox: soft-threshold by `gamma * lambda`, then clip.
    #[inline]
    pub fn prox_scalar(&self, gamma: f64, v: f64) -> f64 {
        let (lambda, radius) = (self.lambda(), self.radius());
        v.signum() * (v.abs() - gamma * lambda).max(0.0).min(radius)
    }

    pub fn prox(&self, gamma: f64, x: &Vector) -> Result<Vector> {
        let mut out = x.clone();
        self.prox_in_place(gamma, &mut out)?;
        Ok(out)
    }

    pub fn prox_in_place(&self, gamma: f64, x: &mut Vector) -> Result<()> {
        if !(gamma > 0.0) {
            return Err(invalid("gamma", format!("{gamma} must be > 0")));
        }
        if self.is_trivial() {
            return Ok(());
        }
        for v in x.iter_mut() {
            *v = self.prox_scalar(gamma, *v);
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct RegularizerRepr {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    /// Absent or null means no box.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
}

impl TryFrom<RegularizerRepr> for Regularizer {
    type Error = String;

    fn try_from(r: RegularizerRepr) -> std::result::Result<Self, String> {
        let reg = match r.kind.as_str() {
            "none" => Regularizer::None,
            "l1_box" => Regularizer::L1Box {
                lambda: r.lambda.unwrap_or(0.0),
                radius: r.radius.unwrap_or(f64::INFINITY),
            },
            other => return Err(format!("unknown regularizer kind `{other}` (expected none or l1_box)")),
        };
        reg.validate().map_err(|e| e.to_string())?;
        Ok(reg)
    }
}

impl From<Regularizer> for RegularizerRepr {
    fn from(r: Regularizer) -> Self {
        match r {
            Regularizer::None => RegularizerRepr { kind: "none".into(), lambda: None, radius: None },
            Regularizer::L1Box { lambda, radius } => RegularizerRepr {
                kind: "l1_box".into(),
                lambda: Some(lambda),
                radius: radius.is_finite().then_some(radius),
            },
        }
    }
}

/// Reference solution with the fixed-point residual it was accepted at.
#[derive(Clone, Debug)]
pub struct ReferenceSolution {
    pub x: Vector,
    /// `||x - prox_{gR}(x - g F(x))||` with `g = 1/ell`.
    pub residual: f64,
    pub tol: f64,
}

/// Operator, regularizer, lazily computed constants and optional `x*`.
#[derive(Debug)]
pub struct ProblemInstance {
    operator: FiniteSumOperator,
    regularizer: Regularizer,
    constants: OnceLock<ProblemConstants>,
    reference: Option<ReferenceSolution>,
    generator: Option<GeneratorConfig>,
}

impl Clone for ProblemInstance {
    fn clone(&self) -> Self {
        let constants = OnceLock::new();
        if let Some(c) = self.constants.get() {
            let _ = constants.set(c.clone());
        }
        Self {
            operator: self.operator.clone(),
            regularizer: self.regularizer,
            constants,
            reference: self.reference.clone(),
            generator: self.generator.clone(),
        }
    }
}

/// Iteration cap for the forward-backward reference solver.
pub const REFERENCE_MAX_ITERS: usize = 2_000_000;

impl ProblemInstance {
    pub fn new(operator: FiniteSumOperator, regularizer: Regularizer) -> Result<Self> {
        regularizer.validate()?;
        Ok(Self { operator, regularizer, constants: OnceLock::new(), reference: None, generator: None })
    }

    /// Builds the instance and solves for `x*` to `tol`.
    pub fn with_reference(operator: FiniteSumOperator, regularizer: Regularizer, tol: f64) -> Result<Self> {
        let mut p = Self::new(operator, regularizer)?;
        p.solve_reference(tol)?;
        Ok(p)
    }

    pub fn set_generator(&mut self, cfg: Option<GeneratorConfig>) {
        self.generator = cfg;
    }

    pub fn generator(&self) -> Option<&GeneratorConfig> {
        self.generator.as_ref()
    }

    pub fn operator(&self) -> &FiniteSumOperator {
        &self.operator
    }

    pub fn regularizer(&self) -> &Regularizer {
        &self.regularizer
    }

    pub fn n(&self) -> usize {
        self.operator.n()
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn constants(&self) -> Result<&ProblemConstants> {
        if let Some(c) = self.constants.get() {
            return Ok(c);
        }
        let c = compute_constants(&self.operator)?;
        let _ = self.constants.set(c);
        Ok(self.constants.get().expect("just set"))
    }

    pub fn reference(&self) -> Option<&ReferenceSolution> {
        self.reference.as_ref()
    }

    pub fn x_star(&self) -> Result<&Vector> {
        self.reference.as_ref().map(|r| &r.x).ok_or(Error::MissingReference)
    }

    /// Installs a known solution after checking its residual.
    pub fn set_reference(&mut self, x: Vector, tol: f64) -> Result<()> {
        check_dim(self.dim(), x.len())?;
        let residual = self.fixed_point_residual(&x)?;
        if !(residual <= tol) {
            return Err(Error::Numerical(format!("supplied solution has residual {residual:e} > {tol:e}")));
        }
        self.reference = Some(ReferenceSolution { x, residual, tol });
        Ok(())
    }

    /// `||x - prox_{gR}(x - g F(x))||` with `g = 1/ell`.
    pub fn fixed_point_residual(&self, x: &Vector) -> Result<f64> {
        let gamma = 1.0 / self.constants()?.ell;
        let f = self.operator.eval_mean(x);
        let mut y = x - f * gamma;
        self.regularizer.prox_in_place(gamma, &mut y)?;
        Ok((x - y).norm())
    }

    /// Computes `x*`.
    ///
    /// Without a regularizer this is an LU solve of `A x = -b` (mean matrix
    /// and offset) with one refinement step. Otherwise forward-backward
    /// iteration with step `1/ell` runs until the fixed-point residual is at
    /// most `tol`. Every few hundred iterations an active-set guess is
    /// polished by an exact solve on the free coordinates, which shortcuts
    /// the linear tail on ill-conditioned instances.
    pub fn solve_reference(&mut self, tol: f64) -> Result<&ReferenceSolution> {
        if !(tol > 0.0) {
            return Err(invalid("tol", "must be > 0"));
        }
        let c = self.constants()?.clone();
        if !(c.mu > 0.0) {
            return Err(invalid("mu", format!("{} must be > 0 for a unique solution", c.mu)));
        }
        let a = self.operator.mean_matrix().clone();
        let b = self.operator.mean_offset().clone();
        let x = if self.regularizer.is_trivial() {
            let lu = LU::new(a.clone());
            let mut x = lu.solve(&(-&b)).ok_or_else(|| Error::Numerical("singular mean matrix".into()))?;
            let r = &a * &x + &b;
            if let Some(dx) = lu.solve(&r) {
                x -= dx;
            }
            x
        } else {
            self.forward_backward(&c, tol)?
        };
        let residual = self.fixed_point_residual(&x)?;
        if !(residual <= tol) {
            return Err(Error::Numerical(format!("reference residual {residual:e} above tolerance {tol:e}")));
        }
        self.reference = Some(ReferenceSolution { x, residual, tol });
        Ok(self.reference.as_ref().expect("just set"))
    }

    fn forward_backward(&self, c: &ProblemConstants, tol: f64) -> Result<Vector> {
        let gamma = 1.0 / c.ell;
        let d = self.dim();
        let mut x = Vector::zeros(d);
        for it in 0..REFERENCE_MAX_ITERS {
            let f = self.operator.eval_mean(&x);
            let mut y = &x - f * gamma;
            self.regularizer.prox_in_place(gamma, &mut y)?;
            let res = (&x - &y).norm();
            x = y;
            if res <= tol * 0.5 {
                return Ok(x);
            }
            if it % 200 == 199 {
                if let Some(p) = self.active_set_polish(&x, gamma) {
                    if self.fixed_point_residual(&p)? <= tol * 0.5 {
                        return Ok(p);
                    }
                }
            }
        }
        Err(Error::Numerical(format!("reference solver did not reach {tol:e} in {REFERENCE_MAX_ITERS} iterations")))
    }

    /// Solves the optimality system on the coordinates that look free at `x`.
    fn active_set_polish(&self, x: &Vector, gamma: f64) -> Option<Vector> {
        let (lambda, radius) = (self.regularizer.lambda(), self.regularizer.radius());
        let d = self.dim();
        let a = self.operator.mean_matrix();
        let b = self.operator.mean_offset();
        let eps = 1e-9 * (1.0 + x.amax());
        // Coordinates pinned at zero or at the box, with their values.
        let mut fixed = vec![None; d];
        let mut sign = vec![0.0; d];
        for j in 0..d {
            if x[j].abs() <= eps * gamma.max(1.0) {
                fixed[j] = Some(0.0);
            } else if radius.is_finite() && (radius - x[j].abs()) <= eps {
                fixed[j] = Some(radius * x[j].signum());
            } else {
                sign[j] = x[j].signum();
            }
        }
        let free: Vec<usize> = (0..d).filter(|&j| fixed[j].is_none()).collect();
        let mut out = Vector::from_iterator(d, (0..d).map(|j| fixed[j].unwrap_or(0.0)));
        if free.is_empty() {
            return Some(out);
        }
        // (A x + b)_j + lambda sign_j = 0 on free coordinates.
        let k = free.len();
        let mut m = Matrix::zeros(k, k);
        let mut rhs = Vector::zeros(k);
        for (r, &j) in free.iter().enumerate() {
            let mut v = -b[j] - lambda * sign[j];
            for (cidx, &l) in free.iter().enumerate() {
                m[(r, cidx)] = a[(j, l)];
            }
            for l in 0..d {
                if let Some(val) = fixed[l] {
                    v -= a[(j, l)] * val;
                }
            }
            rhs[r] = v;
        }
        let sol = LU::new(m).solve(&rhs)?;
        for (r, &j) in free.iter().enumerate() {
            out[j] = sol[r];
        }
        Some(out)
    }
}
