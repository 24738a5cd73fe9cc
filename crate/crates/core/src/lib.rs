//! Stochastic gradient descent-ascent for regularized variational inequalities.
//!
//! Every method in this crate is one instance of the same update,
//! `x+ = prox_{gamma R}(x - gamma g)`, and differs only in how the estimator
//! `g` of `F(x)` is produced. Estimators report the constants
//! `(A, B, C, rho, D1, D2)` that bound their second moment, which gives a
//! single step-size rule and a single convergence envelope for all of them.
//!
//! Module map:
//! - [`problem`]: affine finite-sum operators, the regularizer, constants.
//! - [`sampling`]: arbitrary sampling for the plain stochastic estimator.
//! - [`compression`]: unbiased quantizers and bit accounting.
//! - [`estimators`]: single-process estimators and their theory parameters.
//! - [`distributed`]: simulated workers with compressed uplink.
//! - [`solver`]: the run loop, step-size schedules, traces, the gap metric.
//! - [`verify`]: numerical certification of the assumptions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compression;
pub mod distributed;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod problem;
pub mod random;
pub mod sampling;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};

pub use compression::{encoded_bits, CompressedVector, Quantizer};
pub use distributed::{DistributedConfig, DistributedEstimator, DistributedMethod};
pub use estimators::{EstimatorKind, GradientEstimator, GradientSample, SingleEstimator, TheoryParams};
pub use problem::{
    AffineComponent, FiniteSumOperator, GeneratorConfig, GeneratorKind, ProblemConstants, ProblemInstance,
    Regularizer,
};
pub use random::{Explorer, Randomness, SeededRng};
pub use sampling::SamplingScheme;
pub use solver::{method_theory_params, run, Method, RunConfig, RunStatus, RunTrace, StepSchedule, TraceRow};

/// Dense vector type used throughout.
pub type Vector = nalgebra::DVector<f64>;
/// Dense matrix type used throughout.
pub type Matrix = nalgebra::DMatrix<f64>;
