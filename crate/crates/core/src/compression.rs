//! Unbiased compressors and their bit cost.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::check_dim;
use crate::random::Randomness;
use crate::Vector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Quantizer {
    Identity,
    /// Keep `k` uniformly chosen coordinates, scaled by `d/k`.
    RandK { k: usize },
}

impl Quantizer {
    pub fn validate(&self, d: usize) -> Result<()> {
        if let Quantizer::RandK { k } = *self {
            if k == 0 || k > d {
                return Err(invalid("k", format!("RandK needs 1 <= k <= d, got k = {k}, d = {d}")));
            }
        }
        Ok(())
    }

    /// Variance parameter: `E||Q(x) - x||^2 <= omega ||x||^2`.
    pub fn omega(&self, d: usize) -> f64 {
        match *self {
            Quantizer::Identity => 0.0,
            Quantizer::RandK { k } => d as f64 / k as f64 - 1.0,
        }
    }

    pub fn compress(&self, x: &Vector, rng: &mut dyn Randomness) -> Result<CompressedVector> {
        let d = x.len();
        self.validate(d)?;
        Ok(match *self {
            Quantizer::Identity => CompressedVector::Dense(x.clone()),
            Quantizer::RandK { k } if k == d => CompressedVector::Dense(x.clone()),
            Quantizer::RandK { k } => {
                let scale = d as f64 / k as f64;
                let entries = rng.subset(d, k).into_iter().map(|j| (j, scale * x[j])).collect();
                CompressedVector::Sparse { dim: d, entries }
            }
        })
    }
}

/// What a worker puts on the wire.
#[derive(Clone, Debug, PartialEq)]
pub enum CompressedVector {
    Dense(Vector),
    /// Strictly increasing indices below `dim`.
    Sparse { dim: usize, entries: Vec<(usize, f64)> },
}

impl CompressedVector {
    pub fn dim(&self) -> usize {
        match self {
            CompressedVector::Dense(v) => v.len(),
            CompressedVector::Sparse { dim, .. } => *dim,
        }
    }

    pub fn to_dense(&self) -> Vector {
        match self {
            CompressedVector::Dense(v) => v.clone(),
            CompressedVector::Sparse { dim, entries } => {
                let mut v = Vector::zeros(*dim);
                for &(j, val) in entries {
                    v[j] = val;
                }
                v
            }
        }
    }

    /// `out += scale * self` without densifying.
    pub fn add_scaled_to(&self, out: &mut Vector, scale: f64) -> Result<()> {
        check_dim(out.len(), self.dim())?;
        match self {
            CompressedVector::Dense(v) => out.axpy(scale, v, 1.0),
            CompressedVector::Sparse { entries, .. } => {
                for &(j, val) in entries {
                    out[j] += scale * val;
                }
            }
        }
        Ok(())
    }
}

fn ceil_log2(d: usize) -> u64 {
    if d <= 1 {
        0
    } else {
        (usize::BITS - (d - 1).leading_zeros()) as u64
    }
}

/// Dense: `d * value_bits`. Sparse: `entries * (value_bits + ceil(log2 d))`.
pub fn encoded_bits(cv: &CompressedVector, value_bits: u32) -> u64 {
    let vb = value_bits as u64;
    match cv {
        CompressedVector::Dense(v) => v.len() as u64 * vb,
        CompressedVector::Sparse { dim, entries } => entries.len() as u64 * (vb + ceil_log2(*dim)),
    }
}

pub fn validate_value_bits(value_bits: u32) -> Result<()> {
    if value_bits != 32 && value_bits != 64 {
        return Err(invalid("value_bits", format!("{value_bits} (expected 32 or 64)")));
    }
    Ok(())
}
