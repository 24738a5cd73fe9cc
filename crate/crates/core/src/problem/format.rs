//! Bit-exact JSON serialization of problem instances.
//!
//! Matrices and offsets are stored as base64 of little-endian `f64` bytes,
//! row-major, all components concatenated. Scalars are hex strings of their
//! IEEE-754 bits.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{AffineComponent, FiniteSumOperator, GeneratorConfig, ProblemInstance, Regularizer};
use crate::error::{Error, Result};
use crate::{Matrix, Vector};

pub const FORMAT_TAG: &str = "unisgda-problem";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemFile {
    pub format: String,
    pub version: u32,
    pub n: usize,
    pub d: usize,
    pub matrices: String,
    pub offsets: String,
    pub regularizer: RegularizerBits,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    /// Reference solution if one was computed before writing.
    #[serde(default)]
    pub x_star: Option<String>,
    #[serde(default)]
    pub x_star_tol: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegularizerBits {
    pub kind: String,
    pub lambda: String,
    pub radius: String,
}

fn hex_bits(v: f64) -> String {
    format!("{:#018x}", v.to_bits())
}

fn from_hex_bits(s: &str) -> Result<f64> {
    let t = s.strip_prefix("0x").ok_or_else(|| Error::Format(format!("expected 0x-prefixed bits, got `{s}`")))?;
    u64::from_str_radix(t, 16).map(f64::from_bits).map_err(|e| Error::Format(format!("`{s}`: {e}")))
}

fn encode(values: impl Iterator<Item = f64>) -> String {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    STANDARD.encode(bytes)
}

fn decode(s: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(s).map_err(|e| Error::Format(format!("base64: {e}")))?;
    if bytes.len() != expected * 8 {
        return Err(Error::Format(format!("expected {expected} values, found {} bytes", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

impl ProblemFile {
    pub fn from_instance(p: &ProblemInstance) -> Self {
        let op = p.operator();
        let matrices = encode(op.components().iter().flat_map(|c| {
            let m = &c.matrix;
            (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |col| m[(r, col)]))
        }));
        let offsets = encode(op.components().iter().flat_map(|c| c.offset.iter().copied()));
        let reg = p.regularizer();
        let kind = match reg {
            Regularizer::None => "none",
            Regularizer::L1Box { .. } => "l1_box",
        };
        Self {
            format: FORMAT_TAG.into(),
            version: FORMAT_VERSION,
            n: op.n(),
            d: op.dim(),
            matrices,
            offsets,
            regularizer: RegularizerBits { kind: kind.into(), lambda: hex_bits(reg.lambda()), radius: hex_bits(reg.radius()) },
            generator: p.generator().cloned(),
            x_star: p.reference().map(|r| encode(r.x.iter().copied())),
            x_star_tol: p.reference().map(|r| hex_bits(r.tol)),
        }
    }

    pub fn into_instance(self) -> Result<ProblemInstance> {
        if self.format != FORMAT_TAG || self.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format {} v{}", self.format, self.version)));
        }
        let (n, d) = (self.n, self.d);
        let mats = decode(&self.matrices, n * d * d)?;
        let offs = decode(&self.offsets, n * d)?;
        let comps = (0..n)
            .map(|i| {
                let m = Matrix::from_row_slice(d, d, &mats[i * d * d..(i + 1) * d * d]);
                let b = Vector::from_row_slice(&offs[i * d..(i + 1) * d]);
                AffineComponent::new(m, b)
            })
            .collect::<Result<Vec<_>>>()?;
        let reg = match self.regularizer.kind.as_str() {
            "none" => Regularizer::None,
            "l1_box" => Regularizer::L1Box {
                lambda: from_hex_bits(&self.regularizer.lambda)?,
                radius: from_hex_bits(&self.regularizer.radius)?,
            },
            k => return Err(Error::Format(format!("unknown regularizer `{k}`"))),
        };
        let mut p = ProblemInstance::new(FiniteSumOperator::new(comps)?, reg)?;
        p.set_generator(self.generator);
        if let (Some(xs), Some(tol)) = (self.x_star, self.x_star_tol) {
            let x = Vector::from_vec(decode(&xs, d)?);
            p.set_reference(x, from_hex_bits(&tol)?)?;
        }
        Ok(p)
    }
}

pub fn write_problem(p: &ProblemInstance, path: &Path) -> Result<()> {
    let f = ProblemFile::from_instance(p);
    std::fs::write(path, serde_json::to_string_pretty(&f)?)?;
    Ok(())
}

pub fn read_problem(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path)?;
    let f: ProblemFile = serde_json::from_str(&text)?;
    f.into_instance()
}
