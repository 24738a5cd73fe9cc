//! Random strongly monotone quadratic games.

use nalgebra::{Complex, DMatrix, DVector, LU};
use serde::{Deserialize, Serialize};

use super::{AffineComponent, FiniteSumOperator};
use crate::error::{invalid, Error, Result};
use crate::random::{Randomness, SeededRng};
use crate::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `A_i = S_i + mu_min I + W_i`, `S_i` PSD and `W_i` skew.
    #[default]
    SymmetricPlusSkew,
    /// Gaussian matrix whose eigenvalues get their real parts pushed to at
    /// least `mu_min`, then the real part of the reconstruction.
    SpectralFlip,
}

fn default_offset_scale() -> f64 {
    100.0
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub mu_min: f64,
    #[serde(default)]
    pub mode: GeneratorKind,
    /// Offsets are `N(0, offset_scale / d)` per coordinate.
    #[serde(default = "default_offset_scale")]
    pub offset_scale: f64,
    /// Multiplier of the PSD part `G G^T / d`.
    #[serde(default = "one")]
    pub sym_scale: f64,
    /// Multiplier of the skew part `(H - H^T) / sqrt(2d)`.
    #[serde(default = "one")]
    pub skew_scale: f64,
}

impl GeneratorConfig {
    pub fn new(n: usize, d: usize, seed: u64, mu_min: f64) -> Self {
        Self {
            n,
            d,
            seed,
            mu_min,
            mode: GeneratorKind::default(),
            offset_scale: default_offset_scale(),
            sym_scale: 1.0,
            skew_scale: 1.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(invalid("n/d", "must be positive"));
        }
        if !(self.mu_min > 0.0) || !self.mu_min.is_finite() {
            return Err(invalid("mu_min", format!("{} must be > 0", self.mu_min)));
        }
        for (name, v) in [("offset_scale", self.offset_scale), ("sym_scale", self.sym_scale), ("skew_scale", self.skew_scale)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter { name: "generator scale", reason: format!("{name} = {v}") });
            }
        }
        Ok(())
    }
}

const FLIP_RETRIES: u64 = 8;

pub fn generate_quadratic_game(cfg: &GeneratorConfig) -> Result<FiniteSumOperator> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    let d = cfg.d;
    let mut comps = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let a = match cfg.mode {
            GeneratorKind::SymmetricPlusSkew => sym_plus_skew(&mut rng, cfg),
            GeneratorKind::SpectralFlip => {
                let mut found = None;
                for attempt in 0..=FLIP_RETRIES {
                    let b = gaussian_matrix(&mut rng, d, 1.0);
                    match spectral_flip(&b, cfg.mu_min) {
                        Some(a) => {
                            found = Some(a);
                            break;
                        }
                        None => {
                            log::debug!("component {i}: degenerate eigendecomposition on attempt {attempt}, redrawing");
                            rng = SeededRng::derived(cfg.seed, (i as u64) << 8 | (attempt + 1));
                        }
                    }
                }
                found.ok_or_else(|| Error::Numerical(format!("component {i}: eigendecomposition failed {FLIP_RETRIES} times")))?
            }
        };
        let s = (cfg.offset_scale / d as f64).sqrt();
        let b = rng.gaussian_vector(d, s);
        comps.push(AffineComponent::new(a, b)?);
    }
    FiniteSumOperator::new(comps)
}

fn gaussian_matrix(rng: &mut SeededRng, d: usize, scale: f64) -> Matrix {
    // Row-major fill so the draw order is layout independent.
    let mut m = Matrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            m[(r, c)] = scale * rng.normal();
        }
    }
    m
}

fn sym_plus_skew(rng: &mut SeededRng, cfg: &GeneratorConfig) -> Matrix {
    let d = cfg.d;
    let g = gaussian_matrix(rng, d, 1.0);
    let h = gaussian_matrix(rng, d, 1.0);
    let s = (&g * g.transpose()) * (cfg.sym_scale / d as f64);
    let w = (&h - h.transpose()) * (cfg.skew_scale / (2.0 * d as f64).sqrt());
    s + Matrix::identity(d, d) * cfg.mu_min + w
}

/// `Re(V D+ V^-1)` where `B = V D V^-1` and `D+` has real parts
/// `max(|Re|, mu_min)`. `None` on a numerically defective draw.
fn spectral_flip(b: &Matrix, mu_min: f64) -> Option<Matrix> {
    let d = b.nrows();
    let eig = b.complex_eigenvalues();
    let bc: DMatrix<Complex<f64>> = b.map(|v| Complex::new(v, 0.0));
    let scale = 1.0 + b.norm();
    let mut v = DMatrix::<Complex<f64>>::zeros(d, d);
    for (j, lam) in eig.iter().enumerate() {
        // Inverse iteration with a tiny shift so the solve is not singular.
        let shift = *lam + Complex::new(1e-10 * scale, 1e-10 * scale);
        let m = &bc - DMatrix::<Complex<f64>>::identity(d, d) * shift;
        let lu = LU::new(m);
        let mut x = DVector::<Complex<f64>>::from_fn(d, |r, _| Complex::new(1.0 + 0.1 * r as f64, 0.03 * ((r + j) % 7) as f64));
        for _ in 0..3 {
            x = lu.solve(&x)?;
            let nrm = x.norm();
            if !nrm.is_finite() || nrm == 0.0 {
                return None;
            }
            x /= Complex::new(nrm, 0.0);
        }
        v.set_column(j, &x);
    }
    let vinv = v.clone().try_inverse()?;
    let diag = DMatrix::<Complex<f64>>::from_diagonal(&eig);
    let recon = &v * &diag * &vinv;
    let err = (recon - &bc).norm();
    if !(err <= 1e-8 * scale) {
        return None;
    }
    let flipped = eig.map(|l| Complex::new(l.re.abs().max(mu_min), l.im));
    let a = &v * DMatrix::from_diagonal(&flipped) * &vinv;
    let imag = a.map(|z| z.im).norm();
    if !(imag <= 1e-8 * scale) {
        return None;
    }
    Some(a.map(|z| z.re))
}

/// Multiplies component `i`'s matrix and offset by `factor`, which scales
/// its cocoercivity constant by the same factor.
pub fn scale_component(op: &FiniteSumOperator, i: usize, factor: f64) -> Result<FiniteSumOperator> {
    if !(factor > 0.0) {
        return Err(invalid("factor", "must be > 0"));
    }
    op.component(i)?;
    let comps = op
        .components()
        .iter()
        .enumerate()
        .map(|(j, c)| {
            if j == i {
                AffineComponent { matrix: &c.matrix * factor, offset: &c.offset * factor }
            } else {
                c.clone()
            }
        })
        .collect();
    FiniteSumOperator::new(comps)
}
