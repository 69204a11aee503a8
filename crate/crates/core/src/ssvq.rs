//! Sign-splitting vector quantization.
//!
//! Weights are split into signs and magnitudes. Only the magnitudes `|W|` are
//! clustered, so every codeword is non-negative. The sign of each weight is
//! carried by a continuous latent value `Ls`, decoded as
//! `W_q = C[A] * sign(Ls)` and trained with a straight-through estimator.

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, Assignments, Codebook, KMeansConfig};
use crate::error::{Error, Result};
use crate::matrix::{partition, Matrix, RngSeed};
use crate::vq::{CodebookGrad, VQModel};

/// `+1` for `x >= 0` (including zero), `-1` otherwise.
#[inline]
pub fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Per-weight polarity, each entry `+1` or `-1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignMask(Vec<i8>);

impl SignMask {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        if let Some(i) = signs.iter().position(|&s| s != 1 && s != -1) {
            return Err(Error::OutOfRange {
                value: f64::from(signs[i]),
                lo: -1.0,
                hi: 1.0,
            });
        }
        Ok(Self(signs))
    }

    pub fn from_values(values: &[f64]) -> Self {
        Self(values.iter().map(|&v| sign(v) as i8).collect())
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelRepr", try_from = "ModelRepr")]
pub struct SSVQModel {
    /// Non-negative magnitude codebook.
    pub codebook: Codebook,
    pub assignments: Assignments,
    /// Latent sign parameters, row-major `rows x cols`. Frozen entries hold
    /// `+inf` or `-inf`; the `frozen` flags are authoritative.
    pub latent: Vec<f64>,
    pub frozen: Vec<bool>,
    pub alpha: f64,
    pub rows: usize,
    pub cols: usize,
}

impl SSVQModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.rows * self.cols;
        let d = self.codebook.dim();
        if self.assignments.len() * d != n || self.latent.len() != n || self.frozen.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} assignments of dim {d}, {} latents, {} flags for {}x{}",
                self.assignments.len(),
                self.latent.len(),
                self.frozen.len(),
                self.rows,
                self.cols
            )));
        }
        self.assignments.check_bound(self.codebook.len())
    }

    pub fn dim(&self) -> usize {
        self.codebook.dim()
    }

    pub fn k(&self) -> usize {
        self.codebook.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.latent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latent.is_empty()
    }

    /// Assigned codeword magnitude at every scalar position.
    pub fn magnitudes(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for &a in self.assignments.as_slice() {
            out.extend_from_slice(self.codebook.codeword(a as usize));
        }
        out
    }

    pub fn sign_mask(&self) -> SignMask {
        SignMask::from_values(&self.latent)
    }

    /// Pins the sign at `pos` permanently.
    pub fn freeze(&mut self, pos: usize, sign: f64) {
        self.frozen[pos] = true;
        self.latent[pos] = if sign > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY };
    }

    pub fn frozen_count(&self) -> usize {
        self.frozen.iter().filter(|&&f| f).count()
    }

    /// The magnitude half of the model as a plain VQ model.
    pub fn magnitude_model(&self) -> VQModel {
        VQModel {
            codebook: self.codebook.clone(),
            assignments: self.assignments.clone(),
            rows: self.rows,
            cols: self.cols,
        }
    }
}

/// Serialized form. Frozen latents are written as `+-1` so no infinities reach disk.
#[derive(Serialize, Deserialize)]
struct ModelRepr {
    codebook: Codebook,
    assignments: Assignments,
    latent: Vec<f64>,
    frozen: Vec<bool>,
    alpha: f64,
    rows: usize,
    cols: usize,
}

impl From<SSVQModel> for ModelRepr {
    fn from(m: SSVQModel) -> Self {
        let latent = m
            .latent
            .iter()
            .zip(&m.frozen)
            .map(|(&l, &f)| if f { sign(l) } else { l })
            .collect();
        Self {
            codebook: m.codebook,
            assignments: m.assignments,
            latent,
            frozen: m.frozen,
            alpha: m.alpha,
            rows: m.rows,
            cols: m.cols,
        }
    }
}

impl TryFrom<ModelRepr> for SSVQModel {
    type Error = Error;

    fn try_from(r: ModelRepr) -> Result<Self> {
        let mut m = SSVQModel {
            codebook: r.codebook,
            assignments: r.assignments,
            latent: r.latent,
            frozen: r.frozen,
            alpha: r.alpha,
            rows: r.rows,
            cols: r.cols,
        };
        m.validate()?;
        for i in 0..m.len() {
            if m.frozen[i] {
                let s = sign(m.latent[i]);
                m.freeze(i, s);
            } else if !m.latent[i].is_finite() {
                return Err(Error::NonFinite(i));
            }
        }
        Ok(m)
    }
}

pub fn ssvq_encode(w: &Matrix, k: usize, dim: usize, alpha: f64, seed: RngSeed) -> Result<SSVQModel> {
    ssvq_encode_with(w, &KMeansConfig::new(k), dim, alpha, seed)
}

/// Clusters `|W|` and initializes `Ls = alpha * W`.
pub fn ssvq_encode_with(w: &Matrix, cfg: &KMeansConfig, dim: usize, alpha: f64, seed: RngSeed) -> Result<SSVQModel> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!("alpha must be positive, got {alpha}")));
    }
    let points = partition(&w.map(f64::abs), dim)?;
    let fit = kmeans(&points, cfg, seed)?;
    debug_assert!(fit.codebook.is_nonnegative());
    Ok(SSVQModel {
        codebook: fit.codebook,
        assignments: fit.assignments,
        latent: w.as_slice().iter().map(|v| alpha * v).collect(),
        frozen: vec![false; w.len()],
        alpha,
        rows: w.rows(),
        cols: w.cols(),
    })
}

pub fn ssvq_decode(m: &SSVQModel) -> Result<Matrix> {
    m.validate()?;
    let data = m
        .magnitudes()
        .into_iter()
        .zip(&m.latent)
        .map(|(c, &l)| c * sign(l))
        .collect();
    Matrix::new(m.rows, m.cols, data)
}

fn check_shape(g: &Matrix, m: &SSVQModel) -> Result<()> {
    m.validate()?;
    if g.shape() != m.shape() {
        return Err(Error::ShapeMismatch(format!(
            "gradient {:?} vs model {:?}",
            g.shape(),
            m.shape()
        )));
    }
    Ok(())
}

/// Straight-through gradient for the latent signs: `dL/dW_q * c` per position,
/// zero where the sign is frozen.
pub fn ste_sign_grad(g: &Matrix, m: &SSVQModel) -> Result<Matrix> {
    check_shape(g, m)?;
    let data = m
        .magnitudes()
        .into_iter()
        .zip(g.as_slice())
        .zip(&m.frozen)
        .map(|((c, &gw), &frozen)| if frozen { 0.0 } else { gw * c })
        .collect();
    Matrix::new(m.rows, m.cols, data)
}

/// Chain rule through `W_q = C[A] * sign(Ls)`: each member position adds
/// `dL/dW_q * sign(Ls)` to its codeword entry.
pub fn ssvq_codebook_grads(g: &Matrix, m: &SSVQModel) -> Result<CodebookGrad> {
    check_shape(g, m)?;
    let d = m.dim();
    let mut out = CodebookGrad::zeros(m.k(), d);
    let chunks = g.as_slice().chunks_exact(d).zip(m.latent.chunks_exact(d));
    for ((gs, ls), &a) in chunks.zip(m.assignments.as_slice()) {
        let a = a as usize;
        for ((o, &gw), &l) in out.values[a * d..(a + 1) * d].iter_mut().zip(gs).zip(ls) {
            *o += gw * sign(l);
        }
    }
    Ok(out)
}
