//! Conventional vector quantization: encode, decode and codeword gradients.

use serde::{Deserialize, Serialize};

use crate::clustering::{kmeans, Assignments, Codebook, KMeansConfig};
use crate::error::{Error, Result};
use crate::matrix::{partition, Matrix, RngSeed};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VQModel {
    pub codebook: Codebook,
    pub assignments: Assignments,
    pub rows: usize,
    pub cols: usize,
}

impl VQModel {
    pub fn new(codebook: Codebook, assignments: Assignments, rows: usize, cols: usize) -> Result<Self> {
        let m = Self {
            codebook,
            assignments,
            rows,
            cols,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.codebook.dim();
        if self.rows * self.cols != self.assignments.len() * d {
            return Err(Error::ShapeMismatch(format!(
                "{} assignments of dim {d} cannot fill {}x{}",
                self.assignments.len(),
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
}

/// Gradient with respect to every codebook entry, laid out like [`Codebook`].
#[derive(Clone, Debug, PartialEq)]
pub struct CodebookGrad {
    pub dim: usize,
    pub values: Vec<f64>,
}

impl CodebookGrad {
    pub fn zeros(k: usize, dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; k * dim],
        }
    }

    pub fn codeword(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// How member gradients are combined into a codeword gradient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

pub fn vq_encode(w: &Matrix, k: usize, dim: usize, seed: RngSeed) -> Result<VQModel> {
    vq_encode_with(w, &KMeansConfig::new(k), dim, seed)
}

pub fn vq_encode_with(w: &Matrix, cfg: &KMeansConfig, dim: usize, seed: RngSeed) -> Result<VQModel> {
    let points = partition(w, dim)?;
    let fit = kmeans(&points, cfg, seed)?;
    Ok(VQModel {
        codebook: fit.codebook,
        assignments: fit.assignments,
        rows: w.rows(),
        cols: w.cols(),
    })
}

pub fn vq_decode(m: &VQModel) -> Result<Matrix> {
    m.validate()?;
    let mut data = Vec::with_capacity(m.rows * m.cols);
    for &a in m.assignments.as_slice() {
        data.extend_from_slice(m.codebook.codeword(a as usize));
    }
    Matrix::new(m.rows, m.cols, data)
}

fn check_grad_shape(g: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if g.shape() != (rows, cols) {
        return Err(Error::ShapeMismatch(format!(
            "gradient {:?} vs model {:?}",
            g.shape(),
            (rows, cols)
        )));
    }
    Ok(())
}

/// `grad[k] = sum_{n in I_k} dL/dw_n` (or the mean with [`Reduction::Mean`]).
/// Codewords without members get a zero gradient.
pub fn accumulate_codeword_grads(g: &Matrix, m: &VQModel, reduction: Reduction) -> Result<CodebookGrad> {
    check_grad_shape(g, m.rows, m.cols)?;
    m.validate()?;
    let d = m.dim();
    let mut out = CodebookGrad::zeros(m.k(), d);
    let mut counts = vec![0usize; m.k()];
    for (sub, &a) in g.as_slice().chunks_exact(d).zip(m.assignments.as_slice()) {
        let a = a as usize;
        counts[a] += 1;
        for (o, v) in out.values[a * d..(a + 1) * d].iter_mut().zip(sub) {
            *o += v;
        }
    }
    if reduction == Reduction::Mean {
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                out.values[k * d..(k + 1) * d].iter_mut().for_each(|v| *v /= c as f64);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subset {
    /// Members with the largest gradient norms.
    Top,
    /// Members with the smallest gradient norms.
    Bottom,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsetCosine {
    pub subset: Subset,
    pub fraction: f64,
    /// Cosine per codeword; `None` where the codeword has too few members
    /// or a zero gradient.
    pub per_codeword: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub counted: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DominanceReport {
    pub rows: Vec<SubsetCosine>,
}

impl DominanceReport {
    pub fn find(&self, subset: Subset, fraction: f64) -> Option<&SubsetCosine> {
        self.rows
            .iter()
            .find(|r| r.subset == subset && (r.fraction - fraction).abs() < 1e-12)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if nb == 0.0 {
        return None;
    }
    if na == 0.0 {
        return Some(0.0);
    }
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Measures how well the largest (or smallest) member gradients of each
/// codeword predict the codeword's summed gradient.
///
/// Members are ranked by the L2 norm of their subvector gradient. A codeword
/// contributes to the fraction `f` only if it has at least `ceil(1/f)`
/// members; the subset holds `ceil(f * members)` gradients.
pub fn gradient_dominance_report(
    g: &Matrix,
    m: &VQModel,
    top_fracs: &[f64],
    bottom_fracs: &[f64],
) -> Result<DominanceReport> {
    for &f in top_fracs.iter().chain(bottom_fracs) {
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::OutOfRange {
                value: f,
                lo: 0.0,
                hi: 1.0,
            });
        }
    }
    let full = accumulate_codeword_grads(g, m, Reduction::Sum)?;
    let d = m.dim();
    let members = m.assignments.members(m.k());
    if members.iter().all(Vec::is_empty) {
        return Err(Error::EmptyModel);
    }

    // Members sorted by descending gradient norm, ties by index.
    let ranked: Vec<Vec<usize>> = members
        .iter()
        .map(|ms| {
            let mut v: Vec<(usize, f64)> = ms
                .iter()
                .map(|&n| {
                    let s = &g.as_slice()[n * d..(n + 1) * d];
                    (n, s.iter().map(|x| x * x).sum::<f64>())
                })
                .collect();
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            v.into_iter().map(|(n, _)| n).collect()
        })
        .collect();

    let specs = top_fracs
        .iter()
        .map(|&f| (Subset::Top, f))
        .chain(bottom_fracs.iter().map(|&f| (Subset::Bottom, f)));
    let mut rows = Vec::new();
    for (subset, fraction) in specs {
        let min_members = (1.0 / fraction - 1e-9).ceil() as usize;
        let per_codeword: Vec<Option<f64>> = ranked
            .iter()
            .enumerate()
            .map(|(k, order)| {
                if order.is_empty() || order.len() < min_members {
                    return None;
                }
                let take = ((fraction * order.len() as f64 - 1e-9).ceil() as usize).max(1);
                let chosen: &[usize] = match subset {
                    Subset::Top => &order[..take],
                    Subset::Bottom => &order[order.len() - take..],
                };
                let mut sum = vec![0.0; d];
                for &n in chosen {
                    for (s, v) in sum.iter_mut().zip(&g.as_slice()[n * d..(n + 1) * d]) {
                        *s += v;
                    }
                }
                cosine(&sum, full.codeword(k))
            })
            .collect();
        let valid: Vec<f64> = per_codeword.iter().flatten().copied().collect();
        let mean = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
        rows.push(SubsetCosine {
            subset,
            fraction,
            per_codeword,
            mean,
            counted: valid.len(),
        });
    }
    Ok(DominanceReport { rows })
}
