//! Small ReLU classifier with hand-written backpropagation.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, RngSeed};

/// Fully connected layer; `weight` is `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

/// `in -> hidden... -> classes` network with ReLU between layers and a
/// softmax cross-entropy head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyNet {
    pub layers: Vec<Dense>,
}

/// A mini-batch: `labels.len()` rows of `dim` features.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub inputs: &'a [f64],
    pub labels: &'a [usize],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl ToyNet {
    /// He-initialized weights, zero biases.
    pub fn new(dims: &[usize], seed: RngSeed) -> Self {
        assert!(dims.len() >= 2, "need at least input and output sizes");
        let mut rng = seed.rng();
        let layers = dims
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).unwrap();
                let data = (0..w[0] * w[1]).map(|_| normal.sample(&mut rng)).collect();
                Dense {
                    weight: Matrix::new(w[1], w[0], data).unwrap(),
                    bias: vec![0.0; w[1]],
                }
            })
            .collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let layers = dims
            .windows(2)
            .map(|w| Dense {
                weight: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn classes(&self) -> usize {
        self.layers.last().unwrap().outputs()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::outputs))
            .collect()
    }

    /// Pre-activation outputs of every layer for `n` samples.
    fn forward_all(&self, inputs: &[f64], n: usize) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len());
        let mut x: Vec<f64> = inputs.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let (out, inp) = layer.weight.shape();
            let w = layer.weight.as_slice();
            let mut z = vec![0.0; n * out];
            for s in 0..n {
                let xs = &x[s * inp..(s + 1) * inp];
                for o in 0..out {
                    let row = &w[o * inp..(o + 1) * inp];
                    let dot: f64 = row.iter().zip(xs).map(|(a, b)| a * b).sum();
                    z[s * out + o] = dot + layer.bias[o];
                }
            }
            let last = li + 1 == self.layers.len();
            x = if last {
                z.clone()
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            acts.push(z);
        }
        acts
    }

    pub fn logits(&self, inputs: &[f64]) -> Vec<f64> {
        let n = inputs.len() / self.input_dim();
        self.forward_all(inputs, n).pop().unwrap()
    }

    pub fn predict(&self, inputs: &[f64]) -> Vec<usize> {
        let c = self.classes();
        self.logits(inputs)
            .chunks_exact(c)
            .map(|row| {
                let mut best = 0;
                for j in 1..c {
                    if row[j] > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    pub fn accuracy(&self, inputs: &[f64], labels: &[usize]) -> f64 {
        let hits = self.predict(inputs).iter().zip(labels).filter(|(p, l)| p == l).count();
        hits as f64 / labels.len() as f64
    }

    pub fn loss(&self, batch: Batch<'_>) -> Result<f64> {
        let n = batch.labels.len();
        let logits = self.logits(batch.inputs);
        let (loss, _) = softmax_ce(&logits, batch.labels, self.classes(), n)?;
        Ok(loss)
    }
}

/// Mean cross-entropy and its gradient w.r.t. the logits.
fn softmax_ce(logits: &[f64], labels: &[usize], c: usize, n: usize) -> Result<(f64, Vec<f64>)> {
    let mut grad = vec![0.0; n * c];
    let mut loss = 0.0;
    for s in 0..n {
        let row = &logits[s * c..(s + 1) * c];
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_z = max + sum.ln();
        loss += log_z - row[labels[s]];
        for j in 0..c {
            let p = (row[j] - log_z).exp();
            grad[s * c + j] = (p - if j == labels[s] { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    let loss = loss / n as f64;
    if !loss.is_finite() {
        return Err(Error::NumericalOverflow(format!("loss is {loss}")));
    }
    Ok((loss, grad))
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. every
/// weight and bias.
pub fn forward_backward(net: &ToyNet, batch: Batch<'_>) -> Result<(f64, Gradients)> {
    let n = batch.labels.len();
    let dim = net.input_dim();
    if n == 0 {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    if batch.inputs.len() != n * dim {
        return Err(Error::ShapeMismatch(format!(
            "{} input values for {n} samples of dim {dim}",
            batch.inputs.len()
        )));
    }
    let c = net.classes();
    if let Some(&l) = batch.labels.iter().find(|&&l| l >= c) {
        return Err(Error::IndexOutOfRange { index: l, bound: c });
    }

    let pre = net.forward_all(batch.inputs, n);
    let (loss, mut delta) = softmax_ce(pre.last().unwrap(), batch.labels, c, n)?;

    let depth = net.layers.len();
    let mut gw = vec![Vec::new(); depth];
    let mut gb = vec![Vec::new(); depth];
    for li in (0..depth).rev() {
        let layer = &net.layers[li];
        let (out, inp) = layer.weight.shape();
        let input: Vec<f64> = if li == 0 {
            batch.inputs.to_vec()
        } else {
            pre[li - 1].iter().map(|&v| v.max(0.0)).collect()
        };
        let mut w_grad = vec![0.0; out * inp];
        let mut b_grad = vec![0.0; out];
        for s in 0..n {
            let ds = &delta[s * out..(s + 1) * out];
            let xs = &input[s * inp..(s + 1) * inp];
            for o in 0..out {
                let d = ds[o];
                b_grad[o] += d;
                if d != 0.0 {
                    for (g, &x) in w_grad[o * inp..(o + 1) * inp].iter_mut().zip(xs) {
                        *g += d * x;
                    }
                }
            }
        }
        if li > 0 {
            let w = layer.weight.as_slice();
            let below = &pre[li - 1];
            let mut next = vec![0.0; n * inp];
            for s in 0..n {
                for o in 0..out {
                    let d = delta[s * out + o];
                    if d == 0.0 {
                        continue;
                    }
                    for (acc, &wv) in next[s * inp..(s + 1) * inp].iter_mut().zip(&w[o * inp..(o + 1) * inp]) {
                        *acc += d * wv;
                    }
                }
                for i in 0..inp {
                    if below[s * inp + i] <= 0.0 {
                        next[s * inp + i] = 0.0;
                    }
                }
            }
            delta = next;
        }
        gw[li] = w_grad;
        gb[li] = b_grad;
    }

    let weights = gw
        .into_iter()
        .zip(&net.layers)
        .map(|(g, l)| Matrix::new(l.outputs(), l.inputs(), g))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, Gradients { weights, biases: gb }))
}
