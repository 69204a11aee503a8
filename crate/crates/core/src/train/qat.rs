//! Quantization-aware fine-tuning loops for dense, VQ and SSVQ networks.
//!
//! Every layer except the classifier is compressed. Biases and the classifier
//! stay full precision and trainable. For compressed layers the weights the
//! network sees are always `decode(model)`, rebuilt after every update.

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::KMeansConfig;
use crate::error::{Error, Result};
use crate::freeze::{FreezeConfig, FreezeEvent, FreezeState};
use crate::matrix::{Matrix, RngSeed};
use crate::ssvq::{ssvq_codebook_grads, ssvq_decode, ssvq_encode_with, ste_sign_grad, SSVQModel};
use crate::train::net::{forward_backward, Batch, Gradients, ToyNet};
use crate::train::optim::{adamw_step, adamw_step_masked, cosine_lr, AdamWParams, Moments};
use crate::train::task::{Dataset, TaskData};
use crate::vq::{accumulate_codeword_grads, vq_decode, vq_encode_with, Reduction, VQModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Learning rate of the latent signs.
    pub lr_signs: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub cosine_lr: bool,
    pub seed: u64,
    /// Validation accuracy is measured every `eval_every` steps and at the end.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            lr_signs: 3e-2,
            weight_decay: 0.0,
            batch_size: 64,
            steps: 1000,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            cosine_lr: true,
            seed: 0,
            eval_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr_signs >= 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig(
                "learning rates and weight decay must be non-negative".into(),
            ));
        }
        if self.steps == 0 || self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig(
                "steps, batch_size and eval_every must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn adamw(&self, weight_decay: f64) -> AdamWParams {
        AdamWParams {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay,
        }
    }

    fn lr_at(&self, base: f64, t: usize) -> f64 {
        if self.cosine_lr {
            cosine_lr(base, t, self.steps)
        } else {
            base
        }
    }
}

/// Codebook size, subvector dimension and latent-sign scale for one method.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantSpec {
    pub k: usize,
    pub d: usize,
    #[serde(default = "unit_alpha")]
    pub alpha: f64,
}

fn unit_alpha() -> f64 {
    1.0
}

impl QuantSpec {
    pub fn new(k: usize, d: usize) -> Self {
        Self { k, d, alpha: 1.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Vq,
    Ssvq,
}

/// One line of the metrics trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub loss: f64,
    pub val_acc: Option<f64>,
    pub frozen_count: usize,
    pub sign_flip_count: usize,
}

/// A freeze event tagged with the compressed layer it belongs to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerFreezeEvent {
    pub layer: usize,
    #[serde(flatten)]
    pub event: FreezeEvent,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub method: Method,
    pub trace: Vec<StepRecord>,
    pub freeze_log: Vec<LayerFreezeEvent>,
    /// Validation accuracy before the first update.
    pub initial_val_acc: f64,
    pub final_val_acc: f64,
    pub net: ToyNet,
    pub checkpoint: Checkpoint,
}

/// Serializable snapshot of a training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub method: Method,
    pub step: usize,
    pub net: ToyNet,
    pub vq_models: Vec<VQModel>,
    pub ssvq_models: Vec<SSVQModel>,
}

/// Epoch-shuffled mini-batch indices.
struct BatchSampler {
    rng: ChaCha8Rng,
    order: Vec<usize>,
    pos: usize,
}

impl BatchSampler {
    fn new(n: usize, seed: RngSeed) -> Self {
        let mut s = Self {
            rng: seed.rng(),
            order: (0..n).collect(),
            pos: n,
        };
        s.reshuffle_if_needed(n);
        s
    }

    fn reshuffle_if_needed(&mut self, want: usize) {
        if self.pos + want > self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
    }

    fn next(&mut self, size: usize) -> Vec<usize> {
        let size = size.min(self.order.len());
        self.reshuffle_if_needed(size);
        let out = self.order[self.pos..self.pos + size].to_vec();
        self.pos += size;
        out
    }
}

enum Body {
    Dense(Vec<Moments>),
    Vq {
        models: Vec<VQModel>,
        moments: Vec<Moments>,
    },
    Ssvq {
        models: Vec<SSVQModel>,
        codebook_moments: Vec<Moments>,
        latent_moments: Vec<Moments>,
        freeze: Vec<FreezeState>,
    },
}

/// Step-at-a-time training loop shared by all methods.
pub struct Trainer {
    net: ToyNet,
    body: Body,
    bias_moments: Vec<Moments>,
    head_moments: Moments,
    cfg: TrainConfig,
    sampler: BatchSampler,
    step: usize,
    freeze_log: Vec<LayerFreezeEvent>,
    /// Latents handed to the freezer in the last step, when recording.
    observed: Option<Vec<Vec<f64>>>,
}

fn body_len(net: &ToyNet) -> usize {
    net.layers.len() - 1
}

impl Trainer {
    fn with_body(net: ToyNet, body: Body, cfg: &TrainConfig, train_size: usize) -> Result<Self> {
        cfg.validate()?;
        let bias_moments = net.layers.iter().map(|l| Moments::new(l.bias.len())).collect();
        let head_moments = Moments::new(net.layers.last().unwrap().weight.len());
        Ok(Self {
            net,
            body,
            bias_moments,
            head_moments,
            sampler: BatchSampler::new(train_size, RngSeed(cfg.seed).derive("batches")),
            cfg: cfg.clone(),
            step: 0,
            freeze_log: Vec::new(),
            observed: None,
        })
    }

    /// Plain full-precision training of every parameter.
    pub fn dense(net: &ToyNet, cfg: &TrainConfig, train_size: usize) -> Result<Self> {
        let moments = net.layers[..body_len(net)]
            .iter()
            .map(|l| Moments::new(l.weight.len()))
            .collect();
        Self::with_body(net.clone(), Body::Dense(moments), cfg, train_size)
    }

    /// Compresses every body layer with k-means and fine-tunes the codebooks.
    pub fn vq(net: &ToyNet, quant: &QuantSpec, cfg: &TrainConfig, train_size: usize) -> Result<Self> {
        let seed = RngSeed(cfg.seed).derive("clustering");
        let mut net = net.clone();
        let mut models = Vec::new();
        let body = body_len(&net);
        for (i, layer) in net.layers[..body].iter_mut().enumerate() {
            let m = vq_encode_with(
                &layer.weight,
                &KMeansConfig::new(quant.k),
                quant.d,
                seed.derive(&format!("layer{i}")),
            )?;
            layer.weight = vq_decode(&m)?;
            models.push(m);
        }
        let moments = models
            .iter()
            .map(|m| Moments::new(m.codebook.entries().len()))
            .collect();
        Self::with_body(net, Body::Vq { models, moments }, cfg, train_size)
    }

    /// Splits signs from magnitudes in every body layer, then jointly tunes
    /// codebooks and latent signs with iterative freezing.
    pub fn ssvq(
        net: &ToyNet,
        quant: &QuantSpec,
        cfg: &TrainConfig,
        freeze: &FreezeConfig,
        train_size: usize,
    ) -> Result<Self> {
        let seed = RngSeed(cfg.seed).derive("clustering");
        let mut net = net.clone();
        let mut models = Vec::new();
        let mut states = Vec::new();
        let body = body_len(&net);
        for (i, layer) in net.layers[..body].iter_mut().enumerate() {
            let m = ssvq_encode_with(
                &layer.weight,
                &KMeansConfig::new(quant.k),
                quant.d,
                quant.alpha,
                seed.derive(&format!("layer{i}")),
            )?;
            layer.weight = ssvq_decode(&m)?;
            states.push(FreezeState::new(freeze.clone(), cfg.steps, &m.latent)?);
            models.push(m);
        }
        let codebook_moments = models
            .iter()
            .map(|m| Moments::new(m.codebook.entries().len()))
            .collect();
        let latent_moments = models.iter().map(|m| Moments::new(m.len())).collect();
        Self::with_body(
            net,
            Body::Ssvq {
                models,
                codebook_moments,
                latent_moments,
                freeze: states,
            },
            cfg,
            train_size,
        )
    }

    pub fn method(&self) -> Method {
        match self.body {
            Body::Dense(_) => Method::Dense,
            Body::Vq { .. } => Method::Vq,
            Body::Ssvq { .. } => Method::Ssvq,
        }
    }

    /// The network as evaluated, with compressed layers decoded.
    pub fn net(&self) -> &ToyNet {
        &self.net
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn vq_models(&self) -> &[VQModel] {
        match &self.body {
            Body::Vq { models, .. } => models,
            _ => &[],
        }
    }

    pub fn ssvq_models(&self) -> &[SSVQModel] {
        match &self.body {
            Body::Ssvq { models, .. } => models,
            _ => &[],
        }
    }

    pub fn freeze_states(&self) -> &[FreezeState] {
        match &self.body {
            Body::Ssvq { freeze, .. } => freeze,
            _ => &[],
        }
    }

    pub fn freeze_log(&self) -> &[LayerFreezeEvent] {
        &self.freeze_log
    }

    /// Keep, per SSVQ layer, the latent values the freezer saw in the most
    /// recent step (before that step's freezes were applied).
    pub fn record_observations(&mut self, on: bool) {
        self.observed = on.then(Vec::new);
    }

    pub fn observed_latents(&self) -> Option<&[Vec<f64>]> {
        self.observed.as_deref()
    }

    pub fn frozen_count(&self) -> usize {
        self.ssvq_models().iter().map(SSVQModel::frozen_count).sum()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            method: self.method(),
            step: self.step,
            net: self.net.clone(),
            vq_models: self.vq_models().to_vec(),
            ssvq_models: self.ssvq_models().to_vec(),
        }
    }

    /// Loss and gradients w.r.t. the decoded weights on `batch`, without updating.
    pub fn gradients(&self, batch: Batch<'_>) -> Result<(f64, Gradients)> {
        forward_backward(&self.net, batch)
    }

    /// Runs one optimizer step on the next mini-batch.
    pub fn step(&mut self, train: &Dataset, val: Option<&Dataset>) -> Result<StepRecord> {
        if self.step >= self.cfg.steps {
            return Err(Error::InvalidConfig(format!(
                "all {} steps already taken",
                self.cfg.steps
            )));
        }
        self.step += 1;
        let t = self.step;
        let idx = self.sampler.next(self.cfg.batch_size);
        let batch = train.gather(&idx);
        let (loss, grads) = forward_backward(&self.net, batch.batch())?;

        let lr = self.cfg.lr_at(self.cfg.lr, t);
        let lr_signs = self.cfg.lr_at(self.cfg.lr_signs, t);
        let decayed = self.cfg.adamw(self.cfg.weight_decay);
        let undecayed = self.cfg.adamw(0.0);
        let body = body_len(&self.net);
        let mut flips = 0;

        match &mut self.body {
            Body::Dense(moments) => {
                for i in 0..body {
                    adamw_step(
                        self.net.layers[i].weight.as_mut_slice(),
                        grads.weights[i].as_slice(),
                        &mut moments[i],
                        &decayed,
                        lr,
                        t,
                    );
                }
            }
            Body::Vq { models, moments } => {
                for i in 0..body {
                    let g = accumulate_codeword_grads(&grads.weights[i], &models[i], Reduction::Sum)?;
                    adamw_step(
                        models[i].codebook.entries_mut(),
                        &g.values,
                        &mut moments[i],
                        &decayed,
                        lr,
                        t,
                    );
                    self.net.layers[i].weight = vq_decode(&models[i])?;
                }
            }
            Body::Ssvq {
                models,
                codebook_moments,
                latent_moments,
                freeze,
            } => {
                for i in 0..body {
                    let m = &mut models[i];
                    let g_cb = ssvq_codebook_grads(&grads.weights[i], m)?;
                    let g_ls = ste_sign_grad(&grads.weights[i], m)?;
                    adamw_step(
                        m.codebook.entries_mut(),
                        &g_cb.values,
                        &mut codebook_moments[i],
                        &decayed,
                        lr,
                        t,
                    );
                    m.codebook.project_nonnegative();
                    adamw_step_masked(
                        &mut m.latent,
                        g_ls.as_slice(),
                        &mut latent_moments[i],
                        &undecayed,
                        lr_signs,
                        t,
                        Some(&m.frozen),
                    );
                    if let Some(obs) = self.observed.as_mut() {
                        if i == 0 {
                            obs.clear();
                        }
                        obs.push(m.latent.clone());
                    }
                    let outcome = freeze[i].step(&m.latent, t)?;
                    flips += outcome.flips;
                    for e in outcome.events {
                        m.freeze(e.position, f64::from(e.frozen_sign));
                        self.freeze_log.push(LayerFreezeEvent { layer: i, event: e });
                    }
                    self.net.layers[i].weight = ssvq_decode(m)?;
                }
            }
        }

        for (li, layer) in self.net.layers.iter_mut().enumerate() {
            adamw_step(
                &mut layer.bias,
                &grads.biases[li],
                &mut self.bias_moments[li],
                &undecayed,
                lr,
                t,
            );
        }
        let head = self.net.layers.last_mut().unwrap();
        adamw_step(
            head.weight.as_mut_slice(),
            grads.weights.last().unwrap().as_slice(),
            &mut self.head_moments,
            &decayed,
            lr,
            t,
        );

        let val_acc = val
            .filter(|_| t % self.cfg.eval_every == 0 || t == self.cfg.steps)
            .map(|v| self.net.accuracy(&v.inputs, &v.labels));
        Ok(StepRecord {
            step: t,
            loss,
            val_acc,
            frozen_count: self.frozen_count(),
            sign_flip_count: flips,
        })
    }

    /// Runs all remaining steps.
    pub fn run(mut self, data: &TaskData) -> Result<TrainRun> {
        let initial_val_acc = self.net.accuracy(&data.val.inputs, &data.val.labels);
        let mut trace = Vec::with_capacity(self.cfg.steps);
        while self.step < self.cfg.steps {
            trace.push(self.step(&data.train, Some(&data.val))?);
        }
        let final_val_acc = self.net.accuracy(&data.val.inputs, &data.val.labels);
        let checkpoint = self.checkpoint();
        Ok(TrainRun {
            checkpoint,
            method: self.method(),
            trace,
            freeze_log: self.freeze_log,
            initial_val_acc,
            final_val_acc,
            net: self.net,
        })
    }
}

pub fn train_dense(net: &ToyNet, data: &TaskData, cfg: &TrainConfig) -> Result<TrainRun> {
    Trainer::dense(net, cfg, data.train.len())?.run(data)
}

pub fn qat_train_vq(net: &ToyNet, data: &TaskData, quant: &QuantSpec, cfg: &TrainConfig) -> Result<TrainRun> {
    Trainer::vq(net, quant, cfg, data.train.len())?.run(data)
}

pub fn qat_train_ssvq(
    net: &ToyNet,
    data: &TaskData,
    quant: &QuantSpec,
    cfg: &TrainConfig,
    freeze: &FreezeConfig,
) -> Result<TrainRun> {
    Trainer::ssvq(net, quant, cfg, freeze, data.train.len())?.run(data)
}

/// Decoded weight of every compressed layer in a checkpoint.
pub fn checkpoint_weights(ckpt: &Checkpoint) -> Result<Vec<Matrix>> {
    match ckpt.method {
        Method::Dense => Ok(ckpt.net.layers[..body_len(&ckpt.net)]
            .iter()
            .map(|l| l.weight.clone())
            .collect()),
        Method::Vq => ckpt.vq_models.iter().map(vq_decode).collect(),
        Method::Ssvq => ckpt.ssvq_models.iter().map(ssvq_decode).collect(),
    }
}
