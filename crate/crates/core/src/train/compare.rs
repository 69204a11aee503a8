//! Matched-bit VQ vs SSVQ fine-tuning comparison over several seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::freeze::FreezeConfig;
use crate::matrix::RngSeed;
use crate::train::net::ToyNet;
use crate::train::qat::{qat_train_ssvq, qat_train_vq, train_dense, QuantSpec, TrainConfig, TrainRun};
use crate::train::task::{SyntheticTask, TaskData};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: SyntheticTask,
    /// Hidden layer widths; input and output widths come from the task.
    pub hidden: Vec<usize>,
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
    pub vq: QuantSpec,
    pub ssvq: QuantSpec,
    pub freeze: FreezeConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: SyntheticTask::default(),
            hidden: vec![64, 64],
            pretrain: TrainConfig {
                lr: 3e-3,
                steps: 1500,
                eval_every: 500,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                lr: 1e-3,
                lr_signs: 3e-2,
                steps: 1000,
                eval_every: 250,
                ..TrainConfig::default()
            },
            vq: QuantSpec::new(64, 4),
            ssvq: QuantSpec::new(16, 8),
            freeze: FreezeConfig {
                interval: 100,
                ..FreezeConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.pretrain.validate()?;
        self.finetune.validate()?;
        self.freeze.validate()?;
        if self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::InvalidConfig("hidden widths must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.task.dim];
        dims.extend(&self.hidden);
        dims.push(self.task.classes);
        dims
    }
}

/// Final validation accuracies of every arm for one seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub dense: f64,
    pub vq: f64,
    pub ssvq: f64,
    pub ssvq_no_freeze: f64,
    pub frozen_count: usize,
}

/// Dense training from a fresh initialization, all randomness drawn from `seed`.
pub fn pretrain(cfg: &ExperimentConfig, data: &TaskData, seed: u64) -> Result<TrainRun> {
    let root = RngSeed(seed);
    let init = ToyNet::new(&cfg.dims(), root.derive("init"));
    let pretrain = TrainConfig {
        seed: root.derive("pretrain").0,
        ..cfg.pretrain.clone()
    };
    train_dense(&init, data, &pretrain)
}

/// Fine-tuning settings for `seed`; every arm of one seed sees the same batches.
pub fn finetune_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig {
        seed: RngSeed(seed).derive("finetune").0,
        ..cfg.finetune.clone()
    }
}

/// Pretrains a dense network for `seed`, then fine-tunes each arm from it.
pub fn run_seed(cfg: &ExperimentConfig, data: &TaskData, seed: u64) -> Result<SeedOutcome> {
    let dense = pretrain(cfg, data, seed)?;
    let finetune = finetune_config(cfg, seed);
    let vq = qat_train_vq(&dense.net, data, &cfg.vq, &finetune)?;
    let ssvq = qat_train_ssvq(&dense.net, data, &cfg.ssvq, &finetune, &cfg.freeze)?;
    let no_freeze = FreezeConfig {
        enabled: false,
        ..cfg.freeze.clone()
    };
    let ssvq_nf = qat_train_ssvq(&dense.net, data, &cfg.ssvq, &finetune, &no_freeze)?;
    Ok(SeedOutcome {
        seed,
        dense: dense.final_val_acc,
        vq: vq.final_val_acc,
        ssvq: ssvq.final_val_acc,
        ssvq_no_freeze: ssvq_nf.final_val_acc,
        frozen_count: ssvq.trace.last().map_or(0, |r| r.frozen_count),
    })
}

/// Runs all seeds in parallel; results keep the order of `seeds`.
pub fn run_experiment(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<Vec<SeedOutcome>> {
    let data = cfg.task.generate()?;
    seeds.par_iter().map(|&s| run_seed(cfg, &data, s)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTest {
    pub n: usize,
    pub mean_diff: f64,
    pub std_diff: f64,
    pub t: f64,
    /// P(T >= t) under the null of zero mean difference.
    pub p_value: f64,
}

/// One-sided paired t-test of `mean(a - b) > 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTest> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::InvalidConfig("paired test needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let (t, p) = if sd == 0.0 {
        // Identical differences: decided by sign alone.
        let p = if mean > 0.0 { 0.0 } else { 1.0 };
        (f64::INFINITY.copysign(mean), p)
    } else {
        let t = mean / (sd / (n as f64).sqrt());
        let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        (t, 1.0 - dist.cdf(t))
    };
    Ok(PairedTest {
        n,
        mean_diff: mean,
        std_diff: sd,
        t,
        p_value: p,
    })
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_test_matches_hand_computation() {
        // diffs 1,2,3,4: mean 2.5, sd sqrt(5/3), t = 2.5 / (sd/2) = 3.873
        let a = [2.0, 4.0, 6.0, 8.0];
        let b = [1.0, 2.0, 3.0, 4.0];
        let r = paired_t_test(&a, &b).unwrap();
        assert!((r.mean_diff - 2.5).abs() < 1e-12);
        assert!((r.t - 2.5 / ((5.0f64 / 3.0).sqrt() / 2.0)).abs() < 1e-12);
        // t distribution with 3 dof: P(T > 3.873) ~= 0.0152
        assert!((r.p_value - 0.0152).abs() < 5e-4, "{}", r.p_value);
    }

    #[test]
    fn t_test_edge_cases() {
        assert!(paired_t_test(&[1.0], &[0.0]).is_err());
        assert!(paired_t_test(&[1.0, 2.0], &[0.0]).is_err());
        let r = paired_t_test(&[1.0, 2.0], &[0.0, 1.0]).unwrap();
        assert_eq!(r.p_value, 0.0);
        let r = paired_t_test(&[0.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn partial_tables_keep_defaults() {
        let cfg = ExperimentConfig::from_toml("[task]\nnoise = 0.3\n[ssvq]\nk = 8\nd = 4\n").unwrap();
        assert_eq!(cfg.task.noise, 0.3);
        assert_eq!(cfg.task.dim, SyntheticTask::default().dim);
        assert_eq!(cfg.ssvq, QuantSpec::new(8, 4));
        assert!(ExperimentConfig::from_toml("[ssvq]\nk = 8\nd = 4\nbeta = 1\n").is_err());
    }
}
