//! Synthetic Gaussian-blob classification data.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::RngSeed;
use crate::train::net::Batch;

/// Each class is a mixture of `blobs_per_class` isotropic Gaussians whose
/// centers are drawn from `N(0, spread^2 I)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticTask {
    pub dim: usize,
    pub classes: usize,
    pub blobs_per_class: usize,
    pub spread: f64,
    pub noise: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub seed: u64,
}

impl Default for SyntheticTask {
    fn default() -> Self {
        Self {
            dim: 16,
            classes: 8,
            blobs_per_class: 6,
            spread: 1.0,
            noise: 0.6,
            train_size: 4096,
            val_size: 1024,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub inputs: Vec<f64>,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn batch(&self) -> Batch<'_> {
        Batch {
            inputs: &self.inputs,
            labels: &self.labels,
        }
    }

    /// Copies the given rows into a new dataset.
    pub fn gather(&self, idx: &[usize]) -> Dataset {
        let mut inputs = Vec::with_capacity(idx.len() * self.dim);
        for &i in idx {
            inputs.extend_from_slice(self.sample(i));
        }
        Dataset {
            dim: self.dim,
            inputs,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TaskData {
    pub train: Dataset,
    pub val: Dataset,
}

impl SyntheticTask {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.classes < 2 || self.blobs_per_class == 0 {
            return Err(Error::InvalidConfig(
                "task needs dim >= 1, classes >= 2, blobs_per_class >= 1".into(),
            ));
        }
        if self.train_size == 0 || self.val_size == 0 {
            return Err(Error::InvalidConfig("train and val sets must be non-empty".into()));
        }
        if !(self.noise >= 0.0 && self.spread > 0.0) {
            return Err(Error::InvalidConfig("noise must be >= 0 and spread > 0".into()));
        }
        Ok(())
    }

    /// Draws the train and validation sets. Both come from one stream of
    /// independent samples, so no sample appears in both.
    pub fn generate(&self) -> Result<TaskData> {
        self.validate()?;
        let root = RngSeed(self.seed);
        let mut center_rng = root.derive("task-centers").rng();
        let centers: Vec<f64> = (0..self.classes * self.blobs_per_class * self.dim)
            .map(|_| self.spread * center_rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut rng = root.derive("task-samples").rng();
        let mut draw = |n: usize| {
            let mut inputs = Vec::with_capacity(n * self.dim);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let class = rng.random_range(0..self.classes);
                let blob = rng.random_range(0..self.blobs_per_class);
                let c = &centers[(class * self.blobs_per_class + blob) * self.dim..][..self.dim];
                for &mu in c {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    inputs.push(mu + self.noise * z);
                }
                labels.push(class);
            }
            Dataset {
                dim: self.dim,
                inputs,
                labels,
            }
        };
        let train = draw(self.train_size);
        let val = draw(self.val_size);
        Ok(TaskData { train, val })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproducible_and_sized() {
        let t = SyntheticTask {
            train_size: 100,
            val_size: 30,
            ..SyntheticTask::default()
        };
        let a = t.generate().unwrap();
        let b = t.generate().unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.train.inputs.len(), 100 * 16);
        assert_eq!(a.val.len(), 30);
        assert!(a.train.labels.iter().all(|&l| l < 8));
        let other = SyntheticTask { seed: 1, ..t }.generate().unwrap();
        assert_ne!(other.train, a.train);
    }

    #[test]
    fn splits_are_disjoint() {
        let d = SyntheticTask {
            train_size: 200,
            val_size: 200,
            ..SyntheticTask::default()
        }
        .generate()
        .unwrap();
        for i in 0..d.val.len() {
            assert!((0..d.train.len()).all(|j| d.train.sample(j) != d.val.sample(i)));
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SyntheticTask {
            classes: 1,
            ..SyntheticTask::default()
        }
        .generate()
        .is_err());
        assert!(SyntheticTask {
            val_size: 0,
            ..SyntheticTask::default()
        }
        .generate()
        .is_err());
    }
}
