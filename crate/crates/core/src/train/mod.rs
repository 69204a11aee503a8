//! A small classifier, its optimizer, and quantization-aware fine-tuning.

pub mod compare;
pub mod net;
pub mod optim;
pub mod qat;
pub mod task;

pub use net::{forward_backward, Batch, Dense, Gradients, ToyNet};
pub use optim::{adamw_step, adamw_step_masked, cosine_lr, AdamWParams, Moments};
pub use qat::{
    qat_train_ssvq, qat_train_vq, train_dense, Checkpoint, LayerFreezeEvent, Method, QuantSpec, StepRecord,
    TrainConfig, TrainRun, Trainer,
};
pub use task::{Dataset, SyntheticTask, TaskData};
