//! Conventional and sign-splitting vector quantization of neural-network
//! weight matrices.

pub mod clustering;
pub mod error;
pub mod freeze;
pub mod hwsim;
pub mod matrix;
pub mod ssvq;
pub mod storage;
pub mod train;
pub mod vq;

pub use error::{Error, Result};
pub use matrix::{Matrix, RngSeed, SubvectorSet, WeightMatrix};
