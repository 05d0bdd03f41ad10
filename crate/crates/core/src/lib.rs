//! Panoramic robust PCA: registration, low-rank/sparse/TV decomposition and evaluation.

pub mod corruption;
pub mod error;
pub mod io;
pub mod metrics;
pub mod registration;
pub mod shrinkage;
pub mod solvers;
pub mod synthetic;
pub mod tv;
pub mod video;

pub use error::{Error, Result};
pub use video::{Frame, MaskTensor, VideoTensor};
