//! The forecasting network: normalization, embedding, residual spectral
//! blocks, projection head and denormalization.

mod block;
mod checkpoint;
mod config;
mod model;
mod norm;
mod params;

pub use block::{block_forward, block_from_coefficients, inception_kernel, BlockTrace};
pub use checkpoint::{from_entries, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use config::RunConfig;
pub use model::{Forecaster, ForwardOutput};
pub use norm::{denormalize, normalize, NormStats, NORM_EPSILON};
pub use params::{BlockParams, ModelParams, ParamCount};
