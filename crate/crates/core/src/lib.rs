//! Frequency-domain multivariate forecasting on a small reverse-mode
//! autodiff engine.
//!
//! [`network::Forecaster`] builds the model from a [`network::RunConfig`];
//! [`train::Trainer`] fits it; [`experiment::ExperimentConfig`] is the JSON
//! document the command-line tool reads.

pub mod attention;
pub mod autodiff;
pub mod bench;
pub mod data;
pub mod error;
pub mod experiment;
pub mod network;
mod params;
pub mod rng;
pub mod spectral;
pub mod tensor;
pub mod train;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::Tensor;
