//! Measurement harnesses: runtime/allocation scaling of a residual block
//! and the Kramers-Kronig verification suite.

mod kkr_suite;
mod scaling;

pub use kkr_suite::{verify_kkr, write_kkr_csv, KkrConfig, KkrFamily, KkrRow};
pub use scaling::{bench_scaling, log_log_slope, write_scaling_csv, ScalingConfig, ScalingReport};
