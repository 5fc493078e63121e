//! Loss, optimizer, metrics, reference baselines and the training loop.

mod adam;
mod baselines;
mod eval;
mod loss;
mod trainer;

pub use adam::Adam;
pub use baselines::{persistence, LinearBaseline, RIDGE_LAMBDA};
pub use eval::{evaluate_with, EvalReport, VariableMetrics};
pub use loss::{error_sums, l2_loss, metrics};
pub use trainer::{mean_std, write_history_csv, EpochRecord, TrainOutcome, Trainer};
