use std::io::Write;
use std::time::Instant;

use crate::autodiff::Tape;
use crate::data::{SplitWindows, WindowSet};
use crate::error::{Error, Result};
use crate::network::{Forecaster, ModelParams};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::adam::Adam;
use super::eval::{evaluate_with, EvalReport};
use super::loss::l2_loss;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation MSE.
    pub params: ModelParams<Tensor>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
}

/// Mini-batch Adam on the L2 loss with early stopping on validation MSE.
#[derive(Clone, Debug)]
pub struct Trainer<'a> {
    pub model: &'a Forecaster,
    /// Threads for validation passes.
    pub eval_threads: usize,
}

impl<'a> Trainer<'a> {
    pub fn new(model: &'a Forecaster) -> Self {
        Self { model, eval_threads: 1 }
    }

    /// Trains from `init`, shuffling training windows each epoch with a
    /// generator seeded by `seed`.
    pub fn train_from(&self, init: ModelParams<Tensor>, data: &SplitWindows, seed: u64) -> Result<TrainOutcome> {
        let cfg = self.model.config();
        for (name, ws) in [("train", &data.train), ("val", &data.val)] {
            if ws.is_empty() {
                return Err(Error::Data(format!("{name} split is empty")));
            }
        }
        let mut rng = Rng::new(seed).fork();
        let mut params = init;
        let mut opt = Adam::new(cfg.lr, &params.leaves());
        let mut order: Vec<usize> = (0..data.train.len()).collect();

        let mut history = Vec::new();
        let mut best: Option<(f64, usize, ModelParams<Tensor>)> = None;
        let mut stale = 0;
        for epoch in 1..=cfg.epochs {
            let started = Instant::now();
            rng.shuffle(&mut order);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let (x, y) = data.train.batch(chunk);
                let mut tape = Tape::new();
                let vars = params.map(&mut |t| tape.param(t.clone()));
                let out = self.model.forward(&mut tape, &vars, &x)?;
                let loss = l2_loss(&mut tape, out.forecast, &y)?;
                loss_sum += tape.value(loss).item() * chunk.len() as f64;
                tape.backward(loss)?;
                let mut grads: Vec<Tensor> = vars.leaves().iter().map(|&&v| tape.grad_or_zeros(v)).collect();
                let mut leaves: Vec<Tensor> = params.leaves().into_iter().cloned().collect();
                opt.update(&mut leaves, &mut grads);
                params = params.with_leaves(leaves);
            }
            let train_loss = loss_sum / order.len() as f64;
            if !train_loss.is_finite() {
                return Err(Error::Degenerate(format!("training diverged at epoch {epoch}")));
            }
            let val_mse = self.evaluate(&params, &data.val, &[], "val", seed)?.mse;
            log::info!(
                "epoch {epoch}: train_loss {train_loss:.6} val_mse {val_mse:.6} ({:.1}s)",
                started.elapsed().as_secs_f64()
            );
            history.push(EpochRecord { epoch, train_loss, val_mse });
            if best.as_ref().map_or(true, |b| val_mse < b.0) {
                best = Some((val_mse, epoch, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    log::info!("early stop after epoch {epoch}");
                    break;
                }
            }
        }
        let (best_val_mse, best_epoch, params) = match best {
            Some(b) => b,
            None => {
                // Zero epochs requested: report the initial parameters.
                let v = self.evaluate(&params, &data.val, &[], "val", seed)?.mse;
                (v, 0, params)
            }
        };
        Ok(TrainOutcome { params, history, best_epoch, best_val_mse })
    }

    pub fn train(&self, data: &SplitWindows, seed: u64) -> Result<TrainOutcome> {
        self.train_from(self.model.init_params(seed), data, seed)
    }

    pub fn evaluate(
        &self,
        params: &ModelParams<Tensor>,
        windows: &WindowSet,
        names: &[String],
        split: &str,
        seed: u64,
    ) -> Result<EvalReport> {
        let predict = |x: &Tensor| self.model.predict(params, x);
        evaluate_with(
            &predict,
            windows,
            names,
            split,
            self.model.config().batch_size,
            self.eval_threads,
            seed,
        )
    }
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], mut out: W) -> Result<()> {
    writeln!(out, "epoch,train_loss,val_mse")?;
    for r in history {
        writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_mse)?;
    }
    Ok(())
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
