use std::time::Instant;

use serde::Serialize;

use crate::data::WindowSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariableMetrics {
    pub name: String,
    pub mse: f64,
    pub mae: f64,
}

/// Errors averaged over every window, variable and horizon step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub split: String,
    pub horizon: usize,
    pub mse: f64,
    pub mae: f64,
    pub per_variable: Vec<VariableMetrics>,
    pub seed: u64,
    pub n_windows: usize,
    /// Wall time; excluded from serialization so reports are reproducible.
    #[serde(skip)]
    pub runtime_s: f64,
}

/// Per-variable `(squared, absolute)` error sums of one batch.
fn batch_sums(
    predict: &(dyn Fn(&Tensor) -> Result<Tensor> + Sync),
    windows: &WindowSet,
    indices: &[usize],
) -> Result<Vec<(f64, f64)>> {
    let (x, y) = windows.batch(indices);
    let pred = predict(&x)?;
    if pred.shape() != y.shape() {
        return Err(Error::dim("evaluate", format!("prediction {:?} vs target {:?}", pred.shape(), y.shape())));
    }
    let (d, t) = (windows.n_vars(), windows.horizon);
    let mut sums = vec![(0.0, 0.0); d];
    for b in 0..indices.len() {
        for (j, s) in sums.iter_mut().enumerate() {
            let at = (b * d + j) * t;
            for (p, g) in pred.data()[at..at + t].iter().zip(&y.data()[at..at + t]) {
                let e = p - g;
                s.0 += e * e;
                s.1 += e.abs();
            }
        }
    }
    Ok(sums)
}

/// Evaluates `predict` (`[B, D, L] -> [B, D, T]`) over all windows in
/// order, in batches of `batch_size`. With `threads > 1` batches are spread
/// over scoped threads; results are combined in batch order, so the report
/// is identical for any thread count.
pub fn evaluate_with(
    predict: &(dyn Fn(&Tensor) -> Result<Tensor> + Sync),
    windows: &WindowSet,
    names: &[String],
    split: &str,
    batch_size: usize,
    threads: usize,
    seed: u64,
) -> Result<EvalReport> {
    if windows.is_empty() {
        return Err(Error::Data(format!("{split} split has no windows to evaluate")));
    }
    let started = Instant::now();
    let idx: Vec<usize> = (0..windows.len()).collect();
    let batches: Vec<&[usize]> = idx.chunks(batch_size.max(1)).collect();
    let threads = threads.clamp(1, batches.len());
    let results: Vec<Result<Vec<(f64, f64)>>> = if threads == 1 {
        batches.iter().map(|b| batch_sums(predict, windows, b)).collect()
    } else {
        let mut slots: Vec<Option<Result<Vec<(f64, f64)>>>> = (0..batches.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let batches = &batches;
                    scope.spawn(move || {
                        (w..batches.len())
                            .step_by(threads)
                            .map(|i| (i, batch_sums(predict, windows, batches[i])))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("evaluation worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every batch evaluated")).collect()
    };

    let d = windows.n_vars();
    let mut totals = vec![(0.0, 0.0); d];
    for r in results {
        for (t, s) in totals.iter_mut().zip(r?) {
            t.0 += s.0;
            t.1 += s.1;
        }
    }
    let per_var_count = (windows.len() * windows.horizon) as f64;
    let per_variable = totals
        .iter()
        .enumerate()
        .map(|(j, &(se, ae))| VariableMetrics {
            name: names.get(j).cloned().unwrap_or_else(|| format!("x{j}")),
            mse: se / per_var_count,
            mae: ae / per_var_count,
        })
        .collect();
    let all = per_var_count * d as f64;
    Ok(EvalReport {
        split: split.to_string(),
        horizon: windows.horizon,
        mse: totals.iter().map(|t| t.0).sum::<f64>() / all,
        mae: totals.iter().map(|t| t.1).sum::<f64>() / all,
        per_variable,
        seed,
        n_windows: windows.len(),
        runtime_s: started.elapsed().as_secs_f64(),
    })
}
