use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::SeriesSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

/// Chronological train/val/test ratios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train: 7, val: 1, test: 2 }
    }
}

impl SplitSpec {
    /// Contiguous, ordered tick ranges. Train and val lengths are rounded
    /// down; test takes the remainder.
    pub fn segments(&self, total: usize) -> [Range<usize>; 3] {
        let denom = self.train + self.val + self.test;
        let n_train = total * self.train / denom;
        let n_val = total * self.val / denom;
        [0..n_train, n_train..n_train + n_val, n_train + n_val..total]
    }
}

/// Sliding `(lookback, horizon)` pairs inside one contiguous segment.
/// Pairs are materialized on demand from the shared series.
#[derive(Clone, Debug)]
pub struct WindowSet {
    series: Arc<Tensor>,
    /// Absolute tick of each pair's first lookback step.
    starts: Vec<usize>,
    pub segment: Range<usize>,
    pub lookback: usize,
    pub horizon: usize,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.starts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.starts.is_empty()
    }

    pub fn n_vars(&self) -> usize {
        self.series.shape()[0]
    }

    /// The first `n` pairs (all of them if fewer).
    pub fn take(&self, n: usize) -> WindowSet {
        let mut out = self.clone();
        out.starts.truncate(n);
        out
    }

    pub fn starts(&self) -> &[usize] {
        &self.starts
    }

    /// Tick range `[start, start + L + T)` covered by pair `i`.
    pub fn span(&self, i: usize) -> Range<usize> {
        let s = self.starts[i];
        s..s + self.lookback + self.horizon
    }

    /// Stacked pairs `([B, D, L], [B, D, T])` for the given pair indices.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Tensor) {
        let (d, n) = (self.n_vars(), self.series.shape()[1]);
        let (l, t) = (self.lookback, self.horizon);
        let src = self.series.data();
        let mut x = Vec::with_capacity(indices.len() * d * l);
        let mut y = Vec::with_capacity(indices.len() * d * t);
        for &i in indices {
            let s = self.starts[i];
            for j in 0..d {
                let row = &src[j * n..(j + 1) * n];
                x.extend_from_slice(&row[s..s + l]);
                y.extend_from_slice(&row[s + l..s + l + t]);
            }
        }
        let b = indices.len();
        (
            Tensor::new(&[b, d, l], x).expect("batch shape"),
            Tensor::new(&[b, d, t], y).expect("batch shape"),
        )
    }

    pub fn all(&self) -> (Tensor, Tensor) {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }
}

#[derive(Clone, Debug)]
pub struct SplitWindows {
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
}

impl SplitWindows {
    pub fn get(&self, split: Split) -> &WindowSet {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Splits the timeline first, then windows each segment independently so
/// no pair crosses a split boundary.
pub fn window_pairs(
    series: &SeriesSet,
    lookback: usize,
    horizon: usize,
    stride: usize,
    split: SplitSpec,
) -> Result<SplitWindows> {
    if lookback == 0 || horizon == 0 || stride == 0 {
        return Err(Error::Config("lookback, horizon and stride must be positive".into()));
    }
    let shared = Arc::new(series.values.clone());
    let need = lookback + horizon;
    let build = |which: Split, seg: Range<usize>| -> Result<WindowSet> {
        if seg.len() < need {
            return Err(Error::Data(format!(
                "{} split has {} ticks, fewer than lookback + horizon = {need}",
                which.name(),
                seg.len()
            )));
        }
        let starts = (seg.start..=seg.end - need).step_by(stride).collect();
        Ok(WindowSet {
            series: Arc::clone(&shared),
            starts,
            segment: seg,
            lookback,
            horizon,
        })
    };
    let [a, b, c] = split.segments(series.len());
    Ok(SplitWindows {
        train: build(Split::Train, a)?,
        val: build(Split::Val, b)?,
        test: build(Split::Test, c)?,
    })
}
