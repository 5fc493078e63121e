//! Series containers, the synthetic multi-period generator, CSV I/O and
//! chronological windowing.

mod csv_io;
mod series;
mod synth;
mod windows;

pub use csv_io::{load_csv, read_csv, save_csv, write_csv, write_matrix_csv};
pub use series::SeriesSet;
pub use synth::{generate, spectral_radius, Sinusoid, SynthSpec, SynthVariable};
pub use windows::{window_pairs, Split, SplitSpec, SplitWindows, WindowSet};
