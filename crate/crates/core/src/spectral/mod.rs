//! Frequency transform module: windowed STFT, Top-M selection, and the
//! Kramers-Kronig verifier.

mod export;
mod kkr;
mod select;
mod stft;
mod window;

pub use export::write_spectrogram_csv;
pub use kkr::{dft, kkr_residual, kkr_residual_about, KkrReport};
pub use select::{top_m_indices, top_m_select, Bin, FrequencyTransform, SpectralSelection};
pub use stft::{stft, StftGrid, StftPlan};
pub use window::{make_window, WindowKind, WindowSpec};
