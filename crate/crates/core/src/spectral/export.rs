use std::io::Write;

use crate::error::{Error, Result};

use super::StftGrid;

pub const SPECTROGRAM_HEADER: [&str; 8] =
    ["channel", "window", "frame_start", "k", "omega", "re", "im", "amplitude"];

/// Writes grids of `[channels, F, frames]` as one CSV row per bin.
pub fn write_spectrogram_csv<W: Write>(grids: &[StftGrid], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(SPECTROGRAM_HEADER).map_err(csv_err)?;
    for g in grids {
        if g.re.ndim() != 3 {
            return Err(Error::dim(
                "spectrogram export",
                format!("expected [channels, F, frames], got {:?}", g.re.shape()),
            ));
        }
        let (channels, freqs, frames) = (g.re.shape()[0], g.n_freqs(), g.n_frames());
        for c in 0..channels {
            for f in 0..frames {
                for k in 0..freqs {
                    let flat = (c * freqs + k) * frames + f;
                    w.write_record([
                        c.to_string(),
                        g.window_index.to_string(),
                        g.frame_starts[f].to_string(),
                        k.to_string(),
                        g.omegas[k].to_string(),
                        g.re.data()[flat].to_string(),
                        g.im.data()[flat].to_string(),
                        g.amplitude(flat).to_string(),
                    ])
                    .map_err(csv_err)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{stft, WindowSpec};
    use crate::tensor::Tensor;

    #[test]
    fn header_and_row_count() {
        let x = Tensor::from_fn(&[2, 16], |i| (i as f64 * 0.3).sin());
        let g = stft(&x, &WindowSpec::hann(8)).unwrap();
        let mut buf = Vec::new();
        write_spectrogram_csv(&[g], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "channel,window,frame_start,k,omega,re,im,amplitude");
        // 2 channels x 5 freqs x 3 frames
        assert_eq!(lines.count(), 30);
    }
}
