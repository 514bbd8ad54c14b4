//! STFT analysis and normalized overlap-add synthesis.
//!
//! Framing convention: the signal is padded with `fft_size/2` zeros in
//! front (so frame `t` is centered on sample `t * hop`) and with however
//! many zeros complete the final frame at the back. The frame count is
//! `T = floor(len / hop) + 1`. Synthesis overlap-adds the windowed
//! inverse transforms and divides by the accumulated squared window,
//! which reconstructs any signal exactly wherever that sum is nonzero
//! and is the least-squares inverse for modified spectra.

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{AudioClip, Spectrogram, StftConfig};
use crate::error::{Error, Result};

pub fn stft(clip: &AudioClip, cfg: StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if clip.samples.is_empty() {
        return Err(Error::Config("cannot transform an empty clip".into()));
    }
    let n = cfg.fft_size;
    let hop = cfg.hop;
    let len = clip.samples.len();
    let front = n / 2;
    let num_frames = len / hop + 1;
    let padded_len = (num_frames - 1) * hop + n;

    let mut padded = vec![0.0f64; padded_len];
    padded[front..front + len].copy_from_slice(&clip.samples);

    let window = cfg.window.samples(n);
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut frames = Array2::zeros((num_frames, cfg.bins()));
    let mut buf = vec![Complex64::default(); n];
    for t in 0..num_frames {
        let start = t * hop;
        for i in 0..n {
            buf[i] = Complex64::new(padded[start + i] * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (k, v) in buf.iter().take(cfg.bins()).enumerate() {
            frames[[t, k]] = *v;
        }
    }
    Ok(Spectrogram::from_parts(frames, cfg, clip.sample_rate, len))
}

pub fn istft(spec: &Spectrogram) -> Result<AudioClip> {
    synthesize(spec.frames(), spec)
}

/// Inverts `mag .* exp(i * phase(mixture))`, the standard reconstruction
/// of estimated magnitudes with the mixture's phase.
pub fn reconstruct_with_mixture_phase(
    mag: &Array2<f64>,
    mixture: &Spectrogram,
) -> Result<AudioClip> {
    if mag.dim() != mixture.frames().dim() {
        return Err(Error::DimensionMismatch(format!(
            "magnitude is {:?} but the mixture has {:?} frames",
            mag.dim(),
            mixture.frames().dim()
        )));
    }
    let rotated = ndarray::Zip::from(mag)
        .and(mixture.frames())
        .map_collect(|&m, c| {
            let norm = c.norm();
            if norm > 0.0 {
                c * (m / norm)
            } else {
                Complex64::new(m, 0.0)
            }
        });
    synthesize(&rotated, mixture)
}

fn synthesize(frames: &Array2<Complex64>, spec: &Spectrogram) -> Result<AudioClip> {
    let cfg: StftConfig = spec.config();
    let n = cfg.fft_size;
    let hop = cfg.hop;
    let bins = cfg.bins();
    let num_frames = frames.nrows();
    if frames.ncols() != bins {
        return Err(Error::DimensionMismatch(format!(
            "expected {} bins, got {}",
            bins,
            frames.ncols()
        )));
    }
    let padded_len = (num_frames.max(1) - 1) * hop + n;
    let window = cfg.window.samples(n);
    let ifft = FftPlanner::new().plan_fft_inverse(n);

    let mut acc = vec![0.0f64; padded_len];
    let mut norm = vec![0.0f64; padded_len];
    let mut buf = vec![Complex64::default(); n];
    for t in 0..num_frames {
        buf[..bins].copy_from_slice(frames.row(t).to_slice().expect("row-major frames"));
        // Mirror the one-sided spectrum; bins 0 and N/2 are self-conjugate.
        for k in bins..n {
            buf[k] = buf[n - k].conj();
        }
        ifft.process(&mut buf);
        let start = t * hop;
        for i in 0..n {
            let sample = buf[i].re / n as f64;
            acc[start + i] += sample * window[i];
            norm[start + i] += window[i] * window[i];
        }
    }

    let front = n / 2;
    let len = spec.original_length();
    let mut out = vec![0.0f64; len];
    for (i, o) in out.iter_mut().enumerate() {
        let j = front + i;
        if norm[j] > 1e-12 {
            *o = acc[j] / norm[j];
        }
    }
    AudioClip::new(out, spec.sample_rate())
}
