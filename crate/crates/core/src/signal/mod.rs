//! Time-domain signals, STFT analysis/synthesis, feature extraction, and
//! mixture construction.

mod features;
mod mix;
mod resample;
mod stft;
mod wav;

pub use features::{
    context_window, logmel_with_deltas, magnitude_features, mel_filterbank, regression_deltas,
    FeatureSpec, LOG_FLOOR,
};
pub use mix::{circular_shift_pairs, mix_at_snr, MixedPair, ShiftedPair};
pub use resample::resample;
pub use stft::{istft, reconstruct_with_mixture_phase, stft};
pub use wav::{read_wav, read_wav_stereo, write_wav, write_wav_pcm16, ChannelSelect};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A mono time-domain signal. Samples are dimensionless amplitudes,
/// nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("audio clip must not be empty".into()));
        }
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total energy: the sum of squared samples.
    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann window; overlap-adds to a constant at hop = fft_size/2.
    Hann,
    Rectangular,
}

impl Window {
    pub fn samples(self, n: usize) -> Vec<f64> {
        match self {
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
            Window::Rectangular => vec![1.0; n],
        }
    }
}

/// STFT framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    /// Transform size in samples; must be a power of two.
    pub fft_size: usize,
    /// Frame advance in samples; `0 < hop <= fft_size`.
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    /// 1024-point frames at 50% overlap with a Hann window.
    fn default() -> Self {
        Self { fft_size: 1024, hop: 512, window: Window::Hann }
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, hop: usize, window: Window) -> Result<Self> {
        let cfg = Self { fft_size, hop, window };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Number of one-sided spectrum bins, `fft_size / 2 + 1`.
    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 || !self.fft_size.is_power_of_two() {
            return Err(Error::Config(format!(
                "fft_size must be a power of two, got {}",
                self.fft_size
            )));
        }
        if self.hop == 0 || self.hop > self.fft_size {
            return Err(Error::Config(format!(
                "hop must satisfy 0 < hop <= fft_size, got hop={} fft_size={}",
                self.hop, self.fft_size
            )));
        }
        // Reconstruction divides by the overlap-added squared window, so the
        // window/hop pair must keep that sum bounded away from zero at every
        // sample position (the nonzero-overlap-add condition).
        let w = self.window.samples(self.fft_size);
        let mut min_sum = f64::INFINITY;
        for r in 0..self.hop {
            let mut sum = 0.0;
            let mut i = r;
            while i < self.fft_size {
                sum += w[i] * w[i];
                i += self.hop;
            }
            min_sum = min_sum.min(sum);
        }
        if min_sum < 1e-8 {
            return Err(Error::Config(format!(
                "window {:?} does not overlap-add at hop {} (min squared-window sum {min_sum:.2e})",
                self.window, self.hop
            )));
        }
        Ok(())
    }
}

/// Complex STFT frames of one signal: a `T x F` matrix with
/// `F = fft_size/2 + 1` bins, plus everything needed to invert it.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    frames: Array2<Complex64>,
    config: StftConfig,
    sample_rate: u32,
    original_length: usize,
}

impl Spectrogram {
    pub(crate) fn from_parts(
        frames: Array2<Complex64>,
        config: StftConfig,
        sample_rate: u32,
        original_length: usize,
    ) -> Self {
        debug_assert_eq!(frames.ncols(), config.bins());
        Self { frames, config, sample_rate, original_length }
    }

    pub fn frames(&self) -> &Array2<Complex64> {
        &self.frames
    }

    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_bins(&self) -> usize {
        self.frames.ncols()
    }

    pub fn config(&self) -> StftConfig {
        self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    /// Per-bin magnitudes as a `T x F` matrix.
    pub fn magnitude(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.norm())
    }

    /// Per-bin phases in radians.
    pub fn phase(&self) -> Array2<f64> {
        self.frames.mapv(|c| c.arg())
    }
}

/// What a feature matrix holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// Magnitude spectra, one row per STFT frame.
    Spectra,
    /// Log-mel energies with first- and second-order regression deltas.
    LogmelDeltas,
}

/// Per-frame input vectors aligned to a source [`Spectrogram`].
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    /// `T x D` matrix; `D = context_frames * base_dim`.
    pub vectors: Array2<f64>,
    pub kind: FeatureKind,
    /// Width of the concatenation window these vectors were built with.
    pub context_frames: usize,
}

impl FeatureSequence {
    pub fn num_frames(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    /// Dimension of a single frame before context concatenation.
    pub fn base_dim(&self) -> usize {
        self.vectors.ncols() / self.context_frames
    }
}
