//! Input feature extraction: magnitude spectra, log-mel energies with
//! regression deltas, and context-window concatenation.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{FeatureKind, FeatureSequence, Spectrogram};
use crate::error::{Error, Result};

/// Floor applied to mel energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

/// Half-window of the delta regression.
const DELTA_HALF_WINDOW: usize = 2;

/// Everything needed to recompute a model's input features at inference
/// time; stored in model file headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub kind: FeatureKind,
    /// Mel band count; ignored for [`FeatureKind::Spectra`].
    pub n_mels: usize,
    /// Concatenation window width, odd.
    pub context_frames: usize,
}

impl FeatureSpec {
    /// Per-frame dimension before context concatenation, given `F` bins.
    pub fn base_dim(&self, bins: usize) -> usize {
        match self.kind {
            FeatureKind::Spectra => bins,
            FeatureKind::LogmelDeltas => 3 * self.n_mels,
        }
    }

    pub fn dim(&self, bins: usize) -> usize {
        self.base_dim(bins) * self.context_frames
    }

    /// Runs the configured extraction on one spectrogram.
    pub fn extract(&self, spec: &Spectrogram) -> Result<FeatureSequence> {
        let base = match self.kind {
            FeatureKind::Spectra => magnitude_features(spec),
            FeatureKind::LogmelDeltas => logmel_with_deltas(spec, self.n_mels)?,
        };
        context_window(&base, self.context_frames)
    }
}

/// Magnitude spectra as features, one row per frame.
pub fn magnitude_features(spec: &Spectrogram) -> FeatureSequence {
    FeatureSequence { vectors: spec.magnitude(), kind: FeatureKind::Spectra, context_frames: 1 }
}

/// Triangular mel filterbank as an `n_mels x F` matrix. Filters have unit
/// peak and span 0..sample_rate/2 on the mel scale.
pub fn mel_filterbank(n_mels: usize, fft_size: usize, sample_rate: u32) -> Array2<f64> {
    let bins = fft_size / 2 + 1;
    let mel_max = hz_to_mel(sample_rate as f64 / 2.0);
    let centers: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let mut fb = Array2::zeros((n_mels, bins));
    for m in 0..n_mels {
        let (lo, mid, hi) = (centers[m], centers[m + 1], centers[m + 2]);
        for k in 0..bins {
            let f = k as f64 * sample_rate as f64 / fft_size as f64;
            let w = if f >= lo && f <= mid && mid > lo {
                (f - lo) / (mid - lo)
            } else if f > mid && f <= hi && hi > mid {
                (hi - f) / (hi - mid)
            } else {
                0.0
            };
            fb[[m, k]] = w;
        }
    }
    fb
}

fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Log-mel energies stacked with their first- and second-order regression
/// deltas: `D = 3 * n_mels` per frame.
pub fn logmel_with_deltas(spec: &Spectrogram, n_mels: usize) -> Result<FeatureSequence> {
    if n_mels == 0 {
        return Err(Error::Config("n_mels must be at least 1".into()));
    }
    if n_mels > spec.num_bins() {
        return Err(Error::Config(format!(
            "n_mels = {n_mels} exceeds the {} spectrum bins",
            spec.num_bins()
        )));
    }
    let fb = mel_filterbank(n_mels, spec.config().fft_size, spec.sample_rate());
    let power = spec.frames().mapv(|c| c.norm_sqr());
    // (T x F) . (F x M) -> T x M
    let static_feats = power.dot(&fb.t()).mapv(|e| e.max(LOG_FLOOR).ln());
    let delta = regression_deltas(&static_feats, DELTA_HALF_WINDOW);
    let delta2 = regression_deltas(&delta, DELTA_HALF_WINDOW);

    let t = static_feats.nrows();
    let mut vectors = Array2::zeros((t, 3 * n_mels));
    vectors.slice_mut(s![.., 0..n_mels]).assign(&static_feats);
    vectors.slice_mut(s![.., n_mels..2 * n_mels]).assign(&delta);
    vectors.slice_mut(s![.., 2 * n_mels..]).assign(&delta2);
    Ok(FeatureSequence { vectors, kind: FeatureKind::LogmelDeltas, context_frames: 1 })
}

/// Two-sided linear-regression deltas with edge replication:
/// `d[t] = sum_n n * (c[t+n] - c[t-n]) / (2 * sum_n n^2)` for
/// `n = 1..=half_window`, indices clamped to the valid range.
pub fn regression_deltas(x: &Array2<f64>, half_window: usize) -> Array2<f64> {
    let (t_len, dim) = x.dim();
    let denom: f64 = 2.0 * (1..=half_window).map(|n| (n * n) as f64).sum::<f64>();
    let mut out = Array2::zeros((t_len, dim));
    for t in 0..t_len {
        for d in 0..dim {
            let mut acc = 0.0;
            for n in 1..=half_window {
                let fwd = (t + n).min(t_len - 1);
                let bwd = t.saturating_sub(n);
                acc += n as f64 * (x[[fwd, d]] - x[[bwd, d]]);
            }
            out[[t, d]] = acc / denom;
        }
    }
    out
}

/// Concatenates each frame with its `(frames-1)/2` neighbors on each side,
/// replicating the boundary frames. Output order per row is
/// `[t-k, ..., t, ..., t+k]`.
pub fn context_window(seq: &FeatureSequence, frames: usize) -> Result<FeatureSequence> {
    if frames == 0 || frames % 2 == 0 {
        return Err(Error::Config(format!("context window must be odd, got {frames}")));
    }
    if frames == 1 {
        return Ok(seq.clone());
    }
    let half = frames / 2;
    let (t_len, base) = seq.vectors.dim();
    let mut vectors = Array2::zeros((t_len, frames * base));
    for t in 0..t_len {
        for (slot, offset) in (-(half as isize)..=half as isize).enumerate() {
            let src = (t as isize + offset).clamp(0, t_len as isize - 1) as usize;
            vectors
                .slice_mut(s![t, slot * base..(slot + 1) * base])
                .assign(&seq.vectors.row(src));
        }
    }
    Ok(FeatureSequence { vectors, kind: seq.kind, context_frames: frames * seq.context_frames })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{stft, AudioClip, StftConfig};
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spec_from(samples: Vec<f64>) -> Spectrogram {
        let clip = AudioClip::new(samples, 16_000).unwrap();
        stft(&clip, StftConfig::default()).unwrap()
    }

    #[test]
    fn constant_spectrogram_has_zero_deltas() {
        // A constant input gives frame-invariant magnitudes away from the
        // padded edges; deltas of a constant sequence are zero everywhere,
        // so feed a constant matrix straight into the regression.
        let x = Array2::from_elem((12, 5), 3.7);
        let d = regression_deltas(&x, 2);
        assert!(d.iter().all(|&v| v == 0.0));
        let dd = regression_deltas(&d, 2);
        assert!(dd.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forty_mels_give_120_dims() {
        let spec = spec_from(vec![0.25; 16_000]);
        let feats = logmel_with_deltas(&spec, 40).unwrap();
        assert_eq!(feats.base_dim(), 120);
        assert_eq!(feats.num_frames(), spec.num_frames());
    }

    #[test]
    fn deltas_match_naive_oracle_on_impulse() {
        // Impulse in time: a single hot frame. The oracle recomputes the
        // regression with explicit loops and clamped indexing.
        let mut x = Array2::zeros((9, 3));
        for d in 0..3 {
            x[[4, d]] = 1.0 + d as f64;
        }
        let got = regression_deltas(&x, 2);
        let mut want = Array2::zeros((9, 3));
        for t in 0..9i64 {
            for d in 0..3 {
                let at = |i: i64| x[[i.clamp(0, 8) as usize, d]];
                want[[t as usize, d]] =
                    (1.0 * (at(t + 1) - at(t - 1)) + 2.0 * (at(t + 2) - at(t - 2))) / 10.0;
            }
        }
        assert!(got.iter().zip(want.iter()).all(|(a, b)| (a - b).abs() < 1e-15));
    }

    #[test]
    fn n_mels_bounds_checked() {
        let spec = spec_from(vec![0.25; 4000]);
        assert!(logmel_with_deltas(&spec, 0).is_err());
        assert!(logmel_with_deltas(&spec, spec.num_bins() + 1).is_err());
    }

    #[test]
    fn context_window_of_one_is_identity() {
        let spec = spec_from(vec![0.25; 4000]);
        let feats = magnitude_features(&spec);
        let windowed = context_window(&feats, 1).unwrap();
        assert_eq!(windowed.vectors, feats.vectors);
    }

    #[test]
    fn context_window_replicates_single_frame() {
        let seq = FeatureSequence {
            vectors: Array2::from_shape_vec((1, 2), vec![1.0, 2.0]).unwrap(),
            kind: FeatureKind::Spectra,
            context_frames: 1,
        };
        let windowed = context_window(&seq, 3).unwrap();
        assert_eq!(
            windowed.vectors,
            Array2::from_shape_vec((1, 6), vec![1.0, 2.0, 1.0, 2.0, 1.0, 2.0]).unwrap()
        );
    }

    #[test]
    fn context_window_indexing_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vectors =
            Array2::from_shape_fn((5, 4), |_| rng.random_range(-1.0..1.0f64));
        let seq = FeatureSequence { vectors, kind: FeatureKind::Spectra, context_frames: 1 };
        let windowed = context_window(&seq, 3).unwrap();
        for t in 0..5usize {
            let left = t.saturating_sub(1);
            let right = (t + 1).min(4);
            let mut expected: Vec<f64> = Vec::new();
            expected.extend(seq.vectors.row(left).iter().copied());
            expected.extend(seq.vectors.row(t).iter().copied());
            expected.extend(seq.vectors.row(right).iter().copied());
            let row: Vec<f64> = windowed.vectors.row(t).iter().copied().collect();
            assert_eq!(row, expected, "frame {t}");
        }
    }

    #[test]
    fn even_context_window_rejected() {
        let spec = spec_from(vec![0.25; 4000]);
        let feats = magnitude_features(&spec);
        assert!(context_window(&feats, 2).is_err());
    }

    #[test]
    fn filterbank_rows_cover_passband() {
        let fb = mel_filterbank(40, 1024, 16_000);
        for m in 0..40 {
            let peak = fb.row(m).iter().cloned().fold(0.0f64, f64::max);
            assert!(peak > 0.0, "filter {m} is empty");
            assert!(peak <= 1.0 + 1e-12);
        }
    }
}
