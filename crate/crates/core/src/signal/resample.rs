//! Polyphase rational resampling, used when ingested files do not match
//! the experiment sample rate.
//!
//! The rate change is reduced to up/down factors `L/M`; the signal is
//! conceptually upsampled by `L`, filtered with a Hann-windowed sinc
//! low-pass cut at `min(pi/L, pi/M)`, and decimated by `M`. Output sample
//! `m` is computed directly as `sum_n x[n] * h[m*M - n*L]`, so no
//! intermediate buffer is materialized.

use super::AudioClip;
use crate::error::Result;

/// Zero crossings kept on each side of the sinc prototype.
const SINC_ZEROS: usize = 12;

pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    if clip.sample_rate == target_rate {
        return Ok(clip.clone());
    }
    let g = gcd(clip.sample_rate as usize, target_rate as usize);
    let up = target_rate as usize / g;
    let down = clip.sample_rate as usize / g;

    // Prototype low-pass: cutoff 1/(2*max(L,M)) cycles per upsampled
    // sample, gain L to compensate for the inserted zeros.
    let stretch = up.max(down);
    let half_taps = SINC_ZEROS * stretch;
    let cutoff = 0.5 / stretch as f64;
    let h = |k: isize| -> f64 {
        if k.unsigned_abs() > half_taps {
            return 0.0;
        }
        let x = k as f64;
        let sinc = if x == 0.0 {
            2.0 * cutoff
        } else {
            (2.0 * std::f64::consts::PI * cutoff * x).sin() / (std::f64::consts::PI * x)
        };
        let hann =
            0.5 + 0.5 * (std::f64::consts::PI * x / (half_taps as f64 + 1.0)).cos();
        up as f64 * sinc * hann
    };

    let in_len = clip.len() as isize;
    let out_len = (clip.len() * up).div_ceil(down);
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as isize {
        let center = m * down as isize; // position on the upsampled grid
        let n_lo = (center - half_taps as isize).div_euclid(up as isize);
        let n_hi = (center + half_taps as isize).div_euclid(up as isize);
        let mut acc = 0.0;
        for n in n_lo.max(0)..=n_hi.min(in_len - 1) {
            acc += clip.samples[n as usize] * h(center - n * up as isize);
        }
        out.push(acc);
    }
    AudioClip::new(out, target_rate)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_rates_match() {
        let clip = AudioClip::new(vec![0.1, 0.2, 0.3], 16_000).unwrap();
        let out = resample(&clip, 16_000).unwrap();
        assert_eq!(out.samples, clip.samples);
    }

    #[test]
    fn output_length_scales_with_ratio() {
        let clip = AudioClip::new(vec![0.0; 48_000], 48_000).unwrap();
        let out = resample(&clip, 16_000).unwrap();
        assert_eq!(out.len(), 16_000);
        assert_eq!(out.sample_rate, 16_000);
    }

    #[test]
    fn tone_survives_downsampling() {
        // 1 kHz tone, 48 kHz -> 16 kHz; compare against the ideal tone at
        // the new rate away from filter edges.
        let sr_in = 48_000u32;
        let freq = 1000.0;
        let samples: Vec<f64> = (0..sr_in as usize)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr_in as f64).sin())
            .collect();
        let clip = AudioClip::new(samples, sr_in).unwrap();
        let out = resample(&clip, 16_000).unwrap();
        let mut max_err = 0.0f64;
        for i in 200..out.len() - 200 {
            let ideal = (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin();
            max_err = max_err.max((out.samples[i] - ideal).abs());
        }
        assert!(max_err < 0.01, "max deviation {max_err}");
    }

    #[test]
    fn dc_preserved_by_upsampling() {
        let clip = AudioClip::new(vec![0.5; 8_000], 8_000).unwrap();
        let out = resample(&clip, 16_000).unwrap();
        let mid = out.len() / 2;
        for v in &out.samples[mid - 100..mid + 100] {
            assert!((v - 0.5).abs() < 1e-3);
        }
    }
}
