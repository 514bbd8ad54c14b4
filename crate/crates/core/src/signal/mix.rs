//! Mixture construction at a target SNR and circular-shift augmentation.

use super::AudioClip;
use crate::error::{Error, Result};

/// A mixture plus the exact addends it was built from, so that training
/// targets stay consistent with the mixture.
#[derive(Debug, Clone)]
pub struct MixedPair {
    pub mixture: AudioClip,
    pub source1: AudioClip,
    /// Second source after SNR scaling.
    pub source2: AudioClip,
    /// Amplitude factor that was applied to the second source.
    pub scale: f64,
}

/// One augmented pair produced by [`circular_shift_pairs`].
#[derive(Debug, Clone)]
pub struct ShiftedPair {
    pub shift: usize,
    pub pair: MixedPair,
}

/// Rescales `s2` so the pair mixes at `snr_db` (energy ratio over the
/// overlapped region), then adds. Both returned sources are truncated to
/// the overlap, so `mixture = source1 + source2` holds elementwise.
pub fn mix_at_snr(s1: &AudioClip, s2: &AudioClip, snr_db: f64) -> Result<MixedPair> {
    if s1.sample_rate != s2.sample_rate {
        return Err(Error::Config(format!(
            "sample rates differ: {} vs {}",
            s1.sample_rate, s2.sample_rate
        )));
    }
    let len = s1.len().min(s2.len());
    let e1: f64 = s1.samples[..len].iter().map(|v| v * v).sum();
    let e2: f64 = s2.samples[..len].iter().map(|v| v * v).sum();
    if e1 == 0.0 || e2 == 0.0 {
        return Err(Error::UndefinedSnr(
            "cannot scale to a target SNR against a silent source".into(),
        ));
    }
    // 10*log10(e1 / (scale^2 * e2)) = snr_db
    let scale = (e1 / (e2 * 10f64.powf(snr_db / 10.0))).sqrt();

    let a: Vec<f64> = s1.samples[..len].to_vec();
    let b: Vec<f64> = s2.samples[..len].iter().map(|v| v * scale).collect();
    let mixture: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
    Ok(MixedPair {
        mixture: AudioClip::new(mixture, s1.sample_rate)?,
        source1: AudioClip::new(a, s1.sample_rate)?,
        source2: AudioClip::new(b, s1.sample_rate)?,
        scale,
    })
}

/// Augments one source pair by circularly rotating `s2` in steps of
/// `step` samples and re-mixing each rotation at `snr_db`. Yields
/// `max(1, floor(len2 / step))` pairs with shifts `0, step, 2*step, ...`.
pub fn circular_shift_pairs(
    s1: &AudioClip,
    s2: &AudioClip,
    step: usize,
    snr_db: f64,
) -> Result<Vec<ShiftedPair>> {
    if step == 0 {
        return Err(Error::Config("shift step must be positive".into()));
    }
    let count = (s2.len() / step).max(1);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        let shift = k * step;
        let mut rotated = s2.samples.clone();
        rotated.rotate_left(shift % s2.len());
        let shifted = AudioClip::new(rotated, s2.sample_rate)?;
        out.push(ShiftedPair { shift, pair: mix_at_snr(s1, &shifted, snr_db)? });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn clip(samples: Vec<f64>) -> AudioClip {
        AudioClip::new(samples, 16_000).unwrap()
    }

    fn measured_snr(pair: &MixedPair) -> f64 {
        10.0 * (pair.source1.energy() / pair.source2.energy()).log10()
    }

    #[test]
    fn equal_energy_at_zero_db_keeps_scale_one() {
        let a = clip(vec![0.5, -0.5, 0.5, -0.5]);
        let b = clip(vec![-0.5, 0.5, -0.5, 0.5]);
        let pair = mix_at_snr(&a, &b, 0.0).unwrap();
        assert!((pair.scale - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_to_one_energy_doubles_amplitude() {
        let a = clip(vec![1.0, -1.0, 1.0, -1.0]);
        let b = clip(vec![0.5, -0.5, 0.5, -0.5]);
        let pair = mix_at_snr(&a, &b, 0.0).unwrap();
        assert!((pair.scale - 2.0).abs() < 1e-12);
    }

    #[test]
    fn requested_snr_is_hit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = clip((0..5000).map(|_| rng.random_range(-1.0..1.0)).collect());
        let b = clip((0..5000).map(|_| rng.random_range(-1.0..1.0)).collect());
        let pair = mix_at_snr(&a, &b, 6.0).unwrap();
        assert!((measured_snr(&pair) - 6.0).abs() < 0.01);
    }

    #[test]
    fn mixture_is_exact_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = clip((0..999).map(|_| rng.random_range(-1.0..1.0)).collect());
        let b = clip((0..1234).map(|_| rng.random_range(-1.0..1.0)).collect());
        let pair = mix_at_snr(&a, &b, -3.0).unwrap();
        assert_eq!(pair.mixture.len(), 999);
        for i in 0..pair.mixture.len() {
            assert_eq!(
                pair.mixture.samples[i],
                pair.source1.samples[i] + pair.source2.samples[i]
            );
        }
    }

    #[test]
    fn silent_source_is_rejected() {
        let a = clip(vec![1.0, 2.0]);
        let z = clip(vec![0.0, 0.0]);
        assert!(matches!(mix_at_snr(&a, &z, 0.0), Err(Error::UndefinedSnr(_))));
        assert!(matches!(mix_at_snr(&z, &a, 0.0), Err(Error::UndefinedSnr(_))));
    }

    #[test]
    fn shift_step_longer_than_clip_gives_single_pair() {
        let a = clip(vec![0.4; 100]);
        let b = clip((0..80).map(|i| ((i as f64) / 10.0).sin()).collect());
        let pairs = circular_shift_pairs(&a, &b, 200, 0.0).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].shift, 0);
    }

    #[test]
    fn half_length_step_gives_two_shifts() {
        let a = clip(vec![0.4; 100]);
        let b = clip((0..80).map(|i| ((i as f64) / 10.0).sin()).collect());
        let pairs = circular_shift_pairs(&a, &b, 40, 0.0).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].shift, 0);
        assert_eq!(pairs[1].shift, 40);
    }

    #[test]
    fn every_shifted_mixture_re_adds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = clip((0..600).map(|_| rng.random_range(-1.0..1.0)).collect());
        let b = clip((0..500).map(|_| rng.random_range(-1.0..1.0)).collect());
        for shifted in circular_shift_pairs(&a, &b, 120, 0.0).unwrap() {
            let p = &shifted.pair;
            for i in 0..p.mixture.len() {
                let err = (p.mixture.samples[i] - p.source1.samples[i] - p.source2.samples[i]).abs();
                assert!(err < 1e-9);
            }
        }
    }
}
