//! Training sequences and sequence chopping.

use ndarray::{s, Array2};

use crate::error::{Error, Result};

/// One aligned training sequence: input features, mixture magnitudes, and
/// the two clean-source magnitude targets, all `T x *`.
#[derive(Debug, Clone)]
pub struct Sequence {
    pub inputs: Array2<f64>,
    pub mixture: Array2<f64>,
    pub target1: Array2<f64>,
    pub target2: Array2<f64>,
}

impl Sequence {
    pub fn new(
        inputs: Array2<f64>,
        mixture: Array2<f64>,
        target1: Array2<f64>,
        target2: Array2<f64>,
    ) -> Result<Self> {
        let t = inputs.nrows();
        if mixture.nrows() != t || target1.nrows() != t || target2.nrows() != t {
            return Err(Error::DimensionMismatch(format!(
                "frame counts differ: inputs {t}, mixture {}, targets {}/{}",
                mixture.nrows(),
                target1.nrows(),
                target2.nrows()
            )));
        }
        if mixture.dim() != target1.dim() || mixture.dim() != target2.dim() {
            return Err(Error::DimensionMismatch(
                "mixture and target spectra must share a shape".into(),
            ));
        }
        for (name, m) in [("mixture", &mixture), ("target1", &target1), ("target2", &target2)] {
            if m.iter().any(|&v| v < 0.0) {
                return Err(Error::Config(format!("{name} magnitudes must be nonnegative")));
            }
        }
        Ok(Self { inputs, mixture, target1, target2 })
    }

    pub fn num_frames(&self) -> usize {
        self.inputs.nrows()
    }
}

/// A set of sequences, each at most `max_seq_len` frames long.
#[derive(Debug, Clone, Default)]
pub struct TrainingBatch {
    pub sequences: Vec<Sequence>,
}

impl TrainingBatch {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(Sequence::num_frames).sum()
    }

    pub fn merge(batches: impl IntoIterator<Item = TrainingBatch>) -> TrainingBatch {
        TrainingBatch {
            sequences: batches.into_iter().flat_map(|b| b.sequences).collect(),
        }
    }
}

/// Splits one long aligned sequence into contiguous non-overlapping
/// segments of at most `max_len` frames, in order; the last segment may
/// be shorter. Hidden state is reset at each segment start during
/// training, which is why segments are separate sequences.
pub fn chop_sequences(
    inputs: &Array2<f64>,
    mixture: &Array2<f64>,
    target1: &Array2<f64>,
    target2: &Array2<f64>,
    max_len: usize,
) -> Result<TrainingBatch> {
    if max_len == 0 {
        return Err(Error::Config("max_len must be at least 1".into()));
    }
    let t = inputs.nrows();
    let mut sequences = Vec::with_capacity(t.div_ceil(max_len));
    let mut start = 0;
    while start < t {
        let end = (start + max_len).min(t);
        sequences.push(Sequence::new(
            inputs.slice(s![start..end, ..]).to_owned(),
            mixture.slice(s![start..end, ..]).to_owned(),
            target1.slice(s![start..end, ..]).to_owned(),
            target2.slice(s![start..end, ..]).to_owned(),
        )?);
        start = end;
    }
    Ok(TrainingBatch { sequences })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::concatenate;
    use ndarray::Axis;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_arrays(t: usize) -> (Array2<f64>, Array2<f64>, Array2<f64>, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mk = |rng: &mut ChaCha8Rng, lo: f64| {
            Array2::from_shape_fn((t, 3), |_| rng.random_range(lo..2.0))
        };
        (mk(&mut rng, -2.0), mk(&mut rng, 0.0), mk(&mut rng, 0.0), mk(&mut rng, 0.0))
    }

    #[test]
    fn exact_fit_gives_one_segment() {
        let (x, z, y1, y2) = random_arrays(100);
        let batch = chop_sequences(&x, &z, &y1, &y2, 100).unwrap();
        assert_eq!(batch.len(), 1);
        assert_eq!(batch.sequences[0].num_frames(), 100);
    }

    #[test]
    fn uneven_tail_is_shorter() {
        let (x, z, y1, y2) = random_arrays(250);
        let batch = chop_sequences(&x, &z, &y1, &y2, 100).unwrap();
        let lens: Vec<usize> = batch.sequences.iter().map(Sequence::num_frames).collect();
        assert_eq!(lens, vec![100, 100, 50]);
    }

    #[test]
    fn concatenating_segments_reassembles_the_original() {
        let (x, z, y1, y2) = random_arrays(73);
        let batch = chop_sequences(&x, &z, &y1, &y2, 16).unwrap();
        let views: Vec<_> = batch.sequences.iter().map(|s| s.inputs.view()).collect();
        let rebuilt = concatenate(Axis(0), &views).unwrap();
        assert_eq!(rebuilt, x);
        let views: Vec<_> = batch.sequences.iter().map(|s| s.target2.view()).collect();
        let rebuilt = concatenate(Axis(0), &views).unwrap();
        assert_eq!(rebuilt, y2);
    }

    #[test]
    fn negative_targets_rejected() {
        let x = Array2::zeros((4, 3));
        let z = Array2::zeros((4, 3));
        let mut y1 = Array2::zeros((4, 3));
        y1[[0, 0]] = -0.5;
        let y2 = Array2::zeros((4, 3));
        assert!(chop_sequences(&x, &z, &y1, &y2, 10).is_err());
    }
}
