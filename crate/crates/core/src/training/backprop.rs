//! Exact gradients by backpropagation through time, including the
//! deterministic mask layer.
//!
//! The mask layer derivative follows the quotient rule on
//! `m = |y1| / (|y1| + |y2|)` with the subgradient of `|x|` at zero taken
//! as 0: writing `a_i = |y_i|`, `d = a1 + a2`, the masked outputs are
//! `p1 = a1 z / d`, `p2 = a2 z / d`, and for `d > 0`
//!
//! ```text
//! dJ/dy1 = sign(y1) * z * a2 * (g1 - g2) / d^2
//! dJ/dy2 = sign(y2) * z * a1 * (g2 - g1) / d^2
//! ```
//!
//! where `g_i = dJ/dp_i`. Bins where `d` vanishes use the constant 0.5
//! split and contribute no gradient. Recurrent layers accumulate a carry
//! term from the next time step through their own recurrent matrix;
//! layers above feed deltas down within the same step, so processing
//! layers top to bottom with a per-layer time recursion covers every
//! dependency.

use ndarray::{concatenate, Array1, Array2, Axis};

use super::batch::{Sequence, TrainingBatch};
use super::loss::{loss_discriminative, loss_gradients, LossConfig};
use crate::error::{Error, Result};
use crate::model::{forward, masked_forward, sign, DrnnModel, ForwardTrace, MASK_EPS};

/// Per-parameter gradient accumulator shaped like a model.
pub(crate) struct GradStore {
    weights: Vec<Array2<f64>>,
    recurrent: Vec<Option<Array2<f64>>>,
    biases: Vec<Array1<f64>>,
}

impl GradStore {
    fn zeros_like(model: &DrnnModel) -> Self {
        let hidden = model.arch().num_hidden();
        Self {
            weights: (0..=hidden).map(|l| Array2::zeros(model.weight(l).raw_dim())).collect(),
            recurrent: (0..hidden)
                .map(|l| model.recurrent_weight(l).map(|u| Array2::zeros(u.raw_dim())))
                .collect(),
            biases: (0..=hidden).map(|l| Array1::zeros(model.bias(l).len())).collect(),
        }
    }

    fn add(&mut self, other: &GradStore) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.recurrent.iter_mut().zip(&other.recurrent) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                *a += b;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    /// Flattens in the model's parameter order.
    fn flatten(&self, model: &DrnnModel) -> Array1<f64> {
        let hidden = model.arch().num_hidden();
        let mut out = Vec::with_capacity(model.num_params());
        for l in 0..hidden {
            out.extend_from_slice(self.weights[l].as_slice().expect("contiguous"));
            if let Some(u) = &self.recurrent[l] {
                out.extend_from_slice(u.as_slice().expect("contiguous"));
            }
            out.extend_from_slice(self.biases[l].as_slice().expect("contiguous"));
        }
        out.extend_from_slice(self.weights[hidden].as_slice().expect("contiguous"));
        out.extend_from_slice(self.biases[hidden].as_slice().expect("contiguous"));
        Array1::from_vec(out)
    }
}

/// Loss of one batch under the configured objective (forward only),
/// summed over sequences.
pub fn batch_loss(model: &DrnnModel, batch: &TrainingBatch, cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    let mut total = 0.0;
    for seq in &batch.sequences {
        let trace = run_forward(model, seq, cfg)?;
        let (p1, p2) = trace.predictions();
        total += loss_discriminative(
            p1.view(),
            p2.view(),
            seq.target1.view(),
            seq.target2.view(),
            cfg.gamma,
        )?;
    }
    Ok(total)
}

/// Exact gradient of the configured objective over a batch, flattened in
/// the model's parameter order, plus the loss itself. Contributions are
/// summed over sequences; hidden state starts at zero for every sequence.
pub fn gradient(
    model: &DrnnModel,
    batch: &TrainingBatch,
    cfg: &LossConfig,
) -> Result<(Array1<f64>, f64)> {
    cfg.validate()?;
    let mut grads = GradStore::zeros_like(model);
    let mut total_loss = 0.0;
    for seq in &batch.sequences {
        let (seq_grads, seq_loss) = sequence_gradient(model, seq, cfg)?;
        grads.add(&seq_grads);
        total_loss += seq_loss;
    }
    Ok((grads.flatten(model), total_loss))
}

fn run_forward(model: &DrnnModel, seq: &Sequence, cfg: &LossConfig) -> Result<ForwardTrace> {
    if cfg.use_masking_layer {
        masked_forward(model, seq.inputs.view(), seq.mixture.view())
    } else {
        forward(model, seq.inputs.view(), None)
    }
}

fn sequence_gradient(
    model: &DrnnModel,
    seq: &Sequence,
    cfg: &LossConfig,
) -> Result<(GradStore, f64)> {
    let trace = run_forward(model, seq, cfg)?;
    let (p1, p2) = trace.predictions();
    let loss = loss_discriminative(
        p1.view(),
        p2.view(),
        seq.target1.view(),
        seq.target2.view(),
        cfg.gamma,
    )?;
    let (g1, g2) =
        loss_gradients(p1.view(), p2.view(), seq.target1.view(), seq.target2.view(), cfg.gamma);

    // Delta at the linear output, through the mask layer when active.
    let (d_raw1, d_raw2) = if cfg.use_masking_layer {
        mask_layer_backward(&trace, &seq.mixture, &g1, &g2)
    } else {
        (g1, g2)
    };
    let delta_out = concatenate(Axis(1), &[d_raw1.view(), d_raw2.view()])
        .map_err(|e| Error::DimensionMismatch(e.to_string()))?;

    let hidden_count = model.arch().num_hidden();
    let t_len = seq.num_frames();
    let mut grads = GradStore::zeros_like(model);

    // Output layer.
    grads.weights[hidden_count] = trace.hidden[hidden_count - 1].t().dot(&delta_out);
    grads.biases[hidden_count] = delta_out.sum_axis(Axis(0));
    let mut delta_h = delta_out.dot(&model.weight(hidden_count).t());

    for l in (0..hidden_count).rev() {
        let pre = &trace.preactivations[l];
        let delta_pre = if let Some(u) = model.recurrent_weight(l) {
            let mut delta_pre = Array2::zeros(pre.raw_dim());
            for t in (0..t_len).rev() {
                let mut v = delta_h.row(t).to_owned();
                if t + 1 < t_len {
                    v += &delta_pre.row(t + 1).dot(&u.t());
                }
                let gated = ndarray::Zip::from(&v)
                    .and(&pre.row(t))
                    .map_collect(|&dv, &p| if p > 0.0 { dv } else { 0.0 });
                delta_pre.row_mut(t).assign(&gated);
            }
            // dJ/dU = sum_t h_{t-1} (x) delta_pre_t, with h_{-1} = 0.
            let m = pre.ncols();
            let mut h_shift = Array2::zeros((t_len, m));
            for t in 1..t_len {
                h_shift.row_mut(t).assign(&trace.hidden[l].row(t - 1));
            }
            *grads.recurrent[l].as_mut().expect("recurrent layer") =
                h_shift.t().dot(&delta_pre);
            delta_pre
        } else {
            ndarray::Zip::from(&delta_h)
                .and(pre)
                .map_collect(|&dv, &p| if p > 0.0 { dv } else { 0.0 })
        };

        if l > 0 {
            grads.weights[l] = trace.hidden[l - 1].t().dot(&delta_pre);
        } else {
            grads.weights[0] = seq.inputs.t().dot(&delta_pre);
        }
        grads.biases[l] = delta_pre.sum_axis(Axis(0));
        if l > 0 {
            delta_h = delta_pre.dot(&model.weight(l).t());
        }
    }
    Ok((grads, loss))
}

fn mask_layer_backward(
    trace: &ForwardTrace,
    z: &Array2<f64>,
    g1: &Array2<f64>,
    g2: &Array2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let raw1 = &trace.raw1;
    let raw2 = &trace.raw2;
    let dim = raw1.raw_dim();
    let mut d1 = Array2::zeros(dim.clone());
    let mut d2 = Array2::zeros(dim);
    ndarray::Zip::indexed(raw1).for_each(|idx, &y1| {
        let y2 = raw2[idx];
        let denom = y1.abs() + y2.abs();
        if denom >= MASK_EPS {
            let zi = z[idx];
            let diff = g1[idx] - g2[idx];
            let d2_inv = 1.0 / (denom * denom);
            d1[idx] = sign(y1) * zi * y2.abs() * diff * d2_inv;
            d2[idx] = -sign(y2) * zi * y1.abs() * diff * d2_inv;
        }
    });
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Architecture, Recurrence};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy_batch(rng: &mut ChaCha8Rng, t: usize, d_in: usize, f: usize, n: usize) -> TrainingBatch {
        let sequences = (0..n)
            .map(|_| {
                Sequence::new(
                    Array2::from_shape_fn((t, d_in), |_| rng.random_range(-1.0..1.0)),
                    Array2::from_shape_fn((t, f), |_| rng.random_range(0.1..2.0)),
                    Array2::from_shape_fn((t, f), |_| rng.random_range(0.0..1.5)),
                    Array2::from_shape_fn((t, f), |_| rng.random_range(0.0..1.5)),
                )
                .unwrap()
            })
            .collect();
        TrainingBatch { sequences }
    }

    fn fd_check(model: &DrnnModel, batch: &TrainingBatch, cfg: &LossConfig, dirs: usize) {
        let (grad, _) = gradient(model, batch, cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13579);
        let eps = 1e-5;
        let theta = model.flatten();
        for _ in 0..dirs {
            let dir = Array1::from_shape_fn(theta.len(), |_| rng.random_range(-1.0..1.0f64));
            let analytic: f64 = grad.dot(&dir);
            let mut probe = model.clone();
            probe.assign_flat((&theta + &(&dir * eps)).view()).unwrap();
            let plus = batch_loss(&probe, batch, cfg).unwrap();
            probe.assign_flat((&theta - &(&dir * eps)).view()).unwrap();
            let minus = batch_loss(&probe, batch, cfg).unwrap();
            let numeric = (plus - minus) / (2.0 * eps);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(rel < 1e-6, "directional derivative {analytic} vs {numeric} (rel {rel:.2e})");
        }
    }

    #[test]
    fn zero_everything_gives_zero_gradient() {
        let arch = Architecture::new(3, &[4], 2, Recurrence::AllLayers).unwrap();
        let model = DrnnModel::zeros(arch).unwrap();
        let seq = Sequence::new(
            Array2::zeros((5, 3)),
            Array2::zeros((5, 2)),
            Array2::zeros((5, 2)),
            Array2::zeros((5, 2)),
        )
        .unwrap();
        let batch = TrainingBatch { sequences: vec![seq] };
        let (grad, loss) =
            gradient(&model, &batch, &LossConfig { gamma: 0.0, use_masking_layer: true }).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn finite_differences_confirm_all_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(333);
        let recs = [
            Recurrence::None,
            Recurrence::AtLayer(1),
            Recurrence::AtLayer(2),
            Recurrence::AllLayers,
        ];
        for rec in recs {
            let arch = Architecture::new(4, &[5, 5], 3, rec).unwrap();
            let model = DrnnModel::init(arch, 42).unwrap();
            let batch = toy_batch(&mut rng, 6, 4, 3, 2);
            for gamma in [0.0, 0.05] {
                for joint in [true, false] {
                    fd_check(
                        &model,
                        &batch,
                        &LossConfig { gamma, use_masking_layer: joint },
                        8,
                    );
                }
            }
        }
    }

    #[test]
    fn zeroed_recurrence_matches_dnn_gradient_on_shared_params() {
        // A recurrent model whose U is zero computes the same loss surface
        // over W and b as the DNN; the U gradient itself is generally
        // nonzero because perturbing U changes the outputs.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let arch_d = Architecture::new(4, &[5], 3, Recurrence::None).unwrap();
        let arch_r = Architecture::new(4, &[5], 3, Recurrence::AtLayer(1)).unwrap();
        let dnn = DrnnModel::init(arch_d, 5).unwrap();
        let mut rnn = DrnnModel::zeros(arch_r).unwrap();
        // Copy W/b; leave U = 0.
        let flat_d = dnn.flatten();
        // DNN layout: W0 b0 W1 b1; RNN layout: W0 U0 b0 W1 b1.
        let w0 = 4 * 5;
        let u0 = 5 * 5;
        let mut flat_r = rnn.flatten();
        flat_r.slice_mut(ndarray::s![0..w0]).assign(&flat_d.slice(ndarray::s![0..w0]));
        flat_r
            .slice_mut(ndarray::s![w0 + u0..])
            .assign(&flat_d.slice(ndarray::s![w0..]));
        rnn.assign_flat(flat_r.view()).unwrap();

        let batch = toy_batch(&mut rng, 5, 4, 3, 1);
        let cfg = LossConfig { gamma: 0.05, use_masking_layer: true };
        let (gd, ld) = gradient(&dnn, &batch, &cfg).unwrap();
        let (gr, lr) = gradient(&rnn, &batch, &cfg).unwrap();
        assert!((ld - lr).abs() < 1e-12);
        // W0 and b0 / output blocks agree.
        for i in 0..w0 {
            assert!((gd[i] - gr[i]).abs() < 1e-12);
        }
        for i in w0..flat_d.len() {
            assert!((gd[i] - gr[i + u0]).abs() < 1e-12);
        }
        // U gradient nonzero in general.
        let u_grad = gr.slice(ndarray::s![w0..w0 + u0]);
        assert!(u_grad.iter().any(|&g| g.abs() > 1e-12));
    }

    #[test]
    fn chopping_is_loss_neutral_for_dnn() {
        let mut rng = ChaCha8Rng::seed_from_u64(88);
        let arch = Architecture::new(4, &[6], 3, Recurrence::None).unwrap();
        let model = DrnnModel::init(arch, 3).unwrap();
        let inputs = Array2::from_shape_fn((37, 4), |_| rng.random_range(-1.0..1.0));
        let z = Array2::from_shape_fn((37, 3), |_| rng.random_range(0.1..2.0));
        let y1 = Array2::from_shape_fn((37, 3), |_| rng.random_range(0.0..1.5));
        let y2 = Array2::from_shape_fn((37, 3), |_| rng.random_range(0.0..1.5));
        let whole = super::super::batch::chop_sequences(&inputs, &z, &y1, &y2, 1000).unwrap();
        let chopped = super::super::batch::chop_sequences(&inputs, &z, &y1, &y2, 10).unwrap();
        let cfg = LossConfig { gamma: 0.05, use_masking_layer: true };
        let a = batch_loss(&model, &whole, &cfg).unwrap();
        let b = batch_loss(&model, &chopped, &cfg).unwrap();
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn non_finite_activations_reported_with_layer() {
        let arch = Architecture::new(2, &[2], 1, Recurrence::None).unwrap();
        let mut model = DrnnModel::zeros(arch).unwrap();
        model.weight_mut(0)[[0, 0]] = f64::INFINITY;
        let seq = Sequence::new(
            Array2::from_elem((2, 2), 1.0),
            Array2::from_elem((2, 1), 1.0),
            Array2::zeros((2, 1)),
            Array2::zeros((2, 1)),
        )
        .unwrap();
        let batch = TrainingBatch { sequences: vec![seq] };
        let err = gradient(&model, &batch, &LossConfig::default()).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "got: {err}");
    }
}
