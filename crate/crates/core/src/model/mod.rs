//! Network architectures and forward computation.
//!
//! One parameter set covers the whole family: a deep network of rectifier
//! layers where any subset of hidden layers may carry a self-recurrent
//! connection. A feed-forward DNN is the degenerate case with every
//! recurrent matrix absent (treated as zero), `DRNN-l` has one recurrent
//! hidden layer, and the stacked RNN is recurrent at every level. The
//! linear output layer always produces two stacked source predictions,
//! which the deterministic mask layer turns into magnitude estimates that
//! sum to the mixture exactly.

mod io;

pub use io::{load_model, save_model, SeparatorModel, MODEL_MAGIC};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Denominators below this are treated as zero by the mask (both
/// predictions vanish) and the mask falls back to an even 0.5 split,
/// which keeps the two outputs summing to the mixture.
pub const MASK_EPS: f64 = 1e-12;

/// Where self-recurrent connections sit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recurrence {
    /// Feed-forward network; every frame is independent.
    None,
    /// Single recurrent hidden layer (1-based index).
    AtLayer(usize),
    /// Stacked RNN: every hidden layer is recurrent.
    AllLayers,
}

/// Element-wise nonlinearity applied at hidden layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Rectifier,
}

#[inline]
pub(crate) fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Sign with the subgradient-at-zero convention `sign(0) = 0`.
#[inline]
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Layer sizes plus recurrence structure.
///
/// `layer_sizes = [d_in, m_1, ..., m_L, 2F]`: the input dimension, the
/// hidden widths, and the stacked two-source output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub layer_sizes: Vec<usize>,
    pub recurrence: Recurrence,
    #[serde(default)]
    pub activation: Activation,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden: &[usize],
        spectrum_bins: usize,
        recurrence: Recurrence,
    ) -> Result<Self> {
        let mut layer_sizes = Vec::with_capacity(hidden.len() + 2);
        layer_sizes.push(input_dim);
        layer_sizes.extend_from_slice(hidden);
        layer_sizes.push(2 * spectrum_bins);
        let arch = Self { layer_sizes, recurrence, activation: Activation::Rectifier };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 3 {
            return Err(Error::Config(
                "architecture needs at least one hidden layer".into(),
            ));
        }
        if self.layer_sizes.iter().any(|&n| n == 0) {
            return Err(Error::Config("layer sizes must be positive".into()));
        }
        let out = *self.layer_sizes.last().unwrap();
        if out % 2 != 0 {
            return Err(Error::Config(format!(
                "output size must be even (two stacked sources), got {out}"
            )));
        }
        if let Recurrence::AtLayer(l) = self.recurrence {
            if l == 0 || l > self.num_hidden() {
                return Err(Error::Config(format!(
                    "recurrent layer {l} out of range 1..={}",
                    self.num_hidden()
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_hidden(&self) -> usize {
        self.layer_sizes.len() - 2
    }

    /// Spectrum bins per source, `F`.
    pub fn spectrum_bins(&self) -> usize {
        self.layer_sizes.last().unwrap() / 2
    }

    /// Whether hidden layer `l` (1-based) carries a recurrent connection.
    pub fn is_recurrent(&self, l: usize) -> bool {
        match self.recurrence {
            Recurrence::None => false,
            Recurrence::AtLayer(at) => l == at,
            Recurrence::AllLayers => true,
        }
    }

    fn hidden_size(&self, l: usize) -> usize {
        self.layer_sizes[l]
    }
}

/// Weights of one network.
///
/// `weights[l]` maps layer `l` activations into layer `l+1` and is stored
/// `(in, out)`; `recurrent[l]` is the optional self-connection of hidden
/// layer `l+1`; absent entries behave as zero matrices. Biases exist at
/// every layer and are zero-initialized so that zeroed biases reproduce
/// the bias-free forward equations exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct DrnnModel {
    arch: Architecture,
    weights: Vec<Array2<f64>>,
    recurrent: Vec<Option<Array2<f64>>>,
    biases: Vec<Array1<f64>>,
}

impl DrnnModel {
    /// All-zero parameters.
    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let n_layers = arch.layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(n_layers);
        let mut biases = Vec::with_capacity(n_layers);
        let mut recurrent = Vec::with_capacity(arch.num_hidden());
        for l in 0..n_layers {
            weights.push(Array2::zeros((arch.layer_sizes[l], arch.layer_sizes[l + 1])));
            biases.push(Array1::zeros(arch.layer_sizes[l + 1]));
            if l < arch.num_hidden() {
                recurrent.push(if arch.is_recurrent(l + 1) {
                    let m = arch.hidden_size(l + 1);
                    Some(Array2::zeros((m, m)))
                } else {
                    None
                });
            }
        }
        Ok(Self { arch, weights, recurrent, biases })
    }

    /// Seeded uniform initialization in `+-sqrt(6 / (fan_in + fan_out))`
    /// per matrix; biases start at zero.
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(arch)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for w in &mut model.weights {
            let bound = (6.0 / (w.nrows() + w.ncols()) as f64).sqrt();
            w.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        for u in model.recurrent.iter_mut().flatten() {
            let bound = (6.0 / (u.nrows() + u.ncols()) as f64).sqrt();
            u.mapv_inplace(|_| rng.random_range(-bound..bound));
        }
        Ok(model)
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn weight(&self, l: usize) -> &Array2<f64> {
        &self.weights[l]
    }

    pub fn recurrent_weight(&self, hidden_layer: usize) -> Option<&Array2<f64>> {
        self.recurrent[hidden_layer].as_ref()
    }

    pub fn bias(&self, l: usize) -> &Array1<f64> {
        &self.biases[l]
    }

    pub(crate) fn weight_mut(&mut self, l: usize) -> &mut Array2<f64> {
        &mut self.weights[l]
    }

    pub(crate) fn bias_mut(&mut self, l: usize) -> &mut Array1<f64> {
        &mut self.biases[l]
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.recurrent.iter().flatten().map(|u| u.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters as one vector, in the documented order: per hidden
    /// layer its input weights (row-major), recurrent weights when
    /// present, then bias; finally the output weights and bias.
    pub fn flatten(&self) -> Array1<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(|block| out.extend_from_slice(block));
        Array1::from_vec(out)
    }

    /// Overwrites all parameters from a flat vector laid out as
    /// [`Self::flatten`] produces.
    pub fn assign_flat(&mut self, flat: ArrayView1<f64>) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let data = flat.to_vec();
        let mut offset = 0usize;
        self.visit_mut(|block| {
            block.copy_from_slice(&data[offset..offset + block.len()]);
            offset += block.len();
        });
        Ok(())
    }

    /// Calls `f` on every parameter block in serialization order.
    pub(crate) fn visit<F: FnMut(&[f64])>(&self, mut f: F) {
        let hidden = self.arch.num_hidden();
        for l in 0..hidden {
            f(self.weights[l].as_slice().expect("contiguous"));
            if let Some(u) = &self.recurrent[l] {
                f(u.as_slice().expect("contiguous"));
            }
            f(self.biases[l].as_slice().expect("contiguous"));
        }
        f(self.weights[hidden].as_slice().expect("contiguous"));
        f(self.biases[hidden].as_slice().expect("contiguous"));
    }

    pub(crate) fn visit_mut<F: FnMut(&mut [f64])>(&mut self, mut f: F) {
        let hidden = self.arch.num_hidden();
        for l in 0..hidden {
            f(self.weights[l].as_slice_mut().expect("contiguous"));
            if let Some(u) = &mut self.recurrent[l] {
                f(u.as_slice_mut().expect("contiguous"));
            }
            f(self.biases[l].as_slice_mut().expect("contiguous"));
        }
        f(self.weights[hidden].as_slice_mut().expect("contiguous"));
        f(self.biases[hidden].as_slice_mut().expect("contiguous"));
    }
}

/// Everything a forward pass computed, kept frame-aligned for
/// backpropagation and inspection.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Per hidden layer: `T x m_l` pre-activations.
    pub preactivations: Vec<Array2<f64>>,
    /// Per hidden layer: `T x m_l` rectified activations.
    pub hidden: Vec<Array2<f64>>,
    /// First-source raw predictions, `T x F`.
    pub raw1: Array2<f64>,
    /// Second-source raw predictions, `T x F`.
    pub raw2: Array2<f64>,
    /// Soft mask per frame, present after a masked forward.
    pub mask: Option<Array2<f64>>,
    /// Masked first-source estimates.
    pub masked1: Option<Array2<f64>>,
    /// Masked second-source estimates.
    pub masked2: Option<Array2<f64>>,
}

impl ForwardTrace {
    pub fn num_frames(&self) -> usize {
        self.raw1.nrows()
    }

    /// Output predictions used by the configured objective: masked when
    /// the mask layer ran, raw otherwise.
    pub fn predictions(&self) -> (&Array2<f64>, &Array2<f64>) {
        match (&self.masked1, &self.masked2) {
            (Some(m1), Some(m2)) => (m1, m2),
            _ => (&self.raw1, &self.raw2),
        }
    }
}

/// Runs the network over a `T x d_in` input sequence without the mask
/// layer. `h0` optionally sets the initial hidden state of each hidden
/// layer (zeros by default). Recurrent layers evolve
/// `h_t = relu(W a_t + U h_{t-1} + b)`; non-recurrent layers treat every
/// frame independently.
pub fn forward(
    model: &DrnnModel,
    inputs: ArrayView2<f64>,
    h0: Option<&[Array1<f64>]>,
) -> Result<ForwardTrace> {
    let arch = model.arch();
    if inputs.ncols() != arch.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input dim {} does not match architecture input {}",
            inputs.ncols(),
            arch.input_dim()
        )));
    }
    if let Some(states) = h0 {
        if states.len() != arch.num_hidden() {
            return Err(Error::DimensionMismatch(format!(
                "h0 has {} states for {} hidden layers",
                states.len(),
                arch.num_hidden()
            )));
        }
        for (l, state) in states.iter().enumerate() {
            if state.len() != arch.hidden_size(l + 1) {
                return Err(Error::DimensionMismatch(format!(
                    "h0[{l}] has {} units, layer expects {}",
                    state.len(),
                    arch.hidden_size(l + 1)
                )));
            }
        }
    }

    let t_len = inputs.nrows();
    let hidden_count = arch.num_hidden();
    let mut preactivations = Vec::with_capacity(hidden_count);
    let mut hidden = Vec::with_capacity(hidden_count);
    let mut activations = inputs.to_owned();

    for l in 0..hidden_count {
        // Input-to-layer part for all frames at once.
        let mut pre = activations.dot(model.weight(l)) + model.bias(l);
        let h = if let Some(u) = model.recurrent_weight(l) {
            let mut h = Array2::zeros(pre.raw_dim());
            let mut prev: Array1<f64> = match h0 {
                Some(states) => states[l].clone(),
                None => Array1::zeros(pre.ncols()),
            };
            for t in 0..t_len {
                let rec = prev.dot(u);
                let mut pre_row = pre.row_mut(t);
                pre_row += &rec;
                let h_row = pre_row.mapv(relu);
                h.row_mut(t).assign(&h_row);
                prev = h_row;
            }
            h
        } else {
            pre.mapv(relu)
        };
        check_finite(&pre, l + 1)?;
        preactivations.push(pre);
        activations = h.clone();
        hidden.push(h);
    }

    let out = activations.dot(model.weight(hidden_count)) + model.bias(hidden_count);
    check_finite(&out, hidden_count + 1)?;
    let f_bins = arch.spectrum_bins();
    let raw1 = out.slice(s![.., 0..f_bins]).to_owned();
    let raw2 = out.slice(s![.., f_bins..]).to_owned();
    Ok(ForwardTrace {
        preactivations,
        hidden,
        raw1,
        raw2,
        mask: None,
        masked1: None,
        masked2: None,
    })
}

fn check_finite(x: &Array2<f64>, layer: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite activation at layer {layer}")));
    }
    Ok(())
}

/// Soft time-frequency mask for one frame:
/// `m_f = |y1_f| / (|y1_f| + |y2_f|)`, with an even 0.5 split where the
/// denominator vanishes.
pub fn soft_mask(y1_hat: ArrayView1<f64>, y2_hat: ArrayView1<f64>) -> Array1<f64> {
    ndarray::Zip::from(&y1_hat).and(&y2_hat).map_collect(|&a, &b| mask_bin(a, b))
}

#[inline]
fn mask_bin(y1: f64, y2: f64) -> f64 {
    let denom = y1.abs() + y2.abs();
    if denom < MASK_EPS {
        0.5
    } else {
        y1.abs() / denom
    }
}

/// Applies a mask and its complement to the mixture magnitudes of one
/// frame: `(m .* z, (1 - m) .* z)`. The two parts always sum to `z`.
pub fn apply_mask_separately(
    mask: ArrayView1<f64>,
    z: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if mask.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} bins, mixture has {}",
            mask.len(),
            z.len()
        )));
    }
    let s1 = &mask * &z;
    let s2 = &z - &s1;
    Ok((s1, s2))
}

/// Full forward pass with the mask layer: raw predictions feed the soft
/// mask, which is applied to the mixture magnitudes `z` (`T x F`). The
/// returned trace carries everything backpropagation needs.
pub fn masked_forward(
    model: &DrnnModel,
    inputs: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<ForwardTrace> {
    let mut trace = forward(model, inputs, None)?;
    apply_mask_layer(&mut trace, z)?;
    Ok(trace)
}

/// Runs the deterministic mask layer on an existing trace.
pub(crate) fn apply_mask_layer(trace: &mut ForwardTrace, z: ArrayView2<f64>) -> Result<()> {
    if z.dim() != trace.raw1.dim() {
        return Err(Error::DimensionMismatch(format!(
            "mixture magnitudes are {:?}, predictions are {:?}",
            z.dim(),
            trace.raw1.dim()
        )));
    }
    let mask = ndarray::Zip::from(&trace.raw1)
        .and(&trace.raw2)
        .map_collect(|&a, &b| mask_bin(a, b));
    let masked1 = &mask * &z;
    let masked2 = &z.to_owned() - &masked1;
    trace.mask = Some(mask);
    trace.masked1 = Some(masked1);
    trace.masked2 = Some(masked2);
    Ok(())
}
