//! Training objectives.
//!
//! The squared-error objective measures predictions against both clean
//! sources; the discriminative variant subtracts gamma-weighted
//! cross-source terms so that a prediction resembling the *other* source
//! is penalized. At `gamma = 0` the two coincide.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Objective configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Cross-source penalty weight in `[0, 1]`.
    pub gamma: f64,
    /// When true the loss reads the masked outputs; when false it reads
    /// the raw predictions and masking happens only at inference.
    pub use_masking_layer: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { gamma: 0.05, use_masking_layer: true }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "gamma must lie in [0, 1], got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

fn check_dims(
    p1: ArrayView2<f64>,
    p2: ArrayView2<f64>,
    y1: ArrayView2<f64>,
    y2: ArrayView2<f64>,
) -> Result<()> {
    let d = p1.dim();
    if p2.dim() != d || y1.dim() != d || y2.dim() != d {
        return Err(Error::DimensionMismatch(format!(
            "predictions {:?}/{:?} vs targets {:?}/{:?}",
            p1.dim(),
            p2.dim(),
            y1.dim(),
            y2.dim()
        )));
    }
    Ok(())
}

/// Squared-error objective
/// `J = 1/2 sum_t (||p1_t - y1_t||^2 + ||p2_t - y2_t||^2)`.
pub fn loss_mse(
    p1: ArrayView2<f64>,
    p2: ArrayView2<f64>,
    y1: ArrayView2<f64>,
    y2: ArrayView2<f64>,
) -> Result<f64> {
    check_dims(p1, p2, y1, y2)?;
    let mut acc = 0.0;
    for (((a, b), c), d) in p1.iter().zip(y1.iter()).zip(p2.iter()).zip(y2.iter()) {
        let e1 = a - b;
        let e2 = c - d;
        acc += e1 * e1 + e2 * e2;
    }
    Ok(0.5 * acc)
}

/// Discriminative objective
/// `J = 1/2 sum_t (||y1-p1||^2 + ||y2-p2||^2
///                 - gamma ||y1-p2||^2 - gamma ||y2-p1||^2)`.
pub fn loss_discriminative(
    p1: ArrayView2<f64>,
    p2: ArrayView2<f64>,
    y1: ArrayView2<f64>,
    y2: ArrayView2<f64>,
    gamma: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Config(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    check_dims(p1, p2, y1, y2)?;
    let mut own = 0.0;
    let mut cross = 0.0;
    for (((a, b), c), d) in p1.iter().zip(y1.iter()).zip(p2.iter()).zip(y2.iter()) {
        let e1 = b - a;
        let e2 = d - c;
        own += e1 * e1 + e2 * e2;
        let x1 = b - c; // y1 - p2
        let x2 = d - a; // y2 - p1
        cross += x1 * x1 + x2 * x2;
    }
    Ok(0.5 * (own - gamma * cross))
}

/// Gradients of the discriminative objective with respect to the two
/// prediction matrices. `gamma = 0` yields the squared-error gradients.
pub(crate) fn loss_gradients(
    p1: ArrayView2<f64>,
    p2: ArrayView2<f64>,
    y1: ArrayView2<f64>,
    y2: ArrayView2<f64>,
    gamma: f64,
) -> (Array2<f64>, Array2<f64>) {
    // dJ/dp1 = (p1 - y1) - gamma (p1 - y2); symmetric for p2.
    let g1 = (&p1 - &y1) - (&p1 - &y2) * gamma;
    let g2 = (&p2 - &y2) - (&p2 - &y1) * gamma;
    (g1, g2)
}
