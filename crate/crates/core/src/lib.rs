//! Monaural source separation toolkit.
//!
//! Separates two additively mixed sources from a single channel with deep
//! (recurrent) neural networks whose last layer is a soft time-frequency
//! mask, trained end to end against clean-source spectra with either a
//! squared-error or a discriminative objective. Ships with a
//! generalized-KL NMF baseline, an energy-decomposition evaluation suite
//! (SDR/SIR/SAR and length-weighted aggregates), and an experiment
//! harness with synthetic corpora so the whole pipeline is testable
//! without licensed datasets.
//!
//! Module map:
//! - [`signal`]: STFT analysis/synthesis, features, mixing, WAV I/O.
//! - [`model`]: network architectures, forward passes, the mask layer,
//!   and the model file format.
//! - [`training`]: objectives, exact gradients through time and the mask
//!   layer, sequence chopping, and the quasi-Newton trainer.
//! - [`nmf`]: the factorization baseline.
//! - [`eval`]: separation quality metrics.
//! - [`harness`]: experiment configs, synthetic corpora, manifests, and
//!   the pipelines behind the CLI.

pub mod container;
pub mod error;
pub mod eval;
pub mod harness;
pub mod model;
pub mod nmf;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
