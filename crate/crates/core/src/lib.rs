//! Detection of sparse stochastic signals by a sensor network that sends one
//! bit per sensor to a fusion center.
//!
//! Each sensor thresholds the magnitude of its observation (equivalently its
//! local likelihood ratio) and the fusion center applies a locally most
//! powerful test to the bits. The crate covers the signal model, the
//! quantizers, the fusion statistics, threshold design by Fisher
//! information, and the Monte Carlo machinery used to check all of it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detect;
pub mod error;
pub mod experiment;
pub mod fisher;
pub mod math;
pub mod pso;
pub mod quantize;
pub mod rng;
pub mod signal;
pub mod stats;

pub use detect::{DetectorKind, DetectorSpec, FusionRule};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, RocCurve};
pub use pso::{OptResult, PsoConfig};
pub use quantize::{QuantizerBank, QuantizerKind};
pub use signal::{Generator, Hypothesis, NetworkModel, SignalModel};
