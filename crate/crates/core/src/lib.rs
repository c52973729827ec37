//! Autoencoder-gated lifelong learning.
//!
//! Every task gets an undercomplete autoencoder ("gate") and an expert
//! classifier. At test time each gate reconstructs the sample, the
//! reconstruction errors go through a temperature softmax, and only the expert
//! behind the most confident gate is loaded. When a new task arrives the gates
//! of earlier tasks measure how related it is to what was learned before; the
//! most related expert becomes the starting point, trained either by
//! fine-tuning or by learning-without-forgetting depending on that relatedness.
//!
//! The crate is `no_std` (with `alloc`). File formats, the model store and the
//! command line live in the `expertgate` companion crate.
//!
//! Module map:
//!
//! - [`nn`]: dense layers, losses, SGD and finite-difference gradient checks
//! - [`preprocess`]: shared reference standardization followed by a sigmoid
//! - [`gate`]: the autoencoder gate and its reconstruction error
//! - [`gating`]: routing probabilities, expert selection and task relatedness
//! - [`experts`]: per-task MLP experts, fine-tuning and LwF training
//! - [`pipeline`]: sequential task learning, the lazy expert registry and the
//!   evaluation baselines
//! - [`synth`]: deterministic synthetic task generators
#![cfg_attr(not(feature = "std"), no_std)]
#![warn(missing_debug_implementations)]

extern crate alloc;

mod error;
pub mod experts;
pub mod gate;
pub mod gating;
pub mod matrix;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod split;
pub mod synth;

pub use error::{Error, Result};
pub use experts::{ExpertModel, LabeledDataset, TrainMethod};
pub use gate::{AutoencoderGate, GateTrainReport};
pub use gating::{GateEnsemble, RelatednessReport, RoutingDecision, TransferMethod};
pub use matrix::{Matrix, Scalar};
pub use nn::{Activation, DenseLayer, SgdConfig};
pub use pipeline::{ModelRegistry, PipelineConfig, SequenceReport};
pub use preprocess::ReferenceStats;
