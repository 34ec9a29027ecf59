//! Softmax-pooling hybrid (SPH) classification over pre-softmax responses.
//!
//! Given the pre-softmax responses of any trained `K`-class model, this crate
//! characterizes how every response unit reacts to every class, and replaces
//! the softmax decision on low-confidence samples with a pooled likelihood
//! over all units:
//!
//! * [`dataset`]: the RSP-CSV response format and validation/test splitting.
//! * [`scoring`]: softmax scores, predictions and the confidence gate.
//! * [`dist`]: the asymmetric-Gaussian class-response array.
//! * [`calibration`]: weight matrix and class-trust mask.
//! * [`pooling`]: Mahalanobis distances, veto and pooled prediction.
//! * [`hybrid`]: fitting, prediction, evaluation and model documents.
//! * [`sweep`]: hyperparameter grid sweeps and selection.
//! * [`metrics`]: error reduction, waste curves and reports.
//! * [`synth`]: synthetic data with an exact Bayes oracle.

pub mod calibration;
pub mod dataset;
pub mod dist;
pub mod error;
mod extended_float;
pub mod hybrid;
pub mod matrix;
pub mod metrics;
pub mod pooling;
pub mod scoring;
pub mod stats;
pub mod sweep;
pub mod synth;

pub use calibration::{ClassMask, HyperParams, WeightMatrix};
pub use dataset::{LabeledResponses, SplitSpec};
pub use dist::{CenterStatistic, DistributionArray, ScoreRange};
pub use error::{Error, Result};
pub use hybrid::{EvalReport, OutcomeRoute, PredictionOutcome, SphModel};
pub use matrix::Matrix;
pub use sweep::{SelectionPolicy, SweepGrid, SweepResult};
pub use synth::GeneratorSpec;
