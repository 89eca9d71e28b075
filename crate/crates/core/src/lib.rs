//! Mean-Teacher semi-supervised indoor localization on Wi-Fi RSSI fingerprints.
//!
//! The crate covers the whole pipeline for UJIIndoorLoc-format data:
//!
//! - [`data`]: CSV ingest, validation and the deterministic splits used by the
//!   hybrid-database and online scenarios.
//! - [`ap_select`]: unique-value AP selection and column projection.
//! - [`preprocess`]: RSSI normalization, label encoding and noise injection.
//! - [`nn`]: a small deterministic f64 network engine (dense, 1D conv,
//!   activations, losses, Adam, plateau scheduling, early stopping).
//! - [`models`]: the SIMO-DNN and CNNLoc multi-head architectures.
//! - [`mean_teacher`]: supervised pre-training and student/teacher training.
//! - [`evaluate`]: EvAAL error, success rate and relative improvement.
//! - [`harness`]: end-to-end experiment runners used by the `mtwifi` binary.

pub mod ap_select;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluate;
pub mod harness;
pub mod mean_teacher;
pub mod models;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod synthetic;

pub use ap_select::{apply_mask, build_mask, SelectionMask};
pub use checkpoint::{Checkpoint, TrainedModel};
pub use data::{Dataset, FingerprintRecord, LocationLabel, RecordMeta, Role};
pub use error::{Error, Result};
pub use evaluate::{evaal, improvement, EvalReport, ImprovementReport, Prediction};
pub use mean_teacher::{LossBreakdown, SslConfig};
pub use models::{ModelKind, ModelSpec};
pub use nn::Parameters;
pub use preprocess::{CoordConvention, CoordScaler, EncodedBatch, NoiseConfig, NoiseKind};
pub use rng::Rng;

/// Number of WAP columns in a raw UJIIndoorLoc file.
pub const RAW_AP_COUNT: usize = 520;

/// RSSI value used by UJIIndoorLoc for "AP not detected".
pub const NOT_DETECTED: f64 = 100.0;
