//! Deterministic f64 network engine for fixed sequential topologies.
//!
//! Activations are `batch × features` matrices. Convolutional layers use a
//! channel-last layout: a row holding `length` positions of `channels`
//! values stores position `l`, channel `c` at column `l * channels + c`, so a
//! flatten is a no-op on the data.

mod layers;
mod loss;
mod optim;
mod params;

pub use layers::{Activation, ForwardCache, LayerSpec, Mode, Sequential};
pub use loss::{loss, LossKind, PROB_EPS};
pub use optim::{Adam, AdamConfig, EarlyStopping, PlateauScheduler};
pub use params::{Parameters, Tensor};
