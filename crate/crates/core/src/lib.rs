//! Mode-aware non-linear Tucker autoencoders for dense high-order tensors.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense row-major tensors, unfold/fold, mode products.
//! * [`autodiff`]: a small reverse-mode tape over the ops the models use.
//! * [`models`]: the mode-aware autoencoder, the flattening (DAE) and
//!   Tucker-factorised (TFNN) baselines, truncated HOSVD and the
//!   parameter/FLOP counters.
//! * [`datagen`] and [`io`]: synthetic Tucker data, corruption and
//!   splitting, and the `NTT1` tensor file format.
//! * [`training`]: Adam, the training loop and checkpoints.
//! * [`metrics`]: NMSE, k-means and external clustering indices.
//! * [`experiments`]: config-driven protocols behind the `ntae` CLI.

pub mod autodiff;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::DenseTensor;
