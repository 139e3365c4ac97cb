//! Asynchronous event-camera perception with spiking neural networks.
//!
//! The crate covers the whole path from an event stream to a dodge command:
//!
//! - [`event`]: event streams, EVS1/CSV files, dense event fields and a
//!   synthetic contrast-threshold scene generator.
//! - [`kep`]: key-event-point filtering (centroid clustering plus
//!   KL-constrained subsampling).
//! - [`snn`]: TS-LIF networks with a dense and an event-driven forward pass.
//! - [`train`]: spike-count loss, response kernels, surrogate gradients and
//!   the training loop.
//! - [`deploy`]: integer weight quantization, AER address sequences and
//!   action decoding.
//! - [`harness`]: dataset synthesis, experiment runs and reports.
//!
//! Per-sample work in training and evaluation runs on all available cores;
//! set `NEURODODGE_THREADS` to cap the thread count. Results do not depend
//! on it.

pub mod deploy;
pub mod error;
pub mod event;
pub mod harness;
pub mod kep;
pub mod parallel;
pub mod snn;
pub mod train;

pub use error::{Error, Result};
