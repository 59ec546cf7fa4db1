//! Robust training under noisy labels.
//!
//! The crate bundles everything needed to run temporal calibrated
//! regularization (a reflection loss against delayed, squeezed predictions)
//! next to the usual baselines on small synthetic problems:
//!
//! * [`numerics`]: simplex operations (softmax, squeeze, cross entropy).
//! * [`model`]: a fully-connected ReLU classifier with manual backprop and SGD.
//! * [`noise`]: transition matrices and label/feature corruption.
//! * [`losses`]: objectives and their gradients with respect to the logits.
//! * [`methods`]: the training methods behind a common trait, looked up by name.
//! * [`trainer`]: the epoch loop, prediction store, metrics and tracing.
//! * [`data`]: synthetic datasets, stratified splits and the dataset file format.

// Validation uses `!(x > bound)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod losses;
pub mod methods;
pub mod model;
pub mod noise;
pub mod numerics;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
