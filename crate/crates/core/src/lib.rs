//! Core algorithms for measuring the representation quality of small
//! classifiers through leave-one-class-out training.
//!
//! The crate is `no_std` compatible (it needs `alloc`); everything that
//! touches the filesystem, threads or the command line lives in the
//! `rawzero-lab` companion crate.
//!
//! Module map:
//!
//! * [`tensor`] and [`nn`]: a dense `f64` tensor, layer stack with
//!   reverse-mode gradients, and a training loop.
//! * [`data`]: datasets, class exclusion and super-class grouping.
//! * [`defence`]: input and label transforms used as defences.
//! * [`rawzero`] and [`protocol`]: the soft-label metrics (DBM, AM) and
//!   the experiment that produces their inputs.
//! * [`attack`]: FGM, BIM, PGD, DeepFool and NewtonFool plus the
//!   adversarial measurements.
//! * [`stats`]: Pearson correlation with exact two-tailed p-values.
//! * [`linalg`] and [`projection`]: Jacobi eigensolver, MDS, IsoMap,
//!   t-SNE and spectral embedding.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod attack;
pub mod data;
pub mod defence;
mod error;
pub mod linalg;
pub mod nn;
pub mod projection;
pub mod protocol;
pub mod rawzero;
pub mod rng;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
