//! Tied-weight auto-encoders with a contraction penalty, the usual comparison
//! models (plain, weight-decay and denoising auto-encoders, a binary RBM), and
//! the measurement battery used to study how strongly a learned feature map
//! contracts its input space.
//!
//! The crate is `no_std` + `alloc`: everything in here is pure computation on
//! `f64` buffers. File formats, CSV reports and the command-line front end live
//! in the companion `cae-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod analysis;
pub mod daelink;
pub mod data;
pub mod error;
pub mod finitediff;
pub mod matrix;
pub mod model;
pub mod rbm;
pub mod rng;
pub mod svd;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
pub use rng::Rng;
