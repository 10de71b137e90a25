//! Channel estimation toolkit for indoor visible light communication with
//! large LED and photodiode arrays.
//!
//! The crate covers the full experimental loop:
//!
//! * [`channel`] builds line-of-sight Lambertian channel matrices from a room
//!   and receiver geometry.
//! * [`imaging`] reinterprets a channel matrix as a grayscale image,
//!   normalizes it, corrupts it with Gaussian noise, and scores estimates
//!   with peak signal-to-noise ratio.
//! * [`tensor`] is a small CPU tensor engine with the forward and backward
//!   passes the denoiser needs.
//! * [`model`] assembles those primitives into a noise-level-conditioned
//!   convolutional denoiser operating on subsampled image planes.
//! * [`training`] generates randomized-scene datasets and trains the
//!   denoiser with Adam.
//! * [`mmse`] is the patchwise linear minimum-mean-square-error baseline.
//! * [`eval`] runs noise-sensitivity sweeps and method comparisons and
//!   writes them as CSV.
//! * [`dataset`], [`config`], and [`cli`] cover persistence, flat key=value
//!   configuration, and the command-line front end.
//!
//! Start with the examples directory for end-to-end usage; each example
//! exercises one capability with a small, fast configuration.

pub mod channel;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod mmse;
pub mod model;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
