//! Jointly learned microphone selection and speech enhancement for ad-hoc
//! microphone arrays.
//!
//! The crate is organised bottom-up:
//!
//! * [`dsp`]: STFT analysis/synthesis, windows, SNR mixing, WAV I/O.
//! * [`scene`]: image-source room simulation and scene generation.
//! * [`nn`]: a small reverse-mode autodiff tape, layers and Adam.
//! * [`model`]: encoder, attention-based request loop, mask decoder, losses
//!   and the training loop.
//! * [`eval`]: STOI, communication-cost accounting and experiment harnesses.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used on each path.

pub mod dsp;
pub mod eval;
pub mod model;
pub mod nn;
pub mod scene;
mod error;
mod scalar;

pub use error::{Error, Result};
pub use scalar::{dot, Scalar};

pub type Spectrogram32 = dsp::Spectrogram<f32>;
pub type Spectrogram64 = dsp::Spectrogram<f64>;

pub type Model32 = model::Network<f32>;
pub type Model64 = model::Network<f64>;
