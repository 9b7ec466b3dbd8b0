//! Signal path and measurement toolkit for a single-codebook mel-spectrogram codec.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. All operations are pure functions over owned, immutable values:
//!
//! * [`signal`]: windowed STFT, HTK mel filterbank, log-mel features and
//!   squared-window overlap-add ISTFT.
//! * [`vq`]: 2D patch extraction, k-means codebook fitting, nearest-code
//!   quantization and token-rate accounting.
//! * [`losses`]: L1 mel, convolutional feature (perceptual), Gram-matrix,
//!   feature-matching and multiscale STFT distances.
//! * [`vocoder`]: ridge pseudo-inverse of the mel filterbank, fixed-phase and
//!   Griffin-Lim synthesis, and the Snake activation.
//! * [`theory`]: Lipschitz bounds for the ISTFT and the quantize-then-vocode
//!   pipeline, checked numerically.
//! * [`metrics`]: LSD, mel distance, STFT distance and mel MAE.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

mod error;
mod fft;
pub mod hash;
pub mod linalg;
pub mod losses;
pub mod metrics;
pub mod signal;
pub mod testsignal;
pub mod theory;
pub mod vocoder;
pub mod vq;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub(crate) mod prelude {
    pub(crate) use alloc::boxed::Box;
    pub(crate) use alloc::string::{String, ToString};
    pub(crate) use alloc::vec;
    pub(crate) use alloc::vec::Vec;
    #[allow(unused_imports)]
    pub(crate) use num_traits::Float;
}
