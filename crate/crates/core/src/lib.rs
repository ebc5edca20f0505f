//! Fourier phase retrieval toolkit.
//!
//! Measurement models (classical, masked, STFT, FROG, 2D), ambiguity analysis
//! through autocorrelation root pairing, and recovery algorithms: alternating
//! projections, gradient descent, semidefinite relaxations, closed-form STFT
//! recovery, minimum-phase cepstral recovery and greedy sparse search.

pub mod altproj;
pub mod ambiguity;
pub mod bench;
pub mod error;
pub mod forward;
pub mod fourier;
pub mod gespar;
pub mod gradient;
pub mod minphase;
pub mod poly;
pub mod sdp;
pub mod signal;
pub mod stft_direct;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
