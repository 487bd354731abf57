//! Wavelet packet content operators.
//!
//! A positive semidefinite operator `R` is split along a packet tree into
//! positive blocks `C_w(R) = R^{1/2} P_w R^{1/2}`. The crate builds the trees
//! ([`tree`]), the blocks and their cylinder masses ([`content`]), greedy
//! extraction with geometric decay envelopes ([`greedy`]), and a patch
//! denoiser that keeps the heaviest packet blocks ([`denoise`]).

pub mod cli;
pub mod content;
pub mod denoise;
pub mod error;
pub mod filters;
pub mod greedy;
pub mod linalg;
pub mod pgm;
pub mod sampling;
pub mod selftest;
pub mod tree;

pub use error::{Error, Result};
