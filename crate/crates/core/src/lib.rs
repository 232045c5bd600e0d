//! Scattering-layer removal from a single image.
//!
//! Removes fog, haze, sandstorm, and underwater veiling in two stages:
//! transmission estimation with a selective-neighbor lower-bound scheme,
//! then transmission-aware latent-image restoration. Both stages minimize
//! a quadratic data term plus a non-local total-variation regularizer via
//! per-pixel weighted-median relaxation, which keeps noise from being
//! amplified where the medium is dense.
//!
//! Modules:
//! - [`image`]: pixel containers, gamma transforms, intensity split, PSNR
//! - [`io`]: PNG / PPM / PFM reading and writing
//! - [`scatter`]: the physical model, lower bound, and error predictors
//! - [`airlight`]: automatic and scribble-based backscatter estimation
//! - [`structure`]: texture-suppressing structure map for guided weights
//! - [`transmission`]: log-transmission solver (stage one)
//! - [`latent`]: latent-image solver (stage two)
//! - [`pipeline`]: end-to-end orchestration, full-color and intensity-only
//! - [`harness`]: synthetic-fog benchmark with PSNR tables

pub mod airlight;
pub mod error;
pub mod harness;
pub mod image;
pub mod io;
pub mod latent;
pub mod pipeline;
pub mod scatter;
pub mod structure;
pub mod transmission;

pub use error::{Error, Result};
