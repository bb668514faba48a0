//! Physics-based shadow analysis.
//!
//! - [`chroma`]: log-chromaticity, entropy-minimizing invariant angle search
//!   and shadow-free chromaticity with illumination compensation.
//! - [`mask`]: soft shadow masks, affinity-weighted boundaries and the
//!   boundary-smoothness loss.
//! - [`losses`]: feature, domain-classification, adversarial, consistency and
//!   identity losses, class-activation attention and the weighted total.
//! - [`synth`]: Mondrian scenes with ground-truth invariant angle, shadow-free
//!   image and soft mask.
//! - [`eval`]: region-wise MAE in CIE Lab, PSNR and a dataset runner.
//! - [`gradcheck`]: finite-difference verification of every analytic gradient.
//! - [`image`], [`io`], [`tensor`]: containers, PNG/PPM IO and the SPTN
//!   tensor format.
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod chroma;
pub mod cli;
pub mod error;
pub mod eval;
pub mod features;
pub mod gradcheck;
pub mod image;
pub mod io;
pub mod losses;
pub mod mask;
pub mod synth;
pub mod tensor;

pub use crate::error::{Error, Result};
pub use crate::image::{FeatureMap, Image, SoftMask};

/// Version string embedded in every JSON output.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
