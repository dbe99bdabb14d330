//! Numerical toolkit for the resonance structure of the subcritical almost
//! Mathieu operator.
//!
//! The crate is organised bottom-up:
//!
//! - [`circle`]: continued fractions, certified orbit points `kα mod 1`,
//!   separation and discrepancy scans on the circle.
//! - [`resonance`]: windowed resonance strength and hit lists.
//! - [`cantor`]: the annulus Cantor construction with full audits.
//! - [`mass`]: the mass distribution on a built tree and its ball-mass
//!   certificate.
//! - [`gauge`]: logarithmic gauges, cover sums and tail sums.
//! - [`amo`]: periodic approximant spectra, the integrated density of
//!   states and the cover transport between energy and circle side.

pub mod amo;
pub mod cantor;
pub mod circle;
pub mod error;
pub mod gauge;
pub mod mass;
pub mod resonance;
mod serde_util;

pub(crate) use serde_util::{serde_dec, serde_dec_vec, serde_f64};

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
