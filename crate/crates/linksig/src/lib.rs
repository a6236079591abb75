//! Desk-scale study of link-signature secret keys: how spatially correlated
//! wireless channels let an eavesdropper infer them, and how cooperative
//! helpers harden the extraction.
//!
//! The crate is organised around one pipeline:
//!
//! * [`corrmodel`] evaluates the normalized cross-correlation between a
//!   legitimate link and an attacker link for two scatterer-ring geometries
//!   (outdoor cellular, indoor office) by adaptive 2-D quadrature.
//! * [`chansynth`] draws scatterer fields, synthesizes location-correlated
//!   channel impulse responses, estimates the same correlation by Monte
//!   Carlo (the independent oracle for `corrmodel`), and reads/writes the
//!   trace CSV interchange format.
//! * [`keyext`] quantizes an impulse response into 5-bit levels, cuts key
//!   bits, and reconciles keys between two parties.
//! * [`sia`] mounts statistical inference attacks: train a learner on
//!   surveyed links, infer the target signature, and count how many guesses
//!   the true quantization levels take.
//! * [`fbch`] runs the forward-backward cooperative key extraction protocol
//!   with helpers, attacks it with the same learners, and evaluates the
//!   spatial Poisson analysis of close attacker placement.
//!
//! A narrative guide with runnable snippets lives under `book/`; its
//! chapters compile as doc-tests of this crate (see [`guide`]).

pub mod chansynth;
pub mod corrmodel;
mod error;
pub mod fbch;
pub mod geometry;
pub mod guide;
pub mod keyext;
pub mod quad;
pub mod sia;
pub mod textfmt;

pub use error::Error;
pub use geometry::{Environment, GeometryConfig, Point};

/// Shorthand used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Speed of light in m/s used for path-delay binning.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// Derive a per-trial RNG seed from a master seed and a stable trial index.
///
/// SplitMix64 finalizer over `master ^ f(index)`; parallel workers can hand
/// out trial seeds in any order without changing any result.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
