//! Desk-scale human parsing by active template regression.
//!
//! A person image is decomposed into pixel-level semantic regions in three
//! stages: per-label mask templates learned by non-negative matrix
//! factorization reconstruct a normalized mask from regressed coefficients;
//! a second pooling-free regressor predicts each label's position, scale
//! and visibility; the morphed masks are fused with a seeded background
//! color model and smoothed over graph-based super-pixels into the final
//! label map.

pub mod combine;
pub mod dataset;
pub mod dict;
pub mod error;
pub mod image;
pub mod morphology;
pub mod net;
pub mod normalize;
pub mod regression;
pub mod segmentation;
pub mod tensor;

mod linalg;

pub use error::{Error, Result};
