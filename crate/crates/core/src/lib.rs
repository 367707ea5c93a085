//! Progressive single-image scene expansion on top of a differentiable
//! Gaussian-splat rasterizer.

pub mod cli;
pub mod depth;
pub mod error;
pub mod eval;
pub mod expand;
pub mod geometry;
pub mod interfaces;
pub mod optimize;
pub mod rng;
pub mod splat;
pub mod trajectory;

pub use error::{Error, Result, Stage};
