//! Differentiable CPU Gaussian splatting with paired-dropout consistency
//! regularization for sparse-view scene optimization.

pub mod config;
pub mod dropout;
pub mod error;
pub mod harness;
pub mod image;
pub mod imageops;
pub mod regularize;
pub mod render;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};
pub use image::Image;
