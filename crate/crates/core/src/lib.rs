//! Core building blocks for single-image HDR reconstruction from exposure
//! stacks: image and stack types, file IO, resampling, a synthetic
//! exposure simulator, inverse-response recovery and radiance merging,
//! global tone mapping, and image-quality metrics.

pub mod dataset;
pub mod error;
pub mod fusion;
pub mod image;
pub mod metrics;
pub mod resample;
pub mod rgbe;
pub mod synth;
pub mod tonemap;

pub use crate::error::{Error, Result};
pub use crate::image::{EvStep, ImageBuf, LdrImage, LdrStack, RadianceMap};
