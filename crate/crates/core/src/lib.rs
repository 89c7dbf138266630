//! Dual-pore segmentation of tomography slice stacks.
//!
//! The crate covers the whole workflow: classical label generation
//! ([`masks`]), synthetic specimens with exact ground truth ([`phantom`]),
//! training-set augmentation ([`augment`]), a from-scratch fully
//! convolutional encoder-decoder with hand-written backward passes ([`nn`]),
//! and segmentation / porosity metrics ([`metrics`]).

pub mod augment;
pub mod config;
pub mod connectivity;
pub mod error;
pub mod image;
pub mod io;
pub mod masks;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod threshold;

#[cfg(feature = "cli")]
pub mod cli;

pub use error::{Error, Result};
pub use image::{BinaryMask, Class, GrayImage, ImageStack, LabelMap};
