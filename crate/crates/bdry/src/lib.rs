//! Boundary-aware feature attributions for small ReLU classifiers.
//!
//! This crate computes gradient-based feature attributions (saliency maps,
//! integrated gradients, smooth gradients, and their decision-boundary
//! variants), finds nearby decision boundaries with an ensemble of
//! gradient-based attacks, validates the search against an exact low-dimension
//! geometry oracle, scores attributions against bounding boxes, and runs a
//! set of desk-scale alignment, localization, correlation, and smoothing
//! studies on toy models. The `bdry` binary exposes all of it on the command
//! line.

pub mod attack;
pub mod attribution;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod oracle;
pub mod render;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
