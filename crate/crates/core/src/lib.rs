//! Semantic continuity evaluation for saliency-map explainers.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f32`, the precision used for production runs.

pub mod continuity;
pub mod error;
pub mod experiment;
pub mod explain;
pub mod image;
pub mod metrics;
pub mod nn;
pub mod report;
pub mod scalar;
pub mod shapegen;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f32>;
pub type Image = image::Image<f32>;
pub type LabeledImage = image::LabeledImage<f32>;
pub type ModelSnapshot = nn::ModelSnapshot<f32>;
pub type ForwardTrace = nn::ForwardTrace<f32>;
pub type VariationSeries = shapegen::VariationSeries<f32>;
pub type SaliencyMap = explain::SaliencyMap<f32>;
pub type SeriesEvaluation = continuity::SeriesEvaluation;
