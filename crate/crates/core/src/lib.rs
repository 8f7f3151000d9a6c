//! Unsupervised texture segmentation.
//!
//! Two phases: (1) learn a filter dictionary from randomly sampled, globally
//! normalized, ZCA-whitened image patches with spherical k-means; (2) slide
//! windows over the target image, pool rectified filter responses into one
//! vector per window, cluster those vectors with conventional k-means, and
//! project cluster labels back onto pixels. Multithreshold Otsu and
//! per-pixel k-means baselines plus NMI scoring round out the toolkit.
//!
//! All numeric code is generic over the scalar type ([`Scalar`]: f32 or
//! f64); the aliases below fix the common precisions.

pub mod baselines;
pub mod clustering;
pub mod error;
pub mod evaluation;
pub mod features;
pub mod imagegrid;
pub mod linalg;
pub mod model;
pub mod patching;
pub mod scalar;
pub mod spherical;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ImageGridF64 = imagegrid::ImageGrid<f64>;
pub type ImageGridF32 = imagegrid::ImageGrid<f32>;
pub type PatchMatrixF64 = patching::PatchMatrix<f64>;
pub type PatchMatrixF32 = patching::PatchMatrix<f32>;
pub type DictionaryF64 = spherical::Dictionary<f64>;
pub type DictionaryF32 = spherical::Dictionary<f32>;
pub type FeatureFieldF64 = features::FeatureField<f64>;
pub type FeatureFieldF32 = features::FeatureField<f32>;
pub type KMeansModelF64 = clustering::KMeansModel<f64>;
pub type KMeansModelF32 = clustering::KMeansModel<f32>;
pub type PipelineModelF64 = model::PipelineModel<f64>;
pub type PipelineModelF32 = model::PipelineModel<f32>;
