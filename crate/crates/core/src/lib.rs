//! Autoencoders trained with global and local intrinsic-dimension constraints.
//!
//! The crate estimates the participation-ratio intrinsic dimension of batches
//! (GID) and of per-sample feature maps (LID), adds both as penalties to the
//! reconstruction objective of a symmetric stacked autoencoder, trains it
//! layerwise and then end to end, and scores the learned embeddings with
//! KNN classification and K-means clustering.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the element type used by the CLI and the tests.

pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod id;
pub mod loss;
pub mod network;
pub mod scalar;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

pub type Tensor64 = Tensor<f64>;
pub type Tensor32 = Tensor<f32>;
pub type Autoencoder64 = network::StackedAutoencoder<f64>;
