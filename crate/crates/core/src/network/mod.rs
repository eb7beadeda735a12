//! Layers, the symmetric stacked autoencoder and its checkpoint format.

pub mod checkpoint;
mod conv;
pub mod layer;
pub mod sae;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layer::{backward_all, chain_shape, forward_all, infer_all, Activation, Cache, ConvSpec, Layer, LayerSpec, Shape3};
pub use sae::{AutoencoderSpec, StackedAutoencoder, SubAe, UnitSpec};
