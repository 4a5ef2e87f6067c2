//! U-Net runtime: tensors, operators with reverse-mode gradients, the two
//! fixed architectures and parameter files.

mod checkpoint;
mod graph;
pub mod ops;
mod tensor;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, from_checkpoint, load_params, load_params_bytes, save_params,
    CheckpointHeader,
};
pub use graph::{
    build_microscopy_unet, build_mri_unet, Activation, ConvParams, LayerKind, LayerShape, LayerSpec, NetworkGraph,
    ResidualSource, Variant,
};
pub use tensor::{Real, Tensor4};
