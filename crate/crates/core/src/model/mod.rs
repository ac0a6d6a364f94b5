//! Spiking layers, network assemblies and checkpoints.

pub mod bilinear;
pub mod checkpoint;
pub mod layer;
pub mod network;

pub use bilinear::{bilinear_upsample_2x, bilinear_upsample_2x_adjoint};
pub use checkpoint::Checkpoint;
pub use layer::{
    spiking_conv_forward, spiking_upconv_forward, LayerCache, LayerConfig, LayerKind, LayerWeights,
};
pub use network::{
    count_flops, count_params, forward, forward_with, ExecMode, ForwardCaches, NetworkSpec,
    NetworkWeights, PassCache, Variant,
};
