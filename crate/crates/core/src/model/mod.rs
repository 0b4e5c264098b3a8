//! Per-group coordinate network: SIREN MLP → patch feature → per-frame
//! positional offsets → convolutional upsampling head → patch volume.

mod config;
mod network;

pub use config::{HeadBlock, HeadSpec, ModelConfig};
pub use network::{
    draw_noise, group_loss, positional_encode, ConvLayer, GroupModel, LossBreakdown, MlpLayer,
    ModelGrads, WeightMode,
};
