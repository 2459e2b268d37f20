//! The MLPST model: per-patch FC, SpatialMixer, TemporalMixers, fusion and
//! output head, with exact reverse-mode gradients.

pub mod checkpoint;
mod count;
mod layer;
mod model;

pub use count::{param_count, ParamCount};
pub use layer::{mixer_layer_bwd, mixer_layer_fwd, MixerLayerCache, MixerLayerParams, MixerStack, StackCache};
pub use model::{
    forecast, fuse, model_backward, model_backward_into, model_forward, output_head,
    spatial_mixer_fwd, temporal_mixer_fwd, ForwardCache, ModelConfig, ModelParams, SpatialCache,
    TemporalStacks, Variant,
};
