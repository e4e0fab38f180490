//! Purely attention-based patch regressor: overlapping patch embedding,
//! positional and class tokens, a pre-norm transformer encoder, a sigmoid
//! regression head, and cross-modality adaptation of pretrained weights.

mod adapt;
mod checkpoint;
mod grid;
mod net;
mod params;

pub use adapt::{adapt_channel_average, interpolate_positional};
pub use checkpoint::{
    import_pretrained, load_checkpoint, save_checkpoint, save_import_file, Checkpoint,
};
pub use grid::{patch_count, patchify, PatchGrid, DEFAULT_PATCH, DEFAULT_STRIDE};
pub use net::{
    backward, forward, forward_tokens, forward_train, forward_with, predict_log_volume,
    ForwardCache,
};
pub use params::{LayerParams, ModelConfig, ModelParams};
