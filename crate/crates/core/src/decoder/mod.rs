//! The generalized decoder: latent and text queries refined by masked
//! cross-attention over the feature pyramid and task-conditioned
//! self-attention, producing masks for latent queries and semantic vectors
//! for every query.

mod attention_mask;
mod cross_bias;
mod layer;
mod xdecoder;

pub use attention_mask::{build_self_attention_mask, AttentionMask, TaskMode};
pub use cross_bias::{cross_attention_bias, downsample_logits, downsample_region, region_bias};
pub use layer::DecoderLayer;
pub use xdecoder::{DecodeInput, DecoderOutput, LatentQueries, LayerPrediction, XDecoder};
