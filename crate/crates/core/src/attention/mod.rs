//! Euclidean Gaussian attention and Lorentz attention blocks.
//!
//! Both families take and return Euclidean `M x d` sequences. Parameters live
//! in a shared [`ParamStore`](crate::diff::ParamStore); the structs here hold
//! only [`ParamId`](crate::diff::ParamId)s and hyperparameters.

mod euclidean;
mod layers;
mod lorentz;
mod mask;

pub use euclidean::{
    euclidean_attention_block, euclidean_attention_logits, euclidean_gaussian_attention,
    EuclideanAttention, EuclideanBlock,
};
pub use layers::{xavier, BlockWrap, FeedForward, LayerNorm, Linear, LAYER_NORM_EPS};
pub use lorentz::{
    exp_origin_rows, log_origin_rows, lorentz_attention_block, lorentz_attention_core,
    lorentz_attention_logits, lorentz_centroid_rows, lorentz_linear, lorentz_self_attention,
    LorentzAttention, LorentzBlock, LorentzCore, LorentzLinear, LorentzMixing,
};
pub use mask::{gaussian_mask, variance_schedule, GaussianMask};
