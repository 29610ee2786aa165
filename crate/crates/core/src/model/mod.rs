//! Text branch, gaze and glance video branches, hybrid blocks with adaptive
//! fusion, and text-video similarity.

mod config;
mod network;
mod ops;

pub use config::ModelConfig;
pub use network::{
    hlformer_block, HlFormer, HlFormerBlock, QueryEmbedding, TextEncoder, VideoBranch,
    VideoEmbeddings, VideoFeatures, INIT_STREAM,
};
pub use ops::{
    attention_pool_weights, glance_downsample, glance_matrix, glance_partition, maim_fuse,
    maim_weights, normalize_rows, similarity, simple_attention_pool, Maim, Similarity,
};
