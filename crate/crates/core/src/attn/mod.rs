//! Semantic perspective: frozen word vectors, one convolution branch per
//! n-gram width, per-branch self-attention, masked mean pooling and a
//! logistic classifier. Attention weights double as token attribution.

mod attention;
mod attribution;
mod model;

pub use attention::{masked_self_attention, self_attention, softmax_rows_masked, AttentionParts};
pub use attribution::{attribution, attribution_from_attention, column_means, NgramSpan, TokenAttribution};
pub use model::{
    embed_tokens, train_attn, AttentionMatrix, AttnConfig, AttnExample, AttnModel, AttnOutput, Branch,
};
