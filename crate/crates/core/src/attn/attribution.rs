use serde::{Deserialize, Serialize};

use super::model::{AttentionMatrix, AttnModel};
use crate::error::{Error, Result};
use crate::text::{EmbeddingTable, Token};

/// An n-gram window reported by one branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NgramSpan {
    pub kernel_size: usize,
    /// Token range `[start, end)`; always `kernel_size` long.
    pub start: usize,
    pub end: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenAttribution {
    /// One score per input token, scaled so the top token scores 1.
    pub token_scores: Vec<f64>,
    /// Branch that produced each token's score.
    pub token_branch: Vec<usize>,
    pub spans: Vec<NgramSpan>,
}

impl TokenAttribution {
    /// Token indices ordered by descending score, ties by position.
    pub fn ranked(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.token_scores.len()).collect();
        idx.sort_by(|&a, &b| {
            self.token_scores[b]
                .total_cmp(&self.token_scores[a])
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Mean attention each position receives from the real query rows.
pub fn column_means(matrix: &AttentionMatrix) -> Vec<f64> {
    let n = matrix.weights.nrows();
    (0..matrix.weights.ncols())
        .map(|j| matrix.weights.column(j).sum() / n as f64)
        .collect()
}

/// Attention-derived attribution over `n_tokens` tokens.
///
/// Position `j` of the width-`k` branch stands for the window
/// `j - (k-1)/2 .. j - (k-1)/2 + k`, clipped to the sequence; a token takes
/// the highest position score among the windows covering it, over all
/// branches. Tokens beyond the attention matrices (truncated input) score 0.
pub fn attribution_from_attention(attention: &[AttentionMatrix], n_tokens: usize) -> TokenAttribution {
    let mut token_scores = vec![0.0; n_tokens];
    let mut token_branch = vec![0; n_tokens];
    let mut spans = Vec::new();
    for (b, matrix) in attention.iter().enumerate() {
        let k = matrix.kernel_size;
        let left = (k - 1) / 2;
        let n = matrix.weights.nrows();
        for (j, score) in column_means(matrix).into_iter().enumerate() {
            let start = j.saturating_sub(left);
            let end = (j + k - left).min(n);
            for t in start..end {
                if score > token_scores[t] {
                    token_scores[t] = score;
                    token_branch[t] = b;
                }
            }
            if end - start == k {
                spans.push(NgramSpan {
                    kernel_size: k,
                    start,
                    end,
                    score,
                });
            }
        }
    }
    let max = token_scores.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        token_scores.iter_mut().for_each(|s| *s /= max);
        spans.iter_mut().for_each(|s| s.score /= max);
    }
    TokenAttribution {
        token_scores,
        token_branch,
        spans,
    }
}

pub fn attribution(model: &AttnModel, tokens: &[Token], table: &EmbeddingTable) -> Result<TokenAttribution> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("attribution"));
    }
    let out = model.forward(tokens, table)?;
    Ok(attribution_from_attention(&out.attention, tokens.len()))
}
