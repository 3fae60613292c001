use serde::{Deserialize, Serialize};

use crate::corpus::{Attribute, NewsItem};
use crate::text::{mean_embedding, tokenize, EmbeddingTable};

/// Five field blocks of `d` values each, in [`Attribute::ALL`] order, plus
/// one missing flag per field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeVector {
    pub d: usize,
    pub values: Vec<f64>,
    pub missing: [bool; 5],
}

impl AttributeVector {
    pub fn block(&self, attr: Attribute) -> &[f64] {
        let start = attr.index() * self.d;
        &self.values[start..start + self.d]
    }

    /// Model input: the `5·d` block values followed by the five missing
    /// flags as 0/1.
    pub fn features(&self) -> Vec<f64> {
        let mut row = self.values.clone();
        row.extend(self.missing.iter().map(|&m| if m { 1.0 } else { 0.0 }));
        row
    }

    pub fn n_features(d: usize) -> usize {
        5 * d + 5
    }
}

/// Maps each model-input column to the attribute it describes.
pub fn feature_block_map(d: usize) -> Vec<usize> {
    (0..5 * d)
        .map(|f| f / d)
        .chain(0..5)
        .collect()
}

/// Mean-embeds every attribute and keeps the first `d` dimensions. An absent
/// attribute, or one with no in-vocabulary token, becomes a zero block with
/// its flag set. If `d` exceeds the table dimension the tail stays zero.
pub fn encode_attributes(item: &NewsItem, table: &EmbeddingTable, d: usize) -> AttributeVector {
    let mut values = vec![0.0; 5 * d];
    let mut missing = [true; 5];
    for attr in Attribute::ALL {
        let Some(text) = item.attribute(attr) else {
            continue;
        };
        let (mean, absent) = mean_embedding(&tokenize(text), table);
        if absent {
            continue;
        }
        missing[attr.index()] = false;
        let start = attr.index() * d;
        let keep = d.min(mean.len());
        values[start..start + keep].copy_from_slice(&mean[..keep]);
    }
    AttributeVector { d, values, missing }
}
