use ndarray::{Array2, ArrayView2, Axis};

/// Row-stochastic attention weights plus the attended output.
///
/// Only the first `n_real` positions act as keys; later rows and columns are
/// padding. Padded rows are still computed but carry no information.
pub fn masked_self_attention(
    x: ArrayView2<f64>,
    query: ArrayView2<f64>,
    key: ArrayView2<f64>,
    value: ArrayView2<f64>,
    n_real: usize,
) -> AttentionParts {
    let q = x.dot(&query);
    let k = x.dot(&key);
    let v = x.dot(&value);
    let scale = (query.ncols() as f64).sqrt();
    let mut weights = q.dot(&k.t()) / scale;
    softmax_rows_masked(&mut weights, n_real);
    let output = weights.dot(&v);
    AttentionParts {
        q,
        k,
        v,
        weights,
        output,
    }
}

pub struct AttentionParts {
    pub q: Array2<f64>,
    pub k: Array2<f64>,
    pub v: Array2<f64>,
    pub weights: Array2<f64>,
    pub output: Array2<f64>,
}

/// `softmax(X·Wq (X·Wk)ᵀ / √d_a) · X·Wv` over all rows of `x`.
pub fn self_attention(
    x: ArrayView2<f64>,
    query: ArrayView2<f64>,
    key: ArrayView2<f64>,
    value: ArrayView2<f64>,
) -> (Array2<f64>, Array2<f64>) {
    let parts = masked_self_attention(x, query, key, value, x.nrows());
    (parts.output, parts.weights)
}

/// In-place softmax of each row over its first `n_real` columns; the
/// remaining columns are set to zero.
pub fn softmax_rows_masked(logits: &mut Array2<f64>, n_real: usize) {
    for mut row in logits.axis_iter_mut(Axis(0)) {
        let max = row
            .iter()
            .take(n_real)
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for (j, v) in row.iter_mut().enumerate() {
            if j < n_real {
                *v = (*v - max).exp();
                total += *v;
            } else {
                *v = 0.0;
            }
        }
        row.iter_mut().take(n_real).for_each(|v| *v /= total);
    }
}
