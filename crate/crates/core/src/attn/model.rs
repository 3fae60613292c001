use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{masked_self_attention, AttentionParts};
use crate::error::{Error, Result};
use crate::mimic::TrainingHistory;
use crate::nn::{bce_with_logit, glorot, he, sigmoid, Adam, Parameters};
use crate::text::{EmbeddingTable, Token};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnConfig {
    pub embed_dim: usize,
    /// Convolution output width per position.
    pub hidden_dim: usize,
    /// Query/key/value width.
    pub attn_dim: usize,
    pub kernel_sizes: Vec<usize>,
    pub max_len: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for AttnConfig {
    fn default() -> Self {
        AttnConfig {
            embed_dim: 300,
            hidden_dim: 512,
            attn_dim: 64,
            kernel_sizes: vec![1, 2, 3],
            max_len: 64,
            learning_rate: 2e-4,
            epochs: 6,
            batch_size: 16,
            seed: 5,
        }
    }
}

impl AttnConfig {
    pub fn validate(&self) -> Result<()> {
        let mut sorted = self.kernel_sizes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.attn_dim == 0 || self.max_len == 0 {
            return Err(Error::InvalidConfig("attention dimensions must be positive".into()));
        }
        if sorted.is_empty() || sorted[0] == 0 || sorted.len() != self.kernel_sizes.len() {
            return Err(Error::InvalidConfig(
                "kernel sizes must be distinct positive integers".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// One n-gram branch: a width-`kernel_size` convolution followed by its own
/// self-attention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub kernel_size: usize,
    /// `(kernel_size · embed_dim) × hidden_dim`, window-major.
    pub conv_weight: Array2<f64>,
    pub conv_bias: Array1<f64>,
    /// `hidden_dim × attn_dim`
    pub query: Array2<f64>,
    pub key: Array2<f64>,
    pub value: Array2<f64>,
}

impl Branch {
    /// Zero padding placed before position 0; the window of position `i`
    /// covers inputs `i - left ..= i - left + k - 1`.
    pub fn left_pad(&self) -> usize {
        (self.kernel_size - 1) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnModel {
    pub embed_dim: usize,
    pub max_len: usize,
    pub branches: Vec<Branch>,
    /// Classifier over the concatenated pooled branch outputs.
    pub output_weight: Array1<f64>,
    pub output_bias: Array1<f64>,
}

impl Parameters for AttnModel {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for b in &self.branches {
            out.push(b.conv_weight.as_slice().unwrap());
            out.push(b.conv_bias.as_slice().unwrap());
            out.push(b.query.as_slice().unwrap());
            out.push(b.key.as_slice().unwrap());
            out.push(b.value.as_slice().unwrap());
        }
        out.push(self.output_weight.as_slice().unwrap());
        out.push(self.output_bias.as_slice().unwrap());
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for b in &mut self.branches {
            out.push(b.conv_weight.as_slice_mut().unwrap());
            out.push(b.conv_bias.as_slice_mut().unwrap());
            out.push(b.query.as_slice_mut().unwrap());
            out.push(b.key.as_slice_mut().unwrap());
            out.push(b.value.as_slice_mut().unwrap());
        }
        out.push(self.output_weight.as_slice_mut().unwrap());
        out.push(self.output_bias.as_slice_mut().unwrap());
        out
    }
}

/// Attention weights of one branch over the real (unpadded) positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMatrix {
    pub kernel_size: usize,
    pub weights: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct AttnOutput {
    pub probability: f64,
    pub logit: f64,
    pub attention: Vec<AttentionMatrix>,
}

struct BranchTrace {
    unfolded: Array2<f64>,
    pre: Array2<f64>,
    hidden: Array2<f64>,
    parts: AttentionParts,
}

struct Forward {
    logit: f64,
    pooled: Array1<f64>,
    traces: Vec<BranchTrace>,
}

/// Embedded statement ready for the model.
#[derive(Debug, Clone)]
pub struct AttnExample {
    pub embedding: Array2<f64>,
    pub target: f64,
}

/// Looks up each token (first `max_len` only); out-of-vocabulary tokens get
/// a zero row.
pub fn embed_tokens(tokens: &[Token], table: &EmbeddingTable, max_len: usize) -> Array2<f64> {
    let n = tokens.len().min(max_len);
    let mut out = Array2::zeros((n, table.dim()));
    for (i, token) in tokens.iter().take(n).enumerate() {
        if let Some(v) = table.get(&token.normalized) {
            out.row_mut(i)
                .iter_mut()
                .zip(v)
                .for_each(|(o, &x)| *o = f64::from(x));
        }
    }
    out
}

impl AttnExample {
    pub fn new(tokens: &[Token], table: &EmbeddingTable, max_len: usize, target: f64) -> Self {
        AttnExample {
            embedding: embed_tokens(tokens, table, max_len),
            target,
        }
    }
}

// Row i holds the concatenated embeddings of window positions
// i - left .. i - left + k; positions outside [0, rows) are zero.
fn unfold(x: ArrayView2<f64>, kernel: usize, left: usize) -> Array2<f64> {
    let (rows, dim) = x.dim();
    let mut out = Array2::zeros((rows, kernel * dim));
    for i in 0..rows {
        for j in 0..kernel {
            let src = i as isize + j as isize - left as isize;
            if src >= 0 && (src as usize) < rows {
                out.slice_mut(s![i, j * dim..(j + 1) * dim])
                    .assign(&x.row(src as usize));
            }
        }
    }
    out
}

impl AttnModel {
    pub fn new(config: &AttnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let branches: Vec<Branch> = config
            .kernel_sizes
            .iter()
            .map(|&k| Branch {
                kernel_size: k,
                conv_weight: he(k * config.embed_dim, config.hidden_dim, &mut rng),
                conv_bias: Array1::zeros(config.hidden_dim),
                query: glorot(config.hidden_dim, config.attn_dim, &mut rng),
                key: glorot(config.hidden_dim, config.attn_dim, &mut rng),
                value: glorot(config.hidden_dim, config.attn_dim, &mut rng),
            })
            .collect();
        let width = branches.len() * config.attn_dim;
        let output_weight = glorot(width, 1, &mut rng).column(0).to_owned();
        Ok(AttnModel {
            embed_dim: config.embed_dim,
            max_len: config.max_len,
            branches,
            output_weight,
            output_bias: Array1::zeros(1),
        })
    }

    pub fn attn_dim(&self) -> usize {
        self.branches[0].query.ncols()
    }

    fn zeros_like(&self) -> AttnModel {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    fn run(&self, emb: ArrayView2<f64>, n_real: usize) -> Forward {
        let mut traces = Vec::with_capacity(self.branches.len());
        let mut pooled = Vec::with_capacity(self.branches.len() * self.attn_dim());
        for branch in &self.branches {
            let unfolded = unfold(emb, branch.kernel_size, branch.left_pad());
            let pre = unfolded.dot(&branch.conv_weight) + &branch.conv_bias;
            let hidden = pre.mapv(|v| v.max(0.0));
            let parts = masked_self_attention(
                hidden.view(),
                branch.query.view(),
                branch.key.view(),
                branch.value.view(),
                n_real,
            );
            let mean = parts
                .output
                .slice(s![..n_real, ..])
                .mean_axis(Axis(0))
                .expect("at least one real position");
            pooled.extend(mean.iter().copied());
            traces.push(BranchTrace {
                unfolded,
                pre,
                hidden,
                parts,
            });
        }
        let pooled = Array1::from(pooled);
        let logit = pooled.dot(&self.output_weight) + self.output_bias[0];
        Forward {
            logit,
            pooled,
            traces,
        }
    }

    fn check_input(&self, emb: ArrayView2<f64>, n_real: usize) -> Result<()> {
        if n_real == 0 || emb.nrows() == 0 {
            return Err(Error::EmptyInput("attention forward"));
        }
        if emb.ncols() != self.embed_dim {
            return Err(Error::InvalidConfig(format!(
                "embedding width {} does not match model width {}",
                emb.ncols(),
                self.embed_dim
            )));
        }
        if n_real > emb.nrows() {
            return Err(Error::InvalidConfig("more real positions than rows".into()));
        }
        Ok(())
    }

    /// Forward pass on an embedded sequence whose first `n_real` rows are
    /// real tokens and the rest padding.
    pub fn forward_embedded(&self, emb: ArrayView2<f64>, n_real: usize) -> Result<AttnOutput> {
        self.check_input(emb, n_real)?;
        let fwd = self.run(emb, n_real);
        Ok(AttnOutput {
            probability: sigmoid(fwd.logit),
            logit: fwd.logit,
            attention: self
                .branches
                .iter()
                .zip(fwd.traces)
                .map(|(b, t)| AttentionMatrix {
                    kernel_size: b.kernel_size,
                    weights: t.parts.weights.slice(s![..n_real, ..n_real]).to_owned(),
                })
                .collect(),
        })
    }

    /// Embeds, truncates to `max_len`, and runs the model.
    pub fn forward(&self, tokens: &[Token], table: &EmbeddingTable) -> Result<AttnOutput> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("attention forward"));
        }
        let emb = embed_tokens(tokens, table, self.max_len);
        let n = emb.nrows();
        self.forward_embedded(emb.view(), n)
    }

    /// Same as [`forward`](Self::forward) but with the sequence zero-padded
    /// to `padded_len` rows (padding is masked out of attention and pooling).
    pub fn forward_padded(
        &self,
        tokens: &[Token],
        table: &EmbeddingTable,
        padded_len: usize,
    ) -> Result<AttnOutput> {
        if tokens.is_empty() {
            return Err(Error::EmptyInput("attention forward"));
        }
        let emb = embed_tokens(tokens, table, self.max_len);
        let n = emb.nrows();
        let mut padded = Array2::zeros((padded_len.max(n), emb.ncols()));
        padded.slice_mut(s![..n, ..]).assign(&emb);
        self.forward_embedded(padded.view(), n)
    }

    pub fn predict(&self, tokens: &[Token], table: &EmbeddingTable) -> Result<f64> {
        Ok(self.forward(tokens, table)?.probability)
    }

    pub fn loss(&self, emb: ArrayView2<f64>, n_real: usize, target: f64) -> Result<f64> {
        self.check_input(emb, n_real)?;
        Ok(bce_with_logit(self.run(emb, n_real).logit, target))
    }

    /// Loss and gradients for one sequence.
    pub fn gradients(&self, emb: ArrayView2<f64>, n_real: usize, target: f64) -> Result<(f64, AttnModel)> {
        self.check_input(emb, n_real)?;
        let mut grads = self.zeros_like();
        let loss = self.accumulate_gradients(emb, n_real, target, 1.0, &mut grads);
        Ok((loss, grads))
    }

    // Adds `weight · ∂loss/∂θ` into `grads` and returns the loss.
    fn accumulate_gradients(
        &self,
        emb: ArrayView2<f64>,
        n_real: usize,
        target: f64,
        weight: f64,
        grads: &mut AttnModel,
    ) -> f64 {
        let fwd = self.run(emb, n_real);
        let loss = bce_with_logit(fwd.logit, target);
        let d_logit = weight * (sigmoid(fwd.logit) - target);
        grads.output_bias[0] += d_logit;
        grads.output_weight.scaled_add(d_logit, &fwd.pooled);

        let da = self.attn_dim();
        let rows = emb.nrows();
        let scale = (da as f64).sqrt();
        for (b, (branch, trace)) in self.branches.iter().zip(&fwd.traces).enumerate() {
            let g = &mut grads.branches[b];
            let d_pooled = self.output_weight.slice(s![b * da..(b + 1) * da]).to_owned() * d_logit;
            let mut d_out = Array2::<f64>::zeros((rows, da));
            for mut row in d_out.slice_mut(s![..n_real, ..]).rows_mut() {
                row.assign(&(&d_pooled / n_real as f64));
            }
            let AttentionParts { q, k, v, weights, .. } = &trace.parts;

            let d_weights = d_out.dot(&v.t());
            let d_v = weights.t().dot(&d_out);
            // softmax backward, row by row
            let mut d_logits = weights * &d_weights;
            let row_dots = d_logits.sum_axis(Axis(1));
            for (i, mut row) in d_logits.rows_mut().into_iter().enumerate() {
                row.iter_mut()
                    .zip(weights.row(i))
                    .for_each(|(d, &a)| *d -= a * row_dots[i]);
            }
            d_logits /= scale;
            let d_q = d_logits.dot(k);
            let d_k = d_logits.t().dot(q);

            let hidden_t = trace.hidden.t();
            general_mat_mul(1.0, &hidden_t, &d_q, 1.0, &mut g.query);
            general_mat_mul(1.0, &hidden_t, &d_k, 1.0, &mut g.key);
            general_mat_mul(1.0, &hidden_t, &d_v, 1.0, &mut g.value);

            let mut d_hidden = d_q.dot(&branch.query.t());
            general_mat_mul(1.0, &d_k, &branch.key.t(), 1.0, &mut d_hidden);
            general_mat_mul(1.0, &d_v, &branch.value.t(), 1.0, &mut d_hidden);
            d_hidden.zip_mut_with(&trace.pre, |d, &z| {
                if z <= 0.0 {
                    *d = 0.0
                }
            });
            general_mat_mul(1.0, &trace.unfolded.t(), &d_hidden, 1.0, &mut g.conv_weight);
            g.conv_bias += &d_hidden.sum_axis(Axis(0));
        }
        loss
    }

    pub fn mean_loss(&self, examples: &[AttnExample]) -> f64 {
        examples
            .iter()
            .map(|e| bce_with_logit(self.run(e.embedding.view(), e.embedding.nrows()).logit, e.target))
            .sum::<f64>()
            / examples.len().max(1) as f64
    }
}

const WORKERS: usize = 4;

/// Mini-batch Adam on binary cross-entropy. Each batch is split into a fixed
/// number of chunks whose gradients are computed on separate threads and
/// summed in chunk order, so results do not depend on the machine.
pub fn train_attn(
    model: AttnModel,
    examples: &[AttnExample],
    config: &AttnConfig,
) -> Result<(AttnModel, TrainingHistory)> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("attention training"));
    }
    let positives = examples.iter().filter(|e| e.target >= 0.5).count();
    if positives == 0 || positives == examples.len() {
        return Err(Error::SingleClass("attention"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
    }
    for e in examples {
        model.check_input(e.embedding.view(), e.embedding.nrows())?;
    }

    let mut model = model;
    let mut optimizer = Adam::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let weight = 1.0 / batch.len() as f64;
            let chunk_len = batch.len().div_ceil(WORKERS);
            let partials: Vec<AttnModel> = std::thread::scope(|scope| {
                let handles: Vec<_> = batch
                    .chunks(chunk_len)
                    .map(|chunk| {
                        let model = &model;
                        scope.spawn(move || {
                            let mut grads = model.zeros_like();
                            for &i in chunk {
                                let e = &examples[i];
                                model.accumulate_gradients(
                                    e.embedding.view(),
                                    e.embedding.nrows(),
                                    e.target,
                                    weight,
                                    &mut grads,
                                );
                            }
                            grads
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().expect("gradient worker")).collect()
            });
            let mut total = partials[0].clone();
            for partial in &partials[1..] {
                for (t, p) in total.tensors_mut().into_iter().zip(partial.tensors()) {
                    t.iter_mut().zip(p).for_each(|(a, b)| *a += b);
                }
            }
            optimizer.update(&mut model, &total);
        }
        history.push(model.mean_loss(examples));
    }
    Ok((model, TrainingHistory { epoch_loss: history }))
}
