//! Feed-forward teacher network producing soft labels.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{bce_with_logit, he, sigmoid, Adam, Parameters};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            hidden: vec![128, 64],
            learning_rate: 1e-3,
            epochs: 150,
            batch_size: 32,
            seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in × fan_out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// ReLU hidden layers and a single sigmoid output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherNet {
    pub layers: Vec<Dense>,
}

impl Parameters for TeacherNet {
    fn tensors(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice().unwrap(), l.bias.as_slice().unwrap()])
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().unwrap(),
                    l.bias.as_slice_mut().unwrap(),
                ]
            })
            .collect()
    }
}

/// Activations kept from a forward pass for backpropagation.
struct Trace {
    /// Inputs to each layer; `inputs[0]` is the batch itself.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Array2<f64>>,
}

impl TeacherNet {
    pub fn new(n_inputs: usize, hidden: &[usize], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![n_inputs];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                weight: he(w[0], w[1], &mut rng) * if w[1] == 1 { 0.1 } else { 1.0 },
                bias: Array1::zeros(w[1]),
            })
            .collect();
        TeacherNet { layers }
    }

    /// All-zero network; its output is 0.5 everywhere.
    pub fn zeros(n_inputs: usize, hidden: &[usize]) -> Self {
        let mut net = TeacherNet::new(n_inputs, hidden, 0);
        for t in net.tensors_mut() {
            t.fill(0.0);
        }
        net
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weight.nrows()
    }

    fn trace(&self, x: ArrayView2<f64>) -> (Array1<f64>, Trace) {
        let mut inputs = vec![x.to_owned()];
        let mut pre = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let z = inputs[i].dot(&layer.weight) + &layer.bias;
            if i + 1 < self.layers.len() {
                inputs.push(z.mapv(|v| v.max(0.0)));
            }
            pre.push(z);
        }
        let logits = pre.last().unwrap().column(0).to_owned();
        (logits, Trace { inputs, pre })
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.trace(x).0
    }

    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Array1<f64> {
        self.logits(x).mapv(sigmoid)
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let row = ArrayView2::from_shape((1, x.len()), x).expect("row shape");
        self.predict_batch(row)[0]
    }

    /// Mean binary cross-entropy over the batch.
    pub fn loss(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> f64 {
        let logits = self.logits(x);
        logits
            .iter()
            .zip(y)
            .map(|(&z, &t)| bce_with_logit(z, t))
            .sum::<f64>()
            / y.len() as f64
    }

    /// Loss and parameter gradients (same layout as `self`).
    pub fn gradients(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, TeacherNet) {
        let n = y.len() as f64;
        let (logits, trace) = self.trace(x);
        let loss = logits
            .iter()
            .zip(y)
            .map(|(&z, &t)| bce_with_logit(z, t))
            .sum::<f64>()
            / n;
        let mut delta: Array2<f64> = (logits.mapv(sigmoid) - y)
            .mapv(|d| d / n)
            .insert_axis(Axis(1));
        let mut grads = self.clone();
        for i in (0..self.layers.len()).rev() {
            grads.layers[i].weight.assign(&trace.inputs[i].t().dot(&delta));
            grads.layers[i].bias.assign(&delta.sum_axis(Axis(0)));
            if i > 0 {
                let upstream = delta.dot(&self.layers[i].weight.t());
                delta = upstream * trace.pre[i - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            }
        }
        (loss, grads)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingHistory {
    /// Full-data loss after each epoch.
    pub epoch_loss: Vec<f64>,
}

/// Mini-batch Adam on binary cross-entropy. `targets` are 0/1 labels
/// (1 = fake).
pub fn train_teacher(
    x: ArrayView2<f64>,
    targets: &[f64],
    config: &TeacherConfig,
) -> Result<(TeacherNet, TrainingHistory)> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("teacher training"));
    }
    if x.nrows() != targets.len() {
        return Err(Error::LengthMismatch {
            left: x.nrows(),
            right: targets.len(),
        });
    }
    let positives = targets.iter().filter(|&&t| t >= 0.5).count();
    if positives == 0 || positives == targets.len() {
        return Err(Error::SingleClass("teacher"));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidConfig("teacher epochs and batch size must be positive".into()));
    }

    let mut net = TeacherNet::new(x.ncols(), &config.hidden, config.seed);
    let mut optimizer = Adam::new(config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let y = ArrayView1::from(targets);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let bx = x.select(Axis(0), batch);
            let by: Array1<f64> = batch.iter().map(|&i| targets[i]).collect();
            let (_, grads) = net.gradients(bx.view(), by.view());
            optimizer.update(&mut net, &grads);
        }
        history.push(net.loss(x, y));
    }
    Ok((net, TrainingHistory { epoch_loss: history }))
}

/// Teacher probabilities used as student regression targets.
pub fn soft_labels(teacher: &TeacherNet, rows: &[Vec<f64>]) -> Vec<f64> {
    if rows.is_empty() {
        return Vec::new();
    }
    let x = rows_to_matrix(rows);
    teacher.predict_batch(x.view()).to_vec()
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, Vec::len);
    Array2::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j])
}
