//! Binary regression trees shared by the mimic forest and the boosted
//! classifier.
//!
//! Nodes are stored in pre-order with explicit child indices; node 0 is the
//! root. Every node (not only leaves) carries the value it would predict as a
//! leaf, which is what path value-delta attribution walks over.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    /// Samples with `x[feature] <= threshold` go left.
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub split: Option<Split>,
    pub value: f64,
    /// Target variance of the samples reaching this node.
    pub impurity: f64,
    pub n_samples: usize,
}

impl Node {
    pub fn leaf(value: f64, impurity: f64, n_samples: usize) -> Self {
        Node {
            split: None,
            value,
            impurity,
            n_samples,
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

/// One step of an activated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: usize,
    pub feature: usize,
    pub threshold: f64,
    pub went_left: bool,
    /// Value of the child reached minus value of `node`.
    pub delta: f64,
}

impl DecisionTree {
    pub fn constant(value: f64, n_samples: usize) -> Self {
        DecisionTree {
            nodes: vec![Node::leaf(value, 0.0, n_samples)],
        }
    }

    pub fn root_value(&self) -> f64 {
        self.nodes[0].value
    }

    fn child(&self, node: usize, x: &[f64]) -> Option<(usize, &Split, bool)> {
        self.nodes[node].split.as_ref().map(|s| {
            let left = x[s.feature] <= s.threshold;
            (if left { s.left } else { s.right }, s, left)
        })
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut node = 0;
        while let Some((next, _, _)) = self.child(node, x) {
            node = next;
        }
        node
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_index(x)].value
    }

    /// Node ids from root to the reached leaf.
    pub fn node_path(&self, x: &[f64]) -> Vec<usize> {
        let mut path = vec![0];
        let mut node = 0;
        while let Some((next, _, _)) = self.child(node, x) {
            path.push(next);
            node = next;
        }
        path
    }

    pub fn path_steps(&self, x: &[f64]) -> Vec<PathStep> {
        let mut steps = Vec::new();
        let mut node = 0;
        while let Some((next, split, went_left)) = self.child(node, x) {
            steps.push(PathStep {
                node,
                feature: split.feature,
                threshold: split.threshold,
                went_left,
                delta: self.nodes[next].value - self.nodes[node].value,
            });
            node = next;
        }
        steps
    }

    pub fn depth(&self) -> usize {
        fn walk(tree: &DecisionTree, node: usize) -> usize {
            match &tree.nodes[node].split {
                Some(s) => 1 + walk(tree, s.left).max(walk(tree, s.right)),
                None => 0,
            }
        }
        walk(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    /// Checks the structural invariants: pre-order layout, every internal
    /// node has two in-range children, every node is reached exactly once,
    /// and sample counts add up.
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidConfig("tree has no nodes".into()));
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            if !node.value.is_finite() || !node.impurity.is_finite() {
                return Err(Error::InvalidConfig(format!("node {i} is not finite")));
            }
            if let Some(s) = &node.split {
                if s.feature >= n_features {
                    return Err(Error::InvalidConfig(format!(
                        "node {i} splits on feature {} of {n_features}",
                        s.feature
                    )));
                }
                if s.left <= i || s.right <= i || s.left >= self.nodes.len() || s.right >= self.nodes.len() {
                    return Err(Error::InvalidConfig(format!("node {i} has bad children")));
                }
                parents[s.left] += 1;
                parents[s.right] += 1;
                let children = self.nodes[s.left].n_samples + self.nodes[s.right].n_samples;
                if children != node.n_samples {
                    return Err(Error::InvalidConfig(format!(
                        "node {i} holds {} samples but its children hold {children}",
                        node.n_samples
                    )));
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(Error::InvalidConfig("nodes do not form a tree".into()));
        }
        Ok(())
    }

    /// Multiplies every node value by `factor`.
    pub fn scale_values(&mut self, factor: f64) {
        for node in &mut self.nodes {
            node.value *= factor;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` considers all of them.
    pub max_features: Option<usize>,
}

/// Variance-reduction tree builder.
///
/// `targets` drive the split search; `node_value` turns the (possibly
/// repeated) sample indices reaching a node into that node's value.
pub struct TreeGrower<'a, F> {
    pub rows: &'a [Vec<f64>],
    pub targets: &'a [f64],
    pub config: GrowConfig,
    pub node_value: F,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

impl<'a, F: Fn(&[usize]) -> f64> TreeGrower<'a, F> {
    pub fn grow<R: Rng>(&self, samples: Vec<usize>, rng: &mut R) -> DecisionTree {
        let mut tree = DecisionTree { nodes: Vec::new() };
        self.grow_node(&mut tree, samples, 0, rng);
        tree
    }

    fn grow_node<R: Rng>(
        &self,
        tree: &mut DecisionTree,
        mut samples: Vec<usize>,
        depth: usize,
        rng: &mut R,
    ) -> usize {
        let id = tree.nodes.len();
        let (_, impurity) = mean_var(samples.iter().map(|&i| self.targets[i]));
        tree.nodes
            .push(Node::leaf((self.node_value)(&samples), impurity, samples.len()));

        if depth >= self.config.max_depth
            || samples.len() < 2 * self.config.min_samples_leaf.max(1)
            || impurity <= 0.0
        {
            return id;
        }
        let Some(best) = self.best_split(&samples, rng) else {
            return id;
        };
        let feature = best.feature;
        samples.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
        let right = samples.split_off(best.n_left);
        let left_id = self.grow_node(tree, samples, depth + 1, rng);
        let right_id = self.grow_node(tree, right, depth + 1, rng);
        tree.nodes[id].split = Some(Split {
            feature,
            threshold: best.threshold,
            left: left_id,
            right: right_id,
        });
        id
    }

    fn best_split<R: Rng>(&self, samples: &[usize], rng: &mut R) -> Option<Candidate> {
        let n_features = self.rows.first().map_or(0, Vec::len);
        let features: Vec<usize> = match self.config.max_features {
            Some(k) if k < n_features => {
                let mut f = sample(rng, n_features, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..n_features).collect(),
        };
        let n = samples.len();
        let total: f64 = samples.iter().map(|&i| self.targets[i]).sum();
        let total_sq: f64 = samples.iter().map(|&i| self.targets[i] * self.targets[i]).sum();
        let parent_sse = total_sq - total * total / n as f64;
        let min_leaf = self.config.min_samples_leaf.max(1);

        let mut best: Option<Candidate> = None;
        let mut order = samples.to_vec();
        for feature in features {
            order.sort_by(|&a, &b| self.rows[a][feature].total_cmp(&self.rows[b][feature]));
            let mut left_sum = 0.0;
            let mut left_sq = 0.0;
            for pos in 0..n - 1 {
                let t = self.targets[order[pos]];
                left_sum += t;
                left_sq += t * t;
                let n_left = pos + 1;
                let here = self.rows[order[pos]][feature];
                let next = self.rows[order[pos + 1]][feature];
                if here == next || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / n_left as f64)
                    + (right_sq - right_sum * right_sum / (n - n_left) as f64);
                let gain = parent_sse - sse;
                if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = here + (next - here) / 2.0;
                    if threshold >= next {
                        threshold = here;
                    }
                    best = Some(Candidate {
                        feature,
                        threshold,
                        gain,
                        n_left,
                    });
                }
            }
        }
        best
    }
}

/// Population mean and variance, accumulated relative to the first value
/// so that constant inputs give their value back exactly.
pub fn mean_var(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut values = values.peekable();
    let Some(&shift) = values.peek() else {
        return (0.0, 0.0);
    };
    let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
    for v in values {
        let d = v - shift;
        n += 1;
        sum += d;
        sq += d * d;
    }
    let mean = sum / n as f64;
    (shift + mean, (sq / n as f64 - mean * mean).max(0.0))
}
