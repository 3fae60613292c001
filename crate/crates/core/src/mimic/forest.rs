//! The student: a bagged forest of regression trees fit to soft labels.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::derive_seed;
use crate::tree::{mean_var, DecisionTree, GrowConfig, PathStep, TreeGrower};

pub const DEFAULT_TREES: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSubsample {
    All,
    Sqrt,
    Count(usize),
}

impl FeatureSubsample {
    fn resolve(self, n_features: usize) -> Option<usize> {
        match self {
            FeatureSubsample::All => None,
            FeatureSubsample::Sqrt => Some(((n_features as f64).sqrt().round() as usize).max(1)),
            FeatureSubsample::Count(k) => Some(k.clamp(1, n_features.max(1))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub feature_subsample: FeatureSubsample,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        StudentConfig {
            n_trees: DEFAULT_TREES,
            max_depth: 8,
            min_samples_leaf: 5,
            feature_subsample: FeatureSubsample::Sqrt,
            bootstrap: true,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentForest {
    pub trees: Vec<DecisionTree>,
    /// Attribute index (0..5) of every input column.
    pub feature_block_map: Vec<usize>,
}

/// Per-attribute share of importance; non-negative, sums to one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeImportance {
    pub scores: [f64; 5],
}

impl AttributeImportance {
    pub const UNIFORM: AttributeImportance = AttributeImportance { scores: [0.2; 5] };

    /// Normalizes raw non-negative totals, falling back to uniform when
    /// they are all zero.
    pub fn from_raw(raw: [f64; 5]) -> Self {
        let total: f64 = raw.iter().sum();
        if total <= 0.0 || !total.is_finite() {
            return Self::UNIFORM;
        }
        AttributeImportance {
            scores: raw.map(|r| r / total),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivatedPath {
    pub tree_index: usize,
    pub nodes: Vec<usize>,
    pub steps: Vec<PathStep>,
    pub root_value: f64,
    pub leaf_value: f64,
    /// `leaf_value - root_value`
    pub contribution: f64,
}

impl StudentForest {
    pub fn n_features(&self) -> usize {
        self.feature_block_map.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Untrained("student forest"));
        }
        if self.feature_block_map.iter().any(|&b| b >= 5) {
            return Err(Error::InvalidConfig("feature block map must point at one of five attributes".into()));
        }
        for tree in &self.trees {
            tree.validate(self.n_features())?;
            if tree
                .nodes
                .iter()
                .any(|n| n.is_leaf() && !(0.0..=1.0).contains(&n.value))
            {
                return Err(Error::InvalidConfig("student leaf value outside [0, 1]".into()));
            }
        }
        Ok(())
    }
}

/// Fits `config.n_trees` variance-reduction trees, each on its own bootstrap
/// sample with per-split feature subsampling. Tree `i` draws from a stream
/// seeded by `(config.seed, i)`.
pub fn train_student(
    rows: &[Vec<f64>],
    targets: &[f64],
    feature_block_map: Vec<usize>,
    config: &StudentConfig,
) -> Result<StudentForest> {
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput("student training"));
    }
    if config.n_trees == 0 {
        return Err(Error::InvalidConfig("student needs at least one tree".into()));
    }
    let n_features = rows[0].len();
    if feature_block_map.len() != n_features || rows.iter().any(|r| r.len() != n_features) {
        return Err(Error::InvalidConfig("rows and feature block map disagree in width".into()));
    }
    let grower = TreeGrower {
        rows,
        targets,
        config: GrowConfig {
            max_depth: config.max_depth,
            min_samples_leaf: config.min_samples_leaf,
            max_features: config.feature_subsample.resolve(n_features),
        },
        node_value: |samples: &[usize]| mean_var(samples.iter().map(|&i| targets[i])).0.clamp(0.0, 1.0),
    };
    let n = rows.len();
    let trees = (0..config.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, t as u64));
            let samples = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grower.grow(samples, &mut rng)
        })
        .collect();
    Ok(StudentForest {
        trees,
        feature_block_map,
    })
}

/// Mean decrease in impurity: every split adds
/// `(n_node / n_root) · (impurity − weighted child impurity)` to its feature's
/// attribute; totals are normalized over the five attributes.
pub fn attribute_importance_global(forest: &StudentForest) -> AttributeImportance {
    let mut raw = [0.0; 5];
    for tree in &forest.trees {
        let n_root = tree.nodes[0].n_samples.max(1) as f64;
        for node in &tree.nodes {
            let Some(split) = &node.split else { continue };
            let left = &tree.nodes[split.left];
            let right = &tree.nodes[split.right];
            let n = node.n_samples as f64;
            let children = (left.n_samples as f64 / n) * left.impurity
                + (right.n_samples as f64 / n) * right.impurity;
            let decrease = (node.impurity - children).max(0.0);
            raw[forest.feature_block_map[split.feature]] += (n / n_root) * decrease;
        }
    }
    AttributeImportance::from_raw(raw)
}

/// Sums the absolute value change of every activated-path step per attribute,
/// over all trees, then normalizes.
pub fn attribute_importance_instance(forest: &StudentForest, x: &[f64]) -> AttributeImportance {
    let mut raw = [0.0; 5];
    for tree in &forest.trees {
        for step in tree.path_steps(x) {
            raw[forest.feature_block_map[step.feature]] += step.delta.abs();
        }
    }
    AttributeImportance::from_raw(raw)
}

/// Same attribution without the absolute value: signed per-attribute sums
/// averaged over trees, so that their total equals the forest prediction
/// minus the mean root value.
pub fn signed_attribute_contributions(forest: &StudentForest, x: &[f64]) -> [f64; 5] {
    let mut raw = [0.0; 5];
    let n = forest.trees.len().max(1) as f64;
    for tree in &forest.trees {
        for step in tree.path_steps(x) {
            raw[forest.feature_block_map[step.feature]] += step.delta / n;
        }
    }
    raw
}

pub fn activated_paths(forest: &StudentForest, x: &[f64]) -> Vec<ActivatedPath> {
    forest
        .trees
        .iter()
        .enumerate()
        .map(|(tree_index, tree)| {
            let nodes = tree.node_path(x);
            let leaf_value = tree.nodes[*nodes.last().unwrap()].value;
            ActivatedPath {
                tree_index,
                steps: tree.path_steps(x),
                nodes,
                root_value: tree.root_value(),
                leaf_value,
                contribution: leaf_value - tree.root_value(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{Node, Split};

    fn map() -> Vec<usize> {
        // two columns per attribute
        (0..10).map(|f| f / 2).collect()
    }

    fn stump(feature: usize, threshold: f64, lo: f64, hi: f64) -> DecisionTree {
        DecisionTree {
            nodes: vec![
                Node {
                    split: Some(Split {
                        feature,
                        threshold,
                        left: 1,
                        right: 2,
                    }),
                    value: (lo + hi) / 2.0,
                    impurity: ((hi - lo) / 2.0).powi(2),
                    n_samples: 4,
                },
                Node::leaf(lo, 0.0, 2),
                Node::leaf(hi, 0.0, 2),
            ],
        }
    }

    #[test]
    fn constant_targets() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let forest = train_student(&rows, &[0.7; 30], vec![0, 4], &StudentConfig::default()).unwrap();
        assert_eq!(forest.trees.len(), 80);
        assert!(forest.trees.iter().all(|t| t.nodes.len() == 1 && t.predict(&[0.0, 0.0]) == 0.7));
        assert!((forest.predict(&[3.0, 1.0]) - 0.7).abs() < 1e-12);
        assert_eq!(attribute_importance_global(&forest), AttributeImportance::UNIFORM);
    }

    #[test]
    fn depth_one_recovers_both_values() {
        let rows = vec![vec![0.0, 5.0], vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]];
        let targets = [0.2, 0.2, 0.9, 0.9];
        let config = StudentConfig {
            n_trees: 5,
            max_depth: 1,
            min_samples_leaf: 1,
            feature_subsample: FeatureSubsample::All,
            bootstrap: false,
            seed: 1,
        };
        let forest = train_student(&rows, &targets, vec![0, 1], &config).unwrap();
        for tree in &forest.trees {
            assert_eq!(tree.nodes[0].split.unwrap().threshold, 1.5);
            assert_eq!(tree.predict(&rows[0]), 0.2);
            assert_eq!(tree.predict(&rows[3]), 0.9);
        }
        // with bootstrap every tree that managed to split still has both
        // target values in its leaves
        let bagged = train_student(&rows, &targets, vec![0, 1], &StudentConfig { bootstrap: true, ..config }).unwrap();
        for tree in bagged.trees.iter().filter(|t| t.nodes.len() == 3) {
            assert_eq!((tree.nodes[1].value, tree.nodes[2].value), (0.2, 0.9));
        }
        bagged.validate().unwrap();
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            train_student(&[vec![1.0]], &[0.1, 0.2], vec![0], &StudentConfig::default()),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn single_statement_split() {
        let forest = StudentForest {
            trees: vec![stump(9, 0.0, 0.1, 0.9)],
            feature_block_map: map(),
        };
        let global = attribute_importance_global(&forest);
        assert_eq!(global.scores, [0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn single_speaker_split_instance() {
        let forest = StudentForest {
            trees: vec![stump(4, 0.5, 0.3, 0.6)],
            feature_block_map: map(),
        };
        let x = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let inst = attribute_importance_instance(&forest, &x);
        assert_eq!(inst.scores, [0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn leaf_only_forest_is_uniform() {
        let forest = StudentForest {
            trees: vec![DecisionTree::constant(0.4, 3), DecisionTree::constant(0.6, 3)],
            feature_block_map: map(),
        };
        let x = [0.0; 10];
        assert_eq!(attribute_importance_global(&forest), AttributeImportance::UNIFORM);
        assert_eq!(attribute_importance_instance(&forest, &x), AttributeImportance::UNIFORM);
        let paths = activated_paths(&forest, &x);
        assert_eq!(paths.len(), 2);
        assert!(paths.iter().all(|p| p.nodes == vec![0] && p.contribution == 0.0));
        assert!((forest.predict(&x) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mean_of_two_trees() {
        let forest = StudentForest {
            trees: vec![DecisionTree::constant(0.2, 1), DecisionTree::constant(0.8, 1)],
            feature_block_map: vec![0],
        };
        assert_eq!(forest.predict(&[0.0]), 0.5);
    }
}
