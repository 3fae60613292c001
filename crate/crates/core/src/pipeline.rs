//! End-to-end training and evaluation over a labeled corpus.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::attn::{train_attn, AttnConfig, AttnExample, AttnModel};
use crate::bundle::{corpus_fingerprint, ModelBundle, BUNDLE_FORMAT_VERSION};
use crate::corpus::{split_with, CorpusSplit, NewsItem, SplitSpec};
use crate::ensemble::{combine, tune_weights, FrameworkWeights, Frameworks};
use crate::error::{Error, Result};
use crate::mimic::{MimicConfig, MimicModel};
use crate::pert::{perturbation_importance, train_gbm, GbmConfig, PertModel};
use crate::text::{tokenize, EmbeddingTable};

/// Which split the permutation importance is measured on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceData {
    Validation,
    Training,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub split: SplitSpec,
    pub mimic: MimicConfig,
    pub attn: AttnConfig,
    pub gbm: GbmConfig,
    pub importance_rounds: usize,
    pub importance_data: ImportanceData,
    pub importance_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            split: SplitSpec::default(),
            mimic: MimicConfig::default(),
            attn: AttnConfig::default(),
            gbm: GbmConfig::default(),
            importance_rounds: 10,
            importance_data: ImportanceData::Validation,
            importance_seed: 23,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationAccuracy {
    pub mimic: f64,
    pub attn: f64,
    pub pert: f64,
}

impl ValidationAccuracy {
    pub fn as_array(&self) -> [f64; 3] {
        [self.mimic, self.attn, self.pert]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub validation_accuracy: ValidationAccuracy,
    pub weights: FrameworkWeights,
    /// Mean |student − teacher| on the training rows.
    pub mimic_fidelity_mae: f64,
    pub attn_epoch_loss: Vec<f64>,
    pub gbm_final_loss: f64,
}

pub struct TrainOutcome {
    pub bundle: ModelBundle,
    pub split: CorpusSplit,
    pub report: TrainReport,
}

fn targets(items: &[NewsItem]) -> Vec<f64> {
    items.iter().map(|i| i.label.map_or(0.0, |l| l.fake_target())).collect()
}

fn hit(p: f64, item: &NewsItem) -> bool {
    item.label.is_some_and(|l| (p >= 0.5) == l.is_fake())
}

fn accuracy_of(items: &[NewsItem], mut p: impl FnMut(&NewsItem) -> Result<f64>) -> Result<f64> {
    let mut correct = 0;
    for item in items {
        if hit(p(item)?, item) {
            correct += 1;
        }
    }
    Ok(correct as f64 / items.len().max(1) as f64)
}

/// Splits the corpus, trains the three frameworks on the training part,
/// measures them on the validation part and derives the ensemble weights
/// from those accuracies. Vector tables are cut down to the corpus
/// vocabulary before they are stored.
pub fn train(
    items: &[NewsItem],
    mimic_vectors: &EmbeddingTable,
    attn_vectors: &EmbeddingTable,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if items.iter().any(|i| i.label.is_none()) {
        return Err(Error::InvalidConfig("every training item needs a label".into()));
    }
    if config.attn.embed_dim != attn_vectors.dim() {
        return Err(Error::InvalidConfig(format!(
            "attention model expects {}-d vectors, file has {}",
            config.attn.embed_dim,
            attn_vectors.dim()
        )));
    }
    let split = split_with(items, &config.split)?;
    let vocab: BTreeSet<String> = items
        .iter()
        .flat_map(|item| {
            crate::corpus::Attribute::ALL
                .iter()
                .filter_map(|&a| item.attribute(a))
                .flat_map(tokenize)
                .map(|t| t.normalized)
                .collect::<Vec<_>>()
        })
        .collect();
    let mimic_vectors = mimic_vectors.restricted_to(vocab.iter().map(String::as_str));
    let attn_vectors = attn_vectors.restricted_to(vocab.iter().map(String::as_str));

    let mimic = MimicModel::train(&split.train, &mimic_vectors, &config.mimic)?;

    let attn_examples: Vec<AttnExample> = split
        .train
        .iter()
        .map(|item| {
            AttnExample::new(
                &tokenize(&item.statement),
                &attn_vectors,
                config.attn.max_len,
                item.label.unwrap().fake_target(),
            )
        })
        .collect();
    let (attn, attn_history) = train_attn(AttnModel::new(&config.attn)?, &attn_examples, &config.attn)?;

    let mut pert = PertModel::with_builtin_lexicons(crate::pert::GbmModel::constant(0.0));
    let train_rows = pert.feature_rows(split.train.iter().map(|i| i.statement.as_str()))?;
    let gbm = train_gbm(&train_rows, &targets(&split.train), &config.gbm)?;
    pert.gbm = gbm.model;

    let (imp_items, imp_rows) = match config.importance_data {
        ImportanceData::Validation => (
            &split.val,
            pert.feature_rows(split.val.iter().map(|i| i.statement.as_str()))?,
        ),
        ImportanceData::Training => (&split.train, train_rows),
    };
    let pert_importance = perturbation_importance(
        &pert.gbm,
        &imp_rows,
        &targets(imp_items),
        config.importance_rounds,
        config.importance_seed,
    )?;

    let frameworks = Frameworks {
        mimic: mimic.model,
        attn,
        pert,
        pert_importance,
        mimic_vectors,
        attn_vectors,
    };
    let val = &split.val;
    let validation_accuracy = ValidationAccuracy {
        mimic: accuracy_of(val, |i| Ok(frameworks.mimic.predict(i, &frameworks.mimic_vectors)))?,
        attn: accuracy_of(val, |i| frameworks.attn.predict(&tokenize(&i.statement), &frameworks.attn_vectors))?,
        pert: accuracy_of(val, |i| frameworks.pert.predict(&i.statement))?,
    };
    let weights = tune_weights(validation_accuracy.as_array())?;

    let report = TrainReport {
        n_train: split.train.len(),
        n_val: split.val.len(),
        n_test: split.test.len(),
        validation_accuracy,
        weights,
        mimic_fidelity_mae: mimic.fidelity_mae,
        attn_epoch_loss: attn_history.epoch_loss,
        gbm_final_loss: *gbm.stage_loss.last().unwrap(),
    };
    let bundle = ModelBundle {
        format_version: BUNDLE_FORMAT_VERSION,
        corpus_fingerprint: corpus_fingerprint(items),
        config: config.clone(),
        validation_accuracy,
        weights,
        frameworks,
    };
    Ok(TrainOutcome {
        bundle,
        split,
        report,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_items: usize,
    pub mimic_accuracy: f64,
    pub attn_accuracy: f64,
    pub pert_accuracy: f64,
    pub ensemble_accuracy: f64,
    /// Accuracy of always answering the more frequent label of these items.
    pub majority_baseline: f64,
    /// Weights that these accuracies would give.
    pub derived_weights: Option<FrameworkWeights>,
    pub bundle_weights: FrameworkWeights,
}

pub fn evaluate(bundle: &ModelBundle, items: &[NewsItem]) -> Result<Evaluation> {
    let labeled: Vec<&NewsItem> = items.iter().filter(|i| i.label.is_some()).collect();
    if labeled.is_empty() {
        return Err(Error::EmptyInput("evaluation"));
    }
    let fw = &bundle.frameworks;
    let mut correct = [0usize; 4];
    for item in &labeled {
        let probs = fw.probabilities(item)?;
        let score = combine(probs, bundle.weights).score;
        for (c, p) in correct.iter_mut().zip([probs.mimic, probs.attn, probs.pert, score]) {
            if hit(p, item) {
                *c += 1;
            }
        }
    }
    let n = labeled.len() as f64;
    let fake = labeled.iter().filter(|i| i.label.unwrap().is_fake()).count() as f64;
    let acc = correct.map(|c| c as f64 / n);
    Ok(Evaluation {
        n_items: labeled.len(),
        mimic_accuracy: acc[0],
        attn_accuracy: acc[1],
        pert_accuracy: acc[2],
        ensemble_accuracy: acc[3],
        majority_baseline: fake.max(n - fake) / n,
        derived_weights: tune_weights([acc[0], acc[1], acc[2]]).ok(),
        bundle_weights: bundle.weights,
    })
}
