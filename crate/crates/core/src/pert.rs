//! Linguistic perspective: eight handcrafted features fed to a boosted tree
//! classifier, explained globally by permutation importance and locally by
//! signed path contributions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{bce_with_logit, derive_seed, sigmoid};
use crate::text::{pos_tag, sentiment_score, tokenize, PosLexicon, PosTag, SentimentLexicon, Token};
use crate::tree::{DecisionTree, GrowConfig, TreeGrower};

pub const N_FEATURES: usize = 8;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "adjective_ratio",
    "noun_ratio",
    "verb_ratio",
    "propn_ratio",
    "sentiment",
    "normalized_length",
    "has_question",
    "has_exclaim",
];

pub const DEFAULT_MAX_LEN: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinguisticFeatures {
    pub adjective_ratio: f64,
    pub noun_ratio: f64,
    pub verb_ratio: f64,
    pub propn_ratio: f64,
    pub sentiment: f64,
    pub normalized_length: f64,
    pub has_question: f64,
    pub has_exclaim: f64,
}

impl LinguisticFeatures {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.adjective_ratio,
            self.noun_ratio,
            self.verb_ratio,
            self.propn_ratio,
            self.sentiment,
            self.normalized_length,
            self.has_question,
            self.has_exclaim,
        ]
    }

    pub fn from_array(v: [f64; N_FEATURES]) -> Self {
        LinguisticFeatures {
            adjective_ratio: v[0],
            noun_ratio: v[1],
            verb_ratio: v[2],
            propn_ratio: v[3],
            sentiment: v[4],
            normalized_length: v[5],
            has_question: v[6],
            has_exclaim: v[7],
        }
    }
}

pub fn extract_features(
    tokens: &[Token],
    tags: &[PosTag],
    sentiment: f64,
    max_len: usize,
) -> Result<LinguisticFeatures> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput("linguistic features"));
    }
    if tokens.len() != tags.len() {
        return Err(Error::LengthMismatch {
            left: tokens.len(),
            right: tags.len(),
        });
    }
    if max_len == 0 {
        return Err(Error::InvalidConfig("length normalizer must be positive".into()));
    }
    let n = tokens.len() as f64;
    let ratio = |tag: PosTag| tags.iter().filter(|&&t| t == tag).count() as f64 / n;
    let has = |mark: &str| f64::from(u8::from(tokens.iter().any(|t| t.surface == mark)));
    Ok(LinguisticFeatures {
        adjective_ratio: ratio(PosTag::Adj),
        noun_ratio: ratio(PosTag::Noun),
        verb_ratio: ratio(PosTag::Verb),
        propn_ratio: ratio(PosTag::Propn),
        sentiment: if sentiment.is_finite() { sentiment.clamp(-1.0, 1.0) } else { 0.0 },
        normalized_length: (n / max_len as f64).min(1.0),
        has_question: has("?"),
        has_exclaim: has("!"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub n_stages: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        GbmConfig {
            n_stages: 100,
            max_depth: 3,
            learning_rate: 0.1,
            min_samples_leaf: 2,
            seed: 13,
        }
    }
}

/// Boosted log-odds model. Every tree node, internal or leaf, holds the
/// Newton step of the samples that reached it, so a stage's output can be
/// decomposed along its path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub base_score: f64,
    pub learning_rate: f64,
    pub stages: Vec<DecisionTree>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmTraining {
    pub model: GbmModel,
    /// Mean training log-loss before the first stage and after each stage.
    pub stage_loss: Vec<f64>,
}

impl GbmModel {
    pub fn constant(base_score: f64) -> Self {
        GbmModel {
            base_score,
            learning_rate: 0.1,
            stages: Vec::new(),
        }
    }

    pub fn log_odds(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.stages.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.log_odds(x))
    }

    pub fn validate(&self) -> Result<()> {
        if !self.base_score.is_finite() || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig("boosted model is not finite".into()));
        }
        self.stages.iter().try_for_each(|t| t.validate(N_FEATURES))
    }
}

pub fn predict_gbm(model: &GbmModel, features: &LinguisticFeatures) -> f64 {
    model.predict_row(&features.to_array())
}

fn mean_loss(logits: &[f64], targets: &[f64]) -> f64 {
    logits
        .iter()
        .zip(targets)
        .map(|(&l, &t)| bce_with_logit(l, t))
        .sum::<f64>()
        / logits.len() as f64
}

/// Stagewise logistic boosting. Trees are split on the residuals `y - p`
/// and valued by the Newton step `Σr / Σp(1-p)`. A stage that would raise
/// the training loss is halved until it does not, so the loss never goes up.
pub fn train_gbm(rows: &[Vec<f64>], targets: &[f64], config: &GbmConfig) -> Result<GbmTraining> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("boosting"));
    }
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    if config.max_depth == 0 || !(config.learning_rate > 0.0) {
        return Err(Error::InvalidConfig("boosting needs depth ≥ 1 and a positive rate".into()));
    }
    let positives = targets.iter().filter(|&&t| t >= 0.5).count();
    if positives == 0 || positives == targets.len() {
        return Err(Error::SingleClass("boosting"));
    }
    let prior = positives as f64 / targets.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();

    let mut logits = vec![base_score; rows.len()];
    let mut stage_loss = vec![mean_loss(&logits, targets)];
    let mut stages = Vec::with_capacity(config.n_stages);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let grow = GrowConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        max_features: None,
    };

    for _ in 0..config.n_stages {
        let probs: Vec<f64> = logits.iter().map(|&l| sigmoid(l)).collect();
        let residuals: Vec<f64> = targets.iter().zip(&probs).map(|(t, p)| t - p).collect();
        let grower = TreeGrower {
            rows,
            targets: &residuals,
            config: grow,
            node_value: |samples: &[usize]| {
                let num: f64 = samples.iter().map(|&i| residuals[i]).sum();
                let den: f64 = samples.iter().map(|&i| probs[i] * (1.0 - probs[i])).sum();
                if den > 1e-12 {
                    num / den
                } else {
                    0.0
                }
            },
        };
        let mut tree = grower.grow((0..rows.len()).collect(), &mut rng);
        let previous = *stage_loss.last().unwrap();
        let mut step: Vec<f64> = rows.iter().map(|r| tree.predict(r)).collect();
        let mut halvings = 0;
        let (next_logits, loss) = loop {
            let candidate: Vec<f64> = logits
                .iter()
                .zip(&step)
                .map(|(l, s)| l + config.learning_rate * s)
                .collect();
            let loss = mean_loss(&candidate, targets);
            if loss <= previous {
                break (candidate, loss);
            }
            halvings += 1;
            if halvings > 50 {
                tree.scale_values(0.0);
                break (logits.clone(), previous);
            }
            tree.scale_values(0.5);
            step.iter_mut().for_each(|s| *s *= 0.5);
        };
        logits = next_logits;
        stage_loss.push(loss);
        stages.push(tree);
    }
    Ok(GbmTraining {
        model: GbmModel {
            base_score,
            learning_rate: config.learning_rate,
            stages,
        },
        stage_loss,
    })
}

/// Fraction of rows whose thresholded prediction matches the 0/1 target.
pub fn accuracy(model: &GbmModel, rows: &[Vec<f64>], targets: &[f64]) -> f64 {
    correct_count(model, rows, targets) as f64 / rows.len().max(1) as f64
}

fn correct_count(model: &GbmModel, rows: &[Vec<f64>], targets: &[f64]) -> usize {
    rows.iter()
        .zip(targets)
        .filter(|(r, &t)| (model.predict_row(r) >= 0.5) == (t >= 0.5))
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance8 {
    /// Mean accuracy drop per feature; negative when shuffling helped.
    pub importances: [f64; N_FEATURES],
    pub rounds: usize,
    pub baseline: f64,
}

/// Accuracy drop when one column at a time is replaced by a seeded
/// permutation of itself. Each (feature, round) pair draws from its own
/// derived seed, and the features run on separate threads.
pub fn perturbation_importance(
    model: &GbmModel,
    rows: &[Vec<f64>],
    targets: &[f64],
    rounds: usize,
    seed: u64,
) -> Result<FeatureImportance8> {
    if rows.is_empty() {
        return Err(Error::EmptyInput("perturbation importance"));
    }
    if rows.len() != targets.len() {
        return Err(Error::LengthMismatch {
            left: rows.len(),
            right: targets.len(),
        });
    }
    if rounds == 0 {
        return Err(Error::InvalidConfig("at least one perturbation round is needed".into()));
    }
    let n = rows.len();
    let baseline_correct = correct_count(model, rows, targets);
    let perturbed_correct: Vec<usize> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..N_FEATURES)
            .map(|j| {
                scope.spawn(move || {
                    let mut column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                    let mut shuffled = rows.to_vec();
                    let mut total = 0;
                    for round in 0..rounds {
                        let stream = (j * rounds + round) as u64;
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
                        column.shuffle(&mut rng);
                        for (row, &v) in shuffled.iter_mut().zip(&column) {
                            row[j] = v;
                        }
                        total += correct_count(model, &shuffled, targets);
                    }
                    total
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("importance worker")).collect()
    });
    // integer numerators keep untouched features at exactly zero
    let denom = (rounds * n) as f64;
    let mut importances = [0.0; N_FEATURES];
    for (imp, &correct) in importances.iter_mut().zip(&perturbed_correct) {
        *imp = (baseline_correct * rounds) as f64 / denom - correct as f64 / denom;
    }
    Ok(FeatureImportance8 {
        importances,
        rounds,
        baseline: baseline_correct as f64 / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedContributions {
    /// Positive values push toward fake.
    pub contributions: [f64; N_FEATURES],
    /// Log-odds before any split is taken.
    pub base: f64,
}

impl SignedContributions {
    pub fn log_odds(&self) -> f64 {
        self.base + self.contributions.iter().sum::<f64>()
    }
}

pub fn feature_contributions(model: &GbmModel, features: &LinguisticFeatures) -> SignedContributions {
    contributions_for_row(model, &features.to_array())
}

pub fn contributions_for_row(model: &GbmModel, x: &[f64]) -> SignedContributions {
    let mut contributions = [0.0; N_FEATURES];
    let mut base = model.base_score;
    for tree in &model.stages {
        base += model.learning_rate * tree.root_value();
        for step in tree.path_steps(x) {
            contributions[step.feature] += model.learning_rate * step.delta;
        }
    }
    SignedContributions {
        contributions,
        base,
    }
}

/// The boosted model together with the lexicons its features depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PertModel {
    pub gbm: GbmModel,
    pub max_len: usize,
    pub pos_lexicon: PosLexicon,
    pub sentiment_lexicon: SentimentLexicon,
}

impl PertModel {
    pub fn with_builtin_lexicons(gbm: GbmModel) -> Self {
        PertModel {
            gbm,
            max_len: DEFAULT_MAX_LEN,
            pos_lexicon: PosLexicon::builtin().clone(),
            sentiment_lexicon: SentimentLexicon::builtin().clone(),
        }
    }

    pub fn features(&self, statement: &str) -> Result<LinguisticFeatures> {
        let tokens = tokenize(statement);
        let tags = pos_tag(&tokens, &self.pos_lexicon);
        let sentiment = sentiment_score(&tokens, &self.sentiment_lexicon);
        extract_features(&tokens, &tags, sentiment, self.max_len)
    }

    pub fn predict(&self, statement: &str) -> Result<f64> {
        Ok(predict_gbm(&self.gbm, &self.features(statement)?))
    }

    pub fn contributions(&self, statement: &str) -> Result<SignedContributions> {
        Ok(feature_contributions(&self.gbm, &self.features(statement)?))
    }

    pub fn feature_rows<'a>(&self, statements: impl IntoIterator<Item = &'a str>) -> Result<Vec<Vec<f64>>> {
        statements
            .into_iter()
            .map(|s| self.features(s).map(|f| f.to_array().to_vec()))
            .collect()
    }
}
