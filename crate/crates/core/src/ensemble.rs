//! Weighted combination of the three frameworks, supporting-example
//! retrieval and the explanation bundle returned to clients.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::attn::{attribution, AttnModel, NgramSpan, TokenAttribution};
use crate::corpus::{Attribute, NewsItem};
use crate::error::{Error, Result};
use crate::mimic::{
    activated_paths, attribute_importance_global, attribute_importance_instance,
    signed_attribute_contributions, ActivatedPath, AttributeImportance, MimicModel,
};
use crate::nn::{sigmoid, Parameters};
use crate::pert::{FeatureImportance8, PertModel, FEATURE_NAMES, N_FEATURES};
use crate::text::{content_words, is_content_token, normalize_field, tokenize, EmbeddingTable, Token};

/// Version of the [`ExplanationBundle`] JSON layout.
pub const EXPLANATION_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_SUPPORTS: usize = 3;
pub const DEFAULT_TOP_WORDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameworkWeights {
    pub mimic: f64,
    pub attn: f64,
    pub pert: f64,
}

impl FrameworkWeights {
    pub const EQUAL: FrameworkWeights = FrameworkWeights {
        mimic: 1.0 / 3.0,
        attn: 1.0 / 3.0,
        pert: 1.0 / 3.0,
    };

    pub fn as_array(&self) -> [f64; 3] {
        [self.mimic, self.attn, self.pert]
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("weights {w:?} are not a distribution")));
        }
        Ok(())
    }
}

/// Weights proportional to each framework's validation accuracy, given in
/// the order (mimic, attn, pert).
pub fn tune_weights(accuracies: [f64; 3]) -> Result<FrameworkWeights> {
    if let Some(&bad) = accuracies.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
        return Err(Error::NonPositiveAccuracy(bad));
    }
    let total: f64 = accuracies.iter().sum();
    Ok(FrameworkWeights {
        mimic: accuracies[0] / total,
        attn: accuracies[1] / total,
        pert: accuracies[2] / total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameworkProbabilities {
    pub mimic: f64,
    pub attn: f64,
    pub pert: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Probability that the item is fake.
    pub score: f64,
    pub probabilities: FrameworkProbabilities,
    pub weights: FrameworkWeights,
}

pub fn combine(probabilities: FrameworkProbabilities, weights: FrameworkWeights) -> Prediction {
    let p = [probabilities.mimic, probabilities.attn, probabilities.pert];
    let w = weights.as_array();
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let score = (w[0] * p[0] + w[1] * p[1] + w[2] * p[2]).clamp(lo, hi);
    Prediction {
        score,
        probabilities,
        weights,
    }
}

/// The three trained models with the vectors and lexicons they read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frameworks {
    pub mimic: MimicModel,
    pub attn: AttnModel,
    pub pert: PertModel,
    /// Permutation importance measured after training.
    pub pert_importance: FeatureImportance8,
    pub mimic_vectors: EmbeddingTable,
    pub attn_vectors: EmbeddingTable,
}

impl Frameworks {
    pub fn validate(&self) -> Result<()> {
        self.mimic.forest.validate()?;
        if self.attn.branches.is_empty() || !self.attn.all_finite() {
            return Err(Error::Untrained("attention model"));
        }
        if self.attn.embed_dim != self.attn_vectors.dim() {
            return Err(Error::InvalidConfig(format!(
                "attention model expects {}-d vectors, table has {}",
                self.attn.embed_dim,
                self.attn_vectors.dim()
            )));
        }
        if self.mimic.field_dim > self.mimic_vectors.dim() {
            return Err(Error::InvalidConfig("attribute vectors are narrower than the model".into()));
        }
        self.pert.gbm.validate()
    }

    pub fn probabilities(&self, item: &NewsItem) -> Result<FrameworkProbabilities> {
        let tokens = statement_tokens(item)?;
        Ok(FrameworkProbabilities {
            mimic: self.mimic.predict(item, &self.mimic_vectors),
            attn: self.attn.predict(&tokens, &self.attn_vectors)?,
            pert: self.pert.predict(&item.statement)?,
        })
    }
}

fn statement_tokens(item: &NewsItem) -> Result<Vec<Token>> {
    let tokens = tokenize(&item.statement);
    if tokens.is_empty() {
        return Err(Error::EmptyInput("statement"));
    }
    Ok(tokens)
}

pub fn predict(item: &NewsItem, frameworks: &Frameworks, weights: FrameworkWeights) -> Result<Prediction> {
    frameworks.validate()?;
    weights.validate()?;
    Ok(combine(frameworks.probabilities(item)?, weights))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportOrigin {
    AttributeMatch,
    WordMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportingExample {
    pub item: NewsItem,
    pub origin: SupportOrigin,
    pub similarity: f64,
    /// Attribute names or words shared with the input.
    pub matched: Vec<String>,
}

fn rank(mut found: Vec<SupportingExample>, k: usize) -> Vec<SupportingExample> {
    found.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.item.id.cmp(&b.item.id))
    });
    found.truncate(k);
    found
}

fn attribute_matches(attr: Attribute, input: &str, candidate: &str, input_words: &HashSet<String>) -> bool {
    match attr {
        Attribute::Statement => content_words(candidate).iter().any(|w| input_words.contains(w)),
        _ => normalize_field(input) == normalize_field(candidate),
    }
}

/// Training items sharing important attributes with `item`. A statement
/// matches on any shared content word, other attributes on equality after
/// normalization. Similarity is the matched share of the importance held by
/// the attributes `item` actually has.
pub fn retrieve_supports_mimic(
    item: &NewsItem,
    importance: &AttributeImportance,
    index: &[NewsItem],
    k: usize,
) -> Vec<SupportingExample> {
    let present: Vec<(Attribute, &str)> = Attribute::ALL
        .iter()
        .filter_map(|&a| item.attribute(a).filter(|v| !v.trim().is_empty()).map(|v| (a, v)))
        .collect();
    let total: f64 = present.iter().map(|(a, _)| importance.scores[a.index()]).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let input_words = content_words(&item.statement);
    let found = index
        .iter()
        .filter_map(|candidate| {
            let mut matched = Vec::new();
            let mut score = 0.0;
            for &(attr, value) in &present {
                let Some(other) = candidate.attribute(attr) else { continue };
                if attribute_matches(attr, value, other, &input_words) {
                    matched.push(attr.name().to_string());
                    score += importance.scores[attr.index()];
                }
            }
            (!matched.is_empty() && score > 0.0).then(|| SupportingExample {
                item: candidate.clone(),
                origin: SupportOrigin::AttributeMatch,
                similarity: (score / total).min(1.0),
                matched,
            })
        })
        .collect();
    rank(found, k)
}

/// The `top_m` highest-attributed distinct content words, best first.
pub fn top_words(tokens: &[Token], attribution: &TokenAttribution, top_m: usize) -> Vec<(String, f64)> {
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (token, &score) in tokens.iter().zip(&attribution.token_scores) {
        if is_content_token(token) && score > 0.0 {
            let entry = best.entry(token.normalized.as_str()).or_insert(score);
            *entry = entry.max(score);
        }
    }
    let mut words: Vec<(String, f64)> = best.into_iter().map(|(w, s)| (w.to_string(), s)).collect();
    words.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    words.truncate(top_m);
    words
}

/// Training items whose statements contain the input's most attended words,
/// scored by the attribution they cover over the attribution of all top words.
pub fn retrieve_supports_attn(
    tokens: &[Token],
    attribution: &TokenAttribution,
    index: &[NewsItem],
    k: usize,
    top_m: usize,
) -> Vec<SupportingExample> {
    let words = top_words(tokens, attribution, top_m);
    let total: f64 = words.iter().map(|(_, s)| s).sum();
    if total <= 0.0 {
        return Vec::new();
    }
    let found = index
        .iter()
        .filter_map(|candidate| {
            let candidate_words = content_words(&candidate.statement);
            let mut matched = Vec::new();
            let mut score = 0.0;
            for (word, s) in &words {
                if candidate_words.contains(word) {
                    matched.push(word.clone());
                    score += s;
                }
            }
            (!matched.is_empty()).then(|| SupportingExample {
                item: candidate.clone(),
                origin: SupportOrigin::WordMatch,
                similarity: (score / total).min(1.0),
                matched,
            })
        })
        .collect();
    rank(found, k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeExplanation {
    pub attribute: Attribute,
    pub missing: bool,
    pub global_importance: f64,
    pub instance_importance: f64,
    /// Signed push on the forest output; positive means toward fake.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimicExplanation {
    pub probability: f64,
    pub teacher_probability: f64,
    pub attributes: Vec<AttributeExplanation>,
    pub activated_paths: Vec<ActivatedPath>,
    pub supports: Vec<SupportingExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenScore {
    pub token: String,
    /// Character offsets into the statement.
    pub span: (usize, usize),
    pub score: f64,
    pub kernel_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnExplanation {
    pub probability: f64,
    pub tokens: Vec<TokenScore>,
    pub ngrams: Vec<NgramSpan>,
    pub top_words: Vec<String>,
    pub supports: Vec<SupportingExample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExplanation {
    pub name: String,
    pub value: f64,
    /// Signed log-odds contribution; positive means toward fake.
    pub contribution: f64,
    /// Global permutation importance.
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PertExplanation {
    pub probability: f64,
    pub base_log_odds: f64,
    pub log_odds: f64,
    pub features: Vec<FeatureExplanation>,
    pub importance_baseline: f64,
    pub importance_rounds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub schema_version: u32,
    pub item_id: String,
    pub prediction: Prediction,
    pub mimic: MimicExplanation,
    pub attn: AttnExplanation,
    pub pert: PertExplanation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainOptions {
    pub supports: usize,
    pub top_words: usize,
}

impl Default for ExplainOptions {
    fn default() -> Self {
        ExplainOptions {
            supports: DEFAULT_SUPPORTS,
            top_words: DEFAULT_TOP_WORDS,
        }
    }
}

pub fn explain(
    item: &NewsItem,
    frameworks: &Frameworks,
    weights: FrameworkWeights,
    index: &[NewsItem],
    options: ExplainOptions,
) -> Result<ExplanationBundle> {
    frameworks.validate()?;
    weights.validate()?;
    let tokens = statement_tokens(item)?;

    let encoded = frameworks.mimic.encode(item, &frameworks.mimic_vectors);
    let x = encoded.features();
    let forest = &frameworks.mimic.forest;
    let global = attribute_importance_global(forest);
    let instance = attribute_importance_instance(forest, &x);
    let signed = signed_attribute_contributions(forest, &x);
    let attributes = Attribute::ALL
        .iter()
        .map(|&a| AttributeExplanation {
            attribute: a,
            missing: encoded.missing[a.index()],
            global_importance: global.scores[a.index()],
            instance_importance: instance.scores[a.index()],
            contribution: signed[a.index()],
        })
        .collect();
    let mimic = MimicExplanation {
        probability: forest.predict(&x),
        teacher_probability: frameworks.mimic.teacher.predict(&x),
        attributes,
        activated_paths: activated_paths(forest, &x),
        supports: retrieve_supports_mimic(item, &instance, index, options.supports),
    };

    let attn_out = frameworks.attn.forward(&tokens, &frameworks.attn_vectors)?;
    let attr = attribution(&frameworks.attn, &tokens, &frameworks.attn_vectors)?;
    let kernel_sizes: Vec<usize> = frameworks.attn.branches.iter().map(|b| b.kernel_size).collect();
    let words = top_words(&tokens, &attr, options.top_words);
    let attn = AttnExplanation {
        probability: attn_out.probability,
        tokens: tokens
            .iter()
            .zip(attr.token_scores.iter().zip(&attr.token_branch))
            .map(|(t, (&score, &branch))| TokenScore {
                token: t.surface.clone(),
                span: t.span,
                score,
                kernel_size: kernel_sizes[branch],
            })
            .collect(),
        ngrams: attr.spans.clone(),
        top_words: words.into_iter().map(|(w, _)| w).collect(),
        supports: retrieve_supports_attn(&tokens, &attr, index, options.supports, options.top_words),
    };

    let features = frameworks.pert.features(&item.statement)?;
    let contributions = crate::pert::feature_contributions(&frameworks.pert.gbm, &features);
    let values = features.to_array();
    let log_odds = contributions.log_odds();
    let pert = PertExplanation {
        probability: sigmoid(frameworks.pert.gbm.log_odds(&values)),
        base_log_odds: contributions.base,
        log_odds,
        features: (0..N_FEATURES)
            .map(|j| FeatureExplanation {
                name: FEATURE_NAMES[j].to_string(),
                value: values[j],
                contribution: contributions.contributions[j],
                importance: frameworks.pert_importance.importances[j],
            })
            .collect(),
        importance_baseline: frameworks.pert_importance.baseline,
        importance_rounds: frameworks.pert_importance.rounds,
    };

    let prediction = combine(
        FrameworkProbabilities {
            mimic: mimic.probability,
            attn: attn.probability,
            pert: pert.probability,
        },
        weights,
    );
    Ok(ExplanationBundle {
        schema_version: EXPLANATION_SCHEMA_VERSION,
        item_id: item.id.clone(),
        prediction,
        mimic,
        attn,
        pert,
    })
}
