//! HTTP API over a trained bundle.
//!
//! Endpoints (all JSON):
//!
//! | method | path | purpose |
//! |---|---|---|
//! | POST | `/api/predict` | score a news item and explain the score |
//! | GET | `/api/examples/random` | one held-out item, optionally `?seed=` |
//! | GET | `/api/examples?label=fake\|true&n=K` | first K held-out items with that label |
//! | GET | `/api/model/trees` | summary of the student forest |
//! | GET | `/api/model/trees/{i}` | one tree; attribute query parameters add its activated path |
//! | GET | `/api/health` | liveness and bundle identity |
//!
//! Every non-2xx response body is an [`ApiError`].

use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection, QueryRejection};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use veracity_core::bundle::ModelBundle;
use veracity_core::corpus::{parse_corpus, split_with, Attribute, BinaryLabel, NewsItem};
use veracity_core::ensemble::{explain, ExplainOptions, ExplanationBundle, Prediction};
use veracity_core::mimic::feature_block_map;
use veracity_core::tree::DecisionTree;

/// Shared, read-only server state.
pub struct AppState {
    pub bundle: ModelBundle,
    /// Training items searched for supporting examples.
    pub index: Vec<NewsItem>,
    /// Held-out items offered by the example endpoints.
    pub examples: Vec<NewsItem>,
    pub options: ExplainOptions,
}

impl AppState {
    /// Rebuilds the bundle's split from the corpus it was trained on.
    pub fn from_corpus(bundle: ModelBundle, corpus: Vec<NewsItem>) -> anyhow::Result<Self> {
        if !bundle.matches_corpus(&corpus) {
            anyhow::bail!("corpus does not match the one this bundle was trained on");
        }
        let split = split_with(&corpus, &bundle.config.split)?;
        Ok(AppState {
            bundle,
            index: split.train,
            examples: split.test,
            options: ExplainOptions::default(),
        })
    }

    pub fn load(bundle_path: &Path, corpus_path: &Path) -> anyhow::Result<Self> {
        let bundle = ModelBundle::load(bundle_path)?;
        let corpus = parse_corpus(std::io::BufReader::new(std::fs::File::open(corpus_path)?))?;
        Self::from_corpus(bundle, corpus)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub status: u16,
    /// Stable machine-readable code, e.g. `empty_statement`.
    pub code: String,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            status: status.as_u16(),
            code: code.to_string(),
            message: message.into(),
        }
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PredictRequest {
    #[serde(default)]
    pub id: Option<String>,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub context: Option<String>,
    #[serde(default)]
    pub speaker: Option<String>,
    #[serde(default)]
    pub targeting: Option<String>,
    #[serde(default)]
    pub statement: String,
}

impl PredictRequest {
    pub fn to_item(&self) -> NewsItem {
        let field = |v: &Option<String>| v.as_deref().map(str::trim).filter(|s| !s.is_empty()).map(str::to_string);
        NewsItem {
            id: self.id.clone().unwrap_or_else(|| "input".to_string()),
            subject: field(&self.subject),
            context: field(&self.context),
            speaker: field(&self.speaker),
            targeting: field(&self.targeting),
            statement: self.statement.trim().to_string(),
            raw_label: None,
            label: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictResponse {
    pub prediction: Prediction,
    pub explanation: ExplanationBundle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub format_version: u32,
    pub corpus_fingerprint: String,
    pub n_index: usize,
    pub n_examples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExampleList {
    pub label: BinaryLabel,
    pub items: Vec<NewsItem>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitView {
    pub feature: usize,
    pub attribute: Attribute,
    /// Column within the attribute block; `None` for its missing flag.
    pub dimension: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeView {
    pub id: usize,
    pub split: Option<SplitView>,
    pub value: f64,
    pub impurity: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeSummary {
    pub index: usize,
    pub n_nodes: usize,
    pub n_leaves: usize,
    pub depth: usize,
    pub root_value: f64,
    pub root_attribute: Option<Attribute>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestSummary {
    pub n_trees: usize,
    pub n_features: usize,
    pub trees: Vec<TreeSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeDetail {
    pub index: usize,
    pub nodes: Vec<NodeView>,
    /// Node ids from root to leaf for the echoed input, when one was given.
    pub activated_path: Option<Vec<usize>>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/predict", post(predict_handler))
        .route("/api/examples/random", get(random_example))
        .route("/api/examples", get(examples_by_label))
        .route("/api/model/trees", get(forest_summary))
        .route("/api/model/trees/{index}", get(tree_detail))
        .route("/api/health", get(health))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(StatusCode::METHOD_NOT_ALLOWED, "method_not_allowed", "method not allowed here")
        })
        .with_state(state)
}

async fn predict_handler(
    State(state): State<Arc<AppState>>,
    body: Result<Json<PredictRequest>, JsonRejection>,
) -> ApiResult<PredictResponse> {
    let Json(request) = body.map_err(|e| ApiError::bad_request("invalid_json", e.body_text()))?;
    let item = request.to_item();
    if item.statement.is_empty() {
        return Err(ApiError::bad_request("empty_statement", "statement must not be empty"));
    }
    let response = tokio::task::spawn_blocking(move || {
        explain(&item, &state.bundle.frameworks, state.bundle.weights, &state.index, state.options)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
    .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "prediction_failed", e.to_string()))?;
    Ok(Json(PredictResponse {
        prediction: response.prediction,
        explanation: response,
    }))
}

#[derive(Deserialize)]
struct RandomQuery {
    seed: Option<u64>,
}

async fn random_example(
    State(state): State<Arc<AppState>>,
    query: Result<Query<RandomQuery>, QueryRejection>,
) -> ApiResult<NewsItem> {
    let Query(query) = query.map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))?;
    let item = match query.seed {
        Some(seed) => state.examples.choose(&mut ChaCha8Rng::seed_from_u64(seed)),
        None => state.examples.choose(&mut rand::thread_rng()),
    };
    item.cloned()
        .map(Json)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no_examples", "no held-out items"))
}

#[derive(Deserialize)]
struct LabelQuery {
    label: String,
    n: Option<usize>,
}

const MAX_EXAMPLES: usize = 50;

async fn examples_by_label(
    State(state): State<Arc<AppState>>,
    query: Result<Query<LabelQuery>, QueryRejection>,
) -> ApiResult<ExampleList> {
    let Query(query) = query.map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))?;
    let label = match query.label.to_ascii_lowercase().as_str() {
        "fake" | "false" => BinaryLabel::False,
        "true" | "real" => BinaryLabel::True,
        other => {
            return Err(ApiError::bad_request(
                "invalid_label",
                format!("label must be fake or true, got {other:?}"),
            ))
        }
    };
    let n = query.n.unwrap_or(5);
    if n == 0 || n > MAX_EXAMPLES {
        return Err(ApiError::bad_request(
            "invalid_count",
            format!("n must be between 1 and {MAX_EXAMPLES}"),
        ));
    }
    let items = state
        .examples
        .iter()
        .filter(|i| i.label == Some(label))
        .take(n)
        .cloned()
        .collect();
    Ok(Json(ExampleList { label, items }))
}

fn column_attribute(block_map: &[usize], d: usize, feature: usize) -> (Attribute, Option<usize>) {
    let attribute = Attribute::ALL[block_map[feature]];
    let dimension = (feature < 5 * d).then(|| feature - attribute.index() * d);
    (attribute, dimension)
}

fn node_views(tree: &DecisionTree, block_map: &[usize], d: usize) -> Vec<NodeView> {
    tree.nodes
        .iter()
        .enumerate()
        .map(|(id, node)| NodeView {
            id,
            split: node.split.map(|s| {
                let (attribute, dimension) = column_attribute(block_map, d, s.feature);
                SplitView {
                    feature: s.feature,
                    attribute,
                    dimension,
                    threshold: s.threshold,
                    left: s.left,
                    right: s.right,
                }
            }),
            value: node.value,
            impurity: node.impurity,
            n_samples: node.n_samples,
        })
        .collect()
}

async fn forest_summary(State(state): State<Arc<AppState>>) -> Json<ForestSummary> {
    let forest = &state.bundle.frameworks.mimic.forest;
    let trees = forest
        .trees
        .iter()
        .enumerate()
        .map(|(index, tree)| TreeSummary {
            index,
            n_nodes: tree.nodes.len(),
            n_leaves: tree.n_leaves(),
            depth: tree.depth(),
            root_value: tree.root_value(),
            root_attribute: tree.nodes[0]
                .split
                .map(|s| Attribute::ALL[forest.feature_block_map[s.feature]]),
        })
        .collect();
    Json(ForestSummary {
        n_trees: forest.trees.len(),
        n_features: forest.n_features(),
        trees,
    })
}

async fn tree_detail(
    State(state): State<Arc<AppState>>,
    index: Result<UrlPath<usize>, PathRejection>,
    echo: Result<Query<PredictRequest>, QueryRejection>,
) -> ApiResult<TreeDetail> {
    let UrlPath(index) = index.map_err(|e| ApiError::bad_request("invalid_index", e.body_text()))?;
    let Query(echo) = echo.map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))?;
    let mimic = &state.bundle.frameworks.mimic;
    let tree = mimic.forest.trees.get(index).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "no_such_tree",
            format!("tree {index} of {}", mimic.forest.trees.len()),
        )
    })?;
    let item = echo.to_item();
    let has_input = !item.statement.is_empty()
        || Attribute::ALL.iter().any(|&a| item.attribute(a).is_some_and(|v| !v.is_empty()));
    let activated_path = has_input.then(|| {
        let x = mimic.encode(&item, &state.bundle.frameworks.mimic_vectors).features();
        tree.node_path(&x)
    });
    let d = mimic.field_dim;
    debug_assert_eq!(mimic.forest.feature_block_map, feature_block_map(d));
    Ok(Json(TreeDetail {
        index,
        nodes: node_views(tree, &mimic.forest.feature_block_map, d),
        activated_path,
    }))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".to_string(),
        format_version: state.bundle.format_version,
        corpus_fingerprint: state.bundle.corpus_fingerprint.clone(),
        n_index: state.index.len(),
        n_examples: state.examples.len(),
    })
}
