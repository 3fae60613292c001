#![allow(dead_code)]

use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;

use veracity_core::corpus::{parse_corpus, NewsItem};
use veracity_core::pipeline::{train, TrainConfig, TrainOutcome};
use veracity_core::text::{load_embeddings, EmbeddingTable};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn mini_corpus() -> Vec<NewsItem> {
    parse_corpus(BufReader::new(File::open(data("mini_corpus.jsonl")).unwrap())).unwrap()
}

pub fn vectors(dim: usize) -> EmbeddingTable {
    let file = File::open(data(&format!("vectors-{dim}d.txt"))).unwrap();
    load_embeddings(BufReader::new(file), dim).unwrap()
}

/// Small, fast configuration for tests that need a trained bundle but not
/// a good one.
pub fn tiny_config() -> TrainConfig {
    let mut config = TrainConfig::default();
    config.mimic.teacher.hidden = vec![16, 8];
    config.mimic.teacher.epochs = 20;
    config.mimic.student.n_trees = 12;
    config.attn.hidden_dim = 16;
    config.attn.attn_dim = 8;
    config.attn.epochs = 3;
    config.attn.learning_rate = 1e-3;
    config.gbm.n_stages = 20;
    config.importance_rounds = 3;
    config
}

pub fn tiny_outcome() -> TrainOutcome {
    train(&mini_corpus(), &vectors(50), &vectors(300), &tiny_config()).unwrap()
}
