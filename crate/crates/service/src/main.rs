use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use veracity_core::bundle::ModelBundle;
use veracity_core::corpus::{parse_corpus, split_with, Attribute, NewsItem, SplitSpec};
use veracity_core::ensemble::{explain, ExplainOptions};
use veracity_core::pipeline::{evaluate, train, ImportanceData, TrainConfig};
use veracity_core::text::{load_embeddings, EmbeddingTable};
use veracity_service::{router, AppState, PredictRequest};

#[derive(Parser)]
#[command(name = "veracity", version, about = "Explainable news credibility scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a corpus and print label and split statistics.
    Ingest {
        corpus: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
    },
    /// Train all three frameworks and write a model bundle.
    Train {
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Vectors for attribute encoding (at least 50 dimensions).
        #[arg(long, default_value = "data/vectors-50d.txt")]
        vectors: PathBuf,
        /// Vectors for the attention model.
        #[arg(long, default_value = "data/vectors-300d.txt")]
        attn_vectors: PathBuf,
        #[arg(long, default_value_t = 17)]
        seed: u64,
        #[arg(long)]
        stratified: bool,
        #[arg(long, value_enum, default_value_t = ImportanceSplit::Validation)]
        importance_data: ImportanceSplit,
        /// Override the attention model's epoch count.
        #[arg(long)]
        attn_epochs: Option<usize>,
    },
    /// Report held-out accuracy of each framework and of the ensemble.
    Eval {
        bundle: PathBuf,
        corpus: PathBuf,
        /// Evaluate every item instead of the bundle's test split.
        #[arg(long)]
        all: bool,
        #[arg(long)]
        json: bool,
    },
    /// Score one item and print the explanation as JSON.
    Explain {
        bundle: PathBuf,
        #[arg(long)]
        statement: String,
        #[arg(long)]
        subject: Option<String>,
        #[arg(long)]
        context: Option<String>,
        #[arg(long)]
        speaker: Option<String>,
        #[arg(long)]
        targeting: Option<String>,
        /// Training corpus, for supporting examples.
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        bundle: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, env = "VERACITY_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ImportanceSplit {
    Validation,
    Training,
}

fn read_corpus(path: &Path) -> anyhow::Result<Vec<NewsItem>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_corpus(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn read_vectors(path: &Path) -> anyhow::Result<EmbeddingTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut first = String::new();
    std::io::BufRead::read_line(&mut BufReader::new(File::open(path)?), &mut first)?;
    let fields: Vec<&str> = first.split_whitespace().collect();
    // a word2vec header is "count dim"; otherwise the dimension is the width
    let dim = match fields.as_slice() {
        [count, dim] if count.parse::<usize>().is_ok() => dim.parse::<usize>()?,
        [_, rest @ ..] => rest.len(),
        [] => bail!("{} is empty", path.display()),
    };
    load_embeddings(BufReader::new(file), dim).with_context(|| format!("reading {}", path.display()))
}

fn ingest(corpus: &Path, seed: u64) -> anyhow::Result<()> {
    let items = read_corpus(corpus)?;
    let mut raw = std::collections::BTreeMap::<String, usize>::new();
    let (mut fake, mut real, mut unlabeled) = (0, 0, 0);
    for item in &items {
        match item.label {
            Some(l) if l.is_fake() => fake += 1,
            Some(_) => real += 1,
            None => unlabeled += 1,
        }
        if let Some(r) = item.raw_label {
            *raw.entry(r.to_string()).or_default() += 1;
        }
    }
    let missing: serde_json::Map<String, serde_json::Value> = Attribute::ALL
        .iter()
        .map(|&a| {
            let n = items.iter().filter(|i| i.attribute(a).is_none()).count();
            (a.name().to_string(), json!(n))
        })
        .collect();
    let split = split_with(&items, &SplitSpec { seed, ..SplitSpec::default() }).ok();
    let report = json!({
        "items": items.len(),
        "fake": fake,
        "true": real,
        "unlabeled": unlabeled,
        "raw_labels": raw,
        "missing": missing,
        "split": split.map(|s| json!({"train": s.train.len(), "val": s.val.len(), "test": s.test.len()})),
    });
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Ingest { corpus, seed } => ingest(&corpus, seed),
        Command::Train {
            corpus,
            out,
            vectors,
            attn_vectors,
            seed,
            stratified,
            importance_data,
            attn_epochs,
        } => {
            let start = Instant::now();
            let items = read_corpus(&corpus)?;
            let mimic_table = read_vectors(&vectors)?;
            let attn_table = read_vectors(&attn_vectors)?;
            let mut config = TrainConfig::default();
            config.split.seed = seed;
            config.split.stratified = stratified;
            config.attn.embed_dim = attn_table.dim();
            config.mimic.field_dim = config.mimic.field_dim.min(mimic_table.dim());
            if let Some(epochs) = attn_epochs {
                config.attn.epochs = epochs;
            }
            config.importance_data = match importance_data {
                ImportanceSplit::Validation => ImportanceData::Validation,
                ImportanceSplit::Training => ImportanceData::Training,
            };
            let outcome = train(&items, &mimic_table, &attn_table, &config)?;
            outcome.bundle.save(&out).with_context(|| format!("writing {}", out.display()))?;
            let r = &outcome.report;
            println!("split: {} train / {} val / {} test", r.n_train, r.n_val, r.n_test);
            println!(
                "validation accuracy: mimic {:.4}  attn {:.4}  pert {:.4}",
                r.validation_accuracy.mimic, r.validation_accuracy.attn, r.validation_accuracy.pert
            );
            println!(
                "weights: mimic {:.4}  attn {:.4}  pert {:.4}",
                r.weights.mimic, r.weights.attn, r.weights.pert
            );
            println!("wrote {} in {:.1}s", out.display(), start.elapsed().as_secs_f64());
            Ok(())
        }
        Command::Eval {
            bundle,
            corpus,
            all,
            json,
        } => {
            let bundle = ModelBundle::load(&bundle).with_context(|| format!("loading {}", bundle.display()))?;
            let items = read_corpus(&corpus)?;
            let scope = if all {
                items
            } else {
                if !bundle.matches_corpus(&items) {
                    bail!("corpus differs from the training corpus; pass --all to evaluate every item");
                }
                split_with(&items, &bundle.config.split)?.test
            };
            let e = evaluate(&bundle, &scope)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&e)?);
                return Ok(());
            }
            println!("items: {}", e.n_items);
            println!("mimic accuracy: {:.4}", e.mimic_accuracy);
            println!("attn accuracy: {:.4}", e.attn_accuracy);
            println!("pert accuracy: {:.4}", e.pert_accuracy);
            println!("ensemble accuracy: {:.4}", e.ensemble_accuracy);
            println!("majority baseline: {:.4}", e.majority_baseline);
            match e.derived_weights {
                Some(w) => println!("derived weights: mimic {:.4}  attn {:.4}  pert {:.4}", w.mimic, w.attn, w.pert),
                None => println!("derived weights: undefined (a framework scored 0)"),
            }
            let w = e.bundle_weights;
            println!("bundle weights: mimic {:.4}  attn {:.4}  pert {:.4}", w.mimic, w.attn, w.pert);
            Ok(())
        }
        Command::Explain {
            bundle,
            statement,
            subject,
            context,
            speaker,
            targeting,
            corpus,
        } => {
            let bundle = ModelBundle::load(&bundle).with_context(|| format!("loading {}", bundle.display()))?;
            let index = match corpus {
                Some(path) => {
                    let items = read_corpus(&path)?;
                    if bundle.matches_corpus(&items) {
                        split_with(&items, &bundle.config.split)?.train
                    } else {
                        items
                    }
                }
                None => Vec::new(),
            };
            let request = PredictRequest {
                id: None,
                subject,
                context,
                speaker,
                targeting,
                statement,
            };
            let item = request.to_item();
            if item.statement.is_empty() {
                bail!("--statement must not be empty");
            }
            let out = explain(&item, &bundle.frameworks, bundle.weights, &index, ExplainOptions::default())?;
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(())
        }
        Command::Serve { bundle, corpus, addr } => {
            let state = Arc::new(AppState::load(&bundle, &corpus)?);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                tracing::info!("listening on http://{}", listener.local_addr()?);
                axum::serve(listener, router(state))
                    .with_graceful_shutdown(async {
                        let _ = tokio::signal::ctrl_c().await;
                    })
                    .await?;
                Ok(())
            })
        }
    }
}

fn main() {
    tracing_subscriber::fmt().with_target(false).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
