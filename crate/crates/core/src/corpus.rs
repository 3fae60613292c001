//! News records: parsing, label binarization and deterministic splitting.
//!
//! A corpus file holds one JSON object per line with the fields `id`,
//! `subject`, `context`, `speaker`, `targeting`, `statement` and `label`.
//! Only `id` and `statement` are required.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fine-grained verdict as published by the fact-checking source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum RawLabel {
    True,
    MostlyTrue,
    HalfTrue,
    NoFlip,
    HalfFlip,
    False,
    MostlyFalse,
    PantsOnFire,
    FullFlop,
}

impl RawLabel {
    pub const ALL: [RawLabel; 9] = [
        RawLabel::True,
        RawLabel::MostlyTrue,
        RawLabel::HalfTrue,
        RawLabel::NoFlip,
        RawLabel::HalfFlip,
        RawLabel::False,
        RawLabel::MostlyFalse,
        RawLabel::PantsOnFire,
        RawLabel::FullFlop,
    ];

    /// Canonical slug written back by [`serialize_corpus`].
    pub fn as_str(self) -> &'static str {
        match self {
            RawLabel::True => "true",
            RawLabel::MostlyTrue => "mostly-true",
            RawLabel::HalfTrue => "half-true",
            RawLabel::NoFlip => "no-flip",
            RawLabel::HalfFlip => "half-flip",
            RawLabel::False => "false",
            RawLabel::MostlyFalse => "mostly-false",
            RawLabel::PantsOnFire => "pants-fire",
            RawLabel::FullFlop => "full-flop",
        }
    }
}

impl FromStr for RawLabel {
    type Err = Error;

    /// Case-insensitive; spaces, hyphens and underscores are ignored, so
    /// `"Pants On Fire"`, `"pants-on-fire"` and `"PANTS_ON_FIRE"` all parse.
    /// `barely-true` is the source's own slug for "Mostly False".
    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| !matches!(c, ' ' | '-' | '_'))
            .flat_map(char::to_lowercase)
            .collect();
        let label = match key.as_str() {
            "true" => RawLabel::True,
            "mostlytrue" => RawLabel::MostlyTrue,
            "halftrue" => RawLabel::HalfTrue,
            "noflip" => RawLabel::NoFlip,
            "halfflip" => RawLabel::HalfFlip,
            "false" => RawLabel::False,
            "mostlyfalse" | "barelytrue" => RawLabel::MostlyFalse,
            "pantsonfire" | "pantsfire" => RawLabel::PantsOnFire,
            "fullflop" => RawLabel::FullFlop,
            _ => return Err(Error::UnknownLabel(s.to_string())),
        };
        Ok(label)
    }
}

impl From<RawLabel> for String {
    fn from(label: RawLabel) -> String {
        label.as_str().to_string()
    }
}

impl TryFrom<String> for RawLabel {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary credibility label. `False` marks a fake item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinaryLabel {
    True,
    False,
}

impl BinaryLabel {
    pub fn is_fake(self) -> bool {
        self == BinaryLabel::False
    }

    /// Regression/classification target: 1.0 for fake, 0.0 for true.
    pub fn fake_target(self) -> f64 {
        if self.is_fake() {
            1.0
        } else {
            0.0
        }
    }
}

pub fn binarize_label(raw: RawLabel) -> BinaryLabel {
    match raw {
        RawLabel::True
        | RawLabel::MostlyTrue
        | RawLabel::HalfTrue
        | RawLabel::NoFlip
        | RawLabel::HalfFlip => BinaryLabel::True,
        RawLabel::False | RawLabel::MostlyFalse | RawLabel::PantsOnFire | RawLabel::FullFlop => {
            BinaryLabel::False
        }
    }
}

/// The five attributes of a news item, in encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Subject,
    Context,
    Speaker,
    Targeting,
    Statement,
}

impl Attribute {
    pub const ALL: [Attribute; 5] = [
        Attribute::Subject,
        Attribute::Context,
        Attribute::Speaker,
        Attribute::Targeting,
        Attribute::Statement,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Subject => "subject",
            Attribute::Context => "context",
            Attribute::Speaker => "speaker",
            Attribute::Targeting => "targeting",
            Attribute::Statement => "statement",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewsItem {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subject: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targeting: Option<String>,
    pub statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_label: Option<RawLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<BinaryLabel>,
}

impl NewsItem {
    /// Unlabeled item carrying only a statement.
    pub fn from_statement(id: impl Into<String>, statement: impl Into<String>) -> Self {
        NewsItem {
            id: id.into(),
            subject: None,
            context: None,
            speaker: None,
            targeting: None,
            statement: statement.into(),
            raw_label: None,
            label: None,
        }
    }

    pub fn attribute(&self, attr: Attribute) -> Option<&str> {
        match attr {
            Attribute::Subject => self.subject.as_deref(),
            Attribute::Context => self.context.as_deref(),
            Attribute::Speaker => self.speaker.as_deref(),
            Attribute::Targeting => self.targeting.as_deref(),
            Attribute::Statement => Some(self.statement.as_str()),
        }
    }

    pub fn set_raw_label(&mut self, raw: RawLabel) {
        self.raw_label = Some(raw);
        self.label = Some(binarize_label(raw));
    }
}

#[derive(Debug, Deserialize)]
struct Record {
    id: String,
    #[serde(default)]
    subject: Option<String>,
    #[serde(default)]
    context: Option<String>,
    #[serde(default)]
    speaker: Option<String>,
    #[serde(default)]
    targeting: Option<String>,
    statement: String,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    subject: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    speaker: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    targeting: Option<&'a str>,
    statement: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<&'static str>,
}

// Blank strings count as absent.
fn present(field: Option<String>) -> Option<String> {
    field.filter(|s| !s.trim().is_empty())
}

/// Parses a line-delimited corpus. Line numbers in errors are 1-based.
pub fn parse_corpus<R: BufRead>(source: R) -> Result<Vec<NewsItem>> {
    let mut items = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if record.id.trim().is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "id is empty".into(),
            });
        }
        if record.statement.trim().is_empty() {
            return Err(Error::EmptyStatement { line: line_no });
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                line: line_no,
                id: record.id,
            });
        }
        let raw_label = match present(record.label) {
            Some(s) => Some(s.parse::<RawLabel>().map_err(|e| Error::Parse {
                line: line_no,
                message: e.to_string(),
            })?),
            None => None,
        };
        items.push(NewsItem {
            id: record.id,
            subject: present(record.subject),
            context: present(record.context),
            speaker: present(record.speaker),
            targeting: present(record.targeting),
            statement: record.statement,
            raw_label,
            label: raw_label.map(binarize_label),
        });
    }
    Ok(items)
}

pub fn serialize_corpus<W: Write>(items: &[NewsItem], mut out: W) -> Result<()> {
    for item in items {
        let label = item.raw_label.map(RawLabel::as_str).or(match item.label {
            Some(BinaryLabel::True) => Some("true"),
            Some(BinaryLabel::False) => Some("false"),
            None => None,
        });
        let record = RecordOut {
            id: &item.id,
            subject: item.subject.as_deref(),
            context: item.context.as_deref(),
            speaker: item.speaker.as_deref(),
            targeting: item.targeting.as_deref(),
            statement: &item.statement,
            label,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusSplit {
    pub train: Vec<NewsItem>,
    pub val: Vec<NewsItem>,
    pub test: Vec<NewsItem>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
    /// Interleave classes before cutting so each part keeps the label ratio.
    #[serde(default)]
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_frac: 0.8,
            val_frac: 0.1,
            seed: 17,
            stratified: false,
        }
    }
}

/// Sizes of the three parts for `n` items: `(floor(n·train), floor(n·val), rest)`.
pub fn split_sizes(n: usize, train_frac: f64, val_frac: f64) -> Result<(usize, usize, usize)> {
    let valid = |f: f64| f.is_finite() && f > 0.0;
    if !valid(train_frac) || !valid(val_frac) || train_frac + val_frac >= 1.0 {
        return Err(Error::InvalidFractions {
            train: train_frac,
            val: val_frac,
        });
    }
    if n < 3 {
        return Err(Error::SplitTooSmall(n));
    }
    let train = (n as f64 * train_frac).floor() as usize;
    let val = (n as f64 * val_frac).floor() as usize;
    let test = n - train - val;
    if train == 0 || val == 0 || test == 0 {
        return Err(Error::SplitTooSmall(n));
    }
    Ok((train, val, test))
}

/// Seeded shuffle followed by a train/val/test cut.
pub fn split_corpus(
    items: &[NewsItem],
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<CorpusSplit> {
    split_with(
        items,
        &SplitSpec {
            train_frac,
            val_frac,
            seed,
            stratified: false,
        },
    )
}

pub fn split_with(items: &[NewsItem], spec: &SplitSpec) -> Result<CorpusSplit> {
    let (n_train, n_val, _) = split_sizes(items.len(), spec.train_frac, spec.val_frac)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let order = if spec.stratified {
        stratified_order(items, &mut rng)
    } else {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.shuffle(&mut rng);
        order
    };
    let take = |range: std::ops::Range<usize>| -> Vec<NewsItem> {
        order[range].iter().map(|&i| items[i].clone()).collect()
    };
    Ok(CorpusSplit {
        train: take(0..n_train),
        val: take(n_train..n_train + n_val),
        test: take(n_train + n_val..items.len()),
        seed: spec.seed,
    })
}

// Shuffle each label group, then merge the groups by relative rank so every
// prefix of the order holds close to the global label ratio.
fn stratified_order(items: &[NewsItem], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut groups: [Vec<usize>; 3] = Default::default();
    for (i, item) in items.iter().enumerate() {
        let g = match item.label {
            Some(BinaryLabel::True) => 0,
            Some(BinaryLabel::False) => 1,
            None => 2,
        };
        groups[g].push(i);
    }
    let mut keyed = Vec::with_capacity(items.len());
    for (g, group) in groups.iter_mut().enumerate() {
        group.shuffle(rng);
        let len = group.len() as f64;
        for (rank, &i) in group.iter().enumerate() {
            keyed.push(((rank as f64 + 0.5) / len, g, i));
        }
    }
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, _, i)| i).collect()
}
