//! Tokenization, word-vector tables and the lexicon utilities behind the
//! linguistic features.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::BufRead;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TERMINAL_PUNCT: [char; 6] = ['?', '!', '.', ',', ';', ':'];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    /// Character offsets `[begin, end)` into the source text.
    pub span: (usize, usize),
}

impl Token {
    pub fn is_punct(&self) -> bool {
        self.surface.chars().all(|c| TERMINAL_PUNCT.contains(&c))
    }
}

/// Whitespace tokenizer that detaches trailing `? ! . , ; :` characters,
/// one token per mark.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        while i < chars.len() && !chars[i].is_whitespace() {
            i += 1;
        }
        let mut core_end = i;
        while core_end > start && TERMINAL_PUNCT.contains(&chars[core_end - 1]) {
            core_end -= 1;
        }
        if core_end > start {
            tokens.push(make_token(&chars, start, core_end));
        }
        for p in core_end..i {
            tokens.push(make_token(&chars, p, p + 1));
        }
    }
    tokens
}

fn make_token(chars: &[char], begin: usize, end: usize) -> Token {
    let surface: String = chars[begin..end].iter().collect();
    Token {
        normalized: surface.to_lowercase(),
        surface,
        span: (begin, end),
    }
}

/// Pretrained word vectors keyed by normalized token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    dim: usize,
    entries: BTreeMap<String, Vec<f32>>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        EmbeddingTable {
            dim,
            entries: BTreeMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.entries.get(token).map(Vec::as_slice)
    }

    pub fn insert(&mut self, token: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                line: 0,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { line: 0 });
        }
        self.entries.insert(token.into(), vector);
        Ok(())
    }

    /// Copy holding only the entries whose token is in `words`.
    pub fn restricted_to<'a>(&self, words: impl IntoIterator<Item = &'a str>) -> EmbeddingTable {
        let mut out = EmbeddingTable::new(self.dim);
        for w in words {
            if let Some((k, v)) = self.entries.get_key_value(w) {
                out.entries.insert(k.clone(), v.clone());
            }
        }
        out
    }
}

/// Reads a textual vector file (`token v1 ... vE` per line). A leading
/// `count dim` header line, as written by word2vec, is accepted and checked.
pub fn load_embeddings<R: BufRead>(source: R, expected_dim: usize) -> Result<EmbeddingTable> {
    if expected_dim == 0 {
        return Err(Error::InvalidConfig("embedding dimension must be positive".into()));
    }
    let mut table = EmbeddingTable::new(expected_dim);
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(' ');
        let token = fields.next().unwrap_or_default();
        let rest: Vec<&str> = fields.collect();
        if line_no == 1 && rest.len() == 1 {
            if let (Ok(_), Ok(dim)) = (token.parse::<usize>(), rest[0].parse::<usize>()) {
                if dim != expected_dim {
                    return Err(Error::DimensionMismatch {
                        line: line_no,
                        expected: expected_dim,
                        found: dim,
                    });
                }
                continue;
            }
        }
        if rest.len() != expected_dim {
            return Err(Error::DimensionMismatch {
                line: line_no,
                expected: expected_dim,
                found: rest.len(),
            });
        }
        let mut vector = Vec::with_capacity(expected_dim);
        for field in rest {
            let value: f32 = field.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid vector component {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite { line: line_no });
            }
            vector.push(value);
        }
        table.entries.entry(token.to_string()).or_insert(vector);
    }
    Ok(table)
}

/// Mean of the in-vocabulary token vectors. The flag is `true` when no
/// token was found, in which case the vector is all zeros.
pub fn mean_embedding(tokens: &[Token], table: &EmbeddingTable) -> (Vec<f64>, bool) {
    let mut sum = vec![0.0; table.dim()];
    let mut hits = 0usize;
    for token in tokens {
        if let Some(v) = table.get(&token.normalized) {
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += f64::from(x);
            }
            hits += 1;
        }
    }
    if hits == 0 {
        return (sum, true);
    }
    let n = hits as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    (sum, false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Adj,
    Noun,
    Verb,
    Propn,
    Other,
}

impl std::str::FromStr for PosTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "ADJ" => Ok(PosTag::Adj),
            "NOUN" => Ok(PosTag::Noun),
            "VERB" => Ok(PosTag::Verb),
            "PROPN" => Ok(PosTag::Propn),
            "OTHER" => Ok(PosTag::Other),
            _ => Err(Error::InvalidConfig(format!("unknown tag {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PosLexicon {
    entries: BTreeMap<String, PosTag>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SentimentLexicon {
    entries: BTreeMap<String, f64>,
}

// `token<TAB>value` lines; blank lines and `#` comments are skipped.
fn tab_lines<R: BufRead>(source: R) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (token, value) = trimmed.split_once('\t').ok_or_else(|| Error::Parse {
            line: idx + 1,
            message: "expected token<TAB>value".into(),
        })?;
        out.push((idx + 1, token.trim().to_lowercase(), value.trim().to_string()));
    }
    Ok(out)
}

impl PosLexicon {
    pub fn parse<R: BufRead>(source: R) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line, token, value) in tab_lines(source)? {
            let tag = value.parse().map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?;
            entries.insert(token, tag);
        }
        Ok(PosLexicon { entries })
    }

    /// The lexicon shipped with the crate.
    pub fn builtin() -> &'static PosLexicon {
        static LEXICON: OnceLock<PosLexicon> = OnceLock::new();
        LEXICON.get_or_init(|| {
            PosLexicon::parse(include_str!("../data/pos_lexicon.tsv").as_bytes())
                .expect("bundled POS lexicon is valid")
        })
    }

    pub fn get(&self, token: &str) -> Option<PosTag> {
        self.entries.get(token).copied()
    }

    pub fn insert(&mut self, token: impl Into<String>, tag: PosTag) {
        self.entries.insert(token.into(), tag);
    }
}

impl SentimentLexicon {
    pub fn parse<R: BufRead>(source: R) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (line, token, value) in tab_lines(source)? {
            let valence: f64 = value.parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid valence {value:?}"),
            })?;
            if !(-1.0..=1.0).contains(&valence) {
                return Err(Error::Parse {
                    line,
                    message: format!("valence {valence} outside [-1, 1]"),
                });
            }
            entries.insert(token, valence);
        }
        Ok(SentimentLexicon { entries })
    }

    pub fn builtin() -> &'static SentimentLexicon {
        static LEXICON: OnceLock<SentimentLexicon> = OnceLock::new();
        LEXICON.get_or_init(|| {
            SentimentLexicon::parse(include_str!("../data/sentiment_lexicon.tsv").as_bytes())
                .expect("bundled sentiment lexicon is valid")
        })
    }

    pub fn get(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }

    /// Inserts a valence, clamped to `[-1, 1]`.
    pub fn insert(&mut self, token: impl Into<String>, valence: f64) {
        self.entries.insert(token.into(), valence.clamp(-1.0, 1.0));
    }
}

/// Coarse tagging cascade: lexicon hit, then capitalization (PROPN unless
/// sentence-initial), then suffix rules, then OTHER.
pub fn pos_tag(tokens: &[Token], lexicon: &PosLexicon) -> Vec<PosTag> {
    tokens
        .iter()
        .enumerate()
        .map(|(i, token)| {
            if let Some(tag) = lexicon.get(&token.normalized) {
                return tag;
            }
            let sentence_initial =
                i == 0 || matches!(tokens[i - 1].surface.as_str(), "." | "!" | "?");
            let capitalized = token.surface.chars().next().is_some_and(char::is_uppercase);
            if capitalized && !sentence_initial {
                return PosTag::Propn;
            }
            suffix_tag(&token.normalized)
        })
        .collect()
}

fn suffix_tag(word: &str) -> PosTag {
    let long_enough = |suffix: &str| word.ends_with(suffix) && word.len() > suffix.len() + 1;
    if word.ends_with("ly") {
        PosTag::Other
    } else if ["ous", "ful", "ive"].into_iter().any(long_enough) {
        PosTag::Adj
    } else if ["ize", "ed", "ing"].into_iter().any(long_enough) {
        PosTag::Verb
    } else {
        PosTag::Other
    }
}

/// Mean valence over lexicon hits; 0 when nothing matches.
pub fn sentiment_score(tokens: &[Token], lexicon: &SentimentLexicon) -> f64 {
    let hits: Vec<f64> = tokens
        .iter()
        .filter_map(|t| lexicon.get(&t.normalized))
        .collect();
    if hits.is_empty() {
        0.0
    } else {
        (hits.iter().sum::<f64>() / hits.len() as f64).clamp(-1.0, 1.0)
    }
}

pub fn stopwords() -> &'static HashSet<String> {
    static WORDS: OnceLock<HashSet<String>> = OnceLock::new();
    WORDS.get_or_init(|| {
        include_str!("../data/stopwords.txt")
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_lowercase)
            .collect()
    })
}

/// True for tokens that carry content: not punctuation, not a stopword.
pub fn is_content_token(token: &Token) -> bool {
    !token.is_punct() && !stopwords().contains(&token.normalized)
}

/// Normalized content-token set of a text.
pub fn content_words(text: &str) -> HashSet<String> {
    tokenize(text)
        .into_iter()
        .filter(is_content_token)
        .map(|t| t.normalized)
        .collect()
}

/// Lowercased, whitespace-collapsed form used for exact attribute matching.
pub fn normalize_field(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Token frequency map, handy for corpus statistics.
pub fn vocabulary<'a>(texts: impl IntoIterator<Item = &'a str>) -> HashMap<String, usize> {
    let mut counts = HashMap::new();
    for text in texts {
        for token in tokenize(text) {
            *counts.entry(token.normalized).or_insert(0) += 1;
        }
    }
    counts
}
