//! Annotated and raw tweet corpora.
//!
//! Annotated data uses a vertical one-token-per-line format with a blank line
//! between sentences:
//!
//! * POS files: `raw<TAB>tag`
//! * normalization files: `raw<TAB>gold` or `raw<TAB>gold<TAB>tag`
//!
//! A line of the form `# id = <id>` directly before a sentence sets its id.
//! Sentences without one get sequential ids (`s0`, `s1`, ...).

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::sync::Arc;

use thiserror::Error;

/// The Twitter POS tags of Gimpel et al. (2011) in their canonical order.
pub const TWITTER_TAGS: [&str; 25] = [
    "N", "O", "^", "S", "Z", "V", "L", "M", "A", "R", "!", "D", "P", "&", "T", "X", "Y", "#", "@",
    "~", "U", "E", "$", ",", "G",
];

pub const URL_TOKEN: &str = "<URL>";
pub const USERNAME_TOKEN: &str = "<USERNAME>";

const ID_PREFIX: &str = "# id = ";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("empty input")]
    EmptyInput,
    #[error("line {line}: expected {expected} columns, found {found}")]
    ColumnCount {
        line: usize,
        expected: &'static str,
        found: usize,
    },
    #[error("unknown tag {0:?}")]
    UnknownTag(String),
    #[error("line {0}: empty cell")]
    EmptyCell(usize),
    #[error("line {0}: gold normalization must be a single token")]
    MultiTokenGold(usize),
    #[error("sentence ending at line {0} mixes annotated and unannotated tokens")]
    MixedLayers(usize),
    #[error("invalid token {0:?}")]
    InvalidToken(String),
    #[error("duplicate tag label {0:?}")]
    DuplicateTag(String),
}

/// An ordered set of POS labels with a label <-> index bijection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl TagSet {
    pub fn new<I, S>(labels: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Vec::new();
        let mut index = HashMap::new();
        for label in labels {
            let label = label.into();
            if index.insert(label.clone(), out.len()).is_some() {
                return Err(CorpusError::DuplicateTag(label));
            }
            out.push(label);
        }
        Ok(TagSet { labels: out, index })
    }

    pub fn twitter() -> Self {
        Self::new(TWITTER_TAGS).expect("builtin tagset is unique")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index.contains_key(label)
    }
}

impl Default for TagSet {
    fn default() -> Self {
        Self::twitter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub raw: String,
    pub gold_norm: Option<String>,
    pub gold_pos: Option<String>,
}

impl Token {
    pub fn new(raw: impl Into<String>) -> Result<Self, CorpusError> {
        let raw = raw.into();
        if !is_valid_form(&raw) {
            return Err(CorpusError::InvalidToken(raw));
        }
        Ok(Token {
            raw,
            gold_norm: None,
            gold_pos: None,
        })
    }

    pub fn with_pos(mut self, tag: impl Into<String>) -> Self {
        self.gold_pos = Some(tag.into());
        self
    }

    pub fn with_norm(mut self, gold: impl Into<String>) -> Self {
        self.gold_norm = Some(gold.into());
        self
    }

    /// True when the token carries a gold normalization that differs from its raw form.
    pub fn is_noncanonical(&self) -> bool {
        matches!(&self.gold_norm, Some(g) if *g != self.raw)
    }
}

pub(crate) fn is_valid_form(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Result<Self, CorpusError> {
        let s = Sentence {
            id: id.into(),
            tokens,
        };
        if s.tokens.is_empty() {
            return Err(CorpusError::EmptyInput);
        }
        if s.layer_state(|t| t.gold_pos.is_some()).is_none()
            || s.layer_state(|t| t.gold_norm.is_some()).is_none()
        {
            return Err(CorpusError::MixedLayers(0));
        }
        Ok(s)
    }

    /// Unannotated sentence from raw token strings.
    pub fn from_raw<S: AsRef<str>>(id: impl Into<String>, words: &[S]) -> Result<Self, CorpusError> {
        let tokens = words
            .iter()
            .map(|w| Token::new(w.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Sentence::new(id, tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn has_pos(&self) -> bool {
        self.tokens.iter().all(|t| t.gold_pos.is_some())
    }

    pub fn has_norm(&self) -> bool {
        self.tokens.iter().all(|t| t.gold_norm.is_some())
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.raw.as_str()).collect()
    }

    pub fn tags(&self) -> Option<Vec<&str>> {
        self.tokens.iter().map(|t| t.gold_pos.as_deref()).collect()
    }

    // Some(true) all, Some(false) none, None mixed.
    fn layer_state(&self, f: impl Fn(&Token) -> bool) -> Option<bool> {
        let n = self.tokens.iter().filter(|t| f(t)).count();
        if n == 0 {
            Some(false)
        } else if n == self.tokens.len() {
            Some(true)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Layers {
    pub has_pos: bool,
    pub has_norm: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    sentences: Vec<Sentence>,
    layers: Layers,
}

impl Dataset {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        let layers = Layers {
            has_pos: !sentences.is_empty() && sentences.iter().all(Sentence::has_pos),
            has_norm: !sentences.is_empty() && sentences.iter().all(Sentence::has_norm),
        };
        Dataset { sentences, layers }
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn into_sentences(self) -> Vec<Sentence> {
        self.sentences
    }

    pub fn layers(&self) -> Layers {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &Token> {
        self.sentences.iter().flat_map(|s| s.tokens.iter())
    }

    /// Concatenation of two datasets; layer flags are recomputed.
    pub fn concat(&self, other: &Dataset) -> Dataset {
        let mut sentences = self.sentences.clone();
        sentences.extend(other.sentences.iter().cloned());
        Dataset::new(sentences)
    }

    /// Copy with the gold normalization layer dropped.
    pub fn without_norm(&self) -> Dataset {
        Dataset::new(
            self.sentences
                .iter()
                .map(|s| Sentence {
                    id: s.id.clone(),
                    tokens: s
                        .tokens
                        .iter()
                        .map(|t| Token {
                            gold_norm: None,
                            ..t.clone()
                        })
                        .collect(),
                })
                .collect(),
        )
    }
}

impl FromIterator<Sentence> for Dataset {
    fn from_iter<T: IntoIterator<Item = Sentence>>(iter: T) -> Self {
        Dataset::new(iter.into_iter().collect())
    }
}

struct Block<'a> {
    id: Option<String>,
    lines: Vec<(usize, &'a str)>,
    end_line: usize,
}

fn blocks(content: &str) -> Vec<Block<'_>> {
    let mut out = Vec::new();
    let mut cur = Block {
        id: None,
        lines: Vec::new(),
        end_line: 0,
    };
    for (i, line) in content.lines().enumerate() {
        let lineno = i + 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            if !cur.lines.is_empty() {
                cur.end_line = lineno;
                out.push(std::mem::replace(
                    &mut cur,
                    Block {
                        id: None,
                        lines: Vec::new(),
                        end_line: 0,
                    },
                ));
            }
            continue;
        }
        if cur.lines.is_empty() && !line.contains('\t') {
            if let Some(id) = line.strip_prefix(ID_PREFIX) {
                cur.id = Some(id.trim().to_string());
                continue;
            }
        }
        cur.lines.push((lineno, line));
        cur.end_line = lineno;
    }
    if !cur.lines.is_empty() {
        out.push(cur);
    }
    out
}

fn finish(blocks: Vec<Sentence>) -> Result<Dataset, CorpusError> {
    if blocks.is_empty() {
        return Err(CorpusError::EmptyInput);
    }
    Ok(Dataset::new(blocks))
}

fn cell(lineno: usize, s: &str) -> Result<&str, CorpusError> {
    if s.is_empty() {
        return Err(CorpusError::EmptyCell(lineno));
    }
    if s.chars().any(char::is_whitespace) {
        return Err(CorpusError::MultiTokenGold(lineno));
    }
    Ok(s)
}

/// Parses a two-column `raw<TAB>tag` file.
pub fn parse_pos(content: &str, tagset: &TagSet) -> Result<Dataset, CorpusError> {
    let mut sentences = Vec::new();
    for (i, block) in blocks(content).into_iter().enumerate() {
        let mut tokens = Vec::with_capacity(block.lines.len());
        for (lineno, line) in block.lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(CorpusError::ColumnCount {
                    line: lineno,
                    expected: "2",
                    found: cols.len(),
                });
            }
            let raw = cell(lineno, cols[0])?;
            let tag = cell(lineno, cols[1])?;
            if !tagset.contains(tag) {
                return Err(CorpusError::UnknownTag(tag.to_string()));
            }
            tokens.push(Token::new(raw)?.with_pos(tag));
        }
        let id = block.id.unwrap_or_else(|| format!("s{i}"));
        sentences.push(Sentence { id, tokens });
    }
    finish(sentences)
}

/// Parses a `raw<TAB>gold[<TAB>tag]` normalization file.
pub fn parse_norm(content: &str, tagset: &TagSet) -> Result<Dataset, CorpusError> {
    let mut sentences = Vec::new();
    for (i, block) in blocks(content).into_iter().enumerate() {
        let mut tokens = Vec::with_capacity(block.lines.len());
        for (lineno, line) in block.lines {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 && cols.len() != 3 {
                return Err(CorpusError::ColumnCount {
                    line: lineno,
                    expected: "2 or 3",
                    found: cols.len(),
                });
            }
            let raw = cell(lineno, cols[0])?;
            let gold = cell(lineno, cols[1])?;
            let mut tok = Token::new(raw)?.with_norm(gold);
            if let Some(tag) = cols.get(2) {
                let tag = cell(lineno, tag)?;
                if !tagset.contains(tag) {
                    return Err(CorpusError::UnknownTag(tag.to_string()));
                }
                tok = tok.with_pos(tag);
            }
            tokens.push(tok);
        }
        let sent = Sentence {
            id: block.id.unwrap_or_else(|| format!("s{i}")),
            tokens,
        };
        if sent.layer_state(|t| t.gold_pos.is_some()).is_none() {
            return Err(CorpusError::MixedLayers(block.end_line));
        }
        sentences.push(sent);
    }
    finish(sentences)
}

/// Parses a one-token-per-line file keeping only the first column.
pub fn parse_tokens(content: &str) -> Result<Dataset, CorpusError> {
    let mut sentences = Vec::new();
    for (i, block) in blocks(content).into_iter().enumerate() {
        let tokens = block
            .lines
            .iter()
            .map(|(lineno, line)| Token::new(cell(*lineno, line.split('\t').next().unwrap_or(""))?))
            .collect::<Result<Vec<_>, _>>()?;
        sentences.push(Sentence {
            id: block.id.unwrap_or_else(|| format!("s{i}")),
            tokens,
        });
    }
    finish(sentences)
}

fn write_with(d: &Dataset, mut line: impl FnMut(&Token, &mut String)) -> String {
    let mut out = String::new();
    for s in d.sentences() {
        let _ = writeln!(out, "{ID_PREFIX}{}", s.id);
        for t in &s.tokens {
            line(t, &mut out);
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

/// Writes `raw<TAB>tag`. Tokens without a tag are written with the raw form only.
pub fn write_pos(d: &Dataset) -> String {
    write_with(d, |t, out| {
        out.push_str(&t.raw);
        if let Some(tag) = &t.gold_pos {
            out.push('\t');
            out.push_str(tag);
        }
    })
}

/// Writes `raw<TAB>gold[<TAB>tag]`; a missing gold form is written as the raw form.
pub fn write_norm(d: &Dataset) -> String {
    write_with(d, |t, out| {
        out.push_str(&t.raw);
        out.push('\t');
        out.push_str(t.gold_norm.as_deref().unwrap_or(&t.raw));
        if let Some(tag) = &t.gold_pos {
            out.push('\t');
            out.push_str(tag);
        }
    })
}

fn is_url(tok: &str) -> bool {
    tok.starts_with("http://") || tok.starts_with("https://") || tok.starts_with("www.")
}

fn is_username(tok: &str) -> bool {
    tok.strip_prefix('@')
        .and_then(|rest| rest.chars().next())
        .is_some_and(|c| c.is_alphanumeric() || c == '_')
}

/// Whitespace-tokenizes one raw tweet, masking urls and usernames and lowercasing `rt`.
pub fn preprocess_raw(line: &str) -> Vec<String> {
    line.split_whitespace()
        .map(|tok| {
            if is_url(tok) {
                URL_TOKEN.to_string()
            } else if is_username(tok) {
                USERNAME_TOKEN.to_string()
            } else if tok.eq_ignore_ascii_case("rt") {
                "rt".to_string()
            } else {
                tok.to_string()
            }
        })
        .collect()
}

/// Drops exact duplicate token sequences, keeping first occurrences in order.
pub fn dedup<I>(seqs: I) -> impl Iterator<Item = Vec<String>>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut seen: HashSet<Arc<[String]>> = HashSet::new();
    seqs.into_iter().filter(move |s| {
        let key: Arc<[String]> = s.as_slice().into();
        seen.insert(key)
    })
}

/// Counts surface forms, keeping those seen at least `min_count` times.
pub fn vocab<'a, I>(tokens: I, min_count: usize) -> HashMap<String, usize>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counts: HashMap<String, usize> = HashMap::new();
    for t in tokens {
        *counts.entry(t.to_string()).or_default() += 1;
    }
    counts.retain(|_, c| *c >= min_count.max(1));
    counts
}

/// Vocabulary over the raw forms of a dataset.
pub fn dataset_vocab(d: &Dataset, min_count: usize) -> HashMap<String, usize> {
    vocab(d.tokens().map(|t| t.raw.as_str()), min_count)
}

/// Parses a raw corpus: one tweet per line, preprocessed and deduplicated.
pub fn read_raw_corpus(content: &str) -> Vec<Vec<String>> {
    dedup(
        content
            .lines()
            .map(preprocess_raw)
            .filter(|s| !s.is_empty()),
    )
    .collect()
}
