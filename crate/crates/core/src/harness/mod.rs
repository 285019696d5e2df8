//! Experiment runner: run reports, evaluation splits, confusion diffs,
//! significance testing, key=value settings and the experiment grids.

mod grids;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, TagSet};
use crate::embeddings::{EmbeddingConfig, EmbeddingError};
use crate::forest::{FeaturesPerSplit, ForestConfig};
use crate::lexgen::LexConfig;
use crate::normalizer::NormError;
use crate::selftrain::SelfTrainError;
use crate::tagger::{TaggerConfig, TaggerError};

pub use grids::{
    run_embed_grid, run_final, run_norm_grid, EmbedCell, EmbedGrid, FinalInputs, FinalReport, NormGrid, TRAIN_VARIANTS,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("{0}")]
    MissingLayer(String),
    #[error("missing resource: {0}")]
    MissingResource(String),
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Tagger(#[from] TaggerError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    SelfTrain(#[from] SelfTrainError),
}

/// Mean and population standard deviation.
pub fn mean_stdev(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Accuracies of repeated seeded runs of one experimental cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub id: String,
    #[serde(default)]
    pub config: BTreeMap<String, String>,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub stdev: f64,
    /// Per run, per sentence, per token predicted tags.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictions: Option<Vec<Vec<Vec<String>>>>,
}

impl RunReport {
    pub fn new(id: impl Into<String>, accuracies: Vec<f64>) -> Self {
        let (mean, stdev) = mean_stdev(&accuracies);
        RunReport {
            id: id.into(),
            config: BTreeMap::new(),
            seeds: Vec::new(),
            accuracies,
            mean,
            stdev,
            predictions: None,
        }
    }

    pub fn with_seeds(mut self, seeds: Vec<u64>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn with_config(mut self, config: BTreeMap<String, String>) -> Self {
        self.config = config;
        self
    }

    /// Stored mean and stdev agree with the stored accuracies.
    pub fn is_consistent(&self) -> bool {
        let (m, s) = mean_stdev(&self.accuracies);
        (m - self.mean).abs() <= 1e-12 && (s - self.stdev).abs() <= 1e-12
    }

    /// `82.16 (±0.33)` in percent.
    pub fn cell(&self) -> String {
        format!("{:.2} (±{:.2})", 100.0 * self.mean, 100.0 * self.stdev)
    }
}

fn gold_tags(gold: &Dataset) -> Result<Vec<Vec<&str>>, HarnessError> {
    gold.sentences()
        .iter()
        .map(|s| {
            s.tags()
                .ok_or_else(|| HarnessError::MissingLayer(format!("sentence {} has no gold POS layer", s.id)))
        })
        .collect()
}

fn check_aligned<S: AsRef<str>>(preds: &[Vec<S>], gold: &Dataset) -> Result<(), HarnessError> {
    if preds.len() != gold.len() {
        return Err(HarnessError::LengthMismatch {
            expected: gold.len(),
            found: preds.len(),
        });
    }
    for (p, s) in preds.iter().zip(gold.sentences()) {
        if p.len() != s.len() {
            return Err(HarnessError::LengthMismatch {
                expected: s.len(),
                found: p.len(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CanonicalSplit {
    /// Absent when the subset is empty.
    pub acc_canonical: Option<f64>,
    pub acc_noncanonical: Option<f64>,
    pub fraction_noncanonical: f64,
    pub canonical_tokens: usize,
    pub noncanonical_tokens: usize,
}

/// Accuracy on tokens whose gold normalization equals the raw form, and on
/// the rest.
pub fn canonical_split_eval<S: AsRef<str>>(preds: &[Vec<S>], gold: &Dataset) -> Result<CanonicalSplit, HarnessError> {
    check_aligned(preds, gold)?;
    let tags = gold_tags(gold)?;
    let (mut n_c, mut ok_c, mut n_n, mut ok_n) = (0usize, 0usize, 0usize, 0usize);
    for ((s, p), g) in gold.sentences().iter().zip(preds).zip(&tags) {
        for ((tok, p), g) in s.tokens.iter().zip(p).zip(g) {
            let norm = tok
                .gold_norm
                .as_ref()
                .ok_or_else(|| HarnessError::MissingLayer(format!("sentence {} has no gold normalization layer", s.id)))?;
            let hit = usize::from(p.as_ref() == *g);
            if *norm == tok.raw {
                n_c += 1;
                ok_c += hit;
            } else {
                n_n += 1;
                ok_n += hit;
            }
        }
    }
    let total = n_c + n_n;
    if total == 0 {
        return Err(HarnessError::Invalid("no tokens to evaluate".into()));
    }
    let ratio = |ok: usize, n: usize| (n > 0).then(|| ok as f64 / n as f64);
    Ok(CanonicalSplit {
        acc_canonical: ratio(ok_c, n_c),
        acc_noncanonical: ratio(ok_n, n_n),
        fraction_noncanonical: n_n as f64 / total as f64,
        canonical_tokens: n_c,
        noncanonical_tokens: n_n,
    })
}

/// Share of tokens whose gold normalization differs from the raw form.
pub fn noncanonical_fraction(gold: &Dataset) -> Result<f64, HarnessError> {
    let mut n = 0;
    let mut non = 0;
    for s in gold.sentences() {
        if !s.has_norm() {
            return Err(HarnessError::MissingLayer(format!("sentence {} has no gold normalization layer", s.id)));
        }
        n += s.len();
        non += s.tokens.iter().filter(|t| t.is_noncanonical()).count();
    }
    if n == 0 {
        return Err(HarnessError::Invalid("no tokens".into()));
    }
    Ok(non as f64 / n as f64)
}

/// Error counts of system A minus those of system B, per (gold, predicted).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionDiff {
    pub tags: Vec<String>,
    pub cells: Vec<Vec<i64>>,
}

impl ConfusionDiff {
    pub fn get(&self, gold: &str, pred: &str) -> Option<i64> {
        let g = self.tags.iter().position(|t| t == gold)?;
        let p = self.tags.iter().position(|t| t == pred)?;
        Some(self.cells[g][p])
    }

    pub fn is_zero(&self) -> bool {
        self.cells.iter().flatten().all(|c| *c == 0)
    }

    /// Rows are gold tags, columns predicted tags.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for t in &self.tags {
            out.push('\t');
            out.push_str(t);
        }
        out.push('\n');
        for (t, row) in self.tags.iter().zip(&self.cells) {
            out.push_str(t);
            for c in row {
                let _ = write!(out, "\t{c}");
            }
            out.push('\n');
        }
        out
    }
}

fn error_counts<S: AsRef<str>>(
    preds: &[Vec<S>],
    gold: &[Vec<&str>],
    tagset: &TagSet,
) -> Result<Vec<Vec<i64>>, HarnessError> {
    let t = tagset.len();
    let mut m = vec![vec![0i64; t]; t];
    let idx = |tag: &str| {
        tagset
            .index_of(tag)
            .ok_or_else(|| HarnessError::Invalid(format!("tag {tag:?} is not in the tagset")))
    };
    for (p, g) in preds.iter().zip(gold) {
        for (p, g) in p.iter().zip(g) {
            if p.as_ref() != *g {
                m[idx(g)?][idx(p.as_ref())?] += 1;
            }
        }
    }
    Ok(m)
}

pub fn confusion_diff<S: AsRef<str>, T: AsRef<str>>(
    preds_a: &[Vec<S>],
    preds_b: &[Vec<T>],
    gold: &Dataset,
    tagset: &TagSet,
) -> Result<ConfusionDiff, HarnessError> {
    check_aligned(preds_a, gold)?;
    check_aligned(preds_b, gold)?;
    let tags = gold_tags(gold)?;
    let a = error_counts(preds_a, &tags, tagset)?;
    let b = error_counts(preds_b, &tags, tagset)?;
    let cells = a
        .iter()
        .zip(&b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x - y).collect())
        .collect();
    Ok(ConfusionDiff {
        tags: tagset.labels().to_vec(),
        cells,
    })
}

/// Correct-token count per sentence.
pub fn sentence_correct<S: AsRef<str>>(preds: &[Vec<S>], gold: &Dataset) -> Result<Vec<u64>, HarnessError> {
    check_aligned(preds, gold)?;
    Ok(gold_tags(gold)?
        .iter()
        .zip(preds)
        .map(|(g, p)| g.iter().zip(p).filter(|(g, p)| **g == p.as_ref()).count() as u64)
        .collect())
}

fn abs_diff(a: &[u64], b: &[u64]) -> u64 {
    let sa: u64 = a.iter().sum();
    let sb: u64 = b.iter().sum();
    sa.abs_diff(sb)
}

/// Paired approximate randomization over per-sentence correct counts. The
/// statistic is the absolute difference in correct tokens, which is the
/// accuracy difference scaled by the shared token total.
pub fn randomization_test(correct_a: &[u64], correct_b: &[u64], rounds: usize, seed: u64) -> Result<f64, HarnessError> {
    if correct_a.len() != correct_b.len() {
        return Err(HarnessError::LengthMismatch {
            expected: correct_a.len(),
            found: correct_b.len(),
        });
    }
    if rounds == 0 {
        return Err(HarnessError::Invalid("randomization rounds must be at least 1".into()));
    }
    let observed = abs_diff(correct_a, correct_b);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..rounds {
        let (mut sa, mut sb) = (0u64, 0u64);
        for (a, b) in correct_a.iter().zip(correct_b) {
            if rng.random::<bool>() {
                sa += b;
                sb += a;
            } else {
                sa += a;
                sb += b;
            }
        }
        if sa.abs_diff(sb) >= observed {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (rounds + 1) as f64)
}

/// Exact share of the `2^n` swap assignments whose statistic reaches the
/// observed one.
pub fn exact_randomization_p(correct_a: &[u64], correct_b: &[u64]) -> Result<f64, HarnessError> {
    let n = correct_a.len();
    if n != correct_b.len() {
        return Err(HarnessError::LengthMismatch {
            expected: n,
            found: correct_b.len(),
        });
    }
    if n > 25 {
        return Err(HarnessError::Invalid(format!("exact enumeration over {n} sentences is too large")));
    }
    let observed = abs_diff(correct_a, correct_b);
    let mut hits = 0u64;
    for mask in 0u64..(1 << n) {
        let (mut sa, mut sb) = (0u64, 0u64);
        for i in 0..n {
            if mask >> i & 1 == 1 {
                sa += correct_b[i];
                sb += correct_a[i];
            } else {
                sa += correct_a[i];
                sb += correct_b[i];
            }
        }
        if sa.abs_diff(sb) >= observed {
            hits += 1;
        }
    }
    Ok(hits as f64 / (1u64 << n) as f64)
}

pub fn significance<S: AsRef<str>, T: AsRef<str>>(
    preds_a: &[Vec<S>],
    preds_b: &[Vec<T>],
    gold: &Dataset,
    rounds: usize,
    seed: u64,
) -> Result<f64, HarnessError> {
    let a = sentence_correct(preds_a, gold)?;
    let b = sentence_correct(preds_b, gold)?;
    randomization_test(&a, &b, rounds, seed)
}

/// A measured value next to the published reference it should approximate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceComparison {
    pub label: String,
    pub reference: f64,
    pub measured: Option<f64>,
    pub tolerance: f64,
}

impl ReferenceComparison {
    pub fn new(label: impl Into<String>, reference: f64, measured: Option<f64>, tolerance: f64) -> Self {
        ReferenceComparison {
            label: label.into(),
            reference,
            measured,
            tolerance,
        }
    }

    pub fn within(&self) -> Option<bool> {
        self.measured.map(|m| (m - self.reference).abs() <= self.tolerance)
    }

    pub fn line(&self) -> String {
        match (self.measured, self.within()) {
            (Some(m), Some(ok)) => format!(
                "SOFT {}: reference {:.2}, measured {:.2} ({} ±{})",
                self.label,
                self.reference,
                m,
                if ok { "within" } else { "outside" },
                self.tolerance
            ),
            _ => format!("SOFT {}: reference {:.2}, not measured", self.label, self.reference),
        }
    }
}

/// Published accuracies (percent) for the raw/raw normalization cell and
/// the structured window-1 embedding cell.
pub const REFERENCE_RAW_RAW: f64 = 82.16;
pub const REFERENCE_STRUCTURED_W1: f64 = 88.51;
/// Published non-canonical token percentages for Dev, Test_O and Test_L.
pub const REFERENCE_NONCANONICAL: [(&str, f64); 3] = [("dev", 11.75), ("test_o", 10.95), ("test_l", 12.09)];

/// All experiment settings, overridable from `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub tagger: TaggerConfig,
    pub embed: EmbeddingConfig,
    pub forest: ForestConfig,
    pub lex: LexConfig,
    pub ngram_alpha: f64,
    pub runs: usize,
    pub seed: u64,
    pub rounds: usize,
    pub alpha: f64,
    pub iterations: usize,
    pub per_iteration: usize,
    pub fractions: Vec<f64>,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            tagger: TaggerConfig::default(),
            embed: EmbeddingConfig::default(),
            forest: ForestConfig::default(),
            lex: LexConfig::default(),
            ngram_alpha: 1.0,
            runs: 5,
            seed: 1,
            rounds: 10_000,
            alpha: 0.05,
            iterations: 10,
            per_iteration: crate::selftrain::DEFAULT_PER_ITERATION,
            fractions: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
        }
    }
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(format!("expected a boolean, found {v:?}")),
    }
}

fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

impl Settings {
    /// Parses `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut s = Settings::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| HarnessError::Config {
                line: i + 1,
                msg: "expected key = value".into(),
            })?;
            s.set(k.trim(), v.trim())
                .map_err(|msg| HarnessError::Config { line: i + 1, msg })?;
        }
        Ok(s)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        let t = &mut self.tagger;
        let e = &mut self.embed;
        let f = &mut self.forest;
        match key {
            "seed" => self.seed = num(v)?,
            "runs" => self.runs = num(v)?,
            "rounds" => self.rounds = num(v)?,
            "alpha" => self.alpha = num(v)?,
            "iterations" => self.iterations = num(v)?,
            "per_iteration" => self.per_iteration = num(v)?,
            "fractions" => self.fractions = v.split(',').map(|x| num(x.trim())).collect::<Result<_, _>>()?,
            "ngram.alpha" => self.ngram_alpha = num(v)?,
            "tagger.epochs" => t.epochs = num(v)?,
            "tagger.layers" => t.layers = num(v)?,
            "tagger.word_dim" => t.word_dim = num(v)?,
            "tagger.char_dim" => t.char_dim = num(v)?,
            "tagger.char_emb_dim" => t.char_emb_dim = num(v)?,
            "tagger.word_hidden" => t.word_hidden = num(v)?,
            "tagger.noise_sigma" => t.noise_sigma = num(v)?,
            "tagger.learning_rate" => t.learning_rate = num(v)?,
            "tagger.beta1" => t.beta1 = num(v)?,
            "tagger.beta2" => t.beta2 = num(v)?,
            "tagger.epsilon" => t.epsilon = num(v)?,
            "tagger.update_embeddings" => t.update_embeddings = parse_bool(v)?,
            "tagger.init_scale" => t.init_scale = num(v)?,
            "tagger.unk_threshold" => t.unk_threshold = num(v)?,
            "embed.dim" => e.dim = num(v)?,
            "embed.window" => e.window = num(v)?,
            "embed.negatives" => e.negatives = num(v)?,
            "embed.subsample" => e.subsample = num(v)?,
            "embed.epochs" => e.epochs = num(v)?,
            "embed.min_count" => e.min_count = num(v)?,
            "embed.structured" => e.structured = parse_bool(v)?,
            "embed.learning_rate" => e.learning_rate = num(v)?,
            "forest.n_trees" => f.n_trees = num(v)?,
            "forest.max_depth" => f.max_depth = if v == "none" { None } else { Some(num(v)?) },
            "forest.min_samples_split" => f.min_samples_split = num(v)?,
            "forest.features_per_split" => {
                f.features_per_split = match v {
                    "sqrt" => FeaturesPerSplit::Sqrt,
                    "all" => FeaturesPerSplit::All,
                    n => FeaturesPerSplit::Count(num(n)?),
                }
            }
            "forest.bootstrap" => f.bootstrap = parse_bool(v)?,
            "lex.max_dist" => self.lex.max_dist = num(v)?,
            "lex.k" => self.lex.k = num(v)?,
            "lex.max_candidates" => self.lex.max_candidates = num(v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Propagates the global seed to every component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.tagger.seed = seed;
        self.embed.seed = seed;
        self.forest.seed = seed;
        self
    }

    /// Flat snapshot stored alongside reports.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("seed".into(), self.seed.to_string());
        m.insert("runs".into(), self.runs.to_string());
        if let Ok(serde_json::Value::Object(o)) = serde_json::to_value(&self.tagger) {
            for (k, v) in o {
                m.insert(format!("tagger.{k}"), v.to_string());
            }
        }
        m
    }
}
