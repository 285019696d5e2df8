//! Skip-gram with negative sampling, plain and structured.
//!
//! The structured variant keeps one output block per signed relative context
//! position (`-window..-1, 1..window`), so a word's input vector is trained to
//! predict *where* a neighbor occurs and not only *which* neighbor occurs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("empty vocabulary after min_count filtering")]
    EmptyVocabulary,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub subsample: f64,
    pub epochs: usize,
    pub min_count: usize,
    pub structured: bool,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for EmbeddingConfig {
    /// `-size 400 -window 1 -negative 5 -sample 1e-4 -iter 5`, word2vec defaults otherwise.
    fn default() -> Self {
        EmbeddingConfig {
            dim: 400,
            window: 1,
            negatives: 5,
            subsample: 1e-4,
            epochs: 5,
            min_count: 5,
            structured: false,
            learning_rate: 0.025,
            seed: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<(), EmbeddingError> {
        let bad = |m: &str| Err(EmbeddingError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.window == 0 {
            return bad("window must be positive");
        }
        if self.negatives == 0 {
            return bad("negatives must be positive");
        }
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.min_count == 0 {
            return bad("min_count must be positive");
        }
        if !(self.subsample >= 0.0) {
            return bad("subsample must be >= 0");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be > 0");
        }
        Ok(())
    }
}

/// Output-vector layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputLayout {
    Plain,
    /// `2 * window` blocks of `dim` per row.
    Structured { window: usize },
}

impl OutputLayout {
    pub fn blocks(self) -> usize {
        match self {
            OutputLayout::Plain => 1,
            OutputLayout::Structured { window } => 2 * window,
        }
    }

    /// Block for a signed relative position; `None` for offset 0 or beyond the window.
    pub fn block(self, offset: isize) -> Option<usize> {
        match self {
            OutputLayout::Plain => (offset != 0).then_some(0),
            OutputLayout::Structured { window } => {
                let w = window as isize;
                if offset == 0 || offset.abs() > w {
                    None
                } else if offset < 0 {
                    Some((offset + w) as usize)
                } else {
                    Some((offset + w - 1) as usize)
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    layout: OutputLayout,
    input: Vec<f64>,
    output: Vec<f64>,
    unit: OnceLock<Vec<f64>>,
}

impl PartialEq for EmbeddingMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words
            && self.dim == other.dim
            && self.layout == other.layout
            && self.input == other.input
            && self.output == other.output
    }
}

/// Loss of one (center, context) pair and its gradients.
#[derive(Debug, Clone)]
pub struct PairGrad {
    pub loss: f64,
    /// Gradient w.r.t. the center's input row.
    pub d_input: Vec<f64>,
    /// Gradient w.r.t. the context's full output row (zero outside the selected block).
    pub d_output: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

// -log sigmoid(x), stable for large |x|
fn neg_log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `-log sigma((2l-1) u.v)` and its derivative w.r.t. `u.v` (which is `sigma(u.v) - l`).
pub fn sgns_pair(input: &[f64], output: &[f64], label: bool) -> (f64, f64) {
    let z = dot(input, output);
    let l = if label { 1.0 } else { 0.0 };
    let loss = if label {
        neg_log_sigmoid(z)
    } else {
        neg_log_sigmoid(-z)
    };
    (loss, sigmoid(z) - l)
}

impl EmbeddingMatrix {
    fn from_parts(words: Vec<String>, dim: usize, layout: OutputLayout, input: Vec<f64>, output: Vec<f64>) -> Self {
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        EmbeddingMatrix {
            words,
            index,
            dim,
            layout,
            input,
            output,
            unit: OnceLock::new(),
        }
    }

    /// Matrix with vectors drawn uniformly from `[-scale, scale]`.
    pub fn random(words: Vec<String>, dim: usize, layout: OutputLayout, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = words.len();
        let input = (0..n * dim).map(|_| rng.random_range(-scale..=scale)).collect();
        let output = (0..n * dim * layout.blocks())
            .map(|_| rng.random_range(-scale..=scale))
            .collect();
        Self::from_parts(words, dim, layout, input, output)
    }

    /// Builds a plain matrix from explicit input vectors (output vectors zero).
    pub fn from_vectors(rows: Vec<(String, Vec<f64>)>) -> Result<Self, EmbeddingError> {
        let dim = rows.first().map(|r| r.1.len()).unwrap_or(0);
        if rows.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary);
        }
        let mut words = Vec::with_capacity(rows.len());
        let mut input = Vec::with_capacity(rows.len() * dim);
        for (i, (w, v)) in rows.into_iter().enumerate() {
            if v.len() != dim {
                return Err(EmbeddingError::Format {
                    line: i + 1,
                    msg: format!("expected {dim} values, found {}", v.len()),
                });
            }
            words.push(w);
            input.extend(v);
        }
        let output = vec![0.0; input.len()];
        Ok(Self::from_parts(words, dim, OutputLayout::Plain, input, output))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn layout(&self) -> OutputLayout {
        self.layout
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, word: &str) -> Option<&[f64]> {
        self.index_of(word).map(|i| self.input_row(i))
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        &self.input[i * self.dim..(i + 1) * self.dim]
    }

    pub fn input_row_mut(&mut self, i: usize) -> &mut [f64] {
        self.unit = OnceLock::new();
        let d = self.dim;
        &mut self.input[i * d..(i + 1) * d]
    }

    fn row_width(&self) -> usize {
        self.dim * self.layout.blocks()
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        let w = self.row_width();
        &self.output[i * w..(i + 1) * w]
    }

    pub fn output_row_mut(&mut self, i: usize) -> &mut [f64] {
        let w = self.row_width();
        &mut self.output[i * w..(i + 1) * w]
    }

    /// Output block of word `i` for a relative position.
    pub fn output_block(&self, i: usize, block: usize) -> &[f64] {
        let start = i * self.row_width() + block * self.dim;
        &self.output[start..start + self.dim]
    }

    /// Pair loss for a center word and a context word at a signed offset.
    pub fn pair_loss(&self, center: usize, context: usize, offset: isize, label: bool) -> f64 {
        let block = self.layout.block(offset).expect("offset inside window");
        sgns_pair(self.input_row(center), self.output_block(context, block), label).0
    }

    pub fn pair_loss_and_grad(&self, center: usize, context: usize, offset: isize, label: bool) -> PairGrad {
        let block = self.layout.block(offset).expect("offset inside window");
        let v = self.input_row(center);
        let u = self.output_block(context, block);
        let (loss, g) = sgns_pair(v, u, label);
        let d_input = u.iter().map(|x| g * x).collect();
        let mut d_output = vec![0.0; self.row_width()];
        for (k, x) in v.iter().enumerate() {
            d_output[block * self.dim + k] = g * x;
        }
        PairGrad {
            loss,
            d_input,
            d_output,
        }
    }

    fn unit_vectors(&self) -> &[f64] {
        self.unit.get_or_init(|| {
            let mut unit = self.input.clone();
            for row in unit.chunks_mut(self.dim) {
                let n = dot(row, row).sqrt();
                if n > 0.0 {
                    row.iter_mut().for_each(|x| *x /= n);
                }
            }
            unit
        })
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (i, j) = (self.index_of(a)?, self.index_of(b)?);
        let u = self.unit_vectors();
        let d = self.dim;
        Some(dot(&u[i * d..(i + 1) * d], &u[j * d..(j + 1) * d]))
    }

    /// Top-`k` words by cosine similarity to `word`, excluding `word`.
    /// Ties are broken lexicographically; an OOV query yields nothing.
    pub fn nearest(&self, word: &str, k: usize) -> Vec<(String, f64)> {
        let Some(q) = self.index_of(word) else {
            return Vec::new();
        };
        if k == 0 {
            return Vec::new();
        }
        let d = self.dim;
        let unit = self.unit_vectors();
        let qv = &unit[q * d..(q + 1) * d];
        let mut scored: Vec<(usize, f64)> = unit
            .par_chunks(d)
            .enumerate()
            .filter(|(i, _)| *i != q)
            .map(|(i, row)| (i, dot(qv, row)))
            .collect();
        let cmp = |a: &(usize, f64), b: &(usize, f64)| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.words[a.0].cmp(&self.words[b.0]))
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, cmp);
            scored.truncate(k);
        }
        scored.sort_by(cmp);
        scored
            .into_iter()
            .map(|(i, c)| (self.words[i].clone(), c))
            .collect()
    }

    /// word2vec text format, followed by an `#output` sidecar holding output vectors.
    pub fn save(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.len(), self.dim);
        for (i, w) in self.words.iter().enumerate() {
            s.push_str(w);
            for x in self.input_row(i) {
                let _ = write!(s, " {x:.6}");
            }
            s.push('\n');
        }
        let (kind, window) = match self.layout {
            OutputLayout::Plain => ("plain", 0),
            OutputLayout::Structured { window } => ("structured", window),
        };
        let _ = writeln!(s, "#output {kind} {window} {}", self.row_width());
        for (i, w) in self.words.iter().enumerate() {
            s.push_str(w);
            for x in self.output_row(i) {
                let _ = write!(s, " {x:.6}");
            }
            s.push('\n');
        }
        s
    }

    /// Reads word2vec text; the `#output` sidecar is optional.
    pub fn load(text: &str) -> Result<Self, EmbeddingError> {
        let err = |line: usize, msg: String| EmbeddingError::Format { line, msg };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let nums: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str, line: usize| {
            s.parse::<usize>()
                .map_err(|_| err(line, format!("expected integer, found {s:?}")))
        };
        if nums.len() != 2 {
            return Err(err(1, "header must be `<vocab_size> <dim>`".into()));
        }
        let n = parse_usize(nums[0], 1)?;
        let dim = parse_usize(nums[1], 1)?;
        if dim == 0 {
            return Err(err(1, "dim must be positive".into()));
        }

        fn row(line: &str, lineno: usize, width: usize) -> Result<(String, Vec<f64>), EmbeddingError> {
            let mut parts = line.split_whitespace();
            let word = parts.next().ok_or_else(|| EmbeddingError::Format {
                line: lineno,
                msg: "empty line".into(),
            })?;
            let vals = parts
                .map(|p| {
                    p.parse::<f64>().map_err(|_| EmbeddingError::Format {
                        line: lineno,
                        msg: format!("non-numeric cell {p:?}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != width {
                return Err(EmbeddingError::Format {
                    line: lineno,
                    msg: format!("expected {width} values, found {}", vals.len()),
                });
            }
            Ok((word.to_string(), vals))
        }

        let mut words = Vec::with_capacity(n);
        let mut input = Vec::with_capacity(n * dim);
        for _ in 0..n {
            let (lineno, line) = lines
                .next()
                .ok_or_else(|| err(0, format!("header declares {n} rows, body is shorter")))?;
            let (w, v) = row(line, lineno, dim)?;
            words.push(w);
            input.extend(v);
        }
        let mut layout = OutputLayout::Plain;
        let mut output = vec![0.0; n * dim];
        match lines.next() {
            None => {}
            Some((lineno, line)) if line.starts_with("#output") => {
                let f: Vec<&str> = line.split_whitespace().collect();
                if f.len() != 4 {
                    return Err(err(lineno, "malformed #output line".into()));
                }
                layout = match f[1] {
                    "plain" => OutputLayout::Plain,
                    "structured" => OutputLayout::Structured {
                        window: parse_usize(f[2], lineno)?,
                    },
                    other => return Err(err(lineno, format!("unknown layout {other:?}"))),
                };
                let width = parse_usize(f[3], lineno)?;
                if width != dim * layout.blocks() {
                    return Err(err(lineno, "output width does not match layout".into()));
                }
                output = Vec::with_capacity(n * width);
                for (i, word) in words.iter().enumerate() {
                    let (lineno, line) = lines
                        .next()
                        .ok_or_else(|| err(0, "truncated #output section".into()))?;
                    let (w, v) = row(line, lineno, width)?;
                    if w != *word {
                        return Err(err(lineno, format!("output row {i} is for {w:?}, expected {word:?}")));
                    }
                    output.extend(v);
                }
                if let Some((lineno, _)) = lines.next() {
                    return Err(err(lineno, "trailing content after #output section".into()));
                }
            }
            Some((lineno, line)) if !line.trim().is_empty() => {
                return Err(err(
                    lineno,
                    format!("header declares {n} rows, body has more"),
                ));
            }
            Some(_) => {}
        }
        if words.is_empty() {
            return Err(EmbeddingError::EmptyVocabulary);
        }
        Ok(Self::from_parts(words, dim, layout, input, output))
    }
}

/// Per-epoch mean loss per positive pair (positive term plus its negatives).
#[derive(Debug, Clone, Default)]
pub struct TrainStats {
    pub epoch_loss: Vec<f64>,
    pub pairs: u64,
}

struct NegativeTable {
    cumulative: Vec<f64>,
}

impl NegativeTable {
    fn new(counts: &[usize]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        NegativeTable { cumulative }
    }

    fn sample(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let r = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= r)
            .min(self.cumulative.len() - 1)
    }
}

/// Frequency-sorted vocabulary (count desc, then lexicographic) with counts.
fn build_vocab<S: AsRef<str>>(corpus: &[Vec<S>], min_count: usize) -> Vec<(String, usize)> {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for s in corpus {
        for w in s {
            *counts.entry(w.as_ref()).or_default() += 1;
        }
    }
    let mut v: Vec<(String, usize)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(w, c)| (w.to_string(), c))
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v
}

/// Keep probability of a word under word2vec subsampling; 1 when `subsample == 0`.
pub fn keep_probability(count: usize, total: usize, subsample: f64) -> f64 {
    if subsample <= 0.0 || count == 0 {
        return 1.0;
    }
    let st = subsample * total as f64;
    let f = count as f64;
    (((f / st).sqrt() + 1.0) * st / f).min(1.0)
}

pub fn train<S: AsRef<str>>(corpus: &[Vec<S>], config: &EmbeddingConfig) -> Result<EmbeddingMatrix, EmbeddingError> {
    train_with_stats(corpus, config).map(|(m, _)| m)
}

pub fn train_with_stats<S: AsRef<str>>(
    corpus: &[Vec<S>],
    config: &EmbeddingConfig,
) -> Result<(EmbeddingMatrix, TrainStats), EmbeddingError> {
    config.validate()?;
    let vocab = build_vocab(corpus, config.min_count);
    if vocab.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary);
    }
    let counts: Vec<usize> = vocab.iter().map(|(_, c)| *c).collect();
    let words: Vec<String> = vocab.into_iter().map(|(w, _)| w).collect();
    let layout = if config.structured {
        OutputLayout::Structured {
            window: config.window,
        }
    } else {
        OutputLayout::Plain
    };
    let dim = config.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let scale = 0.5 / dim as f64;
    let input: Vec<f64> = (0..words.len() * dim)
        .map(|_| rng.random_range(-scale..scale))
        .collect();
    let output = vec![0.0; words.len() * dim * layout.blocks()];
    let mut m = EmbeddingMatrix::from_parts(words, dim, layout, input, output);

    let ids: Vec<Vec<usize>> = corpus
        .iter()
        .map(|s| s.iter().filter_map(|w| m.index_of(w.as_ref())).collect())
        .collect();
    let train_words: usize = counts.iter().sum();
    let keep: Vec<f64> = counts
        .iter()
        .map(|&c| keep_probability(c, train_words, config.subsample))
        .collect();
    let negatives = NegativeTable::new(&counts);
    let total_work = (config.epochs * train_words).max(1) as f64;
    let mut processed = 0usize;
    let mut stats = TrainStats::default();
    let mut grad_center = vec![0.0; dim];
    let mut sentence = Vec::new();

    for _ in 0..config.epochs {
        let mut epoch_loss = 0.0;
        let mut epoch_pairs = 0u64;
        for sent in &ids {
            processed += sent.len();
            sentence.clear();
            sentence.extend(sent.iter().copied().filter(|&w| rng.random::<f64>() < keep[w]));
            let progress = processed as f64 / total_work;
            let lr = config.learning_rate * (1.0 - 0.99 * progress.min(1.0));
            for (i, &center) in sentence.iter().enumerate() {
                let b = rng.random_range(1..=config.window);
                let lo = i.saturating_sub(b);
                let hi = (i + b).min(sentence.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let offset = j as isize - i as isize;
                    let block = layout.block(offset).expect("offset inside window");
                    let context = sentence[j];
                    grad_center.iter_mut().for_each(|g| *g = 0.0);
                    let mut pair_loss = 0.0;
                    for n in 0..=config.negatives {
                        let (target, label) = if n == 0 {
                            (context, true)
                        } else {
                            let t = negatives.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, false)
                        };
                        let start = target * dim * layout.blocks() + block * dim;
                        let v = &m.input[center * dim..(center + 1) * dim];
                        let u = &mut m.output[start..start + dim];
                        let (loss, g) = sgns_pair(v, u, label);
                        pair_loss += loss;
                        for k in 0..dim {
                            grad_center[k] += g * u[k];
                            u[k] -= lr * g * v[k];
                        }
                    }
                    let v = &mut m.input[center * dim..(center + 1) * dim];
                    for k in 0..dim {
                        v[k] -= lr * grad_center[k];
                    }
                    epoch_loss += pair_loss;
                    epoch_pairs += 1;
                }
            }
        }
        stats.pairs += epoch_pairs;
        stats
            .epoch_loss
            .push(if epoch_pairs > 0 { epoch_loss / epoch_pairs as f64 } else { 0.0 });
    }
    m.unit = OnceLock::new();
    Ok((m, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(String::from).collect())
            .collect()
    }

    #[test]
    fn default_config_values() {
        let c = EmbeddingConfig::default();
        assert_eq!((c.dim, c.window, c.negatives, c.epochs), (400, 1, 5, 5));
        assert_eq!(c.subsample, 1e-4);
    }

    #[test]
    fn single_repeated_sentence_smoke() {
        let c = corpus(&["the cat sat on the mat"; 20]);
        let cfg = EmbeddingConfig {
            dim: 8,
            min_count: 1,
            ..Default::default()
        };
        let m = train(&c, &cfg).unwrap();
        assert_eq!(m.len(), 5);
        for w in ["the", "cat", "sat", "on", "mat"] {
            assert!(m.vector(w).unwrap().iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn dimension_follows_config() {
        let c = corpus(&["a b c d"; 10]);
        let m = train(&c, &EmbeddingConfig { min_count: 1, ..Default::default() }).unwrap();
        assert_eq!(m.dim(), 400);
        assert_eq!(m.output_row(0).len(), 400);
        let m = train(
            &c,
            &EmbeddingConfig {
                min_count: 1,
                structured: true,
                window: 2,
                dim: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(m.output_row(0).len(), 40);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let c = corpus(&["a b"]);
        assert_eq!(
            train(&c, &EmbeddingConfig::default()).unwrap_err(),
            EmbeddingError::EmptyVocabulary
        );
    }

    #[test]
    fn deterministic_for_seed() {
        let c = corpus(&["a b c a b d e", "b c d e a"]);
        let cfg = EmbeddingConfig {
            dim: 6,
            min_count: 1,
            window: 2,
            ..Default::default()
        };
        assert_eq!(train(&c, &cfg).unwrap(), train(&c, &cfg).unwrap());
    }

    #[test]
    fn zero_subsample_keeps_everything() {
        for c in [1, 10, 1000] {
            assert_eq!(keep_probability(c, 1000, 0.0), 1.0);
        }
        assert!(keep_probability(900, 1000, 1e-3) < 0.1);
    }

    #[test]
    fn structured_blocks() {
        let l = OutputLayout::Structured { window: 2 };
        let blocks: Vec<_> = [-2, -1, 1, 2].iter().map(|&o| l.block(o).unwrap()).collect();
        assert_eq!(blocks, vec![0, 1, 2, 3]);
        assert_eq!(l.block(0), None);
        assert_eq!(l.block(3), None);
        assert_eq!(OutputLayout::Plain.block(-4), Some(0));
    }

    #[test]
    fn nearest_edge_cases() {
        let words: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let m = EmbeddingMatrix::random(words, 3, OutputLayout::Plain, 1.0, 3);
        assert!(m.nearest("a", 0).is_empty());
        assert!(m.nearest("zzz", 3).is_empty());
        let all = m.nearest("a", 3);
        assert_eq!(all.len(), 3);
        assert!(all.iter().all(|(w, _)| w != "a"));
        assert_eq!(m.nearest("a", 10).len(), 3);
    }

    #[test]
    fn nearest_breaks_ties_lexicographically() {
        let m = EmbeddingMatrix::from_vectors(vec![
            ("q".into(), vec![1.0, 0.0]),
            ("z".into(), vec![2.0, 0.0]),
            ("b".into(), vec![1.0, 0.0]),
            ("y".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        let n: Vec<_> = m.nearest("q", 3).into_iter().map(|(w, _)| w).collect();
        assert_eq!(n, vec!["b", "z", "y"]);
    }

    #[test]
    fn save_load_roundtrip() {
        let words: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
        for layout in [OutputLayout::Plain, OutputLayout::Structured { window: 1 }] {
            let m = EmbeddingMatrix::random(words.clone(), 4, layout, 1.0, 9);
            let back = EmbeddingMatrix::load(&m.save()).unwrap();
            assert_eq!(back.words(), m.words());
            assert_eq!(back.layout(), layout);
            for i in 0..3 {
                for (a, b) in back.input_row(i).iter().zip(m.input_row(i)) {
                    assert!((a - b).abs() <= 1e-6);
                }
                for (a, b) in back.output_row(i).iter().zip(m.output_row(i)) {
                    assert!((a - b).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn load_rejects_malformed() {
        let e = EmbeddingMatrix::load("2 3\na 1 2 3\nb 1 2 3\nc 1 2 3\n").unwrap_err();
        assert!(matches!(e, EmbeddingError::Format { line: 4, .. }));
        let e = EmbeddingMatrix::load("2 3\na 1 2 3\nb 1 2\n").unwrap_err();
        assert!(matches!(e, EmbeddingError::Format { line: 3, .. }));
        let e = EmbeddingMatrix::load("1 2\na 1 x\n").unwrap_err();
        assert!(matches!(e, EmbeddingError::Format { line: 2, .. }));
        let e = EmbeddingMatrix::load("3 2\na 1 1\n").unwrap_err();
        assert!(matches!(e, EmbeddingError::Format { .. }));
    }

    #[test]
    fn plain_word2vec_file_loads() {
        let m = EmbeddingMatrix::load("2 2\nfoo 0.5 -1\nbar 1e-3 2\n").unwrap();
        assert_eq!(m.vector("bar").unwrap(), &[1e-3, 2.0]);
        assert_eq!(m.layout(), OutputLayout::Plain);
    }
}
