//! Bi-LSTM POS tagger over word embeddings and character bi-LSTM features.
//!
//! Each token is represented by its word embedding concatenated with the
//! final states of a forward and a backward LSTM over its characters. A stack
//! of word-level bi-LSTMs reads these vectors, and an affine layer with
//! log-softmax yields per-token tag distributions. Training is per-sentence
//! Adam on the mean token cross-entropy, with Gaussian noise added to the
//! token vectors.

mod lstm;

use std::collections::{BTreeSet, HashMap};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lstm::{Lstm, Matrix};

use crate::corpus::{Dataset, Sentence, TagSet};
use crate::embeddings::EmbeddingMatrix;
use lstm::{axpy, LstmTrace};

const MAGIC: &[u8; 4] = b"BLTY";
const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum TaggerError {
    #[error("pretrained embeddings have dimension {found}, tagger expects {expected}")]
    DimMismatch { expected: usize, found: usize },
    #[error("sentence {0:?} has no gold POS layer")]
    MissingGold(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("empty sentence")]
    EmptySentence,
    #[error("tag {0:?} is not in the model's tagset")]
    UnknownTag(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("model file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggerConfig {
    pub epochs: usize,
    pub layers: usize,
    pub word_dim: usize,
    /// Hidden size of each character LSTM direction.
    pub char_dim: usize,
    pub char_emb_dim: usize,
    /// Hidden size of each word LSTM direction.
    pub word_hidden: usize,
    pub noise_sigma: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub update_embeddings: bool,
    pub init_scale: f64,
    pub unk_threshold: usize,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        TaggerConfig {
            epochs: 10,
            layers: 1,
            word_dim: 100,
            char_dim: 256,
            char_emb_dim: 100,
            word_hidden: 100,
            noise_sigma: 0.2,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            update_embeddings: true,
            init_scale: 0.1,
            unk_threshold: 1,
            seed: 1,
        }
    }
}

impl TaggerConfig {
    pub fn validate(&self) -> Result<(), TaggerError> {
        let dims = [
            ("layers", self.layers),
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("char_emb_dim", self.char_emb_dim),
            ("word_hidden", self.word_hidden),
            ("unk_threshold", self.unk_threshold),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(TaggerError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.noise_sigma >= 0.0) || !(self.learning_rate > 0.0) || !(self.epsilon > 0.0) {
            return Err(TaggerError::InvalidConfig("noise_sigma, learning_rate, epsilon out of range".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(TaggerError::InvalidConfig("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Width of the word-level bi-LSTM input.
    pub fn token_dim(&self) -> usize {
        self.word_dim + 2 * self.char_dim
    }
}

/// All trainable tensors. Row 0 of both embedding tables is the UNK row.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub word_emb: Matrix,
    pub char_emb: Matrix,
    pub char_fwd: Lstm,
    pub char_bwd: Lstm,
    pub word_fwd: Vec<Lstm>,
    pub word_bwd: Vec<Lstm>,
    pub out_w: Matrix,
    pub out_b: Matrix,
}

impl Params {
    /// Tensors in a fixed order; the first two are the embedding tables.
    pub fn tensors(&self) -> Vec<&Matrix> {
        let mut v = vec![
            &self.word_emb,
            &self.char_emb,
            &self.char_fwd.w,
            &self.char_fwd.b,
            &self.char_bwd.w,
            &self.char_bwd.b,
        ];
        for (f, b) in self.word_fwd.iter().zip(&self.word_bwd) {
            v.extend([&f.w, &f.b, &b.w, &b.b]);
        }
        v.extend([&self.out_w, &self.out_b]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![
            &mut self.word_emb,
            &mut self.char_emb,
            &mut self.char_fwd.w,
            &mut self.char_fwd.b,
            &mut self.char_bwd.w,
            &mut self.char_bwd.b,
        ];
        for (f, b) in self.word_fwd.iter_mut().zip(self.word_bwd.iter_mut()) {
            v.extend([&mut f.w, &mut f.b, &mut b.w, &mut b.b]);
        }
        v.extend([&mut self.out_w, &mut self.out_b]);
        v
    }

    pub fn tensor_names(&self) -> Vec<String> {
        let mut v: Vec<String> = ["word_emb", "char_emb", "char_fwd.w", "char_fwd.b", "char_bwd.w", "char_bwd.b"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for l in 0..self.word_fwd.len() {
            v.extend([
                format!("word_fwd{l}.w"),
                format!("word_fwd{l}.b"),
                format!("word_bwd{l}.w"),
                format!("word_bwd{l}.b"),
            ]);
        }
        v.extend(["out_w".to_string(), "out_b".to_string()]);
        v
    }

    fn zeros_like(&self) -> Params {
        Params {
            word_emb: Matrix::zeros(self.word_emb.rows, self.word_emb.cols),
            char_emb: Matrix::zeros(self.char_emb.rows, self.char_emb.cols),
            char_fwd: self.char_fwd.zeros_like(),
            char_bwd: self.char_bwd.zeros_like(),
            word_fwd: self.word_fwd.iter().map(Lstm::zeros_like).collect(),
            word_bwd: self.word_bwd.iter().map(Lstm::zeros_like).collect(),
            out_w: Matrix::zeros(self.out_w.rows, self.out_w.cols),
            out_b: Matrix::zeros(1, self.out_b.cols),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}

/// Parameter gradients, with the embedding rows that received gradient.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub params: Params,
    pub touched_words: BTreeSet<usize>,
    pub touched_chars: BTreeSet<usize>,
}

impl Gradients {
    fn new(like: &Params) -> Self {
        Gradients {
            params: like.zeros_like(),
            touched_words: BTreeSet::new(),
            touched_chars: BTreeSet::new(),
        }
    }

    fn clear(&mut self) {
        for r in std::mem::take(&mut self.touched_words) {
            self.params.word_emb.row_mut(r).iter_mut().for_each(|x| *x = 0.0);
        }
        for r in std::mem::take(&mut self.touched_chars) {
            self.params.char_emb.row_mut(r).iter_mut().for_each(|x| *x = 0.0);
        }
        for t in self.params.tensors_mut().into_iter().skip(2) {
            t.fill_zero();
        }
    }
}

struct TokenTrace {
    word: usize,
    chars: Vec<usize>,
    fwd: LstmTrace,
    bwd: LstmTrace,
}

struct SentTrace {
    tokens: Vec<TokenTrace>,
    // per layer: forward trace and backward trace (the latter over reversed positions)
    layers: Vec<(LstmTrace, LstmTrace)>,
    top: Vec<Vec<f64>>,
    logp: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    config: TaggerConfig,
    tagset: TagSet,
    words: Vec<String>,
    word_index: HashMap<String, usize>,
    chars: Vec<char>,
    char_index: HashMap<char, usize>,
    pub params: Params,
}

/// Per-epoch mean sentence loss observed during training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_loss: Vec<f64>,
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
    logits.iter().map(|x| x - lse).collect()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

impl TaggerModel {
    /// Fresh model. The word vocabulary is every training word seen at least
    /// `unk_threshold` times plus every word of `pretrained`; rows for pretrained
    /// words are copied from it.
    pub fn init(
        config: &TaggerConfig,
        tagset: &TagSet,
        train_vocab: &HashMap<String, usize>,
        pretrained: Option<&EmbeddingMatrix>,
    ) -> Result<Self, TaggerError> {
        config.validate()?;
        if let Some(p) = pretrained {
            if p.dim() != config.word_dim {
                return Err(TaggerError::DimMismatch {
                    expected: config.word_dim,
                    found: p.dim(),
                });
            }
        }
        let mut train_words: Vec<&String> = train_vocab
            .iter()
            .filter(|(_, &c)| c >= config.unk_threshold)
            .map(|(w, _)| w)
            .collect();
        train_words.sort();
        let mut words = vec!["<UNK>".to_string()];
        let mut word_index = HashMap::new();
        for w in train_words
            .into_iter()
            .cloned()
            .chain(pretrained.into_iter().flat_map(|p| p.words().iter().cloned()))
        {
            if !word_index.contains_key(&w) {
                word_index.insert(w.clone(), words.len());
                words.push(w);
            }
        }
        let char_set: BTreeSet<char> = train_vocab.keys().flat_map(|w| w.chars()).collect();
        let mut chars = vec!['\u{0}'];
        chars.extend(char_set);
        let char_index = chars.iter().enumerate().skip(1).map(|(i, c)| (*c, i)).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let s = config.init_scale;
        let (cd, ce, h) = (config.char_dim, config.char_emb_dim, config.word_hidden);
        let word_emb = Matrix::uniform(words.len(), config.word_dim, s, &mut rng);
        let char_emb = Matrix::uniform(chars.len(), ce, s, &mut rng);
        let char_fwd = Lstm::new(ce, cd, s, &mut rng);
        let char_bwd = Lstm::new(ce, cd, s, &mut rng);
        let mut word_fwd = Vec::new();
        let mut word_bwd = Vec::new();
        for l in 0..config.layers {
            let input = if l == 0 { config.token_dim() } else { 2 * h };
            word_fwd.push(Lstm::new(input, h, s, &mut rng));
            word_bwd.push(Lstm::new(input, h, s, &mut rng));
        }
        let out_w = Matrix::uniform(tagset.len(), 2 * h, s, &mut rng);
        let out_b = Matrix::uniform(1, tagset.len(), s, &mut rng);
        let mut params = Params {
            word_emb,
            char_emb,
            char_fwd,
            char_bwd,
            word_fwd,
            word_bwd,
            out_w,
            out_b,
        };
        if let Some(p) = pretrained {
            for (i, w) in words.iter().enumerate().skip(1) {
                if let Some(v) = p.vector(w) {
                    params.word_emb.row_mut(i).copy_from_slice(v);
                }
            }
        }
        Ok(TaggerModel {
            config: config.clone(),
            tagset: tagset.clone(),
            words,
            word_index,
            chars,
            char_index,
            params,
        })
    }

    /// `init` followed by `train` on the dataset's own vocabulary.
    pub fn fit(
        config: &TaggerConfig,
        tagset: &TagSet,
        data: &Dataset,
        pretrained: Option<&EmbeddingMatrix>,
    ) -> Result<(Self, TrainReport), TaggerError> {
        let vocab = crate::corpus::dataset_vocab(data, 1);
        let mut m = Self::init(config, tagset, &vocab, pretrained)?;
        let report = m.train(data)?;
        Ok((m, report))
    }

    pub fn config(&self) -> &TaggerConfig {
        &self.config
    }

    pub fn tagset(&self) -> &TagSet {
        &self.tagset
    }

    pub fn word_id(&self, w: &str) -> usize {
        self.word_index.get(w).copied().unwrap_or(0)
    }

    pub fn vocab_size(&self) -> usize {
        self.words.len()
    }

    fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(0)
    }

    fn forward_trace<S: AsRef<str> + Sync>(&self, words: &[S], noise: Option<&mut ChaCha8Rng>) -> SentTrace {
        let p = &self.params;
        let tokens: Vec<TokenTrace> = words
            .par_iter()
            .map(|w| {
                let w = w.as_ref();
                let chars: Vec<usize> = w.chars().map(|c| self.char_id(c)).collect();
                let xs: Vec<&[f64]> = chars.iter().map(|&c| p.char_emb.row(c)).collect();
                let fwd = p.char_fwd.forward(&xs);
                let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
                let bwd = p.char_bwd.forward(&rev);
                TokenTrace {
                    word: self.word_id(w),
                    chars,
                    fwd,
                    bwd,
                }
            })
            .collect();
        let mut inputs: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| {
                let mut x = Vec::with_capacity(self.config.token_dim());
                x.extend_from_slice(p.word_emb.row(t.word));
                x.extend_from_slice(t.fwd.h.last().expect("non-empty token"));
                x.extend_from_slice(t.bwd.h.last().expect("non-empty token"));
                x
            })
            .collect();
        if let Some(rng) = noise {
            if self.config.noise_sigma > 0.0 {
                let normal = Normal::new(0.0, self.config.noise_sigma).expect("valid sigma");
                for x in &mut inputs {
                    x.iter_mut().for_each(|v| *v += normal.sample(rng));
                }
            }
        }
        let n = inputs.len();
        let mut layers = Vec::with_capacity(self.config.layers);
        for (f, b) in p.word_fwd.iter().zip(&p.word_bwd) {
            let ft = f.forward(&inputs);
            let rev: Vec<&Vec<f64>> = inputs.iter().rev().collect();
            let bt = b.forward(&rev);
            inputs = (0..n)
                .map(|t| {
                    let mut v = ft.h[t].clone();
                    v.extend_from_slice(&bt.h[n - 1 - t]);
                    v
                })
                .collect();
            layers.push((ft, bt));
        }
        let logp = inputs
            .iter()
            .map(|x| {
                let mut logits = p.out_b.data.clone();
                let mut tmp = vec![0.0; logits.len()];
                p.out_w.matvec(x, &mut tmp);
                logits.iter_mut().zip(&tmp).for_each(|(l, t)| *l += t);
                log_softmax(&logits)
            })
            .collect();
        SentTrace {
            tokens,
            layers,
            top: inputs,
            logp,
        }
    }

    /// Per-token log-probabilities over the tagset (no noise).
    pub fn forward<S: AsRef<str> + Sync>(&self, words: &[S]) -> Vec<Vec<f64>> {
        if words.is_empty() {
            return Vec::new();
        }
        self.forward_trace(words, None).logp
    }

    fn gold_ids(&self, s: &Sentence) -> Result<Vec<usize>, TaggerError> {
        s.tokens
            .iter()
            .map(|t| {
                let tag = t.gold_pos.as_deref().ok_or_else(|| TaggerError::MissingGold(s.id.clone()))?;
                self.tagset
                    .index_of(tag)
                    .ok_or_else(|| TaggerError::UnknownTag(tag.to_string()))
            })
            .collect()
    }

    fn backward(&self, tr: &SentTrace, gold: &[usize], grads: &mut Gradients) -> f64 {
        let p = &self.params;
        let g = &mut grads.params;
        let n = gold.len();
        let inv = 1.0 / n as f64;
        let mut loss = 0.0;
        let mut d_in: Vec<Vec<f64>> = Vec::with_capacity(n);
        for t in 0..n {
            loss -= tr.logp[t][gold[t]];
            let mut dl: Vec<f64> = tr.logp[t].iter().map(|lp| lp.exp() * inv).collect();
            dl[gold[t]] -= inv;
            g.out_w.outer_acc(&dl, &tr.top[t]);
            axpy(1.0, &dl, &mut g.out_b.data);
            let mut dx = vec![0.0; p.out_w.cols];
            p.out_w.matvec_t_acc(&dl, &mut dx);
            d_in.push(dx);
        }
        let h = self.config.word_hidden;
        for l in (0..p.word_fwd.len()).rev() {
            let (ft, bt) = &tr.layers[l];
            let dh_f: Vec<Vec<f64>> = d_in.iter().map(|d| d[..h].to_vec()).collect();
            let dh_b: Vec<Vec<f64>> = (0..n).map(|s| d_in[n - 1 - s][h..].to_vec()).collect();
            let dx_f = p.word_fwd[l].backward(ft, &dh_f, &mut g.word_fwd[l]);
            let dx_b = p.word_bwd[l].backward(bt, &dh_b, &mut g.word_bwd[l]);
            d_in = (0..n)
                .map(|t| {
                    let mut v = dx_f[t].clone();
                    axpy(1.0, &dx_b[n - 1 - t], &mut v);
                    v
                })
                .collect();
        }
        let (wd, cd) = (self.config.word_dim, self.config.char_dim);
        for (tok, dx) in tr.tokens.iter().zip(&d_in) {
            axpy(1.0, &dx[..wd], g.word_emb.row_mut(tok.word));
            grads.touched_words.insert(tok.word);
            let m = tok.chars.len();
            let mut dh = vec![vec![0.0; cd]; m];
            dh[m - 1].copy_from_slice(&dx[wd..wd + cd]);
            let dc_f = p.char_fwd.backward(&tok.fwd, &dh, &mut g.char_fwd);
            dh[m - 1].copy_from_slice(&dx[wd + cd..]);
            let dc_b = p.char_bwd.backward(&tok.bwd, &dh, &mut g.char_bwd);
            for (k, &c) in tok.chars.iter().enumerate() {
                let row = g.char_emb.row_mut(c);
                axpy(1.0, &dc_f[k], row);
                axpy(1.0, &dc_b[m - 1 - k], row);
                grads.touched_chars.insert(c);
            }
        }
        loss * inv
    }

    /// Mean token cross-entropy of a gold-tagged sentence and its exact gradients (no noise).
    pub fn loss_and_grads(&self, s: &Sentence) -> Result<(f64, Gradients), TaggerError> {
        if s.is_empty() {
            return Err(TaggerError::EmptySentence);
        }
        let gold = self.gold_ids(s)?;
        let tr = self.forward_trace(&s.words(), None);
        let mut grads = Gradients::new(&self.params);
        let loss = self.backward(&tr, &gold, &mut grads);
        Ok((loss, grads))
    }

    /// Mean token cross-entropy without noise.
    pub fn loss(&self, s: &Sentence) -> Result<f64, TaggerError> {
        let gold = self.gold_ids(s)?;
        let logp = self.forward(&s.words());
        Ok(-gold.iter().zip(&logp).map(|(g, lp)| lp[*g]).sum::<f64>() / gold.len() as f64)
    }

    /// Trains for `config.epochs` passes, each over a seeded shuffle of the data.
    pub fn train(&mut self, data: &Dataset) -> Result<TrainReport, TaggerError> {
        if data.is_empty() {
            return Err(TaggerError::EmptyDataset);
        }
        let golds = data
            .sentences()
            .iter()
            .map(|s| self.gold_ids(s))
            .collect::<Result<Vec<_>, _>>()?;
        let words: Vec<Vec<&str>> = data.sentences().iter().map(|s| s.words()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5EED_7A66_E500_0001);
        let mut adam = Adam::new(&self.params);
        let mut grads = Gradients::new(&self.params);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut report = TrainReport::default();
        for _ in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for &i in &order {
                let tr = self.forward_trace(&words[i], Some(&mut rng));
                total += self.backward(&tr, &golds[i], &mut grads);
                adam.step(&mut self.params, &grads, &self.config);
                grads.clear();
            }
            report.epoch_loss.push(total / data.len() as f64);
        }
        Ok(report)
    }

    /// Tag indices, argmax per token with ties to the lowest index.
    pub fn tag_ids<S: AsRef<str> + Sync>(&self, words: &[S]) -> Vec<usize> {
        self.forward(words).iter().map(|lp| argmax(lp)).collect()
    }

    pub fn tag<S: AsRef<str> + Sync>(&self, words: &[S]) -> Vec<String> {
        self.tag_ids(words)
            .into_iter()
            .map(|i| self.tagset.label(i).to_string())
            .collect()
    }

    /// Predicted tags for every sentence, in order.
    pub fn tag_dataset(&self, data: &Dataset) -> Vec<Vec<String>> {
        data.sentences().par_iter().map(|s| self.tag(&s.words())).collect()
    }

    /// Token-level accuracy against the gold POS layer.
    pub fn evaluate(&self, data: &Dataset) -> Result<f64, TaggerError> {
        let preds = self.tag_dataset(data);
        accuracy(data, &preds)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        #[derive(Serialize)]
        struct Header<'a> {
            config: &'a TaggerConfig,
            tagset: &'a [String],
            words: &'a [String],
            chars: String,
        }
        let header = serde_json::to_vec(&Header {
            config: &self.config,
            tagset: self.tagset.labels(),
            words: &self.words,
            chars: self.chars.iter().collect(),
        })
        .expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.write_u32::<LittleEndian>(VERSION).unwrap();
        out.write_u64::<LittleEndian>(header.len() as u64).unwrap();
        out.extend_from_slice(&header);
        for t in self.params.tensors() {
            out.write_u64::<LittleEndian>(t.rows as u64).unwrap();
            out.write_u64::<LittleEndian>(t.cols as u64).unwrap();
            for x in &t.data {
                out.write_f64::<LittleEndian>(*x).unwrap();
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TaggerError> {
        #[derive(Deserialize)]
        struct Header {
            config: TaggerConfig,
            tagset: Vec<String>,
            words: Vec<String>,
            chars: String,
        }
        let fail = |m: &str| TaggerError::Format(m.to_string());
        let mut cur = std::io::Cursor::new(bytes);
        let mut magic = [0u8; 4];
        std::io::Read::read_exact(&mut cur, &mut magic).map_err(|_| fail("truncated"))?;
        if &magic != MAGIC {
            return Err(fail("not a tagger model"));
        }
        let version = cur.read_u32::<LittleEndian>().map_err(|_| fail("truncated"))?;
        if version != VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let len = cur.read_u64::<LittleEndian>().map_err(|_| fail("truncated"))? as usize;
        let start = cur.position() as usize;
        let header_bytes = bytes.get(start..start + len).ok_or_else(|| fail("truncated header"))?;
        let h: Header = serde_json::from_slice(header_bytes).map_err(|e| fail(&e.to_string()))?;
        cur.set_position((start + len) as u64);
        let tagset = TagSet::new(h.tagset).map_err(|e| fail(&e.to_string()))?;
        let vocab: HashMap<String, usize> = HashMap::new();
        let mut m = TaggerModel::init(&h.config, &tagset, &vocab, None)?;
        m.words = h.words;
        m.word_index = m.words.iter().enumerate().skip(1).map(|(i, w)| (w.clone(), i)).collect();
        m.chars = h.chars.chars().collect();
        m.char_index = m.chars.iter().enumerate().skip(1).map(|(i, c)| (*c, i)).collect();
        m.params.word_emb = Matrix::zeros(m.words.len(), h.config.word_dim);
        m.params.char_emb = Matrix::zeros(m.chars.len(), h.config.char_emb_dim);
        for t in m.params.tensors_mut() {
            let rows = cur.read_u64::<LittleEndian>().map_err(|_| fail("truncated tensor"))? as usize;
            let cols = cur.read_u64::<LittleEndian>().map_err(|_| fail("truncated tensor"))? as usize;
            if rows != t.rows || cols != t.cols {
                return Err(fail("tensor shape does not match config"));
            }
            for x in t.data.iter_mut() {
                *x = cur.read_f64::<LittleEndian>().map_err(|_| fail("truncated tensor"))?;
            }
        }
        if cur.position() as usize != bytes.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(m)
    }
}

/// Token accuracy of predicted tag sequences against a gold-tagged dataset.
pub fn accuracy<S: AsRef<str>>(gold: &Dataset, preds: &[Vec<S>]) -> Result<f64, TaggerError> {
    if gold.num_tokens() == 0 {
        return Err(TaggerError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (s, p) in gold.sentences().iter().zip(preds) {
        let tags = s.tags().ok_or_else(|| TaggerError::MissingGold(s.id.clone()))?;
        correct += tags.iter().zip(p).filter(|(g, p)| **g == p.as_ref()).count();
    }
    Ok(correct as f64 / gold.num_tokens() as f64)
}

struct Adam {
    m: Params,
    v: Params,
    t: i32,
}

impl Adam {
    fn new(p: &Params) -> Self {
        Adam {
            m: p.zeros_like(),
            v: p.zeros_like(),
            t: 0,
        }
    }

    fn update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr_t: f64, cfg: &TaggerConfig) {
        for k in 0..p.len() {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            p[k] -= lr_t * m[k] / (v[k].sqrt() + cfg.epsilon);
        }
    }

    // Embedding tables get lazy updates: only rows that received gradient move.
    fn step(&mut self, params: &mut Params, grads: &Gradients, cfg: &TaggerConfig) {
        self.t += 1;
        let lr_t = cfg.learning_rate * (1.0 - cfg.beta2.powi(self.t)).sqrt() / (1.0 - cfg.beta1.powi(self.t));
        let gp = &grads.params;
        if cfg.update_embeddings {
            for &r in &grads.touched_words {
                Self::update(
                    params.word_emb.row_mut(r),
                    gp.word_emb.row(r),
                    self.m.word_emb.row_mut(r),
                    self.v.word_emb.row_mut(r),
                    lr_t,
                    cfg,
                );
            }
        }
        for &r in &grads.touched_chars {
            Self::update(
                params.char_emb.row_mut(r),
                gp.char_emb.row(r),
                self.m.char_emb.row_mut(r),
                self.v.char_emb.row_mut(r),
                lr_t,
                cfg,
            );
        }
        let ps = params.tensors_mut();
        let gs = gp.tensors();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in ps.into_iter().zip(gs).zip(ms).zip(vs).skip(2) {
            Self::update(&mut p.data, &g.data, &mut m.data, &mut v.data, lr_t, cfg);
        }
    }
}
