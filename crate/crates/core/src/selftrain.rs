//! Indelible self-training over a raw tweet pool and the gold-data learning curve.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Dataset, Sentence, TagSet, Token, URL_TOKEN, USERNAME_TOKEN};
use crate::embeddings::EmbeddingMatrix;
use crate::harness::RunReport;
use crate::tagger::{TaggerConfig, TaggerError, TaggerModel};

/// Sentences added to the training data per self-training iteration.
pub const DEFAULT_PER_ITERATION: usize = 100;

#[derive(Debug, Error, PartialEq)]
pub enum SelfTrainError {
    #[error("raw pool is empty")]
    EmptyPool,
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("entity mask has {mask} entries but the pool refers to tweet {index}")]
    MaskTooShort { mask: usize, index: usize },
    #[error("entity mask line {line}: expected 0 or 1, found {found:?}")]
    MaskFormat { line: usize, found: String },
    #[error("fraction {0} must lie in (0, 1]")]
    BadFraction(f64),
    #[error("fraction {0} selects no sentences")]
    EmptyFraction(f64),
    #[error("runs must be at least 1")]
    NoRuns,
    #[error(transparent)]
    Tagger(#[from] TaggerError),
}

/// A raw tweet, remembering its line in the original pool so that entity
/// masks stay aligned after sampling removes tweets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolTweet {
    pub index: usize,
    pub tokens: Vec<String>,
}

pub fn pool_from(tweets: Vec<Vec<String>>) -> Vec<PoolTweet> {
    tweets
        .into_iter()
        .enumerate()
        .filter(|(_, t)| !t.is_empty())
        .map(|(index, tokens)| PoolTweet { index, tokens })
        .collect()
}

/// Per-tweet flag: does the tweet contain at least one named entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityMask(Vec<bool>);

impl EntityMask {
    pub fn from_flags(flags: Vec<bool>) -> Self {
        EntityMask(flags)
    }

    /// One `0` or `1` per line, in pool order.
    pub fn parse(text: &str) -> Result<Self, SelfTrainError> {
        text.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| match l.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(SelfTrainError::MaskFormat {
                    line: i + 1,
                    found: other.to_string(),
                }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(EntityMask)
    }

    /// Capitalization heuristic applied to every tweet of `pool`, indexed by
    /// `PoolTweet::index`.
    pub fn heuristic(pool: &[PoolTweet]) -> Self {
        let len = pool.iter().map(|t| t.index + 1).max().unwrap_or(0);
        let mut flags = vec![false; len];
        for t in pool {
            flags[t.index] = has_entity(&t.tokens);
        }
        EntityMask(flags)
    }

    pub fn get(&self, index: usize) -> Result<bool, SelfTrainError> {
        self.0.get(index).copied().ok_or(SelfTrainError::MaskTooShort {
            mask: self.0.len(),
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A non-initial token with an uppercase first letter and lowercase rest.
pub fn has_entity<S: AsRef<str>>(tokens: &[S]) -> bool {
    tokens.iter().skip(1).any(|t| {
        let t = t.as_ref();
        if t == URL_TOKEN || t == USERNAME_TOKEN || t.eq_ignore_ascii_case("rt") {
            return false;
        }
        let mut cs = t.chars();
        match cs.next() {
            Some(c) if c.is_uppercase() => cs.all(|c| !c.is_alphabetic() || c.is_lowercase()),
            _ => false,
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum SamplingStrategy {
    Random,
    /// Tweets containing a word of the development data unseen in training.
    DevUnknown(HashSet<String>),
    WithNe(EntityMask),
    WithoutNe(EntityMask),
}

impl SamplingStrategy {
    pub fn dev_unknown(dev_vocab: &HashMap<String, usize>, train_vocab: &HashMap<String, usize>) -> Self {
        SamplingStrategy::DevUnknown(
            dev_vocab
                .keys()
                .filter(|w| !train_vocab.contains_key(*w))
                .cloned()
                .collect(),
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            SamplingStrategy::Random => "random",
            SamplingStrategy::DevUnknown(_) => "dev-unknown",
            SamplingStrategy::WithNe(_) => "with-ne",
            SamplingStrategy::WithoutNe(_) => "without-ne",
        }
    }

    pub fn eligible(&self, tweet: &PoolTweet) -> Result<bool, SelfTrainError> {
        Ok(match self {
            SamplingStrategy::Random => true,
            SamplingStrategy::DevUnknown(words) => tweet.tokens.iter().any(|t| words.contains(t)),
            SamplingStrategy::WithNe(mask) => mask.get(tweet.index)?,
            SamplingStrategy::WithoutNe(mask) => !mask.get(tweet.index)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub selected: Vec<PoolTweet>,
    pub remaining: Vec<PoolTweet>,
    /// Fewer than `n` tweets were eligible.
    pub exhausted: bool,
}

/// Draws up to `n` eligible tweets without replacement.
pub fn sample(pool: Vec<PoolTweet>, strategy: &SamplingStrategy, n: usize, seed: u64) -> Result<Sample, SelfTrainError> {
    let mut eligible = Vec::new();
    for (i, t) in pool.iter().enumerate() {
        if strategy.eligible(t)? {
            eligible.push(i);
        }
    }
    let exhausted = eligible.len() < n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    eligible.shuffle(&mut rng);
    eligible.truncate(n);
    let chosen: HashSet<usize> = eligible.iter().copied().collect();
    let mut slots: Vec<Option<PoolTweet>> = pool.into_iter().map(Some).collect();
    let selected = eligible.iter().map(|&i| slots[i].take().expect("distinct")).collect();
    let remaining = slots
        .into_iter()
        .enumerate()
        .filter(|(i, _)| !chosen.contains(i))
        .map(|(_, t)| t.expect("untouched"))
        .collect();
    Ok(Sample {
        selected,
        remaining,
        exhausted,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfTrainReport {
    /// `(iteration, accuracy)`; iteration 0 is the model trained on the initial data.
    pub curve: Vec<(usize, f64)>,
    /// Automatically tagged sentences, in the order they were added.
    pub added: Vec<Sentence>,
    pub train_size: usize,
    pub exhausted: bool,
}

pub struct SelfTrainSetup<'a> {
    pub tagger: &'a TaggerConfig,
    pub tagset: &'a TagSet,
    pub pretrained: Option<&'a EmbeddingMatrix>,
    pub per_iteration: usize,
    pub seed: u64,
}

fn tagged_sentence(model: &TaggerModel, tweet: &PoolTweet) -> Sentence {
    let tags = model.tag(&tweet.tokens);
    let tokens = tweet
        .tokens
        .iter()
        .zip(tags)
        .map(|(w, t)| Token {
            raw: w.clone(),
            gold_norm: None,
            gold_pos: Some(t),
        })
        .collect();
    Sentence {
        id: format!("pool{}", tweet.index),
        tokens,
    }
}

/// Each iteration samples from the pool, tags the sample with the current
/// model, appends it to the training data for good, and retrains from scratch
/// with the same tagger seed.
pub fn self_train(
    initial: &Dataset,
    pool: Vec<PoolTweet>,
    strategy: &SamplingStrategy,
    iterations: usize,
    setup: &SelfTrainSetup,
    eval: &Dataset,
) -> Result<SelfTrainReport, SelfTrainError> {
    if iterations == 0 {
        return Err(SelfTrainError::NoIterations);
    }
    if pool.is_empty() {
        return Err(SelfTrainError::EmptyPool);
    }
    let (mut model, _) = TaggerModel::fit(setup.tagger, setup.tagset, initial, setup.pretrained)?;
    let mut report = SelfTrainReport {
        curve: vec![(0, model.evaluate(eval)?)],
        added: Vec::new(),
        train_size: initial.len(),
        exhausted: false,
    };
    let mut sentences = initial.sentences().to_vec();
    let mut pool = pool;
    for it in 1..=iterations {
        let s = sample(pool, strategy, setup.per_iteration, setup.seed.wrapping_add(it as u64))?;
        pool = s.remaining;
        if s.selected.is_empty() {
            report.exhausted = true;
            break;
        }
        let new: Vec<Sentence> = s.selected.par_iter().map(|t| tagged_sentence(&model, t)).collect();
        sentences.extend(new.iter().cloned());
        report.added.extend(new);
        let train = Dataset::new(sentences.clone());
        model = TaggerModel::fit(setup.tagger, setup.tagset, &train, setup.pretrained)?.0;
        report.curve.push((it, model.evaluate(eval)?));
        report.train_size = train.len();
        if s.exhausted {
            report.exhausted = true;
            break;
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub fraction: f64,
    pub sentences: usize,
    pub report: RunReport,
}

/// Subset of `data` made of the first `ceil(fraction * N)` sentences of a
/// seeded permutation, kept in corpus order.
pub fn fraction_subset(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, SelfTrainError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SelfTrainError::BadFraction(fraction));
    }
    let k = (fraction * data.len() as f64).ceil() as usize;
    if k == 0 {
        return Err(SelfTrainError::EmptyFraction(fraction));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(k);
    idx.sort_unstable();
    Ok(Dataset::new(idx.into_iter().map(|i| data.sentences()[i].clone()).collect()))
}

/// Run `r` uses tagger seed `config.seed + r` and subset seed `config.seed + r`.
pub fn learning_curve(
    train: &Dataset,
    fractions: &[f64],
    runs: usize,
    config: &TaggerConfig,
    tagset: &TagSet,
    pretrained: Option<&EmbeddingMatrix>,
    eval: &Dataset,
) -> Result<Vec<CurvePoint>, SelfTrainError> {
    if runs == 0 {
        return Err(SelfTrainError::NoRuns);
    }
    let mut out = Vec::new();
    for &f in fractions {
        let subsets = (0..runs)
            .map(|r| fraction_subset(train, f, config.seed.wrapping_add(r as u64)))
            .collect::<Result<Vec<_>, _>>()?;
        let accs = subsets
            .par_iter()
            .enumerate()
            .map(|(r, sub)| {
                let cfg = TaggerConfig {
                    seed: config.seed.wrapping_add(r as u64),
                    ..config.clone()
                };
                TaggerModel::fit(&cfg, tagset, sub, pretrained)?.0.evaluate(eval)
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(CurvePoint {
            fraction: f,
            sentences: subsets[0].len(),
            report: RunReport::new(format!("curve-{f}"), accs),
        });
    }
    Ok(out)
}
