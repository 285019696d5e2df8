//! Candidate ranking with a random forest and sentence normalization.
//!
//! Every (token, candidate) pair becomes one binary instance: is this
//! candidate the gold normalization? At test time the candidate with the
//! highest positive-class probability wins. Because the token itself is a
//! candidate, the same model also decides *whether* to normalize.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{Dataset, Sentence};
use crate::embeddings::{EmbeddingError, EmbeddingMatrix};
use crate::forest::{Forest, ForestConfig, ForestError};
use crate::lexgen::{generate, Candidate, CandidateSet, Dictionary, LexConfig, LexError, LexModels, LookupList, Sources};
use crate::ngram::{NgramError, NgramModel, BOS};

pub const SCHEMA_VERSION: u32 = 1;

/// Value of a feature that does not apply to a candidate.
pub const MISSING: f64 = -1e6;

pub const FEATURE_NAMES: [&str; 22] = [
    "is_original",
    "is_spell",
    "edit_distance",
    "edit_distance_present",
    "is_embed",
    "embed_rank",
    "embed_rank_present",
    "embed_cosine",
    "embed_cosine_present",
    "is_lookup",
    "lookup_count",
    "lookup_count_present",
    "lookup_rel_freq",
    "lookup_rel_freq_present",
    "canonical_unigram_logp",
    "canonical_bigram_logp",
    "tweet_unigram_logp",
    "tweet_bigram_logp",
    "candidate_in_dict",
    "original_in_dict",
    "length_diff",
    "candidate_is_lowercased_original",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

#[derive(Debug, Error)]
pub enum NormError {
    #[error("mode {0} needs a gold normalization layer")]
    MissingNormLayer(NormMode),
    #[error("training data has no normalization layer")]
    TrainingWithoutNorm,
    #[error("token index {index} out of range for sentence of length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no positive training instances: gold forms were never generated (candidate coverage {coverage:.4})")]
    NoPositives { coverage: f64 },
    #[error("feature schema version {found} does not match {expected}")]
    SchemaMismatch { expected: u32, found: u32 },
    #[error("model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Ngram(#[from] NgramError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NormMode {
    None,
    Unk,
    All,
    GoldEd,
    Gold,
}

impl NormMode {
    pub const ALL_MODES: [NormMode; 5] = [NormMode::None, NormMode::Unk, NormMode::All, NormMode::GoldEd, NormMode::Gold];

    pub fn needs_gold(self) -> bool {
        matches!(self, NormMode::GoldEd | NormMode::Gold)
    }

    pub fn name(self) -> &'static str {
        match self {
            NormMode::None => "none",
            NormMode::Unk => "unk",
            NormMode::All => "all",
            NormMode::GoldEd => "golded",
            NormMode::Gold => "gold",
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for NormMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        NormMode::ALL_MODES
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || (s.eq_ignore_ascii_case("raw") && *m == NormMode::None))
            .ok_or_else(|| format!("unknown normalization mode {s:?}"))
    }
}

/// Lowercased forms the tagger saw in training; used to decide which tokens are unknown.
#[derive(Debug, Clone, Default)]
pub struct KnownWords(HashSet<String>);

impl KnownWords {
    pub fn from_vocab(vocab: &HashMap<String, usize>) -> Self {
        KnownWords(vocab.keys().map(|w| w.to_lowercase()).collect())
    }

    pub fn from_dataset(d: &Dataset) -> Self {
        KnownWords(d.tokens().map(|t| t.raw.to_lowercase()).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(&word.to_lowercase())
    }
}

/// Everything the candidate generator and the feature extractor read.
pub struct NormResources {
    pub dict: Dictionary,
    pub lookup: LookupList,
    pub embeddings: Option<EmbeddingMatrix>,
    pub canonical: NgramModel,
    pub tweets: NgramModel,
    pub lex: LexConfig,
    cache: RwLock<HashMap<String, Arc<CandidateSet>>>,
}

impl fmt::Debug for NormResources {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormResources")
            .field("dict", &self.dict)
            .field("lookup_entries", &self.lookup.len())
            .field("embeddings", &self.embeddings.as_ref().map(EmbeddingMatrix::len))
            .field("lex", &self.lex)
            .finish()
    }
}

impl NormResources {
    pub fn new(
        dict: Dictionary,
        lookup: LookupList,
        embeddings: Option<EmbeddingMatrix>,
        canonical: NgramModel,
        tweets: NgramModel,
        lex: LexConfig,
    ) -> Self {
        NormResources {
            dict,
            lookup,
            embeddings,
            canonical,
            tweets,
            lex,
            cache: RwLock::new(HashMap::new()),
        }
    }

    /// Candidate set for a surface form, memoized.
    pub fn candidates(&self, word: &str) -> Arc<CandidateSet> {
        if let Some(c) = self.cache.read().expect("cache lock").get(word) {
            return c.clone();
        }
        let models = LexModels {
            dict: &self.dict,
            lookup: &self.lookup,
            embeddings: self.embeddings.as_ref(),
            config: &self.lex,
        };
        let set = Arc::new(generate(word, &models));
        self.cache
            .write()
            .expect("cache lock")
            .insert(word.to_string(), set.clone());
        set
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn optional(v: Option<f64>) -> [f64; 2] {
    match v {
        Some(x) => [x, 1.0],
        None => [MISSING, 0.0],
    }
}

/// Feature vector for one candidate of `sentence.tokens[index]`; layout is [`FEATURE_NAMES`].
pub fn featurize(cand: &Candidate, index: usize, sentence: &Sentence, res: &NormResources) -> Result<Vec<f64>, NormError> {
    let token = sentence.tokens.get(index).ok_or(NormError::IndexOutOfRange {
        index,
        len: sentence.len(),
    })?;
    let original = token.raw.as_str();
    let left = if index == 0 {
        BOS
    } else {
        sentence.tokens[index - 1].raw.as_str()
    };
    let s = cand.sources;
    let lookup_total = res.lookup.total(original);
    let rel = cand
        .lookup_count
        .filter(|_| lookup_total > 0)
        .map(|c| c as f64 / lookup_total as f64);
    let form = cand.form.as_str();

    let mut f = Vec::with_capacity(FEATURE_NAMES.len());
    f.push(flag(s.contains(Sources::ORIGINAL)));
    f.push(flag(s.contains(Sources::SPELL)));
    f.extend(optional(cand.edit_distance.map(|d| d as f64)));
    f.push(flag(s.contains(Sources::EMBED)));
    f.extend(optional(cand.embed_rank.map(|r| r as f64)));
    f.extend(optional(cand.embed_cosine));
    f.push(flag(s.contains(Sources::LOOKUP)));
    f.extend(optional(cand.lookup_count.map(|c| c as f64)));
    f.extend(optional(rel));
    f.push(res.canonical.unigram_logp(form));
    f.push(res.canonical.bigram_logp(left, form));
    f.push(res.tweets.unigram_logp(form));
    f.push(res.tweets.bigram_logp(left, form));
    f.push(flag(res.dict.contains(form)));
    f.push(flag(res.dict.contains(original)));
    f.push(form.chars().count() as f64 - original.chars().count() as f64);
    f.push(flag(form == original.to_lowercase()));
    debug_assert_eq!(f.len(), FEATURE_NAMES.len());
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub tokens: usize,
    pub covered: usize,
    pub instances: usize,
    pub positives: usize,
}

impl TrainSummary {
    /// Fraction of tokens whose gold form is among the generated candidates.
    pub fn coverage(&self) -> f64 {
        if self.tokens == 0 {
            0.0
        } else {
            self.covered as f64 / self.tokens as f64
        }
    }
}

/// Instances for one sentence: (features, label) per candidate, plus covered-token count.
fn sentence_instances(s: &Sentence, res: &NormResources) -> Result<(Vec<(Vec<f64>, usize)>, usize), NormError> {
    let mut out = Vec::new();
    let mut covered = 0;
    for (i, tok) in s.tokens.iter().enumerate() {
        let gold = tok.gold_norm.as_deref().ok_or(NormError::TrainingWithoutNorm)?.to_lowercase();
        let cands = res.candidates(&tok.raw);
        let mut hit = false;
        for c in &cands.candidates {
            let label = c.form.to_lowercase() == gold;
            hit |= label;
            out.push((featurize(c, i, s, res)?, usize::from(label)));
        }
        covered += usize::from(hit);
    }
    Ok((out, covered))
}

pub struct NormalizerModel {
    forest: Forest,
    schema_version: u32,
    resources: Arc<NormResources>,
}

impl fmt::Debug for NormalizerModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NormalizerModel")
            .field("trees", &self.forest.trees().len())
            .field("schema_version", &self.schema_version)
            .field("resources", &self.resources)
            .finish()
    }
}

impl NormalizerModel {
    pub fn train(data: &Dataset, resources: Arc<NormResources>, config: &ForestConfig) -> Result<(Self, TrainSummary), NormError> {
        if !data.layers().has_norm {
            return Err(NormError::TrainingWithoutNorm);
        }
        let per_sentence = data
            .sentences()
            .par_iter()
            .map(|s| sentence_instances(s, &resources))
            .collect::<Result<Vec<_>, _>>()?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut covered = 0;
        for (inst, cov) in per_sentence {
            covered += cov;
            for (f, l) in inst {
                x.push(f);
                y.push(l);
            }
        }
        let summary = TrainSummary {
            tokens: data.num_tokens(),
            covered,
            instances: x.len(),
            positives: y.iter().sum(),
        };
        if summary.positives == 0 {
            return Err(NormError::NoPositives {
                coverage: summary.coverage(),
            });
        }
        let forest = Forest::fit(&x, &y, config)?;
        Ok((
            NormalizerModel {
                forest,
                schema_version: SCHEMA_VERSION,
                resources,
            },
            summary,
        ))
    }

    pub fn from_parts(forest: Forest, resources: Arc<NormResources>) -> Result<Self, NormError> {
        if forest.n_features() != FEATURE_NAMES.len() {
            return Err(NormError::SchemaMismatch {
                expected: SCHEMA_VERSION,
                found: 0,
            });
        }
        Ok(NormalizerModel {
            forest,
            schema_version: SCHEMA_VERSION,
            resources,
        })
    }

    pub fn resources(&self) -> &NormResources {
        &self.resources
    }

    pub fn forest(&self) -> &Forest {
        &self.forest
    }

    /// Every candidate of `sentence.tokens[index]` with its probability of being correct.
    pub fn score_candidates(&self, sentence: &Sentence, index: usize) -> Result<Vec<(Candidate, f64)>, NormError> {
        let tok = sentence.tokens.get(index).ok_or(NormError::IndexOutOfRange {
            index,
            len: sentence.len(),
        })?;
        let cands = self.resources.candidates(&tok.raw);
        cands
            .candidates
            .iter()
            .map(|c| {
                let f = featurize(c, index, sentence, &self.resources)?;
                let p = self.forest.predict_proba(&f)?;
                Ok((c.clone(), p.get(1).copied().unwrap_or(0.0)))
            })
            .collect()
    }

    fn best(&self, sentence: &Sentence, index: usize, allow_original: bool) -> Result<Option<Candidate>, NormError> {
        let scored = self.score_candidates(sentence, index)?;
        Ok(pick_best(
            scored.into_iter().filter(|(c, _)| allow_original || !c.is_original()),
        ))
    }

    pub fn save(&self, dir: &Path) -> Result<(), NormError> {
        fs::create_dir_all(dir)?;
        let r = &self.resources;
        fs::write(dir.join("forest.bin"), self.forest.serialize())?;
        fs::write(dir.join("dictionary.txt"), r.dict.to_text())?;
        fs::write(dir.join("lookup.tsv"), r.lookup.to_text())?;
        fs::write(dir.join("canonical.ngram"), r.canonical.to_text())?;
        fs::write(dir.join("tweets.ngram"), r.tweets.to_text())?;
        if let Some(e) = &r.embeddings {
            fs::write(dir.join("embeddings.txt"), e.save())?;
        }
        fs::write(
            dir.join("model.cfg"),
            format!(
                "schema_version={}\nmax_dist={}\nk={}\nmax_candidates={}\n",
                self.schema_version, r.lex.max_dist, r.lex.k, r.lex.max_candidates
            ),
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, NormError> {
        let read = |name: &str| fs::read_to_string(dir.join(name));
        let cfg: HashMap<String, String> = read("model.cfg")?
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
            .collect();
        let get = |k: &str| -> Result<usize, NormError> {
            cfg.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| NormError::Bundle(format!("model.cfg lacks {k}")))
        };
        let version = get("schema_version")? as u32;
        if version != SCHEMA_VERSION {
            return Err(NormError::SchemaMismatch {
                expected: SCHEMA_VERSION,
                found: version,
            });
        }
        let lex = LexConfig {
            max_dist: get("max_dist")?,
            k: get("k")?,
            max_candidates: get("max_candidates")?,
        };
        let embeddings = match read("embeddings.txt") {
            Ok(t) => Some(EmbeddingMatrix::load(&t)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };
        let res = NormResources::new(
            Dictionary::parse(&read("dictionary.txt")?)?,
            LookupList::parse(&read("lookup.tsv")?)?,
            embeddings,
            NgramModel::parse(&read("canonical.ngram")?)?,
            NgramModel::parse(&read("tweets.ngram")?)?,
            lex,
        );
        let forest = Forest::deserialize(&fs::read(dir.join("forest.bin"))?)?;
        Self::from_parts(forest, Arc::new(res))
    }
}

/// Highest score wins; ties prefer the original, then the lexicographically smallest form.
pub fn pick_best(scored: impl IntoIterator<Item = (Candidate, f64)>) -> Option<Candidate> {
    let mut best: Option<(Candidate, f64)> = None;
    for (c, p) in scored {
        let better = match &best {
            None => true,
            Some((b, bp)) => {
                p > *bp
                    || (p == *bp
                        && ((c.is_original() && !b.is_original())
                            || (c.is_original() == b.is_original() && c.form < b.form)))
            }
        };
        if better {
            best = Some((c, p));
        }
    }
    best.map(|(c, _)| c)
}

/// Anything that rewrites a sentence token by token under a [`NormMode`].
pub trait Normalize: Send + Sync {
    fn normalize(&self, sentence: &Sentence, mode: NormMode, known: &KnownWords) -> Result<Sentence, NormError>;

    fn normalize_dataset(&self, data: &Dataset, mode: NormMode, known: &KnownWords) -> Result<Dataset, NormError> {
        let out = data
            .sentences()
            .par_iter()
            .map(|s| self.normalize(s, mode, known))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Dataset::new(out))
    }
}

fn check_mode(sentence: &Sentence, mode: NormMode) -> Result<(), NormError> {
    if mode.needs_gold() && !sentence.has_norm() {
        return Err(NormError::MissingNormLayer(mode));
    }
    Ok(())
}

fn gold_rewrite(sentence: &Sentence) -> Sentence {
    let mut out = sentence.clone();
    for t in &mut out.tokens {
        t.raw = t.gold_norm.clone().expect("norm layer checked");
    }
    out
}

impl Normalize for NormalizerModel {
    fn normalize(&self, sentence: &Sentence, mode: NormMode, known: &KnownWords) -> Result<Sentence, NormError> {
        check_mode(sentence, mode)?;
        match mode {
            NormMode::None => return Ok(sentence.clone()),
            NormMode::Gold => return Ok(gold_rewrite(sentence)),
            _ => {}
        }
        let mut out = sentence.clone();
        for (i, tok) in sentence.tokens.iter().enumerate() {
            let eligible = match mode {
                NormMode::Unk => !known.contains(&tok.raw) && !self.resources.dict.contains(&tok.raw),
                NormMode::All => true,
                NormMode::GoldEd => tok.is_noncanonical(),
                NormMode::None | NormMode::Gold => unreachable!(),
            };
            if !eligible {
                continue;
            }
            if let Some(c) = self.best(sentence, i, mode != NormMode::GoldEd)? {
                // the original keeps its casing; every other candidate is lowercase
                out.tokens[i].raw = c.form;
            }
        }
        Ok(out)
    }
}

/// Normalizer that never changes a token except under the gold mode.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityNormalizer;

impl Normalize for IdentityNormalizer {
    fn normalize(&self, sentence: &Sentence, mode: NormMode, _known: &KnownWords) -> Result<Sentence, NormError> {
        check_mode(sentence, mode)?;
        Ok(if mode == NormMode::Gold {
            gold_rewrite(sentence)
        } else {
            sentence.clone()
        })
    }
}
