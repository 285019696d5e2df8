//! Normalization candidate generation.
//!
//! Three sources feed the candidate list for a token: a bounded
//! Damerau–Levenshtein search over a dictionary, nearest neighbors in an
//! embedding space, and a lookup list of normalizations seen in training.
//! The token itself is always a candidate, so the ranker can decide to leave
//! it alone.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::ops::BitOr;

use thiserror::Error;

use crate::corpus::Dataset;
use crate::distance::BkTree;
use crate::embeddings::EmbeddingMatrix;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LexError {
    #[error("dataset has no normalization layer")]
    MissingNormLayer,
    #[error("dictionary is empty")]
    EmptyDictionary,
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Set of candidate sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Sources(u8);

impl Sources {
    pub const ORIGINAL: Sources = Sources(1);
    pub const SPELL: Sources = Sources(2);
    pub const EMBED: Sources = Sources(4);
    pub const LOOKUP: Sources = Sources(8);

    pub fn contains(self, other: Sources) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

impl BitOr for Sources {
    type Output = Sources;
    fn bitor(self, rhs: Sources) -> Sources {
        Sources(self.0 | rhs.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub form: String,
    pub sources: Sources,
    pub edit_distance: Option<usize>,
    pub embed_rank: Option<usize>,
    pub embed_cosine: Option<f64>,
    pub lookup_count: Option<usize>,
}

impl Candidate {
    fn empty(form: String, sources: Sources) -> Self {
        Candidate {
            form,
            sources,
            edit_distance: None,
            embed_rank: None,
            embed_cosine: None,
            lookup_count: None,
        }
    }

    pub fn is_original(&self) -> bool {
        self.sources.contains(Sources::ORIGINAL)
    }

    /// Merges another candidate for the same (lowercased) form into this one.
    fn merge(&mut self, other: Candidate) {
        if other.is_original() {
            self.form = other.form;
        }
        self.sources = self.sources | other.sources;
        self.edit_distance = min_opt(self.edit_distance, other.edit_distance);
        self.embed_rank = min_opt(self.embed_rank, other.embed_rank);
        self.embed_cosine = match (self.embed_cosine, other.embed_cosine) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
        self.lookup_count = match (self.lookup_count, other.lookup_count) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (a, b) => a.or(b),
        };
    }
}

fn min_opt(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    }
}

/// Lowercased canonical word list with a BK-tree index.
pub struct Dictionary {
    words: std::collections::HashSet<String>,
    tree: BkTree,
}

impl std::fmt::Debug for Dictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dictionary").field("len", &self.words.len()).finish()
    }
}

impl Dictionary {
    pub fn new<I, S>(words: I) -> Result<Self, LexError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut set = std::collections::HashSet::new();
        let mut ordered = Vec::new();
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if w.is_empty() || w.chars().any(char::is_whitespace) {
                continue;
            }
            if set.insert(w.clone()) {
                ordered.push(w);
            }
        }
        if set.is_empty() {
            return Err(LexError::EmptyDictionary);
        }
        let tree = BkTree::new(&ordered);
        Ok(Dictionary { words: set, tree })
    }

    /// One word per line.
    pub fn parse(text: &str) -> Result<Self, LexError> {
        Self::new(text.lines())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn to_text(&self) -> String {
        let mut w: Vec<&str> = self.words().collect();
        w.sort_unstable();
        let mut s = w.join("\n");
        s.push('\n');
        s
    }
}

/// Normalization pairs seen in training: raw form -> gold form -> count (both lowercased).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LookupList {
    map: BTreeMap<String, BTreeMap<String, usize>>,
}

impl LookupList {
    pub fn add(&mut self, raw: &str, gold: &str, count: usize) {
        if count == 0 {
            return;
        }
        *self
            .map
            .entry(raw.to_lowercase())
            .or_default()
            .entry(gold.to_lowercase())
            .or_default() += count;
    }

    pub fn get(&self, raw: &str) -> Option<&BTreeMap<String, usize>> {
        self.map.get(&raw.to_lowercase())
    }

    /// Total count of `raw` across all its gold forms.
    pub fn total(&self, raw: &str) -> usize {
        self.get(raw).map(|m| m.values().sum()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    /// `raw<TAB>gold<TAB>count` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (raw, golds) in &self.map {
            for (gold, c) in golds {
                let _ = writeln!(s, "{raw}\t{gold}\t{c}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, LexError> {
        let mut l = LookupList::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let fail = |msg: &str| LexError::Format {
                line: i + 1,
                msg: msg.to_string(),
            };
            if cols.len() != 3 {
                return Err(fail("expected raw<TAB>gold<TAB>count"));
            }
            let c: usize = cols[2].parse().map_err(|_| fail("count is not an integer"))?;
            if c == 0 || cols[0].is_empty() || cols[1].is_empty() {
                return Err(fail("empty form or zero count"));
            }
            l.add(cols[0], cols[1], c);
        }
        Ok(l)
    }
}

pub fn build_lookup(data: &Dataset) -> Result<LookupList, LexError> {
    if data.is_empty() {
        return Ok(LookupList::default());
    }
    if !data.layers().has_norm {
        return Err(LexError::MissingNormLayer);
    }
    let mut l = LookupList::default();
    for t in data.tokens() {
        l.add(&t.raw, t.gold_norm.as_deref().expect("norm layer"), 1);
    }
    Ok(l)
}

/// Dictionary forms within `max_dist` of `lowercase(word)`, sorted by (distance, form).
pub fn spell_candidates(word: &str, dict: &Dictionary, max_dist: usize) -> Vec<Candidate> {
    let mut hits = dict.tree.find(&word.to_lowercase(), max_dist);
    hits.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    hits.into_iter()
        .map(|(form, d)| Candidate {
            edit_distance: Some(d),
            ..Candidate::empty(form, Sources::SPELL)
        })
        .collect()
}

/// The `k` nearest embedding neighbors of `lowercase(word)`.
pub fn embed_candidates(word: &str, emb: &EmbeddingMatrix, k: usize) -> Vec<Candidate> {
    emb.nearest(&word.to_lowercase(), k)
        .into_iter()
        .enumerate()
        .map(|(i, (form, cos))| Candidate {
            embed_rank: Some(i + 1),
            embed_cosine: Some(cos),
            ..Candidate::empty(form, Sources::EMBED)
        })
        .collect()
}

pub fn lookup_candidates(word: &str, lookup: &LookupList) -> Vec<Candidate> {
    lookup
        .get(word)
        .map(|golds| {
            golds
                .iter()
                .map(|(g, &c)| Candidate {
                    lookup_count: Some(c),
                    ..Candidate::empty(g.clone(), Sources::LOOKUP)
                })
                .collect()
        })
        .unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexConfig {
    pub max_dist: usize,
    pub k: usize,
    pub max_candidates: usize,
}

impl Default for LexConfig {
    fn default() -> Self {
        LexConfig {
            max_dist: 2,
            k: 40,
            max_candidates: 60,
        }
    }
}

/// Resources consulted by [`generate`]; the embedding space is optional.
#[derive(Clone, Copy)]
pub struct LexModels<'a> {
    pub dict: &'a Dictionary,
    pub lookup: &'a LookupList,
    pub embeddings: Option<&'a EmbeddingMatrix>,
    pub config: &'a LexConfig,
}

/// Candidates for one token, with the ORIGINAL candidate first.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub word: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn original(&self) -> &Candidate {
        self.candidates
            .iter()
            .find(|c| c.is_original())
            .expect("original candidate is always present")
    }

    pub fn find(&self, form: &str) -> Option<&Candidate> {
        let f = form.to_lowercase();
        self.candidates.iter().find(|c| c.form.to_lowercase() == f)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

fn original_candidate(word: &str) -> Candidate {
    Candidate {
        edit_distance: Some(0),
        ..Candidate::empty(word.to_string(), Sources::ORIGINAL)
    }
}

/// Merges candidate lists by lowercased form. The result does not depend on the
/// order of the input lists.
pub fn merge_candidates(word: &str, lists: Vec<Vec<Candidate>>, max_candidates: usize) -> CandidateSet {
    let mut merged: HashMap<String, Candidate> = HashMap::new();
    let mut push = |c: Candidate| {
        let key = c.form.to_lowercase();
        match merged.get_mut(&key) {
            Some(existing) => existing.merge(c),
            None => {
                let form = if c.is_original() { c.form.clone() } else { key.clone() };
                merged.insert(key, Candidate { form, ..c });
            }
        }
    };
    push(original_candidate(word));
    for list in lists {
        list.into_iter().for_each(&mut push);
    }
    let mut out: Vec<Candidate> = merged.into_values().collect();
    out.sort_by(|a, b| priority(a).cmp(&priority(b)));
    out.truncate(max_candidates.max(1));
    CandidateSet {
        word: word.to_string(),
        candidates: out,
    }
}

// Eviction order for the candidate cap: original, lookup, spelling distance, embedding rank.
fn priority(c: &Candidate) -> (bool, bool, usize, usize, String) {
    (
        !c.is_original(),
        !c.sources.contains(Sources::LOOKUP),
        c.edit_distance.unwrap_or(usize::MAX),
        c.embed_rank.unwrap_or(usize::MAX),
        c.form.to_lowercase(),
    )
}

pub fn generate(word: &str, models: &LexModels<'_>) -> CandidateSet {
    let cfg = models.config;
    let mut lists = vec![
        spell_candidates(word, models.dict, cfg.max_dist),
        lookup_candidates(word, models.lookup),
    ];
    if let Some(emb) = models.embeddings {
        lists.push(embed_candidates(word, emb, cfg.k));
    }
    merge_candidates(word, lists, cfg.max_candidates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_norm, TagSet};

    fn dict(words: &[&str]) -> Dictionary {
        Dictionary::new(words.iter().copied()).unwrap()
    }

    #[test]
    fn lookup_counts_pairs() {
        let d = parse_norm(
            "pix\tpictures\n\npix\tpictures\n\npix\tpix\ncomming\tcoming\n",
            &TagSet::twitter(),
        )
        .unwrap();
        let l = build_lookup(&d).unwrap();
        let pix = l.get("pix").unwrap();
        assert_eq!(pix["pictures"], 2);
        assert_eq!(pix["pix"], 1);
        assert_eq!(l.get("comming").unwrap().len(), 1);
        assert_eq!(l.get("comming").unwrap()["coming"], 1);
        assert!(build_lookup(&Dataset::new(vec![])).unwrap().is_empty());
    }

    #[test]
    fn lookup_requires_norm_layer() {
        let d = crate::corpus::parse_pos("a\tN\n", &TagSet::twitter()).unwrap();
        assert_eq!(build_lookup(&d), Err(LexError::MissingNormLayer));
    }

    #[test]
    fn lookup_text_roundtrip() {
        let mut l = LookupList::default();
        l.add("u", "you", 3);
        l.add("pix", "pictures", 1);
        assert_eq!(LookupList::parse(&l.to_text()).unwrap(), l);
        assert!(LookupList::parse("a\tb\n").is_err());
    }

    #[test]
    fn spell_examples() {
        let d = dict(&["coming", "tomorrow", "new", "pictures"]);
        let c = spell_candidates("comming", &d, 2);
        assert!(c.iter().any(|c| c.form == "coming" && c.edit_distance == Some(1)));
        let c = spell_candidates("tomoroe", &d, 2);
        assert!(c.iter().any(|c| c.form == "tomorrow" && c.edit_distance == Some(2)));
        for k in 0..3 {
            let c = spell_candidates("New", &d, k);
            assert_eq!(c[0].form, "new");
            assert_eq!(c[0].edit_distance, Some(0));
        }
    }

    #[test]
    fn spell_is_sorted() {
        let d = dict(&["ab", "ba", "abc", "a", "b", "zz"]);
        let c = spell_candidates("ab", &d, 1);
        let keys: Vec<_> = c.iter().map(|c| (c.edit_distance.unwrap(), c.form.clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(!keys.iter().any(|(_, f)| f == "zz"));
    }

    #[test]
    fn embed_edge_cases() {
        let m = EmbeddingMatrix::from_vectors(vec![
            ("u".into(), vec![1.0, 0.1]),
            ("you".into(), vec![1.0, 0.0]),
            ("cat".into(), vec![0.0, 1.0]),
        ])
        .unwrap();
        assert!(embed_candidates("u", &m, 0).is_empty());
        assert!(embed_candidates("nope", &m, 5).is_empty());
        let c = embed_candidates("U", &m, 1);
        assert_eq!(c[0].form, "you");
        assert_eq!(c[0].embed_rank, Some(1));
    }

    #[test]
    fn generate_examples() {
        let d = dict(&["new", "pictures", "coming"]);
        let mut lookup = LookupList::default();
        let cfg = LexConfig::default();
        let models = LexModels {
            dict: &d,
            lookup: &lookup,
            embeddings: None,
            config: &cfg,
        };
        let cs = generate("new", &models);
        let orig = cs.original();
        assert!(orig.sources.contains(Sources::SPELL));
        assert_eq!(orig.edit_distance, Some(0));

        lookup.add("pix", "pictures", 1);
        lookup.add("comming", "coming", 1);
        let models = LexModels {
            dict: &d,
            lookup: &lookup,
            embeddings: None,
            config: &cfg,
        };
        let cs = generate("pix", &models);
        assert!(cs.find("pictures").unwrap().sources.contains(Sources::LOOKUP));

        let cs = generate("comming", &models);
        let c = cs.find("coming").unwrap();
        assert!(c.sources.contains(Sources::LOOKUP) && c.sources.contains(Sources::SPELL));
        assert_eq!(cs.candidates.iter().filter(|c| c.form == "coming").count(), 1);
    }

    #[test]
    fn original_keeps_casing_and_survives_cap() {
        let d = dict(&["aa", "ab", "ac", "ad", "ba"]);
        let lookup = LookupList::default();
        let cfg = LexConfig {
            max_candidates: 1,
            ..Default::default()
        };
        let models = LexModels {
            dict: &d,
            lookup: &lookup,
            embeddings: None,
            config: &cfg,
        };
        let cs = generate("AB", &models);
        assert_eq!(cs.len(), 1);
        assert_eq!(cs.original().form, "AB");
        assert!(cs.original().sources.contains(Sources::SPELL));
    }
}
