//! Add-α smoothed unigram and bigram statistics over lowercased tokens.
//!
//! Each sentence is padded with `<s>` and `</s>` for bigram counting; the
//! markers are not unigram entries. Smoothed distributions have one extra
//! slot beyond the observed vocabulary, shared by every unseen word and by the
//! end-of-sentence marker, so that for any left context the probabilities of
//! all observed words plus that slot sum to one.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

#[derive(Debug, Error, PartialEq)]
pub enum NgramError {
    #[error("alpha must be > 0")]
    InvalidAlpha,
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct NgramModel {
    unigrams: HashMap<String, u64>,
    bigrams: HashMap<(String, String), u64>,
    sentences: u64,
    total_tokens: u64,
    alpha: f64,
}

impl NgramModel {
    pub fn empty(alpha: f64) -> Result<Self, NgramError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(NgramError::InvalidAlpha);
        }
        Ok(NgramModel {
            unigrams: HashMap::new(),
            bigrams: HashMap::new(),
            sentences: 0,
            total_tokens: 0,
            alpha,
        })
    }

    pub fn build<I, S, T>(corpus: I, alpha: f64) -> Result<Self, NgramError>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut m = Self::empty(alpha)?;
        for sent in corpus {
            m.add_sentence(sent);
        }
        Ok(m)
    }

    pub fn add_sentence<S, T>(&mut self, sent: S)
    where
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut prev = BOS.to_string();
        self.sentences += 1;
        for w in sent {
            let w = w.as_ref().to_lowercase();
            *self.unigrams.entry(w.clone()).or_default() += 1;
            self.total_tokens += 1;
            *self.bigrams.entry((prev, w.clone())).or_default() += 1;
            prev = w;
        }
        *self.bigrams.entry((prev, EOS.to_string())).or_default() += 1;
    }

    /// Adds all counts of `other` into `self`; alpha is kept.
    pub fn merge(&mut self, other: &NgramModel) {
        for (w, c) in &other.unigrams {
            *self.unigrams.entry(w.clone()).or_default() += c;
        }
        for (k, c) in &other.bigrams {
            *self.bigrams.entry(k.clone()).or_default() += c;
        }
        self.sentences += other.sentences;
        self.total_tokens += other.total_tokens;
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn vocab_size(&self) -> usize {
        self.unigrams.len()
    }

    pub fn sentences(&self) -> u64 {
        self.sentences
    }

    pub fn unigram_count(&self, w: &str) -> u64 {
        self.unigrams.get(&w.to_lowercase()).copied().unwrap_or(0)
    }

    /// Count of `w` as a left context; `<s>` counts sentences.
    pub fn context_count(&self, w: &str) -> u64 {
        if w == BOS {
            self.sentences
        } else {
            self.unigram_count(w)
        }
    }

    pub fn bigram_count(&self, prev: &str, w: &str) -> u64 {
        let key = (norm_marker(prev), norm_marker(w));
        self.bigrams.get(&key).copied().unwrap_or(0)
    }

    pub fn unigrams(&self) -> impl Iterator<Item = (&str, u64)> {
        self.unigrams.iter().map(|(w, c)| (w.as_str(), *c))
    }

    pub fn bigrams(&self) -> impl Iterator<Item = ((&str, &str), u64)> {
        self.bigrams.iter().map(|((a, b), c)| ((a.as_str(), b.as_str()), *c))
    }

    fn slots(&self) -> f64 {
        (self.vocab_size() + 1) as f64
    }

    pub fn unigram_logp(&self, w: &str) -> f64 {
        let num = self.unigram_count(w) as f64 + self.alpha;
        let den = self.total_tokens as f64 + self.alpha * self.slots();
        (num / den).ln()
    }

    pub fn bigram_logp(&self, prev: &str, w: &str) -> f64 {
        let num = self.bigram_count(prev, w) as f64 + self.alpha;
        let den = self.context_count(prev) as f64 + self.alpha * self.slots();
        (num / den).ln()
    }

    /// Header `#ngram <total_tokens> <sentences> <vocab_size> <bigrams> <alpha>`,
    /// then `<word> <count>` lines, then `<w1> <w2> <count>` lines. Sorted for stable output.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "#ngram {} {} {} {} {}",
            self.total_tokens,
            self.sentences,
            self.unigrams.len(),
            self.bigrams.len(),
            self.alpha
        );
        let mut uni: Vec<_> = self.unigrams.iter().collect();
        uni.sort();
        for (w, c) in uni {
            let _ = writeln!(s, "{w} {c}");
        }
        let mut bi: Vec<_> = self.bigrams.iter().collect();
        bi.sort();
        for ((a, b), c) in bi {
            let _ = writeln!(s, "{a} {b} {c}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, NgramError> {
        let err = |line: usize, msg: &str| NgramError::Format {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 6 || h[0] != "#ngram" {
            return Err(err(1, "malformed header"));
        }
        let num = |s: &str, line: usize| s.parse::<u64>().map_err(|_| err(line, "bad integer"));
        let total_tokens = num(h[1], 1)?;
        let sentences = num(h[2], 1)?;
        let n_uni = num(h[3], 1)? as usize;
        let n_bi = num(h[4], 1)? as usize;
        let alpha: f64 = h[5].parse().map_err(|_| err(1, "bad alpha"))?;
        let mut m = Self::empty(alpha)?;
        m.total_tokens = total_tokens;
        m.sentences = sentences;
        for _ in 0..n_uni {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "truncated unigram section"))?;
            let f: Vec<&str> = l.split(' ').collect();
            if f.len() != 2 {
                return Err(err(ln, "expected `<word> <count>`"));
            }
            m.unigrams.insert(f[0].to_string(), num(f[1], ln)?);
        }
        for _ in 0..n_bi {
            let (ln, l) = lines.next().ok_or_else(|| err(0, "truncated bigram section"))?;
            let f: Vec<&str> = l.split(' ').collect();
            if f.len() != 3 {
                return Err(err(ln, "expected `<w1> <w2> <count>`"));
            }
            m.bigrams
                .insert((f[0].to_string(), f[1].to_string()), num(f[2], ln)?);
        }
        if m.unigrams.values().sum::<u64>() != m.total_tokens {
            return Err(err(1, "unigram counts do not sum to total_tokens"));
        }
        Ok(m)
    }
}

fn norm_marker(w: &str) -> String {
    if w == BOS || w == EOS {
        w.to_string()
    } else {
        w.to_lowercase()
    }
}
