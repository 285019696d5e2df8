#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tweetpos::corpus::{Dataset, Sentence, TagSet, Token};
use tweetpos::forest::ForestConfig;
use tweetpos::lexgen::{build_lookup, Dictionary, LexConfig};
use tweetpos::ngram::NgramModel;
use tweetpos::normalizer::{NormResources, NormalizerModel};
use tweetpos::tagger::TaggerConfig;

/// (canonical form, tag, noisy spellings)
pub const LEXICON: &[(&str, &str, &[&str])] = &[
    ("you", "O", &["u", "yu"]),
    ("pictures", "N", &["pix", "pics"]),
    ("coming", "V", &["comming", "cmin"]),
    ("tomorrow", "N", &["tmrw", "tomoroe"]),
    ("new", "A", &[]),
    ("are", "V", &["r"]),
    ("the", "D", &["da", "teh"]),
    ("love", "V", &["luv"]),
    ("great", "A", &["gr8"]),
    ("tonight", "N", &["2nite"]),
    ("going", "V", &["goin"]),
    ("to", "P", &["2"]),
    ("see", "V", &[]),
    ("lol", "!", &[]),
    ("really", "R", &["rly"]),
    ("people", "N", &["ppl"]),
    ("because", "P", &["cuz", "bc"]),
    ("what", "O", &["wat"]),
    ("i", "O", &[]),
    ("!", ",", &[]),
];

/// Seeded tweets with raw, gold normalization and gold POS layers.
pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n)
        .map(|i| {
            let len = rng.random_range(3..=8);
            let tokens = (0..len)
                .map(|_| {
                    let (canon, tag, noisy) = LEXICON[rng.random_range(0..LEXICON.len())];
                    let raw = if !noisy.is_empty() && rng.random_bool(0.3) {
                        noisy[rng.random_range(0..noisy.len())]
                    } else {
                        canon
                    };
                    Token {
                        raw: raw.to_string(),
                        gold_norm: Some(canon.to_string()),
                        gold_pos: Some(tag.to_string()),
                    }
                })
                .collect();
            Sentence::new(format!("t{i}"), tokens).unwrap()
        })
        .collect();
    Dataset::new(sentences)
}

pub fn dictionary() -> Dictionary {
    Dictionary::new(LEXICON.iter().map(|e| e.0)).unwrap()
}

pub fn resources(train: &Dataset) -> Arc<NormResources> {
    let canonical: Vec<Vec<String>> = train
        .sentences()
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.gold_norm.clone().unwrap()).collect())
        .collect();
    let tweets: Vec<Vec<&str>> = train.sentences().iter().map(|s| s.words()).collect();
    Arc::new(NormResources::new(
        dictionary(),
        build_lookup(train).unwrap(),
        None,
        NgramModel::build(canonical, 0.1).unwrap(),
        NgramModel::build(tweets, 0.1).unwrap(),
        LexConfig::default(),
    ))
}

pub fn normalizer(train: &Dataset) -> NormalizerModel {
    let cfg = ForestConfig {
        n_trees: 15,
        seed: 3,
        ..Default::default()
    };
    NormalizerModel::train(train, resources(train), &cfg).unwrap().0
}

pub fn tiny_tagger(epochs: usize) -> TaggerConfig {
    TaggerConfig {
        epochs,
        word_dim: 8,
        char_dim: 8,
        char_emb_dim: 6,
        word_hidden: 8,
        ..Default::default()
    }
}

pub fn tagset() -> TagSet {
    TagSet::twitter()
}
