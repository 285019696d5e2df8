//! POS tagging of noisy tweets: lexical normalization versus semi-supervised
//! use of raw text.

pub mod corpus;
pub mod distance;
pub mod embeddings;
pub mod forest;
pub mod harness;
pub mod lexgen;
pub mod ngram;
pub mod normalizer;
pub mod selftrain;
pub mod tagger;
