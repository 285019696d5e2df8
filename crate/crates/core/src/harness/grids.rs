use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use super::{
    noncanonical_fraction, randomization_test, sentence_correct, HarnessError, ReferenceComparison, RunReport, Settings,
    REFERENCE_NONCANONICAL, REFERENCE_RAW_RAW, REFERENCE_STRUCTURED_W1,
};
use crate::corpus::{Dataset, TagSet};
use crate::embeddings::{self, EmbeddingMatrix};
use crate::normalizer::{KnownWords, NormMode, Normalize};
use crate::tagger::{accuracy, TaggerConfig, TaggerModel};

pub const TRAIN_VARIANTS: [&str; 3] = ["raw", "all", "union"];

/// Published Test_L accuracies (percent) of the embedding and combined systems.
pub const REFERENCE_TEST_L_EMBEDS: f64 = 88.53;
pub const REFERENCE_TEST_L_COMB: f64 = 89.63;

const SOFT_TOLERANCE: f64 = 1.5;

fn run_seeds(settings: &Settings) -> Vec<u64> {
    (0..settings.runs as u64).map(|r| settings.tagger.seed.wrapping_add(r)).collect()
}

fn check_runs(settings: &Settings) -> Result<(), HarnessError> {
    if settings.runs == 0 {
        return Err(HarnessError::Invalid("runs must be at least 1".into()));
    }
    Ok(())
}

fn seeded(cfg: &TaggerConfig, seed: u64) -> TaggerConfig {
    TaggerConfig { seed, ..cfg.clone() }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormGrid {
    pub train_variants: Vec<String>,
    pub modes: Vec<String>,
    /// `cells[train_variant][test_mode]`
    pub cells: Vec<Vec<RunReport>>,
    pub train_sizes: Vec<usize>,
}

impl NormGrid {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("train\\test");
        for m in &self.modes {
            let _ = write!(out, "\t{m}");
        }
        out.push('\n');
        for (v, row) in self.train_variants.iter().zip(&self.cells) {
            out.push_str(v);
            for c in row {
                let _ = write!(out, "\t{}", c.cell());
            }
            out.push('\n');
        }
        out
    }

    pub fn references(&self) -> Vec<ReferenceComparison> {
        vec![ReferenceComparison::new(
            "normalization grid raw/raw",
            REFERENCE_RAW_RAW,
            Some(100.0 * self.cells[0][0].mean),
            SOFT_TOLERANCE,
        )]
    }
}

/// Trains taggers on raw, normalized and concatenated training data and
/// evaluates each on the evaluation set under every normalization mode.
pub fn run_norm_grid(
    train: &Dataset,
    eval: &Dataset,
    normalizer: &dyn Normalize,
    settings: &Settings,
    tagset: &TagSet,
    pretrained: Option<&EmbeddingMatrix>,
) -> Result<NormGrid, HarnessError> {
    check_runs(settings)?;
    let known = KnownWords::from_dataset(train);
    let normalized = normalizer.normalize_dataset(train, NormMode::All, &known)?;
    let union = train.concat(&normalized);
    let trains = [train, &normalized, &union];
    let evals = NormMode::ALL_MODES
        .iter()
        .map(|&m| normalizer.normalize_dataset(eval, m, &known))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = run_seeds(settings);
    let jobs: Vec<(usize, usize)> = (0..trains.len()).flat_map(|v| (0..seeds.len()).map(move |r| (v, r))).collect();
    let results = jobs
        .par_iter()
        .map(|&(v, r)| {
            let (model, _) = TaggerModel::fit(&seeded(&settings.tagger, seeds[r]), tagset, trains[v], pretrained)?;
            evals.iter().map(|e| model.evaluate(e)).collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let snapshot = settings.snapshot();
    let cells = (0..trains.len())
        .map(|v| {
            NormMode::ALL_MODES
                .iter()
                .enumerate()
                .map(|(m, mode)| {
                    let accs = (0..seeds.len()).map(|r| results[v * seeds.len() + r][m]).collect();
                    RunReport::new(format!("norm-grid/{}/{}", TRAIN_VARIANTS[v], mode), accs)
                        .with_seeds(seeds.clone())
                        .with_config(snapshot.clone())
                })
                .collect()
        })
        .collect();
    Ok(NormGrid {
        train_variants: TRAIN_VARIANTS.iter().map(|s| s.to_string()).collect(),
        modes: NormMode::ALL_MODES.iter().map(|m| m.to_string()).collect(),
        cells,
        train_sizes: trains.iter().map(|d| d.len()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedCell {
    pub structured: bool,
    pub window: usize,
    pub report: RunReport,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedGrid {
    pub cells: Vec<EmbedCell>,
}

impl EmbedGrid {
    pub fn get(&self, structured: bool, window: usize) -> Option<&RunReport> {
        self.cells
            .iter()
            .find(|c| c.structured == structured && c.window == window)
            .map(|c| &c.report)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("model\twindow\taccuracy\n");
        for c in &self.cells {
            let name = if c.structured { "structured" } else { "skip-gram" };
            let _ = writeln!(out, "{name}\t{}\t{}", c.window, c.report.cell());
        }
        out
    }

    pub fn references(&self) -> Vec<ReferenceComparison> {
        vec![ReferenceComparison::new(
            "embedding grid structured window 1",
            REFERENCE_STRUCTURED_W1,
            self.get(true, 1).map(|r| 100.0 * r.mean),
            SOFT_TOLERANCE,
        )]
    }
}

/// Plain and structured skip-grams at windows 1 and 5, each used to initialize
/// taggers trained with the same seeds per run index.
pub fn run_embed_grid(
    corpus: &[Vec<String>],
    train: &Dataset,
    eval: &Dataset,
    settings: &Settings,
    tagset: &TagSet,
) -> Result<EmbedGrid, HarnessError> {
    check_runs(settings)?;
    if corpus.iter().all(|s| s.is_empty()) {
        return Err(HarnessError::Invalid("empty embedding corpus".into()));
    }
    let variants = [(false, 1), (false, 5), (true, 1), (true, 5)];
    let matrices = variants
        .par_iter()
        .map(|&(structured, window)| {
            let cfg = embeddings::EmbeddingConfig {
                dim: settings.tagger.word_dim,
                structured,
                window,
                ..settings.embed.clone()
            };
            embeddings::train(corpus, &cfg)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = run_seeds(settings);
    let jobs: Vec<(usize, usize)> = (0..variants.len()).flat_map(|v| (0..seeds.len()).map(move |r| (v, r))).collect();
    let accs = jobs
        .par_iter()
        .map(|&(v, r)| {
            let (m, _) = TaggerModel::fit(&seeded(&settings.tagger, seeds[r]), tagset, train, Some(&matrices[v]))?;
            m.evaluate(eval)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let snapshot = settings.snapshot();
    let cells = variants
        .iter()
        .enumerate()
        .map(|(v, &(structured, window))| EmbedCell {
            structured,
            window,
            report: RunReport::new(
                format!("embed-grid/{}/{window}", if structured { "structured" } else { "plain" }),
                accs[v * seeds.len()..(v + 1) * seeds.len()].to_vec(),
            )
            .with_seeds(seeds.clone())
            .with_config(snapshot.clone()),
        })
        .collect();
    Ok(EmbedGrid { cells })
}

pub struct FinalInputs<'a> {
    pub train: &'a Dataset,
    /// Named evaluation sets, e.g. `dev`, `test_o`, `test_l`.
    pub sets: Vec<(String, &'a Dataset)>,
    pub normalizer: &'a dyn Normalize,
    pub embeddings: &'a EmbeddingMatrix,
    pub settings: &'a Settings,
    pub tagset: &'a TagSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalReport {
    pub systems: Vec<String>,
    pub sets: Vec<String>,
    /// `cells[system][set]`
    pub cells: Vec<Vec<RunReport>>,
    /// Randomization-test p-value between the embedding and combined systems, per set.
    pub p_values: Vec<f64>,
    pub alpha: f64,
    pub noncanonical: Vec<Option<f64>>,
    pub references: Vec<ReferenceComparison>,
}

pub const FINAL_SYSTEMS: [&str; 4] = ["baseline", "+norm", "+embeds", "+comb"];

impl FinalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("system");
        for s in &self.sets {
            let _ = write!(out, "\t{s}");
        }
        out.push('\n');
        for (name, row) in self.systems.iter().zip(&self.cells) {
            out.push_str(name);
            for c in row {
                let _ = write!(out, "\t{}", c.cell());
            }
            out.push('\n');
        }
        out.push_str("p(+embeds,+comb)");
        for p in &self.p_values {
            let _ = write!(out, "\t{p:.4}");
        }
        out.push('\n');
        out.push_str("% non-canonical");
        for f in &self.noncanonical {
            match f {
                Some(f) => {
                    let _ = write!(out, "\t{:.2}", 100.0 * f);
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
        out
    }
}

/// Baseline tagger, test-time normalization, pretrained embeddings, and both.
/// The randomization test pools (run, sentence) pairs across runs.
pub fn run_final(inputs: &FinalInputs) -> Result<FinalReport, HarnessError> {
    let settings = inputs.settings;
    check_runs(settings)?;
    for (name, d) in &inputs.sets {
        if d.is_empty() || !d.layers().has_pos {
            return Err(HarnessError::MissingResource(format!("gold POS layer for evaluation set {name}")));
        }
    }
    if inputs.train.is_empty() || !inputs.train.layers().has_pos {
        return Err(HarnessError::MissingResource("gold POS layer for the training set".into()));
    }
    let known = KnownWords::from_dataset(inputs.train);
    let normalized = inputs
        .sets
        .iter()
        .map(|(_, d)| inputs.normalizer.normalize_dataset(d, NormMode::All, &known))
        .collect::<Result<Vec<_>, _>>()?;
    let seeds = run_seeds(settings);
    // system 0 and 1 share the baseline models, 2 and 3 the embedding-initialized ones
    let jobs: Vec<(bool, usize)> = [false, true]
        .iter()
        .flat_map(|&e| (0..seeds.len()).map(move |r| (e, r)))
        .collect();
    let preds = jobs
        .par_iter()
        .map(|&(with_emb, r)| {
            let pretrained = with_emb.then_some(inputs.embeddings);
            let (m, _) = TaggerModel::fit(&seeded(&settings.tagger, seeds[r]), inputs.tagset, inputs.train, pretrained)?;
            let raw: Vec<_> = inputs.sets.iter().map(|(_, d)| m.tag_dataset(d)).collect();
            let norm: Vec<_> = normalized.iter().map(|d| m.tag_dataset(d)).collect();
            Ok((raw, norm))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let runs = seeds.len();
    // per system, per run, per set predictions
    let system_preds = |sys: usize, r: usize, s: usize| -> &Vec<Vec<String>> {
        let job = &preds[(sys / 2) * runs + r];
        if sys % 2 == 0 {
            &job.0[s]
        } else {
            &job.1[s]
        }
    };
    let snapshot = settings.snapshot();
    let mut cells = Vec::new();
    for (sys, name) in FINAL_SYSTEMS.iter().enumerate() {
        let mut row = Vec::new();
        for (s, (set, gold)) in inputs.sets.iter().enumerate() {
            let accs = (0..runs)
                .map(|r| accuracy(gold, system_preds(sys, r, s)))
                .collect::<Result<Vec<_>, _>>()?;
            let mut rep = RunReport::new(format!("final/{name}/{set}"), accs)
                .with_seeds(seeds.clone())
                .with_config(snapshot.clone());
            rep.predictions = Some((0..runs).map(|r| system_preds(sys, r, s).clone()).collect());
            row.push(rep);
        }
        cells.push(row);
    }
    let mut p_values = Vec::new();
    for (s, (_, gold)) in inputs.sets.iter().enumerate() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for r in 0..runs {
            a.extend(sentence_correct(system_preds(2, r, s), gold)?);
            b.extend(sentence_correct(system_preds(3, r, s), gold)?);
        }
        p_values.push(randomization_test(&a, &b, settings.rounds, settings.seed.wrapping_add(s as u64))?);
    }
    let noncanonical: Vec<Option<f64>> = inputs.sets.iter().map(|(_, d)| noncanonical_fraction(d).ok()).collect();
    let mut references = Vec::new();
    for (label, reference) in REFERENCE_NONCANONICAL {
        if let Some(s) = inputs.sets.iter().position(|(n, _)| n == label) {
            references.push(ReferenceComparison::new(
                format!("{label} % non-canonical"),
                reference,
                noncanonical[s].map(|f| 100.0 * f),
                0.005,
            ));
        }
    }
    if let Some(s) = inputs.sets.iter().position(|(n, _)| n == "test_l") {
        references.push(ReferenceComparison::new(
            "test_l +embeds",
            REFERENCE_TEST_L_EMBEDS,
            Some(100.0 * cells[2][s].mean),
            SOFT_TOLERANCE,
        ));
        references.push(ReferenceComparison::new(
            "test_l +comb",
            REFERENCE_TEST_L_COMB,
            Some(100.0 * cells[3][s].mean),
            SOFT_TOLERANCE,
        ));
    }
    Ok(FinalReport {
        systems: FINAL_SYSTEMS.iter().map(|s| s.to_string()).collect(),
        sets: inputs.sets.iter().map(|(n, _)| n.clone()).collect(),
        cells,
        p_values,
        alpha: settings.alpha,
        noncanonical,
        references,
    })
}
