use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use tweetpos::corpus::{self, dataset_vocab, Dataset, TagSet};
use tweetpos::embeddings::{self, EmbeddingMatrix};
use tweetpos::harness::{self, FinalInputs, Settings};
use tweetpos::lexgen::{build_lookup, Dictionary};
use tweetpos::ngram::NgramModel;
use tweetpos::normalizer::{KnownWords, NormMode, NormResources, Normalize, NormalizerModel};
use tweetpos::selftrain::{self, EntityMask, SamplingStrategy, SelfTrainSetup};
use tweetpos::tagger::{accuracy, TaggerModel};

#[derive(Parser)]
#[command(name = "tweetpos", version, about = "POS tagging of tweets with normalization and raw-text experiments")]
struct Cli {
    /// Seed shared by every component.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of seeded runs per experimental cell.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Random,
    DevUnknown,
    WithNe,
    WithoutNe,
}

#[derive(Subcommand)]
enum Cmd {
    /// Tokenize, mask URLs and usernames, and deduplicate a raw tweet file.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train skip-gram embeddings on a preprocessed corpus.
    TrainEmbeddings {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        structured: bool,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
    /// Train the candidate-ranking normalizer and write a model directory.
    TrainNormalizer {
        /// Normalization-annotated training data.
        #[arg(long)]
        train: PathBuf,
        /// One word per line.
        #[arg(long)]
        dict: PathBuf,
        /// Canonical text, one sentence per line.
        #[arg(long)]
        canonical: PathBuf,
        /// Preprocessed tweets, one per line.
        #[arg(long)]
        tweets: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Normalize a dataset under one of none, unk, all, golded, gold.
    Normalize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "all")]
        mode: NormMode,
        /// Training data whose words count as known in unk mode.
        #[arg(long)]
        known: Option<PathBuf>,
    },
    TrainTagger {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    Tag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Token accuracy of a model, or of a prediction file, against gold tags.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long, conflicts_with = "pred")]
        model: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
    },
    NormGrid {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        normalizer: PathBuf,
    },
    EmbedGrid {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
    },
    SelfTrain {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long, value_enum, default_value = "random")]
        strategy: Strategy,
        /// Entity mask, one 0/1 per pool line; the capitalization heuristic otherwise.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    LearningCurve {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    Final {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        test_o: PathBuf,
        #[arg(long)]
        test_l: PathBuf,
        #[arg(long)]
        normalizer: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
    },
    Significance {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
        #[arg(long)]
        rounds: Option<usize>,
    },
    ConfusionDiff {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred_a: PathBuf,
        #[arg(long)]
        pred_b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, content: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

/// Reads a tab-separated file with one, two (word, tag) or three
/// (word, normalization, tag) columns.
fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = read(path)?;
    let cols = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.starts_with("# id ="))
        .map(|l| l.split('\t').count())
        .unwrap_or(1);
    let tags = TagSet::twitter();
    let d = match cols {
        1 => corpus::parse_tokens(&text),
        2 => corpus::parse_pos(&text, &tags),
        _ => corpus::parse_norm(&text, &tags),
    };
    d.with_context(|| format!("in {}", path.display()))
}

fn load_lines(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(read(path)?
        .lines()
        .map(|l| l.split_whitespace().map(String::from).collect())
        .collect())
}

fn load_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::load(&read(path)?).with_context(|| format!("in {}", path.display()))
}

fn load_tagger(path: &Path) -> Result<TaggerModel> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    TaggerModel::from_bytes(&bytes).with_context(|| format!("in {}", path.display()))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if !path.exists() {
        bail!("missing resource: {what} ({})", path.display());
    }
    Ok(())
}

fn with_tags(d: &Dataset, tags: &[Vec<String>]) -> Dataset {
    let mut out = d.clone().into_sentences();
    for (s, t) in out.iter_mut().zip(tags) {
        for (tok, tag) in s.tokens.iter_mut().zip(t) {
            tok.gold_pos = Some(tag.clone());
            tok.gold_norm = None;
        }
    }
    Dataset::new(out)
}

fn pred_tags(path: &Path) -> Result<Vec<Vec<String>>> {
    let d = load_dataset(path)?;
    d.sentences()
        .iter()
        .map(|s| {
            s.tags()
                .map(|t| t.into_iter().map(String::from).collect())
                .with_context(|| format!("{}: sentence {} has no tags", path.display(), s.id))
        })
        .collect()
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = match &cli.config {
        Some(p) => Settings::parse(&read(p)?)?,
        None => Settings::default(),
    };
    let seed = cli.seed.unwrap_or(s.seed);
    s = s.with_seed(seed);
    if let Some(r) = cli.runs {
        s.runs = r;
    }
    Ok(s)
}

fn print_references(refs: &[harness::ReferenceComparison]) {
    for r in refs {
        eprintln!("{}", r.line());
    }
}

fn run(cli: Cli) -> Result<()> {
    let s = settings(&cli)?;
    let tagset = TagSet::twitter();
    let out_dir = &cli.out_dir;
    match &cli.cmd {
        Cmd::Preprocess { input, out } => {
            let tweets = corpus::read_raw_corpus(&read(input)?);
            let text: String = tweets.iter().map(|t| t.join(" ") + "\n").collect();
            write(out, text)?;
            println!("{} tweets", tweets.len());
        }
        Cmd::TrainEmbeddings {
            corpus,
            out,
            structured,
            window,
            dim,
        } => {
            let mut cfg = s.embed.clone();
            cfg.structured |= *structured;
            if let Some(w) = window {
                cfg.window = *w;
            }
            if let Some(d) = dim {
                cfg.dim = *d;
            }
            let (m, stats) = embeddings::train_with_stats(&load_lines(corpus)?, &cfg)?;
            write(out, m.save())?;
            println!("{} words, epoch losses {:?}", m.len(), stats.epoch_loss);
        }
        Cmd::TrainNormalizer {
            train,
            dict,
            canonical,
            tweets,
            embeddings,
            out,
        } => {
            let data = load_dataset(train)?;
            let dictionary = Dictionary::parse(&read(dict)?)?;
            let lookup = build_lookup(&data)?;
            let canon = NgramModel::build(load_lines(canonical)?, s.ngram_alpha)?;
            let tw = NgramModel::build(load_lines(tweets)?, s.ngram_alpha)?;
            let emb = embeddings.as_deref().map(load_embeddings).transpose()?;
            let res = Arc::new(NormResources::new(dictionary, lookup, emb, canon, tw, s.lex.clone()));
            let (model, summary) = NormalizerModel::train(&data, res, &s.forest)?;
            model.save(out)?;
            println!(
                "{} instances, {} positives, candidate coverage {:.4}",
                summary.instances,
                summary.positives,
                summary.coverage()
            );
        }
        Cmd::Normalize {
            model,
            input,
            out,
            mode,
            known,
        } => {
            let m = NormalizerModel::load(model)?;
            let data = load_dataset(input)?;
            let known = match known {
                Some(p) => KnownWords::from_dataset(&load_dataset(p)?),
                None => KnownWords::from_vocab(&Default::default()),
            };
            let normed = m.normalize_dataset(&data, *mode, &known)?;
            write(out, corpus::write_pos(&normed))?;
        }
        Cmd::TrainTagger { train, out, embeddings } => {
            let data = load_dataset(train)?;
            let emb = embeddings.as_deref().map(load_embeddings).transpose()?;
            let (m, report) = TaggerModel::fit(&s.tagger, &tagset, &data, emb.as_ref())?;
            write(out, m.to_bytes())?;
            println!("epoch losses {:?}", report.epoch_loss);
        }
        Cmd::Tag { model, input, out } => {
            let m = load_tagger(model)?;
            let data = load_dataset(input)?;
            let preds = m.tag_dataset(&data);
            write(out, corpus::write_pos(&with_tags(&data, &preds)))?;
        }
        Cmd::Eval { gold, model, pred } => {
            let g = load_dataset(gold)?;
            let preds = match (model, pred) {
                (Some(m), _) => load_tagger(m)?.tag_dataset(&g),
                (None, Some(p)) => pred_tags(p)?,
                (None, None) => bail!("eval needs --model or --pred"),
            };
            if preds.len() != g.len() {
                bail!("prediction file has {} sentences, gold has {}", preds.len(), g.len());
            }
            println!("accuracy {:.4}", accuracy(&g, &preds)?);
            if g.layers().has_norm {
                let split = harness::canonical_split_eval(&preds, &g)?;
                println!("{}", serde_json::to_string(&split)?);
            }
        }
        Cmd::NormGrid { train, dev, normalizer } => {
            require(normalizer, "normalizer model directory")?;
            let m = NormalizerModel::load(normalizer)?;
            let grid = harness::run_norm_grid(&load_dataset(train)?, &load_dataset(dev)?, &m, &s, &tagset, None)?;
            write(&out_dir.join("norm_grid.json"), serde_json::to_string_pretty(&grid)?)?;
            write(&out_dir.join("norm_grid.tsv"), grid.to_tsv())?;
            print!("{}", grid.to_tsv());
            print_references(&grid.references());
        }
        Cmd::EmbedGrid { corpus, train, dev } => {
            let grid = harness::run_embed_grid(&load_lines(corpus)?, &load_dataset(train)?, &load_dataset(dev)?, &s, &tagset)?;
            write(&out_dir.join("embed_grid.json"), serde_json::to_string_pretty(&grid)?)?;
            write(&out_dir.join("embed_grid.tsv"), grid.to_tsv())?;
            print!("{}", grid.to_tsv());
            print_references(&grid.references());
        }
        Cmd::SelfTrain {
            train,
            pool,
            dev,
            strategy,
            mask,
            iterations,
            embeddings,
        } => {
            let train = load_dataset(train)?;
            let dev = load_dataset(dev)?;
            let pool = selftrain::pool_from(load_lines(pool)?);
            let mask = match mask {
                Some(p) => EntityMask::parse(&read(p)?)?,
                None => EntityMask::heuristic(&pool),
            };
            let strategy = match strategy {
                Strategy::Random => SamplingStrategy::Random,
                Strategy::DevUnknown => SamplingStrategy::dev_unknown(&dataset_vocab(&dev, 1), &dataset_vocab(&train, 1)),
                Strategy::WithNe => SamplingStrategy::WithNe(mask),
                Strategy::WithoutNe => SamplingStrategy::WithoutNe(mask),
            };
            let emb = embeddings.as_deref().map(load_embeddings).transpose()?;
            let setup = SelfTrainSetup {
                tagger: &s.tagger,
                tagset: &tagset,
                pretrained: emb.as_ref(),
                per_iteration: s.per_iteration,
                seed: s.seed,
            };
            let report =
                selftrain::self_train(&train, pool, &strategy, iterations.unwrap_or(s.iterations), &setup, &dev)?;
            let mut tsv = String::from("iteration\taccuracy\n");
            for (i, a) in &report.curve {
                tsv.push_str(&format!("{i}\t{a:.4}\n"));
            }
            write(&out_dir.join(format!("self_train_{}.tsv", strategy.name())), &tsv)?;
            write(&out_dir.join(format!("self_train_{}_added.conll", strategy.name())), corpus::write_pos(&Dataset::new(report.added)))?;
            print!("{tsv}");
            if report.exhausted {
                eprintln!("pool exhausted after {} iterations", report.curve.len() - 1);
            }
        }
        Cmd::LearningCurve { train, dev, embeddings } => {
            let emb = embeddings.as_deref().map(load_embeddings).transpose()?;
            let points = selftrain::learning_curve(
                &load_dataset(train)?,
                &s.fractions,
                s.runs,
                &s.tagger,
                &tagset,
                emb.as_ref(),
                &load_dataset(dev)?,
            )?;
            let mut tsv = String::from("fraction\tsentences\tmean\tstdev\n");
            for p in &points {
                tsv.push_str(&format!("{}\t{}\t{:.4}\t{:.4}\n", p.fraction, p.sentences, p.report.mean, p.report.stdev));
            }
            let reports: Vec<_> = points.iter().map(|p| &p.report).collect();
            write(&out_dir.join("learning_curve.json"), serde_json::to_string_pretty(&reports)?)?;
            write(&out_dir.join("learning_curve.tsv"), &tsv)?;
            print!("{tsv}");
        }
        Cmd::Final {
            train,
            dev,
            test_o,
            test_l,
            normalizer,
            embeddings,
        } => {
            for (p, what) in [
                (train, "training data"),
                (dev, "development data"),
                (test_o, "test_o data"),
                (test_l, "test_l data"),
                (normalizer, "normalizer model directory"),
                (embeddings, "pretrained embeddings"),
            ] {
                require(p, what)?;
            }
            let m = NormalizerModel::load(normalizer)?;
            let emb = load_embeddings(embeddings)?;
            let (train, dev, to, tl) = (load_dataset(train)?, load_dataset(dev)?, load_dataset(test_o)?, load_dataset(test_l)?);
            let report = harness::run_final(&FinalInputs {
                train: &train,
                sets: vec![("dev".into(), &dev), ("test_o".into(), &to), ("test_l".into(), &tl)],
                normalizer: &m,
                embeddings: &emb,
                settings: &s,
                tagset: &tagset,
            })?;
            write(&out_dir.join("final.json"), report.to_json())?;
            write(&out_dir.join("final.tsv"), report.to_tsv())?;
            print!("{}", report.to_tsv());
            print_references(&report.references);
        }
        Cmd::Significance { gold, pred_a, pred_b, rounds } => {
            let g = load_dataset(gold)?;
            let p = harness::significance(&pred_tags(pred_a)?, &pred_tags(pred_b)?, &g, rounds.unwrap_or(s.rounds), s.seed)?;
            println!("p = {p:.6} ({} at alpha {})", if p < s.alpha { "significant" } else { "not significant" }, s.alpha);
        }
        Cmd::ConfusionDiff { gold, pred_a, pred_b, out } => {
            let g = load_dataset(gold)?;
            let d = harness::confusion_diff(&pred_tags(pred_a)?, &pred_tags(pred_b)?, &g, &tagset)?;
            let path = out.clone().unwrap_or_else(|| out_dir.join("confusion_diff.tsv"));
            write(&path, d.to_tsv())?;
            print!("{}", d.to_tsv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = format!("{e:#}").replace('\n', " ");
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
