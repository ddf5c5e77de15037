mod config;
mod table;

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use storytrack::baselines::{Featurizer, KMeansSystem, L2rSystem, SdSystem, StorySystem, TextSystem};
use storytrack::corpus::{load_jsonl, sample_negatives, CorpusStream, Document};
use storytrack::entitylink::{
    annotate_all, write_gazetteer_tsv, GazetteerLinker, Linker, SyntheticLinker, TagmeConfig, TagmeLinker, WIKI_PREFIX,
};
use storytrack::eval::{complexity_batch, gen_synthetic, run_ablation, Experiment, SyntheticCorpus, FEATURE_GROUPS};
use storytrack::relevance::{
    generate_training_pairs, load_model, save_model, train_forest, write_pairs_csv, RandomForestModel,
};
use storytrack::tracker::{Strategy, TrackerConfig};

use config::{Config, LinkerKind};
use table::{f3, ms, Report};

#[derive(Parser)]
#[command(name = "storytrack", version, about = "Entity-graph news story tracking")]
struct Cli {
    /// TOML or JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Positive seed documents (JSONL).
    #[arg(long, global = true)]
    seed_docs: Option<PathBuf>,
    /// Relevance model file (JSON).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// none | acc | rev | rr[:k] | ar
    #[arg(long, global = true)]
    strategy: Option<String>,
    /// Offline gazetteer (surface \t id \t confidence).
    #[arg(long, global = true)]
    gazetteer: Option<PathBuf>,
    /// Output directory for CSV and artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    linker: Option<LinkerKind>,
    /// Labeled JSONL stream.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate every document of the corpus with entities.
    Link,
    /// Generate training pairs and fit the relevance forest.
    Train,
    /// Track one story over the stream.
    Track,
    /// Compare the tracker against the baselines.
    Eval,
    /// Compare selection strategies on one stream and model.
    BenchSss,
    /// Cross-validate the forest per feature group.
    Ablate,
    /// Entity similarity and stream entropy of each labeled story.
    Complexity,
    /// Write a synthetic labeled corpus and its gazetteer.
    GenSynthetic {
        /// Use the training corpus spec instead of the test spec.
        #[arg(long)]
        train: bool,
        /// Override the generator seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    // flags win over the file
    macro_rules! set {
        ($($f:ident),*) => { $(if cli.$f.is_some() { cfg.$f = cli.$f.clone(); })* };
    }
    set!(seed_docs, model, strategy, gazetteer, out, corpus);
    if let Some(l) = cli.linker {
        cfg.linker = l;
    }
    let out = cfg.out_dir()?;
    match cli.command {
        Command::Link => link(&cfg, &out),
        Command::Train => train(&cfg, &out).map(|_| ()),
        Command::Track => track(&cfg, &out),
        Command::Eval => eval(&cfg, &out),
        Command::BenchSss => bench(&cfg, &out),
        Command::Ablate => ablate(&cfg, &out),
        Command::Complexity => complexity(&cfg, &out),
        Command::GenSynthetic { train, seed } => gen(&cfg, &out, train, seed),
    }
}

/// A corpus plus the gazetteer that came with it, if it was generated.
struct Data {
    stream: CorpusStream,
    generated: Option<SyntheticCorpus>,
}

fn load_or_generate(path: Option<&Path>, spec: &storytrack::eval::SyntheticSpec) -> Result<Data> {
    match path {
        Some(p) => Ok(Data {
            stream: load_jsonl(p).with_context(|| format!("loading {}", p.display()))?,
            generated: None,
        }),
        None => {
            log::info!("no corpus given; generating a synthetic one");
            let c = gen_synthetic(spec)?;
            Ok(Data {
                stream: c.stream.clone(),
                generated: Some(c),
            })
        }
    }
}

fn test_data(cfg: &Config) -> Result<Data> {
    load_or_generate(cfg.corpus.as_deref(), &cfg.experiment.test_corpus)
}

fn train_data(cfg: &Config) -> Result<Data> {
    load_or_generate(cfg.train_corpus.as_deref(), &cfg.experiment.train_corpus)
}

fn linker_for(cfg: &Config, data: &Data) -> Result<Arc<dyn Linker>> {
    let gazetteer = || -> Result<Option<Arc<dyn Linker>>> {
        if let Some(p) = &cfg.gazetteer {
            let g = GazetteerLinker::load_tsv(p).with_context(|| format!("loading gazetteer {}", p.display()))?;
            return Ok(Some(Arc::new(g)));
        }
        Ok(data.generated.as_ref().map(|c| Arc::new(c.linker()) as Arc<dyn Linker>))
    };
    Ok(match cfg.linker {
        LinkerKind::Auto => gazetteer()?.unwrap_or_else(|| Arc::new(SyntheticLinker)),
        LinkerKind::Gazetteer => match gazetteer()? {
            Some(l) => l,
            None => bail!("linker = gazetteer but no --gazetteer given"),
        },
        LinkerKind::Synthetic => Arc::new(SyntheticLinker),
        LinkerKind::Tagme => Arc::new(TagmeLinker::new(TagmeConfig::from_env()?)),
    })
}

fn model_for(cfg: &Config, out: &Path) -> Result<Arc<RandomForestModel>> {
    match &cfg.model {
        Some(p) if p.exists() => Ok(Arc::new(
            load_model(p).with_context(|| format!("loading model {}", p.display()))?,
        )),
        Some(p) => bail!(
            "model file {} does not exist; run `storytrack train` first",
            p.display()
        ),
        None => {
            log::warn!("no --model given; training one now");
            Ok(Arc::new(train(cfg, out)?))
        }
    }
}

/// Seeds, seed negatives and remaining stream for the configured story.
fn experiment(cfg: &Config, model: Arc<RandomForestModel>, linker: Arc<dyn Linker>, data: &Data) -> Result<Experiment> {
    let mut exp_cfg = cfg.experiment.clone();
    exp_cfg.tracker.strategy = cfg.strategy()?;
    let Some(path) = &cfg.seed_docs else {
        return Ok(Experiment::with_model(
            exp_cfg,
            model,
            linker,
            &data.stream,
            0,
            Duration::ZERO,
        )?);
    };
    let seed_pos = load_jsonl(path)
        .with_context(|| format!("loading seeds {}", path.display()))?
        .into_documents();
    let seed_ids: HashSet<&str> = seed_pos.iter().map(|d| d.id.as_str()).collect();
    let rest = data.stream.without(&seed_ids);
    let seed_neg = sample_negatives(&rest, &seed_pos, exp_cfg.seed_neg_ratio, exp_cfg.rng_seed)?;
    let neg_ids: HashSet<&str> = seed_neg.iter().map(|d| d.id.as_str()).collect();
    let stream = rest.without(&neg_ids);
    let truth = stream
        .iter()
        .map(|d| (d.id.clone(), d.relevant == Some(true)))
        .collect();
    Ok(Experiment {
        config: exp_cfg,
        model,
        linker,
        seed_pos,
        seed_neg,
        stream,
        truth,
        training_pairs: 0,
        training_time: Duration::ZERO,
    })
}

fn gen(cfg: &Config, out: &Path, train: bool, seed: Option<u64>) -> Result<()> {
    let mut spec = if train {
        cfg.experiment.train_corpus
    } else {
        cfg.experiment.test_corpus
    };
    if let Some(s) = seed {
        spec.rng_seed = s;
    }
    let c = gen_synthetic(&spec)?;
    let corpus = out.join("corpus.jsonl");
    c.stream.save_jsonl(&corpus)?;
    let gaz = out.join("gazetteer.tsv");
    write_gazetteer_tsv(BufWriter::new(File::create(&gaz)?), &c.gazetteer)?;

    let mut per_label: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for d in &c.stream {
        let e = per_label
            .entry(d.story_label.clone().unwrap_or_else(|| "(noise)".into()))
            .or_default();
        if d.is_tweet() {
            e.1 += 1;
        } else {
            e.0 += 1;
        }
    }
    let mut r = Report::new(
        format!("synthetic corpus ({} docs, seed {})", c.stream.len(), spec.rng_seed),
        &["story", "articles", "tweets"],
    );
    for (label, (a, t)) in per_label {
        r.row(vec![label, a.to_string(), t.to_string()]);
    }
    r.emit(out, "gen_synthetic")?;
    println!("wrote {} and {}", corpus.display(), gaz.display());
    Ok(())
}

fn link(cfg: &Config, out: &Path) -> Result<()> {
    let data = test_data(cfg)?;
    let linker = linker_for(cfg, &data)?;
    let start = Instant::now();
    let docs = annotate_all(data.stream.documents(), linker.as_ref())?;
    let elapsed = start.elapsed();
    let path = out.join("annotations.jsonl");
    let mut w = BufWriter::new(File::create(&path)?);
    for d in &docs {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let mentions: usize = docs.iter().map(|d| d.annotations.len()).sum();
    let kb = docs
        .iter()
        .flat_map(|d| &d.annotations)
        .filter(|a| a.entity_id.starts_with(WIKI_PREFIX))
        .count();
    let distinct: HashSet<&str> = docs
        .iter()
        .flat_map(|d| d.annotations.iter().map(|a| a.entity_id.as_str()))
        .collect();
    let mut r = Report::new(
        format!("entity linking with `{}`", linker.name()),
        &[
            "docs",
            "annotations",
            "distinct_entities",
            "kb_linked_fraction",
            "ms_per_doc",
        ],
    );
    r.row(vec![
        docs.len().to_string(),
        mentions.to_string(),
        distinct.len().to_string(),
        f3(if mentions > 0 { kb as f64 / mentions as f64 } else { 0.0 }),
        ms(elapsed / docs.len().max(1) as u32),
    ]);
    r.emit(out, "link")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn train(cfg: &Config, out: &Path) -> Result<RandomForestModel> {
    let data = train_data(cfg)?;
    let linker = linker_for(cfg, &data)?;
    let exp = &cfg.experiment;
    let start = Instant::now();
    let pairs = generate_training_pairs(
        &data.stream,
        &exp.training_specs,
        exp.neg_ratio,
        exp.rng_seed,
        linker.as_ref(),
    )?;
    let pair_time = start.elapsed();
    let model = train_forest(&pairs, &exp.forest)?;
    let fit_time = start.elapsed() - pair_time;

    let model_path = cfg.model.clone().unwrap_or_else(|| out.join("model.json"));
    save_model(&model, &model_path)?;
    let pairs_path = out.join("pairs.csv");
    write_pairs_csv(BufWriter::new(File::create(&pairs_path)?), &pairs)?;

    let positives = pairs.iter().filter(|p| p.label).count();
    let mut r = Report::new(
        "relevance model",
        &["pairs", "positive", "negative", "trees", "pair_ms", "fit_ms"],
    );
    r.row(vec![
        pairs.len().to_string(),
        positives.to_string(),
        (pairs.len() - positives).to_string(),
        model.trees.len().to_string(),
        ms(pair_time),
        ms(fit_time),
    ]);
    r.emit(out, "train")?;
    println!("wrote {} and {}", model_path.display(), pairs_path.display());
    Ok(model)
}

fn track(cfg: &Config, out: &Path) -> Result<()> {
    let model = model_for(cfg, out)?;
    let data = test_data(cfg)?;
    let linker = linker_for(cfg, &data)?;
    let exp = experiment(cfg, model, linker, &data)?;
    let strategy = exp.config.tracker.strategy;
    let mut tracker = exp.tracker(strategy)?;
    let report = tracker.run_stream(&exp.stream)?;

    let decisions = out.join("decisions.jsonl");
    report.write_jsonl(BufWriter::new(File::create(&decisions)?))?;
    let story = out.join("story.json");
    serde_json::to_writer_pretty(BufWriter::new(File::create(&story)?), &tracker.export())?;

    let finals: Vec<(String, bool)> = tracker
        .classified()
        .iter()
        .map(|c| (c.doc.id().to_string(), c.relevant))
        .collect();
    let labeled = exp.stream.iter().all(|d| d.relevant.is_some());
    let (p, rc, f) = if labeled {
        let s = storytrack::eval::score(&finals, &exp.truth)?;
        (f3(s.precision), f3(s.recall), f3(s.f1))
    } else {
        ("-".into(), "-".into(), "-".into())
    };
    let mut r = Report::new(
        format!("tracking with {}", strategy.label()),
        &[
            "strategy",
            "docs",
            "relevant",
            "story_docs",
            "cycles",
            "precision",
            "recall",
            "f1",
            "mean_ms",
            "p95_ms",
            "wall_ms",
        ],
    );
    r.row(vec![
        strategy.label().into(),
        exp.stream.len().to_string(),
        tracker.relevant().count().to_string(),
        tracker.story().story_docs().len().to_string(),
        tracker.cycle().to_string(),
        p,
        rc,
        f,
        ms(report.mean_latency),
        ms(report.p95_latency),
        ms(report.wall_time),
    ]);
    r.emit(out, "track")?;
    println!("wrote {} and {}", decisions.display(), story.display());
    Ok(())
}

fn eval(cfg: &Config, out: &Path) -> Result<()> {
    let model = model_for(cfg, out)?;
    let data = test_data(cfg)?;
    let linker = linker_for(cfg, &data)?;
    let exp = experiment(cfg, model.clone(), linker.clone(), &data)?;
    let tracker_cfg = exp.config.tracker;

    let train = train_data(cfg)?;
    let e = &cfg.experiment;
    let l2r = L2rSystem::train_model(&train.stream, &e.training_specs, e.neg_ratio, e.rng_seed, &e.forest)?;

    let mut systems: Vec<Box<dyn StorySystem>> = vec![
        Box::new(SdSystem::new(
            model.clone(),
            linker.clone(),
            TrackerConfig {
                strategy: Strategy::None,
                ..tracker_cfg
            },
        )),
        Box::new(TextSystem::new(Featurizer::Bow, false, linker.clone())),
        Box::new(TextSystem::new(Featurizer::Bow, true, linker.clone())),
        Box::new(TextSystem::new(Featurizer::BowPlusEntities, false, linker.clone())),
        Box::new(KMeansSystem::new(None, e.rng_seed)),
        Box::new(L2rSystem::new(Arc::new(l2r), linker.clone())),
    ];
    if tracker_cfg.strategy != Strategy::None {
        systems.insert(1, Box::new(SdSystem::new(model, linker, tracker_cfg)));
    }

    let mut r = Report::new(
        format!(
            "systems on {} docs ({} positive seeds)",
            exp.stream.len(),
            exp.seed_pos.len()
        ),
        &["system", "precision", "recall", "f1", "tp", "fp", "fn", "wall_ms"],
    );
    for s in &mut systems {
        let start = Instant::now();
        let rep = exp.evaluate(s.as_mut())?;
        r.row(vec![
            s.name(),
            f3(rep.precision),
            f3(rep.recall),
            f3(rep.f1),
            rep.counts.tp.to_string(),
            rep.counts.fp.to_string(),
            rep.counts.fn_.to_string(),
            ms(start.elapsed()),
        ]);
    }
    r.emit(out, "eval")
}

fn bench(cfg: &Config, out: &Path) -> Result<()> {
    let model = model_for(cfg, out)?;
    let data = test_data(cfg)?;
    let linker = linker_for(cfg, &data)?;
    let exp = experiment(cfg, model, linker, &data)?;
    let rows = exp.bench(&cfg.strategies()?)?;
    let mut r = Report::new(
        format!("selection strategies on {} docs", exp.stream.len()),
        &[
            "strategy",
            "nodes_before",
            "edges_before",
            "nodes_after",
            "edges_after",
            "story_docs",
            "cycles",
            "precision",
            "recall",
            "f1",
            "wall_ms",
            "cycle_ms",
            "mean_ms",
        ],
    );
    for b in rows {
        r.row(vec![
            b.strategy,
            b.nodes_before.to_string(),
            b.edges_before.to_string(),
            b.nodes_after.to_string(),
            b.edges_after.to_string(),
            b.story_docs.to_string(),
            b.cycles.to_string(),
            f3(b.report.precision),
            f3(b.report.recall),
            f3(b.report.f1),
            ms(b.wall_time),
            ms(b.cycle_time),
            ms(b.report.mean_latency.unwrap_or_default()),
        ]);
    }
    r.emit(out, "bench_sss")
}

fn ablate(cfg: &Config, out: &Path) -> Result<()> {
    let data = train_data(cfg)?;
    let linker = linker_for(cfg, &data)?;
    let e = &cfg.experiment;
    let pairs = generate_training_pairs(
        &data.stream,
        &e.training_specs,
        e.neg_ratio,
        e.rng_seed,
        linker.as_ref(),
    )?;
    let rows = run_ablation(&pairs, &FEATURE_GROUPS, cfg.folds.unwrap_or(10), &e.forest, e.rng_seed)?;
    let mut r = Report::new(
        format!("feature ablation over {} pairs", pairs.len()),
        &["group", "precision", "recall", "f1", "runtime_ms"],
    );
    for a in rows {
        r.row(vec![
            a.group,
            f3(a.report.precision),
            f3(a.report.recall),
            f3(a.report.f1),
            ms(a.runtime),
        ]);
    }
    r.emit(out, "ablation")
}

fn complexity(cfg: &Config, out: &Path) -> Result<()> {
    let data = test_data(cfg)?;
    let linker = linker_for(cfg, &data)?;
    let docs = annotate_all(data.stream.documents(), linker.as_ref())?;
    let n_seed = cfg.experiment.seed_articles.max(1);
    let labels: Vec<String> = data
        .stream
        .iter()
        .filter_map(|d| d.story_label.clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.is_empty() {
        bail!("corpus has no story labels");
    }
    let mut stories = Vec::new();
    for label in &labels {
        let of_story = |d: &Document| d.story_label.as_deref() == Some(label.as_str());
        let seed_ids: HashSet<&str> = data
            .stream
            .iter()
            .filter(|d| of_story(d) && !d.is_tweet())
            .take(n_seed)
            .map(|d| d.id.as_str())
            .collect();
        if seed_ids.is_empty() {
            bail!("story `{label}` has no article to seed from");
        }
        let (seed, stream): (Vec<_>, Vec<_>) = docs.iter().cloned().partition(|d| seed_ids.contains(d.id()));
        stories.push((seed, stream));
    }
    let reports = complexity_batch(&stories)?;
    let mut r = Report::new(
        "story complexity",
        &[
            "story",
            "entity_similarity",
            "stream_entropy_bits",
            "normalized_product",
        ],
    );
    for (label, c) in labels.iter().zip(reports) {
        r.row(vec![
            label.clone(),
            f3(c.entity_similarity),
            f3(c.stream_entropy),
            f3(c.normalized_product),
        ]);
    }
    r.emit(out, "complexity")
}
