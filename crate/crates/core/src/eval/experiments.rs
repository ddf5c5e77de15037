//! End-to-end experiment drivers on synthetic or user corpora.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{gen_synthetic, score, score_labels, Confusion, EvalReport, SyntheticSpec};
use crate::baselines::{run_system, StorySystem};
use crate::corpus::{chronological_split, sample_negatives, CorpusStream, Document};
use crate::entitylink::Linker;
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::relevance::{
    generate_training_pairs, train_forest, train_matrix, ForestConfig, RandomForestModel, StoryRepSpec, TrainingPair,
    DEFAULT_TRAINING_SPECS,
};
use crate::tracker::{Strategy, Tracker, TrackerConfig};

pub const FEATURE_GROUPS: [(&str, &[usize]); 5] = [
    ("Story/Doc Alone (1-4)", &[1, 2, 3, 4]),
    ("Story/Doc+Tf-idf (1-4,9-10)", &[1, 2, 3, 4, 9, 10]),
    ("Text-Based (1-10)", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]),
    ("Graph-Based (1-4,9-14)", &[1, 2, 3, 4, 9, 10, 11, 12, 13, 14]),
    ("All Features (1-14)", &[1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14]),
];

/// `folds`-fold cross-validation with a seeded shuffle; confusion counts are
/// pooled over folds.
pub fn cross_validate(
    x: &[Vec<f64>],
    y: &[bool],
    folds: usize,
    forest: &ForestConfig,
    rng_seed: u64,
) -> Result<EvalReport> {
    if folds < 2 || folds > x.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot run {folds}-fold CV on {} rows",
            x.len()
        )));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(rng_seed));
    let mut total = Confusion::default();
    for f in 0..folds {
        let test: Vec<usize> = order.iter().copied().skip(f).step_by(folds).collect();
        let test_set: HashSet<usize> = test.iter().copied().collect();
        let (tx, ty): (Vec<Vec<f64>>, Vec<bool>) = order
            .iter()
            .filter(|i| !test_set.contains(i))
            .map(|&i| (x[i].clone(), y[i]))
            .unzip();
        let model = train_matrix(&tx, &ty, forest)?;
        let pred: Vec<bool> = test.iter().map(|&i| model.predict_probability(&x[i]) >= 0.5).collect();
        let actual: Vec<bool> = test.iter().map(|&i| y[i]).collect();
        total.merge(&score_labels(&pred, &actual).counts);
    }
    Ok(total.report())
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationRow {
    pub group: String,
    pub features: Vec<usize>,
    pub report: EvalReport,
    pub runtime: Duration,
}

/// Cross-validates the forest once per feature group, zeroing the columns
/// outside the group.
pub fn run_ablation(
    pairs: &[TrainingPair],
    groups: &[(&str, &[usize])],
    folds: usize,
    forest: &ForestConfig,
    rng_seed: u64,
) -> Result<Vec<AblationRow>> {
    let y: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    groups
        .iter()
        .map(|&(name, keep)| {
            let start = Instant::now();
            let x: Vec<Vec<f64>> = pairs.iter().map(|p| p.features.masked(keep).0.to_vec()).collect();
            let report = cross_validate(&x, &y, folds, forest, rng_seed)?;
            log::info!("ablation {name}: F1 {:.3}", report.f1);
            Ok(AblationRow {
                group: name.to_string(),
                features: keep.to_vec(),
                report,
                runtime: start.elapsed(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub strategy: String,
    pub nodes_before: usize,
    pub edges_before: usize,
    pub nodes_after: usize,
    pub edges_after: usize,
    pub story_docs: usize,
    pub cycles: u64,
    pub report: EvalReport,
    pub wall_time: Duration,
    pub cycle_time: Duration,
}

/// Runs every strategy over the same seeds, stream and model.
pub fn bench_sss(
    seed_pos: &[Document],
    seed_neg: &[Document],
    stream: &CorpusStream,
    model: Arc<RandomForestModel>,
    linker: Arc<dyn Linker>,
    base: TrackerConfig,
    strategies: &[Strategy],
) -> Result<Vec<BenchRow>> {
    let truth: HashMap<String, bool> = stream
        .iter()
        .map(|d| (d.id.clone(), d.relevant == Some(true)))
        .collect();
    strategies
        .iter()
        .map(|&strategy| {
            let config = TrackerConfig { strategy, ..base };
            let mut tracker = Tracker::new(seed_pos, seed_neg, model.clone(), linker.clone(), config)?;
            let (nodes_before, edges_before) = (
                tracker.story().graph().node_count(),
                tracker.story().graph().edge_count(),
            );
            let run = tracker.run_stream(stream)?;
            let finals: Vec<(String, bool)> = tracker
                .classified()
                .iter()
                .map(|c| (c.doc.id().to_string(), c.relevant))
                .collect();
            let mut report = score(&finals, &truth)?;
            report.mean_latency = Some(run.mean_latency);
            report.p95_latency = Some(run.p95_latency);
            log::info!(
                "{}: F1 {:.3} in {:.2?} ({} cycles)",
                strategy.label(),
                report.f1,
                run.wall_time,
                tracker.cycle()
            );
            Ok(BenchRow {
                strategy: strategy.label().to_string(),
                nodes_before,
                edges_before,
                nodes_after: tracker.story().graph().node_count(),
                edges_after: tracker.story().graph().edge_count(),
                story_docs: tracker.story().story_docs().len(),
                cycles: tracker.cycle(),
                report,
                wall_time: run.wall_time,
                cycle_time: run.cycle_time,
            })
        })
        .collect()
}

/// Everything needed to reproduce a synthetic tracking experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Corpus the relevance model is trained on.
    pub train_corpus: SyntheticSpec,
    /// Corpus whose story 0 is tracked.
    pub test_corpus: SyntheticSpec,
    pub training_specs: Vec<StoryRepSpec>,
    pub neg_ratio: usize,
    /// Positive seed articles taken from the start of the test stream.
    pub seed_articles: usize,
    pub seed_tweets: usize,
    /// Seed negatives per positive seed.
    pub seed_neg_ratio: usize,
    pub forest: ForestConfig,
    pub tracker: TrackerConfig,
    pub rng_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train_corpus: SyntheticSpec {
                docs_per_story: 600,
                noise_docs: 4500,
                rng_seed: 101,
                ..Default::default()
            },
            test_corpus: SyntheticSpec::with_ratio(5000, 3, 10, 202),
            training_specs: DEFAULT_TRAINING_SPECS.to_vec(),
            neg_ratio: 10,
            seed_articles: 3,
            seed_tweets: 0,
            seed_neg_ratio: 10,
            forest: ForestConfig::default(),
            tracker: TrackerConfig::default(),
            rng_seed: 7,
        }
    }
}

pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: Arc<RandomForestModel>,
    pub linker: Arc<dyn Linker>,
    pub seed_pos: Vec<Document>,
    pub seed_neg: Vec<Document>,
    pub stream: CorpusStream,
    pub truth: HashMap<String, bool>,
    pub training_pairs: usize,
    pub training_time: Duration,
}

impl Experiment {
    /// Generates both corpora, trains the forest on the training corpus and
    /// splits seeds off the test stream.
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        let start = Instant::now();
        let train = gen_synthetic(&config.train_corpus)?;
        let pairs = generate_training_pairs(
            &train.stream,
            &config.training_specs,
            config.neg_ratio,
            config.rng_seed,
            &train.linker(),
        )?;
        let model = train_forest(&pairs, &config.forest)?;
        let training_time = start.elapsed();
        log::info!("trained on {} pairs in {training_time:.2?}", pairs.len());
        let test = gen_synthetic(&config.test_corpus)?;
        let linker: Arc<dyn Linker> = Arc::new(test.linker());
        Self::with_model(
            config,
            Arc::new(model),
            linker,
            &test.stream,
            pairs.len(),
            training_time,
        )
    }

    /// Splits seeds and seed negatives off a labeled stream and pairs them
    /// with an already trained model.
    pub fn with_model(
        config: ExperimentConfig,
        model: Arc<RandomForestModel>,
        linker: Arc<dyn Linker>,
        labeled: &CorpusStream,
        training_pairs: usize,
        training_time: Duration,
    ) -> Result<Self> {
        let (seed_pos, rest) = chronological_split(labeled, config.seed_articles, config.seed_tweets)?;
        let seed_neg = sample_negatives(&rest, &seed_pos, config.seed_neg_ratio, config.rng_seed)?;
        let exclude: HashSet<&str> = seed_neg.iter().map(|d| d.id.as_str()).collect();
        let stream = rest.without(&exclude);
        let truth = stream
            .iter()
            .map(|d| (d.id.clone(), d.relevant == Some(true)))
            .collect();
        Ok(Experiment {
            config,
            model,
            linker,
            seed_pos,
            seed_neg,
            stream,
            truth,
            training_pairs,
            training_time,
        })
    }

    pub fn tracker(&self, strategy: Strategy) -> Result<Tracker> {
        let config = TrackerConfig {
            strategy,
            ..self.config.tracker
        };
        Tracker::new(
            &self.seed_pos,
            &self.seed_neg,
            self.model.clone(),
            self.linker.clone(),
            config,
        )
    }

    pub fn evaluate(&self, system: &mut dyn StorySystem) -> Result<EvalReport> {
        let decisions = run_system(system, &self.seed_pos, &self.seed_neg, &self.stream)?;
        score(&decisions, &self.truth)
    }

    pub fn bench(&self, strategies: &[Strategy]) -> Result<Vec<BenchRow>> {
        bench_sss(
            &self.seed_pos,
            &self.seed_neg,
            &self.stream,
            self.model.clone(),
            self.linker.clone(),
            self.config.tracker,
            strategies,
        )
    }
}

/// Convenience for feature rows of pairs.
pub fn pair_matrix(pairs: &[TrainingPair]) -> (Vec<Vec<f64>>, Vec<bool>) {
    pairs
        .iter()
        .map(|p| (FeatureVector::as_slice(&p.features).to_vec(), p.label))
        .unzip()
}
