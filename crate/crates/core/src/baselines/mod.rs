//! Comparison systems and the shared interface every tracked system exposes.

mod ir;
mod kmeans;
mod logreg;

use std::sync::Arc;

pub use ir::{bm25, bm25_idf, l2r_baseline_features, lm_dirichlet, BM25_B, BM25_K1, DIRICHLET_MU, IR_FEATURE_NAMES};
pub use kmeans::{default_k, seeded_kmeans, SeededKMeansModel, MAX_ITERATIONS};
pub use logreg::{
    loss_and_gradient, raw_features, train_logreg, BowModel, Featurizer, LogRegConfig, SparseRow, ENTITY_KEY_PREFIX,
};

use crate::corpus::{CorpusStream, Document};
use crate::entitylink::{annotate_all, annotate_document, AnnotatedDocument, Linker, SyntheticLinker};
use crate::error::{Error, Result};
use crate::features::StoryRepresentation;
use crate::relevance::{generate_feature_rows, train_matrix, ForestConfig, RandomForestModel, StoryRepSpec};
use crate::storygraph::GraphConfig;
use crate::text::CollectionStats;
use crate::tracker::{Tracker, TrackerConfig};

pub const SSL_BATCH: usize = 50;

/// Common contract for the tracker and every baseline: learn from seeds,
/// classify a stream one document at a time, then report final decisions.
pub trait StorySystem {
    fn name(&self) -> String;
    fn train(&mut self, seed_pos: &[Document], seed_neg: &[Document]) -> Result<()>;
    /// Online decision for one stream document.
    fn observe(&mut self, doc: &Document) -> Result<bool>;
    /// Final `(doc id, relevant)` for every observed document, stream order.
    /// Systems that revise earlier decisions report the revised labels.
    fn finish(&mut self) -> Result<Vec<(String, bool)>>;
}

fn not_trained(name: &str) -> Error {
    Error::InvalidArgument(format!("{name} used before train"))
}

/// The entity-graph tracker behind the common interface.
pub struct SdSystem {
    model: Arc<RandomForestModel>,
    linker: Arc<dyn Linker>,
    config: TrackerConfig,
    tracker: Option<Tracker>,
}

impl SdSystem {
    pub fn new(model: Arc<RandomForestModel>, linker: Arc<dyn Linker>, config: TrackerConfig) -> Self {
        SdSystem {
            model,
            linker,
            config,
            tracker: None,
        }
    }

    pub fn tracker(&self) -> Option<&Tracker> {
        self.tracker.as_ref()
    }
}

impl StorySystem for SdSystem {
    fn name(&self) -> String {
        match self.config.strategy {
            crate::tracker::Strategy::None => "SD".into(),
            s => format!("SD+{}", s.label().to_uppercase()),
        }
    }

    fn train(&mut self, seed_pos: &[Document], seed_neg: &[Document]) -> Result<()> {
        self.tracker = Some(Tracker::new(
            seed_pos,
            seed_neg,
            self.model.clone(),
            self.linker.clone(),
            self.config,
        )?);
        Ok(())
    }

    fn observe(&mut self, doc: &Document) -> Result<bool> {
        let t = self.tracker.as_mut().ok_or_else(|| not_trained("SD"))?;
        Ok(t.process_document(doc)?.relevant)
    }

    fn finish(&mut self) -> Result<Vec<(String, bool)>> {
        let t = self.tracker.as_ref().ok_or_else(|| not_trained("SD"))?;
        Ok(t.classified()
            .iter()
            .map(|c| (c.doc.id().to_string(), c.relevant))
            .collect())
    }
}

/// Logistic regression over bag-of-words (optionally plus entities), with
/// optional accumulation self-training in batches of 50.
pub struct TextSystem {
    featurizer: Featurizer,
    ssl: bool,
    config: LogRegConfig,
    linker: Arc<dyn Linker>,
    model: Option<BowModel>,
    train_docs: Vec<AnnotatedDocument>,
    train_labels: Vec<bool>,
    batch: Vec<(AnnotatedDocument, bool)>,
    decisions: Vec<(String, bool)>,
}

impl TextSystem {
    pub fn new(featurizer: Featurizer, ssl: bool, linker: Arc<dyn Linker>) -> Self {
        TextSystem {
            featurizer,
            ssl,
            config: LogRegConfig::default(),
            linker,
            model: None,
            train_docs: Vec::new(),
            train_labels: Vec::new(),
            batch: Vec::new(),
            decisions: Vec::new(),
        }
    }

    pub fn with_config(mut self, config: LogRegConfig) -> Self {
        self.config = config;
        self
    }

    pub fn model(&self) -> Option<&BowModel> {
        self.model.as_ref()
    }

    fn annotate(&self, docs: &[Document]) -> Result<Vec<AnnotatedDocument>> {
        match self.featurizer {
            Featurizer::Bow => Ok(docs.iter().map(|d| AnnotatedDocument::new(d.clone(), vec![])).collect()),
            Featurizer::BowPlusEntities => annotate_all(docs, self.linker.as_ref()),
        }
    }

    /// Adds the pseudo-labeled batch to the training set and refits from scratch.
    pub fn ssl_retrain(&mut self) -> Result<()> {
        if self.batch.is_empty() {
            return Ok(());
        }
        for (d, l) in self.batch.drain(..) {
            self.train_docs.push(d);
            self.train_labels.push(l);
        }
        self.model = Some(train_logreg(
            &self.train_docs,
            &self.train_labels,
            self.featurizer,
            &self.config,
        )?);
        Ok(())
    }
}

impl StorySystem for TextSystem {
    fn name(&self) -> String {
        match (self.featurizer, self.ssl) {
            (Featurizer::Bow, false) => "Text".into(),
            (Featurizer::Bow, true) => "Text+SSL".into(),
            (Featurizer::BowPlusEntities, false) => "Text+Entity".into(),
            (Featurizer::BowPlusEntities, true) => "Text+Entity+SSL".into(),
        }
    }

    fn train(&mut self, seed_pos: &[Document], seed_neg: &[Document]) -> Result<()> {
        let mut docs = self.annotate(seed_pos)?;
        docs.extend(self.annotate(seed_neg)?);
        let labels: Vec<bool> = (0..docs.len()).map(|i| i < seed_pos.len()).collect();
        self.model = Some(train_logreg(&docs, &labels, self.featurizer, &self.config)?);
        self.train_docs = docs;
        self.train_labels = labels;
        self.batch.clear();
        self.decisions.clear();
        Ok(())
    }

    fn observe(&mut self, doc: &Document) -> Result<bool> {
        let annotated = match self.featurizer {
            Featurizer::Bow => AnnotatedDocument::new(doc.clone(), vec![]),
            Featurizer::BowPlusEntities => annotate_document(doc, self.linker.as_ref())?,
        };
        let model = self.model.as_ref().ok_or_else(|| not_trained("Text"))?;
        let relevant = model.predict_probability(&annotated) >= 0.5;
        self.decisions.push((doc.id.clone(), relevant));
        if self.ssl {
            self.batch.push((annotated, relevant));
            if self.batch.len() >= SSL_BATCH {
                self.ssl_retrain()?;
            }
        }
        Ok(relevant)
    }

    fn finish(&mut self) -> Result<Vec<(String, bool)>> {
        Ok(self.decisions.clone())
    }
}

/// Seeded k-means over the whole stream; decisions come from the final clustering.
pub struct KMeansSystem {
    k: Option<usize>,
    rng_seed: u64,
    seed_pos: Vec<Document>,
    seed_neg: Vec<Document>,
    stream: Vec<Document>,
}

impl KMeansSystem {
    /// `k = None` uses [`default_k`] of the stream length.
    pub fn new(k: Option<usize>, rng_seed: u64) -> Self {
        KMeansSystem {
            k,
            rng_seed,
            seed_pos: Vec::new(),
            seed_neg: Vec::new(),
            stream: Vec::new(),
        }
    }
}

impl StorySystem for KMeansSystem {
    fn name(&self) -> String {
        "S-KMeans".into()
    }

    fn train(&mut self, seed_pos: &[Document], seed_neg: &[Document]) -> Result<()> {
        if seed_pos.is_empty() {
            return Err(Error::EmptyInput("positive seeds"));
        }
        self.seed_pos = seed_pos.to_vec();
        self.seed_neg = seed_neg.to_vec();
        self.stream.clear();
        Ok(())
    }

    /// Clustering is offline; the online answer is provisional (false) and
    /// only [`finish`](StorySystem::finish) is meaningful.
    fn observe(&mut self, doc: &Document) -> Result<bool> {
        self.stream.push(doc.clone());
        Ok(false)
    }

    fn finish(&mut self) -> Result<Vec<(String, bool)>> {
        if self.stream.is_empty() {
            return Ok(Vec::new());
        }
        let k = self.k.unwrap_or_else(|| default_k(self.stream.len()));
        let m = seeded_kmeans(&self.stream, &self.seed_pos, &self.seed_neg, k, self.rng_seed)?;
        Ok(self
            .stream
            .iter()
            .map(|d| d.id.clone())
            .zip(m.stream_decisions())
            .collect())
    }
}

/// Random forest over (tf-idf cosine, BM25, LM) story–document features.
pub struct L2rSystem {
    model: Arc<RandomForestModel>,
    linker: Arc<dyn Linker>,
    graph: GraphConfig,
    story: Option<StoryRepresentation>,
    decisions: Vec<(String, bool)>,
}

impl L2rSystem {
    pub fn new(model: Arc<RandomForestModel>, linker: Arc<dyn Linker>) -> Self {
        L2rSystem {
            model,
            linker,
            graph: GraphConfig::default(),
            story: None,
            decisions: Vec::new(),
        }
    }

    /// Trains the 3-feature forest on pairs built like the tracker's training pairs.
    pub fn train_model(
        corpus: &CorpusStream,
        specs: &[StoryRepSpec],
        neg_ratio: usize,
        rng_seed: u64,
        forest: &ForestConfig,
    ) -> Result<RandomForestModel> {
        let (x, y) = generate_feature_rows(
            corpus,
            specs,
            neg_ratio,
            rng_seed,
            &SyntheticLinker,
            GraphConfig::default(),
            l2r_baseline_features,
        )?;
        let config = ForestConfig {
            features_per_split: forest.features_per_split.min(IR_FEATURE_NAMES.len()),
            ..*forest
        };
        train_matrix(&x, &y, &config)
    }
}

impl StorySystem for L2rSystem {
    fn name(&self) -> String {
        "L2R".into()
    }

    fn train(&mut self, seed_pos: &[Document], seed_neg: &[Document]) -> Result<()> {
        let seeds = annotate_all(seed_pos, self.linker.as_ref())?;
        self.story = Some(StoryRepresentation::from_seeds(
            seeds,
            seed_neg,
            CollectionStats::new(),
            self.graph,
        )?);
        self.decisions.clear();
        Ok(())
    }

    fn observe(&mut self, doc: &Document) -> Result<bool> {
        let story = self.story.as_mut().ok_or_else(|| not_trained("L2R"))?;
        story.observe(doc);
        let annotated = AnnotatedDocument::new(doc.clone(), vec![]);
        let relevant = self
            .model
            .predict_probability(&l2r_baseline_features(story, &annotated))
            >= 0.5;
        self.decisions.push((doc.id.clone(), relevant));
        Ok(relevant)
    }

    fn finish(&mut self) -> Result<Vec<(String, bool)>> {
        Ok(self.decisions.clone())
    }
}

/// Trains `system` on the seeds, feeds it the stream and returns its final decisions.
pub fn run_system(
    system: &mut dyn StorySystem,
    seed_pos: &[Document],
    seed_neg: &[Document],
    stream: &CorpusStream,
) -> Result<Vec<(String, bool)>> {
    system.train(seed_pos, seed_neg)?;
    for doc in stream {
        system.observe(doc)?;
    }
    system.finish()
}
