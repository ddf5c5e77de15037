//! Python bindings: corpora, the relevance model, the tracker and the
//! experiment helpers.

use std::collections::HashMap;
use std::sync::Arc;
use std::time::Duration;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use storytrack::corpus::{load_jsonl, CorpusStream, Document};
use storytrack::entitylink::{GazetteerLinker, Linker, SyntheticLinker};
use storytrack::eval::{gen_synthetic, Experiment, ExperimentConfig, SyntheticSpec};
use storytrack::features::FEATURE_NAMES;
use storytrack::relevance::{
    generate_training_pairs, load_model, save_model, train_forest, ForestConfig, RandomForestModel, StoryRepSpec,
    DEFAULT_TRAINING_SPECS,
};
use storytrack::tracker::{Strategy, TrackerConfig};

fn err(e: storytrack::Error) -> PyErr {
    match e {
        storytrack::Error::Io(e) => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn strategy(s: &str) -> PyResult<Strategy> {
    s.parse().map_err(err)
}

/// Chronological document stream with an optional gazetteer for linking.
#[pyclass(module = "storytrack_py", frozen)]
struct Corpus {
    stream: CorpusStream,
    linker: Arc<dyn Linker>,
}

#[pymethods]
impl Corpus {
    /// Loads a JSONL stream; `gazetteer` is a surface/id/confidence TSV.
    #[staticmethod]
    #[pyo3(signature = (path, gazetteer=None))]
    fn from_jsonl(path: &str, gazetteer: Option<&str>) -> PyResult<Self> {
        let linker: Arc<dyn Linker> = match gazetteer {
            Some(g) => Arc::new(GazetteerLinker::load_tsv(g).map_err(err)?),
            None => Arc::new(SyntheticLinker),
        };
        Ok(Corpus {
            stream: load_jsonl(path).map_err(err)?,
            linker,
        })
    }

    /// Synthetic labeled corpus; `relevant` marks story 0.
    #[staticmethod]
    #[pyo3(signature = (total=5000, stories=3, ratio=10, seed=1, overlap=0.3, topic_vocabulary=true))]
    fn synthetic(
        total: usize,
        stories: usize,
        ratio: usize,
        seed: u64,
        overlap: f64,
        topic_vocabulary: bool,
    ) -> PyResult<Self> {
        let spec = SyntheticSpec {
            overlap_fraction: overlap,
            topic_vocabulary,
            ..SyntheticSpec::with_ratio(total, stories, ratio, seed)
        };
        let c = gen_synthetic(&spec).map_err(err)?;
        Ok(Corpus {
            linker: Arc::new(c.linker()),
            stream: c.stream,
        })
    }

    fn __len__(&self) -> usize {
        self.stream.len()
    }

    fn ids(&self) -> Vec<String> {
        self.stream.iter().map(|d| d.id.clone()).collect()
    }

    fn texts(&self) -> Vec<String> {
        self.stream.iter().map(|d| d.text.clone()).collect()
    }

    /// Truth labels, `None` for unlabeled documents.
    fn labels(&self) -> Vec<Option<bool>> {
        self.stream.iter().map(|d| d.relevant).collect()
    }

    fn to_jsonl(&self, path: &str) -> PyResult<()> {
        self.stream.save_jsonl(path).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Corpus({} docs, linker={})", self.stream.len(), self.linker.name())
    }
}

/// Random-forest relevance model over the 14 story/document features.
#[pyclass(module = "storytrack_py", frozen)]
struct Model {
    inner: Arc<RandomForestModel>,
}

#[pymethods]
impl Model {
    /// Trains on `corpus`, whose `relevant` labels define the story.
    /// `specs` is a list of (articles, tweets) story sizes.
    #[staticmethod]
    #[pyo3(signature = (corpus, specs=None, neg_ratio=10, n_trees=100, seed=7))]
    fn train(
        corpus: &Corpus,
        specs: Option<Vec<(usize, usize)>>,
        neg_ratio: usize,
        n_trees: usize,
        seed: u64,
    ) -> PyResult<Self> {
        let specs: Vec<StoryRepSpec> = match specs {
            Some(s) => s.into_iter().map(|(a, t)| StoryRepSpec::new(a, t)).collect(),
            None => DEFAULT_TRAINING_SPECS.to_vec(),
        };
        let pairs =
            generate_training_pairs(&corpus.stream, &specs, neg_ratio, seed, corpus.linker.as_ref()).map_err(err)?;
        let config = ForestConfig {
            n_trees,
            rng_seed: seed,
            ..Default::default()
        };
        Ok(Model {
            inner: Arc::new(train_forest(&pairs, &config).map_err(err)?),
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Model {
            inner: Arc::new(load_model(path).map_err(err)?),
        })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_model(&self.inner, path).map_err(err)
    }

    /// Mean positive fraction over the trees for one feature row.
    fn predict(&self, features: Vec<f64>) -> PyResult<f64> {
        if features.len() != self.inner.feature_count {
            return Err(PyValueError::new_err(format!(
                "expected {} features, got {}",
                self.inner.feature_count,
                features.len()
            )));
        }
        Ok(self.inner.predict_probability(&features))
    }

    #[getter]
    fn n_trees(&self) -> usize {
        self.inner.trees.len()
    }
}

/// Tracks story 0 of a labeled corpus: seeds are the first `seed_articles`
/// relevant articles, seed negatives are sampled from the rest.
#[pyclass(module = "storytrack_py")]
struct Tracker {
    experiment: Experiment,
    tracker: storytrack::tracker::Tracker,
}

fn experiment(model: &Model, corpus: &Corpus, seed_articles: usize, strategy: Strategy) -> PyResult<Experiment> {
    let config = ExperimentConfig {
        seed_articles,
        tracker: TrackerConfig {
            strategy,
            ..Default::default()
        },
        ..Default::default()
    };
    Experiment::with_model(
        config,
        model.inner.clone(),
        corpus.linker.clone(),
        &corpus.stream,
        0,
        Duration::ZERO,
    )
    .map_err(err)
}

#[pymethods]
impl Tracker {
    #[new]
    #[pyo3(signature = (model, corpus, strategy="ar", seed_articles=3))]
    fn new(model: &Model, corpus: &Corpus, strategy: &str, seed_articles: usize) -> PyResult<Self> {
        let s = self::strategy(strategy)?;
        let experiment = experiment(model, corpus, seed_articles, s)?;
        let tracker = experiment.tracker(s).map_err(err)?;
        Ok(Tracker { experiment, tracker })
    }

    /// Ids of the stream left after removing seeds and seed negatives.
    fn stream_ids(&self) -> Vec<String> {
        self.experiment.stream.iter().map(|d| d.id.clone()).collect()
    }

    /// Classifies one document given as JSON (same schema as the JSONL
    /// corpus). Returns (probability, relevant).
    fn process(&mut self, doc_json: &str) -> PyResult<(f64, bool)> {
        let doc: Document = serde_json::from_str(doc_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let d = self.tracker.process_document(&doc).map_err(err)?;
        Ok((d.probability, d.relevant))
    }

    /// Runs the remaining stream and scores the final decisions.
    fn run(&mut self) -> PyResult<HashMap<String, f64>> {
        let report = self.tracker.run_stream(&self.experiment.stream).map_err(err)?;
        let finals: Vec<(String, bool)> = self
            .tracker
            .classified()
            .iter()
            .map(|c| (c.doc.id().to_string(), c.relevant))
            .collect();
        let s = storytrack::eval::score(&finals, &self.experiment.truth).map_err(err)?;
        Ok(HashMap::from([
            ("precision".into(), s.precision),
            ("recall".into(), s.recall),
            ("f1".into(), s.f1),
            ("mean_latency_ms".into(), report.mean_latency.as_secs_f64() * 1e3),
            ("wall_time_s".into(), report.wall_time.as_secs_f64()),
            ("cycles".into(), self.tracker.cycle() as f64),
        ]))
    }

    fn story_doc_ids(&self) -> Vec<String> {
        self.tracker.story().story_doc_ids()
    }

    /// Entity weights of the story graph.
    fn entity_weights(&self) -> HashMap<String, f64> {
        self.tracker.story().graph().weights().clone()
    }
}

/// Runs each strategy over the same seeds and stream; one dict per strategy.
#[pyfunction]
#[pyo3(signature = (model, corpus, strategies, seed_articles=3))]
fn bench_sss(
    model: &Model,
    corpus: &Corpus,
    strategies: Vec<String>,
    seed_articles: usize,
) -> PyResult<Vec<HashMap<String, f64>>> {
    let parsed: Vec<Strategy> = strategies.iter().map(|s| strategy(s)).collect::<PyResult<_>>()?;
    let exp = experiment(model, corpus, seed_articles, Strategy::None)?;
    let rows = exp.bench(&parsed).map_err(err)?;
    Ok(rows
        .into_iter()
        .map(|r| {
            HashMap::from([
                ("nodes_after".into(), r.nodes_after as f64),
                ("edges_after".into(), r.edges_after as f64),
                ("f1".into(), r.report.f1),
                ("precision".into(), r.report.precision),
                ("recall".into(), r.report.recall),
                ("wall_time_s".into(), r.wall_time.as_secs_f64()),
            ])
        })
        .collect())
}

/// Co-occurrence window (chars) at char offset `position` of a `length`-char document.
#[pyfunction]
fn window_length(position: usize, length: usize) -> PyResult<f64> {
    storytrack::storygraph::window_length(position, length).map_err(err)
}

#[pyfunction]
fn feature_names() -> Vec<&'static str> {
    FEATURE_NAMES.to_vec()
}

#[pymodule]
fn storytrack_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Corpus>()?;
    m.add_class::<Model>()?;
    m.add_class::<Tracker>()?;
    m.add_function(wrap_pyfunction!(bench_sss, m)?)?;
    m.add_function(wrap_pyfunction!(window_length, m)?)?;
    m.add_function(wrap_pyfunction!(feature_names, m)?)?;
    Ok(())
}
