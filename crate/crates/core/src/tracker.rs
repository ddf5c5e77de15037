//! The story tracking loop and its semi-supervised selection strategies.

use std::collections::HashSet;
use std::io::Write;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStream, Document};
use crate::entitylink::{annotate_all, annotate_document, AnnotatedDocument, Linker};
use crate::error::{Error, Result};
use crate::features::StoryRepresentation;
use crate::relevance::RandomForestModel;
use crate::storygraph::{GraphConfig, GraphSnapshot};
use crate::text::CollectionStats;

pub const DEFAULT_RECENT_K: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Accumulate,
    Revisit,
    RevisitRecent(usize),
    AccumulateRevisit,
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::Accumulate => "acc",
            Strategy::Revisit => "rev",
            Strategy::RevisitRecent(_) => "rr",
            Strategy::AccumulateRevisit => "ar",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    /// Accepts `none`, `acc`, `rev`, `rr`, `rr:<k>`, `ar` and long forms.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let (head, k) = match lower.split_once(':') {
            Some((h, k)) => (
                h.to_string(),
                Some(
                    k.parse::<usize>()
                        .map_err(|_| Error::InvalidArgument(format!("bad k in `{s}`")))?,
                ),
            ),
            None => (lower.clone(), None),
        };
        match (head.as_str(), k) {
            ("none" | "sd", None) => Ok(Strategy::None),
            ("acc" | "accumulate", None) => Ok(Strategy::Accumulate),
            ("rev" | "revisit", None) => Ok(Strategy::Revisit),
            ("rr" | "revisit_recent" | "revisit-recent", k) => {
                Ok(Strategy::RevisitRecent(k.unwrap_or(DEFAULT_RECENT_K)))
            }
            ("ar" | "accumulate_revisit" | "accumulate-revisit", None) => Ok(Strategy::AccumulateRevisit),
            _ => Err(Error::InvalidArgument(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AddPolicy {
    /// Promote only the single most confident document.
    #[default]
    TopOne,
    /// Promote every document above the acceptance threshold.
    AllAboveThreshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub strategy: Strategy,
    pub add_policy: AddPolicy,
    /// New relevant documents between selection cycles.
    pub trigger: usize,
    pub decision_threshold: f64,
    pub promote_threshold: f64,
    /// Accumulate-revisit runs a revisit when the cycle counter is a multiple of this.
    pub revisit_every: u64,
    pub graph: GraphConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            strategy: Strategy::None,
            add_policy: AddPolicy::TopOne,
            trigger: 50,
            decision_threshold: 0.5,
            promote_threshold: 0.8,
            revisit_every: 10,
            graph: GraphConfig::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClassifiedDoc {
    pub doc: AnnotatedDocument,
    pub probability: f64,
    pub relevant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackDecision {
    pub doc_id: String,
    #[serde(rename = "p")]
    pub probability: f64,
    pub relevant: bool,
    pub cycle: u64,
    #[serde(with = "micros", rename = "latency_us")]
    pub latency: Duration,
}

mod micros {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_micros() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_micros(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrackReport {
    pub decisions: Vec<TrackDecision>,
    pub mean_latency: Duration,
    pub p95_latency: Duration,
    /// Time spent inside selection cycles.
    pub cycle_time: Duration,
    pub wall_time: Duration,
}

impl TrackReport {
    pub fn relevant_ids(&self) -> Vec<&str> {
        self.decisions
            .iter()
            .filter(|d| d.relevant)
            .map(|d| d.doc_id.as_str())
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for d in &self.decisions {
            serde_json::to_writer(&mut w, d)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Exportable end state: story doc ids and the entity graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StoryExport {
    pub story_doc_ids: Vec<String>,
    pub graph: GraphSnapshot,
    pub cycles: u64,
}

pub fn latency_stats(latencies: &[Duration]) -> (Duration, Duration) {
    if latencies.is_empty() {
        return (Duration::ZERO, Duration::ZERO);
    }
    let total: Duration = latencies.iter().sum();
    let mut sorted = latencies.to_vec();
    sorted.sort_unstable();
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    (total / latencies.len() as u32, sorted[rank - 1])
}

pub struct Tracker {
    config: TrackerConfig,
    model: Arc<RandomForestModel>,
    linker: Arc<dyn Linker>,
    story: StoryRepresentation,
    /// R ∪ I in stream order.
    classified: Vec<ClassifiedDoc>,
    cycle: u64,
    snapshot: HashSet<String>,
    /// Indices into `classified` of documents added to R since the last cycle.
    pending: Vec<usize>,
    cycle_time: Duration,
}

impl Tracker {
    /// Annotates the seeds, builds the story graph with its frozen bias set
    /// and the tf-idf profiles.
    pub fn new(
        seed_pos: &[Document],
        seed_neg: &[Document],
        model: Arc<RandomForestModel>,
        linker: Arc<dyn Linker>,
        config: TrackerConfig,
    ) -> Result<Self> {
        if seed_pos.is_empty() {
            return Err(Error::EmptyInput("seed documents"));
        }
        let seeds = annotate_all(seed_pos, linker.as_ref())?;
        let story = StoryRepresentation::from_seeds(seeds, seed_neg, CollectionStats::new(), config.graph)?;
        let snapshot = story.story_doc_ids().into_iter().collect();
        Ok(Tracker {
            config,
            model,
            linker,
            story,
            classified: Vec::new(),
            cycle: 0,
            snapshot,
            pending: Vec::new(),
            cycle_time: Duration::ZERO,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn story(&self) -> &StoryRepresentation {
        &self.story
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn classified(&self) -> &[ClassifiedDoc] {
        &self.classified
    }

    pub fn relevant(&self) -> impl Iterator<Item = &ClassifiedDoc> {
        self.classified.iter().filter(|c| c.relevant)
    }

    pub fn irrelevant(&self) -> impl Iterator<Item = &ClassifiedDoc> {
        self.classified.iter().filter(|c| !c.relevant)
    }

    pub fn snapshot_ids(&self) -> &HashSet<String> {
        &self.snapshot
    }

    pub fn export(&self) -> StoryExport {
        StoryExport {
            story_doc_ids: self.story.story_doc_ids(),
            graph: self.story.graph().snapshot(),
            cycles: self.cycle,
        }
    }

    fn score(&self, doc: &AnnotatedDocument) -> f64 {
        self.model
            .predict_probability(self.story.extract_features(doc).as_slice())
    }

    /// Classifies one stream document, then runs a selection cycle if enough
    /// new relevant documents have accumulated.
    pub fn process_document(&mut self, doc: &Document) -> Result<TrackDecision> {
        let start = Instant::now();
        let annotated = annotate_document(doc, self.linker.as_ref())?;
        self.story.observe(doc);
        let p = self.score(&annotated);
        let latency = start.elapsed();
        let relevant = p >= self.config.decision_threshold;
        self.classified.push(ClassifiedDoc {
            doc: annotated,
            probability: p,
            relevant,
        });
        let cycle = self.cycle;
        if relevant && self.config.strategy != Strategy::None {
            self.pending.push(self.classified.len() - 1);
            if self.pending.len() >= self.config.trigger {
                let t = Instant::now();
                self.run_cycle();
                self.cycle_time += t.elapsed();
            }
        }
        Ok(TrackDecision {
            doc_id: doc.id.clone(),
            probability: p,
            relevant,
            cycle,
            latency,
        })
    }

    pub fn run_stream(&mut self, stream: &CorpusStream) -> Result<TrackReport> {
        let start = Instant::now();
        let mut decisions = Vec::with_capacity(stream.len());
        for doc in stream {
            let d = self
                .process_document(doc)
                .map_err(|e| Error::InvalidArgument(format!("while processing `{}`: {e}", doc.id)))?;
            decisions.push(d);
        }
        let latencies: Vec<Duration> = decisions.iter().map(|d| d.latency).collect();
        let (mean_latency, p95_latency) = latency_stats(&latencies);
        Ok(TrackReport {
            decisions,
            mean_latency,
            p95_latency,
            cycle_time: self.cycle_time,
            wall_time: start.elapsed(),
        })
    }

    fn run_cycle(&mut self) {
        match self.config.strategy {
            Strategy::None => {}
            Strategy::Accumulate => {
                self.accumulate_cycle();
            }
            Strategy::Revisit => {
                let pool: Vec<usize> = (0..self.classified.len()).collect();
                self.revisit_with_pool(pool);
            }
            Strategy::RevisitRecent(k) => {
                let n = self.classified.len();
                let pool: Vec<usize> = (n.saturating_sub(k)..n).collect();
                self.revisit_with_pool(pool);
            }
            Strategy::AccumulateRevisit => {
                let every = self.config.revisit_every.max(1);
                if !self.cycle.is_multiple_of(every) {
                    self.accumulate_cycle();
                }
                if self.cycle.is_multiple_of(every) {
                    self.revisit_cycle();
                }
            }
        }
        self.pending.clear();
    }

    /// Promotes the most confident recent relevant document(s) above the
    /// promotion threshold into the story docs.
    pub fn accumulate_cycle(&mut self) {
        let mut candidates: Vec<usize> = self
            .pending
            .iter()
            .copied()
            .filter(|&i| {
                let c = &self.classified[i];
                c.relevant && c.probability >= self.config.promote_threshold && !self.story.contains_doc(c.doc.id())
            })
            .collect();
        if self.config.add_policy == AddPolicy::TopOne {
            candidates = self.best_of(&candidates).into_iter().collect();
        }
        if !candidates.is_empty() {
            for i in candidates {
                self.story.add_story_doc(self.classified[i].doc.clone());
            }
            self.story.refresh();
        }
        self.cycle += 1;
    }

    /// Highest probability; ties go to the earliest document.
    fn best_of(&self, idx: &[usize]) -> Option<usize> {
        idx.iter().copied().fold(None, |best, i| match best {
            Some(b) if self.classified[b].probability >= self.classified[i].probability => Some(b),
            _ => Some(i),
        })
    }

    /// Re-scores every available classified document, resets the story docs
    /// to the last snapshot and promotes one document.
    pub fn revisit_cycle(&mut self) {
        let pool: Vec<usize> = (0..self.classified.len())
            .filter(|&i| self.classified[i].doc.available)
            .collect();
        self.revisit_with_pool(pool);
    }

    fn revisit_with_pool(&mut self, pool: Vec<usize>) {
        let threshold = self.config.decision_threshold;
        let scores: Vec<f64> = {
            use rayon::prelude::*;
            let this = &*self;
            pool.par_iter().map(|&i| this.score(&this.classified[i].doc)).collect()
        };
        for (&i, p) in pool.iter().zip(scores) {
            let c = &mut self.classified[i];
            c.probability = p;
            c.relevant = p >= threshold;
        }
        self.story.reset_to(&self.snapshot);
        let candidates: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|&i| {
                let c = &self.classified[i];
                c.relevant && c.probability >= self.config.promote_threshold && !self.story.contains_doc(c.doc.id())
            })
            .collect();
        let chosen: Vec<usize> = match self.config.add_policy {
            AddPolicy::TopOne => self.best_of(&candidates).into_iter().collect(),
            AddPolicy::AllAboveThreshold => candidates,
        };
        for i in chosen {
            self.story.add_story_doc(self.classified[i].doc.clone());
        }
        self.story.refresh();
        for &i in &pool {
            self.classified[i].doc.available = false;
        }
        self.snapshot = self.story.story_doc_ids().into_iter().collect();
        self.cycle += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_parsing() {
        assert_eq!("AR".parse::<Strategy>().unwrap(), Strategy::AccumulateRevisit);
        assert_eq!("rr".parse::<Strategy>().unwrap(), Strategy::RevisitRecent(500));
        assert_eq!("rr:20".parse::<Strategy>().unwrap(), Strategy::RevisitRecent(20));
        assert!("rev:3".parse::<Strategy>().is_err());
        assert!("bogus".parse::<Strategy>().is_err());
    }

    #[test]
    fn latency_percentiles() {
        let l: Vec<Duration> = (1..=100).map(Duration::from_millis).collect();
        let (mean, p95) = latency_stats(&l);
        assert_eq!(p95, Duration::from_millis(95));
        assert_eq!(mean, Duration::from_micros(50_500));
        assert_eq!(latency_stats(&[]), (Duration::ZERO, Duration::ZERO));
    }

    #[test]
    fn decision_log_format() {
        let d = TrackDecision {
            doc_id: "t1".into(),
            probability: 0.75,
            relevant: true,
            cycle: 2,
            latency: Duration::from_micros(1234),
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(
            s,
            r#"{"doc_id":"t1","p":0.75,"relevant":true,"cycle":2,"latency_us":1234}"#
        );
    }
}
