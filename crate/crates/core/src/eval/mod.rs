//! Metrics, story complexity, synthetic data and experiment drivers.

mod experiments;
mod synthetic;

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use experiments::{
    bench_sss, cross_validate, pair_matrix, run_ablation, AblationRow, BenchRow, Experiment, ExperimentConfig,
    FEATURE_GROUPS,
};
pub use synthetic::{gen_synthetic, SyntheticCorpus, SyntheticSpec};

use crate::entitylink::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::text::{CollectionStats, TfIdfProfile};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn add(&mut self, predicted: bool, actual: bool) {
        match (predicted, actual) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn report(&self) -> EvalReport {
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        EvalReport {
            precision,
            recall,
            f1,
            counts: *self,
            mean_latency: None,
            p95_latency: None,
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Confusion,
    pub mean_latency: Option<Duration>,
    pub p95_latency: Option<Duration>,
}

/// Binary P/R/F1 with relevant as the positive class. Every decision needs a
/// truth label.
pub fn score(decisions: &[(String, bool)], truth: &HashMap<String, bool>) -> Result<EvalReport> {
    let mut c = Confusion::default();
    for (id, predicted) in decisions {
        let actual = *truth.get(id).ok_or_else(|| Error::MissingTruth(id.clone()))?;
        c.add(*predicted, actual);
    }
    Ok(c.report())
}

pub fn score_labels(predicted: &[bool], actual: &[bool]) -> EvalReport {
    let mut c = Confusion::default();
    for (&p, &a) in predicted.iter().zip(actual) {
        c.add(p, a);
    }
    c.report()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub entity_similarity: f64,
    /// Shannon entropy in bits of the stream's entity distribution.
    pub stream_entropy: f64,
    pub normalized_product: f64,
}

fn entity_counts<'a>(docs: impl IntoIterator<Item = &'a AnnotatedDocument>) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for d in docs {
        for a in &d.annotations {
            *counts.entry(a.entity_id.clone()).or_insert(0) += 1;
        }
    }
    counts
}

/// Raw (similarity, entropy) for one story.
pub fn story_complexity(seed: &[AnnotatedDocument], stream: &[AnnotatedDocument]) -> Result<(f64, f64)> {
    if seed.is_empty() {
        return Err(Error::EmptyInput("seed"));
    }
    if stream.is_empty() {
        return Err(Error::EmptyInput("stream"));
    }
    let mut stats = CollectionStats::new();
    for d in seed.iter().chain(stream) {
        stats.observe_counts(&entity_counts([d]));
    }
    let seed_counts = entity_counts(seed);
    let stream_counts = entity_counts(stream);
    let similarity =
        TfIdfProfile::from_counts(&seed_counts, &stats).cosine(&TfIdfProfile::from_counts(&stream_counts, &stats));
    Ok((similarity, entropy_bits(stream_counts.values().copied())))
}

pub fn entropy_bits(counts: impl IntoIterator<Item = u32>) -> f64 {
    let mut counts: Vec<u32> = counts.into_iter().filter(|&c| c > 0).collect();
    counts.sort_unstable();
    let total: f64 = counts.iter().map(|&c| f64::from(c)).sum();
    if total == 0.0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .map(|&c| {
            let p = f64::from(c) / total;
            -p * p.log2()
        })
        .sum();
    h.max(0.0)
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 1.0 })
        .collect()
}

/// Complexity of each story, with both measures min-max normalized across
/// the batch. A single story normalizes to 1 x 1.
pub fn complexity_batch(stories: &[(Vec<AnnotatedDocument>, Vec<AnnotatedDocument>)]) -> Result<Vec<ComplexityReport>> {
    let raw: Vec<(f64, f64)> = stories
        .iter()
        .map(|(seed, stream)| story_complexity(seed, stream))
        .collect::<Result<_>>()?;
    let sims = min_max(&raw.iter().map(|r| r.0).collect::<Vec<_>>());
    let ents = min_max(&raw.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(raw
        .iter()
        .zip(sims.iter().zip(&ents))
        .map(|(&(s, e), (&ns, &ne))| ComplexityReport {
            entity_similarity: s,
            stream_entropy: e,
            normalized_product: ns * ne,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Source};
    use crate::entitylink::EntityAnnotation;
    use chrono::{TimeZone, Utc};

    fn ann(id: &str, ents: &[&str]) -> AnnotatedDocument {
        let d = Document::new(
            id,
            Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap(),
            Source::Tweet,
            "x",
        );
        AnnotatedDocument::new(
            d,
            ents.iter()
                .enumerate()
                .map(|(i, e)| EntityAnnotation {
                    entity_id: e.to_string(),
                    position: i,
                    confidence: 1.0,
                })
                .collect(),
        )
    }

    #[test]
    fn base_rate_precision() {
        let truth: HashMap<String, bool> = (0..110).map(|i| (format!("d{i}"), i < 10)).collect();
        let all: Vec<(String, bool)> = (0..110).map(|i| (format!("d{i}"), true)).collect();
        let r = score(&all, &truth).unwrap();
        assert!((r.precision - 1.0 / 11.0).abs() < 1e-12);
        assert_eq!(r.recall, 1.0);
        let none: Vec<(String, bool)> = (0..110).map(|i| (format!("d{i}"), false)).collect();
        let r = score(&none, &truth).unwrap();
        assert_eq!((r.precision, r.f1), (0.0, 0.0));
        assert!(matches!(
            score(&[("zz".into(), true)], &truth),
            Err(Error::MissingTruth(_))
        ));
    }

    #[test]
    fn complexity_cases() {
        let seed = vec![ann("s", &["a", "b", "c"])];
        let (sim, _) = story_complexity(&seed, &seed.clone()).unwrap();
        assert!((sim - 1.0).abs() < 1e-12);
        let (_, h) = story_complexity(&seed, &[ann("x", &["a", "a", "a"])]).unwrap();
        assert_eq!(h, 0.0);
        let uniform = ann("u", &["a", "b", "c", "d", "e", "f", "g", "h"]);
        let (_, h) = story_complexity(&seed, &[uniform]).unwrap();
        assert!((h - 3.0).abs() < 1e-12);
        assert!(story_complexity(&[], &seed).is_err());
        let one = complexity_batch(&[(seed.clone(), seed.clone())]).unwrap();
        assert_eq!(one[0].normalized_product, 1.0);
    }
}
