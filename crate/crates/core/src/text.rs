//! Term statistics shared by the relevance features and the IR baselines.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;

/// Lowercase alphanumeric terms of at least two characters.
pub fn terms(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().nth(1).is_some())
        .map(str::to_lowercase)
}

pub fn term_counts(text: &str) -> HashMap<String, u32> {
    let mut counts = HashMap::new();
    for t in terms(text) {
        *counts.entry(t).or_insert(0) += 1;
    }
    counts
}

/// Running document-frequency and collection-frequency counters over every
/// document observed so far.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CollectionStats {
    n_docs: u64,
    total_terms: u64,
    df: HashMap<String, u32>,
    cf: HashMap<String, u64>,
}

impl CollectionStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, text: &str) {
        self.observe_counts(&term_counts(text));
    }

    pub fn observe_counts(&mut self, counts: &HashMap<String, u32>) {
        self.n_docs += 1;
        for (t, &c) in counts {
            *self.df.entry(t.clone()).or_insert(0) += 1;
            *self.cf.entry(t.clone()).or_insert(0) += u64::from(c);
            self.total_terms += u64::from(c);
        }
    }

    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut s = Self::new();
        for t in texts {
            s.observe(t);
        }
        s
    }

    pub fn n_docs(&self) -> u64 {
        self.n_docs
    }

    pub fn df(&self, term: &str) -> u32 {
        self.df.get(term).copied().unwrap_or(0)
    }

    pub fn cf(&self, term: &str) -> u64 {
        self.cf.get(term).copied().unwrap_or(0)
    }

    pub fn total_terms(&self) -> u64 {
        self.total_terms
    }

    pub fn avg_doc_len(&self) -> f64 {
        if self.n_docs == 0 {
            0.0
        } else {
            self.total_terms as f64 / self.n_docs as f64
        }
    }

    /// Smoothed idf: `ln((N + 1) / (df + 1)) + 1`.
    pub fn idf(&self, term: &str) -> f64 {
        ((self.n_docs as f64 + 1.0) / (f64::from(self.df(term)) + 1.0)).ln() + 1.0
    }

    /// Collection language-model probability of `term`.
    pub fn background_prob(&self, term: &str) -> f64 {
        if self.total_terms == 0 {
            0.0
        } else {
            self.cf(term) as f64 / self.total_terms as f64
        }
    }
}

/// Sparse tf-idf vector with a cached L2 norm. Ordered storage keeps float
/// sums reproducible run to run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TfIdfProfile {
    weights: BTreeMap<String, f64>,
    norm: f64,
}

impl TfIdfProfile {
    pub fn from_counts(counts: &HashMap<String, u32>, stats: &CollectionStats) -> Self {
        let weights: BTreeMap<String, f64> = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(t, &c)| (t.clone(), f64::from(c) * stats.idf(t)))
            .collect();
        Self::from_weights(weights)
    }

    pub fn from_weights(weights: BTreeMap<String, f64>) -> Self {
        let norm = weights.values().map(|w| w * w).sum::<f64>().sqrt();
        TfIdfProfile { weights, norm }
    }

    pub fn from_text(text: &str, stats: &CollectionStats) -> Self {
        Self::from_counts(&term_counts(text), stats)
    }

    pub fn weights(&self) -> &BTreeMap<String, f64> {
        &self.weights
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_zero(&self) -> bool {
        self.norm == 0.0
    }

    /// Cosine similarity, 0 when either side is the zero vector.
    pub fn cosine(&self, other: &TfIdfProfile) -> f64 {
        if self.is_zero() || other.is_zero() {
            return 0.0;
        }
        let (small, large) = if self.weights.len() <= other.weights.len() {
            (self, other)
        } else {
            (other, self)
        };
        let dot: f64 = small
            .weights
            .iter()
            .filter_map(|(t, w)| large.weights.get(t).map(|v| w * v))
            .sum();
        (dot / (self.norm * other.norm)).clamp(0.0, 1.0) + 0.0
    }
}

/// tf over the concatenation of `docs` times the collection idf.
pub fn build_tfidf_profile<'a>(docs: impl IntoIterator<Item = &'a Document>, stats: &CollectionStats) -> TfIdfProfile {
    let mut counts: HashMap<String, u32> = HashMap::new();
    for d in docs {
        for t in terms(&d.text) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    TfIdfProfile::from_counts(&counts, stats)
}
