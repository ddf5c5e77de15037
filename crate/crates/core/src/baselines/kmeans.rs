//! Seeded spherical k-means over tf-idf vectors.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::text::{term_counts, CollectionStats};

pub const MAX_ITERATIONS: usize = 100;

/// `1 + ceil(n / 200)`.
pub fn default_k(n_docs: usize) -> usize {
    1 + n_docs.div_ceil(200)
}

type Sparse = Vec<(usize, f64)>;

#[derive(Debug, Clone)]
pub struct SeededKMeansModel {
    /// Dense unit-norm centroids over `vocabulary`.
    pub centroids: Vec<Vec<f64>>,
    pub relevant_clusters: BTreeSet<usize>,
    vocabulary: HashMap<String, usize>,
    stats: CollectionStats,
    /// Cluster of each stream document, input order.
    pub assignments: Vec<usize>,
    /// Sum of cosine distances after each iteration.
    pub objective_history: Vec<f64>,
}

impl SeededKMeansModel {
    fn vectorize(&self, text: &str) -> Sparse {
        sparse_tfidf(text, &self.stats, |t| self.vocabulary.get(t).copied())
    }

    pub fn nearest(&self, text: &str) -> usize {
        nearest(&self.centroids, &self.vectorize(text)).0
    }

    pub fn classify(&self, text: &str) -> bool {
        self.relevant_clusters.contains(&self.nearest(text))
    }

    /// Relevance of each stream document from the final assignment.
    pub fn stream_decisions(&self) -> Vec<bool> {
        self.assignments
            .iter()
            .map(|c| self.relevant_clusters.contains(c))
            .collect()
    }
}

fn sparse_tfidf(text: &str, stats: &CollectionStats, col: impl Fn(&str) -> Option<usize>) -> Sparse {
    let mut v: Sparse = term_counts(text)
        .into_iter()
        .filter_map(|(t, c)| col(&t).map(|i| (i, f64::from(c) * stats.idf(&t))))
        .collect();
    v.sort_unstable_by_key(|&(i, _)| i);
    let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, x) in &mut v {
            *x /= norm;
        }
    }
    v
}

fn cosine(centroid: &[f64], v: &Sparse) -> f64 {
    v.iter().map(|&(i, x)| centroid[i] * x).sum()
}

/// Best cluster by cosine; ties go to the lower index.
fn nearest(centroids: &[Vec<f64>], v: &Sparse) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let s = cosine(c, v);
        if s > best.1 {
            best = (k, s);
        }
    }
    best
}

fn mean_direction(members: impl Iterator<Item = usize>, vectors: &[Sparse], dim: usize) -> Option<Vec<f64>> {
    let mut c = vec![0.0; dim];
    let mut any = false;
    for m in members {
        any = true;
        for &(i, x) in &vectors[m] {
            c[i] += x;
        }
    }
    let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !any || norm == 0.0 {
        return None;
    }
    c.iter_mut().for_each(|x| *x /= norm);
    Some(c)
}

/// Clusters seeds and stream together. Centroid 0 starts at the positive
/// seeds' mean direction; the rest start at randomly chosen negative seeds,
/// topped up with random stream docs. A cluster is relevant when it holds a
/// positive seed after convergence.
pub fn seeded_kmeans(
    stream: &[Document],
    seed_pos: &[Document],
    seed_neg: &[Document],
    k: usize,
    rng_seed: u64,
) -> Result<SeededKMeansModel> {
    if seed_pos.is_empty() {
        return Err(Error::EmptyInput("positive seeds"));
    }
    let all: Vec<&Document> = seed_pos.iter().chain(seed_neg).chain(stream).collect();
    if k == 0 || k > all.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} but only {} documents",
            all.len()
        )));
    }
    let stats = CollectionStats::from_texts(all.iter().map(|d| d.text.as_str()));
    let mut vocab_sorted: BTreeMap<String, ()> = BTreeMap::new();
    for d in &all {
        for t in term_counts(&d.text).into_keys() {
            vocab_sorted.insert(t, ());
        }
    }
    let vocabulary: HashMap<String, usize> = vocab_sorted.into_keys().enumerate().map(|(i, t)| (t, i)).collect();
    let dim = vocabulary.len();
    let vectors: Vec<Sparse> = all
        .iter()
        .map(|d| sparse_tfidf(&d.text, &stats, |t| vocabulary.get(t).copied()))
        .collect();
    let n_pos = seed_pos.len();
    let n_neg = seed_neg.len();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centroids = vec![mean_direction(0..n_pos, &vectors, dim).unwrap_or_else(|| vec![0.0; dim])];
    let neg_take = (k - 1).min(n_neg);
    let mut init: Vec<usize> = sample(&mut rng, n_neg, neg_take)
        .into_iter()
        .map(|i| n_pos + i)
        .collect();
    if init.len() < k - 1 {
        let extra = sample(&mut rng, stream.len().max(1), (k - 1 - init.len()).min(stream.len()));
        init.extend(extra.into_iter().map(|i| n_pos + n_neg + i));
    }
    for i in init {
        centroids.push(mean_direction(std::iter::once(i), &vectors, dim).unwrap_or_else(|| vec![0.0; dim]));
    }
    while centroids.len() < k {
        centroids.push(vec![0.0; dim]);
    }

    let mut assign: Vec<usize> = vec![usize::MAX; all.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, v) in vectors.iter().enumerate() {
            let (c, s) = nearest(&centroids, v);
            objective += 1.0 - s;
            if assign[i] != c {
                assign[i] = c;
                changed = true;
            }
        }
        history.push(objective);
        if !changed {
            break;
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if let Some(m) = mean_direction((0..all.len()).filter(|&i| assign[i] == c), &vectors, dim) {
                *centroid = m;
            }
        }
    }
    let relevant_clusters: BTreeSet<usize> = assign[..n_pos].iter().copied().collect();
    Ok(SeededKMeansModel {
        centroids,
        relevant_clusters,
        vocabulary,
        stats,
        assignments: assign[n_pos + n_neg..].to_vec(),
        objective_history: history,
    })
}
