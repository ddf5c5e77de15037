//! Classic retrieval scores used as story–document similarity features.

use std::collections::HashMap;

use crate::entitylink::AnnotatedDocument;
use crate::features::StoryRepresentation;
use crate::text::{term_counts, CollectionStats, TfIdfProfile};

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;
pub const DIRICHLET_MU: f64 = 2000.0;
pub const IR_FEATURE_NAMES: [&str; 3] = ["tfidf_cosine", "bm25", "lm_dirichlet"];

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
pub fn bm25_idf(stats: &CollectionStats, term: &str) -> f64 {
    let n = stats.n_docs() as f64;
    let df = f64::from(stats.df(term));
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Okapi BM25 of a document for the distinct terms of `query`.
pub fn bm25(query: &HashMap<String, u32>, doc: &HashMap<String, u32>, stats: &CollectionStats) -> f64 {
    let dl: f64 = doc.values().map(|&c| f64::from(c)).sum();
    let avgdl = stats.avg_doc_len();
    let norm = if avgdl > 0.0 { dl / avgdl } else { 1.0 };
    let mut shared: Vec<(&String, f64)> = doc
        .iter()
        .filter(|(t, _)| query.contains_key(*t))
        .map(|(t, &tf)| (t, f64::from(tf)))
        .collect();
    shared.sort_unstable_by(|a, b| a.0.cmp(b.0));
    shared
        .into_iter()
        .map(|(t, tf)| bm25_idf(stats, t) * tf * (BM25_K1 + 1.0) / (tf + BM25_K1 * (1.0 - BM25_B + BM25_B * norm)))
        .sum()
}

/// Query log-likelihood under a Dirichlet-smoothed document model, averaged
/// over query tokens. Terms unseen in the collection are skipped.
pub fn lm_dirichlet(query: &HashMap<String, u32>, doc: &HashMap<String, u32>, stats: &CollectionStats) -> f64 {
    let dl: f64 = doc.values().map(|&c| f64::from(c)).sum();
    let mut total = 0.0;
    let mut weight = 0.0;
    let mut terms: Vec<(&String, &u32)> = query.iter().collect();
    terms.sort_unstable();
    for (t, &qtf) in terms {
        let pc = stats.background_prob(t);
        if pc == 0.0 {
            continue;
        }
        let tf = doc.get(t).map_or(0.0, |&c| f64::from(c));
        total += f64::from(qtf) * ((tf + DIRICHLET_MU * pc) / (dl + DIRICHLET_MU)).ln();
        weight += f64::from(qtf);
    }
    if weight == 0.0 {
        0.0
    } else {
        total / weight
    }
}

/// (tf-idf cosine, BM25, Dirichlet LM) of `doc` against the story docs.
pub fn l2r_baseline_features(story: &StoryRepresentation, doc: &AnnotatedDocument) -> Vec<f64> {
    let counts = term_counts(&doc.doc.text);
    let stats = story.stats();
    let cos = story
        .relevant_profile()
        .cosine(&TfIdfProfile::from_counts(&counts, stats));
    vec![
        cos,
        bm25(story.story_terms(), &counts, stats),
        lm_dirichlet(story.story_terms(), &counts, stats),
    ]
}
