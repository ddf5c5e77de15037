//! L2-regularized logistic regression over tf-idf bag-of-words, optionally
//! extended with bag-of-entities.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::entitylink::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::text::{term_counts, CollectionStats};

pub const ENTITY_KEY_PREFIX: &str = "ENT:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Featurizer {
    Bow,
    BowPlusEntities,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRegConfig {
    pub lambda: f64,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            lambda: 1e-4,
            tol: 1e-6,
            max_epochs: 1000,
        }
    }
}

/// Raw feature counts: terms, plus `ENT:<id>` keys for entities.
pub fn raw_features(doc: &AnnotatedDocument, featurizer: Featurizer) -> HashMap<String, u32> {
    let mut counts = term_counts(&doc.doc.text);
    if featurizer == Featurizer::BowPlusEntities {
        for a in &doc.annotations {
            *counts.entry(format!("{ENTITY_KEY_PREFIX}{}", a.entity_id)).or_insert(0) += 1;
        }
    }
    counts
}

/// Sparse row: (column, value), sorted by column.
pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowModel {
    pub featurizer: Featurizer,
    /// Frozen vocabulary: key -> (column, idf).
    vocabulary: BTreeMap<String, (usize, f64)>,
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BowModel {
    pub fn vocabulary_len(&self) -> usize {
        self.vocabulary.len()
    }

    /// L2-normalized tf-idf row over the frozen vocabulary; unknown keys drop out.
    pub fn vectorize(&self, doc: &AnnotatedDocument) -> SparseRow {
        let mut row: SparseRow = raw_features(doc, self.featurizer)
            .into_iter()
            .filter_map(|(k, c)| self.vocabulary.get(&k).map(|&(col, idf)| (col, f64::from(c) * idf)))
            .collect();
        row.sort_unstable_by_key(|&(c, _)| c);
        let norm = row.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (_, v) in &mut row {
                *v /= norm;
            }
        }
        row
    }

    pub fn predict_row(&self, row: &SparseRow) -> f64 {
        sigmoid(self.bias + dot(&self.weights, row))
    }

    pub fn predict_probability(&self, doc: &AnnotatedDocument) -> f64 {
        self.predict_row(&self.vectorize(doc))
    }

    /// A model with no features and the given bias.
    pub fn bias_only(featurizer: Featurizer, bias: f64) -> Self {
        BowModel {
            featurizer,
            vocabulary: BTreeMap::new(),
            weights: Vec::new(),
            bias,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], row: &SparseRow) -> f64 {
    row.iter().map(|&(c, v)| w[c] * v).sum()
}

/// Mean log loss plus `lambda/2 * |w|^2` (bias unregularized), and its
/// gradient with respect to `(w, bias)`.
pub fn loss_and_gradient(w: &[f64], bias: f64, rows: &[SparseRow], y: &[bool], lambda: f64) -> (f64, Vec<f64>, f64) {
    let n = rows.len() as f64;
    let mut gw: Vec<f64> = w.iter().map(|wi| lambda * wi).collect();
    let mut gb = 0.0;
    let mut loss = 0.5 * lambda * w.iter().map(|x| x * x).sum::<f64>();
    for (row, &label) in rows.iter().zip(y) {
        let z = bias + dot(w, row);
        let t = if label { 1.0 } else { 0.0 };
        // log(1 + e^z) - t z, computed stably
        loss += (z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z) / n;
        let r = (sigmoid(z) - t) / n;
        gb += r;
        for &(c, v) in row {
            gw[c] += r * v;
        }
    }
    (loss, gw, gb)
}

/// Builds the vocabulary from the training docs and fits by gradient descent
/// with a fixed step of `1/L`, where `L` bounds the loss curvature.
pub fn train_logreg(
    docs: &[AnnotatedDocument],
    labels: &[bool],
    featurizer: Featurizer,
    config: &LogRegConfig,
) -> Result<BowModel> {
    if docs.len() != labels.len() {
        return Err(Error::InvalidArgument("docs and labels differ in length".into()));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::SingleClass);
    }
    let raw: Vec<HashMap<String, u32>> = docs.iter().map(|d| raw_features(d, featurizer)).collect();
    let mut stats = CollectionStats::new();
    for r in &raw {
        stats.observe_counts(r);
    }
    let keys: std::collections::BTreeSet<&String> = raw.iter().flat_map(|r| r.keys()).collect();
    let vocabulary: BTreeMap<String, (usize, f64)> = keys
        .into_iter()
        .enumerate()
        .map(|(i, k)| (k.clone(), (i, stats.idf(k))))
        .collect();
    let mut model = BowModel {
        featurizer,
        weights: vec![0.0; vocabulary.len()],
        vocabulary,
        bias: 0.0,
    };
    let rows: Vec<SparseRow> = docs.iter().map(|d| model.vectorize(d)).collect();
    fit(&mut model.weights, &mut model.bias, &rows, labels, config);
    Ok(model)
}

fn fit(w: &mut [f64], bias: &mut f64, rows: &[SparseRow], y: &[bool], config: &LogRegConfig) {
    // rows are unit-norm, plus the constant bias column
    let step = 1.0 / (0.25 * 2.0 + config.lambda);
    for epoch in 0..config.max_epochs {
        let (_, gw, gb) = loss_and_gradient(w, *bias, rows, y, config.lambda);
        let gnorm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if gnorm < config.tol {
            log::debug!("logreg converged after {epoch} epochs");
            return;
        }
        for (wi, gi) in w.iter_mut().zip(&gw) {
            *wi -= step * gi;
        }
        *bias -= step * gb;
    }
}
