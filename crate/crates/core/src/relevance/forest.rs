//! Random forest of Gini-split binary decision trees.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MODEL_VERSION: u64 = 1;

/// Relative tolerance when comparing split impurities; exact float ties are
/// broken by lower feature index, then lower threshold.
const IMPURITY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub features_per_split: usize,
    pub rng_seed: u64,
    /// Sample each tree's training set with replacement.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            min_leaf: 2,
            max_depth: None,
            features_per_split: 3,
            rng_seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidArgument("n_trees must be at least 1".into()));
        }
        if self.min_leaf == 0 {
            return Err(Error::InvalidArgument("min_leaf must be at least 1".into()));
        }
        if self.features_per_split == 0 || self.features_per_split > n_features {
            return Err(Error::InvalidArgument(format!(
                "features_per_split must be in 1..={n_features}, got {}",
                self.features_per_split
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Flat tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub config: ForestConfig,
    pub feature_count: usize,
    pub trees: Vec<DecisionTree>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u64,
    #[serde(flatten)]
    model: RandomForestModel,
}

impl RandomForestModel {
    /// Mean leaf positive-fraction over all trees.
    pub fn predict_probability(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.feature_count);
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        (sum / self.trees.len() as f64).clamp(0.0, 1.0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelFile {
            version: MODEL_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        match v.get("version").and_then(serde_json::Value::as_u64) {
            Some(MODEL_VERSION) => {}
            Some(other) => return Err(Error::ModelVersion(other)),
            None => return Err(Error::MalformedModel("missing version".into())),
        }
        let file: ModelFile = serde_json::from_value(v).map_err(|e| Error::MalformedModel(e.to_string()))?;
        let m = file.model;
        for t in &m.trees {
            for n in &t.nodes {
                let ok = match *n {
                    Node::Leaf { value } => (0.0..=1.0).contains(&value),
                    Node::Split {
                        feature, left, right, ..
                    } => feature < m.feature_count && left < t.nodes.len() && right < t.nodes.len(),
                };
                if !ok {
                    return Err(Error::MalformedModel(format!("bad node {n:?}")));
                }
            }
        }
        if m.trees.is_empty() || m.trees.iter().any(|t| t.nodes.is_empty()) {
            return Err(Error::MalformedModel("empty forest".into()));
        }
        Ok(m)
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut s = String::new();
        r.read_to_string(&mut s)?;
        Self::from_json(&s)
    }
}

pub fn save_model(model: &RandomForestModel, path: impl AsRef<Path>) -> Result<()> {
    model.write(std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<RandomForestModel> {
    RandomForestModel::read(std::fs::File::open(path)?)
}

/// Column-major view of the training matrix.
struct Columns {
    cols: Vec<Vec<f64>>,
    y: Vec<bool>,
}

struct Builder<'a> {
    data: &'a Columns,
    config: &'a ForestConfig,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

struct BestSplit {
    impurity: f64,
    feature: usize,
    threshold: f64,
}

fn positive_fraction(data: &Columns, idx: &[usize]) -> f64 {
    idx.iter().filter(|&&i| data.y[i]).count() as f64 / idx.len() as f64
}

/// Size-weighted Gini impurity of a two-way split.
fn split_impurity(pos_l: f64, n_l: f64, pos_r: f64, n_r: f64) -> f64 {
    let g = |p: f64, n: f64| {
        let q = p / n;
        n * 2.0 * q * (1.0 - q)
    };
    g(pos_l, n_l) + g(pos_r, n_r)
}

fn better(candidate: &BestSplit, current: &Option<BestSplit>) -> bool {
    match current {
        None => true,
        Some(c) => {
            let tol = IMPURITY_EPS * c.impurity.abs().max(1.0);
            if candidate.impurity < c.impurity - tol {
                true
            } else if candidate.impurity > c.impurity + tol {
                false
            } else {
                (candidate.feature, candidate.threshold) < (c.feature, c.threshold)
            }
        }
    }
}

impl Builder<'_> {
    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let slot = self.nodes.len();
        let value = positive_fraction(self.data, &idx);
        self.nodes.push(Node::Leaf { value });
        let pure = value == 0.0 || value == 1.0;
        let depth_capped = self.config.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < 2 * self.config.min_leaf {
            return slot;
        }
        let Some(best) = self.best_split(&idx) else {
            return slot;
        };
        let col = &self.data.cols[best.feature];
        let (l, r): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] <= best.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[slot] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        slot
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let n_features = self.data.cols.len();
        let mut order: Vec<usize> = (0..n_features).collect();
        if self.config.features_per_split < n_features {
            order.shuffle(&mut self.rng);
        }
        let total_pos = idx.iter().filter(|&&i| self.data.y[i]).count() as f64;
        let n = idx.len();
        let min_leaf = self.config.min_leaf;
        let mut best: Option<BestSplit> = None;
        let mut informative = 0;
        let mut sorted: Vec<(f64, bool)> = Vec::with_capacity(n);
        for &f in &order {
            if informative >= self.config.features_per_split {
                break;
            }
            let col = &self.data.cols[f];
            sorted.clear();
            sorted.extend(idx.iter().map(|&i| (col[i], self.data.y[i])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[n - 1].0 {
                // constant here; does not count toward the feature budget
                continue;
            }
            informative += 1;
            let mut pos_l = 0.0;
            for k in 0..n - 1 {
                if sorted[k].1 {
                    pos_l += 1.0;
                }
                let n_l = k + 1;
                if sorted[k].0 == sorted[k + 1].0 || n_l < min_leaf || n - n_l < min_leaf {
                    continue;
                }
                let cand = BestSplit {
                    impurity: split_impurity(pos_l, n_l as f64, total_pos - pos_l, (n - n_l) as f64),
                    feature: f,
                    threshold: midpoint(sorted[k].0, sorted[k + 1].0),
                };
                if better(&cand, &best) {
                    best = Some(cand);
                }
            }
        }
        best
    }
}

/// Midpoint that is guaranteed to separate `a < b`.
fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    if m >= b {
        a
    } else {
        m
    }
}

fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Trains on a row-major matrix. Trees are built in parallel; each tree's
/// randomness depends only on `(rng_seed, tree index)`.
pub fn train_matrix(x: &[Vec<f64>], y: &[bool], config: &ForestConfig) -> Result<RandomForestModel> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "{} rows but {} labels",
            x.len(),
            y.len()
        )));
    }
    let n_features = x.first().map(Vec::len).ok_or(Error::EmptyInput("training pairs"))?;
    if x.iter().any(|r| r.len() != n_features) {
        return Err(Error::InvalidArgument("ragged feature rows".into()));
    }
    if x.len() < 2 || y.iter().all(|&b| b) || y.iter().all(|&b| !b) {
        return Err(Error::SingleClass);
    }
    config.validate(n_features)?;
    let data = Columns {
        cols: (0..n_features).map(|f| x.iter().map(|r| r[f]).collect()).collect(),
        y: y.to_vec(),
    };
    let n = x.len();
    let trees = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.rng_seed, t);
            let idx: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                data: &data,
                config,
                rng,
                nodes: Vec::new(),
            };
            b.build(idx, 0);
            DecisionTree { nodes: b.nodes }
        })
        .collect();
    Ok(RandomForestModel {
        config: *config,
        feature_count: n_features,
        trees,
    })
}
