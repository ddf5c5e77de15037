//! Story entity graph: windowed co-occurrence counts between entities of the
//! story documents, weighted by PageRank biased towards the seed graph's
//! most important entities.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::entitylink::AnnotatedDocument;
use crate::error::{Error, Result};

/// Number of entities in the teleport set.
pub const BIAS_SET_SIZE: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphConfig {
    /// Window length at the start of a document, in characters.
    pub window_start: f64,
    /// Total shrink of the window from the first to the last character.
    pub window_decay: f64,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            window_start: 500.0,
            window_decay: 400.0,
            damping: 0.85,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

impl GraphConfig {
    /// Co-occurrence window for an entity at char offset `position` in a
    /// document of `doc_len` characters: `a - b * p / |m|`.
    pub fn window_length(&self, position: usize, doc_len: usize) -> Result<f64> {
        if doc_len == 0 {
            return Err(Error::ZeroLength);
        }
        Ok(self.window_start - self.window_decay * position as f64 / doc_len as f64)
    }
}

/// [`GraphConfig::window_length`] with the default parameters.
pub fn window_length(position: usize, doc_len: usize) -> Result<f64> {
    GraphConfig::default().window_length(position, doc_len)
}

fn ordered<'a>(a: &'a str, b: &'a str) -> (&'a str, &'a str) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Co-occurrence pair counts contributed by one document.
pub fn document_pairs(doc: &AnnotatedDocument, config: &GraphConfig) -> BTreeMap<(String, String), u32> {
    let mut pairs = BTreeMap::new();
    let len = doc.text_len();
    if len == 0 {
        return pairs;
    }
    let anns = &doc.annotations;
    for (i, e) in anns.iter().enumerate() {
        let tw = config.window_length(e.position, len).expect("positive length");
        for other in &anns[i + 1..] {
            if other.position <= e.position {
                continue;
            }
            if (other.position - e.position) as f64 > tw {
                break;
            }
            if other.entity_id == e.entity_id {
                continue;
            }
            let (u, v) = ordered(&e.entity_id, &other.entity_id);
            *pairs.entry((u.to_string(), v.to_string())).or_insert(0) += 1;
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub u: String,
    pub v: String,
    pub count: u32,
}

/// Debug export: `{nodes:[{id,weight}], edges:[{u,v,count}], bias:[ids]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<NodeRecord>,
    pub edges: Vec<EdgeRecord>,
    pub bias: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntityGraph {
    config: GraphConfig,
    adjacency: BTreeMap<String, BTreeMap<String, u32>>,
    weights: HashMap<String, f64>,
    bias: Vec<String>,
    bias_frozen: bool,
}

impl Default for EntityGraph {
    fn default() -> Self {
        Self::new(GraphConfig::default())
    }
}

impl EntityGraph {
    pub fn new(config: GraphConfig) -> Self {
        EntityGraph {
            config,
            adjacency: BTreeMap::new(),
            weights: HashMap::new(),
            bias: Vec::new(),
            bias_frozen: false,
        }
    }

    pub fn config(&self) -> &GraphConfig {
        &self.config
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    /// Number of distinct undirected edges.
    pub fn edge_count(&self) -> usize {
        self.adjacency.values().map(BTreeMap::len).sum::<usize>() / 2
    }

    /// Sum of all edge counts.
    pub fn total_edge_weight(&self) -> u64 {
        self.adjacency
            .values()
            .flat_map(|n| n.values())
            .map(|&c| u64::from(c))
            .sum::<u64>()
            / 2
    }

    pub fn is_empty(&self) -> bool {
        self.adjacency.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.adjacency.contains_key(id)
    }

    pub fn edge(&self, u: &str, v: &str) -> u32 {
        self.adjacency.get(u).and_then(|n| n.get(v)).copied().unwrap_or(0)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &str> {
        self.adjacency.keys().map(String::as_str)
    }

    pub fn degree(&self, id: &str) -> u32 {
        self.adjacency.get(id).map_or(0, |n| n.values().sum())
    }

    /// Node weight from the latest PageRank run; 0 for unknown or newer nodes.
    pub fn weight(&self, id: &str) -> f64 {
        self.weights.get(id).copied().unwrap_or(0.0)
    }

    pub fn weights(&self) -> &HashMap<String, f64> {
        &self.weights
    }

    pub fn bias_set(&self) -> &[String] {
        &self.bias
    }

    pub fn is_bias_frozen(&self) -> bool {
        self.bias_frozen
    }

    /// Adds `count` to edge {u, v}, creating nodes as needed. Self-edges are ignored.
    pub fn add_edge(&mut self, u: &str, v: &str, count: u32) {
        if u == v || count == 0 {
            return;
        }
        *self
            .adjacency
            .entry(u.to_string())
            .or_default()
            .entry(v.to_string())
            .or_insert(0) += count;
        *self
            .adjacency
            .entry(v.to_string())
            .or_default()
            .entry(u.to_string())
            .or_insert(0) += count;
    }

    /// Inserts an isolated node. Only meaningful for hand-built graphs; nodes
    /// created through documents always carry edges.
    pub fn add_node(&mut self, id: &str) {
        self.adjacency.entry(id.to_string()).or_default();
    }

    pub fn add_document(&mut self, doc: &AnnotatedDocument) {
        for ((u, v), c) in document_pairs(doc, &self.config) {
            self.add_edge(&u, &v, c);
        }
    }

    /// Exact inverse of [`add_document`](Self::add_document). Fails without
    /// modifying the graph if any contributed edge is missing or too small.
    pub fn remove_document(&mut self, doc: &AnnotatedDocument) -> Result<()> {
        let pairs = document_pairs(doc, &self.config);
        for ((u, v), &c) in &pairs {
            if self.edge(u, v) < c {
                return Err(Error::EdgeMismatch(u.clone(), v.clone()));
            }
        }
        for ((u, v), c) in pairs {
            self.decrement(&u, &v, c);
            self.decrement(&v, &u, c);
        }
        Ok(())
    }

    fn decrement(&mut self, u: &str, v: &str, c: u32) {
        let neighbors = self.adjacency.get_mut(u).expect("checked");
        let slot = neighbors.get_mut(v).expect("checked");
        *slot -= c;
        if *slot == 0 {
            neighbors.remove(v);
        }
        if neighbors.is_empty() {
            self.adjacency.remove(u);
            self.weights.remove(u);
        }
    }

    /// Drops all nodes and edges; the bias set survives.
    pub fn clear_edges(&mut self) {
        self.adjacency.clear();
        self.weights.clear();
    }

    /// Power iteration `x ← (1−d)·t + d·P·x` with `t` uniform over
    /// `teleport ∩ nodes` (all nodes when that is empty).
    fn pagerank(&self, teleport: &[String]) -> HashMap<String, f64> {
        let ids: Vec<&String> = self.adjacency.keys().collect();
        let n = ids.len();
        if n == 0 {
            return HashMap::new();
        }
        let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let mut t = vec![0.0; n];
        let members: Vec<usize> = teleport
            .iter()
            .filter_map(|id| index.get(id.as_str()).copied())
            .collect();
        if members.is_empty() {
            t.iter_mut().for_each(|x| *x = 1.0 / n as f64);
        } else {
            for &i in &members {
                t[i] = 1.0 / members.len() as f64;
            }
        }

        // incoming lists: for each v, (u, count(u,v)/deg(u))
        let degree: Vec<f64> = ids.iter().map(|id| f64::from(self.degree(id))).collect();
        let incoming: Vec<Vec<(usize, f64)>> = ids
            .iter()
            .map(|v| {
                self.adjacency[*v]
                    .iter()
                    .map(|(u, &c)| {
                        let ui = index[u.as_str()];
                        (ui, f64::from(c) / degree[ui])
                    })
                    .collect()
            })
            .collect();
        let dangling: Vec<usize> = (0..n).filter(|&i| degree[i] == 0.0).collect();

        let d = self.config.damping;
        let mut x = vec![1.0 / n as f64; n];
        let mut next = vec![0.0; n];
        for _ in 0..self.config.max_iter {
            let dangling_mass: f64 = dangling.iter().map(|&i| x[i]).sum();
            for v in 0..n {
                let flow: f64 = incoming[v].iter().map(|&(u, p)| x[u] * p).sum();
                next[v] = (1.0 - d) * t[v] + d * (flow + dangling_mass * t[v]);
            }
            let delta: f64 = x.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut x, &mut next);
            if delta < self.config.tol {
                break;
            }
        }
        let total: f64 = x.iter().sum();
        ids.into_iter().zip(x).map(|(id, w)| (id.clone(), w / total)).collect()
    }

    /// Recomputes node weights with the teleport restricted to the frozen
    /// bias set, stores and returns them.
    pub fn personalized_pagerank(&mut self) -> &HashMap<String, f64> {
        self.weights = self.pagerank(&self.bias);
        &self.weights
    }

    /// Runs an unbiased PageRank on the seed graph, freezes the top
    /// [`BIAS_SET_SIZE`] nodes as the teleport set, then recomputes weights
    /// with that bias.
    pub fn initialize_bias(&mut self) -> Result<()> {
        if self.bias_frozen {
            return Err(Error::BiasFrozen);
        }
        let unbiased = self.pagerank(&[]);
        // weights within ~1e-12 of each other count as ties and order by id
        let mut ranked: Vec<(i64, &String)> = unbiased
            .iter()
            .map(|(k, &v)| (-((v / 1e-12).round() as i64), k))
            .collect();
        ranked.sort();
        self.bias = ranked.into_iter().take(BIAS_SET_SIZE).map(|(_, k)| k.clone()).collect();
        self.bias_frozen = true;
        self.personalized_pagerank();
        Ok(())
    }

    /// Installs a previously frozen bias set (used when rebuilding a graph).
    pub fn with_bias(mut self, bias: Vec<String>) -> Self {
        self.bias = bias;
        self.bias_frozen = true;
        self
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        let nodes = self
            .adjacency
            .keys()
            .map(|id| NodeRecord {
                id: id.clone(),
                weight: self.weight(id),
            })
            .collect();
        let edges = self
            .adjacency
            .iter()
            .flat_map(|(u, n)| {
                n.iter()
                    .filter(move |(v, _)| u < *v)
                    .map(move |(v, &count)| EdgeRecord {
                        u: u.clone(),
                        v: v.clone(),
                        count,
                    })
            })
            .collect();
        GraphSnapshot {
            nodes,
            edges,
            bias: self.bias.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Source};
    use crate::entitylink::EntityAnnotation;
    use chrono::{TimeZone, Utc};

    fn doc(len: usize, ents: &[(&str, usize)]) -> AnnotatedDocument {
        let text = "x".repeat(len);
        let d = Document::new(
            "d",
            Utc.with_ymd_and_hms(2017, 1, 1, 0, 0, 0).unwrap(),
            Source::Article,
            text,
        );
        AnnotatedDocument::new(
            d,
            ents.iter()
                .map(|&(id, p)| EntityAnnotation {
                    entity_id: id.into(),
                    position: p,
                    confidence: 1.0,
                })
                .collect(),
        )
    }

    #[test]
    fn window_endpoints() {
        assert_eq!(window_length(0, 1000).unwrap(), 500.0);
        assert_eq!(window_length(1000, 1000).unwrap(), 100.0);
        assert_eq!(window_length(500, 1000).unwrap(), 300.0);
        assert!(matches!(window_length(0, 0), Err(Error::ZeroLength)));
    }

    #[test]
    fn early_pair_connects() {
        let mut g = EntityGraph::default();
        g.add_document(&doc(1000, &[]));
        assert!(g.is_empty());
        g.add_document(&doc(1000, &[("A", 0), ("B", 50)]));
        assert_eq!(g.edge("A", "B"), 1);
    }

    // tw(900 | 1000) = 500 - 400*0.9 = 140; gap 90 <= 140
    // tw(900 | 1100) = 500 - 400*900/1100 = 172.727...; gap 145 <= 172.7
    // tw(900 | 1100) excludes a gap of 180
    #[test]
    fn late_windows_hand_evaluated() {
        let mut g = EntityGraph::default();
        g.add_document(&doc(1000, &[("A", 900), ("B", 990)]));
        assert_eq!(g.edge("A", "B"), 1);
        let mut g = EntityGraph::default();
        g.add_document(&doc(1100, &[("A", 900), ("B", 1045)]));
        assert_eq!(g.edge("A", "B"), 1);
        let mut g = EntityGraph::default();
        g.add_document(&doc(1100, &[("A", 900), ("C", 1080)]));
        assert_eq!(g.edge("A", "C"), 0);
        assert!(g.is_empty());
    }

    #[test]
    fn self_pairs_skipped_and_repeats_counted() {
        let mut g = EntityGraph::default();
        g.add_document(&doc(1000, &[("A", 0), ("A", 10), ("B", 20)]));
        assert_eq!(g.edge("A", "B"), 2);
        assert_eq!(g.edge("A", "A"), 0);
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.total_edge_weight(), 2);
    }

    #[test]
    fn add_remove_inverse_and_errors() {
        let d1 = doc(1000, &[("A", 0), ("B", 50), ("C", 60)]);
        let d2 = doc(1000, &[("A", 0), ("B", 10)]);
        let mut g = EntityGraph::default();
        g.add_document(&d1);
        g.remove_document(&d1).unwrap();
        assert!(g.is_empty());

        g.add_document(&d1);
        g.add_document(&d2);
        assert_eq!(g.edge("A", "B"), 2);
        g.remove_document(&d1).unwrap();
        assert_eq!(g.edge("A", "B"), 1);
        assert!(!g.contains("C"));

        let stranger = doc(1000, &[("X", 0), ("Y", 1)]);
        let before = g.clone();
        assert!(matches!(g.remove_document(&stranger), Err(Error::EdgeMismatch(..))));
        assert_eq!(g, before);
    }

    #[test]
    fn pagerank_trivial_cases() {
        let mut g = EntityGraph::default();
        g.add_node("n");
        let w = g.personalized_pagerank();
        assert_eq!(w["n"], 1.0);

        let mut g = EntityGraph::default().with_bias(vec!["a".into(), "b".into()]);
        g.add_edge("a", "b", 3);
        let w = g.personalized_pagerank();
        assert!((w["a"] - 0.5).abs() < 1e-12 && (w["b"] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bias_initialization() {
        let mut g = EntityGraph::default();
        for (u, v) in [
            ("a", "b"),
            ("b", "c"),
            ("c", "d"),
            ("d", "e"),
            ("e", "f"),
            ("f", "g"),
            ("a", "g"),
        ] {
            g.add_edge(u, v, 1);
        }
        g.initialize_bias().unwrap();
        assert_eq!(g.bias_set().len(), 7);
        assert!(matches!(g.initialize_bias(), Err(Error::BiasFrozen)));
        let s: f64 = g.weights().values().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn bias_tie_break_by_id() {
        // star with 11 symmetric leaves: hub first, then 9 leaves by id
        let mut g = EntityGraph::default();
        for i in 0..11 {
            g.add_edge("hub", &format!("leaf{i:02}"), 1);
        }
        g.initialize_bias().unwrap();
        let bias = g.bias_set();
        assert_eq!(bias[0], "hub");
        assert_eq!(bias[9], "leaf08");
        assert!(!bias.contains(&"leaf10".to_string()));
    }

    #[test]
    fn pruned_bias_falls_back_to_uniform() {
        let mut g = EntityGraph::default().with_bias(vec!["gone".into()]);
        g.add_edge("a", "b", 1);
        g.add_edge("b", "c", 1);
        let w = g.personalized_pagerank().clone();
        // uniform teleport on a path: ends equal
        assert!((w["a"] - w["c"]).abs() < 1e-9);
    }

    #[test]
    fn snapshot_lists_each_edge_once() {
        let mut g = EntityGraph::default();
        g.add_edge("a", "b", 2);
        g.add_edge("b", "c", 1);
        g.personalized_pagerank();
        let snap = g.snapshot();
        assert_eq!(snap.nodes.len(), 3);
        assert_eq!(snap.edges.len(), 2);
        assert_eq!(
            snap.edges[0],
            EdgeRecord {
                u: "a".into(),
                v: "b".into(),
                count: 2
            }
        );
        let json = serde_json::to_string(&snap).unwrap();
        assert!(json.contains("\"bias\":[]"));
    }
}
