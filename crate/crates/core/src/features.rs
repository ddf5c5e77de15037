//! Story representation and the 14 story–document relevance features.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, TITLE_CHARS};
use crate::entitylink::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::storygraph::{EntityGraph, GraphConfig};
use crate::text::{build_tfidf_profile, term_counts, terms, CollectionStats, TfIdfProfile};

pub const FEATURE_COUNT: usize = 14;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "story_docs",
    "graph_nodes",
    "doc_chars",
    "doc_entities",
    "overlap_title",
    "overlap_body",
    "overlap",
    "avg_overlap",
    "cos_relevant",
    "cos_irrelevant",
    "simi_title",
    "simi_body",
    "simi",
    "avg_simi",
];

/// Feature values in table order; `f(1)` is the first feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; FEATURE_COUNT]);

impl FeatureVector {
    /// 1-based access matching the feature numbering.
    pub fn f(&self, n: usize) -> f64 {
        self.0[n - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Copy with every feature whose 1-based number is not in `keep` set to 0.
    pub fn masked(&self, keep: &[usize]) -> FeatureVector {
        let mut out = [0.0; FEATURE_COUNT];
        for &n in keep {
            out[n - 1] = self.0[n - 1];
        }
        FeatureVector(out)
    }
}

/// The evolving story: story docs, entity graph, tf-idf profiles and the
/// running collection statistics used as idf source.
#[derive(Debug, Clone)]
pub struct StoryRepresentation {
    story_docs: Vec<AnnotatedDocument>,
    graph: EntityGraph,
    stats: CollectionStats,
    story_terms: HashMap<String, u32>,
    relevant_profile: TfIdfProfile,
    irrelevant_profile: TfIdfProfile,
    entity_counts: HashMap<String, usize>,
    seed_ids: Vec<String>,
}

impl StoryRepresentation {
    /// Builds the initial story from annotated seed positives. `seed_negatives`
    /// only feed the frozen irrelevant profile. Seeds are added to `stats`
    /// before profiles are built.
    pub fn from_seeds(
        seeds: Vec<AnnotatedDocument>,
        seed_negatives: &[Document],
        mut stats: CollectionStats,
        config: GraphConfig,
    ) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::EmptyInput("seed documents"));
        }
        for s in &seeds {
            stats.observe(&s.doc.text);
        }
        for n in seed_negatives {
            stats.observe(&n.text);
        }
        let irrelevant_profile = build_tfidf_profile(seed_negatives, &stats);
        let mut story = StoryRepresentation {
            story_docs: Vec::new(),
            graph: EntityGraph::new(config),
            stats,
            story_terms: HashMap::new(),
            relevant_profile: TfIdfProfile::default(),
            irrelevant_profile,
            entity_counts: HashMap::new(),
            seed_ids: seeds.iter().map(|d| d.id().to_string()).collect(),
        };
        for mut s in seeds {
            s.available = false;
            story.add_story_doc(s);
        }
        story.graph.initialize_bias()?;
        story.rebuild_relevant_profile();
        Ok(story)
    }

    pub fn story_docs(&self) -> &[AnnotatedDocument] {
        &self.story_docs
    }

    pub fn story_doc_ids(&self) -> Vec<String> {
        self.story_docs.iter().map(|d| d.id().to_string()).collect()
    }

    pub fn contains_doc(&self, id: &str) -> bool {
        self.story_docs.iter().any(|d| d.id() == id)
    }

    pub fn seed_ids(&self) -> &[String] {
        &self.seed_ids
    }

    pub fn graph(&self) -> &EntityGraph {
        &self.graph
    }

    pub fn stats(&self) -> &CollectionStats {
        &self.stats
    }

    pub fn observe(&mut self, doc: &Document) {
        self.stats.observe(&doc.text);
    }

    /// Term counts over the concatenated story docs.
    pub fn story_terms(&self) -> &HashMap<String, u32> {
        &self.story_terms
    }

    pub fn relevant_profile(&self) -> &TfIdfProfile {
        &self.relevant_profile
    }

    pub fn irrelevant_profile(&self) -> &TfIdfProfile {
        &self.irrelevant_profile
    }

    pub fn has_entity(&self, id: &str) -> bool {
        self.entity_counts.contains_key(id)
    }

    pub fn story_entity_set(&self) -> HashSet<&str> {
        self.entity_counts.keys().map(String::as_str).collect()
    }

    /// Adds a document to the story docs and its co-occurrences to the graph.
    /// Node weights and the relevant profile are stale until [`refresh`](Self::refresh).
    pub fn add_story_doc(&mut self, doc: AnnotatedDocument) {
        if self.contains_doc(doc.id()) {
            return;
        }
        self.graph.add_document(&doc);
        for a in &doc.annotations {
            *self.entity_counts.entry(a.entity_id.clone()).or_insert(0) += 1;
        }
        for t in terms(&doc.doc.text) {
            *self.story_terms.entry(t).or_insert(0) += 1;
        }
        self.story_docs.push(doc);
    }

    pub fn remove_story_doc(&mut self, id: &str) -> Result<AnnotatedDocument> {
        let idx = self
            .story_docs
            .iter()
            .position(|d| d.id() == id)
            .ok_or_else(|| Error::InvalidArgument(format!("`{id}` is not a story doc")))?;
        self.graph.remove_document(&self.story_docs[idx])?;
        let doc = self.story_docs.remove(idx);
        for a in &doc.annotations {
            if let Some(c) = self.entity_counts.get_mut(&a.entity_id) {
                *c -= 1;
                if *c == 0 {
                    self.entity_counts.remove(&a.entity_id);
                }
            }
        }
        for t in terms(&doc.doc.text) {
            if let Some(c) = self.story_terms.get_mut(&t) {
                *c -= 1;
                if *c == 0 {
                    self.story_terms.remove(&t);
                }
            }
        }
        Ok(doc)
    }

    /// Keeps only story docs whose id is in `keep` and rebuilds the graph
    /// from them. Seeds are always kept. Call [`refresh`](Self::refresh) after.
    pub fn reset_to(&mut self, keep: &HashSet<String>) {
        let docs = std::mem::take(&mut self.story_docs);
        let bias = self.graph.bias_set().to_vec();
        self.graph = EntityGraph::new(*self.graph.config()).with_bias(bias);
        self.entity_counts.clear();
        self.story_terms.clear();
        for d in docs {
            if keep.contains(d.id()) || self.seed_ids.iter().any(|s| s == d.id()) {
                self.add_story_doc(d);
            }
        }
    }

    /// Recomputes node weights and the relevant tf-idf profile once after a
    /// batch of story mutations.
    pub fn refresh(&mut self) {
        self.graph.personalized_pagerank();
        self.rebuild_relevant_profile();
    }

    fn rebuild_relevant_profile(&mut self) {
        self.relevant_profile = TfIdfProfile::from_counts(&self.story_terms, &self.stats);
    }

    /// Computes the 14 features for `doc` against the current story.
    pub fn extract_features(&self, doc: &AnnotatedDocument) -> FeatureVector {
        let n_entities = doc.annotations.len() as f64;
        let mut overlap = [0.0f64; 2];
        let mut simi = [0.0f64; 2];
        for a in &doc.annotations {
            if !self.has_entity(&a.entity_id) {
                continue;
            }
            let part = usize::from(a.position >= TITLE_CHARS);
            overlap[part] += 1.0;
            simi[part] += self.graph.weight(&a.entity_id);
        }
        let overlap_total = overlap[0] + overlap[1];
        let simi_total = simi[0] + simi[1];
        let (avg_overlap, avg_simi) = if n_entities > 0.0 {
            (overlap_total / n_entities, simi_total / n_entities)
        } else {
            (0.0, 0.0)
        };
        let profile = TfIdfProfile::from_counts(&term_counts(&doc.doc.text), &self.stats);
        FeatureVector([
            self.story_docs.len() as f64,
            self.graph.node_count() as f64,
            doc.text_len() as f64,
            n_entities,
            overlap[0],
            overlap[1],
            overlap_total,
            avg_overlap,
            self.relevant_profile.cosine(&profile),
            self.irrelevant_profile.cosine(&profile),
            simi[0],
            simi[1],
            simi_total,
            avg_simi,
        ])
    }
}

/// Free-function form of [`StoryRepresentation::extract_features`].
pub fn extract_features(story: &StoryRepresentation, doc: &AnnotatedDocument) -> FeatureVector {
    story.extract_features(doc)
}
