//! Mention extraction and entity disambiguation.
//!
//! A [`Linker`] maps mentions to knowledge-base candidates. Anything it
//! cannot map with confidence ≥ [`MIN_LINK_CONFIDENCE`] gets a synthetic
//! `SYN:` id so that the story graph never depends entirely on linker
//! quality.

mod gazetteer;
mod grouping;
mod remote;
mod tagger;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};

pub use gazetteer::{write_gazetteer_tsv, GazetteerEntry, GazetteerLinker};
pub use grouping::{annotate_tweet_batch, group_tweets_by_hashtag, TweetGroup, DEFAULT_GROUP_WINDOW};
pub use remote::{TagmeConfig, TagmeLinker, TAGME_TOKEN_ENV, TAGME_URL_ENV};
pub use tagger::{extract_mentions, is_lexicon_noun, is_stopword, Mention, FREQUENT_NOUN_MIN};

pub const MIN_LINK_CONFIDENCE: f64 = 0.5;
pub const WIKI_PREFIX: &str = "WD:";
pub const SYNTHETIC_PREFIX: &str = "SYN:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityAnnotation {
    pub entity_id: String,
    /// Char offset of the mention start.
    pub position: usize,
    pub confidence: f64,
}

impl EntityAnnotation {
    pub fn is_synthetic(&self) -> bool {
        self.entity_id.starts_with(SYNTHETIC_PREFIX)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc: Document,
    /// Sorted by position.
    pub annotations: Vec<EntityAnnotation>,
    /// Whether a revisit cycle may still re-score this document.
    pub available: bool,
}

impl AnnotatedDocument {
    pub fn new(doc: Document, mut annotations: Vec<EntityAnnotation>) -> Self {
        annotations.sort_by_key(|a| a.position);
        AnnotatedDocument {
            doc,
            annotations,
            available: false,
        }
    }

    pub fn id(&self) -> &str {
        &self.doc.id
    }

    pub fn text_len(&self) -> usize {
        self.doc.char_len()
    }
}

/// A candidate knowledge-base entity for one mention.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub entity_id: String,
    pub confidence: f64,
}

/// Entity disambiguation backend. Returns one slot per input mention.
pub trait Linker: Send + Sync {
    fn resolve(&self, mentions: &[Mention], context: &str) -> Result<Vec<Option<Candidate>>>;

    fn name(&self) -> &str;
}

/// Linker that never finds a knowledge-base match.
#[derive(Debug, Clone, Copy, Default)]
pub struct SyntheticLinker;

impl Linker for SyntheticLinker {
    fn resolve(&self, mentions: &[Mention], _context: &str) -> Result<Vec<Option<Candidate>>> {
        Ok(vec![None; mentions.len()])
    }

    fn name(&self) -> &str {
        "synthetic"
    }
}

/// Lowercases and collapses internal whitespace.
pub fn normalize_surface(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn assign_synthetic_id(surface: &str) -> Result<String> {
    let norm = normalize_surface(surface);
    if norm.is_empty() {
        return Err(Error::EmptySurface);
    }
    Ok(format!("{SYNTHETIC_PREFIX}{norm}"))
}

fn synthetic_annotations(mentions: &[Mention]) -> Result<Vec<EntityAnnotation>> {
    mentions
        .iter()
        .map(|m| {
            Ok(EntityAnnotation {
                entity_id: assign_synthetic_id(&m.surface)?,
                position: m.start,
                confidence: 0.0,
            })
        })
        .collect()
}

/// One annotation per mention. Linker failures fall back to synthetic ids
/// for the whole document.
pub fn link(mentions: &[Mention], context: &str, linker: &dyn Linker) -> Result<Vec<EntityAnnotation>> {
    let resolved = match linker.resolve(mentions, context) {
        Ok(r) if r.len() == mentions.len() => r,
        Ok(r) => {
            log::warn!(
                "linker `{}` returned {} slots for {} mentions; using synthetic ids",
                linker.name(),
                r.len(),
                mentions.len()
            );
            return synthetic_annotations(mentions);
        }
        Err(e) => {
            log::warn!("linker `{}` failed ({e}); using synthetic ids", linker.name());
            return synthetic_annotations(mentions);
        }
    };
    mentions
        .iter()
        .zip(resolved)
        .map(|(m, cand)| match cand {
            Some(c) if c.confidence >= MIN_LINK_CONFIDENCE => Ok(EntityAnnotation {
                entity_id: c.entity_id,
                position: m.start,
                confidence: c.confidence.clamp(0.0, 1.0),
            }),
            _ => Ok(EntityAnnotation {
                entity_id: assign_synthetic_id(&m.surface)?,
                position: m.start,
                confidence: 0.0,
            }),
        })
        .collect()
}

pub fn annotate_document(doc: &Document, linker: &dyn Linker) -> Result<AnnotatedDocument> {
    let mentions = extract_mentions(&doc.text);
    let annotations = link(&mentions, &doc.text, linker)?;
    Ok(AnnotatedDocument::new(doc.clone(), annotations))
}

/// Annotates a mixed batch: articles one by one, tweets with hashtag grouping.
/// Output order matches input order.
pub fn annotate_all(docs: &[Document], linker: &dyn Linker) -> Result<Vec<AnnotatedDocument>> {
    use rayon::prelude::*;
    let (tweet_idx, article_idx): (Vec<usize>, Vec<usize>) = (0..docs.len()).partition(|&i| docs[i].is_tweet());
    let articles: Vec<AnnotatedDocument> = article_idx
        .par_iter()
        .map(|&i| annotate_document(&docs[i], linker))
        .collect::<Result<_>>()?;
    let tweets: Vec<Document> = tweet_idx.iter().map(|&i| docs[i].clone()).collect();
    let tweets = annotate_tweet_batch(&tweets, linker, DEFAULT_GROUP_WINDOW)?;
    let mut out: Vec<Option<AnnotatedDocument>> = vec![None; docs.len()];
    for (i, d) in article_idx.into_iter().zip(articles) {
        out[i] = Some(d);
    }
    for (i, d) in tweet_idx.into_iter().zip(tweets) {
        out[i] = Some(d);
    }
    Ok(out.into_iter().map(|d| d.expect("annotated")).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use chrono::{TimeZone, Utc};

    struct Failing;
    impl Linker for Failing {
        fn resolve(&self, _: &[Mention], _: &str) -> Result<Vec<Option<Candidate>>> {
            Err(Error::Transport("connection refused".into()))
        }
        fn name(&self) -> &str {
            "failing"
        }
    }

    fn gazetteer() -> GazetteerLinker {
        GazetteerLinker::from_entries(vec![
            GazetteerEntry::new("Dublin", "WD:8504", 0.9),
            GazetteerEntry::new("Debbie", "WD:111", 0.3),
        ])
    }

    fn mention(surface: &str, start: usize) -> Mention {
        Mention {
            surface: surface.into(),
            start,
            end: start + surface.chars().count(),
        }
    }

    #[test]
    fn confident_match_keeps_kb_id() {
        let ann = link(&[mention("Dublin", 4)], "in  Dublin", &gazetteer()).unwrap();
        assert_eq!(
            ann,
            vec![EntityAnnotation {
                entity_id: "WD:8504".into(),
                position: 4,
                confidence: 0.9
            }]
        );
    }

    #[test]
    fn low_confidence_and_unknown_become_synthetic() {
        let ms = [mention("Debbie", 0), mention("Foobarium", 10)];
        let ann = link(&ms, "Debbie hit Foobarium", &gazetteer()).unwrap();
        assert_eq!(ann[0].entity_id, "SYN:debbie");
        assert_eq!(ann[0].confidence, 0.0);
        assert_eq!(ann[1].entity_id, "SYN:foobarium");
    }

    #[test]
    fn synthetic_ids() {
        assert_eq!(assign_synthetic_id("Irish  Water").unwrap(), "SYN:irish water");
        assert_eq!(
            assign_synthetic_id("DUBLIN").unwrap(),
            assign_synthetic_id("dublin").unwrap()
        );
        assert!(matches!(assign_synthetic_id(""), Err(Error::EmptySurface)));
        assert!(matches!(assign_synthetic_id("  "), Err(Error::EmptySurface)));
    }

    #[test]
    fn transport_failure_falls_back() {
        let ann = link(&[mention("Dublin", 0)], "Dublin", &Failing).unwrap();
        assert_eq!(ann[0].entity_id, "SYN:dublin");
    }

    #[test]
    fn annotate_is_idempotent_and_sorted() {
        let doc = Document::new(
            "a1",
            Utc.with_ymd_and_hms(2017, 1, 1, 0, 0, 0).unwrap(),
            Source::Article,
            "Police met protesters in Dublin. The council issued a statement on water.",
        );
        let a = annotate_document(&doc, &gazetteer()).unwrap();
        let b = annotate_document(&doc, &gazetteer()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.annotations.len(), 6);
        assert!(a.annotations.windows(2).all(|w| w[0].position <= w[1].position));
        assert!(a.annotations.iter().any(|x| x.entity_id == "WD:8504"));

        let empty = Document::new("e", doc.timestamp, Source::Tweet, "so it goes");
        assert!(annotate_document(&empty, &gazetteer()).unwrap().annotations.is_empty());
    }
}
