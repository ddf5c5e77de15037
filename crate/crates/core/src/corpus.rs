//! Document model, JSONL ingestion, chronological splitting and negative
//! sampling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of characters that make up a document title.
pub const TITLE_CHARS: usize = 140;

/// Upper bound on tweet length, in characters.
pub const MAX_TWEET_CHARS: usize = 560;

/// Padding applied on both sides of the positive time span when sampling
/// negatives.
pub const NEGATIVE_WINDOW_PAD_HOURS: i64 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Article,
    Tweet,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Article => "article",
            Source::Tweet => "tweet",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub source: Source,
    /// Flattened text; for structured articles the title is the first sentence.
    pub text: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant: Option<bool>,
}

impl Document {
    pub fn new(id: impl Into<String>, timestamp: DateTime<Utc>, source: Source, text: impl Into<String>) -> Self {
        Document {
            id: id.into(),
            timestamp,
            source,
            text: text.into(),
            hashtags: Vec::new(),
            story_label: None,
            relevant: None,
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn is_tweet(&self) -> bool {
        self.source == Source::Tweet
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.text.is_empty() {
            return Err(format!("document `{}` has empty text", self.id));
        }
        if self.source == Source::Tweet && self.char_len() > MAX_TWEET_CHARS {
            return Err(format!("tweet `{}` exceeds {} characters", self.id, MAX_TWEET_CHARS));
        }
        Ok(())
    }
}

/// Line-level mirror of [`Document`] so missing fields can be reported by name.
#[derive(Deserialize)]
struct RawDocument {
    id: Option<String>,
    timestamp: Option<DateTime<Utc>>,
    source: Option<Source>,
    text: Option<String>,
    #[serde(default)]
    hashtags: Vec<String>,
    #[serde(default)]
    story_label: Option<String>,
    #[serde(default)]
    relevant: Option<bool>,
}

impl RawDocument {
    fn into_document(self, line: usize) -> Result<Document> {
        let id = self.id.ok_or(Error::MissingField { line, field: "id" })?;
        let timestamp = self.timestamp.ok_or(Error::MissingField {
            line,
            field: "timestamp",
        })?;
        let source = self.source.ok_or(Error::MissingField { line, field: "source" })?;
        let text = self.text.ok_or(Error::MissingField { line, field: "text" })?;
        Ok(Document {
            id,
            timestamp,
            source,
            text,
            hashtags: self.hashtags,
            story_label: self.story_label,
            relevant: self.relevant,
        })
    }
}

/// Chronologically ordered documents with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStream {
    documents: Vec<Document>,
}

fn chronological(a: &Document, b: &Document) -> std::cmp::Ordering {
    a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id))
}

impl CorpusStream {
    /// Validates and sorts `documents` (timestamp, then id).
    pub fn from_documents(mut documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            doc.validate()
                .map_err(|reason| Error::InvalidDocument { line: i + 1, reason })?;
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        documents.sort_by(chronological);
        Ok(CorpusStream { documents })
    }

    pub fn empty() -> Self {
        CorpusStream::default()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn into_documents(self) -> Vec<Document> {
        self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }

    /// Documents whose id is not in `exclude`, order preserved.
    pub fn without(&self, exclude: &HashSet<&str>) -> CorpusStream {
        CorpusStream {
            documents: self
                .documents
                .iter()
                .filter(|d| !exclude.contains(d.id.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for doc in &self.documents {
            serde_json::to_writer(&mut w, doc)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_jsonl(File::create(path)?)
    }
}

impl<'a> IntoIterator for &'a CorpusStream {
    type Item = &'a Document;
    type IntoIter = std::slice::Iter<'a, Document>;

    fn into_iter(self) -> Self::IntoIter {
        self.documents.iter()
    }
}

pub fn read_jsonl<R: BufRead>(reader: R) -> Result<CorpusStream> {
    let mut documents = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let doc = raw.into_document(line_no)?;
        doc.validate()
            .map_err(|reason| Error::InvalidDocument { line: line_no, reason })?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id));
        }
        documents.push(doc);
    }
    documents.sort_by(chronological);
    Ok(CorpusStream { documents })
}

pub fn load_jsonl(path: impl AsRef<Path>) -> Result<CorpusStream> {
    read_jsonl(BufReader::new(File::open(path)?))
}

/// Splits text at [`TITLE_CHARS`] characters (Unicode scalar values).
pub fn split_title_body(text: &str) -> (&str, &str) {
    match text.char_indices().nth(TITLE_CHARS) {
        Some((byte, _)) => text.split_at(byte),
        None => (text, ""),
    }
}

/// Takes the earliest `n_pos_articles` relevant articles and `n_pos_tweets`
/// relevant tweets as seeds; everything else stays in the stream.
pub fn chronological_split(
    stream: &CorpusStream,
    n_pos_articles: usize,
    n_pos_tweets: usize,
) -> Result<(Vec<Document>, CorpusStream)> {
    let mut taken_articles = 0;
    let mut taken_tweets = 0;
    let mut seed = Vec::new();
    let mut rest = Vec::with_capacity(stream.len());
    for doc in stream {
        let wanted = doc.relevant == Some(true)
            && match doc.source {
                Source::Article => taken_articles < n_pos_articles,
                Source::Tweet => taken_tweets < n_pos_tweets,
            };
        if wanted {
            match doc.source {
                Source::Article => taken_articles += 1,
                Source::Tweet => taken_tweets += 1,
            }
            seed.push(doc.clone());
        } else {
            rest.push(doc.clone());
        }
    }
    if taken_articles < n_pos_articles {
        return Err(Error::InsufficientPositives {
            source_kind: "article",
            requested: n_pos_articles,
            available: taken_articles,
        });
    }
    if taken_tweets < n_pos_tweets {
        return Err(Error::InsufficientPositives {
            source_kind: "tweet",
            requested: n_pos_tweets,
            available: taken_tweets,
        });
    }
    Ok((seed, CorpusStream { documents: rest }))
}

/// Uniformly samples `ratio × |positives|` labeled negatives published within
/// the positives' time span padded by 24 hours. Output is in stream order.
pub fn sample_negatives(
    stream: &CorpusStream,
    positives: &[Document],
    ratio: usize,
    rng_seed: u64,
) -> Result<Vec<Document>> {
    let needed = ratio * positives.len();
    if needed == 0 {
        return Ok(Vec::new());
    }
    let pad = Duration::hours(NEGATIVE_WINDOW_PAD_HOURS);
    let lo = positives.iter().map(|d| d.timestamp).min().expect("non-empty") - pad;
    let hi = positives.iter().map(|d| d.timestamp).max().expect("non-empty") + pad;
    let positive_ids: HashSet<&str> = positives.iter().map(|d| d.id.as_str()).collect();
    let candidates: Vec<&Document> = stream
        .iter()
        .filter(|d| {
            d.relevant == Some(false) && d.timestamp >= lo && d.timestamp <= hi && !positive_ids.contains(d.id.as_str())
        })
        .collect();
    if candidates.len() < needed {
        return Err(Error::InsufficientNegatives {
            needed,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut picked = sample(&mut rng, candidates.len(), needed).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| candidates[i].clone()).collect())
}

fn normalize_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '#')
        .to_lowercase()
}

/// Removes whole-token occurrences of label-leaking keyphrases (and
/// hashtags) from `text`, case-insensitively. Remaining tokens are joined by
/// single spaces.
pub fn strip_label_tokens(text: &str, keyphrases: &[&str]) -> String {
    let phrases: Vec<Vec<String>> = keyphrases
        .iter()
        .map(|p| p.split_whitespace().map(normalize_token).collect::<Vec<_>>())
        .filter(|p| !p.is_empty())
        .collect();
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let normalized: Vec<String> = tokens.iter().map(|t| normalize_token(t)).collect();
    let mut kept = Vec::with_capacity(tokens.len());
    let mut i = 0;
    'outer: while i < tokens.len() {
        for phrase in &phrases {
            let end = i + phrase.len();
            if end <= tokens.len() && normalized[i..end] == phrase[..] {
                i = end;
                continue 'outer;
            }
        }
        kept.push(tokens[i]);
        i += 1;
    }
    kept.join(" ")
}
