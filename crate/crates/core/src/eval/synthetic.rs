//! Labeled synthetic news streams with a matching gazetteer.
//!
//! Each story owns a Zipf-weighted pool of named entities and a small topic
//! vocabulary. Stories after the first borrow part of their pool from the
//! tail of story 0, which makes them plausible confounders for it. Noise
//! documents draw from their own entity pool and general vocabulary.

use std::collections::HashSet;

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusStream, Document, Source};
use crate::entitylink::{is_lexicon_noun, is_stopword, GazetteerEntry, GazetteerLinker};
use crate::error::{Error, Result};

const NOUNS: &str = include_str!("../entitylink/data/nouns.txt");
const ZIPF_EXPONENT: f64 = 1.1;
const NOISE_ENTITIES: usize = 400;
const TOPIC_WORDS: usize = 25;
const GENERAL_WORDS: usize = 80;
/// Share of entities whose gazetteer prior is below the link threshold.
const LOW_CONFIDENCE_SHARE: f64 = 0.15;

const VERBS: &[&str] = &[
    "met",
    "visited",
    "criticised",
    "backed",
    "warned",
    "announced",
    "rejected",
    "praised",
    "questioned",
    "joined",
    "addressed",
    "confirmed",
    "opposed",
    "welcomed",
    "defended",
    "urged",
    "blamed",
    "thanked",
    "challenged",
];
const PREPS: &[&str] = &["in", "at", "with", "after", "before", "over", "near", "alongside"];
const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ren", "dar", "vel", "to", "sa", "quin", "bor", "ela", "nor", "fi", "gan", "hul", "ise", "jor",
    "kem", "lan", "mur", "nes", "osk", "pra", "ril", "sun", "tav", "ul", "vor", "wen", "yas", "zel", "cor", "bri",
];
const HASHTAG_SUFFIXES: &[&str] = &["live", "news", "now", "update"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_stories: usize,
    pub docs_per_story: usize,
    pub entities_per_story: usize,
    pub noise_docs: usize,
    /// Fraction of each later story's entity pool taken from story 0.
    pub overlap_fraction: f64,
    pub tweet_fraction: f64,
    /// Give each story its own topic words; when false, every story and the
    /// noise share one vocabulary and only entities tell them apart.
    pub topic_vocabulary: bool,
    pub days: i64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_stories: 3,
            docs_per_story: 455,
            entities_per_story: 40,
            noise_docs: 3635,
            overlap_fraction: 0.3,
            tweet_fraction: 0.7,
            topic_vocabulary: true,
            days: 30,
            rng_seed: 1,
        }
    }
}

impl SyntheticSpec {
    /// Stream of `total` documents with `n_stories` stories where the target
    /// story has `1 / (ratio + 1)` of the documents.
    pub fn with_ratio(total: usize, n_stories: usize, ratio: usize, rng_seed: u64) -> Self {
        let per_story = total / (ratio + 1);
        SyntheticSpec {
            n_stories,
            docs_per_story: per_story,
            noise_docs: total.saturating_sub(per_story * n_stories),
            rng_seed,
            ..Default::default()
        }
    }

    pub fn total_docs(&self) -> usize {
        self.n_stories * self.docs_per_story + self.noise_docs
    }

    fn validate(&self) -> Result<()> {
        if self.n_stories == 0 || self.entities_per_story < 2 {
            return Err(Error::InvalidArgument("need ≥1 story with ≥2 entities".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_fraction) || !(0.0..=1.0).contains(&self.tweet_fraction) {
            return Err(Error::InvalidArgument("fractions must lie in [0, 1]".into()));
        }
        if self.days <= 0 {
            return Err(Error::InvalidArgument("days must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Labeled stream; `relevant` refers to story 0.
    pub stream: CorpusStream,
    pub gazetteer: Vec<GazetteerEntry>,
    /// Entity surfaces per story, most frequent first.
    pub story_entities: Vec<Vec<String>>,
}

impl SyntheticCorpus {
    pub fn linker(&self) -> GazetteerLinker {
        GazetteerLinker::from_entries(self.gazetteer.iter().cloned())
    }

    pub fn story_label(i: usize) -> String {
        format!("story-{i}")
    }

    /// Same documents with `relevant` set for story `target`.
    pub fn relabeled(&self, target: usize) -> CorpusStream {
        let label = Self::story_label(target);
        let docs = self
            .stream
            .iter()
            .map(|d| {
                let mut d = d.clone();
                d.relevant = Some(d.story_label.as_deref() == Some(label.as_str()));
                d
            })
            .collect();
        CorpusStream::from_documents(docs).expect("ids stay unique")
    }
}

struct Pool {
    names: Vec<String>,
    weights: WeightedIndex<f64>,
    topic: Vec<&'static str>,
    hashtags: Vec<String>,
}

impl Pool {
    fn new(names: Vec<String>, topic: Vec<&'static str>, hashtags: Vec<String>) -> Self {
        let w: Vec<f64> = (1..=names.len()).map(|r| (r as f64).powf(-ZIPF_EXPONENT)).collect();
        Pool {
            names,
            weights: WeightedIndex::new(w).expect("non-empty pool"),
            topic,
            hashtags,
        }
    }

    fn entity(&self, rng: &mut ChaCha8Rng) -> &str {
        &self.names[self.weights.sample(rng)]
    }
}

fn name_word(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=3);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("syllables")).collect();
    w[..1].make_ascii_uppercase();
    w
}

fn fresh_name(rng: &mut ChaCha8Rng, used: &mut HashSet<String>) -> String {
    loop {
        let name = if rng.gen_bool(0.7) {
            format!("{} {}", name_word(rng), name_word(rng))
        } else {
            name_word(rng)
        };
        let clean = name.split(' ').all(|w| {
            let l = w.to_lowercase();
            !is_lexicon_noun(&l) && !is_stopword(&l)
        });
        if clean && used.insert(name.to_lowercase()) {
            return name;
        }
    }
}

struct Writer<'a> {
    rng: ChaCha8Rng,
    general: &'a [&'static str],
}

impl Writer<'_> {
    fn noun(&mut self, pool: &Pool) -> &'static str {
        if !pool.topic.is_empty() && self.rng.gen_bool(0.7) {
            pool.topic.choose(&mut self.rng).expect("topic")
        } else {
            self.general.choose(&mut self.rng).expect("general")
        }
    }

    fn sentence(&mut self, pool: &Pool, noise: &Pool) -> String {
        let ent = |w: &mut Self| {
            if w.rng.gen_bool(0.08) {
                noise.entity(&mut w.rng).to_string()
            } else {
                pool.entity(&mut w.rng).to_string()
            }
        };
        let e1 = ent(self);
        let e2 = ent(self);
        let verb = VERBS.choose(&mut self.rng).expect("verbs");
        let prep = PREPS.choose(&mut self.rng).expect("preps");
        let n1 = self.noun(pool);
        let n2 = self.noun(pool);
        match self.rng.gen_range(0..5) {
            0 => format!("{e1} {verb} the {n1} {prep} {e2}."),
            1 => format!("{e1} {verb} {e2} over the {n1} and the {n2}."),
            2 => format!("The {n1} {prep} {e1} was {verb} by {e2}."),
            3 => format!("Reports on the {n1} {verb} {e1}, while {e2} stayed quiet."),
            _ => format!("{e1} said the {n1} would affect the {n2}."),
        }
    }

    fn article(&mut self, pool: &Pool, noise: &Pool) -> String {
        let mut title = self.sentence(pool, noise);
        while title.chars().count() > 120 {
            title = self.sentence(pool, noise);
        }
        let n = self.rng.gen_range(4..=10);
        let mut text = title;
        for _ in 0..n {
            text.push(' ');
            text.push_str(&self.sentence(pool, noise));
        }
        text
    }

    fn tweet(&mut self, pool: &Pool, noise: &Pool) -> (String, Vec<String>) {
        let mut text = self.sentence(pool, noise);
        if self.rng.gen_bool(0.3) {
            text.push(' ');
            text.push_str(&format!("Huge {} today", self.noun(pool)));
        }
        let mut tags = Vec::new();
        if self.rng.gen_bool(0.6) {
            let tag = pool.hashtags.choose(&mut self.rng).expect("hashtags").clone();
            text.push_str(&format!(" #{tag}"));
            tags.push(format!("#{tag}"));
        }
        (text, tags)
    }
}

fn epoch() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 2, 1, 0, 0, 0).unwrap()
}

/// (seconds offset, source, text, hashtags, story index) before ids are assigned.
type RawDoc = (i64, Source, String, Vec<String>, Option<usize>);

/// Deterministic in `spec.rng_seed`.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut nouns: Vec<&'static str> = NOUNS.split_whitespace().collect();
    nouns.shuffle(&mut rng);
    let mut take = |n: usize| -> Vec<&'static str> {
        let k = n.min(nouns.len());
        nouns.drain(..k).collect()
    };
    let general = take(GENERAL_WORDS);

    let mut used = HashSet::new();
    let mut pools: Vec<Pool> = Vec::with_capacity(spec.n_stories);
    let mut story_entities: Vec<Vec<String>> = Vec::new();
    let e = spec.entities_per_story;
    for i in 0..spec.n_stories {
        let mut names: Vec<String> = if i == 0 {
            (0..e).map(|_| fresh_name(&mut rng, &mut used)).collect()
        } else {
            let borrowed = ((spec.overlap_fraction * e as f64).round() as usize).min(e);
            let mut v: Vec<String> = story_entities[0][e - borrowed..].to_vec();
            v.extend((0..e - borrowed).map(|_| fresh_name(&mut rng, &mut used)));
            v.shuffle(&mut rng);
            v
        };
        if i == 0 {
            names.shuffle(&mut rng);
        }
        let topic = if spec.topic_vocabulary {
            take(TOPIC_WORDS)
        } else {
            Vec::new()
        };
        let stem = name_word(&mut rng).to_lowercase();
        let hashtags = HASHTAG_SUFFIXES.iter().map(|s| format!("{stem}{s}")).collect();
        story_entities.push(names.clone());
        pools.push(Pool::new(names, topic, hashtags));
    }
    let noise_names: Vec<String> = (0..NOISE_ENTITIES).map(|_| fresh_name(&mut rng, &mut used)).collect();
    let noise_topic = if spec.topic_vocabulary {
        take(4 * TOPIC_WORDS)
    } else {
        Vec::new()
    };
    let noise = Pool::new(
        noise_names.clone(),
        noise_topic,
        vec!["breaking".into(), "ireland".into(), "sport".into(), "weather".into()],
    );

    let mut gazetteer: Vec<GazetteerEntry> = Vec::new();
    let mut all_names: Vec<&String> = story_entities.iter().flatten().chain(&noise_names).collect();
    all_names.sort();
    all_names.dedup();
    for (k, name) in all_names.iter().enumerate() {
        let conf = if rng.gen_bool(LOW_CONFIDENCE_SHARE) {
            rng.gen_range(0.2..0.49)
        } else {
            rng.gen_range(0.6..0.99)
        };
        gazetteer.push(GazetteerEntry::new(
            name.as_str(),
            format!("Q{}", 1000 + k),
            (conf * 100.0f64).round() / 100.0,
        ));
    }

    let mut w = Writer {
        rng: ChaCha8Rng::seed_from_u64(spec.rng_seed.wrapping_add(0x5eed)),
        general: &general,
    };
    let span = spec.days * 24 * 3600;
    let mut raw: Vec<RawDoc> = Vec::new();
    let mut emit = |w: &mut Writer, pool: &Pool, label: Option<usize>| {
        let offset = w.rng.gen_range(0..span);
        if w.rng.gen_bool(spec.tweet_fraction) {
            let (text, tags) = w.tweet(pool, &noise);
            raw.push((offset, Source::Tweet, text, tags, label));
        } else {
            let text = w.article(pool, &noise);
            raw.push((offset, Source::Article, text, Vec::new(), label));
        }
    };
    for (i, pool) in pools.iter().enumerate() {
        for _ in 0..spec.docs_per_story {
            emit(&mut w, pool, Some(i));
        }
    }
    for _ in 0..spec.noise_docs {
        emit(&mut w, &noise, None);
    }
    raw.sort_by_key(|r| r.0);
    let docs: Vec<Document> = raw
        .into_iter()
        .enumerate()
        .map(|(k, (offset, source, text, hashtags, label))| {
            let mut d = Document::new(format!("doc{k:06}"), epoch() + Duration::seconds(offset), source, text);
            d.hashtags = hashtags;
            d.story_label = label.map(SyntheticCorpus::story_label);
            d.relevant = Some(label == Some(0));
            d
        })
        .collect();
    Ok(SyntheticCorpus {
        stream: CorpusStream::from_documents(docs)?,
        gazetteer,
        story_entities,
    })
}
