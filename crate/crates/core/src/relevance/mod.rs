//! Pointwise relevance classification: training-pair generation and the
//! random-forest model.

mod forest;

use std::io::{Read, Write};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use forest::{
    load_model, save_model, train_matrix, DecisionTree, ForestConfig, Node, RandomForestModel, MODEL_VERSION,
};

use crate::corpus::{CorpusStream, Document};
use crate::entitylink::{annotate_all, AnnotatedDocument, Linker};
use crate::error::{Error, Result};
use crate::features::{FeatureVector, StoryRepresentation, FEATURE_COUNT, FEATURE_NAMES};
use crate::storygraph::GraphConfig;
use crate::text::CollectionStats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingPair {
    pub features: FeatureVector,
    pub label: bool,
}

/// How many relevant articles and tweets form one training story.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryRepSpec {
    pub n_articles: usize,
    pub n_tweets: usize,
}

impl StoryRepSpec {
    pub const fn new(n_articles: usize, n_tweets: usize) -> Self {
        StoryRepSpec { n_articles, n_tweets }
    }
}

impl std::fmt::Display for StoryRepSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({} articles, {} tweets)", self.n_articles, self.n_tweets)
    }
}

/// The 15 story sizes used to build training stories, small to large.
pub const DEFAULT_TRAINING_SPECS: [StoryRepSpec; 15] = [
    StoryRepSpec::new(1, 1),
    StoryRepSpec::new(1, 2),
    StoryRepSpec::new(2, 4),
    StoryRepSpec::new(2, 6),
    StoryRepSpec::new(3, 2),
    StoryRepSpec::new(3, 5),
    StoryRepSpec::new(4, 4),
    StoryRepSpec::new(5, 20),
    StoryRepSpec::new(10, 40),
    StoryRepSpec::new(20, 80),
    StoryRepSpec::new(30, 25),
    StoryRepSpec::new(40, 100),
    StoryRepSpec::new(50, 150),
    StoryRepSpec::new(50, 200),
    StoryRepSpec::new(100, 400),
];

fn sample_from<'a>(pool: &[&'a Document], n: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Document> {
    let mut idx = sample(rng, pool.len(), n).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i]).collect()
}

/// The fixed labeled document set every training story is paired with:
/// all relevant articles, up to twice as many relevant tweets, and
/// `neg_ratio` times as many irrelevant documents.
pub fn training_document_set(corpus: &CorpusStream, neg_ratio: usize, rng_seed: u64) -> Result<Vec<Document>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let articles: Vec<&Document> = corpus
        .iter()
        .filter(|d| d.relevant == Some(true) && !d.is_tweet())
        .collect();
    let tweets: Vec<&Document> = corpus
        .iter()
        .filter(|d| d.relevant == Some(true) && d.is_tweet())
        .collect();
    let negatives: Vec<&Document> = corpus.iter().filter(|d| d.relevant == Some(false)).collect();
    let n_tweets = tweets.len().min((2 * articles.len()).max(1));
    let mut positives = articles;
    positives.extend(sample_from(&tweets, n_tweets, &mut rng));
    if positives.is_empty() {
        return Err(Error::InsufficientPositives {
            source_kind: "any",
            requested: 1,
            available: 0,
        });
    }
    let needed = neg_ratio * positives.len();
    if needed > negatives.len() {
        return Err(Error::InsufficientNegatives {
            needed,
            available: negatives.len(),
        });
    }
    let mut set: Vec<Document> = positives.into_iter().cloned().collect();
    set.extend(sample_from(&negatives, needed, &mut rng).into_iter().cloned());
    set.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
    Ok(set)
}

/// Builds one story per spec from randomly drawn relevant documents and
/// pairs it with every document of the fixed document set.
/// Output length is `specs.len() * document_set.len()`.
pub fn generate_training_pairs(
    corpus: &CorpusStream,
    specs: &[StoryRepSpec],
    neg_ratio: usize,
    rng_seed: u64,
    linker: &dyn Linker,
) -> Result<Vec<TrainingPair>> {
    generate_training_pairs_with(corpus, specs, neg_ratio, rng_seed, linker, GraphConfig::default())
}

pub fn generate_training_pairs_with(
    corpus: &CorpusStream,
    specs: &[StoryRepSpec],
    neg_ratio: usize,
    rng_seed: u64,
    linker: &dyn Linker,
    graph_config: GraphConfig,
) -> Result<Vec<TrainingPair>> {
    let (rows, labels) = generate_feature_rows(corpus, specs, neg_ratio, rng_seed, linker, graph_config, |s, d| {
        s.extract_features(d).0.to_vec()
    })?;
    Ok(rows
        .into_iter()
        .zip(labels)
        .map(|(r, label)| TrainingPair {
            features: FeatureVector(r.try_into().expect("14 features")),
            label,
        })
        .collect())
}

/// Pair generation with an arbitrary story–document feature extractor.
pub fn generate_feature_rows<F>(
    corpus: &CorpusStream,
    specs: &[StoryRepSpec],
    neg_ratio: usize,
    rng_seed: u64,
    linker: &dyn Linker,
    graph_config: GraphConfig,
    extract: F,
) -> Result<(Vec<Vec<f64>>, Vec<bool>)>
where
    F: Fn(&StoryRepresentation, &AnnotatedDocument) -> Vec<f64> + Sync,
{
    if specs.is_empty() {
        return Err(Error::EmptyInput("story specs"));
    }
    let articles: Vec<&Document> = corpus
        .iter()
        .filter(|d| d.relevant == Some(true) && !d.is_tweet())
        .collect();
    let tweets: Vec<&Document> = corpus
        .iter()
        .filter(|d| d.relevant == Some(true) && d.is_tweet())
        .collect();
    let negatives: Vec<&Document> = corpus.iter().filter(|d| d.relevant == Some(false)).collect();
    for spec in specs {
        if spec.n_articles + spec.n_tweets == 0 {
            return Err(Error::InsufficientForSpec {
                spec: spec.to_string(),
                reason: "a story needs at least one document".into(),
            });
        }
        let short = |kind: &str, want: usize, have: usize| Error::InsufficientForSpec {
            spec: spec.to_string(),
            reason: format!("needs {want} relevant {kind}, corpus has {have}"),
        };
        if spec.n_articles > articles.len() {
            return Err(short("articles", spec.n_articles, articles.len()));
        }
        if spec.n_tweets > tweets.len() {
            return Err(short("tweets", spec.n_tweets, tweets.len()));
        }
    }

    let doc_set = training_document_set(corpus, neg_ratio, rng_seed)?;
    let stats = CollectionStats::from_texts(doc_set.iter().map(|d| d.text.as_str()));
    log::info!("annotating {} training documents", doc_set.len());
    let annotated_set = annotate_all(&doc_set, linker)?;
    let labels: Vec<bool> = annotated_set.iter().map(|d| d.doc.relevant == Some(true)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.wrapping_add(1));
    let mut rows = Vec::with_capacity(specs.len() * doc_set.len());
    let mut all_labels = Vec::with_capacity(specs.len() * doc_set.len());
    for spec in specs {
        let mut seeds = sample_from(&articles, spec.n_articles, &mut rng);
        seeds.extend(sample_from(&tweets, spec.n_tweets, &mut rng));
        let n_neg = (neg_ratio * seeds.len()).min(negatives.len());
        let seed_neg: Vec<Document> = sample_from(&negatives, n_neg, &mut rng).into_iter().cloned().collect();
        let seeds: Vec<Document> = seeds.into_iter().cloned().collect();
        let story =
            StoryRepresentation::from_seeds(annotate_all(&seeds, linker)?, &seed_neg, stats.clone(), graph_config)?;
        log::debug!(
            "story {spec}: {} nodes, {} edges",
            story.graph().node_count(),
            story.graph().edge_count()
        );
        rows.par_extend(annotated_set.par_iter().map(|d| extract(&story, d)));
        all_labels.extend_from_slice(&labels);
    }
    Ok((rows, all_labels))
}

pub fn train_forest(pairs: &[TrainingPair], config: &ForestConfig) -> Result<RandomForestModel> {
    let x: Vec<Vec<f64>> = pairs.iter().map(|p| p.features.0.to_vec()).collect();
    let y: Vec<bool> = pairs.iter().map(|p| p.label).collect();
    train_matrix(&x, &y, config)
}

pub fn predict_probability(model: &RandomForestModel, fv: &FeatureVector) -> f64 {
    model.predict_probability(fv.as_slice())
}

/// Writes pairs as CSV with one column per feature plus `label` (0/1).
pub fn write_pairs_csv<W: Write>(w: W, pairs: &[TrainingPair]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push("label");
    out.write_record(&header).map_err(csv_err)?;
    for p in pairs {
        let mut rec: Vec<String> = p.features.0.iter().map(|v| v.to_string()).collect();
        rec.push(if p.label { "1" } else { "0" }.into());
        out.write_record(&rec).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads pairs written by [`write_pairs_csv`]; `label` accepts 0/1 or true/false.
pub fn read_pairs_csv<R: Read>(r: R) -> Result<Vec<TrainingPair>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut pairs = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != FEATURE_COUNT + 1 {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", FEATURE_COUNT + 1, rec.len()),
            });
        }
        let mut f = [0.0; FEATURE_COUNT];
        for (k, v) in f.iter_mut().enumerate() {
            *v = rec[k].trim().parse().map_err(|e| Error::Parse {
                line,
                message: format!("column {}: {e}", FEATURE_NAMES[k]),
            })?;
        }
        let label = match rec[FEATURE_COUNT].trim() {
            "1" | "true" => true,
            "0" | "false" => false,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("bad label `{other}`"),
                })
            }
        };
        pairs.push(TrainingPair {
            features: FeatureVector(f),
            label,
        });
    }
    Ok(pairs)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse {
        line: e.position().map_or(0, |p| p.line() as usize),
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Source;
    use crate::entitylink::SyntheticLinker;
    use chrono::{Duration, TimeZone, Utc};

    fn corpus(n_art: usize, n_tw: usize, n_neg: usize) -> CorpusStream {
        let t0 = Utc.with_ymd_and_hms(2016, 2, 1, 0, 0, 0).unwrap();
        let mut docs = Vec::new();
        let mut k = 0;
        let mut push = |source, relevant: bool, text: &str| {
            let mut d = Document::new(format!("d{k:04}"), t0 + Duration::minutes(k), source, text);
            d.relevant = Some(relevant);
            docs.push(d);
            k += 1;
        };
        for _ in 0..n_art {
            push(
                Source::Article,
                true,
                "Enda Kenny and Fine Gael campaign in Mayo before the Dublin vote",
            );
        }
        for _ in 0..n_tw {
            push(Source::Tweet, true, "Fine Gael rally in Mayo");
        }
        for _ in 0..n_neg {
            push(
                Source::Article,
                false,
                "Munster beat Leinster at Thomond Park on Saturday",
            );
        }
        CorpusStream::from_documents(docs).unwrap()
    }

    #[test]
    fn pair_count_is_specs_times_document_set() {
        let c = corpus(3, 10, 200);
        let specs = [StoryRepSpec::new(1, 1), StoryRepSpec::new(2, 3)];
        let pairs = generate_training_pairs(&c, &specs, 10, 5, &SyntheticLinker).unwrap();
        // 3 articles + 6 tweets, times 11
        assert_eq!(pairs.len(), 2 * 99);
        assert_eq!(pairs.iter().filter(|p| p.label).count(), 2 * 9);
        let again = generate_training_pairs(&c, &specs, 10, 5, &SyntheticLinker).unwrap();
        assert_eq!(pairs, again);
    }

    #[test]
    fn spec_larger_than_corpus_is_named() {
        let c = corpus(3, 10, 200);
        let err = generate_training_pairs(&c, &[StoryRepSpec::new(1, 50)], 10, 5, &SyntheticLinker).unwrap_err();
        match err {
            Error::InsufficientForSpec { spec, .. } => assert!(spec.contains("50 tweets")),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn csv_round_trip() {
        let pairs = vec![
            TrainingPair {
                features: FeatureVector([0.5; FEATURE_COUNT]),
                label: true,
            },
            TrainingPair {
                features: FeatureVector([1.0 / 3.0; FEATURE_COUNT]),
                label: false,
            },
        ];
        let mut buf = Vec::new();
        write_pairs_csv(&mut buf, &pairs).unwrap();
        assert_eq!(read_pairs_csv(buf.as_slice()).unwrap(), pairs);
        assert!(read_pairs_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn training_specs_table_totals() {
        assert_eq!(DEFAULT_TRAINING_SPECS.len(), 15);
        assert_eq!(DEFAULT_TRAINING_SPECS[14], StoryRepSpec::new(100, 400));
        // 29.7k documents paired with 15 stories
        assert_eq!(29_700 * DEFAULT_TRAINING_SPECS.len(), 445_500);
    }
}
