//! Hashtag-grouped disambiguation of tweets.
//!
//! Tweets sharing a hashtag within the same aligned time bucket are linked as
//! one document so they can act as context for each other.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, Utc};
use rayon::prelude::*;

use super::{extract_mentions, link, AnnotatedDocument, EntityAnnotation, Linker};
use crate::corpus::Document;
use crate::error::{Error, Result};

pub const DEFAULT_GROUP_WINDOW: Duration = Duration::hours(1);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TweetGroup {
    /// Normalized hashtag; `None` for a singleton group of an untagged tweet.
    pub hashtag: Option<String>,
    pub bucket_start: DateTime<Utc>,
    /// Indices into the input slice, chronological.
    pub members: Vec<usize>,
}

fn normalize_hashtag(tag: &str) -> String {
    tag.trim_start_matches('#').to_lowercase()
}

fn bucket_of(ts: DateTime<Utc>, window: Duration) -> i64 {
    let w = window.num_seconds().max(1);
    ts.timestamp().div_euclid(w)
}

/// Groups by (hashtag, aligned bucket). A tweet with k hashtags joins k
/// groups; tweets without hashtags form singleton groups.
pub fn group_tweets_by_hashtag(tweets: &[Document], window: Duration) -> Result<Vec<TweetGroup>> {
    if let Some(d) = tweets.iter().find(|d| !d.is_tweet()) {
        return Err(Error::NotATweet(d.id.clone()));
    }
    if window <= Duration::zero() {
        return Err(Error::InvalidArgument("group window must be positive".into()));
    }
    let w = window.num_seconds().max(1);
    let mut keyed: BTreeMap<(String, i64), Vec<usize>> = BTreeMap::new();
    let mut singletons = Vec::new();
    for (i, tweet) in tweets.iter().enumerate() {
        let mut tags: Vec<String> = tweet.hashtags.iter().map(|t| normalize_hashtag(t)).collect();
        tags.retain(|t| !t.is_empty());
        tags.sort();
        tags.dedup();
        if tags.is_empty() {
            singletons.push(i);
            continue;
        }
        let bucket = bucket_of(tweet.timestamp, window);
        for tag in tags {
            keyed.entry((tag, bucket)).or_default().push(i);
        }
    }
    let bucket_start = |b: i64| DateTime::from_timestamp(b * w, 0).expect("in range");
    let mut groups: Vec<TweetGroup> = keyed
        .into_iter()
        .map(|((tag, bucket), mut members)| {
            members.sort_by(|&a, &b| {
                tweets[a]
                    .timestamp
                    .cmp(&tweets[b].timestamp)
                    .then_with(|| tweets[a].id.cmp(&tweets[b].id))
            });
            TweetGroup {
                hashtag: Some(tag),
                bucket_start: bucket_start(bucket),
                members,
            }
        })
        .collect();
    groups.extend(singletons.into_iter().map(|i| TweetGroup {
        hashtag: None,
        bucket_start: bucket_start(bucket_of(tweets[i].timestamp, window)),
        members: vec![i],
    }));
    Ok(groups)
}

/// Annotations of one tweet, keyed by its input index.
type TweetAnnotations = (usize, Vec<EntityAnnotation>);

/// Annotates tweets using each tweet's largest group as linking context.
/// Output order matches input order.
pub fn annotate_tweet_batch(
    tweets: &[Document],
    linker: &dyn Linker,
    window: Duration,
) -> Result<Vec<AnnotatedDocument>> {
    let groups = group_tweets_by_hashtag(tweets, window)?;
    let mut chosen: Vec<Option<usize>> = vec![None; tweets.len()];
    for (gi, group) in groups.iter().enumerate() {
        for &m in &group.members {
            let better = match chosen[m] {
                None => true,
                Some(cur) => group.members.len() > groups[cur].members.len(),
            };
            if better {
                chosen[m] = Some(gi);
            }
        }
    }
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); groups.len()];
    for (t, g) in chosen.iter().enumerate() {
        assigned[g.expect("every tweet is in a group")].push(t);
    }

    let results: Vec<Result<Vec<TweetAnnotations>>> = groups
        .par_iter()
        .zip(assigned.par_iter())
        .filter(|(_, a)| !a.is_empty())
        .map(|(group, assigned)| {
            let mut context = String::new();
            let mut spans = Vec::with_capacity(group.members.len());
            let mut offset = 0;
            for (k, &m) in group.members.iter().enumerate() {
                if k > 0 {
                    context.push('\n');
                    offset += 1;
                }
                let len = tweets[m].char_len();
                context.push_str(&tweets[m].text);
                spans.push((m, offset, offset + len));
                offset += len;
            }
            let mentions = extract_mentions(&context);
            let annotations = link(&mentions, &context, linker)?;
            Ok(assigned
                .iter()
                .map(|&t| {
                    let &(_, lo, hi) = spans.iter().find(|(m, _, _)| *m == t).expect("member");
                    let own = annotations
                        .iter()
                        .filter(|a| a.position >= lo && a.position < hi)
                        .map(|a| EntityAnnotation {
                            position: a.position - lo,
                            ..a.clone()
                        })
                        .collect();
                    (t, own)
                })
                .collect())
        })
        .collect();

    let mut out: Vec<Option<AnnotatedDocument>> = vec![None; tweets.len()];
    for r in results {
        for (t, anns) in r? {
            out[t] = Some(AnnotatedDocument::new(tweets[t].clone(), anns));
        }
    }
    Ok(out.into_iter().map(|d| d.expect("annotated")).collect())
}
