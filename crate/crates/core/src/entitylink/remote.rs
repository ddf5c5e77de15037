//! Client for a TAGME-compatible `tag` endpoint.
//!
//! Request: `GET <url>?text=...&gcube-token=...&lang=en`. Response JSON holds
//! `annotations[]` with `id`, `rho`, `start`, `end` (UTF-16 offsets, as
//! produced by the Java service). `rho` becomes the candidate confidence.

use std::time::Duration;

use serde::Deserialize;

use super::{Candidate, Linker, Mention, WIKI_PREFIX};
use crate::error::{Error, Result};

pub const TAGME_URL_ENV: &str = "STORYTRACK_TAGME_URL";
pub const TAGME_TOKEN_ENV: &str = "STORYTRACK_TAGME_TOKEN";

#[derive(Debug, Clone)]
pub struct TagmeConfig {
    pub url: String,
    pub token: String,
    pub lang: String,
    pub timeout: Duration,
    /// Extra attempts after the first failure.
    pub retries: u32,
    pub backoff: Duration,
}

impl TagmeConfig {
    pub fn new(url: impl Into<String>, token: impl Into<String>) -> Self {
        TagmeConfig {
            url: url.into(),
            token: token.into(),
            lang: "en".into(),
            timeout: Duration::from_secs(10),
            retries: 2,
            backoff: Duration::from_millis(250),
        }
    }

    pub fn from_env() -> Result<Self> {
        let url =
            std::env::var(TAGME_URL_ENV).map_err(|_| Error::InvalidArgument(format!("{TAGME_URL_ENV} not set")))?;
        let token = std::env::var(TAGME_TOKEN_ENV).unwrap_or_default();
        Ok(Self::new(url, token))
    }
}

#[derive(Debug, Deserialize)]
struct TagResponse {
    #[serde(default)]
    annotations: Vec<TagAnnotation>,
}

#[derive(Debug, Deserialize)]
struct TagAnnotation {
    id: Option<i64>,
    #[serde(default)]
    rho: f64,
    start: usize,
    end: usize,
}

pub struct TagmeLinker {
    agent: ureq::Agent,
    config: TagmeConfig,
}

impl TagmeLinker {
    pub fn new(config: TagmeConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        TagmeLinker { agent, config }
    }

    fn call(&self, text: &str) -> Result<TagResponse> {
        let mut resp = self
            .agent
            .get(&self.config.url)
            .query("text", text)
            .query("gcube-token", &self.config.token)
            .query("lang", &self.config.lang)
            .call()
            .map_err(|e| Error::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&body).map_err(|e| Error::LinkerResponse(e.to_string())),
            500..=599 | 429 => Err(Error::Transport(format!("HTTP {status}"))),
            _ => Err(Error::LinkerResponse(format!("HTTP {status}: {body}"))),
        }
    }

    fn call_with_retries(&self, text: &str) -> Result<TagResponse> {
        let mut attempt = 0;
        loop {
            match self.call(text) {
                Err(Error::Transport(msg)) if attempt < self.config.retries => {
                    attempt += 1;
                    log::debug!("tagme attempt {attempt} failed: {msg}");
                    std::thread::sleep(self.config.backoff * attempt);
                }
                other => return other,
            }
        }
    }
}

/// Maps UTF-16 code-unit offsets to char offsets for `text`.
fn utf16_to_char_offsets(text: &str) -> Vec<usize> {
    let mut map = Vec::with_capacity(text.len() + 1);
    for (ci, c) in text.chars().enumerate() {
        for _ in 0..c.len_utf16() {
            map.push(ci);
        }
    }
    map.push(text.chars().count());
    map
}

impl Linker for TagmeLinker {
    fn resolve(&self, mentions: &[Mention], context: &str) -> Result<Vec<Option<Candidate>>> {
        if mentions.is_empty() {
            return Ok(Vec::new());
        }
        let resp = self.call_with_retries(context)?;
        let map = utf16_to_char_offsets(context);
        let to_char = |u: usize| map.get(u).copied().unwrap_or(*map.last().expect("non-empty"));
        let spans: Vec<(usize, usize, Candidate)> = resp
            .annotations
            .into_iter()
            .filter_map(|a| {
                let id = a.id?;
                Some((
                    to_char(a.start),
                    to_char(a.end),
                    Candidate {
                        entity_id: format!("{WIKI_PREFIX}{id}"),
                        confidence: a.rho.clamp(0.0, 1.0),
                    },
                ))
            })
            .collect();
        Ok(mentions
            .iter()
            .map(|m| {
                spans
                    .iter()
                    .filter(|(s, e, _)| *s < m.end && m.start < *e)
                    .max_by(|a, b| a.2.confidence.total_cmp(&b.2.confidence))
                    .map(|(_, _, c)| c.clone())
            })
            .collect())
    }

    fn name(&self) -> &str {
        "tagme"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::entitylink::{extract_mentions, link};
    use std::io::{BufRead, BufReader, Write};
    use std::net::TcpListener;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    /// Serves `responses` in order, one per connection, and records request lines.
    fn mock_server(responses: Vec<(u16, String)>) -> (String, Arc<AtomicUsize>, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let hits = Arc::new(AtomicUsize::new(0));
        let hits2 = hits.clone();
        let handle = std::thread::spawn(move || {
            let mut seen = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                hits2.fetch_add(1, Ordering::SeqCst);
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                loop {
                    let mut l = String::new();
                    reader.read_line(&mut l).unwrap();
                    if l == "\r\n" || l.is_empty() {
                        break;
                    }
                }
                seen.push(request_line);
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            seen
        });
        (format!("http://{addr}/tagme/tag"), hits, handle)
    }

    fn fast_config(url: String) -> TagmeConfig {
        let mut c = TagmeConfig::new(url, "secret-token");
        c.backoff = Duration::from_millis(1);
        c
    }

    #[test]
    fn aligns_annotations_to_mentions() {
        let text = "Irish Water charges protest in Dublin";
        let body = r#"{"annotations":[
            {"id":8504,"title":"Dublin","start":31,"end":37,"rho":0.62,"spot":"Dublin"},
            {"id":4242,"title":"Irish Water","start":0,"end":11,"rho":0.41,"spot":"Irish Water"}
        ],"lang":"en"}"#;
        let (url, _, handle) = mock_server(vec![(200, body.to_string())]);
        let linker = TagmeLinker::new(fast_config(url));
        let mentions = extract_mentions(text);
        let ann = link(&mentions, text, &linker).unwrap();
        let requests = handle.join().unwrap();
        assert!(requests[0].contains("gcube-token=secret-token"));
        assert!(requests[0].starts_with("GET /tagme/tag?text=Irish"));

        assert_eq!(ann.len(), 3);
        // rho 0.41 is below the link threshold
        assert_eq!(ann[0].entity_id, "SYN:irish water");
        assert_eq!(ann[1].entity_id, "SYN:charges protest");
        assert_eq!(ann[2].entity_id, "WD:8504");
        assert_eq!(ann[2].confidence, 0.62);
    }

    #[test]
    fn retries_then_succeeds() {
        let ok = r#"{"annotations":[{"id":1,"start":0,"end":6,"rho":0.9}]}"#.to_string();
        let (url, hits, handle) = mock_server(vec![(503, "busy".into()), (503, "busy".into()), (200, ok)]);
        let linker = TagmeLinker::new(fast_config(url));
        let ms = extract_mentions("Dublin rally");
        let cands = linker.resolve(&ms, "Dublin rally").unwrap();
        handle.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 3);
        assert_eq!(cands[0].as_ref().unwrap().entity_id, "WD:1");
    }

    #[test]
    fn exhausted_retries_fall_back_to_synthetic() {
        let (url, hits, handle) = mock_server(vec![(503, "x".into()), (503, "x".into()), (503, "x".into())]);
        let linker = TagmeLinker::new(fast_config(url));
        let ms = extract_mentions("Dublin rally");
        assert!(matches!(linker.resolve(&ms, "Dublin rally"), Err(Error::Transport(_))));
        handle.join().unwrap();
        assert_eq!(hits.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn unreachable_endpoint_falls_back() {
        let mut cfg = fast_config("http://127.0.0.1:9/tag".into());
        cfg.timeout = Duration::from_millis(200);
        let linker = TagmeLinker::new(cfg);
        let ms = extract_mentions("Dublin rally");
        let ann = link(&ms, "Dublin rally", &linker).unwrap();
        assert_eq!(ann[0].entity_id, "SYN:dublin");
    }

    #[test]
    fn utf16_offsets() {
        let map = utf16_to_char_offsets("a😀b");
        assert_eq!(map, vec![0, 1, 1, 2, 3]);
    }
}
