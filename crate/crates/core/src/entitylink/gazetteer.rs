use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{normalize_surface, Candidate, Linker, Mention, SYNTHETIC_PREFIX, WIKI_PREFIX};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GazetteerEntry {
    pub surface: String,
    pub entity_id: String,
    pub prior_confidence: f64,
}

impl GazetteerEntry {
    pub fn new(surface: impl Into<String>, entity_id: impl Into<String>, prior_confidence: f64) -> Self {
        GazetteerEntry {
            surface: surface.into(),
            entity_id: entity_id.into(),
            prior_confidence,
        }
    }
}

/// Offline linker backed by a surface → entity table. Lookup is on the
/// normalized surface; the highest-confidence entry per surface wins.
#[derive(Debug, Clone, Default)]
pub struct GazetteerLinker {
    table: HashMap<String, Candidate>,
}

fn namespaced(id: &str) -> String {
    if id.starts_with(WIKI_PREFIX) || id.starts_with(SYNTHETIC_PREFIX) {
        id.to_string()
    } else {
        format!("{WIKI_PREFIX}{id}")
    }
}

impl GazetteerLinker {
    pub fn from_entries(entries: impl IntoIterator<Item = GazetteerEntry>) -> Self {
        let mut table: HashMap<String, Candidate> = HashMap::new();
        for e in entries {
            let key = normalize_surface(&e.surface);
            if key.is_empty() {
                continue;
            }
            let cand = Candidate {
                entity_id: namespaced(&e.entity_id),
                confidence: e.prior_confidence,
            };
            match table.get(&key) {
                Some(existing)
                    if existing.confidence > cand.confidence
                        || (existing.confidence == cand.confidence && existing.entity_id <= cand.entity_id) => {}
                _ => {
                    table.insert(key, cand);
                }
            }
        }
        GazetteerLinker { table }
    }

    /// Parses `surface<TAB>entity_id<TAB>prior_confidence` lines. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn read_tsv<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse { line: idx + 1, message };
            let mut cols = line.split('\t');
            let (Some(surface), Some(id), Some(conf)) = (cols.next(), cols.next(), cols.next()) else {
                return Err(parse_err("expected 3 tab-separated columns".into()));
            };
            let conf: f64 = conf
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("bad confidence: {e}")))?;
            if !(0.0..=1.0).contains(&conf) {
                return Err(parse_err(format!("confidence {conf} outside [0,1]")));
            }
            entries.push(GazetteerEntry::new(surface, id.trim(), conf));
        }
        Ok(Self::from_entries(entries))
    }

    pub fn load_tsv(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_tsv(BufReader::new(File::open(path)?))
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn lookup(&self, surface: &str) -> Option<&Candidate> {
        self.table.get(&normalize_surface(surface))
    }
}

pub fn write_gazetteer_tsv<W: Write>(mut w: W, entries: &[GazetteerEntry]) -> Result<()> {
    for e in entries {
        writeln!(w, "{}\t{}\t{}", e.surface, e.entity_id, e.prior_confidence)?;
    }
    Ok(())
}

impl Linker for GazetteerLinker {
    fn resolve(&self, mentions: &[Mention], _context: &str) -> Result<Vec<Option<Candidate>>> {
        Ok(mentions.iter().map(|m| self.lookup(&m.surface).cloned()).collect())
    }

    fn name(&self) -> &str {
        "gazetteer"
    }
}
