use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use storytrack::eval::ExperimentConfig;
use storytrack::tracker::Strategy;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LinkerKind {
    /// Gazetteer when one is available, else the synthetic linker.
    #[default]
    Auto,
    Gazetteer,
    Synthetic,
    /// Remote wikification service configured through the environment.
    Tagme,
}

/// Run configuration. Every path is optional; missing corpora are generated
/// from the synthetic specs in `experiment`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Labeled JSONL stream to track or evaluate on.
    pub corpus: Option<PathBuf>,
    /// Labeled JSONL corpus for training the relevance model.
    pub train_corpus: Option<PathBuf>,
    /// Positive seed documents (JSONL). Without it seeds are split off the
    /// start of the corpus.
    pub seed_docs: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub strategy: Option<String>,
    /// Strategies compared by `bench-sss`.
    pub strategies: Option<Vec<String>>,
    pub gazetteer: Option<PathBuf>,
    pub linker: LinkerKind,
    pub out: Option<PathBuf>,
    /// Cross-validation folds for `ablate`.
    pub folds: Option<usize>,
    pub experiment: ExperimentConfig,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        let cfg = match ext.as_str() {
            "json" => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            "toml" => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            other => bail!("config must be .toml or .json, got `.{other}`"),
        };
        Ok(cfg)
    }

    pub fn strategy(&self) -> Result<Strategy> {
        match &self.strategy {
            Some(s) => Ok(s.parse()?),
            None => Ok(Strategy::AccumulateRevisit),
        }
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>> {
        match (&self.strategies, &self.strategy) {
            (Some(list), _) => list.iter().map(|s| Ok(s.parse()?)).collect(),
            (None, Some(_)) => {
                let s = self.strategy()?;
                Ok(if s == Strategy::None {
                    vec![s]
                } else {
                    vec![Strategy::None, s]
                })
            }
            (None, None) => Ok(vec![
                Strategy::None,
                Strategy::Accumulate,
                Strategy::Revisit,
                Strategy::RevisitRecent(500),
                Strategy::AccumulateRevisit,
            ]),
        }
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("out"));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }
}
