//! JSON suite configuration. Relative paths resolve against the directory
//! holding the config file.
//!
//! ```json
//! {
//!   "datasets": {"A1": "data/A1.jsonl", "A2": "data/A2.csv"},
//!   "tokenizer": {"vocab": "tok/vocab.txt", "merges": "tok/merges.txt"},
//!   "experiments": ["A1_A2", {"name": "A1-EX_A2-EX", "chunk_pooling": "median"}],
//!   "scorers": [{"name": "baseline", "kind": "baseline"}],
//!   "scorer_config": {"epochs": 20},
//!   "weights": {"w_recall": 4, "w_precision": 1, "w_patents_left": 1},
//!   "decision": {"threshold": 0.5, "margin": 0.1},
//!   "seed": 7
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentContext, ScorerEntry};
use crate::aggregation::{AggregationMode, DecisionPolicy};
use crate::corpus::{self, CorpusError, CorpusFormat};
use crate::metrics::MetricWeights;
use crate::preprocess::{ExperimentPlan, PlanError};
use crate::scoring::ScorerConfig;
use crate::tokenizer::{Tokenizer, TokenizerError, DEFAULT_MAX_LEN};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed suite config {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("dataset {name}: {source}")]
    Dataset {
        name: String,
        #[source]
        source: CorpusError,
    },
    #[error("dataset {name}: cannot infer format of {path} (use .jsonl or .csv)")]
    UnknownFormat { name: String, path: String },
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizerPaths {
    pub vocab: PathBuf,
    pub merges: PathBuf,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

/// An experiment name, optionally with per-experiment overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExperimentEntry {
    Name(String),
    Detailed {
        name: String,
        #[serde(default)]
        chunk_pooling: Option<AggregationMode>,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        prune_vocab: Option<bool>,
    },
}

impl ExperimentEntry {
    pub fn name(&self) -> &str {
        match self {
            Self::Name(n) | Self::Detailed { name: n, .. } => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub datasets: BTreeMap<String, PathBuf>,
    pub tokenizer: TokenizerPaths,
    pub experiments: Vec<ExperimentEntry>,
    pub scorers: Vec<ScorerEntry>,
    #[serde(default)]
    pub scorer_config: ScorerConfig,
    #[serde(default)]
    pub weights: MetricWeights,
    #[serde(default)]
    pub decision: DecisionPolicy,
    #[serde(default)]
    pub chunk_pooling: AggregationMode,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub prune_vocab: bool,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl SuiteConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, serde_json::Error> {
        let mut cfg: Self = serde_json::from_str(text)?;
        cfg.base_dir = base_dir.into();
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, base).map_err(|source| ConfigError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Loads every dataset and the tokenizer. Datasets take their map key
    /// as name.
    pub fn load_context(&self) -> Result<ExperimentContext, ConfigError> {
        let mut datasets = BTreeMap::new();
        for (name, rel) in &self.datasets {
            let path = self.resolve(rel);
            let format = CorpusFormat::from_path(&path).ok_or_else(|| ConfigError::UnknownFormat {
                name: name.clone(),
                path: path.display().to_string(),
            })?;
            let mut ds = corpus::load_corpus(&path, format).map_err(|source| ConfigError::Dataset {
                name: name.clone(),
                source,
            })?;
            ds.name = name.clone();
            datasets.insert(name.clone(), ds);
        }
        let tokenizer = Tokenizer::from_files(
            self.resolve(&self.tokenizer.vocab),
            self.resolve(&self.tokenizer.merges),
            self.tokenizer.max_len,
        )?;
        Ok(ExperimentContext {
            datasets,
            tokenizer: Arc::new(tokenizer),
        })
    }

    /// One config per listed experiment, in order.
    pub fn experiments(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        self.experiments
            .iter()
            .map(|entry| {
                let plan: ExperimentPlan = entry.name().parse()?;
                let mut cfg = ExperimentConfig {
                    plan,
                    scorers: self.scorers.clone(),
                    scorer_config: self.scorer_config.clone(),
                    chunk_pooling: self.chunk_pooling,
                    decision: self.decision,
                    weights: self.weights,
                    seed: self.seed,
                    prune_vocab: self.prune_vocab,
                };
                if let ExperimentEntry::Detailed {
                    chunk_pooling,
                    seed,
                    prune_vocab,
                    ..
                } = entry
                {
                    cfg.chunk_pooling = chunk_pooling.unwrap_or(cfg.chunk_pooling);
                    cfg.seed = seed.unwrap_or(cfg.seed);
                    cfg.prune_vocab = prune_vocab.unwrap_or(cfg.prune_vocab);
                }
                Ok(cfg)
            })
            .collect()
    }
}
