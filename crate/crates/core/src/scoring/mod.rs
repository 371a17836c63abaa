//! Scorers turn training examples into per-epoch relevance probabilities
//! for a test split. The built-in [`BaselineScorer`] is a logistic
//! bag-of-tokens model; [`RemoteScorer`] delegates to an HTTP service
//! hosting transformer classifiers.

mod baseline;
mod remote;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::preprocess::Example;

pub use baseline::{BaselineScorer, FeatureRow, LogisticModel, TrainEvent, Trainer};
pub use remote::{RemoteScorer, ENDPOINT_ENV};

#[derive(Debug, thiserror::Error)]
pub enum ScoringError {
    #[error("invalid scorer config: {0}")]
    Config(String),
    #[error("training data must contain both classes")]
    SingleClassTrain,
    #[error("test split is empty")]
    EmptyTest,
    #[error("duplicate test key `{0}`")]
    DuplicateTestKey(String),
    #[error("transport error calling {url} after {attempts} attempt(s): {message}")]
    Transport {
        url: String,
        attempts: u32,
        message: String,
    },
    #[error("protocol violation from {url}: {message}")]
    Protocol { url: String, message: String },
    #[error("remote training job {job_id} failed: {message}")]
    JobFailed { job_id: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScorerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_len: usize,
    pub seed: u64,
    pub gradient_accumulation_steps: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            learning_rate: 2e-5,
            max_len: crate::tokenizer::DEFAULT_MAX_LEN,
            seed: 0,
            gradient_accumulation_steps: 1,
        }
    }
}

impl ScorerConfig {
    pub fn effective_batch(&self) -> usize {
        self.batch_size * self.gradient_accumulation_steps
    }

    pub fn validate(&self) -> Result<(), ScoringError> {
        let problem = if self.epochs < 1 {
            "epochs must be at least 1"
        } else if self.batch_size < 1 {
            "batch_size must be at least 1"
        } else if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            "learning_rate must be positive"
        } else if self.max_len < 1 {
            "max_len must be at least 1"
        } else if self.gradient_accumulation_steps < 1 {
            "gradient_accumulation_steps must be at least 1"
        } else {
            return Ok(());
        };
        Err(ScoringError::Config(problem.to_string()))
    }
}

/// Test-split probabilities after one training epoch (1-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochSnapshot {
    pub epoch: usize,
    pub probabilities: BTreeMap<String, f64>,
}

pub trait Scorer: Send + Sync {
    /// Trains on `train` and returns one snapshot per epoch, in order.
    fn fit_and_score(
        &self,
        train: &[Example],
        test: &[Example],
        config: &ScorerConfig,
    ) -> Result<Vec<EpochSnapshot>, ScoringError>;
}

/// Shared precondition checks for every scorer.
pub(crate) fn check_inputs(train: &[Example], test: &[Example], config: &ScorerConfig) -> Result<(), ScoringError> {
    config.validate()?;
    let relevant = train.iter().any(|e| e.label.is_relevant());
    let irrelevant = train.iter().any(|e| !e.label.is_relevant());
    if !(relevant && irrelevant) {
        return Err(ScoringError::SingleClassTrain);
    }
    if test.is_empty() {
        return Err(ScoringError::EmptyTest);
    }
    let mut seen = HashSet::with_capacity(test.len());
    for e in test {
        if !seen.insert(e.key.as_str()) {
            return Err(ScoringError::DuplicateTestKey(e.key.clone()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = ScorerConfig::default();
        assert_eq!((c.epochs, c.batch_size, c.max_len, c.gradient_accumulation_steps), (20, 64, 512, 1));
        assert_eq!(c.learning_rate, 2e-5);
        assert_eq!(ScorerConfig { batch_size: 8, gradient_accumulation_steps: 8, ..c }.effective_batch(), 64);
    }

    #[test]
    fn rejects_bad_configs() {
        for bad in [
            ScorerConfig { epochs: 0, ..Default::default() },
            ScorerConfig { batch_size: 0, ..Default::default() },
            ScorerConfig { learning_rate: 0.0, ..Default::default() },
            ScorerConfig { gradient_accumulation_steps: 0, ..Default::default() },
        ] {
            assert!(matches!(bad.validate(), Err(ScoringError::Config(_))));
        }
    }

    #[test]
    fn config_fills_missing_fields_from_defaults() {
        let c: ScorerConfig = serde_json::from_str(r#"{"epochs": 3}"#).unwrap();
        assert_eq!(c.epochs, 3);
        assert_eq!(c.batch_size, 64);
    }
}
