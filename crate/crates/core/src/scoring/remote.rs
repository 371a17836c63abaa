//! Client for the remote scorer protocol (JSON over HTTP):
//!
//! ```text
//! GET  /v1/models            -> {"models": [str]}
//! POST /v1/train             {"model", "records": [{"text", "label"}], "config"} -> {"job_id"}
//! GET  /v1/train/{job_id}    -> {"status": "running"|"done"|"failed", "completed_epochs"}
//! POST /v1/score             {"model", "job_id", "epoch", "texts", "max_len"} -> {"probabilities"}
//! ```

use std::collections::BTreeMap;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, warn};
use reqwest::blocking::{Client, Response};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{check_inputs, EpochSnapshot, Scorer, ScorerConfig, ScoringError};
use crate::preprocess::Example;

/// Overrides the endpoint configured for remote scorers.
pub const ENDPOINT_ENV: &str = "TRIAGE_SCORER_ENDPOINT";

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelList {
    pub models: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainRecord {
    pub text: String,
    pub label: u8,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_len: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainRequest {
    pub model: String,
    pub records: Vec<TrainRecord>,
    pub config: TrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainResponse {
    pub job_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JobStatus {
    pub status: JobState,
    pub completed_epochs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub model: String,
    pub job_id: Option<String>,
    pub epoch: Option<usize>,
    pub texts: Vec<String>,
    pub max_len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RemoteScorer {
    endpoint: String,
    model: String,
    client: Client,
    max_attempts: u32,
    retry_delay: Duration,
    poll_interval: Duration,
    train_timeout: Duration,
    score_batch: usize,
}

impl RemoteScorer {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            model: model.into(),
            client: Client::builder()
                .timeout(Duration::from_secs(300))
                .build()
                .expect("static client configuration"),
            max_attempts: 3,
            retry_delay: Duration::from_millis(200),
            poll_interval: Duration::from_secs(2),
            train_timeout: Duration::from_secs(48 * 3600),
            score_batch: 256,
        }
    }

    pub fn with_retries(mut self, max_attempts: u32, delay: Duration) -> Self {
        self.max_attempts = max_attempts.max(1);
        self.retry_delay = delay;
        self
    }

    pub fn with_polling(mut self, interval: Duration, timeout: Duration) -> Self {
        self.poll_interval = interval;
        self.train_timeout = timeout;
        self
    }

    pub fn with_score_batch(mut self, size: usize) -> Self {
        self.score_batch = size.max(1);
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn model(&self) -> &str {
        &self.model
    }

    pub fn list_models(&self) -> Result<Vec<String>, ScoringError> {
        let list: ModelList = self.call(|c, url| c.get(url), "/v1/models")?;
        Ok(list.models)
    }

    pub fn start_training(&self, train: &[Example], config: &ScorerConfig) -> Result<String, ScoringError> {
        let body = TrainRequest {
            model: self.model.clone(),
            records: train
                .iter()
                .map(|e| TrainRecord {
                    text: e.text.clone(),
                    label: e.label.as_target(),
                })
                .collect(),
            config: TrainConfig {
                epochs: config.epochs,
                batch_size: config.batch_size,
                learning_rate: config.learning_rate,
                max_len: config.max_len,
                seed: config.seed,
            },
        };
        let resp: TrainResponse = self.call(|c, url| c.post(url).json(&body), "/v1/train")?;
        Ok(resp.job_id)
    }

    pub fn job_status(&self, job_id: &str) -> Result<JobStatus, ScoringError> {
        self.call(|c, url| c.get(url), &format!("/v1/train/{job_id}"))
    }

    fn wait_for(&self, job_id: &str, epochs: usize) -> Result<(), ScoringError> {
        let started = Instant::now();
        loop {
            let status = self.job_status(job_id)?;
            if status.completed_epochs > epochs {
                return Err(self.violation(format!(
                    "job reports {} completed epochs, {} requested",
                    status.completed_epochs, epochs
                )));
            }
            match status.status {
                JobState::Done => return Ok(()),
                JobState::Failed => {
                    return Err(ScoringError::JobFailed {
                        job_id: job_id.to_string(),
                        message: status.message.unwrap_or_else(|| "no message".into()),
                    })
                }
                JobState::Running => {
                    debug!("job {job_id}: {}/{epochs} epochs", status.completed_epochs);
                }
            }
            if started.elapsed() > self.train_timeout {
                return Err(ScoringError::Transport {
                    url: self.url(&format!("/v1/train/{job_id}")),
                    attempts: 1,
                    message: "timed out waiting for training".into(),
                });
            }
            thread::sleep(self.poll_interval);
        }
    }

    /// Scores `texts` in request-sized batches, reassembled in order.
    pub fn score(
        &self,
        job_id: Option<&str>,
        epoch: Option<usize>,
        texts: &[String],
        max_len: usize,
    ) -> Result<Vec<f64>, ScoringError> {
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.score_batch) {
            let body = ScoreRequest {
                model: self.model.clone(),
                job_id: job_id.map(str::to_string),
                epoch,
                texts: batch.to_vec(),
                max_len,
            };
            let resp: ScoreResponse = self.call(|c, url| c.post(url).json(&body), "/v1/score")?;
            if resp.probabilities.len() != batch.len() {
                return Err(self.violation(format!(
                    "expected {} probabilities, got {}",
                    batch.len(),
                    resp.probabilities.len()
                )));
            }
            if let Some(bad) = resp.probabilities.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(self.violation(format!("probability {bad} outside [0, 1]")));
            }
            out.extend(resp.probabilities);
        }
        Ok(out)
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.endpoint, path)
    }

    fn violation(&self, message: String) -> ScoringError {
        ScoringError::Protocol {
            url: self.endpoint.clone(),
            message,
        }
    }

    /// Sends a request, retrying connection failures and 5xx responses.
    fn call<T: DeserializeOwned>(
        &self,
        build: impl Fn(&Client, &str) -> reqwest::blocking::RequestBuilder,
        path: &str,
    ) -> Result<T, ScoringError> {
        let url = self.url(path);
        let mut last_error = String::new();
        for attempt in 1..=self.max_attempts {
            match build(&self.client, &url).send() {
                Ok(resp) if resp.status().is_server_error() => {
                    last_error = format!("HTTP {}", resp.status());
                }
                Ok(resp) => return self.decode(resp, &url, attempt),
                Err(e) => last_error = e.to_string(),
            }
            if attempt < self.max_attempts {
                warn!("{url}: attempt {attempt} failed ({last_error}), retrying");
                thread::sleep(self.retry_delay * attempt);
            }
        }
        Err(ScoringError::Transport {
            url,
            attempts: self.max_attempts,
            message: last_error,
        })
    }

    fn decode<T: DeserializeOwned>(&self, resp: Response, url: &str, attempt: u32) -> Result<T, ScoringError> {
        let status = resp.status();
        let body = resp.text().map_err(|e| ScoringError::Transport {
            url: url.to_string(),
            attempts: attempt,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(ScoringError::Transport {
                url: url.to_string(),
                attempts: attempt,
                message: format!("HTTP {status}: {body}"),
            });
        }
        serde_json::from_str(&body).map_err(|e| ScoringError::Protocol {
            url: url.to_string(),
            message: format!("malformed response: {e}"),
        })
    }
}

impl Scorer for RemoteScorer {
    fn fit_and_score(
        &self,
        train: &[Example],
        test: &[Example],
        config: &ScorerConfig,
    ) -> Result<Vec<EpochSnapshot>, ScoringError> {
        check_inputs(train, test, config)?;
        let job_id = self.start_training(train, config)?;
        self.wait_for(&job_id, config.epochs)?;
        let texts: Vec<String> = test.iter().map(|e| e.text.clone()).collect();
        (1..=config.epochs)
            .map(|epoch| {
                let probs = self.score(Some(&job_id), Some(epoch), &texts, config.max_len)?;
                let probabilities: BTreeMap<String, f64> =
                    test.iter().map(|e| e.key.clone()).zip(probs).collect();
                Ok(EpochSnapshot { epoch, probabilities })
            })
            .collect()
    }
}
