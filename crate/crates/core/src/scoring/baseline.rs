use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_inputs, EpochSnapshot, Scorer, ScorerConfig, ScoringError};
use crate::preprocess::Example;
use crate::tokenizer::Tokenizer;

/// Sparse feature vector, sorted by index, plus a 0/1 target.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub features: Vec<(usize, f64)>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticModel {
    pub fn zeros(dims: usize) -> Self {
        Self {
            weights: vec![0.0; dims],
            bias: 0.0,
        }
    }

    pub fn logit(&self, features: &[(usize, f64)]) -> f64 {
        self.bias + features.iter().map(|&(i, x)| self.weights[i] * x).sum::<f64>()
    }

    pub fn predict(&self, features: &[(usize, f64)]) -> f64 {
        sigmoid(self.logit(features))
    }

    /// Mean binary cross-entropy over `rows`.
    pub fn loss(&self, rows: &[FeatureRow]) -> f64 {
        let total: f64 = rows
            .iter()
            .map(|r| {
                // log(1 + e^z) − y·z, computed without overflow
                let z = self.logit(&r.features);
                z.max(0.0) + (-z.abs()).exp().ln_1p() - r.target * z
            })
            .sum();
        total / rows.len() as f64
    }

    /// Gradient of [`loss`](Self::loss): (weights, bias).
    pub fn gradient(&self, rows: &[FeatureRow]) -> (Vec<f64>, f64) {
        let mut acc = GradientSum::new(self.weights.len());
        for row in rows {
            acc.add(self, row);
        }
        let n = acc.count as f64;
        (acc.weights.iter().map(|g| g / n).collect(), acc.bias / n)
    }
}

/// Running sum of per-example gradients.
#[derive(Debug, Clone)]
struct GradientSum {
    weights: Vec<f64>,
    bias: f64,
    count: usize,
}

impl GradientSum {
    fn new(dims: usize) -> Self {
        Self {
            weights: vec![0.0; dims],
            bias: 0.0,
            count: 0,
        }
    }

    fn add(&mut self, model: &LogisticModel, row: &FeatureRow) {
        let residual = model.predict(&row.features) - row.target;
        for &(i, x) in &row.features {
            self.weights[i] += residual * x;
        }
        self.bias += residual;
        self.count += 1;
    }

    fn reset(&mut self) {
        self.weights.iter_mut().for_each(|g| *g = 0.0);
        self.bias = 0.0;
        self.count = 0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainEvent {
    /// An optimizer step was applied (0-based step index).
    Update { step: usize },
    /// An epoch finished (1-based).
    EpochEnd { epoch: usize },
}

/// Mini-batch gradient descent with gradient accumulation and a linear
/// learning-rate decay to zero, no warmup.
///
/// Per-example gradients are summed in visiting order and divided by the
/// number of examples only at update time, so `k` accumulated batches of
/// `b` produce exactly the same update as one batch of `k·b`.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: ScorerConfig,
}

impl Trainer {
    pub fn new(config: ScorerConfig) -> Self {
        Self { config }
    }

    /// Optimizer steps per epoch for `n` examples.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.config.batch_size)
            .div_ceil(self.config.gradient_accumulation_steps)
    }

    pub fn fit(
        &self,
        rows: &[FeatureRow],
        dims: usize,
        mut on_event: impl FnMut(TrainEvent, &LogisticModel),
    ) -> LogisticModel {
        let cfg = &self.config;
        let mut model = LogisticModel::zeros(dims);
        let mut grad = GradientSum::new(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let total_steps = (self.steps_per_epoch(rows.len()) * cfg.epochs).max(1);
        let mut step = 0;
        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
                for &i in batch {
                    grad.add(&model, &rows[i]);
                }
                let last = (b + 1) * cfg.batch_size >= order.len();
                if (b + 1) % cfg.gradient_accumulation_steps == 0 || last {
                    let lr = cfg.learning_rate * (1.0 - step as f64 / total_steps as f64);
                    apply(&mut model, &grad, lr);
                    grad.reset();
                    on_event(TrainEvent::Update { step }, &model);
                    step += 1;
                }
            }
            on_event(TrainEvent::EpochEnd { epoch }, &model);
        }
        model
    }
}

fn apply(model: &mut LogisticModel, grad: &GradientSum, lr: f64) {
    if grad.count == 0 {
        return;
    }
    let scale = lr / grad.count as f64;
    for (w, g) in model.weights.iter_mut().zip(&grad.weights) {
        *w -= scale * g;
    }
    model.bias -= scale * grad.bias;
}

/// Logistic regression over token-count vectors. Texts longer than
/// `max_len` tokens are truncated to their first `max_len` tokens.
#[derive(Debug, Clone)]
pub struct BaselineScorer {
    tokenizer: Arc<Tokenizer>,
}

impl BaselineScorer {
    pub fn new(tokenizer: Arc<Tokenizer>) -> Self {
        Self { tokenizer }
    }

    pub fn dims(&self) -> usize {
        self.tokenizer.vocab().len()
    }

    pub fn featurize(&self, text: &str, max_len: usize) -> Vec<(usize, f64)> {
        let mut ids = self.tokenizer.tokenize(text);
        ids.truncate(max_len);
        ids.sort_unstable();
        let mut features: Vec<(usize, f64)> = Vec::new();
        for id in ids {
            match features.last_mut() {
                Some((last, count)) if *last == id as usize => *count += 1.0,
                _ => features.push((id as usize, 1.0)),
            }
        }
        features
    }

    fn rows(&self, examples: &[Example], max_len: usize) -> Vec<FeatureRow> {
        examples
            .iter()
            .map(|e| FeatureRow {
                features: self.featurize(&e.text, max_len),
                target: f64::from(e.label.as_target()),
            })
            .collect()
    }

    /// Trains and also returns the final model, for inspection.
    pub fn fit(
        &self,
        train: &[Example],
        test: &[Example],
        config: &ScorerConfig,
    ) -> Result<(Vec<EpochSnapshot>, LogisticModel), ScoringError> {
        check_inputs(train, test, config)?;
        let train_rows = self.rows(train, config.max_len);
        let test_rows = self.rows(test, config.max_len);
        let mut snapshots = Vec::with_capacity(config.epochs);
        let model = Trainer::new(config.clone()).fit(&train_rows, self.dims(), |event, model| {
            if let TrainEvent::EpochEnd { epoch } = event {
                snapshots.push(EpochSnapshot {
                    epoch,
                    probabilities: score_rows(model, test, &test_rows),
                });
            }
        });
        Ok((snapshots, model))
    }

    /// Probabilities of an untrained (all-zero) model.
    pub fn initial_probabilities(&self, test: &[Example], max_len: usize) -> BTreeMap<String, f64> {
        let model = LogisticModel::zeros(self.dims());
        score_rows(&model, test, &self.rows(test, max_len))
    }
}

fn score_rows(model: &LogisticModel, examples: &[Example], rows: &[FeatureRow]) -> BTreeMap<String, f64> {
    examples
        .iter()
        .zip(rows)
        .map(|(e, r)| (e.key.clone(), model.predict(&r.features)))
        .collect()
}

impl Scorer for BaselineScorer {
    fn fit_and_score(
        &self,
        train: &[Example],
        test: &[Example],
        config: &ScorerConfig,
    ) -> Result<Vec<EpochSnapshot>, ScoringError> {
        self.fit(train, test, config).map(|(snapshots, _)| snapshots)
    }
}
