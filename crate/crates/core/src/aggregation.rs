//! Chunk pooling, cross-model voting and thresholding.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Label;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AggregationError {
    #[error("no probabilities for `{0}`")]
    Empty(String),
    #[error("no models to vote over")]
    NoModels,
    #[error("models cover different patents: {}", format_missing(.0))]
    CoverageMismatch(BTreeMap<String, Vec<String>>),
    #[error("unknown aggregation mode `{0}` (expected mean or median)")]
    UnknownMode(String),
}

fn format_missing(missing: &BTreeMap<String, Vec<String>>) -> String {
    missing
        .iter()
        .map(|(model, ids)| format!("{model} is missing {}", ids.join(", ")))
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    #[default]
    Mean,
    Median,
}

impl AggregationMode {
    /// Aggregates a non-empty slice. Values are sorted first so the result
    /// does not depend on input order.
    pub fn apply(self, values: &[f64]) -> Option<f64> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let value = match self {
            AggregationMode::Mean => sorted.iter().sum::<f64>() / n as f64,
            AggregationMode::Median if n % 2 == 1 => sorted[n / 2],
            AggregationMode::Median => (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0,
        };
        // Rounding in the mean can step a hair outside the input range.
        Some(value.clamp(sorted[0], sorted[n - 1]))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::Mean => "mean",
            AggregationMode::Median => "median",
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AggregationMode {
    type Err = AggregationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mean" => Ok(AggregationMode::Mean),
            "median" => Ok(AggregationMode::Median),
            _ => Err(AggregationError::UnknownMode(s.to_string())),
        }
    }
}

/// Collapses per-chunk probabilities into one probability per patent.
pub fn pool_chunks(
    chunk_probs: &BTreeMap<String, Vec<f64>>,
    mode: AggregationMode,
) -> Result<BTreeMap<String, f64>, AggregationError> {
    chunk_probs
        .iter()
        .map(|(parent, probs)| {
            mode.apply(probs)
                .map(|p| (parent.clone(), p))
                .ok_or_else(|| AggregationError::Empty(parent.clone()))
        })
        .collect()
}

/// Per-patent mean or median across models.
pub fn ensemble(
    probs_by_model: &BTreeMap<String, BTreeMap<String, f64>>,
    mode: AggregationMode,
) -> Result<BTreeMap<String, f64>, AggregationError> {
    let all_ids: BTreeSet<&String> = probs_by_model.values().flat_map(|m| m.keys()).collect();
    if probs_by_model.is_empty() {
        return Err(AggregationError::NoModels);
    }
    let missing: BTreeMap<String, Vec<String>> = probs_by_model
        .iter()
        .filter_map(|(model, probs)| {
            let gaps: Vec<String> = all_ids
                .iter()
                .filter(|id| !probs.contains_key(id.as_str()))
                .map(|id| id.to_string())
                .collect();
            (!gaps.is_empty()).then(|| (model.clone(), gaps))
        })
        .collect();
    if !missing.is_empty() {
        return Err(AggregationError::CoverageMismatch(missing));
    }
    let mut values = Vec::with_capacity(probs_by_model.len());
    Ok(all_ids
        .into_iter()
        .map(|id| {
            values.clear();
            values.extend(probs_by_model.values().map(|m| m[id]));
            let p = mode.apply(&values).expect("at least one model");
            (id.clone(), p)
        })
        .collect())
}

/// Threshold plus a review band below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub threshold: f64,
    pub margin: f64,
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            margin: 0.0,
        }
    }
}

impl DecisionPolicy {
    /// `None` unless 0 < threshold < 1, margin ≥ 0 and threshold − margin > 0.
    pub fn new(threshold: f64, margin: f64) -> Option<Self> {
        let valid = threshold > 0.0 && threshold < 1.0 && margin >= 0.0 && threshold - margin > 0.0;
        valid.then_some(Self { threshold, margin })
    }

    pub fn is_valid(&self) -> bool {
        Self::new(self.threshold, self.margin).is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Decisions {
    pub predicted: BTreeMap<String, Label>,
    /// Patents routed to manual review: predicted relevant plus the margin band.
    pub flagged_for_review: BTreeSet<String>,
}

pub fn decide(probs: &BTreeMap<String, f64>, policy: DecisionPolicy) -> Decisions {
    let mut out = Decisions::default();
    let review_floor = policy.threshold - policy.margin;
    for (id, &p) in probs {
        let label = if p >= policy.threshold {
            Label::Relevant
        } else {
            Label::Irrelevant
        };
        out.predicted.insert(id.clone(), label);
        if p >= policy.threshold || p >= review_floor {
            out.flagged_for_review.insert(id.clone());
        }
    }
    out
}
