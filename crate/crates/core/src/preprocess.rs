//! Dataset transforms selected by experiment names.
//!
//! An experiment name reads `<train>[-FLAGS][-EX]_<test>[-FLAGS][-EX]`,
//! where FLAGS is drawn from `T` (title prepended to the claims) and `R`
//! (minority class oversampled), and `EX` splits long texts into chunks.
//! `A1-TR-EX_A2-T-EX` trains on A1 with all three transforms and tests on
//! A2 with titles and chunking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusError, Dataset, Label, PatentRecord};
use crate::tokenizer::{TokenId, Tokenizer};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("malformed experiment name `{name}` at position {position}: {reason}")]
    Parse {
        name: String,
        position: usize,
        reason: String,
    },
    #[error("invalid experiment `{name}`: {reason}")]
    Invalid { name: String, reason: String },
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("dataset `{0}` cannot be resolved")]
    UnknownDataset(String),
    #[error("cannot resample `{name}`: it holds a single class")]
    SingleClass { name: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Transform {
    #[serde(rename = "T")]
    Title,
    #[serde(rename = "R")]
    Resample,
    #[serde(rename = "EX")]
    Extend,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub train_name: String,
    pub train_flags: BTreeSet<Transform>,
    pub test_name: String,
    pub test_flags: BTreeSet<Transform>,
}

impl ExperimentPlan {
    pub fn train_has(&self, t: Transform) -> bool {
        self.train_flags.contains(&t)
    }

    pub fn test_has(&self, t: Transform) -> bool {
        self.test_flags.contains(&t)
    }

    fn validate(self, name: &str) -> Result<Self, PlanError> {
        let invalid = |reason: &str| PlanError::Invalid {
            name: name.to_string(),
            reason: reason.to_string(),
        };
        if self.test_has(Transform::Resample) {
            return Err(invalid("R is not allowed on the test dataset"));
        }
        if self.train_has(Transform::Extend) && !self.test_has(Transform::Extend) {
            return Err(invalid("training set is extended (EX) but the test set is not"));
        }
        if self.train_has(Transform::Title) && !self.test_has(Transform::Title) {
            return Err(invalid("training set carries titles (T) but the test set does not"));
        }
        Ok(self)
    }
}

impl FromStr for ExperimentPlan {
    type Err = PlanError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_experiment_name(s)
    }
}

impl fmt::Display for ExperimentPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_side(f, &self.train_name, &self.train_flags)?;
        f.write_str("_")?;
        write_side(f, &self.test_name, &self.test_flags)
    }
}

fn write_side(f: &mut fmt::Formatter<'_>, name: &str, flags: &BTreeSet<Transform>) -> fmt::Result {
    f.write_str(name)?;
    let letters: String = [(Transform::Title, 'T'), (Transform::Resample, 'R')]
        .iter()
        .filter(|(t, _)| flags.contains(t))
        .map(|(_, c)| *c)
        .collect();
    if !letters.is_empty() {
        write!(f, "-{letters}")?;
    }
    if flags.contains(&Transform::Extend) {
        f.write_str("-EX")?;
    }
    Ok(())
}

pub fn parse_experiment_name(name: &str) -> Result<ExperimentPlan, PlanError> {
    let parse_err = |position: usize, reason: &str| PlanError::Parse {
        name: name.to_string(),
        position,
        reason: reason.to_string(),
    };
    let Some(split) = name.find('_') else {
        return Err(parse_err(name.len(), "expected `_` between training and test datasets"));
    };
    if name[split + 1..].contains('_') {
        let extra = split + 1 + name[split + 1..].find('_').unwrap_or(0);
        return Err(parse_err(extra, "more than one `_`"));
    }
    let (train_name, train_flags) = parse_side(&name[..split], 0).map_err(|(p, r)| parse_err(p, &r))?;
    let (test_name, test_flags) =
        parse_side(&name[split + 1..], split + 1).map_err(|(p, r)| parse_err(p, &r))?;
    ExperimentPlan {
        train_name,
        train_flags,
        test_name,
        test_flags,
    }
    .validate(name)
}

fn parse_side(side: &str, offset: usize) -> Result<(String, BTreeSet<Transform>), (usize, String)> {
    let mut segments = side.split('-');
    let dataset = segments.next().unwrap_or_default();
    if dataset.is_empty() {
        return Err((offset, "empty dataset name".into()));
    }
    if let Some(bad) = dataset.find(|c: char| !(c.is_ascii_alphanumeric() || c == '+')) {
        return Err((offset + bad, "unexpected character in dataset name".into()));
    }
    let mut flags = BTreeSet::new();
    let mut position = offset + dataset.len() + 1;
    let mut seen_letters = false;
    for segment in segments {
        if flags.contains(&Transform::Extend) {
            return Err((position, "EX must be the last suffix".into()));
        }
        if segment == "EX" {
            flags.insert(Transform::Extend);
        } else if !seen_letters && !segment.is_empty() {
            for (i, c) in segment.char_indices() {
                let flag = match c {
                    'T' => Transform::Title,
                    'R' => Transform::Resample,
                    _ => return Err((position + i, format!("unknown flag `{c}`"))),
                };
                if !flags.insert(flag) {
                    return Err((position + i, format!("repeated flag `{c}`")));
                }
            }
            seen_letters = true;
        } else {
            return Err((position, format!("unexpected suffix `{segment}`")));
        }
        position += segment.len() + 1;
    }
    Ok((dataset.to_string(), flags))
}

/// Prepends each record's title to its claims, separated by one space.
pub fn apply_title(ds: &Dataset) -> Dataset {
    let records = ds
        .records
        .iter()
        .map(|r| {
            let claims = if r.title.is_empty() {
                r.claims.clone()
            } else {
                format!("{} {}", r.title, r.claims)
            };
            PatentRecord { claims, ..r.clone() }
        })
        .collect();
    Dataset {
        records,
        ..ds.clone()
    }
}

/// Oversamples the minority class by uniform draws with replacement until
/// both classes have the same count. Duplicates are appended after the
/// original records.
pub fn resample_balance(ds: &Dataset, seed: u64) -> Result<Dataset, PipelineError> {
    let (relevant, irrelevant) = ds.class_counts();
    if relevant == 0 || irrelevant == 0 {
        return Err(PipelineError::SingleClass {
            name: ds.name.clone(),
        });
    }
    let minority = if relevant < irrelevant {
        Label::Relevant
    } else if irrelevant < relevant {
        Label::Irrelevant
    } else {
        return Ok(ds.clone());
    };
    let pool: Vec<&PatentRecord> = ds.records.iter().filter(|r| r.label == minority).collect();
    let missing = relevant.abs_diff(irrelevant);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = ds.records.clone();
    records.extend((0..missing).map(|_| pool[rng.gen_range(0..pool.len())].clone()));
    Ok(Dataset {
        records,
        ..ds.clone()
    })
}

/// A slice of at most `L` tokens from one patent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkRecord {
    pub parent_id: String,
    pub chunk_index: usize,
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub label: Label,
}

/// Splits every record into consecutive, non-overlapping chunks of
/// `max_tokens` tokens; the last chunk holds the remainder.
pub fn extend_chunks(ds: &Dataset, tokenizer: &Tokenizer, max_tokens: usize) -> Vec<ChunkRecord> {
    assert!(max_tokens >= 1, "chunk length must be at least one token");
    let mut chunks = Vec::new();
    for record in &ds.records {
        let encoding = tokenizer.encode(record.text());
        for (chunk_index, start) in (0..encoding.len()).step_by(max_tokens).enumerate() {
            let end = (start + max_tokens).min(encoding.len());
            let ids = &encoding.ids[start..end];
            chunks.push(ChunkRecord {
                parent_id: record.id.clone(),
                chunk_index,
                text: tokenizer.decode_slice(ids, &encoding.word_starts[start..end]),
                tokens: ids.to_vec(),
                label: record.label,
            });
        }
    }
    chunks
}

/// Unit handed to scorers: a whole patent or one chunk of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    /// Unique within a test split; `<id>#<chunk>` for chunks.
    pub key: String,
    pub parent_id: String,
    pub text: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitRecords {
    Patents(Vec<PatentRecord>),
    Chunks(Vec<ChunkRecord>),
}

impl SplitRecords {
    pub fn is_chunked(&self) -> bool {
        matches!(self, SplitRecords::Chunks(_))
    }

    pub fn len(&self) -> usize {
        match self {
            SplitRecords::Patents(r) => r.len(),
            SplitRecords::Chunks(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn examples(&self) -> Vec<Example> {
        match self {
            SplitRecords::Patents(records) => records
                .iter()
                .map(|r| Example {
                    key: r.id.clone(),
                    parent_id: r.id.clone(),
                    text: r.text().to_string(),
                    label: r.label,
                })
                .collect(),
            SplitRecords::Chunks(chunks) => chunks
                .iter()
                .map(|c| Example {
                    key: format!("{}#{}", c.parent_id, c.chunk_index),
                    parent_id: c.parent_id.clone(),
                    text: c.text.clone(),
                    label: c.label,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub train: SplitRecords,
    pub test: SplitRecords,
    /// Gold labels of the test patents, before any chunking.
    pub test_gold: BTreeMap<String, Label>,
}

/// Resolves a dataset name, combining parts for names like `A12`.
pub fn resolve_dataset(name: &str, datasets: &BTreeMap<String, Dataset>) -> Result<Dataset, PipelineError> {
    let known = |n: &str| datasets.contains_key(n);
    let parts = corpus::resolve_parts(name, &known)
        .ok_or_else(|| PipelineError::UnknownDataset(name.to_string()))?;
    let parts: Vec<Dataset> = parts.iter().map(|p| datasets[p].clone()).collect();
    let mut combined = corpus::combine(&parts)?;
    combined.name = name.to_string();
    Ok(combined)
}

/// Applies T → R → EX to the training side and T → EX to the test side.
pub fn build_pipeline(
    plan: &ExperimentPlan,
    datasets: &BTreeMap<String, Dataset>,
    seed: u64,
    tokenizer: &Tokenizer,
    max_tokens: usize,
) -> Result<PipelineOutput, PipelineError> {
    let mut train = resolve_dataset(&plan.train_name, datasets)?;
    let mut test = resolve_dataset(&plan.test_name, datasets)?;
    if plan.train_has(Transform::Title) {
        train = apply_title(&train);
    }
    if plan.train_has(Transform::Resample) {
        train = resample_balance(&train, seed)?;
    }
    if plan.test_has(Transform::Title) {
        test = apply_title(&test);
    }
    let test_gold = test.records.iter().map(|r| (r.id.clone(), r.label)).collect();
    let split = |ds: Dataset, extend: bool| {
        if extend {
            SplitRecords::Chunks(extend_chunks(&ds, tokenizer, max_tokens))
        } else {
            SplitRecords::Patents(ds.records)
        }
    };
    Ok(PipelineOutput {
        train: split(train, plan.train_has(Transform::Extend)),
        test: split(test, plan.test_has(Transform::Extend)),
        test_gold,
    })
}
