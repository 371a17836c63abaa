//! Labeled patent datasets: loading, saving and combination.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("row {row}: missing field `{field}`")]
    MissingField { row: usize, field: &'static str },
    #[error("empty claims for id={0}")]
    EmptyClaims(String),
    #[error("empty id at row {0}")]
    EmptyId(usize),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("unknown label token `{0}`")]
    UnknownLabel(String),
    #[error("cannot combine an empty list of datasets")]
    NothingToCombine,
}

/// Binary relevance label. `Relevant` is the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Relevant,
    Irrelevant,
}

impl Label {
    pub fn is_relevant(self) -> bool {
        self == Label::Relevant
    }

    /// 1 for relevant, 0 for irrelevant.
    pub fn as_target(self) -> u8 {
        u8::from(self.is_relevant())
    }
}

impl FromStr for Label {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relevant" | "1" => Ok(Label::Relevant),
            "irrelevant" | "0" => Ok(Label::Irrelevant),
            _ => Err(CorpusError::UnknownLabel(s.to_string())),
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Relevant => "relevant",
            Label::Irrelevant => "irrelevant",
        })
    }
}

/// One patent. `claims` holds the model-facing text: all claims
/// concatenated, prefixed by the title once the title transform has run.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatentRecord {
    pub id: String,
    pub title: String,
    pub claims: String,
    pub label: Label,
}

impl PatentRecord {
    pub fn new(
        id: impl Into<String>,
        title: impl Into<String>,
        claims: impl Into<String>,
        label: Label,
    ) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            claims: claims.into(),
            label,
        }
    }

    pub fn text(&self) -> &str {
        &self.claims
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub records: Vec<PatentRecord>,
    pub provenance: Vec<String>,
}

impl Dataset {
    /// Builds a raw dataset, enforcing id uniqueness and non-empty claims.
    pub fn new(name: impl Into<String>, records: Vec<PatentRecord>) -> Result<Self, CorpusError> {
        validate(&records)?;
        let name = name.into();
        Ok(Self {
            provenance: vec![name.clone()],
            name,
            records,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// (relevant, irrelevant)
    pub fn class_counts(&self) -> (usize, usize) {
        let relevant = self.records.iter().filter(|r| r.label.is_relevant()).count();
        (relevant, self.records.len() - relevant)
    }

    /// Writes the dataset as JSONL, one record per line.
    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<(), CorpusError> {
        let path = path.as_ref();
        let io_err = |source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
        for record in &self.records {
            let row = RawRow {
                id: Some(record.id.clone()),
                title: Some(record.title.clone()),
                claims: Some(record.claims.clone()),
                label: Some(record.label.to_string()),
            };
            let line = serde_json::to_string(&row).expect("string fields always serialize");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        out.flush().map_err(io_err)
    }
}

fn validate(records: &[PatentRecord]) -> Result<(), CorpusError> {
    let mut seen = HashSet::with_capacity(records.len());
    for (row, record) in records.iter().enumerate() {
        if record.id.is_empty() {
            return Err(CorpusError::EmptyId(row));
        }
        if record.claims.trim().is_empty() {
            return Err(CorpusError::EmptyClaims(record.id.clone()));
        }
        if !seen.insert(record.id.as_str()) {
            return Err(CorpusError::DuplicateId(record.id.clone()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl CorpusFormat {
    /// Guesses the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Some(CorpusFormat::Jsonl),
            "csv" => Some(CorpusFormat::Csv),
            _ => None,
        }
    }
}

// Fields are optional so a missing one is reported by name, with its row.
#[derive(Debug, Serialize, Deserialize)]
struct RawRow {
    id: Option<String>,
    title: Option<String>,
    claims: Option<String>,
    label: Option<String>,
}

impl RawRow {
    fn into_record(self, row: usize) -> Result<PatentRecord, CorpusError> {
        let id = self.id.ok_or(CorpusError::MissingField { row, field: "id" })?;
        let title = self.title.ok_or(CorpusError::MissingField { row, field: "title" })?;
        let claims = self.claims.ok_or(CorpusError::MissingField { row, field: "claims" })?;
        let label = self.label.ok_or(CorpusError::MissingField { row, field: "label" })?;
        let label = label.parse::<Label>().map_err(|_| CorpusError::Row {
            row,
            message: format!("unknown label token `{label}`"),
        })?;
        Ok(PatentRecord { id, title, claims, label })
    }
}

/// Loads a dataset from `path`. The dataset is named after the file stem.
pub fn load_corpus(path: impl AsRef<Path>, format: CorpusFormat) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let records = match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file), path)?,
        CorpusFormat::Csv => read_csv(file)?,
    };
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string();
    Dataset::new(name, records)
}

fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<Vec<PatentRecord>, CorpusError> {
    let mut records = Vec::new();
    for (row, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRow = serde_json::from_str(&line).map_err(|e| CorpusError::Row {
            row,
            message: e.to_string(),
        })?;
        records.push(raw.into_record(row)?);
    }
    Ok(records)
}

fn read_csv(reader: impl std::io::Read) -> Result<Vec<PatentRecord>, CorpusError> {
    let mut csv = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut records = Vec::new();
    for (row, result) in csv.deserialize::<RawRow>().enumerate() {
        let raw = result.map_err(|e| CorpusError::Row {
            row,
            message: e.to_string(),
        })?;
        records.push(raw.into_record(row)?);
    }
    Ok(records)
}

/// Concatenates datasets in order. `[A1, A2]` becomes `A12`.
pub fn combine(parts: &[Dataset]) -> Result<Dataset, CorpusError> {
    let first = parts.first().ok_or(CorpusError::NothingToCombine)?;
    if parts.len() == 1 {
        return Ok(first.clone());
    }
    let records: Vec<PatentRecord> = parts.iter().flat_map(|d| d.records.iter().cloned()).collect();
    let mut seen = HashSet::with_capacity(records.len());
    for record in &records {
        if !seen.insert(record.id.as_str()) {
            return Err(CorpusError::DuplicateId(record.id.clone()));
        }
    }
    let names: Vec<&str> = parts.iter().map(|d| d.name.as_str()).collect();
    Ok(Dataset {
        name: combined_name(&names),
        provenance: parts.iter().flat_map(|d| d.provenance.iter().cloned()).collect(),
        records,
    })
}

/// Splits `AT12` into (`AT`, `12`); `None` unless the name is letters then digits.
fn split_name(name: &str) -> Option<(&str, &str)> {
    let cut = name.find(|c: char| c.is_ascii_digit())?;
    let (prefix, digits) = name.split_at(cut);
    let valid = !prefix.is_empty()
        && prefix.chars().all(|c| c.is_ascii_alphabetic())
        && digits.chars().all(|c| c.is_ascii_digit());
    valid.then_some((prefix, digits))
}

/// Renders the concatenated name of several datasets.
///
/// Consecutive parts sharing a letter prefix collapse onto one prefix
/// (`A1`,`A2` → `A12`); a later prefix that extends the first one keeps
/// only the extension (`A1`,`A2`,`AT1`,`AT2` → `A12T12`). Names outside
/// the letters-then-one-digit shape fall back to `+` joins.
pub fn combined_name(names: &[&str]) -> String {
    let parsed: Option<Vec<(&str, &str)>> = names
        .iter()
        .map(|n| split_name(n).filter(|(_, d)| d.len() == 1))
        .collect();
    let Some(parsed) = parsed else {
        return names.join("+");
    };
    let Some(&(base, _)) = parsed.first() else {
        return String::new();
    };
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for (prefix, digit) in parsed {
        if current != Some(prefix) {
            if current.is_some() && prefix.len() > base.len() && prefix.starts_with(base) {
                out.push_str(&prefix[base.len()..]);
            } else {
                out.push_str(prefix);
            }
            current = Some(prefix);
        }
        out.push_str(digit);
    }
    out
}

/// Expands a possibly combined dataset name into its part names, using
/// `known` to decide between candidates. Exact matches win.
pub fn resolve_parts(name: &str, known: &dyn Fn(&str) -> bool) -> Option<Vec<String>> {
    if known(name) {
        return Some(vec![name.to_string()]);
    }
    if name.contains('+') {
        let parts: Vec<String> = name.split('+').map(str::to_string).collect();
        return parts.iter().all(|p| known(p)).then_some(parts);
    }
    // Split into alternating letter/digit groups: A12T12 -> (A,12), (T,12).
    let mut groups: Vec<(String, String)> = Vec::new();
    for c in name.chars() {
        if c.is_ascii_digit() {
            groups.last_mut()?.1.push(c);
        } else if c.is_ascii_alphabetic() {
            match groups.last_mut() {
                Some((letters, digits)) if digits.is_empty() => letters.push(c),
                _ => groups.push((c.to_string(), String::new())),
            }
        } else {
            return None;
        }
    }
    let base = groups.first()?.0.clone();
    let mut parts = Vec::new();
    for (i, (letters, digits)) in groups.iter().enumerate() {
        if digits.is_empty() {
            return None;
        }
        let mut candidates = vec![letters.clone()];
        if i > 0 {
            candidates.push(format!("{base}{letters}"));
        }
        let prefix = candidates
            .into_iter()
            .find(|p| digits.chars().all(|d| known(&format!("{p}{d}"))))?;
        parts.extend(digits.chars().map(|d| format!("{prefix}{d}")));
    }
    Some(parts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, label: Label) -> PatentRecord {
        PatentRecord::new(id, format!("title {id}"), format!("1. claim of {id}"), label)
    }

    fn ds(name: &str, ids: &[&str]) -> Dataset {
        Dataset::new(name, ids.iter().map(|i| rec(i, Label::Irrelevant)).collect()).unwrap()
    }

    #[test]
    fn parses_labels_case_insensitively() {
        assert_eq!("Relevant".parse::<Label>().unwrap(), Label::Relevant);
        assert_eq!("IRRELEVANT".parse::<Label>().unwrap(), Label::Irrelevant);
        assert_eq!("1".parse::<Label>().unwrap(), Label::Relevant);
        assert_eq!("0".parse::<Label>().unwrap(), Label::Irrelevant);
        assert!("maybe".parse::<Label>().is_err());
    }

    #[test]
    fn loads_jsonl_in_order() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for (id, label) in [("p1", "relevant"), ("p2", "irrelevant"), ("p3", "irrelevant")] {
            writeln!(
                f,
                r#"{{"id":"{id}","title":"t","claims":"1. a claim","label":"{label}"}}"#
            )
            .unwrap();
        }
        let ds = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.class_counts(), (1, 2));
        let ids: Vec<_> = ds.records.iter().map(|r| r.id.as_str()).collect();
        assert_eq!(ids, ["p1", "p2", "p3"]);
    }

    #[test]
    fn rejects_empty_claims() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"X","title":"t","claims":"","label":"0"}}"#).unwrap();
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert_eq!(err.to_string(), "empty claims for id=X");
    }

    #[test]
    fn reports_missing_field_with_row() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","title":"t","claims":"c","label":"0"}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","title":"t","label":"0"}}"#).unwrap();
        match load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err() {
            CorpusError::MissingField { row, field } => {
                assert_eq!(row, 1);
                assert_eq!(field, "claims");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn rejects_duplicate_ids_and_unknown_labels() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, r#"{{"id":"a","title":"t","claims":"c","label":"0"}}"#).unwrap();
        writeln!(f, r#"{{"id":"a","title":"t","claims":"c","label":"1"}}"#).unwrap();
        let err = load_corpus(f.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("duplicate id a"));

        let mut g = tempfile::NamedTempFile::new().unwrap();
        writeln!(g, r#"{{"id":"a","title":"t","claims":"c","label":"yes"}}"#).unwrap();
        let err = load_corpus(g.path(), CorpusFormat::Jsonl).unwrap_err();
        assert!(err.to_string().contains("unknown label token"));
    }

    #[test]
    fn csv_with_multiline_claims_matches_jsonl() {
        let records = vec![
            PatentRecord::new("p1", "Pump seal", "1. A seal, comprising:\na ring.\n2. The seal of claim 1.", Label::Relevant),
            PatentRecord::new("p2", "Valve \"fast\"", "1. A valve.", Label::Irrelevant),
        ];
        let dir = tempfile::tempdir().unwrap();
        let jsonl = dir.path().join("D.jsonl");
        Dataset::new("D", records.clone()).unwrap().save_jsonl(&jsonl).unwrap();

        let csv_path = dir.path().join("D.csv");
        let mut w = csv::Writer::from_path(&csv_path).unwrap();
        w.write_record(["id", "title", "claims", "label"]).unwrap();
        for r in &records {
            w.write_record([&r.id, &r.title, &r.claims, &r.label.to_string()]).unwrap();
        }
        w.flush().unwrap();
        let raw = std::fs::read_to_string(&csv_path).unwrap();
        assert!(raw.contains("\"1. A seal, comprising:\na ring."));

        let a = load_corpus(&jsonl, CorpusFormat::Jsonl).unwrap();
        let b = load_corpus(&csv_path, CorpusFormat::Csv).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.records, records);
    }

    #[test]
    fn combine_identity_and_concat() {
        let a1 = ds("A1", &["a", "b", "c"]);
        let single = combine(std::slice::from_ref(&a1)).unwrap();
        assert_eq!(single, a1);
        assert_eq!(single.provenance, ["A1"]);

        let a2 = ds("A2", &["d", "e", "f", "g"]);
        let both = combine(&[a1, a2]).unwrap();
        assert_eq!(both.len(), 7);
        assert_eq!(both.name, "A12");
        assert_eq!(both.provenance, ["A1", "A2"]);
    }

    #[test]
    fn combine_rejects_collisions() {
        let b1 = ds("B1", &["p1", "p7"]);
        let b2 = ds("B2", &["p7"]);
        let err = combine(&[b1, b2]).unwrap_err();
        assert!(err.to_string().contains("p7"));
        assert!(matches!(combine(&[]), Err(CorpusError::NothingToCombine)));
    }

    #[test]
    fn combined_names_follow_concatenation_rule() {
        assert_eq!(combined_name(&["A1", "A2"]), "A12");
        assert_eq!(combined_name(&["AT1", "AT2", "AT3"]), "AT123");
        assert_eq!(combined_name(&["A1", "A2", "AT1", "AT2"]), "A12T12");
        assert_eq!(combined_name(&["B1", "B2"]), "B12");
        assert_eq!(combined_name(&["train", "extra"]), "train+extra");
    }

    #[test]
    fn resolves_combined_names() {
        let known = |n: &str| ["A1", "A2", "AT1", "AT2", "AT3", "B1", "B2", "B3"].contains(&n);
        assert_eq!(resolve_parts("A1", &known).unwrap(), ["A1"]);
        assert_eq!(resolve_parts("A12", &known).unwrap(), ["A1", "A2"]);
        assert_eq!(resolve_parts("AT123", &known).unwrap(), ["AT1", "AT2", "AT3"]);
        assert_eq!(resolve_parts("A12T12", &known).unwrap(), ["A1", "A2", "AT1", "AT2"]);
        assert!(resolve_parts("C1", &known).is_none());
        assert!(resolve_parts("A19", &known).is_none());
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("R.jsonl");
        let d = Dataset::new(
            "R",
            vec![
                PatentRecord::new("x", "Ünïcode title", "1. claim with \"quotes\"\tand tab", Label::Relevant),
                PatentRecord::new("y", "", "2. other", Label::Irrelevant),
            ],
        )
        .unwrap();
        d.save_jsonl(&path).unwrap();
        assert_eq!(load_corpus(&path, CorpusFormat::Jsonl).unwrap(), d);
    }
}
