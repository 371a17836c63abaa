use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, ExperimentError, ExperimentResult};
use crate::metrics::MetricsReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    /// 1-based position in the suite.
    pub index: usize,
    pub experiment: String,
    /// Ranked by descending score M.
    pub rows: Vec<TableRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ResultTable {
    pub sections: Vec<Section>,
}

impl ResultTable {
    pub fn from_results(cfgs: &[ExperimentConfig], results: &[Result<ExperimentResult, ExperimentError>]) -> Self {
        let sections = cfgs
            .iter()
            .zip(results)
            .enumerate()
            .map(|(i, (cfg, result))| match result {
                Ok(r) => Section {
                    index: i + 1,
                    experiment: r.experiment.clone(),
                    rows: r.ranked_rows(),
                    error: None,
                },
                Err(e) => Section {
                    index: i + 1,
                    experiment: cfg.name(),
                    rows: Vec::new(),
                    error: Some(e.source.to_string()),
                },
            })
            .collect();
        Self { sections }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}` (expected csv or markdown)")),
        }
    }
}

const CSV_HEADER: &str = "experiment,model,recall,precision,percent,score_m,f1";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn cells(r: &MetricsReport) -> [String; 5] {
    [
        format!("{:.4}", r.recall),
        format!("{:.4}", r.precision),
        format!("{:.1}", r.percent_flagged * 100.0),
        format!("{:.4}", r.score_m),
        format!("{:.4}", r.f1),
    ]
}

/// Renders the table. Failed experiments are left out of the CSV and
/// shown with their error in markdown.
pub fn emit_report(table: &ResultTable, format: ReportFormat) -> String {
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for section in &table.sections {
                for row in &section.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{}",
                        csv_field(&section.experiment),
                        csv_field(&row.model),
                        cells(&row.report).join(",")
                    );
                }
            }
        }
        ReportFormat::Markdown => {
            out.push_str("| Model | R | P | % | M | F1 |\n");
            out.push_str("|---|---:|---:|---:|---:|---:|\n");
            for section in &table.sections {
                let _ = writeln!(out, "| **({}) {}** | | | | | |", section.index, section.experiment);
                if let Some(err) = &section.error {
                    let _ = writeln!(out, "| failed: {} | | | | | |", err.replace('|', "\\|").replace('\n', " "));
                }
                for row in &section.rows {
                    let _ = writeln!(out, "| {} | {} |", row.model, cells(&row.report).join(" | "));
                }
            }
        }
    }
    out
}

pub fn write_report(table: &ResultTable, format: ReportFormat, path: &Path) -> io::Result<()> {
    fs::write(path, emit_report(table, format))
}
