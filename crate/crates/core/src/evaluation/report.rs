//! Table-style and CSV rendering of evaluation reports. Metrics are shown
//! as percentages with one decimal.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::metrics::MetricBlock;

pub const TABLE_HEADER: [&str; 7] = [
    "Experiment",
    "Dataset",
    "Model",
    "Mean Accuracy",
    "Mean F1",
    "Mean Precision",
    "Mean Recall",
];

const CSV_HEADER: [&str; 7] = [
    "experiment",
    "dataset",
    "model",
    "accuracy",
    "f1",
    "precision",
    "recall",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv header must be `{}`", CSV_HEADER.join(","))]
    Header,
    #[error("row {row}: bad value `{value}`")]
    Value { row: usize, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub dataset: String,
    pub model: String,
    pub metrics: MetricBlock,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    /// Runs averaged per row; 0 when unknown (e.g. parsed from CSV).
    pub run_count: usize,
    /// Items that degraded to an abstention because of a pipeline or
    /// provider error, summed over runs.
    pub error_count: usize,
}

impl EvalReport {
    pub fn merge(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
        self.run_count = self.run_count.max(other.run_count);
        self.error_count += other.error_count;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (expected table or csv)")),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Table => "table",
            ReportFormat::Csv => "csv",
        })
    }
}

pub fn percent(value: f64) -> String {
    format!("{:.1}", value * 100.0)
}

fn cells(row: &ReportRow) -> [String; 7] {
    let m = &row.metrics;
    [
        row.experiment.clone(),
        row.dataset.clone(),
        row.model.clone(),
        percent(m.accuracy),
        percent(m.f1),
        percent(m.precision),
        percent(m.recall),
    ]
}

pub fn render_report(report: &EvalReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Table => render_table(report),
        ReportFormat::Csv => render_csv(report),
    }
}

fn render_table(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&TABLE_HEADER.join(" | "));
    out.push('\n');
    out.push_str(&["---"; 7].join(" | "));
    out.push('\n');
    for row in &report.rows {
        out.push_str(&cells(row).join(" | "));
        out.push('\n');
    }
    if report.run_count > 0 {
        out.push_str(&format!(
            "\nruns: {}\nper-item errors: {}\n",
            report.run_count, report.error_count
        ));
    }
    out
}

fn render_csv(report: &EvalReport) -> String {
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    writer.write_record(CSV_HEADER).expect("in-memory write");
    for row in &report.rows {
        writer.write_record(cells(row)).expect("in-memory write");
    }
    String::from_utf8(writer.into_inner().expect("in-memory flush")).expect("utf-8 cells")
}

/// Reads a CSV produced by [`render_report`]. Percentages become fractions;
/// support is not carried by the CSV and comes back empty.
pub fn parse_report_csv(text: &str) -> Result<EvalReport, ReportError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(ReportError::Header);
    }
    let mut rows = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let num = |i: usize| -> Result<f64, ReportError> {
            let raw = record.get(i).unwrap_or_default();
            raw.trim()
                .parse::<f64>()
                .map(|v| v / 100.0)
                .map_err(|_| ReportError::Value {
                    row: idx + 1,
                    value: raw.to_string(),
                })
        };
        rows.push(ReportRow {
            experiment: record[0].to_string(),
            dataset: record[1].to_string(),
            model: record[2].to_string(),
            metrics: MetricBlock {
                accuracy: num(3)?,
                f1: num(4)?,
                precision: num(5)?,
                recall: num(6)?,
                support: Vec::new(),
            },
        });
    }
    Ok(EvalReport {
        rows,
        run_count: 0,
        error_count: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn care_ca_copa() -> EvalReport {
        EvalReport {
            rows: vec![ReportRow {
                experiment: "Causal Discovery".into(),
                dataset: "COPA".into(),
                model: "CARE-CA".into(),
                metrics: MetricBlock {
                    accuracy: 0.760,
                    f1: 0.823,
                    precision: 0.010,
                    recall: 0.781,
                    support: vec![],
                },
            }],
            run_count: 0,
            error_count: 0,
        }
    }

    #[test]
    fn table_row_layout() {
        let text = render_report(&care_ca_copa(), ReportFormat::Table);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER.join(" | "));
        assert_eq!(lines[2], "Causal Discovery | COPA | CARE-CA | 76.0 | 82.3 | 1.0 | 78.1");
    }

    #[test]
    fn csv_round_trip_is_a_fixpoint() {
        let csv = render_report(&care_ca_copa(), ReportFormat::Csv);
        assert_eq!(
            csv,
            "experiment,dataset,model,accuracy,f1,precision,recall\nCausal Discovery,COPA,CARE-CA,76.0,82.3,1.0,78.1\n"
        );
        let again = render_report(&parse_report_csv(&csv).unwrap(), ReportFormat::Csv);
        assert_eq!(csv, again);
    }

    #[test]
    fn csv_quotes_commas_in_model_names() {
        let mut r = care_ca_copa();
        r.rows[0].model = "a, b".into();
        let csv = render_report(&r, ReportFormat::Csv);
        assert!(csv.contains("\"a, b\""));
        assert_eq!(parse_report_csv(&csv).unwrap().rows[0].model, "a, b");
    }

    #[test]
    fn bad_csv_is_rejected() {
        assert!(matches!(parse_report_csv("a,b\n1,2\n"), Err(ReportError::Header)));
        let bad = "experiment,dataset,model,accuracy,f1,precision,recall\nx,y,z,abc,1,1,1\n";
        assert!(matches!(parse_report_csv(bad), Err(ReportError::Value { row: 1, .. })));
    }
}
