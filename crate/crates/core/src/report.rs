//! Rendering of experiment results: a coverage/width text table, a per-cell
//! CSV, per-replicate JSON lines and plot data.

use std::fmt::Write as _;
use std::io::Read;
use std::str::FromStr;

use crate::empirical::EstimatorKind;
use crate::error::{Error, Result};
use crate::harness::{CellSummary, ExperimentReport, ReplicateRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    TextTable,
    Csv,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text-table" | "text" | "table" => Ok(ReportFormat::TextTable),
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" => Ok(ReportFormat::Jsonl),
            other => Err(Error::UnknownFormat(other.to_string())),
        }
    }
}

/// Renders `report` (or, for `Jsonl`, the replicate `records`).
pub fn render_report(report: &ExperimentReport, records: &[ReplicateRecord], format: ReportFormat) -> Result<Vec<u8>> {
    match format {
        ReportFormat::TextTable => Ok(render_table(report).into_bytes()),
        ReportFormat::Csv => render_csv(report),
        ReportFormat::Jsonl => render_jsonl(records),
    }
}

/// Parses the format name, then renders.
pub fn render_report_named(report: &ExperimentReport, records: &[ReplicateRecord], format: &str) -> Result<Vec<u8>> {
    render_report(report, records, format.parse()?)
}

fn fmt4(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.4}")
    }
}

fn title(kind: EstimatorKind) -> &'static str {
    match kind {
        EstimatorKind::Ht => "Horvitz-Thompson empirical process",
        EstimatorKind::Hajek => "Hajek empirical process",
    }
}

fn sorted_unique<T: PartialOrd + Copy>(mut v: Vec<T>) -> Vec<T> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite keys"));
    v.dedup();
    v
}

fn render_table(report: &ExperimentReport) -> String {
    let kinds = sorted_unique(report.cells.iter().map(|c| c.kind).collect());
    let kinds = if kinds.is_empty() { EstimatorKind::ALL.to_vec() } else { kinds };
    let gammas = sorted_unique(report.cells.iter().map(|c| c.gamma).collect());
    let sizes = sorted_unique(report.cells.iter().map(|c| c.n_units).collect());
    let alphas = sorted_unique(report.cells.iter().map(|c| c.alpha).collect());
    const LEFT: usize = 14;
    const COL: usize = 22;

    let mut out = String::new();
    for (k, kind) in kinds.iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "{}", title(*kind));
        let mut header = format!("{:LEFT$}", "");
        for g in &gammas {
            header.push_str(&format!("{:<COL$}", format!("gamma={g:.2}")));
        }
        let _ = writeln!(out, "{}", header.trim_end());
        for &n in &sizes {
            let _ = writeln!(out, "N={n}");
            for &a in &alphas {
                let cells: Vec<Option<&CellSummary>> =
                    gammas.iter().map(|&g| report.find(n, a, g, *kind)).collect();
                if cells.iter().all(Option::is_none) {
                    continue;
                }
                let mut line1 = format!("{:<LEFT$}", format!("  alpha={a:.2}"));
                let mut line2 = format!("{:LEFT$}", "");
                for c in &cells {
                    match c {
                        Some(c) => {
                            line1.push_str(&format!("{:<COL$}", fmt4(c.coverage)));
                            line2.push_str(&format!(
                                "{:<COL$}",
                                format!("({}; {})", fmt4(c.mean_width), fmt4(c.max_width))
                            ));
                        }
                        None => {
                            line1.push_str(&format!("{:<COL$}", "-"));
                            line2.push_str(&format!("{:COL$}", ""));
                        }
                    }
                }
                let _ = writeln!(out, "{}", line1.trim_end());
                let _ = writeln!(out, "{}", line2.trim_end());
            }
        }
    }
    out
}

const CSV_HEADER: [&str; 9] =
    ["n_units", "alpha", "gamma", "kind", "replicates", "skipped", "coverage", "mean_width", "max_width"];

fn render_csv(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for c in &report.cells {
        w.write_record([
            c.n_units.to_string(),
            c.alpha.to_string(),
            c.gamma.to_string(),
            c.kind.name().to_string(),
            c.replicates.to_string(),
            c.skipped.to_string(),
            c.coverage.to_string(),
            c.mean_width.to_string(),
            c.max_width.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Reads a report written by the CSV renderer.
pub fn load_report_csv<R: Read>(reader: R) -> Result<ExperimentReport> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut cells = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let bad = |field: &str| Error::Row { path: Default::default(), row, msg: format!("bad {field}") };
        let num = |k: usize, name: &str| rec.get(k).and_then(|s| s.parse::<f64>().ok()).ok_or_else(|| bad(name));
        let int = |k: usize, name: &str| rec.get(k).and_then(|s| s.parse::<usize>().ok()).ok_or_else(|| bad(name));
        cells.push(CellSummary {
            n_units: int(0, "n_units")?,
            alpha: num(1, "alpha")?,
            gamma: num(2, "gamma")?,
            kind: rec.get(3).ok_or_else(|| bad("kind"))?.parse()?,
            replicates: int(4, "replicates")?,
            skipped: int(5, "skipped")?,
            coverage: num(6, "coverage")?,
            mean_width: num(7, "mean_width")?,
            max_width: num(8, "max_width")?,
        });
    }
    Ok(ExperimentReport { cells })
}

fn render_jsonl(records: &[ReplicateRecord]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// `n_units,alpha,kind,gamma,coverage` rows for plotting coverage against gamma.
pub fn render_plot_data(report: &ExperimentReport) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["n_units", "alpha", "kind", "gamma", "coverage"])?;
    for c in &report.cells {
        w.write_record([
            c.n_units.to_string(),
            c.alpha.to_string(),
            c.kind.name().to_string(),
            c.gamma.to_string(),
            c.coverage.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}
