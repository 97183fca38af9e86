//! Tabular output: per-segment CSV, per-case summary tables (CSV and
//! Markdown) with a totals row, and plotting dumps.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Counts, DetectionReport, Detector, Direction, Intensity, SegmentRow};
use crate::alg2::Alg2Outcome;
use crate::epoch::to_iso;
use crate::error::{Error, Result};

/// Label of the total row in summary tables.
pub const TOTAL_CASE: &str = "total";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Markdown,
    #[default]
    Both,
}

impl DetectionReport {
    /// Every row as CSV, same columns as the JSONL records.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(Self { rows })
    }
}

/// Case label of a row: `high-6h-T` for grid scenarios, `none` otherwise.
pub fn case_label(row: &SegmentRow) -> String {
    match (row.intensity, row.offset_hours, row.direction) {
        (Some(i), Some(o), Some(d)) => format!("{i}-{o}h-{d}"),
        _ => "none".into(),
    }
}

type CaseKey = (Option<Intensity>, Option<f64>, Option<Direction>);

fn key_cmp(a: &CaseKey, b: &CaseKey) -> Ordering {
    // untagged (control) cases first, then intensity, offset, direction
    a.0.cmp(&b.0)
        .then_with(|| match (a.1, b.1) {
            (Some(x), Some(y)) => x.total_cmp(&y),
            (x, y) => x.is_some().cmp(&y.is_some()),
        })
        .then(a.2.cmp(&b.2))
}

/// One line of a summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub case: String,
    pub segments: usize,
    /// Truth-labelled manoeuvred segments.
    pub manoeuvred: usize,
    /// Per-detector counts, in the table's detector order.
    pub counts: Vec<Counts>,
}

/// Per-case detection counts with a totals row.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub detectors: Vec<Detector>,
    pub rows: Vec<SummaryRow>,
    pub total: SummaryRow,
}

impl SummaryTable {
    /// Groups `report` by case. Only the listed detectors get columns.
    pub fn from_report(report: &DetectionReport, detectors: &[Detector]) -> Self {
        let mut groups: Vec<(CaseKey, Vec<&SegmentRow>)> = Vec::new();
        for r in &report.rows {
            let key = (r.intensity, r.offset_hours, r.direction);
            match groups.iter_mut().find(|(k, _)| key_cmp(k, &key) == Ordering::Equal) {
                Some((_, v)) => v.push(r),
                None => groups.push((key, vec![r])),
            }
        }
        groups.sort_by(|a, b| key_cmp(&a.0, &b.0));
        let summarize = |case: String, rows: &[&SegmentRow]| {
            let sub = DetectionReport { rows: rows.iter().map(|r| (*r).clone()).collect() };
            SummaryRow {
                case,
                segments: rows.len(),
                manoeuvred: rows.iter().filter(|r| r.truth_label).count(),
                counts: detectors.iter().map(|&d| sub.counts(d)).collect(),
            }
        };
        let rows: Vec<SummaryRow> = groups.iter().map(|(_, v)| summarize(case_label(v[0]), v)).collect();
        let all: Vec<&SegmentRow> = report.rows.iter().collect();
        let total = summarize(TOTAL_CASE.into(), &all);
        Self { detectors: detectors.to_vec(), rows, total }
    }

    fn header(&self) -> Vec<String> {
        let mut h = vec!["case".to_string(), "segments".into(), "manoeuvred".into()];
        for d in &self.detectors {
            for c in ["positives", "negatives", "true_positives", "false_positives", "undecided", "detection_rate", "false_positive_rate", "false_negative_rate"] {
                h.push(format!("{}_{c}", d.name()));
            }
        }
        h
    }

    fn record(row: &SummaryRow) -> Vec<String> {
        let rate = |r: Option<f64>| r.map(|v| v.to_string()).unwrap_or_default();
        let mut rec = vec![row.case.clone(), row.segments.to_string(), row.manoeuvred.to_string()];
        for c in &row.counts {
            rec.extend([c.positives, c.negatives, c.true_positives, c.false_positives, c.undecided].map(|v| v.to_string()));
            rec.extend([c.detection_rate(), c.false_positive_rate(), c.false_negative_rate()].map(rate));
        }
        rec
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            w.write_record(Self::record(r))?;
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::invalid(e.to_string()))
    }

    /// Inverse of [`SummaryTable::to_csv`]. Rate columns are checked against
    /// the counts rather than stored.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers()?.clone();
        if header.len() < 3 || (header.len() - 3) % 8 != 0 {
            return Err(Error::invalid("summary header has an unexpected column count"));
        }
        let mut detectors = Vec::new();
        for k in (3..header.len()).step_by(8) {
            let name = header[k].strip_suffix("_positives").unwrap_or_default();
            let d = Detector::ALL.into_iter().find(|d| d.name() == name).ok_or_else(|| Error::invalid(format!("unknown detector column {}", &header[k])))?;
            detectors.push(d);
        }
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::invalid(format!("bad count {s:?}: {e}")));
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let mut counts = Vec::new();
            for k in (3..rec.len()).step_by(8) {
                let c = Counts {
                    positives: int(&rec[k])?,
                    negatives: int(&rec[k + 1])?,
                    true_positives: int(&rec[k + 2])?,
                    false_positives: int(&rec[k + 3])?,
                    undecided: int(&rec[k + 4])?,
                };
                let stored = &rec[k + 5];
                if stored != c.detection_rate().map(|v| v.to_string()).unwrap_or_default() {
                    return Err(Error::invalid(format!("detection rate {stored:?} disagrees with counts")));
                }
                counts.push(c);
            }
            rows.push(SummaryRow { case: rec[0].to_string(), segments: int(&rec[1])?, manoeuvred: int(&rec[2])?, counts });
        }
        let total = rows.pop().filter(|t| t.case == TOTAL_CASE).ok_or_else(|| Error::invalid("summary lacks a total row"))?;
        Ok(Self { detectors, rows, total })
    }

    /// Detected and false-positive percentages per detector.
    pub fn to_markdown(&self) -> String {
        let pct = |r: Option<f64>| r.map(|v| format!("{:.1}", 100.0 * v)).unwrap_or_else(|| "-".into());
        let mut s = String::from("| Case | Segments | Manoeuvred |");
        for d in &self.detectors {
            let _ = write!(s, " {0} % detected | {0} % FP | {0} % FN |", d.name());
        }
        s.push_str("\n|---|---:|---:|");
        s.push_str(&"---:|".repeat(3 * self.detectors.len()));
        s.push('\n');
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let case = if r.case == TOTAL_CASE { format!("**{}**", r.case) } else { r.case.clone() };
            let _ = write!(s, "| {case} | {} | {} |", r.segments, r.manoeuvred);
            for c in &r.counts {
                let _ = write!(s, " {} | {} | {} |", pct(c.detection_rate()), pct(c.false_positive_rate()), pct(c.false_negative_rate()));
            }
            s.push('\n');
        }
        s
    }
}

/// Writes `segments.csv`, `summary.csv` and/or `summary.md` into `dir`.
pub fn render_report(report: &DetectionReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>> {
    if report.rows.is_empty() {
        return Err(Error::invalid("empty report"));
    }
    std::fs::create_dir_all(dir)?;
    let table = SummaryTable::from_report(report, &report.detectors());
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let p = dir.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
        Ok(())
    };
    if matches!(format, ReportFormat::Csv | ReportFormat::Both) {
        put("segments.csv", report.to_csv()?)?;
        put("summary.csv", table.to_csv()?)?;
    }
    if matches!(format, ReportFormat::Markdown | ReportFormat::Both) {
        put("summary.md", table.to_markdown())?;
    }
    Ok(written)
}

/// One abscissa of an alg2 CDF dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub j: f64,
    pub candidate: f64,
    pub reference_mean: f64,
    pub reference_band: f64,
}

/// Candidate CDF of J against the reference curves, on the reference grid.
pub fn cdf_rows(outcome: &Alg2Outcome) -> Vec<CdfRow> {
    let r = &outcome.reference;
    r.mean
        .grid
        .iter()
        .zip(r.mean.values.iter().zip(&r.band.values))
        .map(|(&j, (&m, &b))| CdfRow { j, candidate: outcome.candidate.cdf.eval(j), reference_mean: m, reference_band: b })
        .collect()
}

/// Position error of two filters at the same plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorHistoryRow {
    pub epoch_iso: String,
    pub track: usize,
    pub ukf_err_m: f64,
    pub mdf_err_m: f64,
}

/// Pairs the plot-by-plot errors of a UKF run and an MDF run over the same tracks.
pub fn error_history(ukf: &crate::ukf::orbit::FilterRun, mdf: &crate::mdf::MdfRun, truth: &crate::dynamics::Trajectory) -> Result<Vec<ErrorHistoryRow>> {
    use crate::ukf::orbit::position_error;
    let measured = |steps: &[crate::ukf::FilterStep], tracks: &[usize]| -> Vec<(usize, crate::ukf::StateEstimate)> {
        steps.iter().zip(tracks).filter(|(s, _)| s.residual.is_some()).map(|(s, &k)| (k, s.filtered.clone())).collect()
    };
    let a = measured(&ukf.steps, &ukf.track_of_step);
    let b = measured(&mdf.steps, &mdf.track_of_step);
    if a.len() != b.len() {
        return Err(Error::invalid("runs cover different plots"));
    }
    a.iter()
        .zip(&b)
        .map(|((k, u), (_, m))| {
            Ok(ErrorHistoryRow { epoch_iso: to_iso(u.epoch), track: *k, ukf_err_m: position_error(u, truth)?, mdf_err_m: position_error(m, truth)? })
        })
        .collect()
}
