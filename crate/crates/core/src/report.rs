//! Metrics tables and plot data.
//!
//! `metrics.csv` has one row per pipeline run, ranked best first, with the
//! columns of [`MetricsRow`]. `deviation_pairs.csv` holds, per sequence, the
//! deviation of the unprocessed map next to that of the best pipeline, ready
//! for a grouped bar chart.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{EvalRecord, Status};

pub const METRICS_FILE: &str = "metrics.csv";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const PAIRS_FILE: &str = "deviation_pairs.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    /// 1-based position among successful rows; empty for failures.
    pub rank: Option<usize>,
    pub index: usize,
    pub pipeline: String,
    pub status: String,
    pub deviation_percent: Option<f64>,
    pub mean_error: Option<f64>,
    pub matched_fraction: Option<f64>,
    /// Total stage wall-clock seconds, millisecond precision.
    pub time_s: Option<f64>,
    pub input_points: usize,
    pub map_points: Option<usize>,
    pub error: String,
}

impl MetricsRow {
    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn millis(s: f64) -> f64 {
    (s * 1000.0).round() / 1000.0
}

/// Rows for records already in rank order.
pub fn metrics_rows(records: &[EvalRecord], timing: bool) -> Vec<MetricsRow> {
    let mut rank = 0;
    records
        .iter()
        .map(|r| {
            let ok = r.is_ok();
            if ok {
                rank += 1;
            }
            let e = r.evaluation.map(|e| e.error);
            MetricsRow {
                rank: ok.then_some(rank),
                index: r.index,
                pipeline: r.pipeline.clone(),
                status: if ok { "ok".into() } else { "failed".into() },
                deviation_percent: e.map(|e| e.percent_error),
                mean_error: e.map(|e| e.mean_error),
                matched_fraction: e.map(|e| e.matched_fraction),
                time_s: timing.then(|| millis(r.total_seconds())),
                input_points: r.input_points,
                map_points: r.output_points,
                error: match &r.status {
                    Status::Ok => String::new(),
                    Status::Failed(m) => m.clone(),
                },
            }
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            reason: format!("{other:?}"),
        },
    }
}

pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if !path.exists() {
        return Err(Error::FileNotFound(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize()
        .map(|row| row.map_err(|e| csv_err(path, e)))
        .collect()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    read_rows(path)
}

/// One bar pair: unprocessed versus best processed deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationPair {
    pub sequence: String,
    pub raw_deviation_percent: Option<f64>,
    pub processed_deviation_percent: Option<f64>,
    pub raw_points: Option<usize>,
    pub processed_points: Option<usize>,
    pub pipeline: String,
}

pub fn deviation_pair(
    sequence: &str,
    baseline: &MetricsRow,
    best: Option<&MetricsRow>,
) -> DeviationPair {
    DeviationPair {
        sequence: sequence.to_string(),
        raw_deviation_percent: baseline.deviation_percent,
        processed_deviation_percent: best.and_then(|b| b.deviation_percent),
        raw_points: baseline.map_points,
        processed_points: best.and_then(|b| b.map_points),
        pipeline: best.map_or_else(String::new, |b| b.pipeline.clone()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub metrics: PathBuf,
    pub baseline: Option<PathBuf>,
    pub pairs: Option<PathBuf>,
}

/// Writes `metrics.csv`, and with a baseline also `baseline.csv` and
/// `deviation_pairs.csv`, into `dir`. `records` must be in rank order.
pub fn emit_report(
    records: &[EvalRecord],
    baseline: Option<&EvalRecord>,
    sequence: &str,
    dir: &Path,
    timing: bool,
) -> Result<ReportFiles> {
    if records.is_empty() {
        return Err(Error::InvalidParams("no records to report".into()));
    }
    std::fs::create_dir_all(dir)?;
    let rows = metrics_rows(records, timing);
    let metrics = dir.join(METRICS_FILE);
    write_rows(&rows, &metrics)?;
    let mut files = ReportFiles {
        metrics,
        baseline: None,
        pairs: None,
    };
    if let Some(b) = baseline {
        let brow = metrics_rows(std::slice::from_ref(b), timing).remove(0);
        let bpath = dir.join(BASELINE_FILE);
        write_rows(std::slice::from_ref(&brow), &bpath)?;
        let best = rows.iter().find(|r| r.is_ok());
        let ppath = dir.join(PAIRS_FILE);
        write_rows(&[deviation_pair(sequence, &brow, best)], &ppath)?;
        files.baseline = Some(bpath);
        files.pairs = Some(ppath);
    }
    Ok(files)
}

/// Summary over several report directories, one pair per directory.
pub fn collect_pairs(dirs: &[PathBuf]) -> Result<Vec<DeviationPair>> {
    dirs.iter()
        .map(|d| {
            let rows = read_metrics(&d.join(METRICS_FILE))?;
            let base: Vec<MetricsRow> = read_rows(&d.join(BASELINE_FILE))?;
            let base = base.first().ok_or_else(|| Error::Parse {
                path: d.join(BASELINE_FILE),
                line: 1,
                reason: "no baseline row".into(),
            })?;
            let name = d.file_name().map_or_else(
                || d.display().to_string(),
                |n| n.to_string_lossy().into_owned(),
            );
            let best = rows
                .iter()
                .filter(|r| r.is_ok() && r.deviation_percent.is_some())
                .min_by(|a, b| {
                    a.deviation_percent
                        .unwrap()
                        .total_cmp(&b.deviation_percent.unwrap())
                        .then(a.index.cmp(&b.index))
                });
            Ok(deviation_pair(&name, base, best))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::{MapError, ScaleFactor};
    use crate::pipeline::Evaluation;

    fn rec(index: usize, dev: Option<f64>) -> EvalRecord {
        EvalRecord {
            index,
            pipeline: format!("statistical(l=50 h={index}) > voxel-grid-dilation(s_vs=auto d_i=3)"),
            status: match dev {
                Some(_) => Status::Ok,
                None => {
                    Status::Failed("stage 0 (statistical): need more than 50 points, got 3".into())
                }
            },
            input_points: 100,
            output_points: dev.map(|_| 400),
            evaluation: dev.map(|d| Evaluation {
                scale: ScaleFactor::IDENTITY,
                max_dist: 0.1,
                error: MapError {
                    mean_error: d / 10.0,
                    percent_error: d,
                    matched_fraction: 0.9,
                    matched: 90,
                },
            }),
            stages: Vec::new(),
        }
    }

    #[test]
    fn single_record_two_lines() {
        let dir = tempfile::tempdir().unwrap();
        let f = emit_report(&[rec(0, Some(1.5))], None, "s", dir.path(), false).unwrap();
        let text = std::fs::read_to_string(&f.metrics).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("rank,index,pipeline,status,deviation_percent"));
        assert!(f.pairs.is_none());
    }

    #[test]
    fn failed_rows_parse_back() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec(1, Some(0.7)), rec(0, None)];
        let f = emit_report(&records, Some(&rec(9, Some(2.0))), "seq", dir.path(), true).unwrap();
        let rows = read_metrics(&f.metrics).unwrap();
        assert_eq!(rows, metrics_rows(&records, true));
        assert_eq!(rows[1].status, "failed");
        assert_eq!(rows[1].rank, None);
        assert!(rows[1].error.contains("need more than"));
        let pairs = collect_pairs(&[dir.path().to_path_buf()]).unwrap();
        assert_eq!(pairs[0].raw_deviation_percent, Some(2.0));
        assert_eq!(pairs[0].processed_deviation_percent, Some(0.7));
    }

    #[test]
    fn re_emit_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let records = vec![rec(2, Some(0.1 + 0.2)), rec(0, Some(1e-7)), rec(1, None)];
        let base = rec(5, Some(3.25));
        let fa = emit_report(&records, Some(&base), "x", a.path(), false).unwrap();
        let fb = emit_report(&records, Some(&base), "x", b.path(), false).unwrap();
        for (x, y) in [
            (fa.metrics, fb.metrics),
            (fa.pairs.unwrap(), fb.pairs.unwrap()),
        ] {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }

    #[test]
    fn floats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec(0, Some(0.1 + 0.2)), rec(1, Some(1.0 / 3.0))];
        let f = emit_report(&records, None, "x", dir.path(), false).unwrap();
        let rows = read_metrics(&f.metrics).unwrap();
        assert_eq!(rows[0].deviation_percent, Some(0.1 + 0.2));
        assert_eq!(rows[1].mean_error, Some(1.0 / 30.0));
    }

    #[test]
    fn empty_records_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(emit_report(&[], None, "x", dir.path(), false).is_err());
    }
}
