//! `history.csv`: one row per evaluated epoch.

use std::path::Path;

use anyhow::{bail, Context, Result};
use miatt_forge::uttl::{HistoryRecord, TrainHistory};

pub const HEADER: [&str; 12] = [
    "epoch", "loss", "LTP", "LFP", "LTN", "LFN", "LPrecision", "LRecall", "LF1", "LAccuracy", "LIoU", "LErrors",
];

/// A parsed history row; undefined metrics are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub loss: f64,
    pub ltp: u64,
    pub lfp: u64,
    pub ltn: u64,
    pub lfn: u64,
    pub lprecision: Option<f64>,
    pub lrecall: Option<f64>,
    pub lf1: Option<f64>,
    pub laccuracy: Option<f64>,
    pub liou: Option<f64>,
    pub lerrors: u64,
}

impl From<&HistoryRecord> for HistoryRow {
    fn from(r: &HistoryRecord) -> Self {
        Self {
            epoch: r.epoch,
            loss: r.loss,
            ltp: r.counts.ltp,
            lfp: r.counts.lfp,
            ltn: r.counts.ltn,
            lfn: r.counts.lfn,
            lprecision: r.metrics.lprecision,
            lrecall: r.metrics.lrecall,
            lf1: r.metrics.lf1,
            laccuracy: r.metrics.laccuracy,
            liou: r.metrics.liou,
            lerrors: r.counts.lfp + r.counts.lfn,
        }
    }
}

fn metric(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| x.to_string())
}

pub fn write_history(history: &TrainHistory) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for record in &history.records {
        let r = HistoryRow::from(record);
        w.write_record([
            r.epoch.to_string(),
            r.loss.to_string(),
            r.ltp.to_string(),
            r.lfp.to_string(),
            r.ltn.to_string(),
            r.lfn.to_string(),
            metric(r.lprecision),
            metric(r.lrecall),
            metric(r.lf1),
            metric(r.laccuracy),
            metric(r.liou),
            r.lerrors.to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn parse_history(text: &str) -> Result<Vec<HistoryRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers()?.clone();
    if header.iter().ne(HEADER) {
        bail!("history header must be `{}`", HEADER.join(","));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| record.get(k).unwrap_or("");
        let int = |k: usize| -> Result<u64> {
            field(k).parse().with_context(|| format!("row {}: column {} is not an integer", i + 1, HEADER[k]))
        };
        let real = |k: usize| -> Result<Option<f64>> {
            match field(k) {
                "nan" => Ok(None),
                s => Ok(Some(s.parse().with_context(|| format!("row {}: column {} is not a number", i + 1, HEADER[k]))?)),
            }
        };
        rows.push(HistoryRow {
            epoch: int(0)? as usize,
            loss: real(1)?.context("loss is never undefined")?,
            ltp: int(2)?,
            lfp: int(3)?,
            ltn: int(4)?,
            lfn: int(5)?,
            lprecision: real(6)?,
            lrecall: real(7)?,
            lf1: real(8)?,
            laccuracy: real(9)?,
            liou: real(10)?,
            lerrors: int(11)?,
        });
    }
    Ok(rows)
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_history(&text).with_context(|| format!("parsing {}", path.display()))
}
