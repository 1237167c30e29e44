//! Forecast records and per-series plot data.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::DATE_FORMAT;
use crate::series::Horizon;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Cv,
    Holdout,
    Future,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Cv => "cv",
            Split::Holdout => "holdout",
            Split::Future => "future",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub governorate: String,
    pub anchor: NaiveDate,
    pub horizon: Horizon,
    /// Absent for future anchors.
    pub y_true: Option<f64>,
    pub y_pred: f64,
    pub split: Split,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::io(path, std::io::Error::other(e.to_string()))
}

pub fn write_forecasts(path: &Path, records: &[ForecastRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = csv_err(path);
    w.write_record(["governorate", "anchor", "horizon", "y_true", "y_pred", "split"])
        .map_err(&err)?;
    for r in records {
        w.write_record([
            r.governorate.clone(),
            r.anchor.format(DATE_FORMAT).to_string(),
            r.horizon.number().to_string(),
            r.y_true.map(|v| v.to_string()).unwrap_or_default(),
            r.y_pred.to_string(),
            r.split.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes one `<governorate>_h<k>.csv` per (governorate, horizon) with
/// columns `date, y_true, y_pred, split`, rows in date order.
pub fn emit_plot_data(records: &[ForecastRecord], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut groups: BTreeMap<(&str, Horizon), Vec<&ForecastRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((&r.governorate, r.horizon)).or_default().push(r);
    }
    let mut written = Vec::with_capacity(groups.len());
    for ((gov, h), mut rows) in groups {
        rows.sort_by_key(|r| r.anchor);
        let path = out_dir.join(format!("{gov}_h{}.csv", h.number()));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let err = csv_err(&path);
        w.write_record(["date", "y_true", "y_pred", "split"]).map_err(&err)?;
        for r in rows {
            w.write_record([
                r.anchor.format(DATE_FORMAT).to_string(),
                r.y_true.map(|v| v.to_string()).unwrap_or_default(),
                r.y_pred.to_string(),
                r.split.to_string(),
            ])
            .map_err(&err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        drop(err);
        written.push(path);
    }
    Ok(written)
}

/// Undoes differencing: running totals of `increments` starting from
/// `initial`.
pub fn reverse_difference(initial: f64, increments: &[f64]) -> Vec<f64> {
    increments
        .iter()
        .scan(initial, |acc, d| {
            *acc += d;
            Some(*acc)
        })
        .collect()
}
