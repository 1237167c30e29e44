//! Rolling-window folds, lookahead rules and error metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::OlsModel;
use crate::error::{Error, Result};
use crate::gbtree::{GbtModel, GbtParams};
use crate::matrix::DenseMatrix;
use crate::series::{add_days, Horizon};

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    pub fn contains(&self, d: NaiveDate) -> bool {
        self.start <= d && d <= self.end
    }
}

/// How training anchors are separated from an evaluation period.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakageMode {
    /// Training anchors strictly precede the evaluation start.
    Anchor,
    /// Additionally, a training sample's label window must end before the
    /// evaluation start.
    #[default]
    Label,
}

impl FromStr for LeakageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "anchor" => Ok(Self::Anchor),
            "label" => Ok(Self::Label),
            _ => Err(Error::Config(format!("unknown leakage mode `{s}` (expected anchor or label)"))),
        }
    }
}

impl fmt::Display for LeakageMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Anchor => "anchor",
            Self::Label => "label",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSchedule {
    pub base_train: DateRange,
    pub folds: Vec<DateRange>,
    pub holdout_start: NaiveDate,
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}

impl FoldSchedule {
    /// Base training from July 1 to August 15 2017, five half-month
    /// validation folds through October 30, holdout from November 11.
    pub fn default_schedule() -> Self {
        let folds = [
            ((8, 16), (8, 31)),
            ((8, 31), (9, 15)),
            ((9, 15), (9, 30)),
            ((9, 30), (10, 15)),
            ((10, 15), (10, 30)),
        ]
        .iter()
        .map(|&((m0, d0), (m1, d1))| DateRange::new(ymd(2017, m0, d0), ymd(2017, m1, d1)))
        .collect();
        Self {
            base_train: DateRange::new(ymd(2017, 7, 1), ymd(2017, 8, 15)),
            folds,
            holdout_start: ymd(2017, 11, 11),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSchedule(m));
        if self.base_train.start > self.base_train.end {
            return bad("base training range is reversed".into());
        }
        let Some(first) = self.folds.first() else {
            return bad("no validation folds".into());
        };
        if first.start <= self.base_train.end {
            return bad("first fold starts inside the base training range".into());
        }
        for (i, f) in self.folds.iter().enumerate() {
            if f.start > f.end {
                return bad(format!("fold {} range is reversed", i + 1));
            }
            if i > 0 {
                let prev = &self.folds[i - 1];
                if f.start < prev.end || f.start <= prev.start {
                    return bad(format!("fold {} overlaps or precedes fold {}", i + 1, i));
                }
            }
        }
        if self.holdout_start <= self.folds.last().unwrap().end {
            return bad("holdout must start after the last fold".into());
        }
        Ok(())
    }

    /// Last holdout anchor for a horizon: the last data date minus the
    /// horizon's full label window.
    pub fn holdout_end(&self, horizon: Horizon, last_data_date: NaiveDate) -> NaiveDate {
        add_days(last_data_date, -horizon.last_offset())
    }

    pub fn holdout(&self, horizon: Horizon, last_data_date: NaiveDate) -> DateRange {
        DateRange::new(self.holdout_start, self.holdout_end(horizon, last_data_date))
    }

    /// Whether a sample anchored at `anchor` may train a model evaluated from
    /// `eval_start` onward.
    pub fn may_train(&self, anchor: NaiveDate, eval_start: NaiveDate, horizon: Horizon, mode: LeakageMode) -> bool {
        anchor >= self.base_train.start
            && anchor < eval_start
            && match mode {
                LeakageMode::Anchor => true,
                LeakageMode::Label => add_days(anchor, horizon.last_offset()) < eval_start,
            }
    }

    /// Index of the first fold whose validation range contains `anchor`.
    pub fn fold_of(&self, anchor: NaiveDate) -> Option<usize> {
        self.folds.iter().position(|f| f.contains(anchor))
    }
}

/// Row indices for one train/evaluate split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldRows {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
}

/// Rows of `anchors` used to train and validate fold `fold` (0-based).
pub fn split_samples(
    anchors: &[NaiveDate],
    schedule: &FoldSchedule,
    fold: usize,
    horizon: Horizon,
    mode: LeakageMode,
) -> Result<FoldRows> {
    let range = schedule
        .folds
        .get(fold)
        .ok_or_else(|| Error::InvalidSchedule(format!("fold {} does not exist", fold + 1)))?;
    let rows = split_by(anchors, |a| schedule.may_train(a, range.start, horizon, mode), |a| range.contains(a));
    check_nonempty(rows, fold + 1)
}

/// Rows used to train the holdout model and the holdout rows themselves.
pub fn holdout_split(
    anchors: &[NaiveDate],
    schedule: &FoldSchedule,
    horizon: Horizon,
    mode: LeakageMode,
    last_data_date: NaiveDate,
) -> Result<FoldRows> {
    let range = schedule.holdout(horizon, last_data_date);
    let rows = split_by(
        anchors,
        |a| schedule.may_train(a, range.start, horizon, mode),
        |a| range.contains(a),
    );
    check_nonempty(rows, 0)
}

/// All folds of the schedule.
pub fn all_folds(
    anchors: &[NaiveDate],
    schedule: &FoldSchedule,
    horizon: Horizon,
    mode: LeakageMode,
) -> Result<Vec<FoldRows>> {
    (0..schedule.folds.len())
        .map(|f| split_samples(anchors, schedule, f, horizon, mode))
        .collect()
}

/// Folds that have training rows, with their 0-based schedule index.
/// Under label leakage the gap before an early fold can swallow the whole
/// base training period at long horizons; such folds are skipped.
pub fn usable_folds(
    anchors: &[NaiveDate],
    schedule: &FoldSchedule,
    horizon: Horizon,
    mode: LeakageMode,
) -> Result<Vec<(usize, FoldRows)>> {
    let mut out = Vec::new();
    for f in 0..schedule.folds.len() {
        match split_samples(anchors, schedule, f, horizon, mode) {
            Ok(rows) => out.push((f, rows)),
            Err(Error::EmptyFold { part: "training", .. }) => {
                log::warn!("{horizon}: fold {} has no training rows under {mode} leakage; skipped", f + 1)
            }
            Err(e) => return Err(e),
        }
    }
    if out.is_empty() {
        return Err(Error::EmptyFold {
            fold: schedule.folds.len(),
            part: "training",
        });
    }
    Ok(out)
}

fn split_by(
    anchors: &[NaiveDate],
    train: impl Fn(NaiveDate) -> bool,
    valid: impl Fn(NaiveDate) -> bool,
) -> FoldRows {
    let mut rows = FoldRows {
        train: Vec::new(),
        valid: Vec::new(),
    };
    for (i, &a) in anchors.iter().enumerate() {
        if valid(a) {
            rows.valid.push(i);
        } else if train(a) {
            rows.train.push(i);
        }
    }
    rows
}

fn check_nonempty(rows: FoldRows, fold: usize) -> Result<FoldRows> {
    if rows.train.is_empty() {
        return Err(Error::EmptyFold { fold, part: "training" });
    }
    if rows.valid.is_empty() {
        return Err(Error::EmptyFold { fold, part: "validation" });
    }
    Ok(rows)
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(Error::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    mse(y, y_hat).map(f64::sqrt)
}

/// Root of the mean of per-fold MSEs.
pub fn cv_rmse(fold_mses: &[f64]) -> Result<f64> {
    if fold_mses.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok((fold_mses.iter().sum::<f64>() / fold_mses.len() as f64).sqrt())
}

/// A learner that can be trained on one matrix and scored on another.
pub trait Regressor: Sync {
    fn name(&self) -> &str;
    fn fit_predict(&self, train_x: &DenseMatrix, train_y: &[f64], test_x: &DenseMatrix) -> Result<Vec<f64>>;
}

impl Regressor for GbtParams {
    fn name(&self) -> &str {
        "gbtree"
    }

    fn fit_predict(&self, train_x: &DenseMatrix, train_y: &[f64], test_x: &DenseMatrix) -> Result<Vec<f64>> {
        GbtModel::fit(train_x, train_y, self)?.predict(test_x)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct OlsRegressor;

impl Regressor for OlsRegressor {
    fn name(&self) -> &str {
        "baseline"
    }

    fn fit_predict(&self, train_x: &DenseMatrix, train_y: &[f64], test_x: &DenseMatrix) -> Result<Vec<f64>> {
        OlsModel::fit(train_x, train_y)?.predict(test_x)
    }
}

/// A design matrix, its targets and a fold layout over its rows.
#[derive(Debug, Clone, Copy)]
pub struct CvTask<'a> {
    pub x: &'a DenseMatrix,
    pub y: &'a [f64],
    pub folds: &'a [FoldRows],
}

impl CvTask<'_> {
    /// Out-of-fold predictions for each fold's validation rows, computed in
    /// parallel and returned in fold order.
    pub fn fold_predictions(&self, cols: &[usize], model: &dyn Regressor) -> Result<Vec<Vec<f64>>> {
        self.folds
            .par_iter()
            .map(|f| {
                let tx = self.x.select(&f.train, cols);
                let ty: Vec<f64> = f.train.iter().map(|&r| self.y[r]).collect();
                let vx = self.x.select(&f.valid, cols);
                model.fit_predict(&tx, &ty, &vx)
            })
            .collect()
    }

    pub fn fold_mses(&self, cols: &[usize], model: &dyn Regressor) -> Result<Vec<f64>> {
        let preds = self.fold_predictions(cols, model)?;
        self.folds
            .iter()
            .zip(&preds)
            .map(|(f, p)| {
                let y: Vec<f64> = f.valid.iter().map(|&r| self.y[r]).collect();
                mse(&y, p)
            })
            .collect()
    }

    pub fn cv_rmse(&self, cols: &[usize], model: &dyn Regressor) -> Result<f64> {
        cv_rmse(&self.fold_mses(cols, model)?)
    }
}

/// One row of `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub horizon: Horizon,
    pub model: String,
    pub cv_rmse: f64,
    pub holdout_rmse: f64,
    pub fold_mses: Vec<f64>,
    pub n_train: usize,
    pub n_holdout: usize,
}

/// Metrics together with the predictions behind them.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: Metrics,
    /// Out-of-fold predictions, aligned with each fold's `valid` rows.
    pub fold_predictions: Vec<Vec<f64>>,
    pub holdout: FoldRows,
    /// Holdout-model predictions for `holdout.train` rows.
    pub train_predictions: Vec<f64>,
    /// Holdout-model predictions for `holdout.valid` rows.
    pub holdout_predictions: Vec<f64>,
}

/// Cross-validates `model` on `folds` and scores a model trained on the
/// holdout split's training rows against the holdout rows.
pub fn evaluate(
    model: &dyn Regressor,
    x: &DenseMatrix,
    y: &[f64],
    cols: &[usize],
    folds: &[FoldRows],
    holdout: &FoldRows,
    horizon: Horizon,
) -> Result<Evaluation> {
    let task = CvTask { x, y, folds };
    let fold_predictions = task.fold_predictions(cols, model)?;
    let fold_mses = folds
        .iter()
        .zip(&fold_predictions)
        .map(|(f, p)| mse(&f.valid.iter().map(|&r| y[r]).collect::<Vec<_>>(), p))
        .collect::<Result<Vec<_>>>()?;

    let tx = x.select(&holdout.train, cols);
    let ty: Vec<f64> = holdout.train.iter().map(|&r| y[r]).collect();
    let mut score_rows = holdout.train.clone();
    score_rows.extend_from_slice(&holdout.valid);
    let mut preds = model.fit_predict(&tx, &ty, &x.select(&score_rows, cols))?;
    let holdout_predictions = preds.split_off(holdout.train.len());
    let hy: Vec<f64> = holdout.valid.iter().map(|&r| y[r]).collect();

    Ok(Evaluation {
        metrics: Metrics {
            horizon,
            model: model.name().to_string(),
            cv_rmse: cv_rmse(&fold_mses)?,
            holdout_rmse: rmse(&hy, &holdout_predictions)?,
            fold_mses,
            n_train: holdout.train.len(),
            n_holdout: holdout.valid.len(),
        },
        fold_predictions,
        holdout: holdout.clone(),
        train_predictions: preds,
        holdout_predictions,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub governorate: String,
    pub n: usize,
    pub mean_residual: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Per-governorate summaries of `y - y_hat`, sorted by governorate.
pub fn residual_summaries(groups: &[&str], y: &[f64], y_hat: &[f64]) -> Vec<ResidualSummary> {
    let mut by: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for ((g, a), b) in groups.iter().zip(y).zip(y_hat) {
        by.entry(g).or_default().push(a - b);
    }
    by.into_iter()
        .map(|(g, r)| {
            let n = r.len() as f64;
            ResidualSummary {
                governorate: g.to_string(),
                n: r.len(),
                mean_residual: r.iter().sum::<f64>() / n,
                mae: r.iter().map(|v| v.abs()).sum::<f64>() / n,
                rmse: (r.iter().map(|v| v * v).sum::<f64>() / n).sqrt(),
            }
        })
        .collect()
}
