//! Feature selection: significance filtering, decorrelation, importance
//! ranking and greedy forward selection.
//!
//! All functions work on column indices of one matrix. Ties are broken by
//! column index, so callers keep columns in canonical descriptor order.

mod hypothesis;

pub use hypothesis::{benjamini_yekutieli, kendall_test, mann_whitney_test, KendallResult, MannWhitneyResult};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::CvTask;
use crate::error::{Error, Result};
use crate::featurex::is_flat;
use crate::gbtree::{GbtModel, GbtParams};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub q_cut: f64,
    pub corr_threshold: f64,
    pub cap: usize,
    pub min_delta: f64,
    /// Forward selection considers at most this many ranked candidates.
    pub max_candidates: Option<usize>,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            q_cut: 0.001,
            corr_threshold: 0.97,
            cap: 50,
            min_delta: 1e-4,
            max_candidates: Some(80),
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.q_cut) {
            return Err(Error::Config("selection.q_cut must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.corr_threshold) {
            return Err(Error::Config("selection.corr_threshold must be in [0, 1]".into()));
        }
        if self.cap == 0 {
            return Err(Error::Config("selection.cap must be positive".into()));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Config("selection.min_delta must be non-negative".into()));
        }
        if self.max_candidates == Some(0) {
            return Err(Error::Config("selection.max_candidates must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    KendallTau,
    MannWhitneyU,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTest {
    pub column: usize,
    pub test: TestKind,
    /// Kendall tau-b or the U statistic; `None` when the test was degenerate.
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub q_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Significance {
    /// One entry per column, in column order.
    pub tests: Vec<ColumnTest>,
    /// Columns with `q <= q_cut`, by ascending q then column.
    pub survivors: Vec<usize>,
}

/// A column is binary iff all of its values are 0 or 1.
pub fn is_binary(column: &[f64]) -> bool {
    column.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Tests every column against `target` (Mann-Whitney for binary columns,
/// Kendall tau-b otherwise), adjusts with Benjamini-Yekutieli over all
/// columns, and keeps those with `q <= q_cut`.
pub fn significance_filter(x: &DenseMatrix, target: &[f64], q_cut: f64) -> Result<Significance> {
    if target.len() != x.n_rows() {
        return Err(Error::LengthMismatch {
            left: x.n_rows(),
            right: target.len(),
        });
    }
    let raw: Vec<(TestKind, Option<f64>, f64)> = (0..x.n_cols())
        .into_par_iter()
        .map(|c| {
            let col = x.column(c);
            if is_binary(col) {
                match mann_whitney_test(col, target) {
                    Ok(r) => Ok((TestKind::MannWhitneyU, Some(r.u), r.p_value)),
                    Err(Error::DegenerateGroups) => Ok((TestKind::MannWhitneyU, None, 1.0)),
                    Err(e) => Err(e),
                }
            } else {
                kendall_test(col, target).map(|r| (TestKind::KendallTau, Some(r.tau_b), r.p_value))
            }
        })
        .collect::<Result<_>>()?;
    let p: Vec<f64> = raw.iter().map(|r| r.2).collect();
    let q = benjamini_yekutieli(&p);
    let tests: Vec<ColumnTest> = raw
        .into_iter()
        .enumerate()
        .map(|(column, (test, statistic, p_value))| ColumnTest {
            column,
            test,
            statistic,
            p_value,
            q_value: q[column],
        })
        .collect();
    let mut survivors: Vec<usize> = (0..tests.len()).filter(|&c| q[c] <= q_cut).collect();
    survivors.sort_by(|&a, &b| q[a].total_cmp(&q[b]).then(a.cmp(&b)));
    if survivors.is_empty() {
        warn!("no feature survived the significance filter at q <= {q_cut}");
    }
    Ok(Significance { tests, survivors })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub dropped: usize,
    /// The already-kept column it was too correlated with.
    pub kept: usize,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pruned {
    pub kept: Vec<usize>,
    pub dropped: Vec<DroppedPair>,
}

/// Centered column scaled to unit norm, or `None` for a flat column.
fn unit_column(col: &[f64]) -> Option<Vec<f64>> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
    let ss: f64 = centered.iter().map(|v| v * v).sum();
    let scale = col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if is_flat((ss / n).sqrt(), scale) {
        return None;
    }
    let norm = ss.sqrt();
    Some(centered.into_iter().map(|v| v / norm).collect())
}

/// Greedy decorrelation: walking `order`, a column is dropped when its
/// |Pearson r| with any already-kept column exceeds `threshold`. Flat
/// columns count as uncorrelated with everything.
pub fn correlation_prune(x: &DenseMatrix, order: &[usize], threshold: f64) -> Pruned {
    let units: Vec<Option<Vec<f64>>> = order.par_iter().map(|&c| unit_column(x.column(c))).collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut kept_units: Vec<(usize, &[f64])> = Vec::new();
    let mut dropped = Vec::new();
    for (&c, u) in order.iter().zip(&units) {
        let clash = u.as_deref().and_then(|u| {
            kept_units.iter().find_map(|&(k, ku)| {
                let r = u.iter().zip(ku).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
                (r.abs() > threshold).then_some((k, r))
            })
        });
        match clash {
            Some((k, r)) => dropped.push(DroppedPair { dropped: c, kept: k, r }),
            None => {
                kept.push(c);
                if let Some(u) = u {
                    kept_units.push((c, u));
                }
            }
        }
    }
    Pruned { kept, dropped }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub column: usize,
    pub importance: f64,
}

/// Fits one booster on `columns` and orders them by total split gain,
/// descending, ties by column index.
pub fn importance_rank(
    x: &DenseMatrix,
    target: &[f64],
    columns: &[usize],
    params: &GbtParams,
) -> Result<Vec<RankedFeature>> {
    if columns.is_empty() {
        return Err(Error::EmptyInput);
    }
    let rows: Vec<usize> = (0..x.n_rows()).collect();
    let model = GbtModel::fit(&x.select(&rows, columns), target, params)?;
    let imp = model.importance();
    let mut ranked: Vec<RankedFeature> = columns
        .iter()
        .zip(&imp)
        .map(|(&column, &importance)| RankedFeature { column, importance })
        .collect();
    ranked.sort_by(|a, b| b.importance.total_cmp(&a.importance).then(a.column.cmp(&b.column)));
    Ok(ranked)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardStep {
    pub column: usize,
    pub cv_rmse: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutcome {
    pub selected: Vec<usize>,
    pub cv_rmse: f64,
    pub trajectory: Vec<ForwardStep>,
}

/// Greedy forward selection in rank order: the top feature is always taken,
/// later candidates are kept only when they lower the CV RMSE by more than
/// `min_delta`. Stops when the candidates run out or `cap` is reached.
pub fn forward_select(
    ranked: &[usize],
    task: &CvTask<'_>,
    params: &GbtParams,
    min_delta: f64,
    cap: usize,
    max_candidates: Option<usize>,
) -> Result<ForwardOutcome> {
    let Some((&first, rest)) = ranked.split_first() else {
        return Err(Error::EmptyInput);
    };
    let limit = max_candidates.unwrap_or(usize::MAX).min(ranked.len());
    let mut selected = vec![first];
    let mut best = task.cv_rmse(&selected, params)?;
    let mut trajectory = vec![ForwardStep {
        column: first,
        cv_rmse: best,
        accepted: true,
    }];
    for &c in rest.iter().take(limit - 1) {
        if selected.len() >= cap {
            break;
        }
        selected.push(c);
        let score = task.cv_rmse(&selected, params)?;
        let accepted = best - score > min_delta;
        if accepted {
            best = score;
        } else {
            selected.pop();
        }
        trajectory.push(ForwardStep {
            column: c,
            cv_rmse: score,
            accepted,
        });
    }
    info!(
        "forward selection kept {} of {} candidates (cv rmse {best:.5})",
        selected.len(),
        trajectory.len()
    );
    Ok(ForwardOutcome {
        selected,
        cv_rmse: best,
        trajectory,
    })
}
