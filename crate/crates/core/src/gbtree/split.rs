use crate::matrix::DenseMatrix;

use super::GbtParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    /// Structure-score improvement net of `gamma`.
    pub gain: f64,
}

/// Threshold between two adjacent distinct values `a < b`. Rows with a
/// value strictly below the threshold go left.
#[inline]
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a * 0.5 + b * 0.5;
    if m <= a {
        b
    } else {
        m
    }
}

#[inline]
pub(crate) fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let (gr, hr) = (g - gl, h - hl);
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// Division-free necessary condition for `split_gain(..) > best`, used to
/// skip the exact evaluation for most candidates. `parent` is
/// `g * g / (h + lambda)`. Cross-multiplying by the two non-negative
/// denominators preserves the inequality; the slack absorbs rounding.
#[inline]
#[allow(clippy::too_many_arguments)]
pub(crate) fn may_beat(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64, parent: f64, best: f64) -> bool {
    let (gr, dl, dr) = (g - gl, hl + lambda, h - hl + lambda);
    let t = 2.0 * (best + gamma) + parent;
    gl * gl * dr + gr * gr * dl >= t * dl * dr * (1.0 - 1e-9)
}

/// Scans one feature whose node rows arrive in ascending value order and
/// updates `best` when a strictly better split is found. Callers scan
/// features in ascending index, so ties keep the lowest feature and the
/// smallest threshold.
#[allow(clippy::too_many_arguments)]
pub(crate) fn scan_feature(
    feature: usize,
    column: &[f64],
    mut rows: impl Iterator<Item = usize>,
    grad: &[f64],
    hess: &[f64],
    g: f64,
    h: f64,
    params: &GbtParams,
    best: &mut Option<SplitCandidate>,
) {
    let Some(mut prev) = rows.next() else {
        return;
    };
    let (mut gl, mut hl) = (0.0, 0.0);
    let parent = g * g / (h + params.lambda);
    for r in rows {
        gl += grad[prev];
        hl += hess[prev];
        let (a, b) = (column[prev], column[r]);
        prev = r;
        if a >= b {
            continue;
        }
        if hl < params.min_child_weight || h - hl < params.min_child_weight {
            continue;
        }
        let incumbent = best.map_or(0.0, |b| b.gain);
        if !may_beat(gl, hl, g, h, params.lambda, params.gamma, parent, incumbent) {
            continue;
        }
        let gain = split_gain(gl, hl, g, h, params.lambda, params.gamma);
        if gain > incumbent {
            *best = Some(SplitCandidate {
                feature,
                threshold: midpoint(a, b),
                gain,
            });
        }
    }
}

/// Best split of the node holding `rows`, considering `features` (scanned in
/// ascending order). Returns `None` when no split has positive gain.
pub fn find_best_split(
    x: &DenseMatrix,
    grad: &[f64],
    hess: &[f64],
    rows: &[usize],
    features: &[usize],
    params: &GbtParams,
) -> Option<SplitCandidate> {
    if rows.len() < 2 {
        return None;
    }
    let g: f64 = rows.iter().map(|&r| grad[r]).sum();
    let h: f64 = rows.iter().map(|&r| hess[r]).sum();
    let mut feats = features.to_vec();
    feats.sort_unstable();
    feats.dedup();
    let mut best = None;
    let mut sorted = rows.to_vec();
    for f in feats {
        let col = x.column(f);
        sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        scan_feature(f, col, sorted.iter().copied(), grad, hess, g, h, params, &mut best);
    }
    best
}
