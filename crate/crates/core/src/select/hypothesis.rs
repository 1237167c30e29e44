//! Rank-based significance tests and Benjamini-Yekutieli adjustment.

use std::cmp::Ordering;

use libm::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KendallResult {
    pub tau_b: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MannWhitneyResult {
    /// U statistic of the `x == 1` group.
    pub u: f64,
    pub p_value: f64,
}

/// Tie-group sums needed by the Kendall variance: for tie groups of size t,
/// `Σ t(t-1)/2`, `Σ t(t-1)(2t+5)`, `Σ t(t-1)(t-2)`.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub(crate) struct TieSums {
    pub pairs: i64,
    pub v0: i64,
    pub v2: i64,
}

impl TieSums {
    fn add_group(&mut self, t: i64) {
        if t > 1 {
            self.pairs += t * (t - 1) / 2;
            self.v0 += t * (t - 1) * (2 * t + 5);
            self.v2 += t * (t - 1) * (t - 2);
        }
    }
}

#[inline]
fn cmp(a: f64, b: f64) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

/// Two-sided upper tail of the standard normal.
fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

/// Kendall tau-b with its asymptotic two-sided p-value from `S` and the tie
/// structure of both variables.
pub(crate) fn kendall_from_counts(n: i64, s: i64, x_ties: TieSums, y_ties: TieSums) -> KendallResult {
    let n0 = n * (n - 1) / 2;
    if x_ties.pairs == n0 || y_ties.pairs == n0 {
        return KendallResult {
            tau_b: 0.0,
            p_value: 1.0,
        };
    }
    let tau_b = s as f64 / (((n0 - x_ties.pairs) as f64) * ((n0 - y_ties.pairs) as f64)).sqrt();
    let nf = n as f64;
    let v0 = nf * (nf - 1.0) * (2.0 * nf + 5.0);
    let v1 = (2 * x_ties.pairs) as f64 * (2 * y_ties.pairs) as f64 / (2.0 * nf * (nf - 1.0));
    let v2 = x_ties.v2 as f64 * y_ties.v2 as f64 / (9.0 * nf * (nf - 1.0) * (nf - 2.0));
    let var = (v0 - x_ties.v0 as f64 - y_ties.v0 as f64) / 18.0 + v1 + v2;
    let p_value = if var > 0.0 {
        two_sided_p(s as f64 / var.sqrt())
    } else {
        1.0
    };
    KendallResult {
        tau_b: tau_b.clamp(-1.0, 1.0),
        p_value,
    }
}

fn tie_sums_sorted(v: impl Iterator<Item = f64>) -> TieSums {
    let mut sums = TieSums::default();
    let mut prev: Option<f64> = None;
    let mut run = 0i64;
    for x in v {
        if prev.is_some_and(|p| cmp(p, x) == Ordering::Equal) {
            run += 1;
        } else {
            sums.add_group(run);
            run = 1;
        }
        prev = Some(x);
    }
    sums.add_group(run);
    sums
}

/// Merge sort on `y` counting strict inversions.
fn count_inversions(y: &mut [f64], buf: &mut [f64]) -> i64 {
    let n = y.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = {
        let (l, r) = y.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        count_inversions(l, bl) + count_inversions(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if cmp(y[j], y[i]) == Ordering::Less {
            buf[k] = y[j];
            inv += (mid - i) as i64;
            j += 1;
        } else {
            buf[k] = y[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&y[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&y[j..n]);
    y.copy_from_slice(&buf[..n]);
    inv
}

/// Kendall tau-b in O(n log n) (Knight's algorithm) with the tie-adjusted
/// normal approximation for the p-value. A constant `x` or `y` gives
/// `tau = 0, p = 1`.
pub fn kendall_test(x: &[f64], y: &[f64]) -> Result<KendallResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooFewSamples { needed: 3, found: n });
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| cmp(a.0, b.0).then(cmp(a.1, b.1)));

    let x_ties = tie_sums_sorted(pairs.iter().map(|p| p.0));
    // Pairs tied in both coordinates.
    let mut joint = 0i64;
    let mut run = 1i64;
    for w in pairs.windows(2) {
        if cmp(w[0].0, w[1].0) == Ordering::Equal && cmp(w[0].1, w[1].1) == Ordering::Equal {
            run += 1;
        } else {
            joint += run * (run - 1) / 2;
            run = 1;
        }
    }
    joint += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let discordant = count_inversions(&mut ys, &mut buf);
    let y_ties = tie_sums_sorted(ys.iter().copied());

    let ni = n as i64;
    let n0 = ni * (ni - 1) / 2;
    let s = n0 - x_ties.pairs - y_ties.pairs + joint - 2 * discordant;
    Ok(kendall_from_counts(ni, s, x_ties, y_ties))
}

/// Midranks (1-based) of `v`, ties sharing the average rank, plus the tie
/// correction term `Σ (t³ - t)`.
pub(crate) fn midranks(v: &[f64]) -> (Vec<f64>, f64) {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| cmp(v[a], v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && cmp(v[idx[j]], v[idx[i]]) == Ordering::Equal {
            j += 1;
        }
        let avg = (i + j + 1) as f64 / 2.0;
        for &k in &idx[i..j] {
            ranks[k] = avg;
        }
        let t = (j - i) as f64;
        tie_term += t * t * t - t;
        i = j;
    }
    (ranks, tie_term)
}

/// Mann-Whitney U for the `x == 1` group against the `x == 0` group of `y`,
/// with midrank ties. The p-value is two-sided from the normal
/// approximation with tie and 0.5 continuity corrections.
pub fn mann_whitney_test(x: &[f64], y: &[f64]) -> Result<MannWhitneyResult> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidParams("mann_whitney_test needs a 0/1 column".into()));
    }
    let n1 = x.iter().filter(|&&v| v == 1.0).count();
    let n0 = x.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::DegenerateGroups);
    }
    let (ranks, tie_term) = midranks(y);
    let r1: f64 = ranks.iter().zip(x).filter(|(_, &g)| g == 1.0).map(|(r, _)| r).sum();
    let (n1f, n0f) = (n1 as f64, n0 as f64);
    let u = r1 - n1f * (n1f + 1.0) / 2.0;
    let n = n1f + n0f;
    let mu = n1f * n0f / 2.0;
    let var = n1f * n0f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    let p_value = if var > 0.0 {
        let z = ((u - mu).abs() - 0.5) / var.sqrt();
        if z <= 0.0 {
            1.0
        } else {
            two_sided_p(z)
        }
    } else {
        1.0
    };
    Ok(MannWhitneyResult { u, p_value })
}

/// Benjamini-Yekutieli q-values, returned in input order.
///
/// With `m` tests and `c(m) = Σ_{k≤m} 1/k`, the sorted q-values are
/// `q_(i) = min_{j≥i} m·c(m)·p_(j)/j`, clipped to 1.
pub fn benjamini_yekutieli(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    if m == 0 {
        return Vec::new();
    }
    let c: f64 = (1..=m).map(|k| 1.0 / k as f64).sum();
    let factor = m as f64 * c;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; m];
    let mut running = f64::INFINITY;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(factor * p_values[i] / (rank + 1) as f64);
        q[i] = running.min(1.0);
    }
    q
}
