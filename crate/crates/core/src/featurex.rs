//! Windowed statistics over every frame series.
//!
//! A feature is identified by a [`FeatureDescriptor`]: which series, how
//! many days back from the anchor (inclusive), and which statistic. Every
//! statistic is total on finite, non-empty windows: degenerate inputs
//! (too short, zero variance) return 0 so the feature matrix stays dense.

use std::cmp::Ordering;
use std::fmt;
use std::fs::File;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::DATE_FORMAT;
use crate::matrix::DenseMatrix;
use crate::prep::Panel;
use crate::series::{Horizon, SeriesKind};

pub const WINDOWS: [u32; 5] = [7, 14, 28, 42, 56];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Statistic {
    Mean,
    Median,
    Min,
    Max,
    Std,
    Variance,
    Sum,
    First,
    Last,
    Range,
    AbsEnergy,
    MeanAbsChange,
    MeanChange,
    AbsSumOfChanges,
    CountAboveMean,
    CountBelowMean,
    LongestStrikeAboveMean,
    NumberPeaks1,
    NumberPeaks3,
    AutocorrLag1,
    Skewness,
    Kurtosis,
    LinearSlope,
    Quantile25,
    Quantile75,
    AboveMeanLast,
}

impl Statistic {
    pub const ALL: [Statistic; 26] = [
        Statistic::Mean,
        Statistic::Median,
        Statistic::Min,
        Statistic::Max,
        Statistic::Std,
        Statistic::Variance,
        Statistic::Sum,
        Statistic::First,
        Statistic::Last,
        Statistic::Range,
        Statistic::AbsEnergy,
        Statistic::MeanAbsChange,
        Statistic::MeanChange,
        Statistic::AbsSumOfChanges,
        Statistic::CountAboveMean,
        Statistic::CountBelowMean,
        Statistic::LongestStrikeAboveMean,
        Statistic::NumberPeaks1,
        Statistic::NumberPeaks3,
        Statistic::AutocorrLag1,
        Statistic::Skewness,
        Statistic::Kurtosis,
        Statistic::LinearSlope,
        Statistic::Quantile25,
        Statistic::Quantile75,
        Statistic::AboveMeanLast,
    ];

    /// Statistics used for the default descriptor set. `variance` is left
    /// out: it is a monotone transform of `std`, so rank tests and tree
    /// splits cannot tell the two apart.
    pub fn default_catalog() -> impl Iterator<Item = Statistic> {
        Self::ALL.into_iter().filter(|s| *s != Statistic::Variance)
    }

    pub fn name(self) -> &'static str {
        match self {
            Statistic::Mean => "mean",
            Statistic::Median => "median",
            Statistic::Min => "min",
            Statistic::Max => "max",
            Statistic::Std => "std",
            Statistic::Variance => "variance",
            Statistic::Sum => "sum",
            Statistic::First => "first",
            Statistic::Last => "last",
            Statistic::Range => "range",
            Statistic::AbsEnergy => "abs_energy",
            Statistic::MeanAbsChange => "mean_abs_change",
            Statistic::MeanChange => "mean_change",
            Statistic::AbsSumOfChanges => "abs_sum_of_changes",
            Statistic::CountAboveMean => "count_above_mean",
            Statistic::CountBelowMean => "count_below_mean",
            Statistic::LongestStrikeAboveMean => "longest_strike_above_mean",
            Statistic::NumberPeaks1 => "number_peaks_1",
            Statistic::NumberPeaks3 => "number_peaks_3",
            Statistic::AutocorrLag1 => "autocorr_lag1",
            Statistic::Skewness => "skewness",
            Statistic::Kurtosis => "kurtosis",
            Statistic::LinearSlope => "linear_slope",
            Statistic::Quantile25 => "quantile_25",
            Statistic::Quantile75 => "quantile_75",
            Statistic::AboveMeanLast => "above_mean_last",
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::UnknownStatistic(s.to_string()))
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Computes one catalog statistic over a window.
pub fn compute_statistic(stat: Statistic, window: &[f64]) -> Result<f64> {
    Ok(WindowStats::new(window)?.get(stat))
}

/// Moments and order statistics of one window, shared by all statistics.
pub struct WindowStats<'a> {
    v: &'a [f64],
    sorted: Vec<f64>,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
    degenerate: bool,
}

impl<'a> WindowStats<'a> {
    pub fn new(v: &'a [f64]) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::EmptyWindow);
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &x in v {
            let d = x - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        let mut sorted = v.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let scale = sorted[0].abs().max(sorted[sorted.len() - 1].abs());
        Ok(Self {
            v,
            mean,
            m2,
            m3,
            m4,
            degenerate: is_flat(m2.sqrt(), scale),
            sorted,
        })
    }

    pub fn get(&self, stat: Statistic) -> f64 {
        let v = self.v;
        let n = v.len();
        let mean = self.mean;
        match stat {
            Statistic::Mean => mean,
            Statistic::Median => quantile(&self.sorted, 0.5),
            Statistic::Min => self.sorted[0],
            Statistic::Max => self.sorted[n - 1],
            Statistic::Std => self.m2.sqrt(),
            Statistic::Variance => self.m2,
            Statistic::Sum => v.iter().sum(),
            Statistic::First => v[0],
            Statistic::Last => v[n - 1],
            Statistic::Range => self.sorted[n - 1] - self.sorted[0],
            Statistic::AbsEnergy => v.iter().map(|x| x * x).sum(),
            Statistic::MeanAbsChange => {
                if n < 2 {
                    0.0
                } else {
                    abs_sum_of_changes(v) / (n - 1) as f64
                }
            }
            Statistic::MeanChange => {
                if n < 2 {
                    0.0
                } else {
                    (v[n - 1] - v[0]) / (n - 1) as f64
                }
            }
            Statistic::AbsSumOfChanges => abs_sum_of_changes(v),
            Statistic::CountAboveMean => v.iter().filter(|&&x| x > mean).count() as f64,
            Statistic::CountBelowMean => v.iter().filter(|&&x| x < mean).count() as f64,
            Statistic::LongestStrikeAboveMean => {
                let (mut best, mut run) = (0usize, 0usize);
                for &x in v {
                    run = if x > mean { run + 1 } else { 0 };
                    best = best.max(run);
                }
                best as f64
            }
            Statistic::NumberPeaks1 => number_peaks(v, 1) as f64,
            Statistic::NumberPeaks3 => number_peaks(v, 3) as f64,
            Statistic::AutocorrLag1 => {
                if n < 3 {
                    0.0
                } else {
                    pearson(&v[..n - 1], &v[1..])
                }
            }
            Statistic::Skewness => {
                if n < 3 || self.degenerate {
                    0.0
                } else {
                    let nf = n as f64;
                    let g1 = self.m3 / self.m2.powf(1.5);
                    (nf * (nf - 1.0)).sqrt() / (nf - 2.0) * g1
                }
            }
            Statistic::Kurtosis => {
                if n < 4 || self.degenerate {
                    0.0
                } else {
                    let nf = n as f64;
                    let g2 = self.m4 / (self.m2 * self.m2) - 3.0;
                    ((nf + 1.0) * g2 + 6.0) * (nf - 1.0) / ((nf - 2.0) * (nf - 3.0))
                }
            }
            Statistic::LinearSlope => {
                if n < 2 {
                    0.0
                } else {
                    let xm = (n - 1) as f64 / 2.0;
                    let (mut sxy, mut sxx) = (0.0, 0.0);
                    for (i, &y) in v.iter().enumerate() {
                        let dx = i as f64 - xm;
                        sxy += dx * (y - mean);
                        sxx += dx * dx;
                    }
                    sxy / sxx
                }
            }
            Statistic::Quantile25 => quantile(&self.sorted, 0.25),
            Statistic::Quantile75 => quantile(&self.sorted, 0.75),
            Statistic::AboveMeanLast => {
                if v[n - 1] > mean {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Standard deviation negligible relative to the magnitude of the values:
/// the window is constant up to rounding in the mean.
pub(crate) fn is_flat(std: f64, scale: f64) -> bool {
    std <= 1e-10 * scale || std == 0.0
}

fn abs_sum_of_changes(v: &[f64]) -> f64 {
    v.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Count of interior points strictly greater than every neighbor within
/// `support` positions on both sides.
fn number_peaks(v: &[f64], support: usize) -> usize {
    if v.len() < 2 * support + 1 {
        return 0;
    }
    (support..v.len() - support)
        .filter(|&i| (1..=support).all(|k| v[i] > v[i - k] && v[i] > v[i + k]))
        .count()
}

/// Linear interpolation between closest ranks of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Pearson correlation; 0 when either side has (numerically) zero variance.
pub(crate) fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let scale = |s: &[f64]| s.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if is_flat((saa / n).sqrt(), scale(a)) || is_flat((sbb / n).sqrt(), scale(b)) {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// (series, lookback window in days, statistic).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureDescriptor {
    pub series: SeriesKind,
    pub window_days: u32,
    pub statistic: Statistic,
}

impl FeatureDescriptor {
    pub fn new(series: SeriesKind, window_days: u32, statistic: Statistic) -> Self {
        Self {
            series,
            window_days,
            statistic,
        }
    }

    /// Stable id such as `rainfall__w14__mean`.
    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for FeatureDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__w{}__{}", self.series, self.window_days, self.statistic)
    }
}

impl FromStr for FeatureDescriptor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadDescriptor(s.to_string());
        let mut parts = s.split("__");
        let (Some(series), Some(window), Some(stat), None) =
            (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(bad());
        };
        let series = SeriesKind::from_name(series).ok_or_else(bad)?;
        let window_days = window
            .strip_prefix('w')
            .and_then(|w| w.parse().ok())
            .filter(|w| *w >= 1)
            .ok_or_else(bad)?;
        Ok(Self::new(series, window_days, stat.parse()?))
    }
}

impl serde::Serialize for FeatureDescriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for FeatureDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// 8 series x 5 windows x 25 statistics, in (series, window, statistic) order.
pub fn default_descriptors() -> Vec<FeatureDescriptor> {
    let mut out = Vec::with_capacity(1000);
    for series in SeriesKind::ALL {
        for w in WINDOWS {
            for stat in Statistic::default_catalog() {
                out.push(FeatureDescriptor::new(series, w, stat));
            }
        }
    }
    out
}

/// Identifies the sample behind a matrix row.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SampleKey {
    pub governorate: String,
    pub anchor: NaiveDate,
}

/// Rows are samples, columns are descriptors.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub descriptors: Vec<FeatureDescriptor>,
    pub keys: Vec<SampleKey>,
    pub targets: Vec<[Option<f64>; 4]>,
    pub values: DenseMatrix,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.descriptors.len()
    }

    pub fn target(&self, row: usize, h: Horizon) -> Option<f64> {
        self.targets[row][h.index()]
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::Writer::from_writer(file);
        let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
        let mut header = vec!["governorate".to_string(), "t".to_string()];
        header.extend(self.descriptors.iter().map(FeatureDescriptor::id));
        header.extend(Horizon::ALL.iter().map(|h| format!("y{}", h.number())));
        w.write_record(&header).map_err(io)?;
        for r in 0..self.n_rows() {
            let mut rec = vec![
                self.keys[r].governorate.clone(),
                self.keys[r].anchor.format(DATE_FORMAT).to_string(),
            ];
            rec.extend((0..self.n_cols()).map(|c| self.values.get(r, c).to_string()));
            rec.extend(self.targets[r].iter().map(|y| y.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

/// Evaluates every descriptor for every panel sample.
///
/// Each (series, window) pair is summarized once per sample and all of its
/// statistics read from that summary. Rows are computed in parallel and
/// assembled in panel order.
pub fn extract_features(panel: &Panel, descriptors: &[FeatureDescriptor]) -> Result<FeatureMatrix> {
    // Group descriptor columns by (series, window) preserving column indices.
    let mut groups: Vec<((SeriesKind, u32), Vec<(usize, Statistic)>)> = Vec::new();
    for (c, d) in descriptors.iter().enumerate() {
        let key = (d.series, d.window_days);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push((c, d.statistic)),
            None => groups.push((key, vec![(c, d.statistic)])),
        }
    }
    let rows: Vec<Vec<f64>> = panel
        .samples
        .par_iter()
        .map(|s| {
            let frame = &panel.frames[s.frame];
            let mut row = vec![0.0; descriptors.len()];
            for ((series, w), stats) in &groups {
                let window = frame.window(*series, s.anchor, *w as usize).ok_or_else(|| {
                    Error::TooFewSamples {
                        needed: *w as usize,
                        found: frame.index_of(s.anchor).map_or(0, |i| i + 1),
                    }
                })?;
                let summary = WindowStats::new(window)?;
                for &(c, stat) in stats {
                    row[c] = summary.get(stat);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut values = DenseMatrix::zeros(rows.len(), descriptors.len());
    for (r, row) in rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            values.set(r, c, v);
        }
    }
    if !values.all_finite() {
        return Err(Error::NonFiniteInput("feature matrix"));
    }
    Ok(FeatureMatrix {
        descriptors: descriptors.to_vec(),
        keys: panel
            .samples
            .iter()
            .map(|s| SampleKey {
                governorate: panel.governorate(s).to_string(),
                anchor: s.anchor,
            })
            .collect(),
        targets: panel.samples.iter().map(|s| s.targets).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stat(s: Statistic, v: &[f64]) -> f64 {
        compute_statistic(s, v).unwrap()
    }

    #[test]
    fn simple_values() {
        assert_eq!(stat(Statistic::Mean, &[1.0, 2.0, 3.0]), 2.0);
        assert_eq!(stat(Statistic::AbsEnergy, &[1.0, 2.0, 3.0]), 14.0);
        assert_eq!(stat(Statistic::Median, &[3.0, 1.0, 4.0, 2.0]), 2.5);
        assert_eq!(stat(Statistic::Quantile25, &[1.0, 2.0, 3.0, 4.0, 5.0]), 2.0);
        assert_eq!(stat(Statistic::Quantile75, &[1.0, 2.0, 3.0, 4.0]), 3.25);
        assert_eq!(stat(Statistic::Range, &[4.0, -1.0, 2.0]), 5.0);
        assert_eq!(stat(Statistic::MeanChange, &[1.0, 5.0, 3.0]), 1.0);
        assert_eq!(stat(Statistic::MeanAbsChange, &[1.0, 5.0, 3.0]), 3.0);
        assert_eq!(stat(Statistic::LongestStrikeAboveMean, &[0.0, 5.0, 5.0, 0.0, 5.0]), 2.0);
        assert_eq!(stat(Statistic::LinearSlope, &[1.0, 3.0, 5.0, 7.0]), 2.0);
        assert_eq!(stat(Statistic::Std, &[1.0, 3.0]), 1.0);
        assert_eq!(stat(Statistic::Variance, &[1.0, 3.0]), 1.0);
    }

    #[test]
    fn peaks() {
        let v = [0.0, 2.0, 0.0, 3.0, 0.0];
        assert_eq!(stat(Statistic::NumberPeaks1, &v), 2.0);
        let brute = (0..v.len())
            .filter(|&i| i > 0 && i + 1 < v.len() && v[i] > v[i - 1] && v[i] > v[i + 1])
            .count();
        assert_eq!(brute, 2);
        assert_eq!(stat(Statistic::NumberPeaks3, &v), 0.0);
        assert_eq!(stat(Statistic::NumberPeaks3, &[0.0, 1.0, 2.0, 9.0, 2.0, 1.0, 0.0]), 1.0);
        assert_eq!(stat(Statistic::NumberPeaks1, &[1.0, 1.0, 1.0]), 0.0);
    }

    #[test]
    fn degenerate_fallbacks() {
        let flat = [0.3; 7];
        assert_eq!(stat(Statistic::AutocorrLag1, &flat), 0.0);
        assert_eq!(stat(Statistic::Skewness, &flat), 0.0);
        assert_eq!(stat(Statistic::Kurtosis, &flat), 0.0);
        assert_eq!(stat(Statistic::AboveMeanLast, &flat), 0.0);
        let one = [4.0];
        for s in Statistic::ALL {
            assert!(stat(s, &one).is_finite(), "{s}");
        }
        assert_eq!(stat(Statistic::MeanChange, &one), 0.0);
        assert_eq!(stat(Statistic::LinearSlope, &one), 0.0);
        assert_eq!(stat(Statistic::AutocorrLag1, &[1.0, 2.0]), 0.0);
        assert_eq!(stat(Statistic::Kurtosis, &[1.0, 2.0, 4.0]), 0.0);
        assert!(matches!(compute_statistic(Statistic::Mean, &[]), Err(Error::EmptyWindow)));
    }

    #[test]
    fn skew_and_kurtosis_match_reference_values() {
        // Adjusted Fisher-Pearson skewness and bias-corrected excess kurtosis
        // of [1, 2, 3, 4, 10], as given by scipy.stats skew/kurtosis with
        // bias=False.
        let v = [1.0, 2.0, 3.0, 4.0, 10.0];
        assert!((stat(Statistic::Skewness, &v) - 1.697_056_274_847_714_3).abs() < 1e-12);
        assert!((stat(Statistic::Kurtosis, &v) - 3.152).abs() < 1e-12);
    }

    #[test]
    fn names_parse() {
        for s in Statistic::ALL {
            assert_eq!(s.name().parse::<Statistic>().unwrap(), s);
        }
        assert!(matches!("entropy".parse::<Statistic>(), Err(Error::UnknownStatistic(_))));
        let d: FeatureDescriptor = "rainfall__w14__mean".parse().unwrap();
        assert_eq!(d, FeatureDescriptor::new(SeriesKind::Rainfall, 14, Statistic::Mean));
        assert_eq!(d.id(), "rainfall__w14__mean");
        assert!("rainfall__14__mean".parse::<FeatureDescriptor>().is_err());
    }

    #[test]
    fn default_set_has_1000_unique_sorted_columns() {
        let d = default_descriptors();
        assert_eq!(d.len(), 1000);
        let mut sorted = d.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted, d);
    }

    proptest! {
        #[test]
        fn statistics_are_finite(v in prop::collection::vec(-1e6f64..1e6, 1..60)) {
            for s in Statistic::ALL {
                prop_assert!(stat(s, &v).is_finite());
            }
            let b = stat(Statistic::AboveMeanLast, &v);
            prop_assert!(b == 0.0 || b == 1.0);
        }

        #[test]
        fn constant_windows_are_finite(c in -1e6f64..1e6, n in 1usize..60) {
            let v = vec![c; n];
            for s in Statistic::ALL {
                prop_assert!(stat(s, &v).is_finite());
            }
            prop_assert_eq!(stat(Statistic::AutocorrLag1, &v), 0.0);
        }
    }
}
