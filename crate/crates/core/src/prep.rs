//! From raw tables to aligned per-governorate daily frames, forecast targets
//! and the sample panel.

use std::collections::BTreeMap;
use std::fs::File;
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};

use crate::error::{Error, Result};
use crate::ingest::{self, GovernorateRegistry, RawCumulativeReport, RawInputs};
use crate::series::{add_days, DailySeries, Horizon, SeriesKind};

/// Longest feature lookback, in days. A sample needs this much history.
pub const HISTORY_DAYS: i64 = 56;

/// New cases and deaths between two consecutive cumulative reports.
/// Covers the days `(after, through]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportInterval {
    pub after: NaiveDate,
    pub through: NaiveDate,
    pub new_cases: f64,
    pub new_deaths: f64,
}

impl ReportInterval {
    pub fn days(&self) -> i64 {
        (self.through - self.after).num_days()
    }
}

/// Differences consecutive cumulative reports of one governorate.
///
/// Reporting corrections that make the cumulative count drop are clamped
/// to zero new cases and logged.
pub fn cumulative_to_new(reports: &[RawCumulativeReport]) -> Result<Vec<ReportInterval>> {
    if reports.len() < 2 {
        return Err(Error::InsufficientReports {
            governorate: reports.first().map(|r| r.governorate.clone()).unwrap_or_default(),
            found: reports.len(),
        });
    }
    let clamp = |delta: f64, what: &str, r: &RawCumulativeReport| {
        if delta < 0.0 {
            warn!(
                "{}: cumulative {what} fell by {} on {}, clamping to 0",
                r.governorate, -delta, r.date
            );
            0.0
        } else {
            delta
        }
    };
    Ok(reports
        .windows(2)
        .map(|w| {
            let (a, b) = (&w[0], &w[1]);
            ReportInterval {
                after: a.date,
                through: b.date,
                new_cases: clamp(b.cumulative_cases - a.cumulative_cases, "cases", b),
                new_deaths: clamp(b.cumulative_deaths - a.cumulative_deaths, "deaths", b),
            }
        })
        .collect())
}

/// Daily new cases and deaths for one governorate.
#[derive(Debug, Clone, PartialEq)]
pub struct DailyCounts {
    pub cases: DailySeries,
    pub deaths: DailySeries,
}

/// Spreads each interval's total uniformly over its days, so that `n` new
/// cases over `d` days become `n / d` on each day after the earlier report
/// up to and including the later one.
pub fn interpolate_daily(governorate: &str, intervals: &[ReportInterval]) -> Result<DailyCounts> {
    let start = intervals
        .first()
        .map(|iv| add_days(iv.after, 1))
        .ok_or(Error::EmptyInput)?;
    let mut cases = Vec::new();
    let mut deaths = Vec::new();
    let mut expected_after = intervals[0].after;
    for iv in intervals {
        if iv.after != expected_after || iv.days() < 1 {
            return Err(Error::NonContiguousIntervals { date: iv.after });
        }
        let d = iv.days() as f64;
        let (c, k) = (iv.new_cases / d, iv.new_deaths / d);
        for _ in 0..iv.days() {
            cases.push(c);
            deaths.push(k);
        }
        expected_after = iv.through;
    }
    Ok(DailyCounts {
        cases: DailySeries::new(governorate, start, cases),
        deaths: DailySeries::new(governorate, start, deaths),
    })
}

/// Rescales a count series to events per 10,000 people.
pub fn normalize_per_10k(series: &DailySeries, population: i64) -> Result<DailySeries> {
    if population <= 0 {
        return Err(Error::NonPositivePopulation {
            id: series.governorate.clone(),
            population,
        });
    }
    let scale = 10_000.0 / population as f64;
    Ok(DailySeries::new(
        series.governorate.clone(),
        series.start,
        series.values.iter().map(|v| v * scale).collect(),
    ))
}

/// All eight aligned series of one governorate. Case and death series are
/// per 10,000 people; rainfall is mm/day and conflict fatalities/day.
#[derive(Debug, Clone, PartialEq)]
pub struct GovernorateFrame {
    pub governorate: String,
    pub start: NaiveDate,
    series: [Vec<f64>; 8],
}

impl GovernorateFrame {
    /// A frame with the four observed series; neighbor series start as zeros.
    pub fn new(
        governorate: impl Into<String>,
        start: NaiveDate,
        new_cases: Vec<f64>,
        new_deaths: Vec<f64>,
        rainfall: Vec<f64>,
        conflict: Vec<f64>,
    ) -> Self {
        let n = new_cases.len();
        assert!(
            new_deaths.len() == n && rainfall.len() == n && conflict.len() == n,
            "frame series must share one date range"
        );
        Self {
            governorate: governorate.into(),
            start,
            series: [
                new_cases,
                new_deaths,
                rainfall,
                conflict,
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
                vec![0.0; n],
            ],
        }
    }

    pub fn len(&self) -> usize {
        self.series[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn end(&self) -> NaiveDate {
        add_days(self.start, self.len() as i64 - 1)
    }

    pub fn series(&self, kind: SeriesKind) -> &[f64] {
        &self.series[kind.index()]
    }

    pub fn series_mut(&mut self, kind: SeriesKind) -> &mut Vec<f64> {
        &mut self.series[kind.index()]
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let off = (date - self.start).num_days();
        (off >= 0 && (off as usize) < self.len()).then_some(off as usize)
    }

    /// The `days` values ending at `anchor` inclusive, if covered.
    pub fn window(&self, kind: SeriesKind, anchor: NaiveDate, days: usize) -> Option<&[f64]> {
        let end = self.index_of(anchor)?;
        let begin = (end + 1).checked_sub(days)?;
        Some(&self.series(kind)[begin..=end])
    }

    /// Sum of new cases over a horizon's label window, if covered.
    pub fn target(&self, anchor: NaiveDate, horizon: Horizon) -> Option<f64> {
        let a = (anchor - self.start).num_days();
        let first = a + horizon.first_offset();
        let last = a + horizon.last_offset();
        if a < 0 || first < 0 || last >= self.len() as i64 {
            return None;
        }
        Some(self.series(SeriesKind::NewCases)[first as usize..=last as usize].iter().sum())
    }
}

/// Fills the `nb_*` series of every frame with the mean of the matching
/// observed series over the registry neighbors. Governorates without
/// neighbors get all-zero neighbor series.
pub fn neighbor_mean(frames: &mut [GovernorateFrame], registry: &GovernorateRegistry) -> Result<()> {
    let index: BTreeMap<String, usize> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| (f.governorate.clone(), i))
        .collect();
    let n = frames.first().map_or(0, GovernorateFrame::len);
    if frames.iter().any(|f| f.len() != n || f.start != frames[0].start) {
        return Err(Error::InvalidParams("frames must share one date range".into()));
    }
    let mut updates = Vec::with_capacity(frames.len());
    for frame in frames.iter() {
        let meta = registry.get(&frame.governorate).ok_or_else(|| Error::UnknownGovernorate {
            id: frame.governorate.clone(),
            context: "frames".into(),
        })?;
        // BTreeSet order makes the sum independent of how neighbors were listed.
        let members: Vec<usize> = meta
            .neighbors
            .iter()
            .map(|nb| {
                index.get(nb).copied().ok_or_else(|| Error::UnknownGovernorate {
                    id: nb.clone(),
                    context: format!("frames (neighbor of {})", frame.governorate),
                })
            })
            .collect::<Result<_>>()?;
        let mut nb_series: Vec<Vec<f64>> = Vec::with_capacity(4);
        for kind in SeriesKind::OWN {
            let mut acc = vec![0.0; n];
            if !members.is_empty() {
                for &m in &members {
                    for (a, v) in acc.iter_mut().zip(frames[m].series(kind)) {
                        *a += v;
                    }
                }
                let k = members.len() as f64;
                acc.iter_mut().for_each(|a| *a /= k);
            }
            nb_series.push(acc);
        }
        updates.push(nb_series);
    }
    for (frame, nb_series) in frames.iter_mut().zip(updates) {
        for (kind, values) in SeriesKind::OWN.into_iter().zip(nb_series) {
            *frame.series_mut(kind.neighbor()) = values;
        }
    }
    Ok(())
}

/// Cases per 10,000 over the four label windows following an anchor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetVector(pub [f64; 4]);

impl TargetVector {
    pub fn get(&self, h: Horizon) -> f64 {
        self.0[h.index()]
    }
}

pub fn build_targets(frame: &GovernorateFrame, anchor: NaiveDate) -> Result<TargetVector> {
    let mut y = [0.0; 4];
    for h in Horizon::ALL {
        y[h.index()] = frame.target(anchor, h).ok_or_else(|| Error::InsufficientFuture {
            governorate: frame.governorate.clone(),
            anchor,
        })?;
    }
    Ok(TargetVector(y))
}

/// Builds the aligned frames from raw inputs.
///
/// The common date range runs from the latest first-interpolated day to the
/// earliest last report over all governorates with cholera reports.
pub fn build_frames(inputs: &RawInputs) -> Result<Vec<GovernorateFrame>> {
    let mut by_gov: BTreeMap<&str, Vec<RawCumulativeReport>> = BTreeMap::new();
    for r in &inputs.reports {
        by_gov.entry(r.governorate.as_str()).or_default().push(r.clone());
    }
    if by_gov.is_empty() {
        return Err(Error::EmptyPanel);
    }
    for id in inputs.registry.ids() {
        if !by_gov.contains_key(id) {
            warn!("governorate {id} has no cholera reports and is left out");
        }
    }

    let mut counts = Vec::with_capacity(by_gov.len());
    for (id, reports) in &by_gov {
        let intervals = cumulative_to_new(reports)?;
        let daily = interpolate_daily(id, &intervals)?;
        let pop = inputs.registry.get(id).map(|m| m.population).ok_or_else(|| {
            Error::UnknownGovernorate {
                id: id.to_string(),
                context: "cholera reports".into(),
            }
        })?;
        counts.push((
            id.to_string(),
            normalize_per_10k(&daily.cases, pop)?,
            normalize_per_10k(&daily.deaths, pop)?,
        ));
    }
    let start = counts.iter().map(|(_, c, _)| c.start).max().unwrap();
    let end = counts.iter().filter_map(|(_, c, _)| c.end()).min().unwrap();
    if end < start {
        return Err(Error::EmptyPanel);
    }
    let n = (end - start).num_days() as usize + 1;

    let rain = ingest::aggregate_rainfall(&inputs.rainfall, &inputs.grid)?;
    let ids: Vec<String> = counts.iter().map(|(id, _, _)| id.clone()).collect();
    let conflict = ingest::aggregate_conflict(&inputs.conflict, &ids, start, end);

    let trim = |s: &DailySeries| {
        let i = s.index_of(start).expect("common range inside series");
        s.values[i..i + n].to_vec()
    };
    let mut frames = Vec::with_capacity(counts.len());
    for (id, cases, deaths) in &counts {
        let rainfall = ingest::rainfall_series(&rain, id, start, end)?;
        frames.push(GovernorateFrame::new(
            id.clone(),
            start,
            trim(cases),
            trim(deaths),
            rainfall.values,
            conflict[id].values.clone(),
        ));
    }
    // Neighbors without reports are dropped from the neighbor means.
    let kept: Vec<crate::ingest::GovernorateMeta> = inputs
        .registry
        .iter()
        .filter(|m| ids.contains(&m.id))
        .map(|m| {
            let mut m = m.clone();
            m.neighbors.retain(|nb| ids.contains(nb));
            m
        })
        .collect();
    neighbor_mean(&mut frames, &GovernorateRegistry::new(kept)?)?;
    info!(
        "prepared {} governorates over {start}..={end} ({n} days)",
        frames.len()
    );
    Ok(frames)
}

/// One (governorate, anchor) sample. Targets are absent when the label
/// window runs past the data.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub frame: usize,
    pub anchor: NaiveDate,
    pub targets: [Option<f64>; 4],
}

impl Sample {
    pub fn target(&self, h: Horizon) -> Option<f64> {
        self.targets[h.index()]
    }
}

#[derive(Debug, Clone)]
pub struct Panel {
    pub frames: Vec<GovernorateFrame>,
    pub samples: Vec<Sample>,
    pub excluded: usize,
}

impl Panel {
    pub fn governorate(&self, s: &Sample) -> &str {
        &self.frames[s.frame].governorate
    }

    /// Last day covered by every frame.
    pub fn last_date(&self) -> NaiveDate {
        self.frames.iter().map(GovernorateFrame::end).min().expect("non-empty panel")
    }
}

/// Every anchor date at which a frame has a full feature history.
pub fn eligible_anchors(frames: &[GovernorateFrame]) -> Vec<NaiveDate> {
    let Some(f) = frames.first() else {
        return Vec::new();
    };
    (HISTORY_DAYS - 1..f.len() as i64)
        .map(|i| add_days(f.start, i))
        .collect()
}

/// One sample per (governorate, anchor) with a full history window and, when
/// `required` is given, a complete label window for that horizon. Samples
/// failing either condition are dropped and counted.
pub fn assemble_panel(
    frames: Vec<GovernorateFrame>,
    anchors: &[NaiveDate],
    required: Option<Horizon>,
) -> Result<Panel> {
    let mut samples = Vec::new();
    let mut excluded = 0;
    for (fi, frame) in frames.iter().enumerate() {
        for &anchor in anchors {
            let has_history = frame.window(SeriesKind::NewCases, anchor, HISTORY_DAYS as usize).is_some();
            let mut targets = [None; 4];
            for h in Horizon::ALL {
                targets[h.index()] = frame.target(anchor, h);
            }
            let has_future = required.is_none_or(|h| targets[h.index()].is_some());
            if has_history && has_future {
                samples.push(Sample {
                    frame: fi,
                    anchor,
                    targets,
                });
            } else {
                excluded += 1;
            }
        }
    }
    if excluded > 0 {
        info!("panel: {excluded} (governorate, anchor) pairs excluded for missing history or future");
    }
    if samples.is_empty() {
        return Err(Error::EmptyPanel);
    }
    Ok(Panel {
        frames,
        samples,
        excluded,
    })
}

/// Debug dump: governorate, anchor, every series at the anchor, y1..y4.
pub fn write_panel_csv(path: impl AsRef<Path>, panel: &Panel) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let io = |e: csv::Error| Error::io(path, std::io::Error::other(e.to_string()));
    let mut header = vec!["governorate".to_string(), "t".to_string()];
    header.extend(SeriesKind::ALL.iter().map(|k| k.name().to_string()));
    header.extend(Horizon::ALL.iter().map(|h| format!("y{}", h.number())));
    w.write_record(&header).map_err(io)?;
    for s in &panel.samples {
        let frame = &panel.frames[s.frame];
        let i = frame.index_of(s.anchor).expect("anchor inside frame");
        let mut rec = vec![frame.governorate.clone(), s.anchor.format(ingest::DATE_FORMAT).to_string()];
        rec.extend(SeriesKind::ALL.iter().map(|&k| frame.series(k)[i].to_string()));
        rec.extend(s.targets.iter().map(|y| y.map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::GovernorateMeta;
    use rand::{Rng, SeedableRng};

    fn day(n: i64) -> NaiveDate {
        add_days(NaiveDate::from_ymd_opt(2017, 5, 22).unwrap(), n)
    }

    fn report(g: &str, d: i64, cases: f64) -> RawCumulativeReport {
        RawCumulativeReport {
            governorate: g.into(),
            date: day(d),
            cumulative_cases: cases,
            cumulative_deaths: 0.0,
        }
    }

    #[test]
    fn ten_cases_over_two_days() {
        let iv = cumulative_to_new(&[report("G", 0, 100.0), report("G", 2, 110.0)]).unwrap();
        assert_eq!(iv.len(), 1);
        assert_eq!((iv[0].after, iv[0].through, iv[0].new_cases), (day(0), day(2), 10.0));
        let daily = interpolate_daily("G", &iv).unwrap();
        assert_eq!(daily.cases.start, day(1));
        assert_eq!(daily.cases.values, vec![5.0, 5.0]);
    }

    #[test]
    fn flat_and_decreasing_reports() {
        let iv = cumulative_to_new(&[report("G", 0, 100.0), report("G", 1, 100.0)]).unwrap();
        assert_eq!(iv[0].new_cases, 0.0);
        let iv = cumulative_to_new(&[report("G", 0, 100.0), report("G", 3, 90.0)]).unwrap();
        assert_eq!(iv[0].new_cases, 0.0);
    }

    #[test]
    fn too_few_reports() {
        assert!(matches!(
            cumulative_to_new(&[report("G", 0, 1.0)]),
            Err(Error::InsufficientReports { found: 1, .. })
        ));
    }

    #[test]
    fn uniform_spreading() {
        let iv = |after, through, n| ReportInterval {
            after: day(after),
            through: day(through),
            new_cases: n,
            new_deaths: 0.0,
        };
        let d = interpolate_daily("G", &[iv(0, 3, 9.0), iv(3, 5, 7.0)]).unwrap();
        assert_eq!(d.cases.values, vec![3.0, 3.0, 3.0, 3.5, 3.5]);
        assert_eq!(d.cases.values[3..].iter().sum::<f64>(), 7.0);
        assert!(matches!(
            interpolate_daily("G", &[iv(0, 3, 9.0), iv(4, 5, 7.0)]),
            Err(Error::NonContiguousIntervals { .. })
        ));
    }

    #[test]
    fn normalization() {
        let s = DailySeries::new("G", day(0), vec![30.0, 0.0]);
        assert_eq!(normalize_per_10k(&s, 600_000).unwrap().values, vec![0.5, 0.0]);
        assert_eq!(normalize_per_10k(&s, 10_000).unwrap().values, s.values);
        assert!(matches!(
            normalize_per_10k(&s, 0),
            Err(Error::NonPositivePopulation { .. })
        ));
    }

    #[test]
    fn normalization_is_linear() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..100.0)).collect();
            let a = rng.random_range(0.0..10.0);
            let pop = rng.random_range(1..5_000_000);
            let lhs = normalize_per_10k(&DailySeries::new("G", day(0), v.iter().map(|x| a * x).collect()), pop).unwrap();
            let rhs = normalize_per_10k(&DailySeries::new("G", day(0), v), pop).unwrap();
            for (l, r) in lhs.values.iter().zip(&rhs.values) {
                assert!((l - a * r).abs() <= 1e-12 * l.abs().max(1.0));
            }
        }
    }

    fn frame(id: &str, cases: Vec<f64>) -> GovernorateFrame {
        let n = cases.len();
        GovernorateFrame::new(id, day(0), cases, vec![0.0; n], vec![0.0; n], vec![0.0; n])
    }

    fn meta(id: &str, nb: &[&str]) -> GovernorateMeta {
        GovernorateMeta {
            id: id.into(),
            population: 10_000,
            neighbors: nb.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn neighbor_mean_of_two() {
        let mut frames = vec![frame("G1", vec![0.0]), frame("G2", vec![2.0]), frame("G3", vec![4.0]), frame("G4", vec![9.0])];
        let reg = GovernorateRegistry::new(vec![
            meta("G1", &["G2", "G3"]),
            meta("G2", &["G1"]),
            meta("G3", &["G1"]),
            meta("G4", &[]),
        ])
        .unwrap();
        neighbor_mean(&mut frames, &reg).unwrap();
        assert_eq!(frames[0].series(SeriesKind::NbNewCases), &[3.0]);
        assert_eq!(frames[3].series(SeriesKind::NbNewCases), &[0.0]);
        assert_eq!(frames[3].series(SeriesKind::NbRainfall), &[0.0]);
    }

    #[test]
    fn neighbor_mean_matches_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let ids = ["A", "B", "C", "D", "E"];
        let edges = [("A", "B"), ("A", "C"), ("B", "C"), ("C", "D")];
        let metas: Vec<_> = ids
            .iter()
            .map(|&g| {
                let nb: Vec<&str> = edges
                    .iter()
                    .filter_map(|&(a, b)| if a == g { Some(b) } else if b == g { Some(a) } else { None })
                    .collect();
                meta(g, &nb)
            })
            .collect();
        let reg = GovernorateRegistry::new(metas).unwrap();
        let mut frames: Vec<_> = ids
            .iter()
            .map(|&g| {
                let mk = |rng: &mut rand_chacha::ChaCha8Rng| (0..20).map(|_| rng.random_range(0.0..10.0)).collect::<Vec<_>>();
                GovernorateFrame::new(g, day(0), mk(&mut rng), mk(&mut rng), mk(&mut rng), mk(&mut rng))
            })
            .collect();
        let original = frames.clone();
        neighbor_mean(&mut frames, &reg).unwrap();
        for (fi, f) in frames.iter().enumerate() {
            let nbs: Vec<usize> = reg
                .get(ids[fi])
                .unwrap()
                .neighbors
                .iter()
                .map(|n| ids.iter().position(|x| x == n).unwrap())
                .collect();
            for kind in SeriesKind::OWN {
                for d in 0..20 {
                    let oracle = if nbs.is_empty() {
                        0.0
                    } else {
                        nbs.iter().map(|&j| original[j].series(kind)[d]).sum::<f64>() / nbs.len() as f64
                    };
                    assert!((f.series(kind.neighbor())[d] - oracle).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn targets_constant_zero_and_ramp() {
        let f = frame("G", vec![1.0; 80]);
        assert_eq!(build_targets(&f, day(10)).unwrap().0, [14.0; 4]);
        let f = frame("G", vec![0.0; 80]);
        assert_eq!(build_targets(&f, day(10)).unwrap().0, [0.0; 4]);

        let t = 10;
        let ramp: Vec<f64> = (0..80).map(|d| (d - t).max(0) as f64).collect();
        let f = frame("G", ramp);
        let y = build_targets(&f, day(t)).unwrap();
        assert_eq!(y.0[0], (1..=14).sum::<i64>() as f64);
        assert_eq!(y.0[1], (15..=28).sum::<i64>() as f64);
        assert_eq!((y.0[0], y.0[1]), (105.0, 301.0));
    }

    #[test]
    fn targets_need_future() {
        let f = frame("G", vec![1.0; 60]);
        assert!(matches!(
            build_targets(&f, day(10)),
            Err(Error::InsufficientFuture { .. })
        ));
        assert_eq!(f.target(day(10), Horizon::new(3).unwrap()), Some(14.0));
    }

    #[test]
    fn targets_are_translation_consistent() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let v: Vec<f64> = (0..100).map(|_| rng.random_range(0.0..5.0)).collect();
        let f = frame("G", v.clone());
        let mut shifted = vec![0.0];
        shifted.extend(v);
        let g = frame("G", shifted);
        for t in 0..40 {
            assert_eq!(build_targets(&f, day(t)).unwrap(), build_targets(&g, day(t + 1)).unwrap());
        }
    }

    #[test]
    fn panel_counts_and_exclusion() {
        let frames: Vec<_> = (0..21).map(|i| frame(&format!("G{i:02}"), vec![1.0; 200])).collect();
        // anchors 55..=143 have history and 56 days of future: 89 anchors.
        let anchors: Vec<_> = (0..200).map(day).collect();
        let panel = assemble_panel(frames.clone(), &anchors, Some(Horizon::new(4).unwrap())).unwrap();
        assert_eq!(panel.samples.len(), 21 * 89);
        assert_eq!(panel.excluded, 21 * 200 - 21 * 89);

        let anchors: Vec<_> = (55..155).map(day).collect();
        let panel = assemble_panel(frames, &anchors, Some(Horizon::new(1).unwrap())).unwrap();
        assert_eq!(panel.samples.len(), 2100);
    }

    #[test]
    fn panel_short_history_excluded() {
        let panel = assemble_panel(vec![frame("G", vec![1.0; 200])], &[day(30), day(60)], None).unwrap();
        assert_eq!(panel.samples.len(), 1);
        assert_eq!(panel.samples[0].anchor, day(60));
        assert!(matches!(
            assemble_panel(vec![frame("G", vec![1.0; 200])], &[day(30)], None),
            Err(Error::EmptyPanel)
        ));
    }

    #[test]
    fn panel_exclusions_match_brute_force_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let frames: Vec<_> = (0..3).map(|i| frame(&format!("G{i}"), vec![0.5; 130])).collect();
        let anchors: Vec<_> = (0..40).map(|_| day(rng.random_range(-10..150))).collect();
        for h in Horizon::ALL {
            let panel = assemble_panel(frames.clone(), &anchors, Some(h)).unwrap();
            let mut ok = 0;
            for _ in &frames {
                for a in &anchors {
                    let idx = (*a - day(0)).num_days();
                    if idx - 55 >= 0 && idx < 130 && idx + h.last_offset() < 130 {
                        ok += 1;
                    }
                }
            }
            assert_eq!(panel.samples.len(), ok);
            assert_eq!(panel.excluded, 3 * anchors.len() - ok);
        }
    }
}
