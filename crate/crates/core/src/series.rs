//! Daily series and the small vocabulary types shared across the pipeline.

use std::fmt;

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

/// A gap-free run of daily values starting at `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct DailySeries {
    pub governorate: String,
    pub start: NaiveDate,
    pub values: Vec<f64>,
}

impl DailySeries {
    pub fn new(governorate: impl Into<String>, start: NaiveDate, values: Vec<f64>) -> Self {
        Self {
            governorate: governorate.into(),
            start,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Last covered day, or `None` for an empty series.
    pub fn end(&self) -> Option<NaiveDate> {
        let n = self.values.len();
        (n > 0).then(|| add_days(self.start, n as i64 - 1))
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        let offset = (date - self.start).num_days();
        (offset >= 0 && (offset as usize) < self.values.len()).then_some(offset as usize)
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        self.index_of(date).map(|i| self.values[i])
    }
}

/// Offset a date by a signed number of days.
pub fn add_days(date: NaiveDate, days: i64) -> NaiveDate {
    if days >= 0 {
        date.checked_add_days(Days::new(days as u64))
    } else {
        date.checked_sub_days(Days::new(days.unsigned_abs()))
    }
    .expect("date arithmetic out of range")
}

/// The eight aligned daily series held by every governorate frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    NewCases,
    NewDeaths,
    Rainfall,
    Conflict,
    NbNewCases,
    NbNewDeaths,
    NbRainfall,
    NbConflict,
}

impl SeriesKind {
    pub const ALL: [SeriesKind; 8] = [
        SeriesKind::NewCases,
        SeriesKind::NewDeaths,
        SeriesKind::Rainfall,
        SeriesKind::Conflict,
        SeriesKind::NbNewCases,
        SeriesKind::NbNewDeaths,
        SeriesKind::NbRainfall,
        SeriesKind::NbConflict,
    ];

    /// The four observed series; the other four are their neighbor means.
    pub const OWN: [SeriesKind; 4] = [
        SeriesKind::NewCases,
        SeriesKind::NewDeaths,
        SeriesKind::Rainfall,
        SeriesKind::Conflict,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::NewCases => "new_cases",
            SeriesKind::NewDeaths => "new_deaths",
            SeriesKind::Rainfall => "rainfall",
            SeriesKind::Conflict => "conflict",
            SeriesKind::NbNewCases => "nb_new_cases",
            SeriesKind::NbNewDeaths => "nb_new_deaths",
            SeriesKind::NbRainfall => "nb_rainfall",
            SeriesKind::NbConflict => "nb_conflict",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Neighbor-mean counterpart of an observed series.
    pub fn neighbor(self) -> SeriesKind {
        match self {
            SeriesKind::NewCases => SeriesKind::NbNewCases,
            SeriesKind::NewDeaths => SeriesKind::NbNewDeaths,
            SeriesKind::Rainfall => SeriesKind::NbRainfall,
            SeriesKind::Conflict => SeriesKind::NbConflict,
            nb => nb,
        }
    }
}

impl fmt::Display for SeriesKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One of the four 14-day forecast windows following an anchor date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Horizon(u8);

impl Horizon {
    pub const DAYS: i64 = 14;
    pub const ALL: [Horizon; 4] = [Horizon(1), Horizon(2), Horizon(3), Horizon(4)];

    pub fn new(k: u8) -> Option<Self> {
        (1..=4).contains(&k).then_some(Horizon(k))
    }

    pub fn number(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// First day of the label window, relative to the anchor.
    pub fn first_offset(self) -> i64 {
        Self::DAYS * (self.0 as i64 - 1) + 1
    }

    /// Last day of the label window, relative to the anchor.
    pub fn last_offset(self) -> i64 {
        Self::DAYS * self.0 as i64
    }

    pub fn label(self) -> &'static str {
        match self.0 {
            1 => "0-2 weeks",
            2 => "2-4 weeks",
            3 => "4-6 weeks",
            _ => "6-8 weeks",
        }
    }
}

impl TryFrom<u8> for Horizon {
    type Error = String;

    fn try_from(k: u8) -> Result<Self, Self::Error> {
        Horizon::new(k).ok_or_else(|| format!("horizon must be 1..=4, got {k}"))
    }
}

impl From<Horizon> for u8 {
    fn from(h: Horizon) -> u8 {
        h.0
    }
}

impl fmt::Display for Horizon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h{}", self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_offsets() {
        let h: Vec<_> = Horizon::ALL
            .iter()
            .map(|h| (h.first_offset(), h.last_offset()))
            .collect();
        assert_eq!(h, vec![(1, 14), (15, 28), (29, 42), (43, 56)]);
        assert!(Horizon::new(0).is_none());
        assert!(Horizon::new(5).is_none());
    }

    #[test]
    fn series_lookup() {
        let d = NaiveDate::from_ymd_opt(2017, 5, 1).unwrap();
        let s = DailySeries::new("G1", d, vec![1.0, 2.0, 3.0]);
        assert_eq!(s.end(), Some(add_days(d, 2)));
        assert_eq!(s.get(add_days(d, 1)), Some(2.0));
        assert_eq!(s.get(add_days(d, 3)), None);
        assert_eq!(s.get(add_days(d, -1)), None);
    }

    #[test]
    fn series_names_round_trip() {
        for k in SeriesKind::ALL {
            assert_eq!(SeriesKind::from_name(k.name()), Some(k));
        }
    }
}
