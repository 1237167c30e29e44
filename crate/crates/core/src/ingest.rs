//! Parsing of the raw input files into validated in-memory tables.
//!
//! Every CSV input is UTF-8, comma separated, with a header row and ISO-8601
//! dates. Columns are located by header name; extra columns are ignored with
//! a warning so newer exports keep loading.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{add_days, DailySeries};

pub const DATE_FORMAT: &str = "%Y-%m-%d";
pub const OUTSIDE: &str = "outside";

#[derive(Debug, Clone, PartialEq)]
pub struct RawCumulativeReport {
    pub governorate: String,
    pub date: NaiveDate,
    pub cumulative_cases: f64,
    pub cumulative_deaths: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RainGridObservation {
    pub lat: f64,
    pub lon: f64,
    pub date: NaiveDate,
    pub rainfall: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictEvent {
    pub governorate: String,
    pub date: NaiveDate,
    pub fatalities: u64,
}

/// A cell of the quarter-degree rainfall lattice, stored as integer
/// multiples of 0.25 degrees so it can be used as an exact map key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LatticeCell {
    lat_q: i64,
    lon_q: i64,
}

impl LatticeCell {
    pub fn from_degrees(lat: f64, lon: f64) -> Result<Self> {
        let snap = |v: f64| {
            let q = (v * 4.0).round();
            (v.is_finite() && (v * 4.0 - q).abs() < 1e-6).then_some(q as i64)
        };
        match (snap(lat), snap(lon)) {
            (Some(lat_q), Some(lon_q)) => Ok(Self { lat_q, lon_q }),
            _ => Err(Error::OffLattice { lat, lon }),
        }
    }

    pub fn lat(self) -> f64 {
        self.lat_q as f64 / 4.0
    }

    pub fn lon(self) -> f64 {
        self.lon_q as f64 / 4.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CellOwner {
    Governorate(String),
    Outside,
}

/// Precomputed assignment of lattice cells to governorates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridMap {
    cells: BTreeMap<LatticeCell, CellOwner>,
}

impl GridMap {
    pub fn insert(&mut self, cell: LatticeCell, owner: CellOwner) {
        self.cells.insert(cell, owner);
    }

    pub fn owner(&self, cell: LatticeCell) -> Option<&CellOwner> {
        self.cells.get(&cell)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticeCell, &CellOwner)> {
        self.cells.iter().map(|(c, o)| (*c, o))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernorateMeta {
    pub id: String,
    pub population: i64,
    #[serde(default)]
    pub neighbors: BTreeSet<String>,
}

/// Validated set of governorates: distinct ids, positive populations and a
/// symmetric, irreflexive neighbor relation.
#[derive(Debug, Clone, PartialEq)]
pub struct GovernorateRegistry {
    entries: BTreeMap<String, GovernorateMeta>,
}

impl GovernorateRegistry {
    pub fn new(metas: Vec<GovernorateMeta>) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for m in metas {
            if m.population <= 0 {
                return Err(Error::NonPositivePopulation {
                    id: m.id,
                    population: m.population,
                });
            }
            if m.neighbors.contains(&m.id) {
                return Err(Error::SelfNeighbor(m.id));
            }
            if entries.contains_key(&m.id) {
                return Err(Error::DuplicateGovernorate(m.id));
            }
            entries.insert(m.id.clone(), m);
        }
        for m in entries.values() {
            for nb in &m.neighbors {
                let other = entries.get(nb).ok_or_else(|| Error::UnknownGovernorate {
                    id: nb.clone(),
                    context: format!("neighbors of {}", m.id),
                })?;
                if !other.neighbors.contains(&m.id) {
                    return Err(Error::AsymmetricAdjacency {
                        from: m.id.clone(),
                        to: nb.clone(),
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, id: &str) -> Option<&GovernorateMeta> {
        self.entries.get(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &GovernorateMeta> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Fails with `UnknownGovernorate` for the first id not in the registry.
    pub fn check_known<'a>(
        &self,
        ids: impl IntoIterator<Item = &'a str>,
        context: &str,
    ) -> Result<()> {
        for id in ids {
            if !self.entries.contains_key(id) {
                return Err(Error::UnknownGovernorate {
                    id: id.to_string(),
                    context: context.to_string(),
                });
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV plumbing
// ---------------------------------------------------------------------------

struct CsvTable {
    path: PathBuf,
    reader: csv::Reader<BufReader<File>>,
    columns: Vec<usize>,
}

impl CsvTable {
    fn open(path: &Path, required: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(BufReader::new(file));
        let headers = reader
            .headers()
            .map_err(|e| malformed(path, 1, e.to_string()))?
            .clone();
        let mut columns = Vec::with_capacity(required.len());
        for name in required {
            let idx = headers
                .iter()
                .position(|h| h == *name)
                .ok_or_else(|| Error::MissingColumn {
                    path: path.to_path_buf(),
                    column: name.to_string(),
                })?;
            columns.push(idx);
        }
        for h in headers.iter().filter(|h| !required.contains(h)) {
            warn!("{}: ignoring unknown column `{h}`", path.display());
        }
        Ok(Self {
            path: path.to_path_buf(),
            reader,
            columns,
        })
    }

    /// Calls `f` with the line number and the required fields of every row.
    fn for_each_row(&mut self, mut f: impl FnMut(u64, &[&str]) -> Result<()>) -> Result<()> {
        let mut record = csv::StringRecord::new();
        loop {
            let more = self
                .reader
                .read_record(&mut record)
                .map_err(|e| {
                    let line = e.position().map_or(0, |p| p.line());
                    malformed(&self.path, line, e.to_string())
                })?;
            if !more {
                return Ok(());
            }
            let line = record.position().map_or(0, |p| p.line());
            let fields: Vec<&str> = self.columns.iter().map(|&c| record.get(c).unwrap_or("")).collect();
            f(line, &fields)?;
        }
    }
}

fn malformed(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::MalformedRow {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_date(path: &Path, line: u64, field: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field, DATE_FORMAT)
        .map_err(|_| malformed(path, line, format!("bad date `{field}`")))
}

fn parse_real(path: &Path, line: u64, name: &str, field: &str) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(malformed(path, line, format!("bad {name} `{field}`"))),
    }
}

fn parse_non_negative(path: &Path, line: u64, name: &str, field: &str) -> Result<f64> {
    let v = parse_real(path, line, name, field)?;
    if v < 0.0 {
        return Err(malformed(path, line, format!("negative {name} `{field}`")));
    }
    Ok(v)
}

fn parse_id(path: &Path, line: u64, field: &str) -> Result<String> {
    if field.is_empty() {
        return Err(malformed(path, line, "empty governorate id"));
    }
    Ok(field.to_string())
}

fn create(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Readers
// ---------------------------------------------------------------------------

/// Reads `governorate,date,cumulative_cases,cumulative_deaths`, sorted by
/// (governorate, date).
pub fn parse_cholera_reports(path: impl AsRef<Path>) -> Result<Vec<RawCumulativeReport>> {
    let path = path.as_ref();
    let mut table = CsvTable::open(
        path,
        &["governorate", "date", "cumulative_cases", "cumulative_deaths"],
    )?;
    let mut rows = BTreeMap::new();
    table.for_each_row(|line, f| {
        let governorate = parse_id(path, line, f[0])?;
        let date = parse_date(path, line, f[1])?;
        let report = RawCumulativeReport {
            cumulative_cases: parse_non_negative(path, line, "cumulative_cases", f[2])?,
            cumulative_deaths: parse_non_negative(path, line, "cumulative_deaths", f[3])?,
            governorate: governorate.clone(),
            date,
        };
        if rows.insert((governorate.clone(), date), report).is_some() {
            return Err(Error::DuplicateReport { governorate, date });
        }
        Ok(())
    })?;
    Ok(rows.into_values().collect())
}

pub fn parse_rainfall(path: impl AsRef<Path>) -> Result<Vec<RainGridObservation>> {
    let path = path.as_ref();
    let mut table = CsvTable::open(path, &["lat", "lon", "date", "mm"])?;
    let mut out = Vec::new();
    table.for_each_row(|line, f| {
        let lat = parse_real(path, line, "lat", f[0])?;
        let lon = parse_real(path, line, "lon", f[1])?;
        LatticeCell::from_degrees(lat, lon)?;
        out.push(RainGridObservation {
            lat,
            lon,
            date: parse_date(path, line, f[2])?,
            rainfall: parse_non_negative(path, line, "mm", f[3])?,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn parse_conflict(path: impl AsRef<Path>) -> Result<Vec<ConflictEvent>> {
    let path = path.as_ref();
    let mut table = CsvTable::open(path, &["governorate", "date", "fatalities"])?;
    let mut out = Vec::new();
    table.for_each_row(|line, f| {
        let fatalities = f[2]
            .parse::<u64>()
            .map_err(|_| malformed(path, line, format!("bad fatalities `{}`", f[2])))?;
        out.push(ConflictEvent {
            governorate: parse_id(path, line, f[0])?,
            date: parse_date(path, line, f[1])?,
            fatalities,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn parse_grid_map(path: impl AsRef<Path>) -> Result<GridMap> {
    let path = path.as_ref();
    let mut table = CsvTable::open(path, &["lat", "lon", "governorate"])?;
    let mut map = GridMap::default();
    table.for_each_row(|line, f| {
        let lat = parse_real(path, line, "lat", f[0])?;
        let lon = parse_real(path, line, "lon", f[1])?;
        let cell = LatticeCell::from_degrees(lat, lon)?;
        let owner = match parse_id(path, line, f[2])?.as_str() {
            OUTSIDE => CellOwner::Outside,
            id => CellOwner::Governorate(id.to_string()),
        };
        if map.cells.insert(cell, owner).is_some() {
            return Err(malformed(path, line, format!("cell ({lat}, {lon}) mapped twice")));
        }
        Ok(())
    })?;
    Ok(map)
}

pub fn load_governorate_meta(path: impl AsRef<Path>) -> Result<GovernorateRegistry> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let metas: Vec<GovernorateMeta> =
        serde_json::from_reader(BufReader::new(file)).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
    GovernorateRegistry::new(metas)
}

// ---------------------------------------------------------------------------
// Writers (used by the simulator and for round-tripping)
// ---------------------------------------------------------------------------

pub fn write_cholera_reports(path: impl AsRef<Path>, rows: &[RawCumulativeReport]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: csv::Result<()> = (|| {
        w.write_record(["governorate", "date", "cumulative_cases", "cumulative_deaths"])?;
        for r in rows {
            w.write_record([
                r.governorate.clone(),
                r.date.format(DATE_FORMAT).to_string(),
                r.cumulative_cases.to_string(),
                r.cumulative_deaths.to_string(),
            ])?;
        }
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_rainfall(path: impl AsRef<Path>, rows: &[RainGridObservation]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: csv::Result<()> = (|| {
        w.write_record(["lat", "lon", "date", "mm"])?;
        for r in rows {
            w.write_record([
                r.lat.to_string(),
                r.lon.to_string(),
                r.date.format(DATE_FORMAT).to_string(),
                r.rainfall.to_string(),
            ])?;
        }
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_conflict(path: impl AsRef<Path>, rows: &[ConflictEvent]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: csv::Result<()> = (|| {
        w.write_record(["governorate", "date", "fatalities"])?;
        for r in rows {
            w.write_record([
                r.governorate.clone(),
                r.date.format(DATE_FORMAT).to_string(),
                r.fatalities.to_string(),
            ])?;
        }
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_grid_map(path: impl AsRef<Path>, map: &GridMap) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: csv::Result<()> = (|| {
        w.write_record(["lat", "lon", "governorate"])?;
        for (cell, owner) in map.iter() {
            let owner = match owner {
                CellOwner::Governorate(id) => id.as_str(),
                CellOwner::Outside => OUTSIDE,
            };
            w.write_record([cell.lat().to_string(), cell.lon().to_string(), owner.to_string()])?;
        }
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_governorate_meta(path: impl AsRef<Path>, registry: &GovernorateRegistry) -> Result<()> {
    let path = path.as_ref();
    let metas: Vec<&GovernorateMeta> = registry.iter().collect();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(&mut file, &metas).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(b"\n").map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Sparse per-governorate daily table: governorate -> date -> value.
pub type RegionalDaily = BTreeMap<String, BTreeMap<NaiveDate, f64>>;

/// Mean rainfall over the lattice cells of each governorate, per day.
///
/// Cells mapped to `outside` are dropped. Values within a group are summed
/// in lattice order, so the result does not depend on the order of
/// `observations`.
pub fn aggregate_rainfall(observations: &[RainGridObservation], map: &GridMap) -> Result<RegionalDaily> {
    let mut groups: BTreeMap<(String, NaiveDate), BTreeMap<LatticeCell, f64>> = BTreeMap::new();
    for obs in observations {
        let cell = LatticeCell::from_degrees(obs.lat, obs.lon)?;
        let owner = map.owner(cell).ok_or(Error::UnmappedCell {
            lat: obs.lat,
            lon: obs.lon,
        })?;
        let CellOwner::Governorate(id) = owner else {
            continue;
        };
        let cells = groups.entry((id.clone(), obs.date)).or_default();
        if cells.insert(cell, obs.rainfall).is_some() {
            return Err(Error::DuplicateObservation {
                lat: obs.lat,
                lon: obs.lon,
                date: obs.date,
            });
        }
    }
    let mut out = RegionalDaily::new();
    for ((id, date), cells) in groups {
        let sum: f64 = cells.values().sum();
        out.entry(id)
            .or_default()
            .insert(date, sum / cells.len() as f64);
    }
    Ok(out)
}

/// Daily fatality totals per governorate over `[start, end]`, zero-filled.
/// Events outside the range are dropped.
pub fn aggregate_conflict(
    events: &[ConflictEvent],
    governorates: &[String],
    start: NaiveDate,
    end: NaiveDate,
) -> BTreeMap<String, DailySeries> {
    let n_days = ((end - start).num_days() + 1).max(0) as usize;
    let mut out: BTreeMap<String, DailySeries> = governorates
        .iter()
        .map(|g| (g.clone(), DailySeries::new(g.clone(), start, vec![0.0; n_days])))
        .collect();
    for ev in events {
        if let Some(series) = out.get_mut(&ev.governorate) {
            if let Some(i) = series.index_of(ev.date) {
                series.values[i] += ev.fatalities as f64;
            }
        }
    }
    out
}

/// Densifies a sparse rainfall table over `[start, end]`; a missing day is a
/// data error.
pub fn rainfall_series(
    table: &RegionalDaily,
    governorate: &str,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<DailySeries> {
    let n_days = ((end - start).num_days() + 1).max(0);
    let days = table.get(governorate);
    let mut values = Vec::with_capacity(n_days as usize);
    for i in 0..n_days {
        let date = add_days(start, i);
        let v = days.and_then(|d| d.get(&date)).ok_or_else(|| Error::MissingData {
            governorate: governorate.to_string(),
            series: "rainfall".into(),
            date,
        })?;
        values.push(*v);
    }
    Ok(DailySeries::new(governorate, start, values))
}

/// Everything read from the five input files.
#[derive(Debug, Clone)]
pub struct RawInputs {
    pub reports: Vec<RawCumulativeReport>,
    pub rainfall: Vec<RainGridObservation>,
    pub conflict: Vec<ConflictEvent>,
    pub grid: GridMap,
    pub registry: GovernorateRegistry,
}

impl RawInputs {
    /// Every governorate referenced by a data file must be registered.
    pub fn validate(&self) -> Result<()> {
        self.registry
            .check_known(self.reports.iter().map(|r| r.governorate.as_str()), "cholera reports")?;
        self.registry
            .check_known(self.conflict.iter().map(|e| e.governorate.as_str()), "conflict events")?;
        self.registry.check_known(
            self.grid.iter().filter_map(|(_, o)| match o {
                CellOwner::Governorate(id) => Some(id.as_str()),
                CellOwner::Outside => None,
            }),
            "grid map",
        )
    }
}

/// Paths of the five input files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPaths {
    pub cholera: PathBuf,
    pub rainfall: PathBuf,
    pub conflict: PathBuf,
    pub gridmap: PathBuf,
    pub governorates: PathBuf,
}

impl InputPaths {
    /// Conventional file names inside one directory.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            cholera: dir.join("cholera.csv"),
            rainfall: dir.join("rainfall.csv"),
            conflict: dir.join("conflict.csv"),
            gridmap: dir.join("gridmap.csv"),
            governorates: dir.join("governorates.json"),
        }
    }

    pub fn load(&self) -> Result<RawInputs> {
        let inputs = RawInputs {
            reports: parse_cholera_reports(&self.cholera)?,
            rainfall: parse_rainfall(&self.rainfall)?,
            conflict: parse_conflict(&self.conflict)?,
            grid: parse_grid_map(&self.gridmap)?,
            registry: load_governorate_meta(&self.governorates)?,
        };
        inputs.validate()?;
        Ok(inputs)
    }
}
