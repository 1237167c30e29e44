//! Seeded synthetic datasets with the same shape as the real inputs.
//!
//! Governorates sit on a rectangular grid with 4-neighbor adjacency and own
//! a 2x2 block of rainfall cells. Each day, new cases per 10,000 people are
//! Poisson with intensity
//!
//! ```text
//! λ(t) = β0 + β1·max(0, r̄(t−10) − θ)² + β2·f̄(t−7) + β3·n̄(t−5)
//! ```
//!
//! where `r̄` and `f̄` are trailing 7-day means of rainfall and conflict
//! fatalities and `n̄` is the mean incidence of the neighbors. Rainfall is a
//! seasonal sinusoid times a slowly varying wetness factor, plus short storms.
//! Cumulative counts are reported every 1 to 6 days.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Exp, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{
    self, CellOwner, ConflictEvent, GovernorateMeta, GovernorateRegistry, GridMap, InputPaths, LatticeCell,
    RainGridObservation, RawCumulativeReport, RawInputs,
};
use crate::seed::derive_seed;
use crate::series::add_days;

/// Generator constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConstants {
    /// Background incidence per 10,000 per day.
    pub beta0: f64,
    /// Weight of the squared rainfall excess.
    pub beta1: f64,
    /// Weight of trailing conflict fatalities.
    pub beta2: f64,
    /// Weight of neighbor incidence.
    pub beta3: f64,
    /// Rainfall threshold (mm/day) of the trailing weekly mean.
    pub theta: f64,
    pub rain_lag: i64,
    pub conflict_lag: i64,
    pub neighbor_lag: i64,
    /// Seasonal rainfall peak (mm/day) and the day of year it falls on.
    pub rain_peak: f64,
    pub rain_peak_doy: f64,
    /// Dry-season trough as a fraction of the peak.
    pub dry_floor: f64,
    /// Daily persistence of the wetness factor.
    pub wetness_ar: f64,
    pub wetness_sd: f64,
    pub storm_prob: f64,
    pub storm_mean: f64,
    pub conflict_burst_prob: f64,
    pub conflict_mean_fatalities: f64,
    pub death_rate: f64,
    pub burn_in_days: usize,
}

impl Default for SimConstants {
    fn default() -> Self {
        Self {
            beta0: 0.05,
            beta1: 0.02,
            beta2: 0.02,
            beta3: 0.3,
            theta: 5.0,
            rain_lag: 10,
            conflict_lag: 7,
            neighbor_lag: 5,
            rain_peak: 7.0,
            rain_peak_doy: 220.0,
            dry_floor: 0.95,
            wetness_ar: 0.98,
            wetness_sd: 0.035,
            storm_prob: 0.03,
            storm_mean: 3.0,
            conflict_burst_prob: 0.02,
            conflict_mean_fatalities: 3.0,
            death_rate: 0.005,
            burn_in_days: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub n_governorates: usize,
    pub n_days: usize,
    pub start: NaiveDate,
    pub constants: SimConstants,
}

impl SimConstants {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("simulate constant {what}")));
        let non_negative = [
            ("beta0", self.beta0),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("beta3", self.beta3),
            ("theta", self.theta),
            ("rain_peak", self.rain_peak),
            ("wetness_sd", self.wetness_sd),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        let unit = [
            ("dry_floor", self.dry_floor),
            ("storm_prob", self.storm_prob),
            ("conflict_burst_prob", self.conflict_burst_prob),
            ("death_rate", self.death_rate),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(0.0..1.0).contains(&self.wetness_ar) {
            return bad("wetness_ar must lie in [0, 1)");
        }
        if !(self.storm_mean.is_finite() && self.storm_mean > 0.0) {
            return bad("storm_mean must be positive");
        }
        if !(self.conflict_mean_fatalities.is_finite() && self.conflict_mean_fatalities > 0.0) {
            return bad("conflict_mean_fatalities must be positive");
        }
        if !self.rain_peak_doy.is_finite() {
            return bad("rain_peak_doy must be finite");
        }
        if self.rain_lag < 0 || self.conflict_lag < 0 || self.neighbor_lag < 0 {
            return bad("lags must be non-negative");
        }
        Ok(())
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            n_governorates: 21,
            n_days: 300,
            start: NaiveDate::from_ymd_opt(2017, 5, 1).expect("valid date"),
            constants: SimConstants::default(),
        }
    }
}

const LAT0: f64 = 12.0;
const LON0: f64 = 42.0;
const CELL: f64 = 0.25;

/// Grid position (row, column) of governorate `i`.
fn grid_pos(i: usize, cols: usize) -> (usize, usize) {
    (i / cols, i % cols)
}

fn gov_id(i: usize) -> String {
    format!("G{:02}", i + 1)
}

/// Trailing mean of `v[..=t]` over `w` days (shorter at the start).
fn trailing_mean(v: &[f64], t: usize, w: usize) -> f64 {
    let lo = (t + 1).saturating_sub(w);
    v[lo..=t].iter().sum::<f64>() / (t + 1 - lo) as f64
}

pub fn simulate(cfg: &SimConfig) -> Result<RawInputs> {
    if cfg.n_governorates < 2 {
        return Err(Error::Config("simulate needs at least 2 governorates".into()));
    }
    if cfg.n_days < 120 {
        return Err(Error::Config("simulate needs at least 120 days".into()));
    }
    let c = &cfg.constants;
    c.validate()?;
    let n = cfg.n_governorates;
    let cols = (n as f64).sqrt().ceil() as usize;
    let burn = c.burn_in_days;
    let total = burn + cfg.n_days;
    let day0 = add_days(cfg.start, -(burn as i64));

    // Registry on a grid with 4-neighbor adjacency.
    let mut meta_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "simulate/meta"));
    let mut metas = Vec::with_capacity(n);
    for i in 0..n {
        let (r, q) = grid_pos(i, cols);
        let mut neighbors = BTreeSet::new();
        for (dr, dq) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
            let (nr, nq) = (r as i64 + dr, q as i64 + dq);
            if nr >= 0 && nq >= 0 && (nq as usize) < cols {
                let j = nr as usize * cols + nq as usize;
                if j < n {
                    neighbors.insert(gov_id(j));
                }
            }
        }
        metas.push(GovernorateMeta {
            id: gov_id(i),
            population: meta_rng.random_range(300_000..3_000_000),
            neighbors,
        });
    }
    let registry = GovernorateRegistry::new(metas.clone())?;
    let neighbor_idx: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            metas[i]
                .neighbors
                .iter()
                .map(|id| id[1..].parse::<usize>().expect("generated id") - 1)
                .collect()
        })
        .collect();

    // Rainfall per governorate and day.
    let mut rain_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "simulate/rain"));
    let wet_noise = Normal::new(0.0, c.wetness_sd).expect("finite sd");
    let storm = Exp::new(1.0 / c.storm_mean).expect("positive mean");
    let mut rain = vec![vec![0.0; total]; n];
    for series in rain.iter_mut() {
        let amplitude = rain_rng.random_range(0.5..1.5);
        let phase = rain_rng.random_range(-20.0..20.0);
        let mut wet: f64 = 1.0;
        let mut storm_left = 0usize;
        let mut storm_size = 0.0;
        for (t, r) in series.iter_mut().enumerate() {
            let doy = add_days(day0, t as i64).ordinal() as f64;
            let cycle = (std::f64::consts::TAU * (doy - c.rain_peak_doy - phase) / 365.0).cos();
            let season = c.dry_floor + (1.0 - c.dry_floor) * 0.5 * (1.0 + cycle);
            wet = 1.0 + c.wetness_ar * (wet - 1.0) + wet_noise.sample(&mut rain_rng);
            wet = wet.clamp(0.0, 2.0);
            if storm_left == 0 && rain_rng.random_bool(c.storm_prob) {
                storm_left = rain_rng.random_range(1..=4);
                storm_size = storm.sample(&mut rain_rng);
            }
            let mut v = c.rain_peak * amplitude * season * wet + rain_rng.random_range(-0.5..0.5);
            if storm_left > 0 {
                v += storm_size;
                storm_left -= 1;
            }
            *r = v.max(0.0);
        }
    }

    // Conflict events and daily fatalities.
    let mut conf_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "simulate/conflict"));
    let fatal = Poisson::new(c.conflict_mean_fatalities).expect("positive mean");
    let mut conflict = vec![vec![0.0; total]; n];
    let mut events = Vec::new();
    for (g, series) in conflict.iter_mut().enumerate() {
        let mut burst_left = 0usize;
        for (t, f) in series.iter_mut().enumerate() {
            if burst_left == 0 && conf_rng.random_bool(c.conflict_burst_prob) {
                burst_left = conf_rng.random_range(1..=5);
            }
            if burst_left > 0 {
                burst_left -= 1;
                let k = fatal.sample(&mut conf_rng) as u64;
                *f = k as f64;
                if t >= burn {
                    events.push(ConflictEvent {
                        governorate: gov_id(g),
                        date: add_days(day0, t as i64),
                        fatalities: k,
                    });
                }
            }
        }
    }

    // Incidence per 10k and daily counts, stepped jointly because of the
    // neighbor coupling.
    let mut case_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "simulate/cases"));
    let pops: Vec<f64> = metas.iter().map(|m| m.population as f64).collect();
    let mut incidence = vec![vec![0.0; total]; n];
    let mut cases = vec![vec![0u64; total]; n];
    let mut deaths = vec![vec![0u64; total]; n];
    for t in 0..total {
        for g in 0..n {
            let lagged = |lag: i64| (t as i64 - lag >= 0).then(|| (t as i64 - lag) as usize);
            let mut lambda = c.beta0;
            if let Some(s) = lagged(c.rain_lag) {
                lambda += c.beta1 * (trailing_mean(&rain[g], s, 7) - c.theta).max(0.0).powi(2);
            }
            if let Some(s) = lagged(c.conflict_lag) {
                lambda += c.beta2 * trailing_mean(&conflict[g], s, 7);
            }
            if let Some(s) = lagged(c.neighbor_lag) {
                let nb = &neighbor_idx[g];
                if !nb.is_empty() {
                    lambda += c.beta3 * nb.iter().map(|&j| incidence[j][s]).sum::<f64>() / nb.len() as f64;
                }
            }
            let mean = lambda * pops[g] / 10_000.0;
            let k = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| Error::Config(format!("case intensity {mean}: {e}")))?
                    .sample(&mut case_rng) as u64
            } else {
                0
            };
            cases[g][t] = k;
            incidence[g][t] = k as f64 * 10_000.0 / pops[g];
            deaths[g][t] = if k > 0 {
                Binomial::new(k, c.death_rate).expect("valid p").sample(&mut case_rng)
            } else {
                0
            };
        }
    }

    // Cumulative reports: one the day before the start, then every 1-6
    // days, with a final report on the last day.
    let mut rep_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "simulate/reports"));
    let mut reports = Vec::new();
    for g in 0..n {
        let (mut cum_c, mut cum_d) = (0u64, 0u64);
        let mut next = burn - 1;
        for t in 0..total {
            cum_c += cases[g][t];
            cum_d += deaths[g][t];
            if t == next || t == total - 1 {
                reports.push(RawCumulativeReport {
                    governorate: gov_id(g),
                    date: add_days(day0, t as i64),
                    cumulative_cases: cum_c as f64,
                    cumulative_deaths: cum_d as f64,
                });
                next = t + rep_rng.random_range(1..=6);
            }
        }
    }

    // Rainfall lattice: a 2x2 block per governorate plus a ring of
    // outside cells along the southern edge.
    let mut grid = GridMap::default();
    let mut cells: Vec<(LatticeCell, Option<usize>)> = Vec::new();
    for g in 0..n {
        let (r, q) = grid_pos(g, cols);
        for (a, b) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let lat = LAT0 + CELL * (2 * r + a) as f64;
            let lon = LON0 + CELL * (2 * q + b) as f64;
            let cell = LatticeCell::from_degrees(lat, lon)?;
            grid.insert(cell, CellOwner::Governorate(gov_id(g)));
            cells.push((cell, Some(g)));
        }
    }
    for b in 0..2 * cols {
        let cell = LatticeCell::from_degrees(LAT0 - CELL, LON0 + CELL * b as f64)?;
        grid.insert(cell, CellOwner::Outside);
        cells.push((cell, None));
    }
    let mut cell_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "simulate/cells"));
    let mut rainfall = Vec::with_capacity(cells.len() * cfg.n_days);
    for t in burn..total {
        let date = add_days(day0, t as i64);
        for &(cell, owner) in &cells {
            let v = match owner {
                Some(g) => rain[g][t] * cell_rng.random_range(0.8..1.2),
                None => cell_rng.random_range(0.0..4.0),
            };
            rainfall.push(RainGridObservation {
                lat: cell.lat(),
                lon: cell.lon(),
                date,
                rainfall: (v * 1000.0).round() / 1000.0,
            });
        }
    }

    let inputs = RawInputs {
        reports,
        rainfall,
        conflict: events,
        grid,
        registry,
    };
    inputs.validate()?;
    Ok(inputs)
}

/// Writes the five input files under their conventional names in `dir`.
pub fn write_inputs(dir: &Path, inputs: &RawInputs) -> Result<InputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = InputPaths::in_dir(dir);
    ingest::write_cholera_reports(&paths.cholera, &inputs.reports)?;
    ingest::write_rainfall(&paths.rainfall, &inputs.rainfall)?;
    ingest::write_conflict(&paths.conflict, &inputs.conflict)?;
    ingest::write_grid_map(&paths.gridmap, &inputs.grid)?;
    ingest::write_governorate_meta(&paths.governorates, &inputs.registry)?;
    Ok(paths)
}
