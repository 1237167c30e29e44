use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cv::{FoldSchedule, LeakageMode};
use crate::error::{Error, Result};
use crate::gbtree::GbtParams;
use crate::ingest::InputPaths;
use crate::select::SelectionConfig;
use crate::series::Horizon;
use crate::tpe::TpeConfig;

/// Where the five input files live: a directory with the conventional
/// names, or explicit paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InputsConfig {
    Dir(PathBuf),
    Files(InputPaths),
}

impl Default for InputsConfig {
    fn default() -> Self {
        InputsConfig::Dir(PathBuf::from("data"))
    }
}

impl InputsConfig {
    pub fn paths(&self) -> InputPaths {
        match self {
            InputsConfig::Dir(d) => InputPaths::in_dir(d),
            InputsConfig::Files(p) => p.clone(),
        }
    }
}

/// `"default"`, a path to a schedule JSON file, or an inline schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleConfig {
    Named(String),
    Inline(FoldSchedule),
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig::Named("default".into())
    }
}

impl ScheduleConfig {
    pub fn resolve(&self) -> Result<FoldSchedule> {
        let s = match self {
            ScheduleConfig::Named(n) if n == "default" => FoldSchedule::default_schedule(),
            ScheduleConfig::Named(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Json {
                    path: PathBuf::from(path),
                    source: e,
                })?
            }
            ScheduleConfig::Inline(s) => s.clone(),
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningConfig {
    /// Number of TPE trials per horizon; 0 skips tuning and uses `gbt`.
    pub n_trials: usize,
    /// Overrides the seed derived from the global seed.
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub tpe: TpeConfig,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            n_trials: 25,
            seed: None,
            tpe: TpeConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub inputs: InputsConfig,
    pub output_dir: PathBuf,
    pub horizons: Vec<Horizon>,
    pub schedule: ScheduleConfig,
    pub selection: SelectionConfig,
    /// Booster parameters used before tuning and for every field the
    /// search space does not cover.
    pub gbt: GbtParams,
    pub tpe: TuningConfig,
    pub leakage: LeakageMode,
    /// Tune a second time on the forward-selected features.
    pub retune_after_selection: bool,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: InputsConfig::default(),
            output_dir: PathBuf::from("out"),
            horizons: Horizon::ALL.to_vec(),
            schedule: ScheduleConfig::default(),
            selection: SelectionConfig::default(),
            gbt: GbtParams::default(),
            tpe: TuningConfig::default(),
            leakage: LeakageMode::default(),
            retune_after_selection: false,
            seed: 42,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() {
            return Err(Error::Config("at least one horizon is required".into()));
        }
        self.selection.validate()?;
        self.gbt
            .validate()
            .map_err(|e| Error::Config(format!("gbt: {e}")))?;
        let t = &self.tpe.tpe;
        if !(t.gamma > 0.0 && t.gamma <= 1.0) || t.n_candidates == 0 {
            return Err(Error::Config("tpe.gamma must be in (0, 1] and tpe.n_candidates positive".into()));
        }
        Ok(())
    }

    /// Horizons in ascending order without duplicates.
    pub fn horizons(&self) -> Vec<Horizon> {
        let mut h = self.horizons.clone();
        h.sort();
        h.dedup();
        h
    }
}
