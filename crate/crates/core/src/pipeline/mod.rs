//! End-to-end orchestration: prepare, extract, select, tune, train,
//! evaluate and forecast, one independent model per horizon.

mod config;

pub use config::{InputsConfig, RunConfig, ScheduleConfig, TuningConfig};

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use log::{info, warn};
use serde::Serialize;

use crate::cv::{self, CvTask, Evaluation, FoldRows, FoldSchedule, Metrics, OlsRegressor, ResidualSummary};
use crate::error::{Error, Result};
use crate::featurex::{self, FeatureDescriptor, FeatureMatrix};
use crate::gbtree::{GbtModel, GbtParams};
use crate::ingest::RawInputs;
use crate::matrix::DenseMatrix;
use crate::plot::{self, ForecastRecord, Split};
use crate::prep::{self, Panel};
use crate::seed::derive_seed;
use crate::select::{self, ColumnTest, ForwardOutcome, Pruned, RankedFeature, Significance, TestKind};
use crate::series::{add_days, Horizon};
use crate::tpe::{self, SearchSpace, TrialHistory, TrialRecord};

/// Pipeline stages in execution order. Running up to a stage runs every
/// stage before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Prepare,
    Features,
    Select,
    Tune,
    Train,
    Evaluate,
    Forecast,
    PlotData,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Features => "features",
            Stage::Select => "select",
            Stage::Tune => "tune",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Forecast => "forecast",
            Stage::PlotData => "plot-data",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hook for inspecting which sample rows each stage reads.
pub trait PipelineObserver: Sync {
    /// Called with the anchor dates of the rows `stage` is about to use.
    fn on_stage_rows(&self, _horizon: Horizon, _stage: Stage, _anchors: &[NaiveDate]) {}
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoopObserver;

impl PipelineObserver for NoopObserver {}

/// Everything a run produced, also written to the output directory.
#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub panel_rows: usize,
    pub feature_columns: usize,
    pub horizons: Vec<HorizonOutcome>,
    pub metrics: Vec<Metrics>,
    pub forecasts: Vec<ForecastRecord>,
}

#[derive(Debug, Clone)]
pub struct HorizonOutcome {
    pub horizon: Horizon,
    pub report: SelectionReport,
    pub params: GbtParams,
    pub selected: Vec<FeatureDescriptor>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestEntry {
    pub feature: String,
    pub test: TestKind,
    pub statistic: Option<f64>,
    pub p_value: f64,
    pub q_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DroppedEntry {
    pub feature: String,
    pub correlated_with: String,
    pub r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RankEntry {
    pub feature: String,
    pub importance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepEntry {
    pub feature: String,
    pub cv_rmse: f64,
    pub accepted: bool,
}

/// Contents of `h<k>/selection_report.json`. Later stages stay empty when
/// the run stops early.
#[derive(Debug, Clone, Serialize)]
pub struct SelectionReport {
    pub horizon: Horizon,
    pub n_rows: usize,
    pub n_candidates: usize,
    pub q_cut: f64,
    pub tests: Vec<TestEntry>,
    pub significant: Vec<String>,
    pub corr_threshold: f64,
    pub decorrelated: Vec<String>,
    pub dropped: Vec<DroppedEntry>,
    pub ranking: Vec<RankEntry>,
    pub min_delta: f64,
    pub cap: usize,
    pub max_candidates: Option<usize>,
    pub trajectory: Vec<StepEntry>,
    pub selected: Vec<String>,
    pub params: Option<GbtParams>,
}

/// Builds the aligned per-governorate frames and one sample per eligible
/// (governorate, anchor) pair.
pub fn prepare_panel(inputs: &RawInputs) -> Result<Panel> {
    let frames = prep::build_frames(inputs)?;
    let anchors = prep::eligible_anchors(&frames);
    prep::assemble_panel(frames, &anchors, None)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Loads the configured inputs and runs the pipeline up to `until`.
pub fn run_from_config(cfg: &RunConfig, until: Stage, observer: &dyn PipelineObserver) -> Result<RunSummary> {
    cfg.validate()?;
    let paths = cfg.inputs.paths();
    for p in [&paths.cholera, &paths.rainfall, &paths.conflict, &paths.gridmap, &paths.governorates] {
        if !p.is_file() {
            return Err(Error::Config(format!("input file {} does not exist", p.display())));
        }
    }
    let inputs = paths.load().map_err(|e| e.in_stage("ingest"))?;
    run(cfg, &inputs, until, observer)
}

/// Runs the pipeline on already-loaded inputs, writing artifacts under
/// `cfg.output_dir`.
pub fn run(cfg: &RunConfig, inputs: &RawInputs, until: Stage, observer: &dyn PipelineObserver) -> Result<RunSummary> {
    cfg.validate()?;
    let schedule = cfg.schedule.resolve()?;
    let out = cfg.output_dir.as_path();
    create_dir(out)?;
    let mut summary = RunSummary::default();

    let panel = prepare_panel(inputs).map_err(|e| e.in_stage("prepare"))?;
    summary.panel_rows = panel.samples.len();
    if until == Stage::Prepare {
        prep::write_panel_csv(out.join("panel.csv"), &panel)?;
        return Ok(summary);
    }

    let descriptors = featurex::default_descriptors();
    let fm = featurex::extract_features(&panel, &descriptors).map_err(|e| e.in_stage("features"))?;
    summary.feature_columns = fm.n_cols();
    info!("extracted {} x {} feature matrix", fm.n_rows(), fm.n_cols());
    if until == Stage::Features {
        fm.write_csv(out.join("features.csv"))?;
        return Ok(summary);
    }

    let last_date = panel.last_date();
    for h in cfg.horizons() {
        let dir = out.join(format!("h{}", h.number()));
        create_dir(&dir)?;
        let hr = HorizonRun::new(cfg, &schedule, &fm, h, last_date, observer)?;
        let outcome = hr.execute(until, &dir, &mut summary)?;
        summary.horizons.push(outcome);
    }

    if until >= Stage::Evaluate {
        write_json(&out.join("metrics.json"), &summary.metrics)?;
    }
    if until >= Stage::Forecast {
        plot::write_forecasts(&out.join("forecasts.csv"), &summary.forecasts)?;
    }
    if until >= Stage::PlotData {
        plot::emit_plot_data(&summary.forecasts, &out.join("plots")).map_err(|e| e.in_stage("plot-data"))?;
    }
    Ok(summary)
}

/// Rows of one horizon: every sample with a label and an anchor on or
/// after the base training start.
struct HorizonRun<'a> {
    cfg: &'a RunConfig,
    schedule: &'a FoldSchedule,
    fm: &'a FeatureMatrix,
    horizon: Horizon,
    last_date: NaiveDate,
    observer: &'a dyn PipelineObserver,
    /// Feature-matrix row of each horizon row.
    rows: Vec<usize>,
    anchors: Vec<NaiveDate>,
    y: Vec<f64>,
    x: DenseMatrix,
}

struct Selected {
    report: SelectionReport,
    params: GbtParams,
    columns: Vec<usize>,
}

impl<'a> HorizonRun<'a> {
    fn new(
        cfg: &'a RunConfig,
        schedule: &'a FoldSchedule,
        fm: &'a FeatureMatrix,
        horizon: Horizon,
        last_date: NaiveDate,
        observer: &'a dyn PipelineObserver,
    ) -> Result<Self> {
        let rows: Vec<usize> = (0..fm.n_rows())
            .filter(|&r| fm.target(r, horizon).is_some() && fm.keys[r].anchor >= schedule.base_train.start)
            .collect();
        if rows.is_empty() {
            return Err(Error::EmptyPanel.in_stage("select"));
        }
        let anchors = rows.iter().map(|&r| fm.keys[r].anchor).collect();
        let y = rows.iter().map(|&r| fm.target(r, horizon).expect("filtered")).collect();
        let all_cols: Vec<usize> = (0..fm.n_cols()).collect();
        let x = fm.values.select(&rows, &all_cols);
        Ok(Self {
            cfg,
            schedule,
            fm,
            horizon,
            last_date,
            observer,
            rows,
            anchors,
            y,
            x,
        })
    }

    fn label(&self, what: &str) -> String {
        format!("{what}/h{}", self.horizon.number())
    }

    fn base_params(&self) -> GbtParams {
        GbtParams {
            seed: derive_seed(self.cfg.seed ^ self.cfg.gbt.seed, &self.label("gbt")),
            ..self.cfg.gbt.clone()
        }
    }

    fn ids(&self, cols: &[usize]) -> Vec<String> {
        cols.iter().map(|&c| self.fm.descriptors[c].id()).collect()
    }

    fn execute(&self, until: Stage, dir: &Path, summary: &mut RunSummary) -> Result<HorizonOutcome> {
        let h = self.horizon;
        info!("horizon {h}: {} labelled rows", self.rows.len());
        let sel = self.select(until, dir).map_err(|e| e.in_stage("select"))?;
        write_json(&dir.join("selection_report.json"), &sel.report)?;
        let outcome = HorizonOutcome {
            horizon: h,
            report: sel.report.clone(),
            params: sel.params.clone(),
            selected: sel.columns.iter().map(|&c| self.fm.descriptors[c]).collect(),
        };
        if until < Stage::Train {
            return Ok(outcome);
        }

        // Deployment model on every labelled row.
        let all: Vec<usize> = (0..self.rows.len()).collect();
        let deploy = GbtModel::fit(&self.x.select(&all, &sel.columns), &self.y, &sel.params)
            .map_err(|e| e.in_stage("train"))?;
        deploy.save(&dir.join("model.gbt"))?;
        if until < Stage::Evaluate {
            return Ok(outcome);
        }

        self.observer.on_stage_rows(h, Stage::Evaluate, &self.anchors);
        let mode = self.cfg.leakage;
        let (fold_ids, folds): (Vec<usize>, Vec<FoldRows>) = cv::usable_folds(&self.anchors, self.schedule, h, mode)
            .map_err(|e| e.in_stage("evaluate"))?
            .into_iter()
            .unzip();
        let holdout = cv::holdout_split(&self.anchors, self.schedule, h, mode, self.last_date)
            .map_err(|e| e.in_stage("evaluate"))?;
        let gbt = cv::evaluate(&sel.params, &self.x, &self.y, &sel.columns, &folds, &holdout, h)
            .map_err(|e| e.in_stage("evaluate"))?;
        let ols = cv::evaluate(&OlsRegressor, &self.x, &self.y, &sel.columns, &folds, &holdout, h)
            .map_err(|e| e.in_stage("evaluate"))?;
        info!(
            "horizon {h}: gbtree cv {:.4} holdout {:.4} | baseline cv {:.4} holdout {:.4}",
            gbt.metrics.cv_rmse, gbt.metrics.holdout_rmse, ols.metrics.cv_rmse, ols.metrics.holdout_rmse
        );
        let residuals: BTreeMap<&str, Vec<ResidualSummary>> = [("gbtree", &gbt), ("baseline", &ols)]
            .into_iter()
            .map(|(name, e)| (name, self.residuals(e)))
            .collect();
        write_json(&dir.join("residuals.json"), &residuals)?;
        summary.metrics.push(gbt.metrics.clone());
        summary.metrics.push(ols.metrics.clone());
        if until < Stage::Forecast {
            return Ok(outcome);
        }

        summary
            .forecasts
            .extend(self.forecasts(&gbt, &fold_ids, &folds, &deploy, &sel.columns)?);
        Ok(outcome)
    }

    fn residuals(&self, e: &Evaluation) -> Vec<ResidualSummary> {
        let groups: Vec<&str> = e
            .holdout
            .valid
            .iter()
            .map(|&i| self.fm.keys[self.rows[i]].governorate.as_str())
            .collect();
        let y: Vec<f64> = e.holdout.valid.iter().map(|&i| self.y[i]).collect();
        cv::residual_summaries(&groups, &y, &e.holdout_predictions)
    }

    /// Feature selection and tuning on pre-holdout rows only.
    fn select(&self, until: Stage, dir: &Path) -> Result<Selected> {
        let h = self.horizon;
        let cfg = &self.cfg.selection;
        let sel_rows: Vec<usize> = (0..self.rows.len())
            .filter(|&i| self.anchors[i] < self.schedule.holdout_start)
            .collect();
        let anchors: Vec<NaiveDate> = sel_rows.iter().map(|&i| self.anchors[i]).collect();
        let y: Vec<f64> = sel_rows.iter().map(|&i| self.y[i]).collect();
        let x = self.x.select_rows(&sel_rows);
        self.observer.on_stage_rows(h, Stage::Select, &anchors);

        let sig = select::significance_filter(&x, &y, cfg.q_cut)?;
        let significant = if sig.survivors.is_empty() {
            fallback_survivors(&sig)
        } else {
            sig.survivors.clone()
        };
        let pruned = select::correlation_prune(&x, &significant, cfg.corr_threshold);
        info!(
            "horizon {h}: {} significant, {} after decorrelation",
            sig.survivors.len(),
            pruned.kept.len()
        );
        let mut report = self.report(&sig, &significant, &pruned, sel_rows.len());
        let mut params = self.base_params();
        if until < Stage::Tune {
            return Ok(Selected {
                report,
                params,
                columns: pruned.kept,
            });
        }

        let folds: Vec<FoldRows> = cv::usable_folds(&anchors, self.schedule, h, self.cfg.leakage)?
            .into_iter()
            .map(|(_, rows)| rows)
            .collect();
        let task = CvTask {
            x: &x,
            y: &y,
            folds: &folds,
        };
        if self.cfg.tpe.n_trials > 0 {
            self.observer.on_stage_rows(h, Stage::Tune, &anchors);
            let (p, history) = self.tune(&task, &pruned.kept, &params, "tpe")?;
            write_json(&dir.join("trials.json"), &history)?;
            params = p;
        }
        report.params = Some(params.clone());
        if until < Stage::Train {
            return Ok(Selected {
                report,
                params,
                columns: pruned.kept,
            });
        }

        let ranked = select::importance_rank(&x, &y, &pruned.kept, &params)?;
        let order: Vec<usize> = ranked.iter().map(|r| r.column).collect();
        let fwd = select::forward_select(&order, &task, &params, cfg.min_delta, cfg.cap, cfg.max_candidates)?;
        if self.cfg.retune_after_selection && self.cfg.tpe.n_trials > 0 {
            let (p, history) = self.tune(&task, &fwd.selected, &params, "tpe-final")?;
            write_json(&dir.join("trials_final.json"), &history)?;
            params = p;
        }
        self.fill_forward(&mut report, &ranked, &fwd);
        report.params = Some(params.clone());
        Ok(Selected {
            report,
            params,
            columns: fwd.selected,
        })
    }

    fn tune(
        &self,
        task: &CvTask<'_>,
        columns: &[usize],
        base: &GbtParams,
        label: &str,
    ) -> Result<(GbtParams, Vec<TrialRecord>)> {
        let space = SearchSpace::gbt_default();
        let seed = self.cfg.tpe.seed.unwrap_or_else(|| derive_seed(self.cfg.seed, &self.label(label)));
        let objective = |point: &[f64]| -> Result<f64> {
            let p = space.apply_gbt(point, base)?;
            let mses = task.fold_mses(columns, &p)?;
            Ok(mses.iter().sum::<f64>() / mses.len() as f64)
        };
        let (best, history): (tpe::Trial, TrialHistory) =
            tpe::optimize(objective, &space, self.cfg.tpe.n_trials, &self.cfg.tpe.tpe, seed)?;
        info!(
            "horizon {}: best of {} trials has mean cv mse {:.5}",
            self.horizon,
            history.len(),
            best.loss
        );
        Ok((space.apply_gbt(&best.params, base)?, history.records(&space)))
    }

    fn report(&self, sig: &Significance, significant: &[usize], pruned: &Pruned, n_rows: usize) -> SelectionReport {
        let cfg = &self.cfg.selection;
        let id = |c: usize| self.fm.descriptors[c].id();
        SelectionReport {
            horizon: self.horizon,
            n_rows,
            n_candidates: self.fm.n_cols(),
            q_cut: cfg.q_cut,
            tests: sig
                .tests
                .iter()
                .map(|t: &ColumnTest| TestEntry {
                    feature: id(t.column),
                    test: t.test,
                    statistic: t.statistic,
                    p_value: t.p_value,
                    q_value: t.q_value,
                })
                .collect(),
            significant: self.ids(significant),
            corr_threshold: cfg.corr_threshold,
            decorrelated: self.ids(&pruned.kept),
            dropped: pruned
                .dropped
                .iter()
                .map(|d| DroppedEntry {
                    feature: id(d.dropped),
                    correlated_with: id(d.kept),
                    r: d.r,
                })
                .collect(),
            ranking: Vec::new(),
            min_delta: cfg.min_delta,
            cap: cfg.cap,
            max_candidates: cfg.max_candidates,
            trajectory: Vec::new(),
            selected: self.ids(&pruned.kept),
            params: None,
        }
    }

    fn fill_forward(&self, report: &mut SelectionReport, ranked: &[RankedFeature], fwd: &ForwardOutcome) {
        let id = |c: usize| self.fm.descriptors[c].id();
        report.ranking = ranked
            .iter()
            .map(|r| RankEntry {
                feature: id(r.column),
                importance: r.importance,
            })
            .collect();
        report.trajectory = fwd
            .trajectory
            .iter()
            .map(|s| StepEntry {
                feature: id(s.column),
                cv_rmse: s.cv_rmse,
                accepted: s.accepted,
            })
            .collect();
        report.selected = self.ids(&fwd.selected);
    }

    /// Labels every row: holdout rows with the holdout model, pre-holdout
    /// rows inside a fold with their out-of-fold prediction, the remaining
    /// training rows in-sample, and unlabelled recent anchors with the
    /// deployment model.
    fn forecasts(
        &self,
        gbt: &Evaluation,
        fold_ids: &[usize],
        folds: &[FoldRows],
        deploy: &GbtModel,
        columns: &[usize],
    ) -> Result<Vec<ForecastRecord>> {
        let h = self.horizon;
        let mut labelled: BTreeMap<usize, (Split, f64)> = BTreeMap::new();
        for (&i, &p) in gbt.holdout.valid.iter().zip(&gbt.holdout_predictions) {
            labelled.insert(i, (Split::Holdout, p));
        }
        for ((&f, rows), preds) in fold_ids.iter().zip(folds).zip(&gbt.fold_predictions) {
            for (&i, &p) in rows.valid.iter().zip(preds) {
                if self.schedule.fold_of(self.anchors[i]) == Some(f) {
                    labelled.entry(i).or_insert((Split::Cv, p));
                }
            }
        }
        for (&i, &p) in gbt.holdout.train.iter().zip(&gbt.train_predictions) {
            labelled.entry(i).or_insert((Split::Train, p));
        }
        let mut records: Vec<ForecastRecord> = labelled
            .into_iter()
            .map(|(i, (split, y_pred))| {
                let key = &self.fm.keys[self.rows[i]];
                ForecastRecord {
                    governorate: key.governorate.clone(),
                    anchor: key.anchor,
                    horizon: h,
                    y_true: Some(self.y[i]),
                    y_pred,
                    split,
                }
            })
            .collect();

        let future: Vec<usize> = (0..self.fm.n_rows())
            .filter(|&r| {
                self.fm.target(r, h).is_none() && self.fm.keys[r].anchor > add_days(self.last_date, -h.last_offset())
            })
            .collect();
        if !future.is_empty() {
            let preds = deploy.predict(&self.fm.values.select(&future, columns))?;
            for (&r, p) in future.iter().zip(preds) {
                records.push(ForecastRecord {
                    governorate: self.fm.keys[r].governorate.clone(),
                    anchor: self.fm.keys[r].anchor,
                    horizon: h,
                    y_true: None,
                    y_pred: p,
                    split: Split::Future,
                });
            }
        }
        records.sort_by(|a, b| (&a.governorate, a.anchor).cmp(&(&b.governorate, b.anchor)));
        Ok(records)
    }
}

/// With no significant feature, keep the ten lowest-p columns so the
/// later stages still have candidates.
fn fallback_survivors(sig: &Significance) -> Vec<usize> {
    warn!("falling back to the 10 lowest-p features");
    let mut order: Vec<usize> = (0..sig.tests.len()).collect();
    order.sort_by(|&a, &b| sig.tests[a].p_value.total_cmp(&sig.tests[b].p_value).then(a.cmp(&b)));
    order.truncate(10);
    order
}
