//! Tree-structured Parzen Estimator over independent per-dimension priors.

use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use libm::erfc;

use crate::error::{Error, Result};
use crate::gbtree::GbtParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    Int { lo: i64, hi: i64 },
}

impl Prior {
    /// Bounds of the space the estimator works in: log space for
    /// log-uniform priors, half-widened bounds for integers.
    fn working_bounds(self) -> (f64, f64) {
        match self {
            Prior::Uniform { lo, hi } => (lo, hi),
            Prior::LogUniform { lo, hi } => (lo.ln(), hi.ln()),
            Prior::Int { lo, hi } => (lo as f64 - 0.5, hi as f64 + 0.5),
        }
    }

    fn to_working(self, v: f64) -> f64 {
        match self {
            Prior::LogUniform { .. } => v.ln(),
            _ => v,
        }
    }

    fn from_working(self, w: f64) -> f64 {
        match self {
            Prior::Uniform { lo, hi } => w.clamp(lo, hi),
            Prior::LogUniform { lo, hi } => w.exp().clamp(lo, hi),
            Prior::Int { lo, hi } => (w.round() as i64).clamp(lo, hi) as f64,
        }
    }

    pub fn contains(self, v: f64) -> bool {
        match self {
            Prior::Uniform { lo, hi } | Prior::LogUniform { lo, hi } => lo <= v && v <= hi,
            Prior::Int { lo, hi } => v.fract() == 0.0 && lo as f64 <= v && v <= hi as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub prior: Prior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    dims: Vec<Dimension>,
}

impl SearchSpace {
    pub fn new(dims: Vec<Dimension>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidSearchSpace("no dimensions".into()));
        }
        for d in &dims {
            let ok = match d.prior {
                Prior::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
                Prior::LogUniform { lo, hi } => lo > 0.0 && hi.is_finite() && lo < hi,
                Prior::Int { lo, hi } => lo < hi,
            };
            if !ok {
                return Err(Error::InvalidSearchSpace(format!("bad bounds for `{}`", d.name)));
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[Dimension] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.dims.len() && self.dims.iter().zip(point).all(|(d, &v)| d.prior.contains(v))
    }

    /// The default booster search space.
    pub fn gbt_default() -> Self {
        let dim = |name: &str, prior| Dimension {
            name: name.to_string(),
            prior,
        };
        Self::new(vec![
            dim("eta", Prior::LogUniform { lo: 0.01, hi: 0.3 }),
            dim("n_rounds", Prior::Int { lo: 50, hi: 500 }),
            dim("max_depth", Prior::Int { lo: 2, hi: 10 }),
            dim("min_child_weight", Prior::Uniform { lo: 1.0, hi: 10.0 }),
            dim("lambda", Prior::LogUniform { lo: 0.1, hi: 10.0 }),
            dim("gamma", Prior::Uniform { lo: 0.0, hi: 5.0 }),
            dim("subsample", Prior::Uniform { lo: 0.5, hi: 1.0 }),
            dim("colsample", Prior::Uniform { lo: 0.5, hi: 1.0 }),
        ])
        .expect("default space is valid")
    }

    /// Overwrites the fields of `base` named by this space's dimensions.
    pub fn apply_gbt(&self, point: &[f64], base: &GbtParams) -> Result<GbtParams> {
        let mut p = base.clone();
        for (d, &v) in self.dims.iter().zip(point) {
            match d.name.as_str() {
                "eta" => p.eta = v,
                "n_rounds" => p.n_rounds = v as usize,
                "max_depth" => p.max_depth = v as usize,
                "min_child_weight" => p.min_child_weight = v,
                "lambda" => p.lambda = v,
                "gamma" => p.gamma = v,
                "subsample" => p.subsample = v,
                "colsample" => p.colsample = v,
                other => return Err(Error::InvalidSearchSpace(format!("`{other}` is not a booster parameter"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeConfig {
    pub n_startup: usize,
    pub gamma: f64,
    pub n_candidates: usize,
}

impl Default for TpeConfig {
    fn default() -> Self {
        Self {
            n_startup: 10,
            gamma: 0.25,
            n_candidates: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub params: Vec<f64>,
    /// `+inf` marks a failed evaluation.
    pub loss: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialHistory {
    pub trials: Vec<Trial>,
}

impl TrialHistory {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// First trial with the lowest finite loss.
    pub fn best(&self) -> Option<&Trial> {
        self.trials
            .iter()
            .filter(|t| t.loss.is_finite())
            .fold(None, |best: Option<&Trial>, t| match best {
                Some(b) if b.loss <= t.loss => Some(b),
                _ => Some(t),
            })
    }

    /// Running best loss after each trial (`+inf` until a trial succeeds).
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.trials
            .iter()
            .map(|t| {
                best = best.min(t.loss);
                best
            })
            .collect()
    }

    /// Trial log as JSON-friendly records keyed by dimension name.
    pub fn records(&self, space: &SearchSpace) -> Vec<TrialRecord> {
        self.trials
            .iter()
            .map(|t| TrialRecord {
                index: t.index,
                params: space
                    .dims()
                    .iter()
                    .zip(&t.params)
                    .map(|(d, &v)| (d.name.clone(), v))
                    .collect(),
                loss: t.loss.is_finite().then_some(t.loss),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub params: BTreeMap<String, f64>,
    /// `None` for a failed trial.
    pub loss: Option<f64>,
}

/// One independent draw from the prior of every dimension.
pub fn prior_draw(space: &SearchSpace, rng: &mut impl Rng) -> Vec<f64> {
    space
        .dims()
        .iter()
        .map(|d| {
            let (a, b) = d.prior.working_bounds();
            d.prior.from_working(rng.random_range(a..b))
        })
        .collect()
}

/// Truncated-Gaussian Parzen mixture on `[a, b]` blended with a uniform
/// prior component. A kernel's bandwidth is the larger gap to its sorted
/// neighbours (the bounds count as neighbours), kept within
/// `[range / min(k + 1, 100), range]` for `k` observations.
struct Parzen {
    a: f64,
    b: f64,
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    /// Normalizing mass of each kernel inside `[a, b]`.
    masses: Vec<f64>,
}

fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

impl Parzen {
    fn new(mut obs: Vec<f64>, a: f64, b: f64) -> Self {
        obs.sort_by(f64::total_cmp);
        let range = b - a;
        let floor = range / (obs.len() + 1).min(100) as f64;
        let mut sigmas = Vec::with_capacity(obs.len());
        for i in 0..obs.len() {
            let left = if i == 0 { a } else { obs[i - 1] };
            let right = if i + 1 == obs.len() { b } else { obs[i + 1] };
            let s = (obs[i] - left).max(right - obs[i]);
            sigmas.push(s.clamp(floor, range));
        }
        let masses = obs
            .iter()
            .zip(&sigmas)
            .map(|(&m, &s)| norm_cdf((b - m) / s) - norm_cdf((a - m) / s))
            .collect();
        Self {
            a,
            b,
            mus: obs,
            sigmas,
            masses,
        }
    }

    fn weight(&self) -> f64 {
        1.0 / (self.mus.len() + 1) as f64
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let w = self.weight();
        let mut p = w / (self.b - self.a);
        for ((&m, &s), &z) in self.mus.iter().zip(&self.sigmas).zip(&self.masses) {
            let u = (x - m) / s;
            p += w * (-0.5 * u * u).exp() / (s * (2.0 * std::f64::consts::PI).sqrt() * z);
        }
        p.ln()
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        let k = rng.random_range(0..=self.mus.len());
        if k == self.mus.len() {
            return rng.random_range(self.a..self.b);
        }
        let (m, s) = (self.mus[k], self.sigmas[k]);
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let v = m + s * z;
            if (self.a..=self.b).contains(&v) {
                return v;
            }
        }
    }
}

/// Next point to evaluate given the history so far.
pub fn suggest(history: &TrialHistory, space: &SearchSpace, cfg: &TpeConfig, rng: &mut impl Rng) -> Vec<f64> {
    let n_finite = history.trials.iter().filter(|t| t.loss.is_finite()).count();
    if history.len() < cfg.n_startup || n_finite == 0 {
        return prior_draw(space, rng);
    }
    let mut order: Vec<&Trial> = history.trials.iter().collect();
    order.sort_by(|x, y| x.loss.total_cmp(&y.loss).then(x.index.cmp(&y.index)));
    let n_good = ((cfg.gamma * history.len() as f64).ceil() as usize).clamp(1, n_finite);
    let (good, bad) = order.split_at(n_good);

    let models: Vec<(Parzen, Parzen)> = space
        .dims()
        .iter()
        .enumerate()
        .map(|(d, dim)| {
            let (a, b) = dim.prior.working_bounds();
            let obs = |set: &[&Trial]| set.iter().map(|t| dim.prior.to_working(t.params[d])).collect();
            (Parzen::new(obs(good), a, b), Parzen::new(obs(bad), a, b))
        })
        .collect();

    let mut best: Option<(f64, Vec<f64>)> = None;
    for _ in 0..cfg.n_candidates.max(1) {
        let mut point = Vec::with_capacity(space.len());
        let mut score = 0.0;
        for (dim, (l, g)) in space.dims().iter().zip(&models) {
            let v = dim.prior.from_working(l.sample(rng));
            let w = dim.prior.to_working(v);
            score += l.log_pdf(w) - g.log_pdf(w);
            point.push(v);
        }
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, point));
        }
    }
    best.expect("at least one candidate").1
}

fn run_loop(
    mut objective: impl FnMut(&[f64]) -> Result<f64>,
    n_trials: usize,
    seed: u64,
    mut next: impl FnMut(&TrialHistory, &mut ChaCha8Rng) -> Vec<f64>,
) -> Result<(Trial, TrialHistory)> {
    if n_trials == 0 {
        return Err(Error::InvalidParams("n_trials must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut history = TrialHistory::default();
    for index in 0..n_trials {
        let params = next(&history, &mut rng);
        let loss = match objective(&params) {
            Ok(l) if l.is_finite() => l,
            Ok(l) => {
                warn!("trial {index}: non-finite loss {l}");
                f64::INFINITY
            }
            Err(e) => {
                warn!("trial {index} failed: {e}");
                f64::INFINITY
            }
        };
        history.trials.push(Trial { index, params, loss });
    }
    let best = history.best().cloned().ok_or(Error::AllTrialsFailed)?;
    Ok((best, history))
}

/// Sequential TPE minimization. Failed evaluations are recorded with an
/// infinite loss and never enter the good set.
pub fn optimize(
    objective: impl FnMut(&[f64]) -> Result<f64>,
    space: &SearchSpace,
    n_trials: usize,
    cfg: &TpeConfig,
    seed: u64,
) -> Result<(Trial, TrialHistory)> {
    run_loop(objective, n_trials, seed, |h, rng| suggest(h, space, cfg, rng))
}

/// Independent prior draws from the same generator stream as [`optimize`].
pub fn random_search(
    objective: impl FnMut(&[f64]) -> Result<f64>,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<(Trial, TrialHistory)> {
    run_loop(objective, n_trials, seed, |_, rng| prior_draw(space, rng))
}
