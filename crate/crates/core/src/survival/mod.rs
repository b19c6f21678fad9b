//! Survival learners: a boosted log-logistic AFT model and a discrete-time
//! MLP trained with a focal likelihood plus a pairwise rank loss.

mod aft;
mod deephit;
mod mlp;
mod normalize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use aft::{
    aft_nll, aft_survival_curve, train_boosted_aft, AftConfig, AftLoss, BoostedAftModel, Tree, TreeNode,
};
pub use deephit::{deephit_focal_nll, deephit_nll, rank_loss, softmax, LossConfig, LossOutput};
pub use mlp::{train_mlp_deephit, MlpSpec, MlpSurvivalModel, OptimizerConfig};
pub use normalize::QuantileNormalizer;

/// Version stamped into every persisted model.
pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSample {
    pub x: Vec<f64>,
    /// Years to event or to end of follow-up.
    pub y: f64,
    pub event: bool,
    pub weight: f64,
}

impl SurvivalSample {
    pub fn new(x: Vec<f64>, y: f64, event: bool) -> Self {
        Self { x, y, event, weight: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y > 0.0 && self.y.is_finite()) {
            return Err(Error::data(format!("time {} must be positive", self.y)));
        }
        if !(self.weight >= 0.0 && self.weight.is_finite()) {
            return Err(Error::data(format!("weight {} must be non-negative", self.weight)));
        }
        Ok(())
    }
}

/// Equal-width bins over `(0, horizon]` plus one bucket for "later or never".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_bins: usize,
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self { horizon: 11.0, n_bins: 25 }
    }
}

impl TimeGrid {
    pub fn new(horizon: f64, n_bins: usize) -> Result<Self> {
        let g = Self { horizon, n_bins };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) || self.n_bins == 0 {
            return Err(Error::config("time grid needs a positive horizon and at least one bin"));
        }
        Ok(())
    }

    /// Number of model outputs: the bins plus the overflow bucket.
    pub fn n_outputs(&self) -> usize {
        self.n_bins + 1
    }

    pub fn width(&self) -> f64 {
        self.horizon / self.n_bins as f64
    }

    /// Upper bin edges t_1..t_n.
    pub fn edges(&self) -> Vec<f64> {
        (1..=self.n_bins).map(|k| k as f64 * self.width()).collect()
    }

    /// 0 followed by the bin edges.
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_bins).map(|k| k as f64 * self.width()).collect()
    }

    /// Bin holding `y`; bins are closed on the right. Times past the horizon
    /// fall in the overflow bucket.
    pub fn bin_of(&self, y: f64) -> usize {
        let k = (y / self.width()).ceil();
        if k > self.n_bins as f64 {
            self.n_bins
        } else {
            (k as usize).saturating_sub(1)
        }
    }
}

/// Probability mass per bin, the last entry being the overflow bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSurvivalDistribution {
    pub probs: Vec<f64>,
}

impl DiscreteSurvivalDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::data("probabilities must lie in [0, 1]"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::data(format!("probabilities sum to {total}")));
        }
        Ok(Self { probs })
    }

    /// S(t_k) = 1 - sum of the first k bins, preceded by S(0) = 1.
    pub fn survival_curve(&self, grid: &TimeGrid) -> SurvivalCurve {
        let mut survival = Vec::with_capacity(grid.n_bins + 1);
        survival.push(1.0);
        let mut tail: f64 = self.probs.iter().sum();
        for p in &self.probs[..grid.n_bins] {
            tail -= p;
            survival.push(tail.clamp(0.0, 1.0));
        }
        // guard against rounding pushing a later value above an earlier one
        for k in 1..survival.len() {
            survival[k] = survival[k].min(survival[k - 1]);
        }
        SurvivalCurve { times: grid.times(), survival }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
}

impl SurvivalCurve {
    /// Linear interpolation; flat beyond either end.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&s| s <= t);
        if k == 0 {
            return self.survival[0];
        }
        if k == self.times.len() {
            return self.survival[k - 1];
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let (s0, s1) = (self.survival[k - 1], self.survival[k]);
        s0 + (t - t0) / (t1 - t0) * (s1 - s0)
    }

    pub fn is_monotone(&self) -> bool {
        self.survival.windows(2).all(|w| w[1] <= w[0])
            && self.survival.iter().all(|s| (0.0..=1.0).contains(s))
    }
}

/// Probability of the event by `horizon`. A horizon past the curve is clamped.
pub fn risk_within(curve: &SurvivalCurve, horizon: f64) -> f64 {
    let last = *curve.times.last().expect("curve has knots");
    let h = if horizon > last {
        log::warn!("horizon {horizon} beyond curve end {last}, clamped");
        last
    } else {
        horizon
    };
    1.0 - curve.at(h)
}

/// Anything that maps a feature vector to a distribution over the grid.
pub trait SurvivalModel {
    fn distribution(&self, x: &[f64]) -> DiscreteSurvivalDistribution;
    fn grid(&self) -> &TimeGrid;

    fn survival_curve(&self, x: &[f64]) -> SurvivalCurve {
        self.distribution(x).survival_curve(self.grid())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BoostedAft,
    MlpDeephit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Learner {
    BoostedAft(BoostedAftModel),
    MlpDeephit(MlpSurvivalModel),
}

/// A learner together with its input schema and feature normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub schema_version: u32,
    pub feature_names: Vec<String>,
    pub normalizer: QuantileNormalizer,
    pub learner: Learner,
}

impl FittedModel {
    fn inner(&self) -> &dyn SurvivalModel {
        match &self.learner {
            Learner::BoostedAft(m) => m,
            Learner::MlpDeephit(m) => m,
        }
    }

    pub fn kind(&self) -> ModelKind {
        match self.learner {
            Learner::BoostedAft(_) => ModelKind::BoostedAft,
            Learner::MlpDeephit(_) => ModelKind::MlpDeephit,
        }
    }

    pub fn check_features(&self, names: &[String]) -> Result<()> {
        if names != self.feature_names.as_slice() {
            return Err(Error::FeatureMismatch(format!(
                "model expects [{}], got [{}]",
                self.feature_names.join(","),
                names.join(",")
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(s)?;
        let found = v.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if found != MODEL_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { expected: MODEL_SCHEMA_VERSION, found });
        }
        Ok(serde_json::from_value(v)?)
    }
}

impl SurvivalModel for FittedModel {
    /// `x` is in raw feature units; normalization happens here.
    fn distribution(&self, x: &[f64]) -> DiscreteSurvivalDistribution {
        self.inner().distribution(&self.normalizer.apply(x))
    }

    fn grid(&self) -> &TimeGrid {
        self.inner().grid()
    }
}

/// Which learner to fit and with what settings.
#[derive(Debug, Clone, PartialEq)]
pub enum LearnerConfig {
    BoostedAft(AftConfig),
    MlpDeephit {
        spec: MlpSpec,
        loss: LossConfig,
        optimizer: OptimizerConfig,
    },
}

/// Fit the normalizer on the raw training features, then the learner.
pub fn fit_model(
    feature_names: Vec<String>,
    samples: &[SurvivalSample],
    grid: TimeGrid,
    config: &LearnerConfig,
) -> Result<FittedModel> {
    if samples.iter().any(|s| s.x.len() != feature_names.len()) {
        return Err(Error::FeatureMismatch("sample width differs from feature names".into()));
    }
    let normalizer = QuantileNormalizer::fit(samples.iter().map(|s| s.x.as_slice()), feature_names.len())?;
    let normed: Vec<SurvivalSample> = samples
        .iter()
        .map(|s| SurvivalSample { x: normalizer.apply(&s.x), ..s.clone() })
        .collect();
    let learner = match config {
        LearnerConfig::BoostedAft(cfg) => Learner::BoostedAft(train_boosted_aft(&normed, cfg, grid)?),
        LearnerConfig::MlpDeephit { spec, loss, optimizer } => {
            Learner::MlpDeephit(train_mlp_deephit(&normed, spec, loss, optimizer, grid)?)
        }
    };
    Ok(FittedModel {
        schema_version: MODEL_SCHEMA_VERSION,
        feature_names,
        normalizer,
        learner,
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.c += (self.sum - t) + v;
        } else {
            self.c += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.c
    }
}
