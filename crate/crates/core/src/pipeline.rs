//! End-to-end orchestration: ECG and beat series in, feature tables, fitted
//! models, predictions and evaluation reports out.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrv::{self, SamplingStrategy};
use crate::io::{FeatureRow, FeatureTable, SubjectRecord, HISTORY_NAMES};
use crate::metrics::{evaluate_curves, EvaluationReport};
use crate::morphology::{build_template, delineate, extract_cycles, rhythm_features};
use crate::rpeak::{compute_rri, detect_r_peaks_with, BeatToBeatSeries, DetectorOptions};
use crate::signal::{bandpass_filter, EcgRecord, FilterSpec};
use crate::survival::{
    fit_model, risk_within, AftConfig, FittedModel, LearnerConfig, LossConfig, MlpSpec, ModelKind,
    OptimizerConfig, SurvivalModel, SurvivalSample, TimeGrid,
};

pub const DEMOGRAPHIC_NAMES: [&str; 2] = ["sex", "age"];
pub const RHYTHM_NAMES: [&str; 3] = ["mean_hr", "sd1_sd2", "sdnn"];
pub const SHAPE_NAMES: [&str; 10] = [
    "p_timing",
    "q_timing",
    "r_timing",
    "s_timing",
    "t_timing",
    "p_amplitude",
    "q_amplitude",
    "r_amplitude",
    "s_amplitude",
    "t_amplitude",
];
/// Sampled long-term HRV columns. SDNN and SD1/SD2 also appear among the
/// rhythm features, so the day-level versions carry an `hrv_` prefix.
pub const HRV_NAMES: [&str; 8] = [
    "hr_at_rest",
    "active_hr",
    "hrv_sdnn",
    "rmssd",
    "pnn50",
    "hrv_sd1_sd2",
    "ellipse_area",
    "sample_entropy",
];

/// All feature columns in file order.
pub fn feature_names() -> Vec<String> {
    DEMOGRAPHIC_NAMES
        .iter()
        .chain(&HISTORY_NAMES)
        .chain(&RHYTHM_NAMES)
        .chain(&SHAPE_NAMES)
        .chain(&HRV_NAMES)
        .map(|s| s.to_string())
        .collect()
}

/// Feature columns without the sampled HRV block.
pub fn ecg_only_names() -> Vec<String> {
    feature_names().into_iter().filter(|n| !HRV_NAMES.contains(&n.as_str())).collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub filter: FilterSpec,
    pub detector: DetectorOptions,
    pub sampling: SamplingStrategy,
    pub grid: TimeGrid,
    pub aft: AftConfig,
    pub mlp: MlpSpec,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.sampling.validate()?;
        self.grid.validate()?;
        self.aft.validate()?;
        self.loss.validate()?;
        if self.optimizer.epochs == 0 || self.optimizer.batch_size == 0 {
            return Err(Error::config("epochs and batch size must be positive"));
        }
        Ok(())
    }

    pub fn learner(&self, kind: ModelKind) -> LearnerConfig {
        match kind {
            ModelKind::BoostedAft => LearnerConfig::BoostedAft(self.aft.clone()),
            ModelKind::MlpDeephit => LearnerConfig::MlpDeephit {
                spec: MlpSpec { seed: self.mlp.seed ^ self.seed, ..self.mlp.clone() },
                loss: self.loss,
                optimizer: self.optimizer.clone(),
            },
        }
    }
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

/// Per-subject sampling seed, stable across runs and record order.
pub fn subject_seed(seed: u64, subject_id: &str) -> u64 {
    seed ^ fnv1a(subject_id)
}

/// Rhythm and shape values from one ECG record, NaN where undefined.
pub fn ecg_features(record: &EcgRecord, cfg: &PipelineConfig) -> Result<Vec<f64>> {
    let filtered = bandpass_filter(record, &cfg.filter)?;
    let peaks = detect_r_peaks_with(&filtered, &cfg.detector)?;
    let bb = compute_rri(&peaks)?;
    let mut out = Vec::with_capacity(RHYTHM_NAMES.len() + SHAPE_NAMES.len());
    match rhythm_features(&bb) {
        Ok(r) => out.extend([r.mean_hr, r.sd1_sd2, r.sdnn]),
        Err(e) => {
            log::warn!("{}: rhythm features unavailable: {e}", record.subject_id());
            out.extend([f64::NAN; 3]);
        }
    }
    let shape = extract_cycles(&filtered, &peaks)
        .and_then(|c| build_template(&c))
        .and_then(|t| delineate(&t));
    match shape {
        Ok(f) => {
            let waves = [f.p, f.q, f.r, f.s, f.t];
            out.extend(waves.iter().map(|w| w.map_or(f64::NAN, |w| w.timing_ms)));
            out.extend(waves.iter().map(|w| w.map_or(f64::NAN, |w| w.amplitude)));
        }
        Err(e) => {
            log::warn!("{}: shape features unavailable: {e}", record.subject_id());
            out.extend([f64::NAN; 10]);
        }
    }
    Ok(out)
}

/// Sampled long-term HRV values from a day of beats, in `HRV_NAMES` order.
pub fn day_features(day: &BeatToBeatSeries, strategy: &SamplingStrategy) -> Result<[f64; 8]> {
    let sample = hrv::sample_strips(day, strategy)?;
    let f = hrv::hrv_single_vector(&sample.series())?;
    Ok([
        f.rest_hr,
        f.active_hr,
        f.sdnn,
        f.rmssd,
        f.pnn50,
        f.sd1_sd2,
        f.ellipse_area,
        f.sample_entropy.unwrap_or(f64::NAN),
    ])
}

/// One feature row. A failing ECG or day leaves its block missing.
pub fn extract_subject(
    subject: &SubjectRecord,
    ecg: Option<&EcgRecord>,
    day: Option<&BeatToBeatSeries>,
    cfg: &PipelineConfig,
) -> FeatureRow {
    let id = &subject.subject_id;
    let mut values = vec![subject.sex as f64, subject.age];
    values.extend(subject.history.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let ecg_block = ecg.map(|r| ecg_features(r, cfg)).transpose().unwrap_or_else(|e| {
        log::warn!("{id}: ECG features failed: {e}");
        None
    });
    values.extend(ecg_block.unwrap_or_else(|| vec![f64::NAN; RHYTHM_NAMES.len() + SHAPE_NAMES.len()]));
    let strategy = SamplingStrategy { seed: subject_seed(cfg.sampling.seed ^ cfg.seed, id), ..cfg.sampling.clone() };
    let hrv_block = day.map(|d| day_features(d, &strategy)).transpose().unwrap_or_else(|e| {
        log::warn!("{id}: HRV features failed: {e}");
        None
    });
    values.extend(hrv_block.unwrap_or([f64::NAN; 8]));
    FeatureRow { subject_id: id.clone(), values, y: subject.y, delta: subject.delta }
}

/// Lead-I record and 24 h beat series for a subject, either possibly absent.
pub type SubjectLoader<'a> = dyn Fn(&SubjectRecord) -> (Option<EcgRecord>, Option<BeatToBeatSeries>) + Sync + 'a;

/// Extract every subject on scoped worker threads; row order follows `subjects`.
pub fn extract_cohort(
    subjects: &[SubjectRecord],
    load: &SubjectLoader<'_>,
    cfg: &PipelineConfig,
) -> FeatureTable {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(subjects.len().max(1));
    let chunk = subjects.len().div_ceil(workers).max(1);
    let rows: Vec<FeatureRow> = std::thread::scope(|s| {
        let handles: Vec<_> = subjects
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|subj| {
                            let (ecg, day) = load(subj);
                            extract_subject(subj, ecg.as_ref(), day.as_ref(), cfg)
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("extraction worker panicked")).collect()
    });
    FeatureTable { names: feature_names(), rows }
}

/// Training samples; rows without an outcome are an error.
pub fn survival_samples(table: &FeatureTable) -> Result<Vec<SurvivalSample>> {
    table
        .rows
        .iter()
        .map(|r| match (r.y, r.delta) {
            (Some(y), Some(d)) => Ok(SurvivalSample::new(r.values.clone(), y, d)),
            _ => Err(Error::data(format!("{}: missing y or delta", r.subject_id))),
        })
        .collect()
}

pub fn train(table: &FeatureTable, kind: ModelKind, cfg: &PipelineConfig) -> Result<FittedModel> {
    let samples = survival_samples(table)?;
    fit_model(table.names.clone(), &samples, cfg.grid, &cfg.learner(kind))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub subject_id: String,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// Probability of the event within five years.
    pub risk_5y: f64,
}

pub fn predict(model: &FittedModel, table: &FeatureTable) -> Result<Vec<Prediction>> {
    model.check_features(&table.names)?;
    Ok(table
        .rows
        .iter()
        .map(|r| {
            let c = model.survival_curve(&r.values);
            Prediction { subject_id: r.subject_id.clone(), risk_5y: risk_within(&c, 5.0), times: c.times, survival: c.survival }
        })
        .collect())
}

pub fn evaluate(model: &FittedModel, table: &FeatureTable) -> Result<EvaluationReport> {
    model.check_features(&table.names)?;
    let samples = survival_samples(table)?;
    let curves: Vec<_> = samples.iter().map(|s| model.survival_curve(&s.x)).collect();
    let y: Vec<f64> = samples.iter().map(|s| s.y).collect();
    let ev: Vec<bool> = samples.iter().map(|s| s.event).collect();
    Ok(evaluate_curves(&curves, &y, &ev, model.grid()))
}
