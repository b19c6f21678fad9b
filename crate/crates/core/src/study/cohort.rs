use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{synth_day, SyntheticDaySpec};
use crate::error::{Error, Result};
use crate::io::{FeatureTable, SubjectRecord};
use crate::metrics::EvaluationReport;
use crate::pipeline::{ecg_only_names, evaluate, extract_cohort, feature_names, train, PipelineConfig};
use crate::signal::{synth_ecg, SynthEcgSpec, WaveShape};
use crate::survival::ModelKind;

/// Generator of subjects with a known log-linear risk structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortSpec {
    pub n_subjects: usize,
    pub seed: u64,
    /// Log-time shift per 10 years of age.
    pub age_effect: f64,
    /// Log-time shift per positive history flag.
    pub history_effect: f64,
    /// Log-time shift per 8 bpm of resting heart rate.
    pub rest_hr_effect: f64,
    /// Scale of the logistic noise on log-time.
    pub sigma: f64,
    /// Longest follow-up, years.
    pub follow_up: f64,
    pub ecg_duration_s: f64,
}

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            n_subjects: 1000,
            seed: 0,
            age_effect: 0.5,
            history_effect: 0.3,
            rest_hr_effect: 0.8,
            sigma: 0.5,
            follow_up: 11.0,
            ecg_duration_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSubject {
    pub record: SubjectRecord,
    pub ecg: SynthEcgSpec,
    pub day: SyntheticDaySpec,
}

pub fn synth_cohort(spec: &CohortSpec) -> Result<Vec<SyntheticSubject>> {
    if spec.n_subjects == 0 || !(spec.sigma > 0.0) || !(spec.follow_up > 0.0) {
        return Err(Error::config("cohort needs subjects, a positive sigma and follow-up"));
    }
    (0..spec.n_subjects)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(i as u64 + 1);
            let normal = |rng: &mut ChaCha8Rng| rng.sample::<f64, _>(StandardNormal);
            let sex = u8::from(rng.random_bool(0.5));
            let age: f64 = rng.random_range(35.0..85.0);
            let p_flag = 1.0 / (1.0 + (2.0 - 0.04 * (age - 60.0)).exp());
            let history: [bool; 10] = std::array::from_fn(|_| rng.random_bool(p_flag));

            let day = SyntheticDaySpec {
                base_hr: (72.0 + 8.0 * normal(&mut rng)).clamp(50.0, 100.0),
                circadian_amplitude: rng.random_range(4.0..20.0),
                hrv_level: rng.random_range(15.0..60.0),
                ar_coefficient: rng.random_range(0.5..0.95),
                ectopic_rate: rng.random_range(0.0..20.0),
                duration_hours: 24.0,
                seed: rng.random(),
            };
            let rest = day.base_hr - day.circadian_amplitude;

            // the ECG is taken at a random time of day
            let when: f64 = rng.random_range(0.0..86_400.0);
            let hr = (day.circadian_hr(when) + 3.0 * normal(&mut rng)).clamp(40.0, 140.0);
            let rr_ms: Vec<f64> = (0..64).map(|_| 60_000.0 / hr + 0.3 * day.hrv_level * normal(&mut rng)).collect();
            let ecg = SynthEcgSpec {
                rr_ms: rr_ms.into_iter().map(|v| v.clamp(350.0, 1600.0)).collect(),
                duration_s: spec.ecg_duration_s,
                p: WaveShape::new(rng.random_range(0.05..0.15), 20.0, -rng.random_range(130.0..190.0)),
                r: WaveShape::new(rng.random_range(0.8..1.4), 8.0, 0.0),
                t: WaveShape::new(rng.random_range(0.15..0.4), 40.0, rng.random_range(220.0..300.0)),
                noise_std: 0.02,
                seed: rng.random(),
                ..SynthEcgSpec::default()
            };

            let flags = history.iter().filter(|&&b| b).count() as f64;
            let eta = spec.age_effect * (age - 60.0) / 10.0
                + spec.history_effect * flags
                + spec.rest_hr_effect * (rest - 60.0) / 8.0;
            let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
            let t = (8f64.ln() - eta + spec.sigma * (u / (1.0 - u)).ln()).exp();
            let c = rng.random_range(0.5..1.1 * spec.follow_up).min(spec.follow_up);
            let record = SubjectRecord {
                subject_id: format!("s{i:05}"),
                sex,
                age,
                history,
                y: Some(t.min(c)),
                delta: Some(t <= c),
            };
            Ok(SyntheticSubject { record, ecg, day })
        })
        .collect()
}

/// Features of synthetic subjects through the full extraction pipeline.
pub fn cohort_features(subjects: &[SyntheticSubject], cfg: &PipelineConfig) -> FeatureTable {
    let records: Vec<SubjectRecord> = subjects.iter().map(|s| s.record.clone()).collect();
    let by_id: HashMap<&str, &SyntheticSubject> =
        subjects.iter().map(|s| (s.record.subject_id.as_str(), s)).collect();
    let load = |r: &SubjectRecord| {
        let s = by_id[r.subject_id.as_str()];
        let ecg = synth_ecg(&s.ecg).map(|e| e.record.with_subject(r.subject_id.clone()));
        let day = synth_day(&s.day);
        (ecg.ok(), day.ok())
    };
    extract_cohort(&records, &load, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ComparisonConfig {
    pub train: CohortSpec,
    pub test: CohortSpec,
    pub learners: Vec<ModelKind>,
    pub pipeline: PipelineConfig,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            train: CohortSpec { n_subjects: 1500, seed: 1, ..Default::default() },
            test: CohortSpec { n_subjects: 1500, seed: 2, ..Default::default() },
            learners: vec![ModelKind::BoostedAft, ModelKind::MlpDeephit],
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub with_hrv: bool,
    pub report: EvaluationReport,
}

fn kind_name(kind: ModelKind) -> &'static str {
    match kind {
        ModelKind::BoostedAft => "boosted_aft",
        ModelKind::MlpDeephit => "mlp_deephit",
    }
}

/// Each learner trained on ECG-only and on ECG plus sampled HRV features,
/// scored on a held-out synthetic cohort.
pub fn model_comparison(config: &ComparisonConfig) -> Result<Vec<ComparisonRow>> {
    let train_set = cohort_features(&synth_cohort(&config.train)?, &config.pipeline);
    let test_set = cohort_features(&synth_cohort(&config.test)?, &config.pipeline);
    let mut rows = Vec::new();
    for &kind in &config.learners {
        for (with_hrv, names) in [(false, ecg_only_names()), (true, feature_names())] {
            let model = train(&train_set.select(&names)?, kind, &config.pipeline)?;
            let report = evaluate(&model, &test_set.select(&names)?)?;
            let model = format!("{}{}", kind_name(kind), if with_hrv { "+hrv" } else { "" });
            log::info!("{model}: c-index {:?}", report.c_index);
            rows.push(ComparisonRow { model, with_hrv, report });
        }
    }
    Ok(rows)
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(EvaluationReport::CSV_HEADER)?;
    for r in rows {
        wtr.write_record(r.report.csv_row(&r.model))?;
    }
    wtr.flush()?;
    Ok(())
}
