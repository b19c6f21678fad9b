//! Synthetic 24-hour beat series, the strip-sampling correlation study and
//! the feature-set comparison on synthetic cohorts.

mod cohort;

pub use cohort::{
    cohort_features, model_comparison, synth_cohort, write_comparison_csv, CohortSpec, ComparisonConfig,
    ComparisonRow, SyntheticSubject,
};

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrv::{self, HrvFeatures, Placement, SamplingStrategy};
use crate::rpeak::BeatToBeatSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDaySpec {
    /// Mean heart rate over the day, bpm.
    pub base_hr: f64,
    /// Peak-to-mean swing of the daily cosine, bpm.
    pub circadian_amplitude: f64,
    /// Stationary std of the AR(1) interval noise, ms.
    pub hrv_level: f64,
    pub ar_coefficient: f64,
    /// Premature beats per hour.
    pub ectopic_rate: f64,
    pub duration_hours: f64,
    pub seed: u64,
}

impl Default for SyntheticDaySpec {
    fn default() -> Self {
        Self {
            base_hr: 70.0,
            circadian_amplitude: 10.0,
            hrv_level: 30.0,
            ar_coefficient: 0.8,
            ectopic_rate: 5.0,
            duration_hours: 24.0,
            seed: 0,
        }
    }
}

impl SyntheticDaySpec {
    pub fn validate(&self) -> Result<()> {
        let ok = (30.0..=200.0).contains(&self.base_hr)
            && self.circadian_amplitude >= 0.0
            && self.base_hr - self.circadian_amplitude >= 25.0
            && self.base_hr + self.circadian_amplitude <= 220.0
            && (0.0..=200.0).contains(&self.hrv_level)
            && (0.0..1.0).contains(&self.ar_coefficient)
            && (0.0..=3600.0).contains(&self.ectopic_rate)
            && self.duration_hours > 0.0
            && self.duration_hours <= 48.0;
        if !ok {
            return Err(Error::config(format!("day spec outside physiological ranges: {self:?}")));
        }
        Ok(())
    }

    /// Heart rate of the circadian rhythm at `t` seconds; lowest at 04:00.
    pub fn circadian_hr(&self, t: f64) -> f64 {
        self.base_hr + self.circadian_amplitude * (2.0 * PI * (t / 86_400.0 - 16.0 / 24.0)).cos()
    }
}

/// One day of beats with onset times in seconds from midnight.
pub fn synth_day(spec: &SyntheticDaySpec) -> Result<BeatToBeatSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let end = spec.duration_hours * 3600.0;
    let phi = spec.ar_coefficient;
    let innov = spec.hrv_level * (1.0 - phi * phi).sqrt();
    let mut noise = spec.hrv_level * rng.sample::<f64, _>(StandardNormal);
    let (mut rr, mut onsets) = (Vec::new(), Vec::new());
    let mut t = 0.0;
    let mut push = |v: f64, t: &mut f64| {
        onsets.push(*t);
        rr.push(v);
        *t += v / 1000.0;
    };
    while t < end {
        let base = (60_000.0 / spec.circadian_hr(t) + noise).clamp(300.0, 2500.0);
        noise = phi * noise + innov * rng.sample::<f64, _>(StandardNormal);
        let p_ectopic = 1.0 - (-spec.ectopic_rate * base / 3.6e6).exp();
        if spec.ectopic_rate > 0.0 && rng.random_bool(p_ectopic) {
            push(0.65 * base, &mut t);
            if t < end {
                push(1.35 * base, &mut t);
            }
        } else {
            push(base, &mut t);
        }
    }
    let segs = vec![0; rr.len()];
    BeatToBeatSeries::new(rr, onsets, segs)
}

/// Beat-weighted variance of the noiseless circadian interval series, ms².
pub fn circadian_variance(base_hr: f64, amplitude: f64) -> f64 {
    let c = 60_000.0f64;
    c * c / base_hr * (1.0 / (base_hr * base_hr - amplitude * amplitude).sqrt() - 1.0 / base_hr)
}

/// Pearson correlation over pairs where both values are finite.
/// `None` when fewer than 3 pairs remain or either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 3 {
        return None;
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in &pairs {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    // relative to the scale of the data, a zero spread is degenerate
    let tiny = |s: f64, m: f64| s <= 1e-24 * n * m.abs().max(1.0).powi(2);
    if tiny(sxx, mx) || tiny(syy, my) {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    pub strip_lengths: Vec<f64>,
    pub strip_counts: Vec<usize>,
    pub n_days: usize,
    /// Sampling seeds; each yields its own correlation, then they are averaged.
    pub seeds: Vec<u64>,
    /// Seed for the population of synthetic days.
    pub day_seed: u64,
    pub placement: Placement,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            strip_lengths: vec![1.0, 5.0, 10.0, 30.0, 60.0],
            strip_counts: vec![3, 6, 12, 24],
            n_days: 50,
            seeds: (0..5).collect(),
            day_seed: 0,
            placement: Placement::OnePerHourRandom,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days < 20 {
            return Err(Error::config(format!("{} days, need at least 20", self.n_days)));
        }
        if self.seeds.is_empty() || self.strip_lengths.is_empty() || self.strip_counts.is_empty() {
            return Err(Error::config("study needs seeds, strip lengths and strip counts"));
        }
        for &l in &self.strip_lengths {
            for &c in &self.strip_counts {
                SamplingStrategy::new(l, c, 0)?;
            }
        }
        Ok(())
    }
}

/// Day parameters drawn for the `index`-th day of a study population.
pub fn study_day_spec(day_seed: u64, index: usize) -> SyntheticDaySpec {
    let mut rng = ChaCha8Rng::seed_from_u64(day_seed);
    rng.set_stream(index as u64 + 1);
    SyntheticDaySpec {
        base_hr: rng.random_range(55.0..85.0),
        circadian_amplitude: rng.random_range(3.0..15.0),
        hrv_level: rng.random_range(15.0..70.0),
        ar_coefficient: rng.random_range(0.5..0.95),
        ectopic_rate: rng.random_range(0.0..30.0),
        duration_hours: 24.0,
        seed: rng.random(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub feature: String,
    pub length_min: f64,
    pub count: usize,
    /// Mean over sampling seeds of the across-day Pearson r.
    pub r: Option<f64>,
}

/// Day features memoised by the exact set of strips drawn, so repeated
/// draws (e.g. exhaustive sampling under different seeds) cost nothing.
struct DayCache {
    day: BeatToBeatSeries,
    seen: HashMap<Vec<(u64, usize)>, [f64; 8]>,
}

impl DayCache {
    fn features(&mut self, strategy: &SamplingStrategy) -> Result<[f64; 8]> {
        let sample = hrv::sample_strips(&self.day, strategy)?;
        let key: Vec<(u64, usize)> = sample
            .strips
            .iter()
            .map(|s| (s.series.onset_times().first().map_or(0, |t| t.to_bits()), s.series.len()))
            .collect();
        if let Some(v) = self.seen.get(&key) {
            return Ok(*v);
        }
        let v = hrv::hrv_single_vector(&sample.series())?.values();
        self.seen.insert(key, v);
        Ok(v)
    }
}

/// A population of synthetic days with their exact features, against which
/// any sampling configuration can be correlated.
pub struct SamplingStudy {
    days: Vec<DayCache>,
    exact: Vec<[f64; 8]>,
    placement: Placement,
}

impl SamplingStudy {
    pub fn new(n_days: usize, day_seed: u64, placement: Placement) -> Result<Self> {
        let whole_day = SamplingStrategy::new(60.0, 24, 0)?;
        let mut days: Vec<DayCache> = (0..n_days)
            .map(|i| Ok(DayCache { day: synth_day(&study_day_spec(day_seed, i))?, seen: HashMap::new() }))
            .collect::<Result<_>>()?;
        let exact = days.iter_mut().map(|d| d.features(&whole_day)).collect::<Result<_>>()?;
        Ok(Self { days, exact, placement })
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// Across-day Pearson r per feature for one sampling seed.
    pub fn correlate(&mut self, length_min: f64, count: usize, seed: u64) -> Result<[Option<f64>; 8]> {
        let placement = self.placement;
        let approx: Vec<[f64; 8]> = self
            .days
            .iter_mut()
            .enumerate()
            .map(|(i, d)| {
                d.features(&SamplingStrategy {
                    strip_length_min: length_min,
                    strips_per_day: count,
                    seed: seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ i as u64,
                    placement,
                })
            })
            .collect::<Result<_>>()?;
        Ok(std::array::from_fn(|k| {
            let a: Vec<f64> = approx.iter().map(|v| v[k]).collect();
            let e: Vec<f64> = self.exact.iter().map(|v| v[k]).collect();
            pearson(&a, &e)
        }))
    }

    /// One row per feature with r averaged over `seeds`.
    pub fn rows(&mut self, length_min: f64, count: usize, seeds: &[u64]) -> Result<Vec<CorrelationRow>> {
        let per_seed: Vec<[Option<f64>; 8]> =
            seeds.iter().map(|&s| self.correlate(length_min, count, s)).collect::<Result<_>>()?;
        Ok(HrvFeatures::NAMES
            .iter()
            .enumerate()
            .map(|(k, name)| {
                let rs: Vec<f64> = per_seed.iter().filter_map(|v| v[k]).collect();
                if rs.len() < per_seed.len() {
                    log::warn!("{name} at {length_min} min x {count}: degenerate variance for some seeds");
                }
                CorrelationRow {
                    feature: name.to_string(),
                    length_min,
                    count,
                    r: (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64),
                }
            })
            .collect())
    }
}

/// Sampled versus exact day features across synthetic days, for every
/// strip length and strip count in `config`.
pub fn correlation_study(config: &StudyConfig) -> Result<Vec<CorrelationRow>> {
    config.validate()?;
    let mut study = SamplingStudy::new(config.n_days, config.day_seed, config.placement)?;
    let mut rows = Vec::new();
    for &length in &config.strip_lengths {
        for &count in &config.strip_counts {
            rows.extend(study.rows(length, count, &config.seeds)?);
        }
    }
    Ok(rows)
}

/// Mean r over features for one configuration, ignoring missing values.
pub fn mean_r(rows: &[CorrelationRow], length_min: f64, count: usize) -> Option<f64> {
    let rs: Vec<f64> = rows
        .iter()
        .filter(|r| r.length_min == length_min && r.count == count)
        .filter_map(|r| r.r)
        .collect();
    (!rs.is_empty()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
}

pub fn write_study_csv<W: Write>(rows: &[CorrelationRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["feature", "length_min", "count", "r"])?;
    for r in rows {
        wtr.write_record([
            r.feature.clone(),
            r.length_min.to_string(),
            r.count.to_string(),
            r.r.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
