//! Long-term HRV from ultra-short strips sampled across a day.
//!
//! All standard deviations divide by N. Statistics built on successive
//! differences never use a pair that straddles a segment boundary.

mod entropy;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rpeak::BeatToBeatSeries;

pub use entropy::{count_matches, sample_entropy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    /// Distinct random hours, one strip at a random offset within each.
    OnePerHourRandom,
    /// Strip starts drawn uniformly over the day.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingStrategy {
    pub strip_length_min: f64,
    pub strips_per_day: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_placement")]
    pub placement: Placement,
}

fn default_placement() -> Placement {
    Placement::OnePerHourRandom
}

impl Default for SamplingStrategy {
    fn default() -> Self {
        Self {
            strip_length_min: 5.0,
            strips_per_day: 24,
            seed: 0,
            placement: Placement::OnePerHourRandom,
        }
    }
}

impl SamplingStrategy {
    pub fn new(strip_length_min: f64, strips_per_day: usize, seed: u64) -> Result<Self> {
        let s = Self {
            strip_length_min,
            strips_per_day,
            seed,
            placement: Placement::OnePerHourRandom,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1.0..=60.0).contains(&self.strip_length_min) {
            return Err(Error::config(format!(
                "strip length {} min outside [1, 60]",
                self.strip_length_min
            )));
        }
        if !(1..=24).contains(&self.strips_per_day) {
            return Err(Error::config(format!(
                "{} strips per day outside [1, 24]",
                self.strips_per_day
            )));
        }
        Ok(())
    }
}

/// A sampled strip and the hour of the day it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    pub hour: usize,
    pub series: BeatToBeatSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripSample {
    pub strips: Vec<Strip>,
    /// Hours that were requested but held no data.
    pub skipped_hours: Vec<usize>,
}

impl StripSample {
    pub fn series(&self) -> Vec<BeatToBeatSeries> {
        self.strips.iter().map(|s| s.series.clone()).collect()
    }
}

/// Draw strips from a day whose onset times are seconds since the start of
/// the day.
pub fn sample_strips(day: &BeatToBeatSeries, strategy: &SamplingStrategy) -> Result<StripSample> {
    strategy.validate()?;
    let onsets = day.onset_times();
    if onsets.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::data("day onset times are not sorted"));
    }
    let len_s = strategy.strip_length_min * 60.0;
    let mut rng = ChaCha8Rng::seed_from_u64(strategy.seed);

    let starts: Vec<(usize, f64)> = match strategy.placement {
        Placement::OnePerHourRandom => {
            let mut hours = index::sample(&mut rng, 24, strategy.strips_per_day).into_vec();
            hours.sort_unstable();
            hours
                .into_iter()
                .map(|h| {
                    let slack = 3600.0 - len_s;
                    let offset = if slack > 0.0 { rng.random_range(0.0..=slack) } else { 0.0 };
                    (h, h as f64 * 3600.0 + offset)
                })
                .collect()
        }
        Placement::UniformRandom => {
            let mut s: Vec<f64> = (0..strategy.strips_per_day)
                .map(|_| rng.random_range(0.0..=86400.0 - len_s))
                .collect();
            s.sort_by(f64::total_cmp);
            s.into_iter().map(|t| ((t / 3600.0) as usize, t)).collect()
        }
    };

    let mut out = StripSample {
        strips: Vec::new(),
        skipped_hours: Vec::new(),
    };
    let mut next_id = 0u32;
    for (hour, start) in starts {
        let lo = onsets.partition_point(|&t| t < start);
        let hi = onsets.partition_point(|&t| t < start + len_s);
        if hi <= lo {
            log::warn!("hour {hour} has no beats, strip skipped");
            out.skipped_hours.push(hour);
            continue;
        }
        let src = day.slice(lo..hi);
        let mut series = BeatToBeatSeries::default();
        for i in 0..src.len() {
            if i > 0 && src.is_boundary(i - 1) {
                next_id += 1;
            }
            series.push(src.intervals()[i], src.onset_times()[i], next_id);
        }
        next_id += 1;
        out.strips.push(Strip { hour, series });
    }
    Ok(out)
}

/// Join strips into one series. Every strip, and every internal segment,
/// keeps its own segment id; empty strips are dropped.
pub fn concat_segments(strips: &[BeatToBeatSeries]) -> BeatToBeatSeries {
    let mut out = BeatToBeatSeries::default();
    let mut id = 0u32;
    for s in strips.iter().filter(|s| !s.is_empty()) {
        for i in 0..s.len() {
            if i > 0 && s.is_boundary(i - 1) {
                id += 1;
            }
            out.push(s.intervals()[i], s.onset_times()[i], id);
        }
        id += 1;
    }
    out
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn sdnn(bb: &BeatToBeatSeries) -> Result<f64> {
    if bb.is_empty() {
        return Err(Error::data("sdnn of an empty series"));
    }
    Ok(mean_std(bb.intervals()).1)
}

pub fn rmssd(bb: &BeatToBeatSeries) -> Result<f64> {
    let d = bb.differences();
    if d.is_empty() {
        return Err(Error::data("no consecutive intervals for rmssd"));
    }
    Ok((d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64).sqrt())
}

pub fn pnn50(bb: &BeatToBeatSeries) -> Result<f64> {
    let d = bb.differences();
    if d.is_empty() {
        return Err(Error::data("no consecutive intervals for pnn50"));
    }
    Ok(d.iter().filter(|x| x.abs() > 50.0).count() as f64 / d.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Poincare {
    pub sd1: f64,
    pub sd2: f64,
    /// sd1 / sd2, or 0 when sd2 is 0.
    pub ratio: f64,
    pub area: f64,
    pub degenerate: bool,
}

/// Population spread of the pair cloud across and along the identity line.
pub(crate) fn poincare_sd(pairs: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pairs.is_empty() {
        return None;
    }
    let across: Vec<f64> = pairs.iter().map(|(a, b)| (b - a) / std::f64::consts::SQRT_2).collect();
    let along: Vec<f64> = pairs.iter().map(|(a, b)| (a + b) / std::f64::consts::SQRT_2).collect();
    Some((mean_std(&across).1, mean_std(&along).1))
}

pub fn poincare(bb: &BeatToBeatSeries) -> Result<Poincare> {
    let pairs: Vec<_> = bb.consecutive_pairs().collect();
    if pairs.len() < 3 {
        return Err(Error::data(format!("{} consecutive pairs, need 3", pairs.len())));
    }
    let (sd1, sd2) = poincare_sd(&pairs).expect("non-empty");
    let degenerate = sd2 == 0.0;
    Ok(Poincare {
        sd1,
        sd2,
        ratio: if degenerate { 0.0 } else { sd1 / sd2 },
        area: std::f64::consts::PI * sd1 * sd2,
        degenerate,
    })
}

/// Linear-interpolation percentile at rank q/100 * (n - 1).
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::data("percentile of an empty list"));
    }
    if !(0.0..=100.0).contains(&q) {
        return Err(Error::config(format!("percentile {q} outside [0, 100]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = q / 100.0 * (v.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    Ok(v[lo] + (rank - lo as f64) * (v[hi] - v[lo]))
}

pub fn mean_hr(bb: &BeatToBeatSeries) -> Option<f64> {
    (!bb.is_empty()).then(|| 60000.0 / mean_std(bb.intervals()).0)
}

/// Percentile of the per-strip mean heart rates.
pub fn percentile_hr(strips: &[BeatToBeatSeries], q: f64) -> Result<f64> {
    let hrs: Vec<f64> = strips.iter().filter_map(mean_hr).collect();
    percentile(&hrs, q)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrvFeatures {
    pub active_hr: f64,
    pub rest_hr: f64,
    pub sdnn: f64,
    pub rmssd: f64,
    pub pnn50: f64,
    pub sample_entropy: Option<f64>,
    pub sd1_sd2: f64,
    pub ellipse_area: f64,
}

impl HrvFeatures {
    pub const NAMES: [&'static str; 8] = [
        "active_hr",
        "rest_hr",
        "sdnn",
        "rmssd",
        "pnn50",
        "sample_entropy",
        "sd1_sd2",
        "ellipse_area",
    ];

    /// Values in `NAMES` order; an undefined entropy is NaN.
    pub fn values(&self) -> [f64; 8] {
        [
            self.active_hr,
            self.rest_hr,
            self.sdnn,
            self.rmssd,
            self.pnn50,
            self.sample_entropy.unwrap_or(f64::NAN),
            self.sd1_sd2,
            self.ellipse_area,
        ]
    }
}

/// Merge all strips and compute every statistic on the merged series.
pub fn hrv_single_vector(strips: &[BeatToBeatSeries]) -> Result<HrvFeatures> {
    let merged = concat_segments(strips);
    if merged.is_empty() {
        return Err(Error::data("no beats in any strip"));
    }
    let pc = poincare(&merged)?;
    Ok(HrvFeatures {
        active_hr: percentile_hr(strips, 85.0)?,
        rest_hr: percentile_hr(strips, 15.0)?,
        sdnn: sdnn(&merged)?,
        rmssd: rmssd(&merged)?,
        pnn50: pnn50(&merged)?,
        sample_entropy: sample_entropy(&merged, 2, None)?,
        sd1_sd2: pc.ratio,
        ellipse_area: pc.area,
    })
}

/// Per-strip statistics; anything a strip is too short for is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct HrvStep {
    pub hour: usize,
    pub mean_hr: Option<f64>,
    pub sdnn: Option<f64>,
    pub rmssd: Option<f64>,
    pub pnn50: Option<f64>,
    pub sample_entropy: Option<f64>,
    pub sd1_sd2: Option<f64>,
    pub ellipse_area: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct HrvSeries {
    pub steps: Vec<HrvStep>,
}

pub fn hrv_time_series(strips: &[Strip]) -> Result<HrvSeries> {
    if strips.len() > 24 {
        return Err(Error::data(format!("{} strips, at most 24 steps", strips.len())));
    }
    if strips.windows(2).any(|w| w[1].hour < w[0].hour) {
        return Err(Error::data("strips are not in hour order"));
    }
    let steps: Vec<HrvStep> = strips
        .iter()
        .map(|s| {
            let bb = &s.series;
            let pc = poincare(bb).ok();
            HrvStep {
                hour: s.hour,
                mean_hr: mean_hr(bb),
                sdnn: sdnn(bb).ok(),
                rmssd: rmssd(bb).ok(),
                pnn50: pnn50(bb).ok(),
                sample_entropy: sample_entropy(bb, 2, None).ok().flatten(),
                sd1_sd2: pc.map(|p| p.ratio),
                ellipse_area: pc.map(|p| p.area),
            }
        })
        .collect();
    if steps.iter().all(|s| s.mean_hr.is_none()) {
        return Err(Error::data("no strip holds any beats"));
    }
    Ok(HrvSeries { steps })
}

/// Reference features of a whole day: every hour taken in full.
pub fn exact_day_features(day: &BeatToBeatSeries) -> Result<HrvFeatures> {
    let all = SamplingStrategy::new(60.0, 24, 0)?;
    hrv_single_vector(&sample_strips(day, &all)?.series())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(v: &[f64]) -> BeatToBeatSeries {
        BeatToBeatSeries::from_intervals(v.to_vec()).unwrap()
    }

    /// A day of constant 1000 ms beats, `hours` long.
    fn flat_day(hours: usize, rr: f64) -> BeatToBeatSeries {
        let n = (hours as f64 * 3600.0 * 1000.0 / rr) as usize;
        bb(&vec![rr; n])
    }

    #[test]
    fn exhaustive_sampling_partitions_by_hour() {
        let day = BeatToBeatSeries::from_intervals((0..110_000).map(|i| 800.0 + (i % 7) as f64).collect())
            .unwrap();
        let s = sample_strips(&day, &SamplingStrategy::new(60.0, 24, 3).unwrap()).unwrap();
        assert!(s.skipped_hours.is_empty());
        let joined: Vec<f64> = s.strips.iter().flat_map(|s| s.series.intervals().to_vec()).collect();
        let covered = day.onset_times().iter().filter(|&&t| t < 86400.0).count();
        assert_eq!(joined, day.intervals()[..covered]);
        for (h, strip) in s.strips.iter().enumerate() {
            assert_eq!(strip.hour, h);
            assert!(strip.series.onset_times().iter().all(|t| (t / 3600.0) as usize == h));
        }
        let ids: Vec<u32> = s.strips.iter().map(|s| s.series.segment_ids()[0]).collect();
        assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn seeded_sampling_is_repeatable() {
        let day = flat_day(24, 900.0);
        let st = SamplingStrategy::new(1.0, 24, 11).unwrap();
        assert_eq!(sample_strips(&day, &st).unwrap(), sample_strips(&day, &st).unwrap());
        let other = sample_strips(&day, &SamplingStrategy { seed: 12, ..st.clone() }).unwrap();
        assert_ne!(other, sample_strips(&day, &st).unwrap());
        let few = sample_strips(&day, &SamplingStrategy::new(5.0, 6, 1).unwrap()).unwrap();
        assert_eq!(few.strips.len(), 6);
        for s in &few.strips {
            let span = s.series.onset_times().last().unwrap() - s.series.onset_times()[0];
            assert!(span < 300.0);
        }
    }

    #[test]
    fn half_day_skips_missing_hours() {
        let s = sample_strips(&flat_day(12, 1000.0), &SamplingStrategy::new(5.0, 24, 0).unwrap()).unwrap();
        assert_eq!(s.strips.len(), 12);
        assert_eq!(s.skipped_hours, (12..24).collect::<Vec<_>>());
    }

    #[test]
    fn uniform_placement_is_seeded() {
        let day = flat_day(24, 1000.0);
        let st = SamplingStrategy {
            placement: Placement::UniformRandom,
            ..SamplingStrategy::new(5.0, 10, 4).unwrap()
        };
        let a = sample_strips(&day, &st).unwrap();
        assert_eq!(a.strips.len(), 10);
        assert_eq!(a, sample_strips(&day, &st).unwrap());
    }

    #[test]
    fn concat_keeps_boundaries() {
        let merged = concat_segments(&[bb(&[800.0, 810.0]), bb(&[]), bb(&[900.0, 910.0])]);
        assert_eq!(merged.intervals(), &[800.0, 810.0, 900.0, 910.0]);
        assert_eq!(merged.boundaries(), vec![1]);
        assert_eq!(merged.differences(), vec![10.0, 10.0]);
        assert!((rmssd(&merged).unwrap() - 10.0).abs() < 1e-12);
        let one = bb(&[800.0, 820.0, 790.0]);
        assert_eq!(concat_segments(std::slice::from_ref(&one)), one);
    }

    #[test]
    fn difference_statistics() {
        assert_eq!(rmssd(&bb(&[800.0; 5])).unwrap(), 0.0);
        let want = ((100.0 + 400.0 + 225.0) / 3.0f64).sqrt();
        assert!((rmssd(&bb(&[800.0, 810.0, 790.0, 805.0])).unwrap() - want).abs() < 1e-12);
        assert!((want - 15.546).abs() < 1e-3);
        assert_eq!(pnn50(&bb(&[800.0; 5])).unwrap(), 0.0);
        // differences 10, -60, 55, 40
        assert_eq!(pnn50(&bb(&[800.0, 810.0, 750.0, 805.0, 845.0])).unwrap(), 0.5);
        assert_eq!(pnn50(&bb(&[800.0, 850.0, 800.0, 850.0])).unwrap(), 0.0);
        assert!(rmssd(&bb(&[800.0])).is_err());
        assert!(pnn50(&concat_segments(&[bb(&[800.0]), bb(&[900.0])])).is_err());
    }

    #[test]
    fn poincare_examples() {
        let p = poincare(&bb(&[900.0; 6])).unwrap();
        assert_eq!((p.sd1, p.sd2, p.area), (0.0, 0.0, 0.0));
        assert!(p.degenerate);
        let alt = bb(&[800.0, 900.0].repeat(4));
        let pairs: Vec<_> = alt.consecutive_pairs().collect();
        let n = pairs.len() as f64;
        // oracle: eigenvalues of the pair covariance matrix
        let (ma, mb) = (
            pairs.iter().map(|p| p.0).sum::<f64>() / n,
            pairs.iter().map(|p| p.1).sum::<f64>() / n,
        );
        let saa = pairs.iter().map(|p| (p.0 - ma).powi(2)).sum::<f64>() / n;
        let sbb = pairs.iter().map(|p| (p.1 - mb).powi(2)).sum::<f64>() / n;
        let sab = pairs.iter().map(|p| (p.0 - ma) * (p.1 - mb)).sum::<f64>() / n;
        let p = poincare(&alt).unwrap();
        assert!((p.sd1 - ((saa + sbb) / 2.0 - sab).sqrt()).abs() < 1e-9);
        assert!(p.sd2 < 1e-6 * p.sd1);
        assert!((p.sd1 - 50.0 * 2f64.sqrt()).abs() < 1.5);
        let r = poincare(&bb(&[812.0, 790.0, 845.0, 801.0, 777.0, 830.0])).unwrap();
        assert_eq!(r.area, std::f64::consts::PI * r.sd1 * r.sd2);
        assert!(poincare(&bb(&[800.0, 810.0, 820.0])).is_err());
    }

    #[test]
    fn percentile_examples() {
        let strips: Vec<_> = (60..84).map(|hr| bb(&[60000.0 / hr as f64; 3])).collect();
        assert!((percentile_hr(&strips, 85.0).unwrap() - 79.55).abs() < 1e-9);
        assert!((percentile_hr(&strips, 15.0).unwrap() - 63.45).abs() < 1e-9);
        let same = vec![bb(&[750.0; 4]); 24];
        for q in [0.0, 15.0, 50.0, 85.0, 100.0] {
            assert!((percentile_hr(&same, q).unwrap() - 80.0).abs() < 1e-12);
        }
        assert!(percentile_hr(&[], 50.0).is_err());
    }

    #[test]
    fn single_vector_of_copies_matches_one_strip() {
        let one = bb(&[812.0, 790.0, 845.0, 801.0, 777.0, 830.0, 799.0]);
        let f = hrv_single_vector(&vec![one.clone(); 24]).unwrap();
        assert!((f.sdnn - sdnn(&one).unwrap()).abs() < 1e-9);
        assert!((f.rmssd - rmssd(&one).unwrap()).abs() < 1e-9);
        assert_eq!(f.active_hr, f.rest_hr);
    }

    #[test]
    fn time_series_locality() {
        let clean = bb(&[800.0, 805.0, 795.0, 810.0, 790.0, 800.0]);
        let noisy = bb(&[700.0, 905.0, 650.0, 910.0, 690.0, 880.0]);
        let mut strips: Vec<Strip> = (0..24).map(|h| Strip { hour: h, series: clean.clone() }).collect();
        let same = hrv_time_series(&strips).unwrap();
        assert!(same.steps.windows(2).all(|w| HrvStep { hour: 0, ..w[0] } == HrvStep { hour: 0, ..w[1] }));
        strips[7].series = noisy;
        let ts = hrv_time_series(&strips).unwrap();
        for (i, (a, b)) in same.steps.iter().zip(&ts.steps).enumerate() {
            assert_eq!(a == b, i != 7, "step {i}");
        }
        let tiny = vec![Strip { hour: 0, series: bb(&[800.0]) }];
        let step = hrv_time_series(&tiny).unwrap().steps[0];
        assert!(step.mean_hr.is_some() && step.rmssd.is_none() && step.sample_entropy.is_none());
    }
}
