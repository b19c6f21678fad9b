//! Hamilton-style R-peak detection and inter-beat intervals.
//!
//! Detection runs on a band-passed ECG: absolute central derivative, 80 ms
//! centred moving average, and an adaptive threshold placed between running
//! means of the last eight QRS and noise peak heights. A missed beat is
//! searched back at half threshold once 1.5 running RR intervals have passed
//! without a detection. Each detection is refined to the largest absolute
//! ECG sample within ±40 ms.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::EcgRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorOptions {
    pub averaging_ms: f64,
    pub refractory_ms: f64,
    pub threshold_coefficient: f64,
    pub searchback_factor: f64,
    pub refine_ms: f64,
    pub min_duration_s: f64,
}

impl Default for DetectorOptions {
    fn default() -> Self {
        Self {
            averaging_ms: 80.0,
            refractory_ms: 200.0,
            threshold_coefficient: 0.3125,
            searchback_factor: 1.5,
            refine_ms: 40.0,
            min_duration_s: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RPeakSeries {
    indices: Vec<usize>,
    times: Vec<f64>,
    fs: f64,
}

impl RPeakSeries {
    /// Build from sample indices; they must be strictly increasing.
    pub fn from_indices(indices: Vec<usize>, fs: f64) -> Result<Self> {
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::data("R-peak indices must be strictly increasing"));
        }
        let times = indices.iter().map(|&i| i as f64 / fs).collect();
        Ok(Self { indices, times, fs })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Ordered inter-beat intervals (ms). Adjacent intervals with different
/// segment ids were not consecutive in the source recording.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BeatToBeatSeries {
    intervals: Vec<f64>,
    onset_times: Vec<f64>,
    segment_ids: Vec<u32>,
}

impl BeatToBeatSeries {
    pub fn new(intervals: Vec<f64>, onset_times: Vec<f64>, segment_ids: Vec<u32>) -> Result<Self> {
        if intervals.len() != onset_times.len() || intervals.len() != segment_ids.len() {
            return Err(Error::data("interval, onset and segment arrays differ in length"));
        }
        if let Some(v) = intervals.iter().find(|v| !(**v > 0.0 && **v < 5000.0)) {
            return Err(Error::data(format!("interval {v} ms outside (0, 5000)")));
        }
        Ok(Self {
            intervals,
            onset_times,
            segment_ids,
        })
    }

    /// A single contiguous segment starting at t = 0.
    pub fn from_intervals(intervals: Vec<f64>) -> Result<Self> {
        let mut t = 0.0;
        let onsets = intervals
            .iter()
            .map(|rr| {
                let onset = t;
                t += rr / 1000.0;
                onset
            })
            .collect();
        let ids = vec![0; intervals.len()];
        Self::new(intervals, onsets, ids)
    }

    /// Concatenate contiguous runs; each run becomes its own segment.
    pub fn from_segments(segments: &[Vec<f64>]) -> Result<Self> {
        let mut out = Self::default();
        let mut t = 0.0;
        for (id, seg) in segments.iter().enumerate() {
            for &rr in seg {
                out.intervals.push(rr);
                out.onset_times.push(t);
                out.segment_ids.push(id as u32);
                t += rr / 1000.0;
            }
        }
        Self::new(out.intervals, out.onset_times, out.segment_ids)
    }

    pub fn intervals(&self) -> &[f64] {
        &self.intervals
    }

    pub fn onset_times(&self) -> &[f64] {
        &self.onset_times
    }

    pub fn segment_ids(&self) -> &[u32] {
        &self.segment_ids
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// True when intervals `i` and `i + 1` were not consecutive beats.
    pub fn is_boundary(&self, i: usize) -> bool {
        self.segment_ids[i] != self.segment_ids[i + 1]
    }

    /// Positions `i` such that a boundary lies between `i` and `i + 1`.
    pub fn boundaries(&self) -> Vec<usize> {
        (0..self.len().saturating_sub(1))
            .filter(|&i| self.is_boundary(i))
            .collect()
    }

    /// Within-segment consecutive pairs (RR[i], RR[i+1]).
    pub fn consecutive_pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.intervals
            .windows(2)
            .zip(self.segment_ids.windows(2))
            .filter(|(_, s)| s[0] == s[1])
            .map(|(w, _)| (w[0], w[1]))
    }

    /// Successive differences that do not straddle a segment boundary.
    pub fn differences(&self) -> Vec<f64> {
        self.consecutive_pairs().map(|(a, b)| b - a).collect()
    }

    /// Maximal runs of equal segment id, as index ranges.
    pub fn segment_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::new();
        let mut start = 0;
        for i in 1..=self.len() {
            if i == self.len() || self.segment_ids[i] != self.segment_ids[i - 1] {
                if i > start {
                    out.push(start..i);
                }
                start = i;
            }
        }
        out
    }

    pub(crate) fn push(&mut self, interval: f64, onset: f64, segment: u32) {
        self.intervals.push(interval);
        self.onset_times.push(onset);
        self.segment_ids.push(segment);
    }

    pub(crate) fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            intervals: self.intervals[range.clone()].to_vec(),
            onset_times: self.onset_times[range.clone()].to_vec(),
            segment_ids: self.segment_ids[range].to_vec(),
        }
    }
}

pub fn detect_r_peaks(record: &EcgRecord) -> Result<RPeakSeries> {
    detect_r_peaks_with(record, &DetectorOptions::default())
}

pub fn detect_r_peaks_with(record: &EcgRecord, opts: &DetectorOptions) -> Result<RPeakSeries> {
    let fs = record.fs();
    if record.duration() < opts.min_duration_s {
        return Err(Error::data(format!(
            "record lasts {:.2} s, at least {} s required",
            record.duration(),
            opts.min_duration_s
        )));
    }
    let x = record.samples();
    let n = x.len();
    let env = envelope(x, ms_to_samples(opts.averaging_ms, fs).max(1));
    if env.iter().all(|&v| v == 0.0) {
        return Err(Error::NoBeats);
    }

    let refractory = ms_to_samples(opts.refractory_ms, fs);
    let mut det = Detector::new(opts, refractory);
    det.seed_levels(&env, fs);
    let peaks = local_maxima(&env);
    for &p in &peaks {
        det.search_back(&env, p);
        det.classify(&env, p);
    }
    det.search_back(&env, n);

    let half = ms_to_samples(opts.refine_ms, fs);
    let mut refined: Vec<usize> = det
        .qrs
        .iter()
        .map(|&i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            (lo..=hi)
                .max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()).then(b.cmp(&a)))
                .unwrap_or(i)
        })
        .collect();
    refined.sort_unstable();

    let mut kept: Vec<usize> = Vec::with_capacity(refined.len());
    for i in refined {
        match kept.last() {
            Some(&last) if i == last => {}
            Some(&last) if i - last < refractory.max(1) => {
                if x[i].abs() > x[last].abs() {
                    *kept.last_mut().unwrap() = i;
                }
            }
            _ => kept.push(i),
        }
    }
    if kept.is_empty() {
        return Err(Error::NoBeats);
    }
    RPeakSeries::from_indices(kept, fs)
}

struct Detector {
    coefficient: f64,
    searchback_factor: f64,
    refractory: usize,
    qrs: Vec<usize>,
    qrs_levels: VecDeque<f64>,
    noise_levels: VecDeque<f64>,
    rr: VecDeque<usize>,
    /// Sub-threshold peaks since the last detection, for search-back.
    candidates: Vec<usize>,
}

const HISTORY: usize = 8;

impl Detector {
    fn new(opts: &DetectorOptions, refractory: usize) -> Self {
        Self {
            coefficient: opts.threshold_coefficient,
            searchback_factor: opts.searchback_factor,
            refractory,
            qrs: Vec::new(),
            qrs_levels: VecDeque::with_capacity(HISTORY + 1),
            noise_levels: VecDeque::with_capacity(HISTORY + 1),
            rr: VecDeque::with_capacity(HISTORY + 1),
            candidates: Vec::new(),
        }
    }

    /// Initial QRS level: per-second envelope maxima over the first 8 s.
    fn seed_levels(&mut self, env: &[f64], fs: f64) {
        let second = fs.round().max(1.0) as usize;
        for chunk in env.chunks(second).take(HISTORY) {
            if chunk.len() == second {
                push_bounded(&mut self.qrs_levels, chunk.iter().copied().fold(0.0, f64::max));
            }
        }
        if self.qrs_levels.is_empty() {
            push_bounded(&mut self.qrs_levels, env.iter().copied().fold(0.0, f64::max));
        }
    }

    fn threshold(&self) -> f64 {
        let qrs = mean(&self.qrs_levels);
        let noise = mean(&self.noise_levels);
        noise + self.coefficient * (qrs - noise)
    }

    fn accept(&mut self, env: &[f64], p: usize) {
        if let Some(&last) = self.qrs.last() {
            push_bounded(&mut self.rr, p - last);
        }
        self.qrs.push(p);
        push_bounded(&mut self.qrs_levels, env[p]);
        self.candidates.clear();
    }

    fn classify(&mut self, env: &[f64], p: usize) {
        if let Some(&last) = self.qrs.last() {
            if p - last < self.refractory {
                // a larger envelope peak inside the refractory window is the same beat
                if env[p] > env[last] {
                    *self.qrs.last_mut().unwrap() = p;
                    *self.qrs_levels.back_mut().unwrap() = env[p];
                    if let (Some(rr), Some(&prev)) =
                        (self.rr.back_mut(), self.qrs.iter().rev().nth(1))
                    {
                        *rr = p - prev;
                    }
                }
                return;
            }
        }
        if env[p] > self.threshold() {
            self.accept(env, p);
        } else {
            push_bounded(&mut self.noise_levels, env[p]);
            self.candidates.push(p);
        }
    }

    fn search_back(&mut self, env: &[f64], now: usize) {
        loop {
            let Some(&last) = self.qrs.last() else { return };
            if self.rr.is_empty() {
                return;
            }
            let rr_mean = self.rr.iter().sum::<usize>() as f64 / self.rr.len() as f64;
            if ((now - last) as f64) <= self.searchback_factor * rr_mean {
                return;
            }
            let half = 0.5 * self.threshold();
            let best = self
                .candidates
                .iter()
                .copied()
                .filter(|&c| c > last + self.refractory && c < now && env[c] > half)
                .max_by(|&a, &b| env[a].total_cmp(&env[b]));
            match best {
                Some(c) => {
                    let later: Vec<usize> =
                        self.candidates.iter().copied().filter(|&k| k > c).collect();
                    self.accept(env, c);
                    self.candidates = later;
                }
                None => return,
            }
        }
    }
}

fn push_bounded<T>(buf: &mut VecDeque<T>, v: T) {
    if buf.len() == HISTORY {
        buf.pop_front();
    }
    buf.push_back(v);
}

fn mean(buf: &VecDeque<f64>) -> f64 {
    if buf.is_empty() {
        0.0
    } else {
        buf.iter().sum::<f64>() / buf.len() as f64
    }
}

fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round() as usize
}

/// Centred moving average of the absolute central derivative.
fn envelope(x: &[f64], window: usize) -> Vec<f64> {
    let n = x.len();
    let mut d = vec![0.0; n];
    for i in 1..n.saturating_sub(1) {
        d[i] = (x[i + 1] - x[i - 1]).abs();
    }
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + d[i];
    }
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn local_maxima(env: &[f64]) -> Vec<usize> {
    (1..env.len().saturating_sub(1))
        .filter(|&i| env[i] > env[i - 1] && env[i] >= env[i + 1])
        .collect()
}

/// Inter-beat intervals from consecutive R peaks, as a single segment.
pub fn compute_rri(peaks: &RPeakSeries) -> Result<BeatToBeatSeries> {
    if peaks.len() < 2 {
        return Err(Error::data("at least two R peaks are needed for RR intervals"));
    }
    let t = peaks.times();
    let intervals = t.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
    let onsets = t[..t.len() - 1].to_vec();
    BeatToBeatSeries::new(intervals, onsets, vec![0; t.len() - 1])
}

/// Drop intervals deviating from the running median of the last five kept
/// intervals by more than `max_jump_ratio` (either direction), starting a new
/// segment at every removal.
pub fn ectopic_filter(bb: &BeatToBeatSeries, max_jump_ratio: f64) -> BeatToBeatSeries {
    let mut out = BeatToBeatSeries::default();
    if bb.is_empty() {
        return out;
    }
    let initial = median(&bb.intervals[..bb.len().min(5)]);
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(5);
    let mut segment = 0u32;
    let mut broken = false;
    let mut last_source: Option<u32> = None;
    for i in 0..bb.len() {
        let v = bb.intervals[i];
        let reference = if recent.is_empty() {
            initial
        } else {
            median(recent.make_contiguous())
        };
        let ratio = (v / reference).max(reference / v);
        if ratio > max_jump_ratio {
            broken = true;
            continue;
        }
        if !out.is_empty() && (broken || last_source != Some(bb.segment_ids[i])) {
            segment += 1;
        }
        broken = false;
        last_source = Some(bb.segment_ids[i]);
        out.push(v, bb.onset_times[i], segment);
        if recent.len() == 5 {
            recent.pop_front();
        }
        recent.push_back(v);
    }
    out
}

pub(crate) fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}
