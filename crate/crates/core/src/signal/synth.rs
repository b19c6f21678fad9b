//! Synthetic ECG built from Gaussian P, Q, R, S and T bumps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::EcgRecord;
use crate::error::{Error, Result};

/// One Gaussian wave: peak amplitude (mV), standard deviation (ms) and
/// centre offset from the R peak (ms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveShape {
    pub amplitude: f64,
    pub width_ms: f64,
    pub offset_ms: f64,
}

impl WaveShape {
    pub const fn new(amplitude: f64, width_ms: f64, offset_ms: f64) -> Self {
        Self {
            amplitude,
            width_ms,
            offset_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEcgSpec {
    /// RR intervals in ms, reused cyclically until `duration_s` is filled.
    pub rr_ms: Vec<f64>,
    pub duration_s: f64,
    pub p: WaveShape,
    pub q: WaveShape,
    pub r: WaveShape,
    pub s: WaveShape,
    pub t: WaveShape,
    pub noise_std: f64,
    pub wander_amplitude: f64,
    pub wander_freq: f64,
    pub fs: f64,
    pub seed: u64,
}

impl Default for SynthEcgSpec {
    fn default() -> Self {
        Self {
            rr_ms: vec![800.0],
            duration_s: 30.0,
            p: WaveShape::new(0.1, 20.0, -150.0),
            q: WaveShape::new(-0.1, 8.0, -35.0),
            r: WaveShape::new(1.0, 8.0, 0.0),
            s: WaveShape::new(-0.25, 8.0, 35.0),
            t: WaveShape::new(0.3, 40.0, 250.0),
            noise_std: 0.0,
            wander_amplitude: 0.0,
            wander_freq: 0.2,
            fs: 200.0,
            seed: 0,
        }
    }
}

impl SynthEcgSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rr_ms.is_empty() {
            return Err(Error::config("rr series is empty"));
        }
        if let Some(rr) = self.rr_ms.iter().find(|rr| !(250.0..=3000.0).contains(*rr)) {
            return Err(Error::config(format!("rr interval {rr} ms outside [250, 3000]")));
        }
        if !(self.fs >= 100.0) {
            return Err(Error::config(format!("fs {} below 100 Hz", self.fs)));
        }
        if !(self.duration_s > 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::config("duration must be positive and noise non-negative"));
        }
        if [self.p, self.q, self.r, self.s, self.t]
            .iter()
            .any(|w| !(w.width_ms > 0.0))
        {
            return Err(Error::config("wave widths must be positive"));
        }
        Ok(())
    }

    fn waves(&self) -> [WaveShape; 5] {
        [self.p, self.q, self.r, self.s, self.t]
    }
}

#[derive(Debug, Clone)]
pub struct SynthEcg {
    pub record: EcgRecord,
    /// Exact sample index of every R apex.
    pub r_indices: Vec<usize>,
}

/// Render a synthetic ECG. Output is a deterministic function of `spec`.
pub fn synth_ecg(spec: &SynthEcgSpec) -> Result<SynthEcg> {
    spec.validate()?;
    let fs = spec.fs;
    let n = (spec.duration_s * fs).round() as usize;
    let mut x = vec![0.0; n];

    let mut r_indices = Vec::new();
    let mut t = 0.0;
    for rr in spec.rr_ms.iter().cycle() {
        t += rr / 1000.0;
        let idx = (t * fs).round() as usize;
        if idx >= n {
            break;
        }
        r_indices.push(idx);
    }

    for &idx in &r_indices {
        for w in spec.waves() {
            let centre = idx as f64 + w.offset_ms * fs / 1000.0;
            let sd = w.width_ms * fs / 1000.0;
            let lo = (centre - 5.0 * sd).floor().max(0.0) as usize;
            let hi = ((centre + 5.0 * sd).ceil().max(0.0) as usize).min(n.saturating_sub(1));
            for (i, v) in x.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let z = (i as f64 - centre) / sd;
                *v += w.amplitude * (-0.5 * z * z).exp();
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if spec.wander_amplitude != 0.0 {
        let phase = rand::Rng::random::<f64>(&mut rng) * std::f64::consts::TAU;
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *v += spec.wander_amplitude
                * (std::f64::consts::TAU * spec.wander_freq * t + phase).sin();
        }
    }
    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std).expect("validated noise std");
        for v in x.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    let record = EcgRecord::new(x, fs, "I")?;
    Ok(SynthEcg { record, r_indices })
}

/// Noise standard deviation giving the requested SNR (dB) against the
/// variance of `clean`.
pub fn noise_std_for_snr(clean: &[f64], snr_db: f64) -> f64 {
    let n = clean.len() as f64;
    let mean = clean.iter().sum::<f64>() / n;
    let power = clean.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (power / 10f64.powf(snr_db / 10.0)).sqrt()
}
