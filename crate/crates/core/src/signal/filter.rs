//! Butterworth filters realised as cascaded second-order sections.
//!
//! The band-pass is a high-pass at `low_cut` cascaded with a low-pass at
//! `high_cut`, each of order `order`, designed by the prewarped bilinear
//! transform. Zero-phase filtering runs the cascade forward and backward with
//! odd-reflection padding; each pass starts in the steady state of the mean
//! of its first padding window, so slow high-pass transients stay small.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::EcgRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSpec {
    pub low_cut: f64,
    pub high_cut: f64,
    pub order: usize,
    pub zero_phase: bool,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            low_cut: 0.05,
            high_cut: 45.0,
            order: 4,
            zero_phase: true,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: f64) -> Result<()> {
        if self.order == 0 {
            return Err(Error::config("filter order must be positive"));
        }
        if !(self.low_cut > 0.0 && self.low_cut < self.high_cut && self.high_cut < fs / 2.0) {
            return Err(Error::config(format!(
                "cutoffs must satisfy 0 < {} < {} < fs/2 = {}",
                self.low_cut,
                self.high_cut,
                fs / 2.0
            )));
        }
        Ok(())
    }

    pub fn design(&self, fs: f64) -> Result<SosFilter> {
        self.validate(fs)?;
        let mut sections = butterworth(self.order, self.low_cut, fs, Kind::HighPass);
        sections.extend(butterworth(self.order, self.high_cut, fs, Kind::LowPass));
        Ok(SosFilter { sections })
    }
}

/// Transposed direct-form II biquad with `a0 == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// State that makes the section output constant for a constant unit input.
    fn unit_steady_state(&self) -> [f64; 2] {
        let y = self.dc_gain();
        let z2 = self.b[2] - self.a[1] * y;
        let z1 = self.b[1] - self.a[0] * y + z2;
        [z1, z2]
    }

    fn run(&self, x: &mut [f64], mut z: [f64; 2]) {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }

    /// Complex response at `f` Hz as (re, im).
    fn response(&self, f: f64, fs: f64) -> (f64, f64) {
        let w = 2.0 * PI * f / fs;
        let (c1, s1) = (w.cos(), -w.sin());
        let (c2, s2) = ((2.0 * w).cos(), -(2.0 * w).sin());
        let num = (
            self.b[0] + self.b[1] * c1 + self.b[2] * c2,
            self.b[1] * s1 + self.b[2] * s2,
        );
        let den = (1.0 + self.a[0] * c1 + self.a[1] * c2, self.a[0] * s1 + self.a[1] * s2);
        let d = den.0 * den.0 + den.1 * den.1;
        (
            (num.0 * den.0 + num.1 * den.1) / d,
            (num.1 * den.0 - num.0 * den.1) / d,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    LowPass,
    HighPass,
}

fn butterworth(order: usize, cutoff: f64, fs: f64, kind: Kind) -> Vec<Biquad> {
    let k = (PI * cutoff / fs).tan();
    let mut out = Vec::with_capacity(order.div_ceil(2));
    for i in 0..order / 2 {
        let theta = PI * (2 * i + 1) as f64 / (2 * order) as f64;
        let inv_q = 2.0 * theta.sin();
        let norm = 1.0 / (1.0 + k * inv_q + k * k);
        let a = [2.0 * (k * k - 1.0) * norm, (1.0 - k * inv_q + k * k) * norm];
        let b = match kind {
            Kind::LowPass => {
                let b0 = k * k * norm;
                [b0, 2.0 * b0, b0]
            }
            Kind::HighPass => [norm, -2.0 * norm, norm],
        };
        out.push(Biquad { b, a });
    }
    if order % 2 == 1 {
        let norm = 1.0 / (1.0 + k);
        let a = [(k - 1.0) * norm, 0.0];
        let b = match kind {
            Kind::LowPass => [k * norm, k * norm, 0.0],
            Kind::HighPass => [norm, -norm, 0.0],
        };
        out.push(Biquad { b, a });
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
}

impl SosFilter {
    pub fn lowpass(order: usize, cutoff: f64, fs: f64) -> Result<Self> {
        if order == 0 || !(cutoff > 0.0 && cutoff < fs / 2.0) {
            return Err(Error::config(format!(
                "low-pass cutoff {cutoff} invalid for fs {fs}"
            )));
        }
        Ok(Self {
            sections: butterworth(order, cutoff, fs, Kind::LowPass),
        })
    }

    /// Magnitude of the single-pass frequency response.
    pub fn magnitude(&self, f: f64, fs: f64) -> f64 {
        let (mut re, mut im) = (1.0, 0.0);
        for s in &self.sections {
            let (r, i) = s.response(f, fs);
            (re, im) = (re * r - im * i, re * i + im * r);
        }
        re.hypot(im)
    }

    /// Causal filtering, each section starting in steady state for `x[0]`.
    pub fn filter(&self, x: &mut [f64]) {
        let Some(&x0) = x.first() else { return };
        self.filter_from_level(x, x0);
    }

    /// Filtering as if the input had been held at `level` before `x[0]`.
    pub fn filter_from_level(&self, x: &mut [f64], mut level: f64) {
        for s in &self.sections {
            let [z1, z2] = s.unit_steady_state();
            s.run(x, [z1 * level, z2 * level]);
            level *= s.dc_gain();
        }
    }

    /// Forward-backward filtering with `pad` samples of odd reflection.
    pub fn filtfilt(&self, x: &[f64], pad: usize) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = pad.min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));
        let head = pad.max(1);
        let level = |v: &[f64]| v[..head].iter().sum::<f64>() / head as f64;
        let start = level(&ext);
        self.filter_from_level(&mut ext, start);
        ext.reverse();
        let start = level(&ext);
        self.filter_from_level(&mut ext, start);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }
}

/// Butterworth band-pass of an ECG record.
pub fn bandpass_filter(record: &EcgRecord, spec: &FilterSpec) -> Result<EcgRecord> {
    let sos = spec.design(record.fs())?;
    let samples = apply(&sos, record.samples(), record.fs(), spec.zero_phase);
    record.with_samples(samples, record.fs())
}

/// Butterworth low-pass of a raw sample slice.
pub fn lowpass_filter(
    x: &[f64],
    fs: f64,
    cutoff: f64,
    order: usize,
    zero_phase: bool,
) -> Result<Vec<f64>> {
    let sos = SosFilter::lowpass(order, cutoff, fs)?;
    Ok(apply(&sos, x, fs, zero_phase))
}

fn apply(sos: &SosFilter, x: &[f64], fs: f64, zero_phase: bool) -> Vec<f64> {
    if zero_phase {
        // one second of reflection
        sos.filtfilt(x, fs.round() as usize)
    } else {
        let mut y = x.to_vec();
        sos.filter(&mut y);
        y
    }
}
