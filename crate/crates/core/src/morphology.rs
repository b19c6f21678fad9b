//! Cardiac-cycle templates, PQRST delineation and short-strip rhythm features.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hrv::poincare_sd;
use crate::rpeak::{median, BeatToBeatSeries, RPeakSeries};
use crate::signal::EcgRecord;

/// One R-centred cycle cut from a record.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub samples: Vec<f64>,
    /// Index of the R apex within `samples`.
    pub r_offset: usize,
    pub fs: f64,
}

impl Cycle {
    pub fn half_width_s(&self) -> f64 {
        self.r_offset as f64 / self.fs
    }
}

/// Cut a cycle around every interior peak. The half-width is the distance
/// to the nearer neighbouring peak.
pub fn extract_cycles(record: &EcgRecord, peaks: &RPeakSeries) -> Result<Vec<Cycle>> {
    let idx = peaks.indices();
    if idx.len() < 3 {
        return Err(Error::data(format!("{} peaks, need at least 3", idx.len())));
    }
    let x = record.samples();
    let mut out = Vec::with_capacity(idx.len() - 2);
    for w in idx.windows(3) {
        let (prev, r, next) = (w[0], w[1], w[2]);
        let half = (r - prev).min(next - r);
        let lo = r - half;
        let hi = (r + half).min(x.len() - 1);
        out.push(Cycle {
            samples: x[lo..=hi].to_vec(),
            r_offset: r - lo,
            fs: record.fs(),
        });
    }
    Ok(out)
}

/// Median beat with R-aligned timing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTemplate {
    pub samples: Vec<f64>,
    pub r_index: usize,
    pub fs: f64,
    pub baseline: f64,
    pub coverage: Vec<usize>,
}

impl CycleTemplate {
    pub fn as_cycle(&self) -> Cycle {
        Cycle {
            samples: self.samples.clone(),
            r_offset: self.r_index,
            fs: self.fs,
        }
    }

    /// Offset of sample `i` from R, in ms.
    pub fn offset_ms(&self, i: usize) -> f64 {
        (i as f64 - self.r_index as f64) * 1000.0 / self.fs
    }

    /// Write `position_ms,mv` rows, positions relative to R.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["position_ms", "mv"])?;
        for (i, v) in self.samples.iter().enumerate() {
            wtr.write_record([format!("{}", self.offset_ms(i)), format!("{v}")])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Align cycles on R and take the per-position median of the cycles present.
/// End positions covered by half of the cycles or fewer are trimmed.
pub fn build_template(cycles: &[Cycle]) -> Result<CycleTemplate> {
    if cycles.len() < 2 {
        return Err(Error::data(format!("{} cycles, need at least 2", cycles.len())));
    }
    let fs = cycles[0].fs;
    if cycles.iter().any(|c| c.fs != fs || c.r_offset >= c.samples.len()) {
        return Err(Error::data("cycles differ in sampling rate or have R outside bounds"));
    }
    let left = cycles.iter().map(|c| c.r_offset).max().unwrap_or(0);
    let right = cycles
        .iter()
        .map(|c| c.samples.len() - c.r_offset - 1)
        .max()
        .unwrap_or(0);

    let n = cycles.len();
    let mut samples = Vec::new();
    let mut coverage = Vec::new();
    let mut first = None;
    let mut column = Vec::with_capacity(n);
    for pos in 0..=left + right {
        column.clear();
        for c in cycles {
            let k = pos as isize - left as isize + c.r_offset as isize;
            if k >= 0 && (k as usize) < c.samples.len() {
                column.push(c.samples[k as usize]);
            }
        }
        if 2 * column.len() <= n {
            continue;
        }
        first.get_or_insert(pos);
        samples.push(median(&column));
        coverage.push(column.len());
    }
    let first = first.expect("R position is covered by every cycle");
    let baseline = median(&samples);
    Ok(CycleTemplate {
        samples,
        r_index: left - first,
        fs,
        baseline,
        coverage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavePoint {
    /// Absolute distance from R in ms (for R itself, offset from template start).
    pub timing_ms: f64,
    /// Deviation from the template baseline, mV.
    pub amplitude: f64,
    pub inverted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PqrstFeatures {
    pub p: Option<WavePoint>,
    pub q: Option<WavePoint>,
    pub r: Option<WavePoint>,
    pub s: Option<WavePoint>,
    pub t: Option<WavePoint>,
}

#[derive(Clone, Copy)]
enum Pick {
    Valley,
    Largest,
}

pub fn delineate(template: &CycleTemplate) -> Result<PqrstFeatures> {
    let x = &template.samples;
    let fs = template.fs;
    let r = template.r_index;
    let before = r as f64 * 1000.0 / fs;
    let after = (x.len() - r - 1) as f64 * 1000.0 / fs;
    if before < 250.0 - 1e-9 || after < 250.0 - 1e-9 {
        return Err(Error::data(format!(
            "template spans {before:.0} ms before and {after:.0} ms after R, need 250"
        )));
    }
    let base = template.baseline;
    let scale = x.iter().map(|v| (v - base).abs()).fold(0.0, f64::max);
    let eps = 1e-9 * scale;

    // sample indices whose offset from R (ms) lies in the window
    let window = |lo: f64, lo_incl: bool, hi: f64, hi_incl: bool| {
        (0..x.len()).filter(move |&i| {
            let t = template.offset_ms(i);
            (if lo_incl { t >= lo - 1e-9 } else { t > lo + 1e-9 })
                && (if hi_incl { t <= hi + 1e-9 } else { t < hi - 1e-9 })
        })
    };
    let find = |idx: &mut dyn Iterator<Item = usize>, pick: Pick| -> Option<WavePoint> {
        let best = match pick {
            Pick::Valley => idx.min_by(|&a, &b| x[a].total_cmp(&x[b])),
            Pick::Largest => idx.max_by(|&a, &b| (x[a] - base).abs().total_cmp(&(x[b] - base).abs())),
        }?;
        let dev = x[best] - base;
        let present = match pick {
            Pick::Valley => dev < -eps,
            Pick::Largest => dev.abs() > eps,
        };
        present.then(|| WavePoint {
            timing_ms: template.offset_ms(best).abs(),
            amplitude: dev,
            inverted: dev < 0.0,
        })
    };

    let r_dev = x[r] - base;
    Ok(PqrstFeatures {
        p: find(&mut window(-350.0, true, -50.0, false), Pick::Largest),
        q: find(&mut window(-80.0, true, 0.0, false), Pick::Valley),
        r: (scale > 0.0 && r_dev.abs() > eps).then_some(WavePoint {
            timing_ms: before,
            amplitude: r_dev,
            inverted: r_dev < 0.0,
        }),
        s: find(&mut window(0.0, false, 80.0, true), Pick::Valley),
        t: find(&mut window(120.0, false, 500.0, true), Pick::Largest),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhythmFeatures {
    pub mean_hr: f64,
    pub sdnn: f64,
    pub sd1_sd2: f64,
}

pub fn rhythm_features(bb: &BeatToBeatSeries) -> Result<RhythmFeatures> {
    let rr = bb.intervals();
    if rr.len() < 3 {
        return Err(Error::data(format!("{} intervals, need at least 3", rr.len())));
    }
    let n = rr.len() as f64;
    let mean = rr.iter().sum::<f64>() / n;
    let sdnn = (rr.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let pairs: Vec<_> = bb.consecutive_pairs().collect();
    let sd1_sd2 = match poincare_sd(&pairs) {
        Some((sd1, sd2)) if sd2 > 0.0 => sd1 / sd2,
        _ => 0.0,
    };
    Ok(RhythmFeatures {
        mean_hr: 60000.0 / mean,
        sdnn,
        sd1_sd2,
    })
}
