use super::{lowpass_filter, EcgRecord};
use crate::error::{Error, Result};

/// Resample by linear interpolation.
///
/// When downsampling, a zero-phase 4th-order low-pass at 45% of the target
/// rate is applied first. Ratios of 8 or more in either direction are refused.
pub fn resample(record: &EcgRecord, fs_target: f64) -> Result<EcgRecord> {
    let fs = record.fs();
    if !(fs_target > 0.0 && fs_target.is_finite()) {
        return Err(Error::config(format!("target rate must be positive, got {fs_target}")));
    }
    if fs_target >= fs * 8.0 || fs_target <= fs / 8.0 {
        return Err(Error::config(format!(
            "unsupported resampling ratio {fs} -> {fs_target} Hz"
        )));
    }
    if fs_target == fs {
        return Ok(record.clone());
    }

    let guarded;
    let x = if fs_target < fs {
        guarded = lowpass_filter(record.samples(), fs, 0.45 * fs_target, 4, true)?;
        guarded.as_slice()
    } else {
        record.samples()
    };

    let n = x.len();
    let n_out = ((n as f64 * fs_target / fs).round() as usize).max(1);
    let step = fs / fs_target;
    let out = (0..n_out)
        .map(|k| {
            let pos = k as f64 * step;
            let i = pos.floor() as usize;
            if i + 1 >= n {
                x[n - 1]
            } else {
                let frac = pos - i as f64;
                x[i] + frac * (x[i + 1] - x[i])
            }
        })
        .collect();
    record.with_samples(out, fs_target)
}
