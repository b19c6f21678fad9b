//! ECG records and the preprocessing applied before beat detection.

mod filter;
mod resample;
mod synth;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use filter::{bandpass_filter, lowpass_filter, Biquad, FilterSpec, SosFilter};
pub use resample::resample;
pub use synth::{noise_std_for_snr, synth_ecg, SynthEcg, SynthEcgSpec, WaveShape};

/// A uniformly sampled single-lead ECG in millivolts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgRecord {
    samples: Vec<f64>,
    fs: f64,
    lead: String,
    start_time: f64,
    subject_id: String,
}

impl EcgRecord {
    pub fn new(samples: Vec<f64>, fs: f64, lead: impl Into<String>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::config(format!("sampling rate must be positive, got {fs}")));
        }
        if samples.is_empty() {
            return Err(Error::data("ECG record has no samples"));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::data(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            samples,
            fs,
            lead: lead.into(),
            start_time: 0.0,
            subject_id: String::new(),
        })
    }

    pub fn with_subject(mut self, subject_id: impl Into<String>) -> Self {
        self.subject_id = subject_id.into();
        self
    }

    pub fn with_start_time(mut self, seconds: f64) -> Self {
        self.start_time = seconds;
        self
    }

    /// New record carrying this record's metadata but different samples.
    pub fn with_samples(&self, samples: Vec<f64>, fs: f64) -> Result<Self> {
        Ok(Self::new(samples, fs, self.lead.clone())?
            .with_subject(self.subject_id.clone())
            .with_start_time(self.start_time))
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn lead(&self) -> &str {
        &self.lead
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.fs
    }
}

/// Linear map from recorded channels to derived leads (e.g. EASI to 12-lead).
///
/// Row `k` produces lead `outputs[k]` as a weighted sum of the input channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadCoefficients {
    outputs: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl LeadCoefficients {
    pub fn new(outputs: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if outputs.len() != rows.len() {
            return Err(Error::config(format!(
                "{} output labels for {} coefficient rows",
                outputs.len(),
                rows.len()
            )));
        }
        let width = rows.first().map_or(0, Vec::len);
        if width == 0 {
            return Err(Error::config("coefficient matrix is empty"));
        }
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::config("coefficient matrix rows differ in length"));
        }
        if rows.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::config("coefficient matrix has non-finite entries"));
        }
        Ok(Self { outputs, rows })
    }

    pub fn n_inputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn outputs(&self) -> &[String] {
        &self.outputs
    }

    pub fn row(&self, target: &str) -> Option<&[f64]> {
        self.outputs
            .iter()
            .position(|o| o == target)
            .map(|k| self.rows[k].as_slice())
    }
}

/// Derive lead `target` as a sample-wise linear combination of `channels`.
pub fn derive_lead(
    channels: &[EcgRecord],
    coeffs: &LeadCoefficients,
    target: &str,
) -> Result<EcgRecord> {
    if channels.len() != coeffs.n_inputs() {
        return Err(Error::config(format!(
            "{} channels supplied but coefficients expect {}",
            channels.len(),
            coeffs.n_inputs()
        )));
    }
    let row = coeffs
        .row(target)
        .ok_or_else(|| Error::config(format!("no coefficients for lead {target}")))?;
    let first = &channels[0];
    if channels
        .iter()
        .any(|c| c.len() != first.len() || c.fs() != first.fs())
    {
        return Err(Error::config("channels differ in length or sampling rate"));
    }
    let samples = (0..first.len())
        .map(|i| {
            channels
                .iter()
                .zip(row)
                .map(|(c, w)| w * c.samples[i])
                .sum()
        })
        .collect();
    Ok(EcgRecord::new(samples, first.fs(), target)?
        .with_subject(first.subject_id.clone())
        .with_start_time(first.start_time))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(v: Vec<f64>) -> EcgRecord {
        EcgRecord::new(v, 100.0, "x").unwrap()
    }

    #[test]
    fn record_validation() {
        assert!(EcgRecord::new(vec![], 100.0, "I").is_err());
        assert!(EcgRecord::new(vec![1.0], 0.0, "I").is_err());
        assert!(EcgRecord::new(vec![1.0, f64::NAN], 100.0, "I").is_err());
        let r = EcgRecord::new(vec![0.0; 250], 125.0, "I").unwrap();
        assert_eq!(r.duration(), 2.0);
    }

    #[test]
    fn identity_derivation() {
        let a = rec(vec![0.1, -0.2, 0.3]);
        let c = LeadCoefficients::new(vec!["I".into()], vec![vec![1.0]]).unwrap();
        let out = derive_lead(std::slice::from_ref(&a), &c, "I").unwrap();
        assert_eq!(out.samples(), a.samples());
        assert_eq!(out.lead(), "I");
    }

    #[test]
    fn zero_coefficients_give_zero_lead() {
        let chans = vec![rec(vec![1.0, 2.0]), rec(vec![3.0, 4.0])];
        let c = LeadCoefficients::new(vec!["I".into()], vec![vec![0.0, 0.0]]).unwrap();
        let out = derive_lead(&chans, &c, "I").unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_weights_average_two_channels() {
        let a = vec![1.0, -2.0, 0.5, 4.0];
        let b = vec![3.0, 2.0, -0.5, 0.0];
        let c = vec![9.0, 9.0, 9.0, 9.0];
        let chans = vec![rec(a.clone()), rec(b.clone()), rec(c)];
        let coeffs = LeadCoefficients::new(vec!["I".into()], vec![vec![0.5, 0.5, 0.0]]).unwrap();
        let out = derive_lead(&chans, &coeffs, "I").unwrap();
        for i in 0..a.len() {
            assert!((out.samples()[i] - (a[i] + b[i]) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn shape_mismatch_is_config_error() {
        let chans = vec![rec(vec![1.0, 2.0])];
        let coeffs = LeadCoefficients::new(vec!["I".into()], vec![vec![0.5, 0.5]]).unwrap();
        assert!(matches!(derive_lead(&chans, &coeffs, "I"), Err(Error::Config(_))));
        let uneven = vec![rec(vec![1.0, 2.0]), rec(vec![1.0])];
        assert!(matches!(derive_lead(&uneven, &coeffs, "I"), Err(Error::Config(_))));
        assert!(LeadCoefficients::new(vec!["I".into()], vec![vec![f64::NAN]]).is_err());
    }
}
