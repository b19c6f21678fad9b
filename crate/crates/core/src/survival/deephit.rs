//! Focal likelihood and pairwise rank loss over discrete-time distributions.
//!
//! Batches are row-major: row `i` holds the probabilities (or scores) of
//! sample `i` over all grid outputs. Gradients are with respect to the
//! scores that the softmax turns into probabilities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub rank_sigma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { alpha: 0.5, gamma: 2.0, rank_sigma: 0.1 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) || !(self.gamma >= 0.0) || !(self.rank_sigma > 0.0) {
            return Err(Error::config("need alpha in [0, 1], gamma >= 0 and rank sigma > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// d loss / d score, row-major like the input.
    pub grad: Vec<f64>,
    /// Probabilities that hit the 1e-12 floor.
    pub clamped: usize,
}

const P_FLOOR: f64 = 1e-12;

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// Chain a probability gradient through the softmax, in place.
fn softmax_backward(p: &[f64], g: &mut [f64]) {
    let dot: f64 = p.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
    for (gk, pk) in g.iter_mut().zip(p) {
        *gk = pk * (*gk - dot);
    }
}

/// -(1 - p)^gamma ln p and its derivative in p.
fn focal(p: f64, gamma: f64) -> (f64, f64) {
    let lp = p.ln();
    if gamma == 0.0 {
        return (-lp, -1.0 / p);
    }
    let q = 1.0 - p;
    let w = q.powf(gamma);
    let dw = if q > 0.0 { -gamma * q.powf(gamma - 1.0) } else { 0.0 };
    (-w * lp, -(dw * lp + w / p))
}

/// Outputs making up the observed outcome: the event bin for events, the
/// bins after the one holding y for censored samples. Censoring past the
/// horizon leaves only the overflow bucket.
fn outcome_range(width: usize, bin: usize, event: bool) -> std::ops::Range<usize> {
    if event || bin + 1 == width { bin..bin + 1 } else { bin + 1..width }
}

fn outcome_prob(row: &[f64], bin: usize, event: bool) -> f64 {
    row[outcome_range(row.len(), bin, event)].iter().sum()
}

fn check(probs: &[f64], bins: &[usize], events: &[bool]) -> usize {
    assert_eq!(bins.len(), events.len(), "bins and events differ in length");
    assert!(!bins.is_empty(), "empty batch");
    let width = probs.len() / bins.len();
    assert_eq!(width * bins.len(), probs.len(), "ragged probability batch");
    assert!(bins.iter().all(|&b| b < width), "bin beyond output width");
    width
}

/// Mean focal negative log-likelihood over the batch.
pub fn deephit_focal_nll(probs: &[f64], bins: &[usize], events: &[bool], gamma: f64) -> LossOutput {
    let width = check(probs, bins, events);
    let n = bins.len() as f64;
    let mut grad = vec![0.0; probs.len()];
    let mut loss = 0.0;
    let mut clamped = 0;
    for (i, (&bin, &event)) in bins.iter().zip(events).enumerate() {
        let row = &probs[i * width..(i + 1) * width];
        let g = &mut grad[i * width..(i + 1) * width];
        let raw = outcome_prob(row, bin, event);
        let (l, dl) = if raw < P_FLOOR {
            clamped += 1;
            (focal(P_FLOOR, gamma).0, 0.0)
        } else {
            focal(raw, gamma)
        };
        loss += l;
        for gk in &mut g[outcome_range(width, bin, event)] {
            *gk = dl / n;
        }
        softmax_backward(row, g);
    }
    LossOutput { loss: loss / n, grad, clamped }
}

/// Plain mean log-likelihood term, without focal weighting.
pub fn deephit_nll(probs: &[f64], bins: &[usize], events: &[bool]) -> f64 {
    let width = check(probs, bins, events);
    let total: f64 = bins
        .iter()
        .zip(events)
        .enumerate()
        .map(|(i, (&bin, &event))| -outcome_prob(&probs[i * width..(i + 1) * width], bin, event).max(P_FLOOR).ln())
        .sum();
    total / bins.len() as f64
}

/// Mean of exp(-(F_i(y_i) - F_j(y_i)) / sigma) over ordered pairs where `i`
/// had the event strictly before `j`'s time. F is the cumulative
/// probability through the bin holding y_i. Zero when no pair qualifies.
pub fn rank_loss(probs: &[f64], bins: &[usize], times: &[f64], events: &[bool], sigma: f64) -> LossOutput {
    let width = check(probs, bins, events);
    assert_eq!(times.len(), bins.len(), "times and bins differ in length");
    let n = bins.len();
    let cum = |j: usize, k: usize| -> f64 { probs[j * width..j * width + k + 1].iter().sum() };
    let mut dcum = vec![0.0; n * width];
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in (0..n).filter(|&i| events[i]) {
        let k = bins[i];
        let fi = cum(i, k);
        for j in 0..n {
            if j == i || !(times[i] < times[j]) {
                continue;
            }
            let e = (-(fi - cum(j, k)) / sigma).exp();
            total += e;
            pairs += 1;
            // accumulate d/dF at bin k for both rows
            dcum[i * width + k] -= e / sigma;
            dcum[j * width + k] += e / sigma;
        }
    }
    let mut grad = vec![0.0; n * width];
    if pairs == 0 {
        return LossOutput { loss: 0.0, grad, clamped: 0 };
    }
    let scale = 1.0 / pairs as f64;
    for r in 0..n {
        let d = &dcum[r * width..(r + 1) * width];
        let g = &mut grad[r * width..(r + 1) * width];
        // F(k) sums bins 0..=k, so bin m collects every d/dF(k) with k >= m
        let mut acc = 0.0;
        for m in (0..width).rev() {
            acc += d[m];
            g[m] = acc * scale;
        }
        softmax_backward(&probs[r * width..(r + 1) * width], g);
    }
    LossOutput { loss: total * scale, grad, clamped: 0 }
}
