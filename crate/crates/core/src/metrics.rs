//! Survival and classification metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{risk_within, SurvivalCurve, TimeGrid};

/// Right-continuous step function starting at `initial` before the first knot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepFunction {
    pub initial: f64,
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
}

impl StepFunction {
    pub fn at(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k <= t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }

    /// Limit from the left at `t`.
    pub fn before(&self, t: f64) -> f64 {
        match self.knots.partition_point(|&k| k < t) {
            0 => self.initial,
            k => self.values[k - 1],
        }
    }
}

/// Product-limit estimate of survival, or of the censoring distribution
/// when `censoring` is set.
pub fn km_estimator(y: &[f64], event: &[bool], censoring: bool) -> StepFunction {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let mut s = 1.0;
    let mut knots = Vec::new();
    let mut values = Vec::new();
    let mut at_risk = y.len();
    let mut i = 0;
    while i < order.len() {
        let t = y[order[i]];
        let j = i + order[i..].partition_point(|&k| y[k] == t);
        let d = order[i..j].iter().filter(|&&k| event[k] != censoring).count();
        if d > 0 {
            s *= 1.0 - d as f64 / at_risk as f64;
            knots.push(t);
            values.push(s);
        }
        at_risk -= j - i;
        i = j;
    }
    StepFunction { initial: 1.0, knots, values }
}

/// Concordance of survival curves over pairs with y_i < y_j and an event at
/// y_i: concordant when S_i(y_i) < S_j(y_i), half credit for ties.
pub fn antolini_cindex(curves: &[SurvivalCurve], y: &[f64], event: &[bool]) -> Option<f64> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let (mut num, mut den) = (0.0, 0u64);
    for (p, &i) in order.iter().enumerate() {
        if !event[i] {
            continue;
        }
        let si = curves[i].at(y[i]);
        for &j in &order[p + 1..] {
            if !(y[i] < y[j]) {
                continue;
            }
            let sj = curves[j].at(y[i]);
            den += 1;
            if si < sj {
                num += 1.0;
            } else if si == sj {
                num += 0.5;
            }
        }
    }
    (den > 0).then(|| num / den as f64)
}

/// Brier score at each time with inverse-probability-of-censoring weights.
/// Terms whose weight would divide by zero are dropped.
pub fn brier_scores(curves: &[SurvivalCurve], y: &[f64], event: &[bool], times: &[f64]) -> Vec<f64> {
    let g = km_estimator(y, event, true);
    let n = y.len() as f64;
    let mut dropped = 0usize;
    let out = times
        .iter()
        .map(|&t| {
            let g_t = g.at(t);
            let mut total = 0.0;
            for (i, c) in curves.iter().enumerate() {
                let s = c.at(t);
                if y[i] <= t && event[i] {
                    let w = g.before(y[i]);
                    if w > 0.0 { total += s * s / w } else { dropped += 1 }
                } else if y[i] > t {
                    if g_t > 0.0 { total += (1.0 - s) * (1.0 - s) / g_t } else { dropped += 1 }
                }
            }
            total / n
        })
        .collect();
    if dropped > 0 {
        log::warn!("{dropped} Brier terms dropped for zero censoring weight");
    }
    out
}

/// Trapezoid integral of the Brier score over `times`, divided by the span.
pub fn integrated_brier(curves: &[SurvivalCurve], y: &[f64], event: &[bool], times: &[f64]) -> Result<f64> {
    if times.len() < 2 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::config("integration needs at least two increasing times"));
    }
    let bs = brier_scores(curves, y, event, times);
    let area: f64 = times
        .windows(2)
        .zip(bs.windows(2))
        .map(|(t, b)| 0.5 * (b[0] + b[1]) * (t[1] - t[0]))
        .sum();
    Ok(area / (times[times.len() - 1] - times[0]))
}

/// Cumulative/dynamic AUC per horizon (cases weighted by 1/G(y-)), and the
/// mean over horizons where it is defined.
pub fn cumulative_dynamic_auc(
    curves: &[SurvivalCurve],
    y: &[f64],
    event: &[bool],
    horizons: &[f64],
) -> (Vec<Option<f64>>, Option<f64>) {
    let g = km_estimator(y, event, true);
    let per: Vec<Option<f64>> = horizons
        .iter()
        .map(|&t| {
            let score = |i: usize| 1.0 - curves[i].at(t);
            let mut controls: Vec<f64> = (0..y.len()).filter(|&i| y[i] > t).map(score).collect();
            controls.sort_by(f64::total_cmp);
            let (mut num, mut wsum) = (0.0, 0.0);
            for i in (0..y.len()).filter(|&i| event[i] && y[i] <= t) {
                let w = g.before(y[i]);
                if w <= 0.0 {
                    continue;
                }
                let s = score(i);
                let below = controls.partition_point(|&c| c < s);
                let ties = controls.partition_point(|&c| c <= s) - below;
                num += (below as f64 + 0.5 * ties as f64) / w;
                wsum += 1.0 / w;
            }
            if controls.is_empty() || wsum == 0.0 {
                log::warn!("horizon {t} has no cases or no controls, skipped");
                return None;
            }
            Some(num / (wsum * controls.len() as f64))
        })
        .collect();
    let valid: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    (per, mean)
}

fn midranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let j = i + order[i..].partition_point(|&k| v[k] == v[order[i]]);
        let r = (i + j + 1) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Mann-Whitney AUC with midranks for ties.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return None;
    }
    let r = midranks(scores);
    let rsum: f64 = r.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    Some((rsum - pos * (pos + 1.0) / 2.0) / (pos * neg))
}

/// Sum over score thresholds of (recall gain) x precision.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut ap, mut last_recall) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let j = i + order[i..].partition_point(|&k| scores[k] == scores[order[i]]);
        tp += order[i..j].iter().filter(|&&k| labels[k]).count();
        seen += j - i;
        let recall = tp as f64 / pos as f64;
        ap += (recall - last_recall) * tp as f64 / seen as f64;
        last_recall = recall;
        i = j;
    }
    Some(ap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub threshold: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub gmean: f64,
}

/// Scores at or above `threshold` count as positive calls.
pub fn sens_spec_gmean(scores: &[f64], labels: &[bool], threshold: f64) -> Option<Confusion> {
    let (mut tp, mut fn_, mut tn, mut fp) = (0, 0, 0, 0);
    for (&s, &l) in scores.iter().zip(labels) {
        match (l, s >= threshold) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    if tp + fn_ == 0 || tn + fp == 0 {
        return None;
    }
    let sensitivity = tp as f64 / (tp + fn_) as f64;
    let specificity = tn as f64 / (tn + fp) as f64;
    Some(Confusion { threshold, sensitivity, specificity, gmean: (sensitivity * specificity).sqrt() })
}

/// The observed score that maximises the G-mean (lowest such score on ties).
pub fn best_gmean_threshold(scores: &[f64], labels: &[bool]) -> Option<Confusion> {
    let mut cand = scores.to_vec();
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    cand.into_iter()
        .filter_map(|t| sens_spec_gmean(scores, labels, t))
        .fold(None, |best: Option<Confusion>, c| match best {
            Some(b) if b.gmean >= c.gmean => Some(b),
            _ => Some(c),
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub c_index: Option<f64>,
    pub auc_5y: Option<f64>,
    pub ibs: Option<f64>,
    pub mean_cd_auc: Option<f64>,
    pub cd_auc: Vec<HorizonAuc>,
    pub ap_5y: Option<f64>,
    pub best_threshold: Option<Confusion>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonAuc {
    pub horizon: f64,
    pub auc: Option<f64>,
}

/// Labels for the 5-year classification view: events by 5 years are
/// positive, follow-up past 5 years negative, earlier censoring dropped.
pub fn five_year_labels(y: &[f64], event: &[bool], horizon: f64) -> Vec<Option<bool>> {
    y.iter()
        .zip(event)
        .map(|(&t, &e)| {
            if e && t <= horizon {
                Some(true)
            } else if t > horizon {
                Some(false)
            } else {
                None
            }
        })
        .collect()
}

/// All report metrics for curves on `grid`. Brier integration and c/d AUC
/// use the grid edges below the largest observed time.
pub fn evaluate_curves(curves: &[SurvivalCurve], y: &[f64], event: &[bool], grid: &TimeGrid) -> EvaluationReport {
    let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let times: Vec<f64> = grid.edges().into_iter().filter(|&t| t < y_max).collect();
    let (per, mean_cd_auc) = cumulative_dynamic_auc(curves, y, event, &times);
    let labels = five_year_labels(y, event, 5.0);
    let (mut s5, mut l5) = (Vec::new(), Vec::new());
    for (c, l) in curves.iter().zip(&labels) {
        if let Some(l) = l {
            s5.push(risk_within(c, 5.0));
            l5.push(*l);
        }
    }
    EvaluationReport {
        c_index: antolini_cindex(curves, y, event),
        auc_5y: roc_auc(&s5, &l5),
        ibs: integrated_brier(curves, y, event, &times).ok(),
        mean_cd_auc,
        cd_auc: times.iter().zip(per).map(|(&horizon, auc)| HorizonAuc { horizon, auc }).collect(),
        ap_5y: average_precision(&s5, &l5),
        best_threshold: best_gmean_threshold(&s5, &l5),
    }
}

impl EvaluationReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub const CSV_HEADER: [&'static str; 5] = ["model", "c_index", "auc5", "ibs", "cd_auc"];

    pub fn csv_row(&self, model: &str) -> [String; 5] {
        let f = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [model.to_string(), f(self.c_index), f(self.auc_5y), f(self.ibs), f(self.mean_cd_auc)]
    }

    pub fn write_csv<W: Write>(&self, model: &str, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(Self::CSV_HEADER)?;
        wtr.write_record(self.csv_row(model))?;
        wtr.flush()?;
        Ok(())
    }
}
