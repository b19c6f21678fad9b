//! Log-logistic accelerated failure time model, ln T = tau(x) + sigma * eps,
//! fit by second-order gradient boosting of regression trees.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{DiscreteSurvivalDistribution, Neumaier, SurvivalCurve, SurvivalModel, SurvivalSample, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AftLoss {
    pub loss: f64,
    pub grad: f64,
    pub hess: f64,
}

fn logistic_cdf(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Negative log-likelihood of one observation and its first two
/// derivatives in `tau`. Events use the density of T, censored
/// observations the survival function.
pub fn aft_nll(tau: f64, y: f64, event: bool, sigma: f64) -> Result<AftLoss> {
    if !(y > 0.0) {
        return Err(Error::data(format!("time {y} must be positive")));
    }
    if !(sigma > 0.0) {
        return Err(Error::config(format!("sigma {sigma} must be positive")));
    }
    let z = (y.ln() - tau) / sigma;
    let f_cdf = logistic_cdf(z);
    let e = (-z.abs()).exp();
    let density = e / ((1.0 + e) * (1.0 + e));
    let s2 = sigma * sigma;
    Ok(if event {
        AftLoss {
            loss: z.abs() + 2.0 * e.ln_1p() + sigma.ln() + y.ln(),
            grad: (1.0 - 2.0 * f_cdf) / sigma,
            hess: 2.0 * density / s2,
        }
    } else {
        AftLoss {
            loss: z.max(0.0) + e.ln_1p(),
            grad: -f_cdf / sigma,
            hess: density / s2,
        }
    })
}

/// S(t) = 1 / (1 + (t / e^tau)^(1/sigma)) at each time.
pub fn aft_survival_curve(tau: f64, sigma: f64, times: &[f64]) -> SurvivalCurve {
    let survival = times
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                1.0
            } else {
                // 1 / (1 + e^w) evaluated without overflow
                let w = (t.ln() - tau) / sigma;
                1.0 - logistic_cdf(w)
            }
        })
        .collect();
    SurvivalCurve { times: times.to_vec(), survival }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AftConfig {
    pub sigma: f64,
    pub l1: f64,
    pub l2: f64,
    pub trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_child_weight: f64,
    /// Weight each event class by its inverse frequency.
    pub balance_classes: bool,
}

impl Default for AftConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            l1: 0.0,
            l2: 1.0,
            trees: 200,
            depth: 4,
            learning_rate: 0.1,
            min_child_weight: 1.0,
            balance_classes: true,
        }
    }
}

impl AftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) {
            return Err(Error::config("sigma must be positive"));
        }
        if !(self.l1 >= 0.0 && self.l2 >= 0.0 && self.min_child_weight >= 0.0) {
            return Err(Error::config("l1, l2 and min_child_weight must be non-negative"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config("learning rate must lie in (0, 1]"));
        }
        if self.depth == 0 {
            return Err(Error::config("tree depth must be at least 1"));
        }
        Ok(())
    }
}

/// Node of a regression tree. A node with `feature == None` is a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: Option<usize>,
    pub threshold: f64,
    /// Where missing values go.
    pub default_left: bool,
    pub left: usize,
    pub right: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            let n = &self.nodes[k];
            let Some(f) = n.feature else { return n.value };
            let v = x[f];
            let go_left = if v.is_nan() { n.default_left } else { v < n.threshold };
            k = if go_left { n.left } else { n.right };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedAftModel {
    pub sigma: f64,
    pub base_score: f64,
    pub learning_rate: f64,
    pub n_features: usize,
    pub grid: TimeGrid,
    pub trees: Vec<Tree>,
}

impl BoostedAftModel {
    /// Predicted location of ln T.
    pub fn predict_tau(&self, x: &[f64]) -> f64 {
        let mut s = Neumaier::default();
        s.add(self.base_score);
        for t in &self.trees {
            s.add(self.learning_rate * t.eval(x));
        }
        s.value()
    }

    pub fn survival_at(&self, x: &[f64], times: &[f64]) -> SurvivalCurve {
        aft_survival_curve(self.predict_tau(x), self.sigma, times)
    }
}

impl SurvivalModel for BoostedAftModel {
    fn distribution(&self, x: &[f64]) -> DiscreteSurvivalDistribution {
        let s = self.survival_at(x, &self.grid.times()).survival;
        let mut probs: Vec<f64> = s.windows(2).map(|w| (w[0] - w[1]).max(0.0)).collect();
        probs.push(*s.last().expect("grid has knots"));
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        DiscreteSurvivalDistribution { probs }
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
}

const HESS_FLOOR: f64 = 1e-6;

fn soft_threshold(g: f64, l1: f64) -> f64 {
    g.signum() * (g.abs() - l1).max(0.0)
}

fn canonical_cmp(a: &SurvivalSample, b: &SurvivalSample) -> Ordering {
    a.x.iter()
        .zip(&b.x)
        .map(|(u, v)| u.total_cmp(v))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(a.y.total_cmp(&b.y))
        .then(a.event.cmp(&b.event))
        .then(a.weight.total_cmp(&b.weight))
}

pub fn train_boosted_aft(samples: &[SurvivalSample], config: &AftConfig, grid: TimeGrid) -> Result<BoostedAftModel> {
    config.validate()?;
    grid.validate()?;
    if samples.len() < 20 {
        return Err(Error::data(format!("{} samples, need at least 20", samples.len())));
    }
    let d = samples[0].x.len();
    for s in samples {
        s.validate()?;
        if s.x.len() != d {
            return Err(Error::data("samples differ in feature count"));
        }
    }
    let n_events = samples.iter().filter(|s| s.event).count();
    if n_events == 0 {
        return Err(Error::NonIdentifiable("every sample is censored".into()));
    }

    let mut data: Vec<&SurvivalSample> = samples.iter().collect();
    data.sort_by(|a, b| canonical_cmp(a, b));

    let n = data.len() as f64;
    let n_censored = data.len() - n_events;
    let class_weight = |event: bool| {
        if !config.balance_classes || n_censored == 0 {
            1.0
        } else if event {
            n / (2.0 * n_events as f64)
        } else {
            n / (2.0 * n_censored as f64)
        }
    };
    let w: Vec<f64> = data.iter().map(|s| s.weight * class_weight(s.event)).collect();
    let xs: Vec<&[f64]> = data.iter().map(|s| s.x.as_slice()).collect();

    let base_score = fit_base_score(&data, &w, config.sigma)?;
    let mut tau = vec![base_score; data.len()];
    let mut trees = Vec::with_capacity(config.trees);
    let mut g = vec![0.0; data.len()];
    let mut h = vec![0.0; data.len()];
    for _ in 0..config.trees {
        for (i, s) in data.iter().enumerate() {
            let l = aft_nll(tau[i], s.y, s.event, config.sigma)?;
            g[i] = w[i] * l.grad;
            h[i] = w[i] * l.hess.max(HESS_FLOOR);
        }
        let builder = TreeBuilder { xs: &xs, g: &g, h: &h, config, d };
        let mut nodes = Vec::new();
        builder.grow(&mut nodes, (0..data.len()).collect(), 0);
        let tree = Tree { nodes };
        for (i, x) in xs.iter().enumerate() {
            tau[i] += config.learning_rate * tree.eval(x);
        }
        trees.push(tree);
    }
    Ok(BoostedAftModel {
        sigma: config.sigma,
        base_score,
        learning_rate: config.learning_rate,
        n_features: d,
        grid,
        trees,
    })
}

/// Weighted NLL minimiser over a constant tau, by damped Newton steps.
fn fit_base_score(data: &[&SurvivalSample], w: &[f64], sigma: f64) -> Result<f64> {
    let objective = |tau: f64| -> Result<(f64, f64, f64)> {
        let (mut l, mut g, mut h) = (Neumaier::default(), Neumaier::default(), Neumaier::default());
        for (s, &wi) in data.iter().zip(w) {
            let r = aft_nll(tau, s.y, s.event, sigma)?;
            l.add(wi * r.loss);
            g.add(wi * r.grad);
            h.add(wi * r.hess);
        }
        Ok((l.value(), g.value(), h.value()))
    };
    let mut tau = {
        let (mut num, mut den) = (Neumaier::default(), Neumaier::default());
        for (s, &wi) in data.iter().zip(w) {
            num.add(wi * s.y.ln());
            den.add(wi);
        }
        num.value() / den.value()
    };
    let (mut loss, mut g, mut h) = objective(tau)?;
    for _ in 0..100 {
        if g.abs() < 1e-12 * (1.0 + loss.abs()) {
            break;
        }
        let mut step = -g / h.max(1e-12);
        let mut accepted = false;
        for _ in 0..50 {
            let (l2, g2, h2) = objective(tau + step)?;
            if l2 <= loss {
                tau += step;
                (loss, g, h) = (l2, g2, h2);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok(tau)
}

struct TreeBuilder<'a> {
    xs: &'a [&'a [f64]],
    g: &'a [f64],
    h: &'a [f64],
    config: &'a AftConfig,
    d: usize,
}

struct Split {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

impl TreeBuilder<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let t = soft_threshold(g, self.config.l1);
        t * t / (h + self.config.l2)
    }

    fn sums(&self, idx: impl Iterator<Item = usize>) -> (f64, f64) {
        let (mut g, mut h) = (Neumaier::default(), Neumaier::default());
        for i in idx {
            g.add(self.g[i]);
            h.add(self.h[i]);
        }
        (g.value(), h.value())
    }

    /// Append the subtree for `idx` and return its node index.
    fn grow(&self, nodes: &mut Vec<TreeNode>, idx: Vec<usize>, depth: usize) -> usize {
        let (g, h) = self.sums(idx.iter().copied());
        let me = nodes.len();
        let denom = h + self.config.l2;
        let value = if denom > 0.0 { -soft_threshold(g, self.config.l1) / denom } else { 0.0 };
        nodes.push(TreeNode {
            feature: None,
            threshold: 0.0,
            default_left: true,
            left: 0,
            right: 0,
            value,
        });
        if depth >= self.config.depth {
            return me;
        }
        let Some(split) = self.best_split(&idx, g, h) else { return me };
        let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| {
            let v = self.xs[i][split.feature];
            if v.is_nan() { split.default_left } else { v < split.threshold }
        });
        let l = self.grow(nodes, left, depth + 1);
        let r = self.grow(nodes, right, depth + 1);
        let n = &mut nodes[me];
        n.feature = Some(split.feature);
        n.threshold = split.threshold;
        n.default_left = split.default_left;
        n.left = l;
        n.right = r;
        me
    }

    fn best_split(&self, idx: &[usize], g: f64, h: f64) -> Option<Split> {
        let parent = self.score(g, h);
        let mcw = self.config.min_child_weight;
        let mut best: Option<Split> = None;
        let mut present = Vec::with_capacity(idx.len());
        for f in 0..self.d {
            present.clear();
            present.extend(idx.iter().copied().filter(|&i| !self.xs[i][f].is_nan()));
            present.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]));
            let (gm, hm) = self.sums(idx.iter().copied().filter(|&i| self.xs[i][f].is_nan()));
            let (mut gl, mut hl) = (Neumaier::default(), Neumaier::default());
            for k in 0..present.len().saturating_sub(1) {
                let i = present[k];
                gl.add(self.g[i]);
                hl.add(self.h[i]);
                let (a, b) = (self.xs[i][f], self.xs[present[k + 1]][f]);
                if a == b {
                    continue;
                }
                let mut threshold = a + (b - a) / 2.0;
                if threshold <= a {
                    threshold = b;
                }
                for default_left in [true, false] {
                    let (gl, hl) = if default_left {
                        (gl.value() + gm, hl.value() + hm)
                    } else {
                        (gl.value(), hl.value())
                    };
                    let (gr, hr) = (g - gl, h - hl);
                    if hl < mcw || hr < mcw {
                        continue;
                    }
                    let gain = self.score(gl, hl) + self.score(gr, hr) - parent;
                    if gain > 1e-12 && best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(Split { gain, feature: f, threshold, default_left });
                    }
                }
            }
        }
        best
    }
}
