//! Fully connected discrete-time survival network.

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::deephit::{deephit_focal_nll, rank_loss, softmax, LossConfig};
use super::{DiscreteSurvivalDistribution, SurvivalModel, SurvivalSample, TimeGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpSpec {
    pub hidden: Vec<usize>,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub seed: u64,
}

impl Default for MlpSpec {
    fn default() -> Self {
        Self { hidden: vec![32; 4], dropout: 0.1, leaky_slope: 0.01, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Rescale half of each batch by U(0.8, 1.2) on continuous columns.
    pub augment: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { epochs: 200, batch_size: 64, learning_rate: 1e-3, augment: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out x n_in`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn init(n_in: usize, n_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (n_in as f64).sqrt();
        let mut draw = |k| (0..k).map(|_| rng.random_range(-bound..bound)).collect::<Vec<f64>>();
        let weights = draw(n_in * n_out);
        let bias = draw(n_out);
        Self { n_in, n_out, weights, bias }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.n_in)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    fn params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSurvivalModel {
    pub spec: MlpSpec,
    pub grid: TimeGrid,
    pub layers: Vec<DenseLayer>,
}

/// Missing inputs sit at the middle of the normalized range.
fn impute(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v.is_nan() { 0.5 } else { v }).collect()
}

struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    masks: Vec<Vec<f64>>,
}

impl MlpSurvivalModel {
    fn leaky(&self, v: f64) -> f64 {
        if v > 0.0 { v } else { self.spec.leaky_slope * v }
    }

    /// Output scores without dropout.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        let mut h = impute(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if l < last {
                h.iter_mut().for_each(|v| *v = self.leaky(*v));
            }
        }
        h
    }

    fn forward_train(&self, x: Vec<f64>, rng: &mut ChaCha8Rng) -> (Vec<f64>, Trace) {
        let p = self.spec.dropout;
        let keep = 1.0 / (1.0 - p);
        let last = self.layers.len() - 1;
        let mut trace = Trace { inputs: Vec::new(), pre: Vec::new(), masks: Vec::new() };
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            let a = layer.forward(&h);
            trace.inputs.push(h);
            if l == last {
                return (a, trace);
            }
            let mask: Vec<f64> = (0..a.len())
                .map(|_| if p > 0.0 && rng.random::<f64>() < p { 0.0 } else { keep })
                .collect();
            h = a.iter().zip(&mask).map(|(&v, m)| self.leaky(v) * m).collect();
            trace.pre.push(a);
            trace.masks.push(mask);
        }
        unreachable!("network has an output layer")
    }

    /// Accumulate parameter gradients into `grads` (layer order, weights then bias).
    fn backward(&self, trace: &Trace, dscores: &[f64], grads: &mut [Vec<f64>]) {
        let mut g = dscores.to_vec();
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            if l < self.layers.len() - 1 {
                for (k, gk) in g.iter_mut().enumerate() {
                    let slope = if trace.pre[l][k] > 0.0 { 1.0 } else { self.spec.leaky_slope };
                    *gk *= trace.masks[l][k] * slope;
                }
            }
            let input = &trace.inputs[l];
            let gw = &mut grads[l];
            for (o, &go) in g.iter().enumerate() {
                if go == 0.0 {
                    continue;
                }
                let row = &mut gw[o * layer.n_in..(o + 1) * layer.n_in];
                for (r, v) in row.iter_mut().zip(input) {
                    *r += go * v;
                }
                gw[layer.weights.len() + o] += go;
            }
            if l > 0 {
                let mut down = vec![0.0; layer.n_in];
                for (o, &go) in g.iter().enumerate() {
                    let row = &layer.weights[o * layer.n_in..(o + 1) * layer.n_in];
                    for (d, w) in down.iter_mut().zip(row) {
                        *d += go * w;
                    }
                }
                g = down;
            }
        }
    }

    /// Combined loss over `samples` in inference mode.
    pub fn loss_on(&self, samples: &[SurvivalSample], loss: &LossConfig) -> f64 {
        let (probs, bins, times, events) = self.batch_probs(samples.iter());
        combined(&probs, &bins, &times, &events, loss).0
    }

    fn batch_probs<'a>(
        &self,
        samples: impl Iterator<Item = &'a SurvivalSample>,
    ) -> (Vec<f64>, Vec<usize>, Vec<f64>, Vec<bool>) {
        let mut probs = Vec::new();
        let (mut bins, mut times, mut events) = (Vec::new(), Vec::new(), Vec::new());
        for s in samples {
            probs.extend(softmax(&self.scores(&s.x)));
            bins.push(self.grid.bin_of(s.y));
            times.push(s.y);
            events.push(s.event);
        }
        (probs, bins, times, events)
    }
}

impl SurvivalModel for MlpSurvivalModel {
    fn distribution(&self, x: &[f64]) -> DiscreteSurvivalDistribution {
        DiscreteSurvivalDistribution { probs: softmax(&self.scores(x)) }
    }

    fn grid(&self) -> &TimeGrid {
        &self.grid
    }
}

/// alpha * focal NLL + (1 - alpha) * rank loss, with its score gradient.
fn combined(probs: &[f64], bins: &[usize], times: &[f64], events: &[bool], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let l1 = deephit_focal_nll(probs, bins, events, cfg.gamma);
    if cfg.alpha == 1.0 {
        return (l1.loss, l1.grad);
    }
    let l2 = rank_loss(probs, bins, times, events, cfg.rank_sigma);
    let a = cfg.alpha;
    let grad = l1.grad.iter().zip(&l2.grad).map(|(g1, g2)| a * g1 + (1.0 - a) * g2).collect();
    (a * l1.loss + (1.0 - a) * l2.loss, grad)
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, model: &mut MlpSurvivalModel, grads: &[Vec<f64>], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for (l, layer) in model.layers.iter_mut().enumerate() {
            let nw = layer.weights.len();
            let params = layer.weights.iter_mut().chain(layer.bias.iter_mut());
            for (k, p) in params.enumerate() {
                let g = grads[l][k];
                let m = &mut self.m[l][k];
                let v = &mut self.v[l][k];
                *m = Self::B1 * *m + (1.0 - Self::B1) * g;
                *v = Self::B2 * *v + (1.0 - Self::B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + Self::EPS);
            }
            debug_assert_eq!(nw + layer.bias.len(), grads[l].len());
        }
    }
}

pub fn train_mlp_deephit(
    samples: &[SurvivalSample],
    spec: &MlpSpec,
    loss: &LossConfig,
    opt: &OptimizerConfig,
    grid: TimeGrid,
) -> Result<MlpSurvivalModel> {
    loss.validate()?;
    grid.validate()?;
    if samples.len() < 2 {
        return Err(Error::data("need at least 2 samples"));
    }
    if !(0.0..1.0).contains(&spec.dropout) || spec.hidden.contains(&0) {
        return Err(Error::config("dropout must lie in [0, 1) and layers must be non-empty"));
    }
    if opt.batch_size == 0 || !(opt.learning_rate > 0.0) {
        return Err(Error::config("batch size and learning rate must be positive"));
    }
    let d = samples[0].x.len();
    for s in samples {
        s.validate()?;
        if s.x.len() != d {
            return Err(Error::data("samples differ in feature count"));
        }
    }
    let continuous: Vec<bool> = (0..d)
        .map(|j| {
            let mut v: Vec<f64> = samples.iter().map(|s| s.x[j]).filter(|v| v.is_finite()).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v.len() > 2
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut widths = vec![d];
    widths.extend(&spec.hidden);
    widths.push(grid.n_outputs());
    let layers = widths.windows(2).map(|w| DenseLayer::init(w[0], w[1], &mut rng)).collect();
    let mut model = MlpSurvivalModel { spec: spec.clone(), grid, layers };
    let zeros = |m: &MlpSurvivalModel| m.layers.iter().map(|l| vec![0.0; l.params()]).collect::<Vec<_>>();
    let mut adam = Adam { m: zeros(&model), v: zeros(&model), t: 0 };

    let mut order: Vec<usize> = (0..samples.len()).collect();
    for epoch in 0..opt.epochs {
        let snapshot = model.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(opt.batch_size) {
            let b = batch.len();
            let mut xs: Vec<Vec<f64>> = batch.iter().map(|&i| impute(&samples[i].x)).collect();
            if opt.augment {
                for r in index::sample(&mut rng, b, b / 2) {
                    let f = rng.random_range(0.8..=1.2);
                    for (v, _) in xs[r].iter_mut().zip(&continuous).filter(|(_, c)| **c) {
                        *v *= f;
                    }
                }
            }
            let mut traces = Vec::with_capacity(b);
            let mut probs = Vec::with_capacity(b * grid.n_outputs());
            for x in xs {
                let (s, t) = model.forward_train(x, &mut rng);
                probs.extend(softmax(&s));
                traces.push(t);
            }
            let bins: Vec<usize> = batch.iter().map(|&i| grid.bin_of(samples[i].y)).collect();
            let times: Vec<f64> = batch.iter().map(|&i| samples[i].y).collect();
            let events: Vec<bool> = batch.iter().map(|&i| samples[i].event).collect();
            let (l, dscores) = combined(&probs, &bins, &times, &events, loss);
            if !l.is_finite() || dscores.iter().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, last_good: Box::new(snapshot) });
            }
            epoch_loss += l * b as f64;
            let mut grads = zeros(&model);
            let w = grid.n_outputs();
            for (r, t) in traces.iter().enumerate() {
                model.backward(t, &dscores[r * w..(r + 1) * w], &mut grads);
            }
            adam.step(&mut model, &grads, opt.learning_rate);
        }
        log::debug!("epoch {epoch}: loss {:.6}", epoch_loss / samples.len() as f64);
    }
    Ok(model)
}
