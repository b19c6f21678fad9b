//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single PASS/FAIL line to stderr (uncaptured) and then asserts.

use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use hfrisk_core::hrv::{self, sample_entropy};
use hfrisk_core::metrics::{antolini_cindex, cumulative_dynamic_auc, integrated_brier, roc_auc};
use hfrisk_core::pipeline::{self, PipelineConfig};
use hfrisk_core::rpeak::{detect_r_peaks, BeatToBeatSeries};
use hfrisk_core::signal::{bandpass_filter, noise_std_for_snr, synth_ecg, EcgRecord, FilterSpec, SynthEcgSpec};
use hfrisk_core::study::{
    cohort_features, mean_r, model_comparison, synth_cohort, CohortSpec, ComparisonConfig, SamplingStudy,
};
use hfrisk_core::survival::{
    aft_nll, deephit_focal_nll, deephit_nll, fit_model, rank_loss, softmax, FittedModel, ModelKind,
    SurvivalCurve, SurvivalModel, SurvivalSample,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: u8, pass: bool, detail: String) {
    let line = format!("{} criterion {n}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stderr().lock(), "\n{line}");
    assert!(pass, "{line}");
}

fn secs(d: Duration) -> String {
    format!("{:.2}s", d.as_secs_f64())
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) }
}

// ---------------------------------------------------------------- 1

fn sine(f: f64, fs: f64, secs: f64) -> Vec<f64> {
    let n = (fs * secs) as usize;
    (0..n).map(|i| (std::f64::consts::TAU * f * i as f64 / fs).sin()).collect()
}

/// Amplitude at `f` by projection onto sin/cos over a whole number of cycles.
fn amplitude(x: &[f64], f: f64, fs: f64) -> f64 {
    let n = x.len() as f64;
    let (mut a, mut b) = (0.0, 0.0);
    for (i, v) in x.iter().enumerate() {
        let w = std::f64::consts::TAU * f * i as f64 / fs;
        a += v * w.sin();
        b += v * w.cos();
    }
    2.0 * (a * a + b * b).sqrt() / n
}

#[test]
fn criterion_01_filter() {
    let _g = serial();
    let t0 = Instant::now();
    let fs = 200.0;
    let spec = FilterSpec::default();
    let run = |x: Vec<f64>| bandpass_filter(&EcgRecord::new(x, fs, "I").unwrap(), &spec).unwrap().samples().to_vec();
    // steady-state window: 5 s to 15 s of a 20 s signal
    let mid = |y: &[f64]| y[1000..3000].to_vec();

    let mut worst = (0.0, 1.0);
    for f in 1..=40 {
        let g = amplitude(&mid(&run(sine(f as f64, fs, 20.0))), f as f64, fs);
        if (g - 1.0).abs() > (worst.1 - 1.0f64).abs() {
            worst = (f as f64, g);
        }
    }
    let pass_band = (worst.1 - 1.0).abs() <= 0.05;

    let g60 = amplitude(&mid(&run(sine(60.0, fs, 20.0))), 60.0, fs);
    let db60 = -20.0 * g60.log10();

    let dc = run(vec![1.0; 4000]);
    let dc_mean = dc[2000..].iter().sum::<f64>() / 2000.0;

    let clean = synth_ecg(&SynthEcgSpec { rr_ms: vec![1000.0], duration_s: 10.0, ..Default::default() }).unwrap();
    let x = clean.record.samples();
    let y = run(x.to_vec());
    let xcorr = |lag: i64| -> f64 {
        (0..x.len() as i64)
            .filter_map(|i| {
                let j = i + lag;
                (0..x.len() as i64).contains(&j).then(|| x[i as usize] * y[j as usize])
            })
            .sum()
    };
    let lag = (-20..=20).max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b))).unwrap();

    let dt = t0.elapsed();
    let pass = pass_band && db60 >= 20.0 && dc_mean.abs() < 1e-3 && lag == 0 && dt < Duration::from_secs(1);
    verdict(
        1,
        pass,
        format!(
            "worst 1-40 Hz gain {:.4} at {} Hz (need within 5%), 60 Hz {:.1} dB, DC residual {:.2e}, lag {lag}, {}",
            worst.1,
            worst.0,
            db60,
            dc_mean,
            secs(dt)
        ),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_rpeak_detection() {
    let _g = serial();
    let t0 = Instant::now();
    let tol = 30; // 150 ms at 200 Hz
    let (mut tp, mut truth, mut detected) = (0usize, 0usize, 0usize);
    let mut errors_ms = Vec::new();
    for k in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
        let rr: Vec<f64> = (0..60).map(|_| rng.random_range(600.0..=1000.0)).collect();
        let base = SynthEcgSpec { rr_ms: rr, duration_s: 30.0, seed: k, ..Default::default() };
        let clean = synth_ecg(&base).unwrap();
        let noise_std = noise_std_for_snr(clean.record.samples(), 10.0);
        let noisy = synth_ecg(&SynthEcgSpec { noise_std, ..base }).unwrap();
        let filtered = bandpass_filter(&noisy.record, &FilterSpec::default()).unwrap();
        let peaks = detect_r_peaks(&filtered).unwrap();
        let det = peaks.indices();
        truth += noisy.r_indices.len();
        detected += det.len();
        let mut j = 0;
        for &r in &noisy.r_indices {
            while j < det.len() && det[j] + tol < r {
                j += 1;
            }
            if j < det.len() && det[j].abs_diff(r) <= tol {
                tp += 1;
                errors_ms.push((det[j] as f64 - r as f64).abs() * 1000.0 / 200.0);
                j += 1;
            }
        }
    }
    errors_ms.sort_by(f64::total_cmp);
    let median = errors_ms[errors_ms.len() / 2];
    let se = tp as f64 / truth as f64;
    let ppv = tp as f64 / detected as f64;
    let dt = t0.elapsed();
    let pass = se >= 0.95 && ppv >= 0.95 && median <= 10.0 && dt < Duration::from_secs(30);
    verdict(2, pass, format!("sensitivity {se:.4}, PPV {ppv:.4}, median |error| {median:.1} ms, {}", secs(dt)));
}

// ---------------------------------------------------------------- 3

struct Oracle {
    sdnn: Option<f64>,
    rmssd: Option<f64>,
    pnn50: Option<f64>,
    sd1: Option<f64>,
    sd2: Option<f64>,
    sampen: Option<f64>,
}

fn pop_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn oracle(segments: &[Vec<f64>]) -> Oracle {
    let all: Vec<f64> = segments.concat();
    let pairs: Vec<(f64, f64)> =
        segments.iter().flat_map(|s| s.windows(2).map(|w| (w[0], w[1]))).collect();
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| b - a).collect();
    let sdnn = (!all.is_empty()).then(|| pop_var(&all).sqrt());
    let rmssd = (!diffs.is_empty()).then(|| (diffs.iter().map(|d| d * d).sum::<f64>() / diffs.len() as f64).sqrt());
    let pnn50 = (!diffs.is_empty())
        .then(|| diffs.iter().filter(|d| d.abs() > 50.0).count() as f64 / diffs.len() as f64);
    let (sd1, sd2) = if pairs.len() >= 3 {
        let sums: Vec<f64> = pairs.iter().map(|(a, b)| a + b).collect();
        (Some((pop_var(&diffs) / 2.0).sqrt()), Some((pop_var(&sums) / 2.0).sqrt()))
    } else {
        (None, None)
    };

    let m = 2;
    let sampen = if all.len() < m + 2 {
        None
    } else {
        let r = sdnn.unwrap();
        // templates of length m + 1 that stay inside one segment
        let templates: Vec<&[f64]> =
            segments.iter().flat_map(|s| s.windows(m + 1)).collect();
        let matches = |len: usize| -> u64 {
            let mut c = 0;
            for a in 0..templates.len() {
                for b in a + 1..templates.len() {
                    if (0..len).all(|k| (templates[a][k] - templates[b][k]).abs() <= r) {
                        c += 1;
                    }
                }
            }
            c
        };
        let (a, b) = (matches(m + 1), matches(m));
        (a > 0 && b > 0).then(|| -(a as f64 / b as f64).ln())
    };
    Oracle { sdnn, rmssd, pnn50, sd1, sd2, sampen }
}

fn random_segments(rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n_seg = rng.random_range(1..=4);
    (0..n_seg)
        .map(|_| {
            let len = rng.random_range(1..=150);
            let level: f64 = rng.random_range(400.0..1400.0);
            let spread: f64 = rng.random_range(5.0..120.0);
            let mut prev = 0.0;
            (0..len)
                .map(|_| {
                    prev = 0.7 * prev + spread * rng.sample::<f64, _>(StandardNormal);
                    let mut v = level + prev;
                    if rng.random_bool(0.03) {
                        v *= 0.65;
                    }
                    v.clamp(250.0, 4000.0)
                })
                .collect()
        })
        .collect()
}

#[test]
fn criterion_03_hrv_oracles() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut mismatch = Vec::new();
    let mut boundary_cases = 0;
    for case in 0..1000 {
        let mut segs = random_segments(&mut rng);
        if case < 50 {
            // boundary exclusion: a large level jump between two segments
            segs = vec![vec![800.0, 810.0, 790.0, 805.0, 800.0], vec![4800.0, 4790.0, 4810.0, 4805.0]];
            for s in &mut segs {
                for v in s.iter_mut() {
                    *v += rng.random_range(-20.0..20.0);
                }
            }
        }
        let bb = BeatToBeatSeries::from_segments(&segs).unwrap();
        if segs.len() > 1 {
            boundary_cases += 1;
        }
        let o = oracle(&segs);
        let got_p = hrv::poincare(&bb).ok();
        let got = [
            ("sdnn", hrv::sdnn(&bb).ok(), o.sdnn),
            ("rmssd", hrv::rmssd(&bb).ok(), o.rmssd),
            ("pnn50", hrv::pnn50(&bb).ok(), o.pnn50),
            ("sd1", got_p.map(|p| p.sd1), o.sd1),
            ("sd2", got_p.map(|p| p.sd2), o.sd2),
            ("sd1/sd2", got_p.map(|p| p.ratio), o.sd1.zip(o.sd2).map(|(a, b)| a / b)),
            ("area", got_p.map(|p| p.area), o.sd1.zip(o.sd2).map(|(a, b)| std::f64::consts::PI * a * b)),
            ("sample_entropy", sample_entropy(&bb, 2, None).ok().flatten(), o.sampen),
        ];
        for (name, g, want) in got {
            match (g, want) {
                (Some(a), Some(b)) => {
                    let e = rel_err(a, b);
                    worst = worst.max(e);
                    if e > 1e-9 {
                        mismatch.push(format!("case {case} {name}: {a} vs {b}"));
                    }
                }
                (None, None) => {}
                _ => mismatch.push(format!("case {case} {name}: {g:?} vs {want:?}")),
            }
        }
    }
    let dt = t0.elapsed();
    let pass = mismatch.is_empty() && dt < Duration::from_secs(10);
    verdict(
        3,
        pass,
        format!(
            "1000 series ({boundary_cases} multi-segment), worst rel. error {worst:.2e}, {} mismatches {:?}, {}",
            mismatch.len(),
            mismatch.first(),
            secs(dt)
        ),
    );
}

// ---------------------------------------------------------------- 4

#[test]
fn criterion_04_sampling_study() {
    let _g = serial();
    let t0 = Instant::now();
    let seeds: Vec<u64> = (0..5).collect();
    let mut study = SamplingStudy::new(50, 0, hrv::Placement::OnePerHourRandom).unwrap();
    let mut by_count = Vec::new();
    for count in [3, 6, 12, 24] {
        let rows = study.rows(5.0, count, &seeds).unwrap();
        by_count.push(mean_r(&rows, 5.0, count).unwrap_or(f64::NAN));
    }
    let whole = study.rows(60.0, 24, &seeds).unwrap();
    let exhaustive = mean_r(&whole, 60.0, 24);
    let every_one = whole.iter().all(|r| r.r == Some(1.0));
    let monotone = by_count.windows(2).all(|w| w[1] >= w[0]);
    let dt = t0.elapsed();
    let pass = by_count[3] >= 0.9 && monotone && every_one && dt < Duration::from_secs(120);
    verdict(
        4,
        pass,
        format!(
            "50 days x 5 seeds, 5-min mean r over counts 3/6/12/24 = {:.4?}, 60-min x 24 r = {:?}, {}",
            by_count,
            exhaustive,
            secs(dt)
        ),
    );
}

// ---------------------------------------------------------------- 5

/// Fourth-order central difference.
fn central(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn batch_probs(scores: &[f64], width: usize) -> Vec<f64> {
    scores.chunks(width).flat_map(softmax).collect()
}

fn vector_rel_err(fd: &[f64], g: &[f64]) -> f64 {
    let diff = fd.iter().zip(g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // identically-constant losses leave only round-off on both sides
    let scale = fd.iter().chain(g).map(|v| v.abs()).fold(1e-6, f64::max);
    diff / scale
}

struct Batch {
    scores: Vec<f64>,
    width: usize,
    bins: Vec<usize>,
    times: Vec<f64>,
    events: Vec<bool>,
}

fn random_batch(rng: &mut ChaCha8Rng) -> Batch {
    let n = rng.random_range(2..=8);
    let width = rng.random_range(2..=7);
    let scores = (0..n * width).map(|_| 1.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    let bins: Vec<usize> = (0..n).map(|_| rng.random_range(0..width)).collect();
    let times = bins.iter().map(|&b| b as f64 + rng.random::<f64>()).collect();
    let mut events: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
    events[0] = true;
    Batch { scores, width, bins, times, events }
}

fn score_gradient_check(b: &Batch, loss: impl Fn(&[f64]) -> (f64, Vec<f64>)) -> f64 {
    let (_, g) = loss(&b.scores);
    let fd: Vec<f64> = (0..b.scores.len())
        .map(|k| {
            central(
                |v| {
                    let mut s = b.scores.clone();
                    s[k] = v;
                    loss(&s).0
                },
                b.scores[k],
                1e-3,
            )
        })
        .collect();
    vector_rel_err(&fd, &g)
}

#[test]
fn criterion_05_loss_gradients() {
    let _g = serial();
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut focal0, mut focal2, mut rank, mut aft): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
    let configs = 200;
    for _ in 0..configs {
        let b = random_batch(&mut rng);
        for (gamma, worst) in [(0.0, &mut focal0), (2.0, &mut focal2)] {
            let e = score_gradient_check(&b, |s| {
                let o = deephit_focal_nll(&batch_probs(s, b.width), &b.bins, &b.events, gamma);
                (o.loss, o.grad)
            });
            *worst = worst.max(e);
        }
        let sigma = rng.random_range(0.1..1.0);
        let e = score_gradient_check(&b, |s| {
            let o = rank_loss(&batch_probs(s, b.width), &b.bins, &b.times, &b.events, sigma);
            (o.loss, o.grad)
        });
        rank = rank.max(e);

        let sigma: f64 = rng.random_range(0.3..2.0);
        let y: f64 = rng.random_range(-2.0f64..3.0).exp();
        let tau = y.ln() + sigma * rng.random_range(-4.0..4.0);
        let event = rng.random_bool(0.5);
        let l = aft_nll(tau, y, event, sigma).unwrap();
        let fd_g = central(|t| aft_nll(t, y, event, sigma).unwrap().loss, tau, 1e-3);
        let fd_h = central(|t| aft_nll(t, y, event, sigma).unwrap().grad, tau, 1e-3);
        aft = aft.max(rel_err(fd_g, l.grad)).max(rel_err(fd_h, l.hess));
    }
    let dt = t0.elapsed();
    let pass = focal0 < 1e-4 && focal2 < 1e-4 && rank < 1e-4 && aft < 1e-6 && dt < Duration::from_secs(60);
    verdict(
        5,
        pass,
        format!(
            "{configs} configs each, worst rel. error focal(0) {focal0:.1e}, focal(2) {focal2:.1e}, rank {rank:.1e}, AFT {aft:.1e}, {}",
            secs(dt)
        ),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_focal_identity() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let b = random_batch(&mut rng);
        let p = batch_probs(&b.scores, b.width);
        let focal = deephit_focal_nll(&p, &b.bins, &b.events, 0.0).loss;
        let plain = deephit_nll(&p, &b.bins, &b.events);
        worst = worst.max((focal - plain).abs());
    }
    verdict(6, worst <= 1e-12, format!("500 random batches, max |focal(0) - plain| = {worst:.1e}"));
}

// ---------------------------------------------------------------- 7, 8

fn planted_aft(n: usize, seed: u64) -> (Vec<SurvivalSample>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taus = Vec::with_capacity(n);
    let samples = (0..n)
        .map(|_| {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let tau = 1.0 + 0.5 * x[0] - 0.4 * x[1] + 0.25 * x[2] * x[3];
            let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
            let t = (tau + 0.1 * (u / (1.0 - u)).ln()).exp();
            let c = rng.random_range(0.5..15.0f64).min(11.0);
            taus.push(tau);
            SurvivalSample::new(x, t.min(c), t <= c)
        })
        .collect();
    (samples, taus)
}

fn planted_cohort(n: usize, seed: u64) -> (Vec<SurvivalSample>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taus = Vec::with_capacity(n);
    let samples = (0..n)
        .map(|_| {
            let mut x: Vec<f64> = (0..6).map(|_| rng.random::<f64>()).collect();
            x[4] = f64::from(u8::from(rng.random_bool(0.4)));
            x[5] = f64::from(u8::from(rng.random_bool(0.5)));
            let tau = 4f64.ln()
                + 2.5 * (-1.6 * (x[0] - 0.5) + 1.2 * (x[1] - 0.5) - (x[2] * x[3] - 0.25) - 0.5 * (x[4] - 0.4));
            let u: f64 = rng.random_range(1e-12..1.0 - 1e-12);
            let t = (tau + 0.3 * (u / (1.0 - u)).ln()).exp();
            let c = rng.random_range(2.0..11.0);
            taus.push(tau);
            SurvivalSample::new(x, t.min(c), t <= c)
        })
        .collect();
    (samples, taus)
}

fn names(d: usize) -> Vec<String> {
    (0..d).map(|k| format!("x{k}")).collect()
}

fn fit(samples: &[SurvivalSample], kind: ModelKind, cfg: &PipelineConfig) -> FittedModel {
    fit_model(names(samples[0].x.len()), samples, cfg.grid, &cfg.learner(kind)).unwrap()
}

fn held_out_cindex(model: &dyn SurvivalModel, test: &[SurvivalSample]) -> f64 {
    let curves: Vec<SurvivalCurve> = test.iter().map(|s| model.survival_curve(&s.x)).collect();
    let y: Vec<f64> = test.iter().map(|s| s.y).collect();
    let e: Vec<bool> = test.iter().map(|s| s.event).collect();
    antolini_cindex(&curves, &y, &e).unwrap()
}

#[test]
fn criterion_07_distribution_invariants() {
    let _g = serial();
    let t0 = Instant::now();
    let cfg = PipelineConfig::default();
    let (train, _) = planted_cohort(600, 71);
    let aft = fit(&train, ModelKind::BoostedAft, &cfg);
    let mlp = fit(&train, ModelKind::MlpDeephit, &cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst_sum, mut bad_curves, mut bad_probs) = (0.0f64, 0, 0);
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..6)
            .map(|_| if rng.random_bool(0.05) { f64::NAN } else { rng.random_range(-5.0..5.0) })
            .collect();
        for m in [&aft, &mlp] {
            let d = m.distribution(&x);
            worst_sum = worst_sum.max((d.probs.iter().sum::<f64>() - 1.0).abs());
            bad_probs += d.probs.iter().filter(|p| !(0.0..=1.0).contains(*p)).count();
            if !m.survival_curve(&x).is_monotone() {
                bad_curves += 1;
            }
        }
    }
    let pass = worst_sum <= 1e-6 && bad_curves == 0 && bad_probs == 0;
    verdict(
        7,
        pass,
        format!(
            "AFT and MLP on 10000 inputs: max |sum p - 1| {worst_sum:.1e}, non-monotone curves {bad_curves}, out-of-range p {bad_probs}, {}",
            secs(t0.elapsed())
        ),
    );
}

#[test]
fn criterion_08_learner_sanity() {
    let _g = serial();
    let t0 = Instant::now();
    let cfg = PipelineConfig::default();

    let (train, _) = planted_aft(2000, 81);
    let (test, tau) = planted_aft(1000, 82);
    let aft = fit(&train, ModelKind::BoostedAft, &cfg);
    let c_aft = held_out_cindex(&aft, &test);
    let oracle_aft = oracle_cindex(&test, &tau);

    let (train, _) = planted_cohort(2000, 83);
    let (test, tau) = planted_cohort(1000, 84);
    let mlp = fit(&train, ModelKind::MlpDeephit, &cfg);
    let c_mlp = held_out_cindex(&mlp, &test);
    let oracle_mlp = oracle_cindex(&test, &tau);

    let dt = t0.elapsed();
    let pass = c_aft >= 0.9 && c_mlp >= 0.8 && dt < Duration::from_secs(300);
    verdict(
        8,
        pass,
        format!(
            "held-out C-index boosted AFT {c_aft:.4} (true-tau {oracle_aft:.4}), MLP DeepHit {c_mlp:.4} (true-tau {oracle_mlp:.4}), {}",
            secs(dt)
        ),
    );
}

/// Harrell-style concordance of the true location against observed times.
fn oracle_cindex(test: &[SurvivalSample], tau: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..test.len() {
        if !test[i].event {
            continue;
        }
        for j in 0..test.len() {
            if test[i].y < test[j].y {
                den += 1.0;
                if tau[i] < tau[j] {
                    num += 1.0;
                } else if tau[i] == tau[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

// ---------------------------------------------------------------- 9

fn flat(v: f64) -> SurvivalCurve {
    SurvivalCurve { times: vec![0.0, 100.0], survival: vec![v, v] }
}

fn logistic_curve(tau: f64) -> SurvivalCurve {
    let times: Vec<f64> = (0..=200).map(|k| k as f64 * 0.1).collect();
    let survival = times
        .iter()
        .map(|&t| if t == 0.0 { 1.0 } else { 1.0 / (1.0 + (t.ln() - tau).exp()) })
        .collect();
    SurvivalCurve { times, survival }
}

#[test]
fn criterion_09_metric_oracles() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut notes = Vec::new();
    let mut pass = true;

    // perfect ordering and full ties
    let y: Vec<f64> = (1..=200).map(|k| k as f64 * 0.05).collect();
    let ev = vec![true; y.len()];
    let perfect: Vec<SurvivalCurve> = y.iter().map(|t| logistic_curve(t.ln())).collect();
    let c_perfect = antolini_cindex(&perfect, &y, &ev).unwrap();
    let tied: Vec<SurvivalCurve> = y.iter().map(|_| logistic_curve(1.0)).collect();
    let c_tied = antolini_cindex(&tied, &y, &ev).unwrap();
    pass &= c_perfect == 1.0 && c_tied == 0.5;
    notes.push(format!("perfect {c_perfect}, tied {c_tied}"));

    // random risk, unrelated to outcome
    let n = 10_000;
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..10.0)).collect();
    let ev: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
    let random: Vec<SurvivalCurve> = (0..n).map(|_| logistic_curve(rng.random_range(-1.0..3.0))).collect();
    let c_random = antolini_cindex(&random, &y, &ev).unwrap();
    pass &= (c_random - 0.5).abs() <= 0.02;
    notes.push(format!("random {c_random:.4}"));

    // integrated Brier score
    let n = 500;
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..10.0)).collect();
    let ev = vec![true; n];
    let times: Vec<f64> = (1..=20).map(|k| k as f64 * 0.45).collect();
    let half: Vec<SurvivalCurve> = (0..n).map(|_| flat(0.5)).collect();
    let ibs_half = integrated_brier(&half, &y, &ev, &times).unwrap();
    pass &= (ibs_half - 0.25).abs() < 1e-12;

    let t_true: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..10.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..20.0)).collect();
    let y: Vec<f64> = t_true.iter().zip(&c).map(|(t, c)| t.min(*c)).collect();
    let ev: Vec<bool> = t_true.iter().zip(&c).map(|(t, c)| t <= c).collect();
    let step: Vec<SurvivalCurve> = t_true
        .iter()
        .map(|&t| SurvivalCurve { times: vec![0.0, t, t + 1e-9, 100.0], survival: vec![1.0, 1.0, 0.0, 0.0] })
        .collect();
    let ibs_oracle = integrated_brier(&step, &y, &ev, &times).unwrap();
    pass &= ibs_oracle <= 0.01;
    notes.push(format!("iBS constant 0.5 {ibs_half:.6}, oracle {ibs_oracle:.2e}"));

    // c/d AUC versus ROC-AUC with censoring only after the horizon
    let horizon = 5.0;
    let n = 400;
    let t_true: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..12.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.random_range(horizon + 0.5..15.0)).collect();
    let y: Vec<f64> = t_true.iter().zip(&c).map(|(t, c)| t.min(*c)).collect();
    let ev: Vec<bool> = t_true.iter().zip(&c).map(|(t, c)| t <= c).collect();
    let curves: Vec<SurvivalCurve> =
        t_true.iter().map(|t| logistic_curve(t.ln() + rng.random_range(-1.5..1.5))).collect();
    let (cd, _) = cumulative_dynamic_auc(&curves, &y, &ev, &[horizon]);
    let scores: Vec<f64> = curves.iter().map(|s| 1.0 - s.at(horizon)).collect();
    let labels: Vec<bool> = y.iter().zip(&ev).map(|(&t, &e)| e && t <= horizon).collect();
    let roc = roc_auc(&scores, &labels).unwrap();
    let cd = cd[0].unwrap();
    pass &= (cd - roc).abs() < 1e-12;
    notes.push(format!("c/d AUC {cd:.6} vs ROC-AUC {roc:.6}"));

    verdict(9, pass, notes.join(", "));
}

// ---------------------------------------------------------------- 10

#[test]
fn criterion_10_hrv_adds_signal() {
    let _g = serial();
    let t0 = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for (label, effect) in [("planted", 0.8), ("null", 0.0)] {
        let base = ComparisonConfig::default();
        let cfg = ComparisonConfig {
            train: CohortSpec { rest_hr_effect: effect, ..base.train.clone() },
            test: CohortSpec { rest_hr_effect: effect, ..base.test.clone() },
            ..base
        };
        let rows = model_comparison(&cfg).unwrap();
        for pair in rows.chunks(2) {
            let (ecg, both) = (&pair[0], &pair[1]);
            assert!(!ecg.with_hrv && both.with_hrv);
            let (a, b) = (ecg.report.c_index.unwrap(), both.report.c_index.unwrap());
            let diff = b - a;
            pass &= if effect > 0.0 { diff >= 0.03 } else { diff.abs() <= 0.02 };
            lines.push(format!("{label} {}: {a:.4} -> {b:.4} ({diff:+.4})", ecg.model));
        }
    }
    verdict(10, pass, format!("{}, {}", lines.join("; "), secs(t0.elapsed())));
}

// ---------------------------------------------------------------- 11

fn one_run(dir: &std::path::Path) -> Vec<Vec<u8>> {
    let mut cfg = PipelineConfig { seed: 42, ..Default::default() };
    cfg.optimizer.epochs = 15;
    let subjects = synth_cohort(&CohortSpec { n_subjects: 60, seed: 42, ..Default::default() }).unwrap();
    let table = cohort_features(&subjects, &cfg);
    table.write_csv(&dir.join("features.csv")).unwrap();
    let mut files = vec!["features.csv".to_string()];
    for kind in [ModelKind::BoostedAft, ModelKind::MlpDeephit] {
        let model = pipeline::train(&table, kind, &cfg).unwrap();
        let name = format!("{kind:?}");
        std::fs::write(dir.join(format!("{name}.json")), model.to_json().unwrap()).unwrap();
        let report = pipeline::evaluate(&model, &table).unwrap();
        std::fs::write(dir.join(format!("{name}-report.json")), report.to_json().unwrap()).unwrap();
        files.push(format!("{name}.json"));
        files.push(format!("{name}-report.json"));
    }
    files.iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect()
}

#[test]
fn criterion_11_determinism() {
    let _g = serial();
    let t0 = Instant::now();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let first = one_run(a.path());
    let second = one_run(b.path());
    let identical = first == second;
    let bytes: usize = first.iter().map(Vec::len).sum();
    verdict(
        11,
        identical,
        format!(
            "features CSV, 2 model files and 2 reports ({bytes} bytes) identical across runs: {identical}, {}",
            secs(t0.elapsed())
        ),
    );
}
