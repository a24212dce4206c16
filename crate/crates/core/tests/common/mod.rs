//! Independent reference implementations shared by the integration tests.
//! Everything here is written from the formulas directly, without calling
//! into the crate's own math.

#![allow(dead_code)]

use memesent::dataset::{generate_synthetic, EncodedSample, LabelDistributionSpec, MemeRecord};
use memesent::embedding::MultiModalEmbedding;
use memesent::nn::Mlp;
use memesent::{EmotionPresenceVector, EmotionScaleVector, SentimentLabel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const BCE_EPS: f64 = 1e-7;
pub const HIST_EPS: f64 = 1e-8;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash value in `[-1, 1)` from the top 53 bits.
pub fn hash_unit(seed: u64, id: &str, i: u64) -> f64 {
    let h = splitmix64(splitmix64(seed ^ fnv1a64(id.as_bytes())) ^ i);
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Plain matrix arithmetic over the flat parameter layout: per layer the
/// row-major `out x in` weights, then the biases. Hidden layers use tanh.
pub fn mlp(dims: &[usize], params: &[f64], tanh_output: bool, x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    let mut off = 0;
    let layers = dims.len() - 1;
    for l in 0..layers {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let w = &params[off..off + n_in * n_out];
        let b = &params[off + n_in * n_out..off + n_in * n_out + n_out];
        off += n_in * n_out + n_out;
        let mut z = vec![0.0; n_out];
        for o in 0..n_out {
            let mut acc = b[o];
            for i in 0..n_in {
                acc += w[o * n_in + i] * a[i];
            }
            z[o] = if l + 1 < layers || tanh_output { acc.tanh() } else { acc };
        }
        a = z;
    }
    assert_eq!(off, params.len());
    a
}

pub fn net(m: &Mlp, tanh_output: bool, x: &[f64]) -> Vec<f64> {
    mlp(m.dims(), m.params(), tanh_output, x)
}

fn clamp(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

pub fn bce(preds: &[f64], labels: &[bool]) -> f64 {
    let mut s = 0.0;
    for (p, y) in preds.iter().zip(labels) {
        let p = clamp(*p);
        s -= if *y { p.ln() } else { (1.0 - p).ln() };
    }
    s / preds.len() as f64
}

pub fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64
}

/// Two-pass population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn gauss_pdf(x: f64, mean: f64, std: f64) -> f64 {
    (-0.5 * ((x - mean) / std).powi(2)).exp() / (std * (2.0 * std::f64::consts::PI).sqrt())
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// Gaussian mass per equal-width bin over `[0, 1]`, renormalized.
pub fn prior_masses(mean: f64, std: f64, bins: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..bins)
        .map(|j| {
            simpson(
                |x| gauss_pdf(x, mean, std),
                j as f64 / bins as f64,
                (j + 1) as f64 / bins as f64,
                2000,
            )
        })
        .collect();
    let z: f64 = raw.iter().sum();
    raw.iter().map(|r| r / z).collect()
}

pub fn histogram(preds: &[f64], bins: usize) -> Vec<f64> {
    let mut c = vec![0.0; bins];
    for p in preds {
        let mut j = (p * bins as f64).floor() as usize;
        if j >= bins {
            j = bins - 1;
        }
        c[j] += 1.0;
    }
    c.iter().map(|v| v / preds.len() as f64).collect()
}

fn smoothed(m: &[f64]) -> Vec<f64> {
    let z = 1.0 + m.len() as f64 * HIST_EPS;
    m.iter().map(|v| (v + HIST_EPS) / z).collect()
}

/// KL between the smoothed histogram of `preds` and the smoothed prior
/// masses.
pub fn kl(preds: &[f64], mean: f64, std: f64, bins: usize) -> f64 {
    let p = smoothed(&histogram(preds, bins));
    let q = smoothed(&prior_masses(mean, std, bins));
    p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum::<f64>().max(0.0)
}

pub fn emotion_bce(probs: &[[f64; 4]], labels: &[[bool; 4]]) -> f64 {
    let mut s = 0.0;
    for (p, y) in probs.iter().zip(labels) {
        for e in 0..4 {
            let q = clamp(p[e]);
            s -= if y[e] { q.ln() } else { (1.0 - q).ln() };
        }
    }
    s / probs.len() as f64
}

pub fn scale_ce(logits: &[[Vec<f64>; 4]], labels: &[[u8; 4]]) -> f64 {
    let mut s = 0.0;
    for (l, y) in logits.iter().zip(labels) {
        for e in 0..4 {
            s -= softmax(&l[e])[y[e] as usize].ln();
        }
    }
    s / logits.len() as f64
}

/// The three-way rule evaluated in exact integer arithmetic (values in
/// tenths).
pub fn decide(g: i64, b: i64, tg: i64, tb: i64) -> SentimentLabel {
    if g >= tg && b < tb {
        SentimentLabel::Positive
    } else if b >= tb && g < tg {
        SentimentLabel::Negative
    } else if g >= tg && b >= tb {
        if g - tg >= b - tb {
            SentimentLabel::Positive
        } else {
            SentimentLabel::Negative
        }
    } else if b > g {
        SentimentLabel::Negative
    } else {
        SentimentLabel::Neutral
    }
}

pub const SCALE_COUNTS: [usize; 4] = [4, 4, 4, 2];

/// Random embeddings with random consistent labels.
pub fn random_samples(n: usize, ds: usize, da: usize, seed: u64) -> Vec<EncodedSample> {
    let mut r = rng(seed);
    (0..n)
        .map(|i| {
            let v = |r: &mut ChaCha8Rng, len: usize| -> Vec<f32> { (0..len).map(|_| r.random_range(-1.0f32..1.0)).collect() };
            let s = v(&mut r, ds);
            let a = v(&mut r, da);
            let t = v(&mut r, da);
            let scales = [0, 1, 2, 3].map(|e| r.random_range(0..SCALE_COUNTS[e]) as u8);
            let sentiment = SentimentLabel::from_index(i % 3).unwrap();
            EncodedSample {
                meme_id: format!("r{i}"),
                embedding: MultiModalEmbedding::new(s, a, t).unwrap(),
                sentiment,
                presence: EmotionPresenceVector::from_array(scales.map(|s| s > 0)),
                scales: EmotionScaleVector::from_array(scales).unwrap(),
            }
        })
        .collect()
}

pub fn synthetic_records(n: usize, seed: u64) -> Vec<MemeRecord> {
    generate_synthetic(&LabelDistributionSpec::memotion_train(), n, seed)
        .unwrap()
        .records
}

/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6)
}

pub const FD_STEP: f64 = 1e-5;

/// Central difference of `f` with respect to `params[i]`.
pub fn central_diff<S>(state: &mut S, get: impl Fn(&mut S) -> &mut f64, f: impl Fn(&S) -> f64) -> f64 {
    let orig = *get(state);
    *get(state) = orig + FD_STEP;
    let up = f(state);
    *get(state) = orig - FD_STEP;
    let down = f(state);
    *get(state) = orig;
    (up - down) / (2.0 * FD_STEP)
}

/// Support-weighted F1 counted directly from label pairs.
pub fn weighted_f1<T: PartialEq + Clone>(preds: &[T], golds: &[T]) -> f64 {
    let mut classes: Vec<T> = Vec::new();
    for c in golds.iter().chain(preds) {
        if !classes.contains(c) {
            classes.push(c.clone());
        }
    }
    let n = golds.len() as f64;
    let mut total = 0.0;
    for c in &classes {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for (p, g) in preds.iter().zip(golds) {
            match (p == c, g == c) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fneg += 1.0,
                _ => {}
            }
        }
        let support = tp + fneg;
        let f1 = if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) };
        total += support / n * f1;
    }
    total
}

pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    splitmix64(seed ^ fnv1a64(tag.as_bytes()))
}

use memesent::cec::{cec_batch_gradients, CecState, CecTerms};
use memesent::ctm::{ctm_batch_gradients, CtmObjective, CtmState, CtmTerms, GaussianPrior, LossBreakdown, PerturbationConfig};

/// Small CTM with randomized priors.
pub fn ctm_state(dim: usize, hidden: usize, k: usize, noise: f64, seed: u64) -> CtmState {
    let pert = PerturbationConfig {
        k,
        noise_std: noise,
        rng_seed: seed,
    };
    let mut s = CtmState::init(dim, hidden, pert, 10, seed).unwrap();
    let mut r = rng(seed ^ 0xabc);
    s.good.prior = GaussianPrior::new(r.random_range(0.2..0.8), r.random_range(0.15..0.5)).unwrap();
    s.bad.prior = GaussianPrior::new(r.random_range(0.2..0.8), r.random_range(0.15..0.5)).unwrap();
    s
}

#[derive(Clone, Copy, PartialEq)]
enum Group {
    Teacher,
    Student,
    Prior,
}

fn ctm_param(s: &mut CtmState, side: usize, g: Group, i: usize) -> &mut f64 {
    let m = if side == 0 { &mut s.good } else { &mut s.bad };
    match g {
        Group::Teacher => &mut m.teacher.params_mut()[i],
        Group::Student => &mut m.student.params_mut()[i],
        Group::Prior if i == 0 => &mut m.prior.mean,
        Group::Prior => &mut m.prior.log_std,
    }
}

/// Worst relative error per checked term for one random CTM and batch.
pub fn ctm_gradient_errors(seed: u64, objective: CtmObjective) -> Vec<(String, f64)> {
    let batch = random_samples(6, 4, 3, seed + 1000);
    let state = ctm_state(10, 5, 4, 0.1, seed);
    let none = CtmTerms {
        l_t: false,
        l_dst: false,
        l_s: false,
        l_cfd: false,
    };
    type Pick = fn(&LossBreakdown) -> f64;
    let mut cases: Vec<(&str, CtmTerms, Vec<(Group, Pick)>)> = vec![
        ("l_s", CtmTerms { l_s: true, ..none }, vec![(Group::Student, |b| b.l_s)]),
        ("l_cfd", CtmTerms { l_cfd: true, ..none }, vec![(Group::Student, |b| b.l_cfd)]),
    ];
    if objective == CtmObjective::Full {
        cases.extend([
            ("l_t", CtmTerms { l_t: true, ..none }, vec![(Group::Teacher, (|b| b.l_t) as Pick)]),
            (
                "l_dst",
                CtmTerms { l_dst: true, ..none },
                vec![(Group::Prior, |b| b.l_dst), (Group::Teacher, |b| b.l_dst)],
            ),
            (
                "total",
                CtmTerms::ALL,
                vec![
                    (Group::Teacher, |b| b.l_t + b.l_dst),
                    (Group::Student, |b| b.total),
                    (Group::Prior, |b| b.total),
                ],
            ),
        ]);
    } else {
        cases.push(("total", CtmTerms::ALL, vec![(Group::Student, |b| b.total)]));
    }
    let loss = |s: &CtmState| ctm_batch_gradients(&batch, s, objective, CtmTerms::ALL).unwrap().0;
    let mut out = Vec::new();
    for (name, terms, groups) in cases {
        let (_, grads) = ctm_batch_gradients(&batch, &state, objective, terms).unwrap();
        let mut worst: f64 = 0.0;
        for side in 0..2 {
            for &(g, pick) in &groups {
                let analytic: Vec<f64> = match g {
                    Group::Teacher => grads[side].teacher.clone(),
                    Group::Student => grads[side].student.clone(),
                    Group::Prior => grads[side].prior.to_vec(),
                };
                let mut s = state.clone();
                for (i, a) in analytic.iter().enumerate() {
                    let num = central_diff(&mut s, |s| ctm_param(s, side, g, i), |s| pick(&loss(s)));
                    worst = worst.max(rel_err(*a, num));
                }
            }
        }
        out.push((format!("ctm/{name}"), worst));
    }
    out
}

/// Worst relative error per term for one random CEC and batch.
pub fn cec_gradient_errors(seed: u64, cascade: bool) -> Vec<(String, f64)> {
    let batch = random_samples(6, 4, 3, seed + 2000);
    let state = CecState::init(10, 5, 4, cascade, seed).unwrap();
    let mode = if cascade { "cascade" } else { "no_cascade" };
    let cases: [(&str, CecTerms, fn(&memesent::cec::CecLossBreakdown) -> f64); 3] = [
        ("l_b", CecTerms { l_b: true, l_c: false }, |b| b.l_b),
        ("l_c", CecTerms { l_b: false, l_c: true }, |b| b.l_c),
        ("total", CecTerms::ALL, |b| b.total),
    ];
    let mut out = Vec::new();
    for (name, terms, pick) in cases {
        let (_, grads) = cec_batch_gradients(&batch, &state, terms).unwrap();
        let mut worst: f64 = 0.0;
        let mut s = state.clone();
        for (m, g) in grads.modules.iter().enumerate() {
            for (i, a) in g.iter().enumerate() {
                let num = central_diff(
                    &mut s,
                    |s| &mut s.modules_mut().swap_remove(m).params_mut()[i],
                    |s| pick(&cec_batch_gradients(&batch, s, CecTerms::ALL).unwrap().0),
                );
                worst = worst.max(rel_err(*a, num));
            }
        }
        out.push((format!("cec[{mode}]/{name}"), worst));
    }
    out
}
