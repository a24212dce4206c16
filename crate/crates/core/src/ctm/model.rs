//! Forward passes, input perturbation and the batched objective.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::losses::{
    bce_grad, confidence_grad, distribution_reg_with_grad, loss_confidence, loss_student_mse,
    loss_teacher_bce, mse_grad,
};
use super::{make_pre_label, CtmState, LossBreakdown, PerturbationConfig, Side};
use crate::dataset::EncodedSample;
use crate::embedding::hash::derive_seed;
use crate::embedding::MultiModalEmbedding;
use crate::error::{Error, Result};
use crate::labels::SentimentLabel;
use crate::nn::{sigmoid, Mlp};

/// Teacher probability for one side; the side's pre-label bit is appended
/// to the flattened embedding as one extra input feature.
pub fn teacher_forward(emb: &MultiModalEmbedding, pre_label_bit: bool, teacher: &Mlp) -> Result<f64> {
    let mut x = emb.to_flat_f64();
    x.push(if pre_label_bit { 1.0 } else { 0.0 });
    Ok(sigmoid(teacher.predict(&x)?[0]))
}

pub fn student_forward(emb: &MultiModalEmbedding, student: &Mlp) -> Result<f64> {
    Ok(sigmoid(student.predict(&emb.to_flat_f64())?[0]))
}

pub(crate) fn noisy_copies(x: &[f64], k: usize, noise_std: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if noise_std == 0.0 {
        return vec![x.to_vec(); k];
    }
    let normal = Normal::new(0.0, noise_std).expect("noise_std validated as finite and >= 0");
    (0..k)
        .map(|_| x.iter().map(|v| v + normal.sample(rng)).collect())
        .collect()
}

/// `k` copies of `emb` with i.i.d. `N(0, noise_std^2)` noise on every
/// component, reproducible from `cfg.rng_seed`.
pub fn perturb_embedding(emb: &MultiModalEmbedding, cfg: &PerturbationConfig) -> Result<Vec<MultiModalEmbedding>> {
    cfg.validate()?;
    let (ds, da) = emb.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    noisy_copies(&emb.to_flat_f64(), cfg.k, cfg.noise_std, &mut rng)
        .into_iter()
        .map(|c| {
            let flat: Vec<f32> = c.into_iter().map(|v| v as f32).collect();
            MultiModalEmbedding::from_flat(&flat, ds, da)
        })
        .collect()
}

/// What supervises the students.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CtmObjective {
    /// Teachers trained on pre-labels; students regress onto teachers.
    Full,
    /// No teachers: students trained with cross-entropy directly on the
    /// pre-labels, reported in the `l_s` slot. `l_t` and `l_dst` are zero.
    StudentOnly,
}

#[derive(Debug, Clone)]
pub struct SideGrads {
    pub teacher: Vec<f64>,
    pub student: Vec<f64>,
    /// `(d/dmean, d/dlog_std)`.
    pub prior: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub breakdown: LossBreakdown,
    pub per_side: [LossBreakdown; 2],
    /// Student predictions on every perturbed copy, per side.
    pub disturbed: [Vec<f64>; 2],
    pub grads: Option<[SideGrads; 2]>,
}

/// Which loss terms contribute to a gradient. Teacher predictions are
/// constants inside the student terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtmTerms {
    pub l_t: bool,
    pub l_dst: bool,
    pub l_s: bool,
    pub l_cfd: bool,
}

impl CtmTerms {
    pub const ALL: CtmTerms = CtmTerms {
        l_t: true,
        l_dst: true,
        l_s: true,
        l_cfd: true,
    };
}

pub(crate) struct FlatSample<'a> {
    pub x: &'a [f64],
    pub sentiment: SentimentLabel,
}

/// Evaluates the objective on one batch. Teachers see clean embeddings;
/// students see `k` perturbed copies per meme, shared by both sides.
/// Teacher predictions enter the student term as constants. The histogram
/// in the distribution term is piecewise constant in the teacher outputs, so
/// that term only yields gradients for the prior.
pub(crate) fn batch_forward(
    batch: &[FlatSample<'_>],
    state: &CtmState,
    objective: CtmObjective,
    rng: &mut ChaCha8Rng,
    terms: Option<CtmTerms>,
) -> Result<BatchOutput> {
    let with_grads = terms.is_some();
    let terms = terms.unwrap_or(CtmTerms::ALL);
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let input_dim = state.input_dim();
    if let Some(s) = batch.iter().find(|s| s.x.len() != input_dim) {
        return Err(Error::config(format!(
            "embedding length {} does not match model input {input_dim}",
            s.x.len()
        )));
    }
    let cfg = state.perturbation;
    cfg.validate()?;
    let n = batch.len() as f64;
    let k = cfg.k;
    let noisy: Vec<Vec<Vec<f64>>> = batch
        .iter()
        .map(|s| noisy_copies(s.x, k, cfg.noise_std, rng))
        .collect();

    let mut per_side = [LossBreakdown::default(); 2];
    let mut disturbed: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut grads = Vec::new();

    for (si, side) in Side::BOTH.into_iter().enumerate() {
        let models = state.side(side);
        let bits: Vec<bool> = batch.iter().map(|s| make_pre_label(s.sentiment).bit(side)).collect();
        let mut g_teacher = vec![0.0; if with_grads { models.teacher.params().len() } else { 0 }];
        let mut g_student = vec![0.0; if with_grads { models.student.params().len() } else { 0 }];
        let mut g_prior = [0.0; 2];

        let (l_t, l_dst, teacher_preds) = match objective {
            CtmObjective::Full => {
                let mut traces = Vec::with_capacity(batch.len());
                let mut preds = Vec::with_capacity(batch.len());
                for (s, &bit) in batch.iter().zip(&bits) {
                    let mut x = s.x.to_vec();
                    x.push(if bit { 1.0 } else { 0.0 });
                    let t = models.teacher.forward(&x)?;
                    preds.push(sigmoid(t.output()[0]));
                    traces.push(t);
                }
                let l_t = loss_teacher_bce(&preds, &bits)?;
                // a diverged teacher has no histogram; report the term as non-finite
                let (l_dst, gm, gs) = if preds.iter().all(|p| p.is_finite()) {
                    distribution_reg_with_grad(&preds, &models.prior, state.bin_count)?
                } else {
                    (f64::NAN, 0.0, 0.0)
                };
                if with_grads && terms.l_t {
                    for ((t, p), dp) in traces.iter().zip(&preds).zip(bce_grad(&preds, &bits)) {
                        models.teacher.backward(t, &[dp * p * (1.0 - p)], &mut g_teacher);
                    }
                }
                if with_grads && terms.l_dst {
                    g_prior = [gm, gs];
                }
                (l_t, l_dst, Some(preds))
            }
            CtmObjective::StudentOnly => (0.0, 0.0, None),
        };

        let mut l_s = 0.0;
        let mut l_cfd = 0.0;
        let nk = n * k as f64;
        for (i, copies) in noisy[..].iter().enumerate() {
            let mut traces = Vec::with_capacity(k);
            let mut q = Vec::with_capacity(k);
            for c in copies {
                let t = models.student.forward(c)?;
                q.push(sigmoid(t.output()[0]));
                traces.push(t);
            }
            // per-meme contributions, rescaled to means over all N*k copies
            let mut dq = match &teacher_preds {
                Some(tp) => {
                    let target = vec![tp[i]; k];
                    l_s += loss_student_mse(&q, &target)? / n;
                    if with_grads && terms.l_s {
                        mse_grad(&q, &target).into_iter().map(|g| g / n).collect()
                    } else {
                        vec![0.0; k]
                    }
                }
                None => {
                    let labels = vec![bits[i]; k];
                    l_s += loss_teacher_bce(&q, &labels)? / n;
                    if with_grads && terms.l_s {
                        bce_grad(&q, &labels).into_iter().map(|g| g / n).collect()
                    } else {
                        vec![0.0; k]
                    }
                }
            };
            l_cfd += loss_confidence(&q)? / n;
            if with_grads {
                if terms.l_cfd {
                    for (d, c) in dq.iter_mut().zip(confidence_grad(&q)) {
                        *d += c / n;
                    }
                }
                for ((t, qm), d) in traces.iter().zip(&q).zip(&dq) {
                    models.student.backward(t, &[d * qm * (1.0 - qm)], &mut g_student);
                }
            }
            disturbed[si].extend_from_slice(&q);
        }
        debug_assert!(nk > 0.0);
        per_side[si] = LossBreakdown::new(l_t, l_dst, l_s, l_cfd);
        if with_grads {
            grads.push(SideGrads {
                teacher: g_teacher,
                student: g_student,
                prior: g_prior,
            });
        }
    }
    let grads = if with_grads {
        let bad = grads.pop().unwrap();
        let good = grads.pop().unwrap();
        Some([good, bad])
    } else {
        None
    };
    Ok(BatchOutput {
        breakdown: per_side[0].add(&per_side[1]),
        per_side,
        disturbed,
        grads,
    })
}

fn flatten(batch: &[EncodedSample]) -> Vec<Vec<f64>> {
    batch.iter().map(|s| s.embedding.to_flat_f64()).collect()
}

/// Full objective on a labeled batch, summed over both sides. Noise is drawn
/// from a generator seeded with `state.perturbation.rng_seed`, so repeated
/// calls see identical perturbations.
pub fn ctm_batch_loss(batch: &[EncodedSample], state: &CtmState) -> Result<LossBreakdown> {
    let flat = flatten(batch);
    let samples: Vec<FlatSample<'_>> = flat
        .iter()
        .zip(batch)
        .map(|(x, s)| FlatSample {
            x,
            sentiment: s.sentiment,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(state.perturbation.rng_seed, "batch-loss"));
    Ok(batch_forward(&samples, state, CtmObjective::Full, &mut rng, None)?.breakdown)
}

/// Same evaluation as [`ctm_batch_loss`] (identical noise) plus gradients of
/// the selected terms, `[good, bad]`.
pub fn ctm_batch_gradients(
    batch: &[EncodedSample],
    state: &CtmState,
    objective: CtmObjective,
    terms: CtmTerms,
) -> Result<(LossBreakdown, [SideGrads; 2])> {
    let flat = flatten(batch);
    let samples: Vec<FlatSample<'_>> = flat
        .iter()
        .zip(batch)
        .map(|(x, s)| FlatSample {
            x,
            sentiment: s.sentiment,
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(state.perturbation.rng_seed, "batch-loss"));
    let out = batch_forward(&samples, state, objective, &mut rng, Some(terms))?;
    Ok((out.breakdown, out.grads.expect("gradients requested")))
}
