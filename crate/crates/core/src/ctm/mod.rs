//! Cooperative teaching model for three-way sentiment.
//!
//! Sentiment is split into two binary "pre-label" views: a good side
//! (positive or neutral) and a bad side (negative or neutral). Each side has
//! a teacher, which additionally sees its pre-label bit, and a student,
//! which sees only the embedding and learns to match the teacher under
//! Gaussian input noise. At inference only the students are used, each
//! against a threshold recorded during training.

pub mod losses;
pub mod model;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::SentimentLabel;
use crate::nn::Mlp;

pub use losses::{
    empirical_histogram, loss_confidence, loss_distribution_reg, loss_student_mse, loss_teacher_bce,
    GaussianPrior, ProbabilityHistogram, DEFAULT_BIN_COUNT,
};
pub use model::{
    ctm_batch_gradients, ctm_batch_loss, perturb_embedding, student_forward, teacher_forward, BatchOutput, CtmObjective,
    CtmTerms, SideGrads,
};
pub use train::{train_ctm, CtmTrainConfig, CtmTrainOutcome, ThresholdMode};

/// Binary view of a sentiment label; neutral sets both bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PreLabelPair {
    pub good: bool,
    pub bad: bool,
}

impl PreLabelPair {
    pub fn bit(&self, side: Side) -> bool {
        match side {
            Side::Good => self.good,
            Side::Bad => self.bad,
        }
    }

    /// Inverse of [`make_pre_label`]; `None` for the unused `(0, 0)` pair.
    pub fn sentiment(&self) -> Option<SentimentLabel> {
        match (self.good, self.bad) {
            (true, false) => Some(SentimentLabel::Positive),
            (false, true) => Some(SentimentLabel::Negative),
            (true, true) => Some(SentimentLabel::Neutral),
            (false, false) => None,
        }
    }
}

pub fn make_pre_label(s: SentimentLabel) -> PreLabelPair {
    match s {
        SentimentLabel::Positive => PreLabelPair { good: true, bad: false },
        SentimentLabel::Negative => PreLabelPair { good: false, bad: true },
        SentimentLabel::Neutral => PreLabelPair { good: true, bad: true },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Good,
    Bad,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Good, Side::Bad];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    /// Noisy copies per meme.
    pub k: usize,
    /// Standard deviation of the noise added to every embedding component.
    pub noise_std: f64,
    pub rng_seed: u64,
}

impl PerturbationConfig {
    pub const DEFAULT_K: usize = 1000;
    /// Smaller `k` used by the test suite and desk-scale runs.
    pub const DESK_K: usize = 32;
    pub const DEFAULT_NOISE_STD: f64 = 0.01;

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::config(format!("perturbation k must be >= 2, got {}", self.k)));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            k: Self::DEFAULT_K,
            noise_std: Self::DEFAULT_NOISE_STD,
            rng_seed: 0,
        }
    }
}

/// Teacher, student and prior of one side.
#[derive(Debug, Clone, PartialEq)]
pub struct SideModels {
    pub teacher: Mlp,
    pub student: Mlp,
    pub prior: GaussianPrior,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CtmState {
    pub good: SideModels,
    pub bad: SideModels,
    pub tau_good: f64,
    pub tau_bad: f64,
    pub perturbation: PerturbationConfig,
    pub bin_count: usize,
}

impl CtmState {
    pub fn side(&self, side: Side) -> &SideModels {
        match side {
            Side::Good => &self.good,
            Side::Bad => &self.bad,
        }
    }

    pub fn side_mut(&mut self, side: Side) -> &mut SideModels {
        match side {
            Side::Good => &mut self.good,
            Side::Bad => &mut self.bad,
        }
    }

    /// Flattened embedding length the networks expect.
    pub fn input_dim(&self) -> usize {
        self.good.student.input_dim()
    }

    pub fn is_finite(&self) -> bool {
        Side::BOTH.iter().all(|&s| {
            let m = self.side(s);
            m.teacher.is_finite()
                && m.student.is_finite()
                && m.prior.mean.is_finite()
                && m.prior.log_std.is_finite()
        }) && self.tau_good.is_finite()
            && self.tau_bad.is_finite()
    }

    /// Rounds all stored reals to `f32`, the checkpoint precision.
    pub fn quantize_f32(&mut self) {
        for s in Side::BOTH {
            let m = self.side_mut(s);
            m.teacher.quantize_f32();
            m.student.quantize_f32();
            m.prior.mean = m.prior.mean as f32 as f64;
            m.prior.log_std = m.prior.log_std as f32 as f64;
        }
        self.tau_good = self.tau_good as f32 as f64;
        self.tau_bad = self.tau_bad as f32 as f64;
        self.perturbation.noise_std = self.perturbation.noise_std as f32 as f64;
    }

    /// Student probabilities `(good, bad)` for one embedding.
    pub fn student_probs(&self, emb: &crate::embedding::MultiModalEmbedding) -> Result<(f64, f64)> {
        Ok((
            student_forward(emb, &self.good.student)?,
            student_forward(emb, &self.bad.student)?,
        ))
    }

    pub fn classify(&self, emb: &crate::embedding::MultiModalEmbedding) -> Result<SentimentLabel> {
        let (g, b) = self.student_probs(emb)?;
        Ok(infer_sentiment(g, b, self.tau_good, self.tau_bad))
    }
}

/// Three-way decision from the two student probabilities and their
/// thresholds. Rules, first match wins:
///
/// 1. good at/above threshold, bad below: positive
/// 2. bad at/above threshold, good below: negative
/// 3. both at/above: the larger margin over its threshold wins, ties positive
/// 4. both below: negative if `b > g`, otherwise neutral
///
/// Margins that differ only by rounding (within [`MARGIN_TIE_EPS`]) count
/// as a tie.
pub fn infer_sentiment(g: f64, b: f64, tau_g: f64, tau_b: f64) -> SentimentLabel {
    let good_hit = g >= tau_g;
    let bad_hit = b >= tau_b;
    match (good_hit, bad_hit) {
        (true, false) => SentimentLabel::Positive,
        (false, true) => SentimentLabel::Negative,
        (true, true) => {
            if (g - tau_g) - (b - tau_b) >= -MARGIN_TIE_EPS {
                SentimentLabel::Positive
            } else {
                SentimentLabel::Negative
            }
        }
        (false, false) => {
            if b > g {
                SentimentLabel::Negative
            } else {
                SentimentLabel::Neutral
            }
        }
    }
}

pub const MARGIN_TIE_EPS: f64 = 1e-12;

fn mean_probability(preds: &[f64], which: &str) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::input(format!("no {which} predictions to record a threshold from")));
    }
    Ok((preds.iter().sum::<f64>() / preds.len() as f64).clamp(0.0, 1.0))
}

/// Sets each side's threshold to the mean of its students' predictions on
/// perturbed memes.
pub fn record_thresholds(mut state: CtmState, disturbed_good: &[f64], disturbed_bad: &[f64]) -> Result<CtmState> {
    state.tau_good = mean_probability(disturbed_good, "good-student")?;
    state.tau_bad = mean_probability(disturbed_bad, "bad-student")?;
    Ok(state)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_t: f64,
    pub l_dst: f64,
    pub l_s: f64,
    pub l_cfd: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(l_t: f64, l_dst: f64, l_s: f64, l_cfd: f64) -> Self {
        Self {
            l_t,
            l_dst,
            l_s,
            l_cfd,
            total: l_t + l_dst + l_s + l_cfd,
        }
    }

    pub fn add(&self, other: &LossBreakdown) -> Self {
        Self::new(
            self.l_t + other.l_t,
            self.l_dst + other.l_dst,
            self.l_s + other.l_s,
            self.l_cfd + other.l_cfd,
        )
    }

    pub fn scale(&self, w: f64) -> Self {
        Self::new(self.l_t * w, self.l_dst * w, self.l_s * w, self.l_cfd * w)
    }

    /// Name of the first non-finite term, if any.
    pub fn non_finite_term(&self) -> Option<&'static str> {
        [
            ("l_t", self.l_t),
            ("l_dst", self.l_dst),
            ("l_s", self.l_s),
            ("l_cfd", self.l_cfd),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}
