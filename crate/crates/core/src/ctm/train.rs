//! Mini-batch training of the cooperative teaching model.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{GaussianPrior, DEFAULT_BIN_COUNT};
use super::model::{batch_forward, CtmObjective, CtmTerms, FlatSample};
use super::{record_thresholds, CtmState, LossBreakdown, PerturbationConfig, Side, SideModels};
use crate::dataset::EncodedSample;
use crate::embedding::hash::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, OptimizerKind, ParamOptimizer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// Mean of the students' perturbed predictions over the final epoch.
    Learned,
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct CtmTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub hidden: usize,
    pub perturbation: PerturbationConfig,
    pub bin_count: usize,
    pub objective: CtmObjective,
    pub thresholds: ThresholdMode,
}

impl Default for CtmTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            hidden: 128,
            perturbation: PerturbationConfig::default(),
            bin_count: DEFAULT_BIN_COUNT,
            objective: CtmObjective::Full,
            thresholds: ThresholdMode::Learned,
        }
    }
}

impl CtmTrainConfig {
    fn validate(&self) -> Result<()> {
        self.perturbation.validate()?;
        if self.batch_size == 0 || self.hidden == 0 {
            return Err(Error::config("batch_size and hidden must be positive"));
        }
        if self.bin_count < 2 {
            return Err(Error::config("bin_count must be >= 2"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if let ThresholdMode::Fixed(t) = self.thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config(format!("fixed threshold {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

impl CtmState {
    /// All-zero networks (every probability is exactly 0.5).
    pub fn zeros(input_dim: usize, hidden: usize, perturbation: PerturbationConfig, bin_count: usize) -> Result<Self> {
        let side = || -> Result<SideModels> {
            Ok(SideModels {
                teacher: Mlp::zeros(&[input_dim + 1, hidden, 1], Activation::Identity)?,
                student: Mlp::zeros(&[input_dim, hidden, 1], Activation::Identity)?,
                prior: GaussianPrior::default(),
            })
        };
        Ok(Self {
            good: side()?,
            bad: side()?,
            tau_good: 0.5,
            tau_bad: 0.5,
            perturbation,
            bin_count,
        })
    }

    /// Glorot-initialized networks, rounded to `f32` precision.
    pub fn init(
        input_dim: usize,
        hidden: usize,
        perturbation: PerturbationConfig,
        bin_count: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "ctm-init"));
        let mut side = || -> Result<SideModels> {
            Ok(SideModels {
                teacher: Mlp::init(&[input_dim + 1, hidden, 1], Activation::Identity, &mut rng)?,
                student: Mlp::init(&[input_dim, hidden, 1], Activation::Identity, &mut rng)?,
                prior: GaussianPrior::default(),
            })
        };
        let good = side()?;
        let bad = side()?;
        let mut state = Self {
            good,
            bad,
            tau_good: 0.5,
            tau_bad: 0.5,
            perturbation,
            bin_count,
        };
        state.quantize_f32();
        Ok(state)
    }
}

#[derive(Debug, Clone)]
pub struct CtmTrainOutcome {
    pub state: CtmState,
    /// Mean per-sample loss of each epoch, computed before each batch update.
    pub history: Vec<LossBreakdown>,
}

struct SideOptimizers {
    teacher: ParamOptimizer,
    student: ParamOptimizer,
    prior: ParamOptimizer,
}

/// Trains both sides jointly by minimizing the summed objective. The
/// returned state is rounded to `f32` precision.
pub fn train_ctm(samples: &[EncodedSample], cfg: &CtmTrainConfig) -> Result<CtmTrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::input("no training samples"));
    }
    let input_dim = samples[0].embedding.flat_len();
    let flat: Vec<Vec<f64>> = samples.iter().map(|s| s.embedding.to_flat_f64()).collect();
    if let Some(bad) = flat.iter().position(|x| x.len() != input_dim) {
        return Err(Error::config(format!(
            "sample `{}` has embedding length {}, expected {input_dim}",
            samples[bad].meme_id,
            flat[bad].len()
        )));
    }
    let mut state = CtmState::init(input_dim, cfg.hidden, cfg.perturbation, cfg.bin_count, cfg.seed)?;
    let mk = |m: &SideModels| SideOptimizers {
        teacher: ParamOptimizer::new(cfg.optimizer, cfg.learning_rate, m.teacher.params().len()),
        student: ParamOptimizer::new(cfg.optimizer, cfg.learning_rate, m.student.params().len()),
        prior: ParamOptimizer::new(cfg.optimizer, cfg.learning_rate, 2),
    };
    let mut opts = [mk(&state.good), mk(&state.bad)];
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "ctm-shuffle"));
    let mut noise_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.perturbation.rng_seed ^ cfg.seed, "ctm-noise"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut final_disturbed: [Vec<f64>; 2] = [Vec::new(), Vec::new()];

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let last_epoch = epoch + 1 == cfg.epochs;
        let mut epoch_loss = LossBreakdown::default();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<FlatSample<'_>> = chunk
                .iter()
                .map(|&i| FlatSample {
                    x: &flat[i],
                    sentiment: samples[i].sentiment,
                })
                .collect();
            let out = batch_forward(&batch, &state, cfg.objective, &mut noise_rng, Some(CtmTerms::ALL))?;
            if let Some(term) = out.breakdown.non_finite_term() {
                return Err(Error::Divergence {
                    epoch,
                    term: term.to_string(),
                });
            }
            epoch_loss = epoch_loss.add(&out.breakdown.scale(chunk.len() as f64));
            if last_epoch {
                for s in 0..2 {
                    final_disturbed[s].extend_from_slice(&out.disturbed[s]);
                }
            }
            let grads = out.grads.expect("requested gradients");
            for (si, side) in Side::BOTH.into_iter().enumerate() {
                let m = state.side_mut(side);
                let g = &grads[si];
                if cfg.objective == CtmObjective::Full {
                    opts[si].teacher.step(m.teacher.params_mut(), &g.teacher);
                    let mut prior = [m.prior.mean, m.prior.log_std];
                    opts[si].prior.step(&mut prior, &g.prior);
                    m.prior.mean = prior[0];
                    m.prior.log_std = prior[1];
                }
                opts[si].student.step(m.student.params_mut(), &g.student);
            }
            if !state.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    term: "parameters".into(),
                });
            }
        }
        let epoch_loss = epoch_loss.scale(1.0 / samples.len() as f64);
        log::debug!("ctm epoch {epoch}: total {:.6}", epoch_loss.total);
        history.push(epoch_loss);
    }

    state = match cfg.thresholds {
        ThresholdMode::Learned if cfg.epochs > 0 => record_thresholds(state, &final_disturbed[0], &final_disturbed[1])?,
        ThresholdMode::Learned => state,
        ThresholdMode::Fixed(t) => CtmState {
            tau_good: t,
            tau_bad: t,
            ..state
        },
    };
    state.quantize_f32();
    // parameters beyond f32 range count as divergence
    if !state.is_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs.saturating_sub(1),
            term: "parameters".into(),
        });
    }
    Ok(CtmTrainOutcome { state, history })
}
