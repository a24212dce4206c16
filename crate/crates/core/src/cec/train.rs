//! Mini-batch training of the cascaded emotion classifier.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{batch_pass, CecState, CecTerms};
use super::CecLossBreakdown;
use crate::dataset::EncodedSample;
use crate::embedding::hash::derive_seed;
use crate::error::{Error, Result};
use crate::nn::{OptimizerKind, ParamOptimizer};

#[derive(Debug, Clone)]
pub struct CecTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub fusion_width: usize,
    pub head_hidden: usize,
    /// Feed the scale predictions into the presence head.
    pub cascade: bool,
}

impl Default for CecTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            fusion_width: 256,
            head_hidden: 128,
            cascade: true,
        }
    }
}

impl CecTrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.fusion_width == 0 || self.head_hidden == 0 {
            return Err(Error::config("batch_size, fusion_width and head_hidden must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CecTrainOutcome {
    pub state: CecState,
    /// Mean per-sample loss of each epoch, computed before each batch update.
    pub history: Vec<CecLossBreakdown>,
}

/// Trains all modules jointly on `L_B + L_C`. The returned state is rounded
/// to `f32` precision.
pub fn train_cec(samples: &[EncodedSample], cfg: &CecTrainConfig) -> Result<CecTrainOutcome> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::input("no training samples"));
    }
    let input_dim = samples[0].embedding.flat_len();
    if let Some(bad) = samples.iter().find(|s| s.embedding.flat_len() != input_dim) {
        return Err(Error::config(format!(
            "sample `{}` has embedding length {}, expected {input_dim}",
            bad.meme_id,
            bad.embedding.flat_len()
        )));
    }
    let mut state = CecState::init(input_dim, cfg.fusion_width, cfg.head_hidden, cfg.cascade, cfg.seed)?;
    let mut opts: Vec<ParamOptimizer> = state
        .modules()
        .iter()
        .map(|m| ParamOptimizer::new(cfg.optimizer, cfg.learning_rate, m.params().len()))
        .collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "cec-shuffle"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut l_b, mut l_c) = (0.0, 0.0);
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &samples[i]));
            let (loss, grads) = batch_pass(&batch, &state, Some(CecTerms::ALL))?;
            let grads = grads.expect("gradients requested");
            if !loss.l_b.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    term: "l_b".into(),
                });
            }
            if !loss.l_c.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    term: "l_c".into(),
                });
            }
            l_b += loss.l_b * chunk.len() as f64;
            l_c += loss.l_c * chunk.len() as f64;
            for ((m, opt), g) in state.modules_mut().into_iter().zip(&mut opts).zip(&grads.modules) {
                opt.step(m.params_mut(), g);
            }
            if !state.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    term: "parameters".into(),
                });
            }
        }
        let n = samples.len() as f64;
        let epoch_loss = CecLossBreakdown::new(l_b / n, l_c / n);
        log::debug!("cec epoch {epoch}: total {:.6}", epoch_loss.total);
        history.push(epoch_loss);
    }
    state.quantize_f32();
    // parameters beyond f32 range count as divergence
    if !state.is_finite() {
        return Err(Error::Divergence {
            epoch: cfg.epochs.saturating_sub(1),
            term: "parameters".into(),
        });
    }
    Ok(CecTrainOutcome { state, history })
}
