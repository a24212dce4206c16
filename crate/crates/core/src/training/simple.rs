//! Single linear layer over the flattened tuple, softmax over the three
//! sentiment classes.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::EncodedSample;
use crate::embedding::hash::derive_seed;
use crate::embedding::MultiModalEmbedding;
use crate::error::{Error, Result};
use crate::labels::SentimentLabel;
use crate::nn::{softmax, Activation, Mlp, OptimizerKind, ParamOptimizer};

#[derive(Debug, Clone, PartialEq)]
pub struct LinearClassifier {
    pub layer: Mlp,
}

impl LinearClassifier {
    pub fn init(input_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "linear-init"));
        let mut layer = Mlp::init(&[input_dim, 3], Activation::Identity, &mut rng)?;
        layer.quantize_f32();
        Ok(Self { layer })
    }

    pub fn input_dim(&self) -> usize {
        self.layer.input_dim()
    }

    pub fn probs(&self, emb: &MultiModalEmbedding) -> Result<Vec<f64>> {
        if emb.flat_len() != self.input_dim() {
            return Err(Error::config(format!(
                "embedding length {} does not match model input {}",
                emb.flat_len(),
                self.input_dim()
            )));
        }
        Ok(softmax(&self.layer.predict(&emb.to_flat_f64())?))
    }

    /// Argmax over (negative, neutral, positive); ties go to the lower index.
    pub fn classify(&self, emb: &MultiModalEmbedding) -> Result<SentimentLabel> {
        let p = self.probs(emb)?;
        let mut best = 0;
        for i in 1..p.len() {
            if p[i] > p[best] {
                best = i;
            }
        }
        Ok(SentimentLabel::from_index(best).expect("three outputs"))
    }
}

pub struct LinearTrainOutcome {
    pub model: LinearClassifier,
    /// Mean cross-entropy per epoch.
    pub history: Vec<f64>,
}

pub fn train_linear(
    samples: &[EncodedSample],
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    optimizer: OptimizerKind,
    seed: u64,
) -> Result<LinearTrainOutcome> {
    if samples.is_empty() {
        return Err(Error::input("no training samples"));
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let mut model = LinearClassifier::init(samples[0].embedding.flat_len(), seed)?;
    let flat: Vec<Vec<f64>> = samples.iter().map(|s| s.embedding.to_flat_f64()).collect();
    if flat.iter().any(|x| x.len() != model.input_dim()) {
        return Err(Error::config("samples disagree on embedding length"));
    }
    let mut opt = ParamOptimizer::new(optimizer, learning_rate, model.layer.params().len());
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "linear-shuffle"));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(batch_size) {
            let mut grad = vec![0.0; model.layer.params().len()];
            let n = chunk.len() as f64;
            for &i in chunk {
                let t = model.layer.forward(&flat[i])?;
                let p = softmax(t.output());
                let y = samples[i].sentiment.index();
                total += -p[y].max(f64::MIN_POSITIVE).ln();
                let d: Vec<f64> = p
                    .iter()
                    .enumerate()
                    .map(|(j, pj)| (pj - if j == y { 1.0 } else { 0.0 }) / n)
                    .collect();
                model.layer.backward(&t, &d, &mut grad);
            }
            opt.step(model.layer.params_mut(), &grad);
            if !model.layer.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    term: "parameters".into(),
                });
            }
        }
        let mean = total / samples.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Divergence {
                epoch,
                term: "cross_entropy".into(),
            });
        }
        history.push(mean);
    }
    model.layer.quantize_f32();
    if !model.layer.is_finite() {
        return Err(Error::Divergence {
            epoch: epochs.saturating_sub(1),
            term: "parameters".into(),
        });
    }
    Ok(LinearTrainOutcome { model, history })
}
