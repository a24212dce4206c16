use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{clamp_prob, loss_emotion_bce, loss_scale_ce, CecLossBreakdown, ScaleLogits, BCE_EPS, PRESENCE_THRESHOLD};
use crate::dataset::EncodedSample;
use crate::embedding::hash::derive_seed;
use crate::embedding::MultiModalEmbedding;
use crate::error::{Error, Result};
use crate::labels::{Emotion, EmotionPresenceVector, EmotionScaleVector, TOTAL_SCALE_CLASSES};
use crate::nn::{sigmoid, softmax, Activation, Mlp, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct CecState {
    /// Affine map plus tanh over the flattened tuple.
    pub fusion: Mlp,
    /// Two-layer heads over `[fusing | embedding]`, in [`Emotion::ALL`] order.
    pub scale_heads: [Mlp; 4],
    /// Presence classifier. With `cascade` it reads `[scale probs | embedding]`,
    /// otherwise only the embedding.
    pub presence_head: Mlp,
    pub cascade: bool,
}

fn layout(input_dim: usize, fusion_width: usize, head_hidden: usize, cascade: bool) -> (Vec<usize>, [Vec<usize>; 4], Vec<usize>) {
    let head = |e: Emotion| vec![fusion_width + input_dim, head_hidden, e.scale_count()];
    let presence_in = if cascade { TOTAL_SCALE_CLASSES + input_dim } else { input_dim };
    (
        vec![input_dim, fusion_width],
        Emotion::ALL.map(head),
        vec![presence_in, head_hidden, 4],
    )
}

impl CecState {
    pub fn zeros(input_dim: usize, fusion_width: usize, head_hidden: usize, cascade: bool) -> Result<Self> {
        let (f, h, p) = layout(input_dim, fusion_width, head_hidden, cascade);
        let heads = [
            Mlp::zeros(&h[0], Activation::Identity)?,
            Mlp::zeros(&h[1], Activation::Identity)?,
            Mlp::zeros(&h[2], Activation::Identity)?,
            Mlp::zeros(&h[3], Activation::Identity)?,
        ];
        Ok(Self {
            fusion: Mlp::zeros(&f, Activation::Tanh)?,
            scale_heads: heads,
            presence_head: Mlp::zeros(&p, Activation::Identity)?,
            cascade,
        })
    }

    /// Glorot-initialized modules, rounded to `f32` precision.
    pub fn init(input_dim: usize, fusion_width: usize, head_hidden: usize, cascade: bool, seed: u64) -> Result<Self> {
        let (f, h, p) = layout(input_dim, fusion_width, head_hidden, cascade);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "cec-init"));
        let fusion = Mlp::init(&f, Activation::Tanh, &mut rng)?;
        let heads = [
            Mlp::init(&h[0], Activation::Identity, &mut rng)?,
            Mlp::init(&h[1], Activation::Identity, &mut rng)?,
            Mlp::init(&h[2], Activation::Identity, &mut rng)?,
            Mlp::init(&h[3], Activation::Identity, &mut rng)?,
        ];
        let presence_head = Mlp::init(&p, Activation::Identity, &mut rng)?;
        let mut state = Self {
            fusion,
            scale_heads: heads,
            presence_head,
            cascade,
        };
        state.quantize_f32();
        Ok(state)
    }

    pub fn input_dim(&self) -> usize {
        self.fusion.input_dim()
    }

    /// Fusion, the four heads, then the presence head.
    pub fn modules(&self) -> Vec<&Mlp> {
        let mut m = vec![&self.fusion];
        m.extend(self.scale_heads.iter());
        m.push(&self.presence_head);
        m
    }

    pub fn modules_mut(&mut self) -> Vec<&mut Mlp> {
        let mut m = vec![&mut self.fusion];
        m.extend(self.scale_heads.iter_mut());
        m.push(&mut self.presence_head);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.modules().iter().all(|m| m.is_finite())
    }

    pub fn quantize_f32(&mut self) {
        for m in self.modules_mut() {
            m.quantize_f32();
        }
    }

    fn check_input(&self, emb: &MultiModalEmbedding) -> Result<()> {
        if emb.flat_len() != self.input_dim() {
            return Err(Error::config(format!(
                "embedding length {} does not match model input {}",
                emb.flat_len(),
                self.input_dim()
            )));
        }
        Ok(())
    }
}

pub fn fuse(emb: &MultiModalEmbedding, fusion: &Mlp) -> Result<Vec<f64>> {
    fusion.predict(&emb.to_flat_f64())
}

pub fn scale_heads_forward(fusing: &[f64], emb: &MultiModalEmbedding, heads: &[Mlp; 4]) -> Result<ScaleLogits> {
    let mut input = fusing.to_vec();
    input.extend(emb.iter().map(f64::from));
    let mut logits: [Vec<f64>; 4] = Default::default();
    for (slot, head) in logits.iter_mut().zip(heads) {
        *slot = head.predict(&input)?;
    }
    ScaleLogits::new(logits)
}

/// Presence probabilities from the 14 scale probabilities and the
/// embedding.
pub fn cascade_forward(scale_probs: &[Vec<f64>; 4], emb: &MultiModalEmbedding, head: &Mlp) -> Result<[f64; 4]> {
    let mut input = Vec::with_capacity(TOTAL_SCALE_CLASSES + emb.flat_len());
    for (e, p) in Emotion::ALL.iter().zip(scale_probs) {
        if p.len() != e.scale_count() {
            return Err(Error::config(format!("{} probabilities have length {}", e.as_str(), p.len())));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::input(format!("{} probabilities sum to {s}", e.as_str())));
        }
        input.extend_from_slice(p);
    }
    input.extend(emb.iter().map(f64::from));
    let z = head.predict(&input)?;
    Ok([sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2]), sigmoid(z[3])])
}

struct SampleTrace {
    fusion: Trace,
    heads: Vec<Trace>,
    head_input_len: usize,
    probs: [Vec<f64>; 4],
    presence: Trace,
    presence_probs: [f64; 4],
}

fn forward_sample(x: &[f64], state: &CecState) -> Result<SampleTrace> {
    let fusion = state.fusion.forward(x)?;
    let mut head_input = fusion.output().to_vec();
    head_input.extend_from_slice(x);
    let mut heads = Vec::with_capacity(4);
    let mut probs: [Vec<f64>; 4] = Default::default();
    for (i, head) in state.scale_heads.iter().enumerate() {
        let t = head.forward(&head_input)?;
        probs[i] = softmax(t.output());
        heads.push(t);
    }
    let presence_input: Vec<f64> = if state.cascade {
        probs.iter().flatten().copied().chain(x.iter().copied()).collect()
    } else {
        x.to_vec()
    };
    let presence = state.presence_head.forward(&presence_input)?;
    let z = presence.output();
    let presence_probs = [sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2]), sigmoid(z[3])];
    Ok(SampleTrace {
        fusion,
        heads,
        head_input_len: head_input.len(),
        probs,
        presence,
        presence_probs,
    })
}

/// Scale argmax (ties to the lower scale) and presence thresholded at 0.5.
pub fn infer_cec(emb: &MultiModalEmbedding, state: &CecState) -> Result<(EmotionScaleVector, EmotionPresenceVector)> {
    state.check_input(emb)?;
    let t = forward_sample(&emb.to_flat_f64(), state)?;
    let logits = ScaleLogits::new([
        t.heads[0].output().to_vec(),
        t.heads[1].output().to_vec(),
        t.heads[2].output().to_vec(),
        t.heads[3].output().to_vec(),
    ])?;
    let presence = EmotionPresenceVector::from_array(t.presence_probs.map(|p| p >= PRESENCE_THRESHOLD));
    Ok((logits.argmax(), presence))
}

/// Which loss terms contribute to a gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CecTerms {
    pub l_b: bool,
    pub l_c: bool,
}

impl CecTerms {
    pub const ALL: CecTerms = CecTerms { l_b: true, l_c: true };
}

/// Gradients per module, ordered as [`CecState::modules`].
#[derive(Debug, Clone)]
pub struct CecGradients {
    pub modules: Vec<Vec<f64>>,
}

pub(crate) fn batch_pass(batch: &[&EncodedSample], state: &CecState, terms: Option<CecTerms>) -> Result<(CecLossBreakdown, Option<CecGradients>)> {
    if batch.is_empty() {
        return Err(Error::input("empty batch"));
    }
    let mut grads: Vec<Vec<f64>> = match terms {
        Some(_) => state.modules().iter().map(|m| vec![0.0; m.params().len()]).collect(),
        None => Vec::new(),
    };
    let n = batch.len() as f64;
    let fusion_width = state.fusion.output_dim();
    let mut logits = Vec::with_capacity(batch.len());
    let mut presence_probs = Vec::with_capacity(batch.len());
    for s in batch {
        state.check_input(&s.embedding)?;
        let x = s.embedding.to_flat_f64();
        let t = forward_sample(&x, state)?;
        // unchecked so that overflowing logits surface as a non-finite loss
        logits.push(ScaleLogits::unchecked([
            t.heads[0].output().to_vec(),
            t.heads[1].output().to_vec(),
            t.heads[2].output().to_vec(),
            t.heads[3].output().to_vec(),
        ]));
        presence_probs.push(t.presence_probs);

        let Some(terms) = terms else { continue };
        // dL/dlogit for each head
        let mut d_logits: [Vec<f64>; 4] = Default::default();
        for (i, e) in Emotion::ALL.iter().enumerate() {
            d_logits[i] = vec![0.0; e.scale_count()];
            if terms.l_c {
                let y = s.scales.get(*e) as usize;
                for (j, p) in t.probs[i].iter().enumerate() {
                    d_logits[i][j] = (p - if j == y { 1.0 } else { 0.0 }) / n;
                }
            }
        }
        if terms.l_b {
            let labels = s.presence.to_array();
            let dz: Vec<f64> = t
                .presence_probs
                .iter()
                .zip(labels)
                .map(|(&p, y)| {
                    if clamp_prob(p) != p {
                        return 0.0;
                    }
                    let dp = if y { -1.0 / p } else { 1.0 / (1.0 - p) };
                    dp * p * (1.0 - p) / n
                })
                .collect();
            let d_in = state.presence_head.backward(&t.presence, &dz, &mut grads[5]);
            if state.cascade {
                // back through each emotion's softmax
                let mut off = 0;
                for (i, p) in t.probs.iter().enumerate() {
                    let g = &d_in[off..off + p.len()];
                    let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
                    for j in 0..p.len() {
                        d_logits[i][j] += p[j] * (g[j] - dot);
                    }
                    off += p.len();
                }
            }
        }
        let mut d_fusing = vec![0.0; fusion_width];
        for (i, head) in state.scale_heads.iter().enumerate() {
            let d_in = head.backward(&t.heads[i], &d_logits[i], &mut grads[1 + i]);
            debug_assert_eq!(d_in.len(), t.head_input_len);
            for (a, b) in d_fusing.iter_mut().zip(&d_in[..fusion_width]) {
                *a += b;
            }
        }
        state.fusion.backward(&t.fusion, &d_fusing, &mut grads[0]);
    }
    let presence_labels: Vec<EmotionPresenceVector> = batch.iter().map(|s| s.presence).collect();
    let scale_labels: Vec<EmotionScaleVector> = batch.iter().map(|s| s.scales).collect();
    let l_b = loss_emotion_bce(&presence_probs, &presence_labels)?;
    let l_c = loss_scale_ce(&logits, &scale_labels)?;
    debug_assert!(BCE_EPS > 0.0);
    Ok((
        CecLossBreakdown::new(l_b, l_c),
        terms.map(|_| CecGradients { modules: grads }),
    ))
}

/// Presence and scale losses on a labeled batch. The presence head is fed
/// the model's own softmaxed scale predictions.
pub fn cec_batch_loss(batch: &[EncodedSample], state: &CecState) -> Result<CecLossBreakdown> {
    let refs: Vec<&EncodedSample> = batch.iter().collect();
    Ok(batch_pass(&refs, state, None)?.0)
}

/// Loss plus gradient of the selected terms with respect to every module.
pub fn cec_batch_gradients(batch: &[EncodedSample], state: &CecState, terms: CecTerms) -> Result<(CecLossBreakdown, CecGradients)> {
    let refs: Vec<&EncodedSample> = batch.iter().collect();
    let (loss, grads) = batch_pass(&refs, state, Some(terms))?;
    Ok((loss, grads.expect("gradients requested")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb() -> MultiModalEmbedding {
        MultiModalEmbedding::new(vec![0.2, -0.7, 1.1], vec![0.5, 0.0], vec![-0.3, 0.9]).unwrap()
    }

    #[test]
    fn zeroed_state_outputs() {
        let state = CecState::zeros(7, 6, 5, true).unwrap();
        let e = emb();
        let f = fuse(&e, &state.fusion).unwrap();
        assert_eq!(f, vec![0.0; 6]);
        let logits = scale_heads_forward(&f, &e, &state.scale_heads).unwrap();
        let probs = logits.probs();
        assert_eq!(probs[0], vec![0.25; 4]);
        assert_eq!(probs[3], vec![0.5; 2]);
        let presence = cascade_forward(&probs, &e, &state.presence_head).unwrap();
        assert_eq!(presence, [0.5; 4]);
    }

    #[test]
    fn shapes_follow_configuration() {
        let state = CecState::init(7, 9, 5, true, 1).unwrap();
        let e = emb();
        let f = fuse(&e, &state.fusion).unwrap();
        assert_eq!(f.len(), 9);
        let l = scale_heads_forward(&f, &e, &state.scale_heads).unwrap();
        let lens: Vec<usize> = Emotion::ALL.iter().map(|&x| l.get(x).len()).collect();
        assert_eq!(lens, vec![4, 4, 4, 2]);
        assert_eq!(state.presence_head.input_dim(), 14 + 7);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let state = CecState::init(5, 4, 3, true, 1).unwrap();
        assert!(matches!(infer_cec(&emb(), &state), Err(Error::Config(_))));
    }

    #[test]
    fn cascade_rejects_unnormalized_probs() {
        let state = CecState::zeros(7, 4, 3, true).unwrap();
        let bad = [vec![0.5; 4], vec![0.25; 4], vec![0.25; 4], vec![0.5; 2]];
        assert!(cascade_forward(&bad, &emb(), &state.presence_head).is_err());
    }
}
