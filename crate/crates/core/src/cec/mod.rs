//! Cascaded emotion classifier.
//!
//! A fusion layer maps the flattened embedding tuple to a fusing vector.
//! Four heads, one per emotion, read `[fusing | embedding]` and predict the
//! emotion's intensity. The cascade head then reads the softmaxed intensity
//! predictions (14 values) next to the embedding and predicts presence of
//! each emotion.

mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Emotion, EmotionPresenceVector, EmotionScaleVector};
use crate::nn::{log_sum_exp, softmax};

pub use model::{
    cascade_forward, cec_batch_gradients, cec_batch_loss, fuse, infer_cec, scale_heads_forward, CecGradients,
    CecState, CecTerms,
};
pub use train::{train_cec, CecTrainConfig, CecTrainOutcome};

/// Probabilities are clamped to `[BCE_EPS, 1 - BCE_EPS]` inside cross-entropy.
pub const BCE_EPS: f64 = crate::ctm::losses::BCE_EPS;
pub const PRESENCE_THRESHOLD: f64 = 0.5;

/// Raw head outputs, one logit vector per emotion with lengths (4, 4, 4, 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleLogits {
    logits: [Vec<f64>; 4],
}

impl ScaleLogits {
    pub fn new(logits: [Vec<f64>; 4]) -> Result<Self> {
        for (e, l) in Emotion::ALL.iter().zip(&logits) {
            if l.len() != e.scale_count() {
                return Err(Error::config(format!(
                    "{} logits have length {}, expected {}",
                    e.as_str(),
                    l.len(),
                    e.scale_count()
                )));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("non-finite {} logit", e.as_str())));
            }
        }
        Ok(Self { logits })
    }

    /// Skips validation; lengths must already follow the head layout.
    pub(crate) fn unchecked(logits: [Vec<f64>; 4]) -> Self {
        Self { logits }
    }

    pub fn get(&self, e: Emotion) -> &[f64] {
        &self.logits[e as usize]
    }

    pub fn probs(&self) -> [Vec<f64>; 4] {
        self.logits.clone().map(|l| softmax(&l))
    }

    /// Per-emotion argmax; ties go to the lower scale.
    pub fn argmax(&self) -> EmotionScaleVector {
        let pick = |l: &[f64]| -> u8 {
            let mut best = 0;
            for (i, v) in l.iter().enumerate() {
                if *v > l[best] {
                    best = i;
                }
            }
            best as u8
        };
        EmotionScaleVector::from_array(self.logits.each_ref().map(|l| pick(l)))
            .expect("head lengths bound the argmax")
    }
}

pub fn presence_from_scales(scales: &EmotionScaleVector) -> EmotionPresenceVector {
    EmotionPresenceVector::from_array(scales.to_array().map(|s| s > 0))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CecLossBreakdown {
    pub l_b: f64,
    pub l_c: f64,
    pub total: f64,
}

impl CecLossBreakdown {
    pub fn new(l_b: f64, l_c: f64) -> Self {
        Self {
            l_b,
            l_c,
            total: l_b + l_c,
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(BCE_EPS, 1.0 - BCE_EPS)
}

/// Binary cross-entropy summed over the four emotions, averaged over
/// samples.
pub fn loss_emotion_bce(presence_probs: &[[f64; 4]], labels: &[EmotionPresenceVector]) -> Result<f64> {
    if presence_probs.len() != labels.len() {
        return Err(Error::input(format!(
            "presence loss: {} predictions vs {} labels",
            presence_probs.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::input("presence loss: empty batch"));
    }
    let sum: f64 = presence_probs
        .iter()
        .zip(labels)
        .flat_map(|(p, y)| p.iter().zip(y.to_array()))
        .map(|(&p, y)| {
            let p = clamp_prob(p);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / labels.len() as f64)
}

/// Softmax cross-entropy per emotion, summed over emotions and averaged
/// over samples.
pub fn loss_scale_ce(logits: &[ScaleLogits], labels: &[EmotionScaleVector]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::input(format!(
            "scale loss: {} predictions vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(Error::input("scale loss: empty batch"));
    }
    let mut sum = 0.0;
    for (l, y) in logits.iter().zip(labels) {
        for e in Emotion::ALL {
            let target = y.get(e) as usize;
            if target >= e.scale_count() {
                return Err(Error::input(format!(
                    "{} label {target} outside 0..{}",
                    e.as_str(),
                    e.scale_count()
                )));
            }
            let z = l.get(e);
            sum += log_sum_exp(z) - z[target];
        }
    }
    Ok(sum / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presence_transform() {
        let zero = EmotionScaleVector::default();
        assert_eq!(presence_from_scales(&zero), EmotionPresenceVector::default());
        let very_offensive = EmotionScaleVector::new(0, 0, 2, 0).unwrap();
        assert!(presence_from_scales(&very_offensive).offensive);
        let s = EmotionScaleVector::new(1, 0, 3, 1).unwrap();
        assert_eq!(presence_from_scales(&s).to_array(), [true, false, true, true]);
    }

    #[test]
    fn uniform_losses() {
        let labels = vec![EmotionPresenceVector::from_array([true, false, true, false])];
        let b = loss_emotion_bce(&[[0.5; 4]], &labels).unwrap();
        assert!((b - 4.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let zeros = ScaleLogits::new([vec![0.0; 4], vec![0.0; 4], vec![0.0; 4], vec![0.0; 2]]).unwrap();
        let c = loss_scale_ce(&[zeros], &[EmotionScaleVector::new(3, 0, 1, 1).unwrap()]).unwrap();
        assert!((c - (3.0 * 4f64.ln() + 2f64.ln())).abs() < 1e-12);
        assert!((c - 4.8520).abs() < 1e-4);
    }

    #[test]
    fn saturated_correct_predictions_near_zero() {
        let labels = vec![EmotionPresenceVector::from_array([true, false, true, false])];
        let b = loss_emotion_bce(&[[1.0, 0.0, 1.0, 0.0]], &labels).unwrap();
        assert!(b < 1e-6);
        let y = EmotionScaleVector::new(2, 0, 3, 1).unwrap();
        let hot = |k: usize, n: usize| (0..n).map(|i| if i == k { 60.0 } else { -60.0 }).collect::<Vec<_>>();
        let l = ScaleLogits::new([hot(2, 4), hot(0, 4), hot(3, 4), hot(1, 2)]).unwrap();
        assert!(loss_scale_ce(&[l], &[y]).unwrap() < 1e-12);
    }

    #[test]
    fn argmax_tie_goes_low() {
        let l = ScaleLogits::new([vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 2.0, 2.0, 0.0], vec![0.0; 4], vec![3.0, 3.0]]).unwrap();
        assert_eq!(l.argmax().to_array(), [0, 1, 0, 0]);
    }

    #[test]
    fn loss_errors() {
        assert!(loss_emotion_bce(&[[0.5; 4]], &[]).is_err());
        let zeros = ScaleLogits::new([vec![0.0; 4], vec![0.0; 4], vec![0.0; 4], vec![0.0; 2]]).unwrap();
        let bad = EmotionScaleVector {
            motivational: 3,
            ..Default::default()
        };
        assert!(matches!(loss_scale_ce(&[zeros], &[bad]), Err(Error::Input(_))));
        assert!(ScaleLogits::new([vec![0.0; 4], vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]]).is_err());
    }
}
