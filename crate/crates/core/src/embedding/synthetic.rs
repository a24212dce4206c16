//! Label-conditioned synthetic embeddings.
//!
//! Every label attribute (the sentiment, and each emotion's scale) owns an
//! offset vector drawn uniformly from the unit ball of the flattened tuple
//! space. A profile's cluster center is the sum of its attribute offsets, so
//! distinct profiles get distinct centers and every label stays linearly
//! decodable. Each meme adds a hash-derived jitter of norm at most `jitter`.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::hash::{derive_seed, unit_value};
use super::{BackendDescriptor, BackendKind, EncoderBackend, MemeInput, MultiModalEmbedding};
use crate::error::{Error, Result};
use crate::labels::{Emotion, EmotionScaleVector, SentimentLabel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelProfile {
    pub sentiment: SentimentLabel,
    pub scales: EmotionScaleVector,
}

/// Uniform draw from the unit ball in `dim` dimensions.
fn unit_ball(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let radius = rng.random::<f64>().powf(1.0 / dim as f64);
    v.iter_mut().for_each(|x| *x *= radius / norm);
    v
}

fn offset(seed: u64, tag: &str, dim: usize) -> Vec<f64> {
    unit_ball(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, tag)), dim)
}

#[derive(Debug, Clone)]
pub struct SyntheticSpace {
    seed: u64,
    structural_dim: usize,
    aligned_dim: usize,
    jitter: f64,
    sentiment_offsets: Vec<Vec<f64>>,
    scale_offsets: Vec<Vec<Vec<f64>>>,
}

impl SyntheticSpace {
    pub fn new(seed: u64, dims: (usize, usize), jitter: f64) -> Result<Self> {
        let (ds, da) = dims;
        if ds == 0 || da == 0 {
            return Err(Error::config("synthetic dims must be positive"));
        }
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(Error::config(format!("jitter must be finite and >= 0, got {jitter}")));
        }
        let dim = ds + 2 * da;
        let sentiment_offsets = SentimentLabel::ALL
            .iter()
            .map(|s| offset(seed, &format!("center/sentiment/{}", s.as_str()), dim))
            .collect();
        let scale_offsets = Emotion::ALL
            .iter()
            .map(|e| {
                (0..e.scale_count())
                    .map(|k| offset(seed, &format!("center/{}/{k}", e.as_str()), dim))
                    .collect()
            })
            .collect();
        Ok(Self {
            seed,
            structural_dim: ds,
            aligned_dim: da,
            jitter,
            sentiment_offsets,
            scale_offsets,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.structural_dim, self.aligned_dim)
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn flat_dim(&self) -> usize {
        self.structural_dim + 2 * self.aligned_dim
    }

    pub fn center(&self, profile: &LabelProfile) -> Vec<f64> {
        let mut c = self.sentiment_offsets[profile.sentiment.index()].clone();
        for (e, scale) in Emotion::ALL.iter().zip(profile.scales.to_array()) {
            let off = &self.scale_offsets[*e as usize][scale as usize];
            c.iter_mut().zip(off).for_each(|(a, b)| *a += b);
        }
        c
    }

    /// Per-meme displacement, norm at most `jitter`.
    pub fn jitter_vector(&self, meme_id: &str) -> Vec<f64> {
        let dim = self.flat_dim();
        if self.jitter == 0.0 {
            return vec![0.0; dim];
        }
        let h: Vec<f64> = (0..dim as u64).map(|i| unit_value(self.seed, meme_id, i)).collect();
        let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        let radius = 0.5 * (unit_value(self.seed, meme_id, dim as u64) + 1.0);
        h.iter().map(|x| x * self.jitter * radius / norm).collect()
    }

    pub fn encode(&self, meme_id: &str, profile: &LabelProfile) -> MultiModalEmbedding {
        let flat: Vec<f32> = self
            .center(profile)
            .iter()
            .zip(self.jitter_vector(meme_id))
            .map(|(c, j)| (c + j) as f32)
            .collect();
        MultiModalEmbedding::from_flat(&flat, self.structural_dim, self.aligned_dim)
            .expect("synthetic values are finite and shaped by construction")
    }

    /// Smallest pairwise distance between the centers of the given
    /// profiles; errors when it does not exceed four times the jitter.
    pub fn check_separation(&self, profiles: &[LabelProfile]) -> Result<f64> {
        let mut distinct = profiles.to_vec();
        distinct.sort();
        distinct.dedup();
        let centers: Vec<Vec<f64>> = distinct.iter().map(|p| self.center(p)).collect();
        let mut min = f64::INFINITY;
        for i in 0..centers.len() {
            for j in i + 1..centers.len() {
                let d = centers[i]
                    .iter()
                    .zip(&centers[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                min = min.min(d);
            }
        }
        if centers.len() >= 2 && min <= 4.0 * self.jitter {
            return Err(Error::config(format!(
                "cluster centers too close: min distance {min:.4} <= 4 x jitter {}",
                self.jitter
            )));
        }
        Ok(min)
    }
}

/// One-shot form of [`SyntheticSpace::encode`].
pub fn synthetic_encode(
    meme_id: &str,
    profile: &LabelProfile,
    seed: u64,
    dims: (usize, usize),
    jitter: f64,
) -> Result<MultiModalEmbedding> {
    Ok(SyntheticSpace::new(seed, dims, jitter)?.encode(meme_id, profile))
}

/// Backend that fills the whole tuple. Memes with a registered profile get
/// their cluster embedding; any other meme gets pure hash values
/// `unit_value(seed, meme_id, i)` for flat component `i`. Captions and
/// pixels are ignored.
pub struct SyntheticBackend {
    descriptor: BackendDescriptor,
    space: SyntheticSpace,
    profiles: HashMap<String, LabelProfile>,
}

impl SyntheticBackend {
    pub fn new(seed: u64, dims: (usize, usize), jitter: f64) -> Result<Self> {
        let space = SyntheticSpace::new(seed, dims, jitter)?;
        Ok(Self {
            descriptor: BackendDescriptor {
                name: "synthetic".into(),
                kind: BackendKind::Synthetic,
                output_dim: dims.0 + 2 * dims.1,
                deterministic: true,
                trainable: false,
            },
            space,
            profiles: HashMap::new(),
        })
    }

    pub fn with_profiles(mut self, profiles: impl IntoIterator<Item = (String, LabelProfile)>) -> Self {
        self.profiles.extend(profiles);
        self
    }
}

impl EncoderBackend for SyntheticBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode(&self, input: &MemeInput<'_>) -> Result<Vec<f32>> {
        if let Some(p) = self.profiles.get(input.meme_id) {
            return Ok(self.space.encode(input.meme_id, p).iter().collect());
        }
        Ok((0..self.descriptor.output_dim as u64)
            .map(|i| unit_value(self.space.seed, input.meme_id, i) as f32)
            .collect())
    }

    fn tuple_dims(&self) -> Option<(usize, usize)> {
        Some(self.space.dims())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(s: SentimentLabel, scales: [u8; 4]) -> LabelProfile {
        LabelProfile {
            sentiment: s,
            scales: EmotionScaleVector::from_array(scales).unwrap(),
        }
    }

    fn dist(a: &MultiModalEmbedding, b: &MultiModalEmbedding) -> f64 {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| f64::from(x - y).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    #[test]
    fn deterministic_in_arguments() {
        let p = profile(SentimentLabel::Neutral, [1, 2, 0, 1]);
        let a = synthetic_encode("m1", &p, 3, (16, 8), 0.05).unwrap();
        let b = synthetic_encode("m1", &p, 3, (16, 8), 0.05).unwrap();
        assert_eq!(a, b);
        let c = synthetic_encode("m1", &p, 4, (16, 8), 0.05).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn same_profile_differs_only_by_jitter() {
        let space = SyntheticSpace::new(0, (16, 8), 0.05).unwrap();
        let p = profile(SentimentLabel::Positive, [0, 0, 0, 0]);
        let a = space.encode("a", &p);
        let b = space.encode("b", &p);
        assert_ne!(a, b);
        assert!(dist(&a, &b) < 2.0 * 0.05 + 1e-6);
        let c: Vec<f32> = space.center(&p).iter().map(|&x| x as f32).collect();
        let c = MultiModalEmbedding::from_flat(&c, 16, 8).unwrap();
        assert!(dist(&a, &c) <= 0.05 + 1e-6);
    }

    #[test]
    fn zero_jitter_collapses_profile() {
        let space = SyntheticSpace::new(9, (4, 4), 0.0).unwrap();
        let p = profile(SentimentLabel::Negative, [3, 1, 2, 1]);
        assert_eq!(space.encode("x", &p), space.encode("y", &p));
    }

    #[test]
    fn separation_check_flags_large_jitter() {
        let ps = [
            profile(SentimentLabel::Negative, [0, 0, 0, 0]),
            profile(SentimentLabel::Positive, [0, 0, 0, 0]),
        ];
        assert!(SyntheticSpace::new(1, (8, 4), 0.05).unwrap().check_separation(&ps).is_ok());
        assert!(SyntheticSpace::new(1, (8, 4), 10.0).unwrap().check_separation(&ps).is_err());
    }
}
