//! Lightweight, dependency-free encoders for real images and captions.
//!
//! These are not pretrained: the image encoder is a seeded random
//! projection of an 8x8 RGB thumbnail, and the text encoder is signed
//! feature hashing over lowercase tokens. They give the CLI something to run
//! on real files; pretrained adapters plug in through [`EncoderBackend`].

use image::imageops::FilterType;

use super::hash::{fnv1a64, unit_value};
use super::{BackendDescriptor, BackendKind, EncoderBackend, MemeInput};
use crate::error::{Error, Result};

const THUMB: u32 = 8;
const PIXEL_FEATURES: usize = (THUMB * THUMB * 3) as usize;

pub struct PixelProjectionBackend {
    descriptor: BackendDescriptor,
    seed: u64,
}

impl PixelProjectionBackend {
    pub fn new(name: &str, kind: BackendKind, output_dim: usize, seed: u64) -> Self {
        Self {
            descriptor: BackendDescriptor {
                name: name.to_string(),
                kind,
                output_dim,
                deterministic: true,
                trainable: false,
            },
            seed,
        }
    }
}

impl EncoderBackend for PixelProjectionBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode(&self, input: &MemeInput<'_>) -> Result<Vec<f32>> {
        let rgb = input.image.decode()?;
        let thumb = image::imageops::resize(&rgb, THUMB, THUMB, FilterType::Triangle);
        let features: Vec<f64> = thumb
            .pixels()
            .flat_map(|p| p.0)
            .map(|c| f64::from(c) / 255.0 - 0.5)
            .collect();
        debug_assert_eq!(features.len(), PIXEL_FEATURES);
        // uniform[-1,1) has variance 1/3
        let scale = (3.0 / PIXEL_FEATURES as f64).sqrt();
        Ok((0..self.descriptor.output_dim)
            .map(|o| {
                let row = (o * PIXEL_FEATURES) as u64;
                features
                    .iter()
                    .enumerate()
                    .map(|(i, x)| x * unit_value(self.seed, "pixel-projection", row + i as u64))
                    .sum::<f64>()
                    * scale
            })
            .map(|v| v as f32)
            .collect())
    }
}

pub struct HashedTextBackend {
    descriptor: BackendDescriptor,
}

impl HashedTextBackend {
    pub fn new(name: &str, output_dim: usize) -> Self {
        Self {
            descriptor: BackendDescriptor {
                name: name.to_string(),
                kind: BackendKind::AlignedText,
                output_dim,
                deterministic: true,
                trainable: false,
            },
        }
    }
}

impl EncoderBackend for HashedTextBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn encode(&self, input: &MemeInput<'_>) -> Result<Vec<f32>> {
        let dim = self.descriptor.output_dim;
        let mut out = vec![0.0f64; dim];
        let tokens: Vec<String> = input
            .caption
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
            .collect();
        for t in &tokens {
            let h = fnv1a64(t.as_bytes());
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            out[(h % dim as u64) as usize] += sign;
        }
        let norm = (tokens.len().max(1) as f64).sqrt();
        Ok(out.into_iter().map(|v| (v / norm) as f32).collect())
    }
}

/// Looks up a built-in backend by name: `pixel-projection` (either image
/// kind) or `token-hash` (aligned text).
pub fn backend_by_name(
    name: &str,
    kind: BackendKind,
    output_dim: usize,
    seed: u64,
) -> Result<Box<dyn EncoderBackend>> {
    if output_dim == 0 {
        return Err(Error::config("backend output_dim must be positive"));
    }
    match (name, kind) {
        ("pixel-projection", BackendKind::StructuralImage) => Ok(Box::new(
            PixelProjectionBackend::new(name, kind, output_dim, seed),
        )),
        // distinct projection for the aligned slot
        ("pixel-projection", BackendKind::AlignedImage) => Ok(Box::new(
            PixelProjectionBackend::new(name, kind, output_dim, seed ^ 0xa11e_d000),
        )),
        ("token-hash", BackendKind::AlignedText) => Ok(Box::new(HashedTextBackend::new(name, output_dim))),
        _ => Err(Error::config(format!("no built-in backend `{name}` of kind {kind:?}"))),
    }
}
