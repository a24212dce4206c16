//! Multi-modal meme embeddings.
//!
//! A meme is encoded into a tuple of three vectors: a structural image
//! vector, plus an image vector and a caption vector that live in a shared
//! (aligned) space. Encoders are pluggable [`EncoderBackend`]s; the
//! [`SyntheticBackend`] stands in for all three when no pretrained models
//! are available, and [`synthetic`] builds label-conditioned clusters for
//! desk-scale experiments.

pub mod builtin;
pub mod cache;
pub mod hash;
pub mod synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use builtin::{backend_by_name, HashedTextBackend, PixelProjectionBackend};
pub use cache::EmbeddingCache;
pub use synthetic::{synthetic_encode, LabelProfile, SyntheticBackend, SyntheticSpace};

/// The three encoder outputs for one meme. Aligned vectors are kept exactly
/// as the backend produced them (no normalization).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiModalEmbedding {
    structural_image: Vec<f32>,
    aligned_image: Vec<f32>,
    aligned_text: Vec<f32>,
}

impl MultiModalEmbedding {
    pub fn new(structural_image: Vec<f32>, aligned_image: Vec<f32>, aligned_text: Vec<f32>) -> Result<Self> {
        if structural_image.is_empty() || aligned_image.is_empty() {
            return Err(Error::config("embedding dimensions must be at least 1"));
        }
        if aligned_image.len() != aligned_text.len() {
            return Err(Error::config(format!(
                "aligned image dim {} != aligned text dim {}",
                aligned_image.len(),
                aligned_text.len()
            )));
        }
        let all = structural_image.iter().chain(&aligned_image).chain(&aligned_text);
        if let Some(pos) = all.clone().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("non-finite embedding component at index {pos}")));
        }
        Ok(Self {
            structural_image,
            aligned_image,
            aligned_text,
        })
    }

    /// Splits a flat `[structural | aligned image | aligned text]` vector.
    pub fn from_flat(flat: &[f32], structural_dim: usize, aligned_dim: usize) -> Result<Self> {
        if flat.len() != structural_dim + 2 * aligned_dim {
            return Err(Error::config(format!(
                "flat length {} does not match dims ({structural_dim}, {aligned_dim})",
                flat.len()
            )));
        }
        let (s, rest) = flat.split_at(structural_dim);
        let (a, t) = rest.split_at(aligned_dim);
        Self::new(s.to_vec(), a.to_vec(), t.to_vec())
    }

    pub fn structural_image(&self) -> &[f32] {
        &self.structural_image
    }

    pub fn aligned_image(&self) -> &[f32] {
        &self.aligned_image
    }

    pub fn aligned_text(&self) -> &[f32] {
        &self.aligned_text
    }

    /// `(D_s, D_a)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.structural_image.len(), self.aligned_image.len())
    }

    pub fn flat_len(&self) -> usize {
        self.structural_image.len() + 2 * self.aligned_image.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = f32> + '_ {
        self.structural_image
            .iter()
            .chain(&self.aligned_image)
            .chain(&self.aligned_text)
            .copied()
    }

    pub fn to_flat_f64(&self) -> Vec<f64> {
        self.iter().map(f64::from).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    StructuralImage,
    AlignedImage,
    AlignedText,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    pub kind: BackendKind,
    pub output_dim: usize,
    pub deterministic: bool,
    /// Whether downstream training may update the encoder. Only recorded;
    /// the built-in backends are all frozen.
    pub trainable: bool,
}

/// Opaque handle to the image half of a meme.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ImageRef {
    Path(PathBuf),
    Bytes(Vec<u8>),
    /// No pixels available; only meaningful for the synthetic backend.
    Absent,
}

impl ImageRef {
    /// Decodes the image into RGB8 pixels.
    pub fn decode(&self) -> Result<image::RgbImage> {
        let img = match self {
            ImageRef::Path(p) => image::open(p)
                .map_err(|e| Error::input(format!("cannot decode image {}: {e}", p.display())))?,
            ImageRef::Bytes(b) => image::load_from_memory(b)
                .map_err(|e| Error::input(format!("cannot decode image bytes: {e}")))?,
            ImageRef::Absent => return Err(Error::input("no image supplied")),
        };
        Ok(img.to_rgb8())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MemeInput<'a> {
    pub meme_id: &'a str,
    pub image: &'a ImageRef,
    pub caption: &'a str,
}

/// An encoder producing one vector of the embedding tuple (or, for a
/// synthetic backend, the whole flattened tuple).
pub trait EncoderBackend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    fn encode(&self, input: &MemeInput<'_>) -> Result<Vec<f32>>;

    /// `(D_s, D_a)` for a backend that fills the whole tuple.
    fn tuple_dims(&self) -> Option<(usize, usize)> {
        None
    }
}

/// A validated set of backends: either one per tuple slot, or a single
/// synthetic backend covering all three.
pub enum BackendSet {
    Separate {
        structural_image: Box<dyn EncoderBackend>,
        aligned_image: Box<dyn EncoderBackend>,
        aligned_text: Box<dyn EncoderBackend>,
    },
    Synthetic(Box<dyn EncoderBackend>),
}

impl BackendSet {
    pub fn new(backends: Vec<Box<dyn EncoderBackend>>) -> Result<Self> {
        let mut slots: [Option<Box<dyn EncoderBackend>>; 3] = [None, None, None];
        let mut synthetic = None;
        for b in backends {
            let slot = match b.descriptor().kind {
                BackendKind::StructuralImage => 0,
                BackendKind::AlignedImage => 1,
                BackendKind::AlignedText => 2,
                BackendKind::Synthetic => {
                    if synthetic.is_some() {
                        return Err(Error::config("more than one synthetic backend"));
                    }
                    if b.tuple_dims().is_none() {
                        return Err(Error::config("synthetic backend must report tuple dims"));
                    }
                    synthetic = Some(b);
                    continue;
                }
            };
            if slots[slot].is_some() {
                return Err(Error::config(format!(
                    "duplicate backend kind {:?}",
                    b.descriptor().kind
                )));
            }
            slots[slot] = Some(b);
        }
        match (synthetic, slots) {
            (Some(s), [None, None, None]) => Ok(BackendSet::Synthetic(s)),
            (Some(_), _) => Err(Error::config("synthetic backend cannot be mixed with others")),
            (None, [Some(s), Some(a), Some(t)]) => {
                if a.descriptor().output_dim != t.descriptor().output_dim {
                    return Err(Error::config(format!(
                        "aligned backends disagree on dimension: image {} vs text {}",
                        a.descriptor().output_dim,
                        t.descriptor().output_dim
                    )));
                }
                if s.descriptor().output_dim == 0 || a.descriptor().output_dim == 0 {
                    return Err(Error::config("backend output_dim must be positive"));
                }
                Ok(BackendSet::Separate {
                    structural_image: s,
                    aligned_image: a,
                    aligned_text: t,
                })
            }
            (None, _) => Err(Error::config(
                "backend set needs one structural_image, aligned_image and aligned_text backend",
            )),
        }
    }

    /// `(D_s, D_a)` produced by this set.
    pub fn dims(&self) -> (usize, usize) {
        match self {
            BackendSet::Separate {
                structural_image,
                aligned_image,
                ..
            } => (
                structural_image.descriptor().output_dim,
                aligned_image.descriptor().output_dim,
            ),
            BackendSet::Synthetic(b) => b.tuple_dims().expect("checked in BackendSet::new"),
        }
    }

    pub fn descriptors(&self) -> Vec<&BackendDescriptor> {
        match self {
            BackendSet::Separate {
                structural_image,
                aligned_image,
                aligned_text,
            } => vec![
                structural_image.descriptor(),
                aligned_image.descriptor(),
                aligned_text.descriptor(),
            ],
            BackendSet::Synthetic(b) => vec![b.descriptor()],
        }
    }
}

fn check_len(out: &[f32], backend: &dyn EncoderBackend, expected: usize) -> Result<()> {
    if out.len() != expected {
        return Err(Error::config(format!(
            "backend `{}` produced {} values, descriptor says {expected}",
            backend.descriptor().name,
            out.len()
        )));
    }
    Ok(())
}

/// Encodes one meme with the given backends.
pub fn encode_meme(input: &MemeInput<'_>, backends: &BackendSet) -> Result<MultiModalEmbedding> {
    match backends {
        BackendSet::Separate {
            structural_image,
            aligned_image,
            aligned_text,
        } => {
            let s = structural_image.encode(input)?;
            check_len(&s, structural_image.as_ref(), structural_image.descriptor().output_dim)?;
            let a = aligned_image.encode(input)?;
            check_len(&a, aligned_image.as_ref(), aligned_image.descriptor().output_dim)?;
            let t = aligned_text.encode(input)?;
            check_len(&t, aligned_text.as_ref(), aligned_text.descriptor().output_dim)?;
            MultiModalEmbedding::new(s, a, t)
        }
        BackendSet::Synthetic(b) => {
            let (ds, da) = backends.dims();
            let flat = b.encode(input)?;
            check_len(&flat, b.as_ref(), ds + 2 * da)?;
            MultiModalEmbedding::from_flat(&flat, ds, da)
        }
    }
}
