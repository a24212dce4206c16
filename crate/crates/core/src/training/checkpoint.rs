//! Binary checkpoints.
//!
//! Layout: magic `MMCK`, version byte, model type tag byte, entry count
//! (u32), entries, then an FNV-1a 64 checksum of everything before it. An
//! entry is a u16 name length, the UTF-8 name, a kind byte, a u32 element
//! count and the little-endian payload. Reals are stored as `f32`; trained
//! states are already rounded to that precision, so loading is exact.

use std::fs;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::simple::LinearClassifier;
use crate::cec::CecState;
use crate::ctm::{CtmState, GaussianPrior, PerturbationConfig, Side, SideModels};
use crate::embedding::cache::write_atomic;
use crate::embedding::hash::fnv1a64;
use crate::embedding::{backend_by_name, BackendKind, BackendSet, SyntheticBackend};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

const MAGIC: &[u8; 4] = b"MMCK";
const VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ctm = 1,
    Cec = 2,
    Linear = 3,
}

impl ModelKind {
    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(ModelKind::Ctm),
            2 => Some(ModelKind::Cec),
            3 => Some(ModelKind::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Ctm(CtmState),
    Cec(CecState),
    Linear(LinearClassifier),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Ctm(_) => ModelKind::Ctm,
            TrainedModel::Cec(_) => ModelKind::Cec,
            TrainedModel::Linear(_) => ModelKind::Linear,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Ctm(s) => s.input_dim(),
            TrainedModel::Cec(s) => s.input_dim(),
            TrainedModel::Linear(m) => m.input_dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    /// Label-conditioned clusters; unseen memes get hash values.
    Synthetic,
    /// Pixel projections for both image slots and token hashing for text.
    Builtin,
}

/// How embeddings for the model were produced, so new memes can be encoded
/// the same way at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    pub d_s: usize,
    pub d_a: usize,
    pub jitter: f64,
    pub seed: u64,
}

impl EncoderSpec {
    pub fn backend_set(&self) -> Result<BackendSet> {
        match self.kind {
            EncoderKind::Synthetic => BackendSet::new(vec![Box::new(SyntheticBackend::new(
                self.seed,
                (self.d_s, self.d_a),
                self.jitter,
            )?)]),
            EncoderKind::Builtin => BackendSet::new(vec![
                backend_by_name("pixel-projection", BackendKind::StructuralImage, self.d_s, self.seed)?,
                backend_by_name("pixel-projection", BackendKind::AlignedImage, self.d_a, self.seed)?,
                backend_by_name("token-hash", BackendKind::AlignedText, self.d_a, self.seed)?,
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: TrainedModel,
    pub encoder: EncoderSpec,
}

enum Value {
    F32(Vec<f32>),
    U64(Vec<u64>),
    U32(Vec<u32>),
    Bytes(Vec<u8>),
}

impl Value {
    fn kind(&self) -> u8 {
        match self {
            Value::F32(_) => 0,
            Value::U64(_) => 1,
            Value::U32(_) => 2,
            Value::Bytes(_) => 3,
        }
    }
}

struct Writer {
    entries: Vec<(String, Value)>,
}

impl Writer {
    fn f32s(&mut self, name: &str, v: &[f64]) {
        self.entries.push((name.into(), Value::F32(v.iter().map(|&x| x as f32).collect())));
    }

    fn u64(&mut self, name: &str, v: u64) {
        self.entries.push((name.into(), Value::U64(vec![v])));
    }

    fn bytes(&mut self, name: &str, v: &[u8]) {
        self.entries.push((name.into(), Value::Bytes(v.to_vec())));
    }

    fn mlp(&mut self, name: &str, m: &Mlp) {
        let dims = m.dims().iter().map(|&d| d as u32).collect();
        self.entries.push((format!("{name}.dims"), Value::U32(dims)));
        self.f32s(&format!("{name}.params"), m.params());
    }

    fn finish(self, kind: ModelKind) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.push(kind as u8);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, value) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(value.kind());
            match value {
                Value::F32(v) => {
                    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Value::U64(v) => {
                    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Value::U32(v) => {
                    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
                }
                Value::Bytes(v) => {
                    out.extend_from_slice(&(v.len() as u32).to_le_bytes());
                    out.extend_from_slice(v);
                }
            }
        }
        let sum = fnv1a64(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::integrity(self.pos as u64, "unexpected end of checkpoint"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

struct Entries {
    map: IndexMap<String, Value>,
    end: u64,
}

impl Entries {
    fn missing(&self, name: &str, what: &str) -> Error {
        Error::integrity(self.end, format!("entry `{name}` missing or not {what}"))
    }

    fn f32s(&self, name: &str) -> Result<Vec<f64>> {
        match self.map.get(name) {
            Some(Value::F32(v)) => Ok(v.iter().map(|&x| x as f64).collect()),
            _ => Err(self.missing(name, "f32 data")),
        }
    }

    fn f64(&self, name: &str) -> Result<f64> {
        let v = self.f32s(name)?;
        match v.as_slice() {
            [x] => Ok(*x),
            _ => Err(self.missing(name, "a scalar")),
        }
    }

    fn u64(&self, name: &str) -> Result<u64> {
        match self.map.get(name) {
            Some(Value::U64(v)) if v.len() == 1 => Ok(v[0]),
            _ => Err(self.missing(name, "a u64 scalar")),
        }
    }

    fn bytes(&self, name: &str) -> Result<&[u8]> {
        match self.map.get(name) {
            Some(Value::Bytes(v)) => Ok(v),
            _ => Err(self.missing(name, "bytes")),
        }
    }

    fn mlp(&self, name: &str, act: Activation) -> Result<Mlp> {
        let dims = match self.map.get(&format!("{name}.dims")) {
            Some(Value::U32(v)) => v.iter().map(|&d| d as usize).collect::<Vec<_>>(),
            _ => return Err(self.missing(&format!("{name}.dims"), "u32 data")),
        };
        let params = self.f32s(&format!("{name}.params"))?;
        Mlp::from_params(&dims, act, params)
            .map_err(|e| Error::integrity(self.end, format!("module `{name}`: {e}")))
    }
}

fn parse(bytes: &[u8]) -> Result<(ModelKind, Entries)> {
    const HEADER: usize = 4 + 1 + 1 + 4;
    if bytes.len() < HEADER + 8 {
        return Err(Error::integrity(bytes.len() as u64, "checkpoint truncated"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::integrity(0, "bad checkpoint magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::integrity(4, format!("unsupported checkpoint version {}", bytes[4])));
    }
    let kind = ModelKind::from_tag(bytes[5])
        .ok_or_else(|| Error::integrity(5, format!("unknown model type tag {}", bytes[5])))?;
    let body_end = bytes.len() - 8;
    let stored = u64::from_le_bytes(bytes[body_end..].try_into().unwrap());
    if fnv1a64(&bytes[..body_end]) != stored {
        return Err(Error::integrity(body_end as u64, "checkpoint checksum mismatch (corrupt or truncated)"));
    }
    let mut c = Cursor {
        bytes: &bytes[..body_end],
        pos: 6,
    };
    let count = c.u32()?;
    let mut map = IndexMap::new();
    for _ in 0..count {
        let start = c.pos as u64;
        let name_len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::integrity(start, "entry name is not UTF-8"))?
            .to_string();
        let kind = c.u8()?;
        let n = c.u32()? as usize;
        let value = match kind {
            0 => Value::F32(c.take(n * 4)?.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect()),
            1 => Value::U64(c.take(n * 8)?.chunks_exact(8).map(|b| u64::from_le_bytes(b.try_into().unwrap())).collect()),
            2 => Value::U32(c.take(n * 4)?.chunks_exact(4).map(|b| u32::from_le_bytes(b.try_into().unwrap())).collect()),
            3 => Value::Bytes(c.take(n)?.to_vec()),
            k => return Err(Error::integrity(start, format!("unknown entry kind {k}"))),
        };
        if map.insert(name.clone(), value).is_some() {
            return Err(Error::integrity(start, format!("duplicate entry `{name}`")));
        }
    }
    if c.pos != body_end {
        return Err(Error::integrity(c.pos as u64, "trailing bytes after entries"));
    }
    Ok((
        kind,
        Entries {
            map,
            end: body_end as u64,
        },
    ))
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Good => "good",
        Side::Bad => "bad",
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer { entries: Vec::new() };
        let enc = &self.encoder;
        w.bytes(
            "encoder.kind",
            match enc.kind {
                EncoderKind::Synthetic => b"synthetic",
                EncoderKind::Builtin => b"builtin",
            },
        );
        w.u64("encoder.d_s", enc.d_s as u64);
        w.u64("encoder.d_a", enc.d_a as u64);
        w.u64("encoder.jitter_bits", enc.jitter.to_bits());
        w.u64("encoder.seed", enc.seed);
        match &self.model {
            TrainedModel::Ctm(s) => {
                w.u64("bin_count", s.bin_count as u64);
                w.u64("perturbation.k", s.perturbation.k as u64);
                w.f32s("perturbation.noise_std", &[s.perturbation.noise_std]);
                w.u64("perturbation.rng_seed", s.perturbation.rng_seed);
                w.f32s("tau_good", &[s.tau_good]);
                w.f32s("tau_bad", &[s.tau_bad]);
                for side in Side::BOTH {
                    let m = s.side(side);
                    let n = side_name(side);
                    w.mlp(&format!("{n}.teacher"), &m.teacher);
                    w.mlp(&format!("{n}.student"), &m.student);
                    w.f32s(&format!("{n}.prior"), &[m.prior.mean, m.prior.log_std]);
                }
            }
            TrainedModel::Cec(s) => {
                w.u64("cascade", s.cascade as u64);
                w.mlp("fusion", &s.fusion);
                for (i, h) in s.scale_heads.iter().enumerate() {
                    w.mlp(&format!("head{i}"), h);
                }
                w.mlp("presence", &s.presence_head);
            }
            TrainedModel::Linear(m) => w.mlp("linear", &m.layer),
        }
        w.finish(self.model.kind())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (kind, e) = parse(bytes)?;
        let encoder = EncoderSpec {
            kind: match e.bytes("encoder.kind")? {
                b"synthetic" => EncoderKind::Synthetic,
                b"builtin" => EncoderKind::Builtin,
                _ => return Err(Error::integrity(e.end, "unknown encoder kind")),
            },
            d_s: e.u64("encoder.d_s")? as usize,
            d_a: e.u64("encoder.d_a")? as usize,
            jitter: f64::from_bits(e.u64("encoder.jitter_bits")?),
            seed: e.u64("encoder.seed")?,
        };
        let model = match kind {
            ModelKind::Ctm => {
                let side = |side: Side| -> Result<SideModels> {
                    let n = side_name(side);
                    let prior = e.f32s(&format!("{n}.prior"))?;
                    let [mean, log_std] = prior[..] else {
                        return Err(e.missing(&format!("{n}.prior"), "two values"));
                    };
                    Ok(SideModels {
                        teacher: e.mlp(&format!("{n}.teacher"), Activation::Identity)?,
                        student: e.mlp(&format!("{n}.student"), Activation::Identity)?,
                        prior: GaussianPrior { mean, log_std },
                    })
                };
                TrainedModel::Ctm(CtmState {
                    good: side(Side::Good)?,
                    bad: side(Side::Bad)?,
                    tau_good: e.f64("tau_good")?,
                    tau_bad: e.f64("tau_bad")?,
                    perturbation: PerturbationConfig {
                        k: e.u64("perturbation.k")? as usize,
                        noise_std: e.f64("perturbation.noise_std")?,
                        rng_seed: e.u64("perturbation.rng_seed")?,
                    },
                    bin_count: e.u64("bin_count")? as usize,
                })
            }
            ModelKind::Cec => TrainedModel::Cec(CecState {
                fusion: e.mlp("fusion", Activation::Tanh)?,
                scale_heads: [
                    e.mlp("head0", Activation::Identity)?,
                    e.mlp("head1", Activation::Identity)?,
                    e.mlp("head2", Activation::Identity)?,
                    e.mlp("head3", Activation::Identity)?,
                ],
                presence_head: e.mlp("presence", Activation::Identity)?,
                cascade: e.u64("cascade")? != 0,
            }),
            ModelKind::Linear => TrainedModel::Linear(LinearClassifier {
                layer: e.mlp("linear", Activation::Identity)?,
            }),
        };
        Ok(Checkpoint { model, encoder })
    }

    /// Like [`Checkpoint::from_bytes`] but rejects other model types.
    pub fn from_bytes_expecting(bytes: &[u8], kind: ModelKind) -> Result<Self> {
        if bytes.len() > 5 && &bytes[..4] == MAGIC && bytes[4] == VERSION && bytes[5] != kind as u8 {
            return Err(Error::integrity(
                5,
                format!("checkpoint holds type tag {}, expected {}", bytes[5], kind as u8),
            ));
        }
        Self::from_bytes(bytes)
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &ck.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

pub fn load_checkpoint_expecting(path: &Path, kind: ModelKind) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes_expecting(&bytes, kind)
}
