//! Persistent embedding cache.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "MMEC" | version u8 = 0x01 | record*
//! record = id_len u16 | id (UTF-8) | D_s u32 | D_a u32 | f32 x (D_s + 2*D_a)
//! ```
//!
//! Floats are stored structural vector first, then aligned image, then
//! aligned text. One file holds one dataset version. Writers must be
//! serialized externally; reads of a loaded cache are freely shareable.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::MultiModalEmbedding;
use crate::error::{Error, Result};

pub const CACHE_MAGIC: &[u8; 4] = b"MMEC";
pub const CACHE_VERSION: u8 = 0x01;
const HEADER_LEN: usize = 5;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EmbeddingCache {
    dataset_version: String,
    entries: IndexMap<String, MultiModalEmbedding>,
}

impl EmbeddingCache {
    pub fn new(dataset_version: impl Into<String>) -> Self {
        Self {
            dataset_version: dataset_version.into(),
            entries: IndexMap::new(),
        }
    }

    pub fn dataset_version(&self) -> &str {
        &self.dataset_version
    }

    /// Conventional location of the cache for `dataset_version` under `dir`.
    pub fn path_for(dir: &Path, dataset_version: &str) -> PathBuf {
        dir.join(format!("{dataset_version}.mmec"))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Inserts or replaces the embedding for `meme_id`.
    pub fn put(&mut self, meme_id: impl Into<String>, emb: MultiModalEmbedding) -> Result<()> {
        let id = meme_id.into();
        if id.len() > u16::MAX as usize {
            return Err(Error::input(format!("meme id longer than {} bytes", u16::MAX)));
        }
        self.entries.insert(id, emb);
        Ok(())
    }

    pub fn get(&self, meme_id: &str) -> Option<&MultiModalEmbedding> {
        self.entries.get(meme_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &MultiModalEmbedding)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.entries.len() * 64);
        buf.extend_from_slice(CACHE_MAGIC);
        buf.push(CACHE_VERSION);
        for (id, emb) in &self.entries {
            let (ds, da) = emb.dims();
            buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            buf.extend_from_slice(&(ds as u32).to_le_bytes());
            buf.extend_from_slice(&(da as u32).to_le_bytes());
            for v in emb.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(dataset_version: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::integrity(bytes.len() as u64, "file shorter than header"));
        }
        if &bytes[..4] != CACHE_MAGIC {
            return Err(Error::integrity(0, "bad magic, expected MMEC"));
        }
        if bytes[4] != CACHE_VERSION {
            return Err(Error::integrity(4, format!("unsupported version {:#04x}", bytes[4])));
        }
        let mut cache = Self::new(dataset_version);
        let mut pos = HEADER_LEN;
        while pos < bytes.len() {
            let start = pos;
            let truncated = |need: usize| {
                Error::integrity(
                    start as u64,
                    format!(
                        "record truncated: needs {need} bytes, {} available",
                        bytes.len() - start
                    ),
                )
            };
            if bytes.len() - pos < 2 {
                return Err(truncated(2));
            }
            let id_len = u16::from_le_bytes([bytes[pos], bytes[pos + 1]]) as usize;
            let fixed = 2 + id_len + 8;
            if bytes.len() - start < fixed {
                return Err(truncated(fixed));
            }
            pos += 2;
            let id = std::str::from_utf8(&bytes[pos..pos + id_len])
                .map_err(|_| Error::integrity(pos as u64, "meme id is not UTF-8"))?
                .to_string();
            pos += id_len;
            let ds = u32::from_le_bytes(bytes[pos..pos + 4].try_into().unwrap()) as usize;
            let da = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
            pos += 8;
            if ds == 0 || da == 0 {
                return Err(Error::integrity(start as u64, "zero embedding dimension"));
            }
            let n_floats = ds + 2 * da;
            let need = fixed + 4 * n_floats;
            if bytes.len() - start < need {
                return Err(truncated(need));
            }
            let flat: Vec<f32> = bytes[pos..pos + 4 * n_floats]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            pos += 4 * n_floats;
            let emb = MultiModalEmbedding::from_flat(&flat, ds, da)
                .map_err(|e| Error::integrity(start as u64, e.to_string()))?;
            if cache.entries.insert(id.clone(), emb).is_some() {
                return Err(Error::integrity(start as u64, format!("duplicate meme id `{id}`")));
            }
        }
        Ok(cache)
    }

    /// Writes to a sibling temp file, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path, dataset_version: impl Into<String>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(dataset_version, &bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::input(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = file_name.to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
