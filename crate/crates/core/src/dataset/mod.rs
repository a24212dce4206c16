//! Meme records, label schemas, manifests, synthetic generation and splits.

mod manifest;
mod synthetic;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::hash::derive_seed;
use crate::embedding::{
    encode_meme, BackendSet, EmbeddingCache, ImageRef, LabelProfile, MemeInput, MultiModalEmbedding,
    SyntheticSpace,
};
use crate::error::{Error, Result};
use crate::labels::{EmotionPresenceVector, EmotionScaleVector, SentimentLabel};

pub use manifest::{load_manifest, parse_manifest, save_manifest, write_manifest, LoadedManifest};
pub use synthetic::{generate_synthetic, largest_remainder, LabelDistributionSpec};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemeRecord {
    pub meme_id: String,
    pub image_path: Option<String>,
    pub caption: String,
    pub sentiment: SentimentLabel,
    /// Original sentiment string when it carried extra detail (for example
    /// `very_positive`).
    pub sentiment_raw: Option<String>,
    pub presence: EmotionPresenceVector,
    pub scales: EmotionScaleVector,
}

impl MemeRecord {
    pub fn profile(&self) -> LabelProfile {
        LabelProfile {
            sentiment: self.sentiment,
            scales: self.scales,
        }
    }

    /// Presence agrees with `scale > 0` for every emotion.
    pub fn labels_consistent(&self) -> bool {
        self.presence == crate::cec::presence_from_scales(&self.scales)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Valid,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Valid => "valid",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "valid" | "validation" => Ok(SplitName::Valid),
            "test" => Ok(SplitName::Test),
            _ => Err(Error::input(format!("unknown split `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub records: Vec<MemeRecord>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Train/valid/test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DatasetSplit,
    pub valid: DatasetSplit,
    pub test: DatasetSplit,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Valid => &self.valid,
            SplitName::Test => &self.test,
        }
    }
}

pub const MEMOTION_SPLIT_RATIOS: [f64; 3] = [5.0, 1.0, 1.0];

/// Seeded shuffle, then valid and test take `round(n * r / sum)` records
/// each and train takes the remainder.
pub fn split_dataset(records: &[MemeRecord], ratios: [f64; 3], seed: u64) -> Result<Splits> {
    if ratios.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(Error::input(format!("split ratios must be positive, got {ratios:?}")));
    }
    if records.len() < 3 {
        return Err(Error::input(format!(
            "cannot split {} records into 3 splits",
            records.len()
        )));
    }
    let n = records.len();
    let sum: f64 = ratios.iter().sum();
    let n_valid = (n as f64 * ratios[1] / sum).round() as usize;
    let n_test = (n as f64 * ratios[2] / sum).round() as usize;
    // each rounded share is below n, so the two never exceed n together
    let n_train = n - n_valid - n_test;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, "split")));
    let take = |range: std::ops::Range<usize>, name| DatasetSplit {
        name,
        records: order[range].iter().map(|&i| records[i].clone()).collect(),
    };
    Ok(Splits {
        train: take(0..n_train, SplitName::Train),
        valid: take(n_train..n_train + n_valid, SplitName::Valid),
        test: take(n_train + n_valid..n, SplitName::Test),
    })
}

/// A record paired with its embedding; the unit both models train on.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    pub meme_id: String,
    pub embedding: MultiModalEmbedding,
    pub sentiment: SentimentLabel,
    pub presence: EmotionPresenceVector,
    pub scales: EmotionScaleVector,
}

impl EncodedSample {
    pub fn new(record: &MemeRecord, embedding: MultiModalEmbedding) -> Self {
        Self {
            meme_id: record.meme_id.clone(),
            embedding,
            sentiment: record.sentiment,
            presence: record.presence,
            scales: record.scales,
        }
    }
}

/// Label-conditioned synthetic embeddings for every record. Fails when the
/// cluster centers of the profiles present are not separated by more than
/// four times the jitter.
pub fn encode_synthetic(records: &[MemeRecord], space: &SyntheticSpace) -> Result<Vec<EncodedSample>> {
    let profiles: Vec<LabelProfile> = records.iter().map(MemeRecord::profile).collect();
    space.check_separation(&profiles)?;
    Ok(records
        .iter()
        .map(|r| EncodedSample::new(r, space.encode(&r.meme_id, &r.profile())))
        .collect())
}

/// Encodes records through real backends, reading and filling `cache`.
/// Relative image paths resolve against `base_dir`.
pub fn encode_with_backends(
    records: &[MemeRecord],
    backends: &BackendSet,
    base_dir: &Path,
    mut cache: Option<&mut EmbeddingCache>,
) -> Result<Vec<EncodedSample>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        if let Some(hit) = cache.as_deref().and_then(|c| c.get(&r.meme_id)) {
            out.push(EncodedSample::new(r, hit.clone()));
            continue;
        }
        let image = match &r.image_path {
            Some(p) => ImageRef::Path(base_dir.join(p)),
            None => ImageRef::Absent,
        };
        let emb = encode_meme(
            &MemeInput {
                meme_id: &r.meme_id,
                image: &image,
                caption: &r.caption,
            },
            backends,
        )?;
        if let Some(c) = cache.as_deref_mut() {
            c.put(r.meme_id.clone(), emb.clone())?;
        }
        out.push(EncodedSample::new(r, emb));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn records(n: usize) -> Vec<MemeRecord> {
        generate_synthetic(&LabelDistributionSpec::memotion_train(), n, 3).unwrap().records
    }

    #[test]
    fn seven_records_split_five_one_one() {
        let s = split_dataset(&records(7), MEMOTION_SPLIT_RATIOS, 0).unwrap();
        assert_eq!((s.train.len(), s.valid.len(), s.test.len()), (5, 1, 1));
    }

    #[test]
    fn split_is_a_seeded_partition() {
        let rs = records(50);
        let a = split_dataset(&rs, MEMOTION_SPLIT_RATIOS, 4).unwrap();
        assert_eq!(a, split_dataset(&rs, MEMOTION_SPLIT_RATIOS, 4).unwrap());
        let mut ids = HashSet::new();
        for split in [&a.train, &a.valid, &a.test] {
            for r in &split.records {
                assert!(ids.insert(r.meme_id.clone()));
            }
        }
        assert_eq!(ids.len(), 50);
    }

    #[test]
    fn split_errors() {
        assert!(split_dataset(&records(2), MEMOTION_SPLIT_RATIOS, 0).is_err());
        assert!(split_dataset(&records(9), [5.0, 0.0, 1.0], 0).is_err());
    }

    #[test]
    fn synthetic_records_have_consistent_labels() {
        assert!(records(100).iter().all(MemeRecord::labels_consistent));
    }
}
