//! Label-distribution-faithful synthetic datasets.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetSplit, MemeRecord, SplitName};
use crate::cec::presence_from_scales;
use crate::embedding::hash::derive_seed;
use crate::error::{Error, Result};
use crate::labels::{Emotion, EmotionScaleVector, SentimentLabel};

/// Label proportions: sentiment as (negative, neutral, positive), and one
/// row of scale proportions per emotion with lengths (4, 4, 4, 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistributionSpec {
    pub sentiment: [f64; 3],
    pub humorous: Vec<f64>,
    pub sarcastic: Vec<f64>,
    pub offensive: Vec<f64>,
    pub motivational: Vec<f64>,
}

impl LabelDistributionSpec {
    /// Memotion 3.0 training-set proportions.
    pub fn memotion_train() -> Self {
        Self {
            sentiment: [0.25, 0.42, 0.33],
            humorous: vec![0.15, 0.48, 0.29, 0.08],
            sarcastic: vec![0.21, 0.28, 0.43, 0.08],
            offensive: vec![0.61, 0.27, 0.09, 0.03],
            motivational: vec![0.88, 0.12],
        }
    }

    pub fn memotion_valid() -> Self {
        Self {
            sentiment: [0.39, 0.38, 0.23],
            humorous: vec![0.07, 0.65, 0.25, 0.03],
            sarcastic: vec![0.08, 0.65, 0.25, 0.02],
            offensive: vec![0.43, 0.53, 0.03, 0.01],
            motivational: vec![0.97, 0.03],
        }
    }

    pub fn memotion_test() -> Self {
        Self {
            sentiment: [0.39, 0.36, 0.25],
            humorous: vec![0.07, 0.62, 0.27, 0.04],
            sarcastic: vec![0.09, 0.62, 0.27, 0.02],
            offensive: vec![0.45, 0.51, 0.03, 0.01],
            motivational: vec![0.96, 0.04],
        }
    }

    /// `train` (alias `tableA`), `valid` or `test`.
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "train" | "tablea" | "memotion-train" => Ok(Self::memotion_train()),
            "valid" | "memotion-valid" => Ok(Self::memotion_valid()),
            "test" | "memotion-test" => Ok(Self::memotion_test()),
            _ => Err(Error::input(format!("unknown label distribution `{name}`"))),
        }
    }

    pub fn scale_row(&self, e: Emotion) -> &[f64] {
        match e {
            Emotion::Humorous => &self.humorous,
            Emotion::Sarcastic => &self.sarcastic,
            Emotion::Offensive => &self.offensive,
            Emotion::Motivational => &self.motivational,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, row: &[f64], len: usize| -> Result<()> {
            if row.len() != len {
                return Err(Error::input(format!("{name} row has {} entries, expected {len}", row.len())));
            }
            if row.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                return Err(Error::input(format!("{name} row has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::input(format!("{name} row sums to {sum}, expected 1")));
            }
            Ok(())
        };
        check("sentiment", &self.sentiment, 3)?;
        for e in Emotion::ALL {
            check(e.as_str(), self.scale_row(e), e.scale_count())?;
        }
        Ok(())
    }
}

/// Hamilton (largest-remainder) apportionment of `n` items. Quotas are
/// rounded to 1e-9 before flooring so that decimal proportions such as 0.29
/// are not truncated by binary rounding; ties in the remainder go to the
/// lower index.
pub fn largest_remainder(proportions: &[f64], n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = proportions
        .iter()
        .map(|p| (p * n as f64 * 1e9).round() / 1e9)
        .collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..proportions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

fn allocate(proportions: &[f64], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = largest_remainder(proportions, n)
        .into_iter()
        .enumerate()
        .flat_map(|(class, c)| std::iter::repeat_n(class, c))
        .collect();
    labels.shuffle(rng);
    labels
}

/// `n` records whose label counts follow `spec` exactly. Each label
/// attribute is allocated and shuffled independently; presence is derived
/// from the scales.
pub fn generate_synthetic(spec: &LabelDistributionSpec, n: usize, seed: u64) -> Result<DatasetSplit> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::input("synthetic dataset size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synthetic-labels"));
    let sentiments = allocate(&spec.sentiment, n, &mut rng);
    let scales: Vec<Vec<usize>> = Emotion::ALL
        .iter()
        .map(|&e| allocate(spec.scale_row(e), n, &mut rng))
        .collect();
    let records = (0..n)
        .map(|i| {
            let sv = EmotionScaleVector::from_array([
                scales[0][i] as u8,
                scales[1][i] as u8,
                scales[2][i] as u8,
                scales[3][i] as u8,
            ])
            .expect("allocated indices are within each emotion's scale range");
            MemeRecord {
                meme_id: format!("syn{seed}-{i:05}"),
                image_path: None,
                caption: String::new(),
                sentiment: SentimentLabel::from_index(sentiments[i]).unwrap(),
                sentiment_raw: None,
                presence: presence_from_scales(&sv),
                scales: sv,
            }
        })
        .collect();
    Ok(DatasetSplit {
        name: SplitName::Train,
        records,
    })
}
