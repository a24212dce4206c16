//! Weighted F1 and per-class metrics.

use std::fmt::Write as _;
use std::hash::Hash;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Emotion, EmotionPresenceVector, EmotionScaleVector};

/// Square count matrix, rows are gold classes and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix<T> {
    classes: Vec<T>,
    counts: Vec<Vec<u64>>,
}

impl<T: Clone + Eq + Hash> ConfusionMatrix<T> {
    /// Classes are the union of observed gold and predicted labels, in
    /// first-seen order (golds first).
    pub fn from_labels(preds: &[T], golds: &[T]) -> Result<Self> {
        if preds.len() != golds.len() {
            return Err(Error::input(format!(
                "{} predictions vs {} gold labels",
                preds.len(),
                golds.len()
            )));
        }
        if golds.is_empty() {
            return Err(Error::input("no labels to score"));
        }
        let mut index: IndexMap<T, usize> = IndexMap::new();
        for l in golds.iter().chain(preds) {
            let next = index.len();
            index.entry(l.clone()).or_insert(next);
        }
        let k = index.len();
        let mut counts = vec![vec![0u64; k]; k];
        for (p, g) in preds.iter().zip(golds) {
            counts[index[g]][index[p]] += 1;
        }
        Ok(Self {
            classes: index.into_keys().collect(),
            counts,
        })
    }

    pub fn classes(&self) -> &[T] {
        &self.classes
    }

    pub fn count(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold][pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    /// F1 of one class; 0 when precision and recall are both 0 or undefined.
    pub fn f1(&self, class: usize) -> f64 {
        let tp = self.counts[class][class] as f64;
        let predicted: u64 = self.counts.iter().map(|r| r[class]).sum();
        let support = self.support(class);
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if support == 0 { 0.0 } else { tp / support as f64 };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    /// Support-weighted mean of per-class F1.
    pub fn weighted_f1(&self) -> f64 {
        let total = self.total() as f64;
        (0..self.classes.len())
            .map(|c| self.f1(c) * self.support(c) as f64)
            .sum::<f64>()
            / total
    }
}

pub fn weighted_f1<T: Clone + Eq + Hash>(preds: &[T], golds: &[T]) -> Result<f64> {
    Ok(ConfusionMatrix::from_labels(preds, golds)?.weighted_f1())
}

/// Per-emotion weighted F1, in [`Emotion::ALL`] order, plus their
/// unweighted mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmotionScores {
    pub per_emotion: [f64; 4],
    pub mean: f64,
}

impl EmotionScores {
    fn from_per_emotion(per_emotion: [f64; 4]) -> Self {
        Self {
            per_emotion,
            mean: per_emotion.iter().sum::<f64>() / 4.0,
        }
    }

    pub fn get(&self, e: Emotion) -> f64 {
        self.per_emotion[e as usize]
    }
}

fn per_emotion<V, L: Clone + Eq + Hash>(preds: &[V], golds: &[V], get: impl Fn(&V, Emotion) -> L) -> Result<EmotionScores> {
    let mut out = [0.0; 4];
    for e in Emotion::ALL {
        let p: Vec<L> = preds.iter().map(|v| get(v, e)).collect();
        let g: Vec<L> = golds.iter().map(|v| get(v, e)).collect();
        out[e as usize] = weighted_f1(&p, &g)?;
    }
    Ok(EmotionScores::from_per_emotion(out))
}

/// Presence task: one binary problem per emotion.
pub fn task_b_f1(preds: &[EmotionPresenceVector], golds: &[EmotionPresenceVector]) -> Result<EmotionScores> {
    per_emotion(preds, golds, |v, e| v.get(e))
}

/// Intensity task: one multi-class problem per emotion.
pub fn task_c_f1(preds: &[EmotionScaleVector], golds: &[EmotionScaleVector]) -> Result<EmotionScores> {
    per_emotion(preds, golds, |v, e| v.get(e))
}

/// One row of a comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub task: String,
    pub variant: String,
    pub weighted_f1: f64,
}

/// Rows rendered as an aligned text table. Emotion aggregates are the
/// unweighted mean over the four emotions.
pub fn render_table(rows: &[ReportRow]) -> String {
    let tw = rows.iter().map(|r| r.task.len()).max().unwrap_or(0).max(4);
    let vw = rows.iter().map(|r| r.variant.len()).max().unwrap_or(0).max(7);
    let mut out = String::new();
    let _ = writeln!(out, "{:<tw$}  {:<vw$}  weighted_f1", "task", "variant");
    for r in rows {
        let _ = writeln!(out, "{:<tw$}  {:<vw$}  {:.4}", r.task, r.variant, r.weighted_f1);
    }
    out
}

pub fn render_json(rows: &[ReportRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}
