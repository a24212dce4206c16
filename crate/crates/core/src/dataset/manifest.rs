//! Line-delimited JSON manifests, one record per line:
//!
//! ```text
//! {"id":"m1","image_path":"img/m1.png","caption":"...","sentiment":"positive",
//!  "sentiment_raw":"very_positive","humorous":1,"sarcastic":0,"offensive":0,
//!  "motivational":0,"humorous_scale":2,"sarcastic_scale":0,
//!  "offensive_scale":"not","motivational_scale":0}
//! ```
//!
//! Scales accept integers or the names `not / little / very / extremely`;
//! presence flags accept `0/1` or booleans. Saving always writes integers.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DatasetSplit, MemeRecord, SplitName};
use crate::embedding::cache::write_atomic;
use crate::error::{Error, Result};
use crate::labels::{Emotion, EmotionPresenceVector, EmotionScaleVector, SentimentLabel};

#[derive(Deserialize)]
#[serde(untagged)]
enum FlexValue {
    Bool(bool),
    Int(i64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    #[serde(default)]
    image_path: Option<String>,
    #[serde(default)]
    caption: String,
    sentiment: String,
    #[serde(default)]
    sentiment_raw: Option<String>,
    humorous: FlexValue,
    sarcastic: FlexValue,
    offensive: FlexValue,
    motivational: FlexValue,
    humorous_scale: FlexValue,
    sarcastic_scale: FlexValue,
    offensive_scale: FlexValue,
    motivational_scale: FlexValue,
}

#[derive(Serialize)]
struct OutRecord<'a> {
    id: &'a str,
    image_path: &'a Option<String>,
    caption: &'a str,
    sentiment: SentimentLabel,
    sentiment_raw: &'a Option<String>,
    humorous: u8,
    sarcastic: u8,
    offensive: u8,
    motivational: u8,
    humorous_scale: u8,
    sarcastic_scale: u8,
    offensive_scale: u8,
    motivational_scale: u8,
}

fn field_error(record: &str, field: &str, reason: impl Into<String>) -> Error {
    Error::Validation {
        record: record.to_string(),
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn presence(v: &FlexValue, id: &str, field: &str) -> Result<bool> {
    match v {
        FlexValue::Bool(b) => Ok(*b),
        FlexValue::Int(0) => Ok(false),
        FlexValue::Int(1) => Ok(true),
        FlexValue::Int(i) => Err(field_error(id, field, format!("presence must be 0 or 1, got {i}"))),
        FlexValue::Text(t) => match t.trim() {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(field_error(id, field, format!("presence must be 0 or 1, got `{t}`"))),
        },
    }
}

fn scale(v: &FlexValue, e: Emotion, id: &str, field: &str) -> Result<u8> {
    let raw = match v {
        FlexValue::Int(i) => i.to_string(),
        FlexValue::Text(t) => t.clone(),
        FlexValue::Bool(_) => return Err(field_error(id, field, "scale must be an integer or name")),
    };
    e.parse_scale(&raw).map_err(|err| field_error(id, field, err.to_string()))
}

impl RawRecord {
    fn into_record(self) -> Result<MemeRecord> {
        let id = self.id.clone();
        if id.is_empty() {
            return Err(field_error("", "id", "empty id"));
        }
        let sentiment: SentimentLabel = self
            .sentiment
            .parse()
            .map_err(|e: Error| field_error(&id, "sentiment", e.to_string()))?;
        // keep the sub-label detail when the input carried any
        let sentiment_raw = match self.sentiment_raw {
            Some(r) => Some(r),
            None if self.sentiment != sentiment.as_str() => Some(self.sentiment.clone()),
            None => None,
        };
        let presence = EmotionPresenceVector::from_array([
            presence(&self.humorous, &id, "humorous")?,
            presence(&self.sarcastic, &id, "sarcastic")?,
            presence(&self.offensive, &id, "offensive")?,
            presence(&self.motivational, &id, "motivational")?,
        ]);
        let scales = EmotionScaleVector::from_array([
            scale(&self.humorous_scale, Emotion::Humorous, &id, "humorous_scale")?,
            scale(&self.sarcastic_scale, Emotion::Sarcastic, &id, "sarcastic_scale")?,
            scale(&self.offensive_scale, Emotion::Offensive, &id, "offensive_scale")?,
            scale(&self.motivational_scale, Emotion::Motivational, &id, "motivational_scale")?,
        ])?;
        Ok(MemeRecord {
            meme_id: id,
            image_path: self.image_path,
            caption: self.caption,
            sentiment,
            sentiment_raw,
            presence,
            scales,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedManifest {
    pub split: DatasetSplit,
    /// Records whose presence flags disagree with `scale > 0`. They are kept
    /// unchanged.
    pub inconsistent_label_count: usize,
}

pub fn parse_manifest(text: &str, name: SplitName) -> Result<LoadedManifest> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        let record = raw.into_record()?;
        if !seen.insert(record.meme_id.clone()) {
            return Err(field_error(&record.meme_id, "id", "duplicate meme id"));
        }
        records.push(record);
    }
    let inconsistent_label_count = records.iter().filter(|r| !r.labels_consistent()).count();
    if inconsistent_label_count > 0 {
        log::warn!("{inconsistent_label_count} records have presence flags that disagree with their scales");
    }
    Ok(LoadedManifest {
        split: DatasetSplit { name, records },
        inconsistent_label_count,
    })
}

pub fn load_manifest(path: &Path, name: SplitName) -> Result<LoadedManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, name)
}

/// Canonical serialization: one JSON object per line, fixed key order.
pub fn write_manifest(records: &[MemeRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let p = r.presence.to_array().map(u8::from);
        let s = r.scales.to_array();
        let line = serde_json::to_string(&OutRecord {
            id: &r.meme_id,
            image_path: &r.image_path,
            caption: &r.caption,
            sentiment: r.sentiment,
            sentiment_raw: &r.sentiment_raw,
            humorous: p[0],
            sarcastic: p[1],
            offensive: p[2],
            motivational: p[3],
            humorous_scale: s[0],
            sarcastic_scale: s[1],
            offensive_scale: s[2],
            motivational_scale: s[3],
        })
        .expect("manifest records always serialize");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn save_manifest(records: &[MemeRecord], path: &Path) -> Result<()> {
    write_atomic(path, write_manifest(records).as_bytes())
}
