//! Label vocabularies shared by the sentiment and emotion tasks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-way meme sentiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentimentLabel {
    Negative,
    Neutral,
    Positive,
}

impl SentimentLabel {
    pub const ALL: [SentimentLabel; 3] = [
        SentimentLabel::Negative,
        SentimentLabel::Neutral,
        SentimentLabel::Positive,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SentimentLabel::Negative => "negative",
            SentimentLabel::Neutral => "neutral",
            SentimentLabel::Positive => "positive",
        }
    }
}

impl fmt::Display for SentimentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SentimentLabel {
    type Err = Error;

    /// Accepts the three canonical names plus the `very_negative` /
    /// `very_positive` sub-labels, which collapse onto their parent class.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        match norm.as_str() {
            "negative" | "very_negative" => Ok(SentimentLabel::Negative),
            "neutral" => Ok(SentimentLabel::Neutral),
            "positive" | "very_positive" => Ok(SentimentLabel::Positive),
            _ => Err(Error::input(format!("unknown sentiment label `{s}`"))),
        }
    }
}

/// The four emotion classes, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Humorous,
    Sarcastic,
    Offensive,
    Motivational,
}

impl Emotion {
    pub const ALL: [Emotion; 4] = [
        Emotion::Humorous,
        Emotion::Sarcastic,
        Emotion::Offensive,
        Emotion::Motivational,
    ];

    /// Number of intensity levels.
    pub fn scale_count(self) -> usize {
        match self {
            Emotion::Motivational => 2,
            _ => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Emotion::Humorous => "humorous",
            Emotion::Sarcastic => "sarcastic",
            Emotion::Offensive => "offensive",
            Emotion::Motivational => "motivational",
        }
    }

    /// Parses a scale given either as an integer or as one of the
    /// `not / little / very / extremely` names (case-insensitive). For the
    /// binary motivational scale only `not` and `extremely` are meaningful.
    pub fn parse_scale(self, raw: &str) -> Result<u8> {
        let t = raw.trim().to_ascii_lowercase();
        let top = (self.scale_count() - 1) as u8;
        let v = match t.as_str() {
            "not" => 0,
            "little" if top == 3 => 1,
            "very" if top == 3 => 2,
            "extremely" => top,
            _ => t
                .parse::<u8>()
                .map_err(|_| Error::input(format!("bad {} scale `{raw}`", self.as_str())))?,
        };
        if v > top {
            return Err(Error::input(format!(
                "{} scale {v} outside 0..={top}",
                self.as_str()
            )));
        }
        Ok(v)
    }
}

/// Total number of scale classes over all emotions (4 + 4 + 4 + 2).
pub const TOTAL_SCALE_CLASSES: usize = 14;

/// Per-emotion intensity labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct EmotionScaleVector {
    pub humorous: u8,
    pub sarcastic: u8,
    pub offensive: u8,
    pub motivational: u8,
}

impl EmotionScaleVector {
    pub fn new(humorous: u8, sarcastic: u8, offensive: u8, motivational: u8) -> Result<Self> {
        Self::from_array([humorous, sarcastic, offensive, motivational])
    }

    pub fn from_array(a: [u8; 4]) -> Result<Self> {
        for (e, v) in Emotion::ALL.iter().zip(a) {
            if v as usize >= e.scale_count() {
                return Err(Error::input(format!(
                    "{} scale {v} outside 0..{}",
                    e.as_str(),
                    e.scale_count()
                )));
            }
        }
        Ok(Self {
            humorous: a[0],
            sarcastic: a[1],
            offensive: a[2],
            motivational: a[3],
        })
    }

    pub fn to_array(self) -> [u8; 4] {
        [self.humorous, self.sarcastic, self.offensive, self.motivational]
    }

    pub fn get(&self, e: Emotion) -> u8 {
        self.to_array()[e as usize]
    }
}

/// Per-emotion binary presence labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct EmotionPresenceVector {
    pub humorous: bool,
    pub sarcastic: bool,
    pub offensive: bool,
    pub motivational: bool,
}

impl EmotionPresenceVector {
    pub fn from_array(a: [bool; 4]) -> Self {
        Self {
            humorous: a[0],
            sarcastic: a[1],
            offensive: a[2],
            motivational: a[3],
        }
    }

    pub fn to_array(self) -> [bool; 4] {
        [self.humorous, self.sarcastic, self.offensive, self.motivational]
    }

    pub fn get(&self, e: Emotion) -> bool {
        self.to_array()[e as usize]
    }
}
