//! Run orchestration: configuration, the ablation variants, reports and
//! checkpoints.

pub mod checkpoint;
pub mod simple;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::cec::{infer_cec, train_cec, CecTrainConfig};
use crate::ctm::{train_ctm, CtmObjective, CtmTrainConfig, PerturbationConfig, ThresholdMode};
use crate::dataset::{encode_synthetic, encode_with_backends, split_dataset, EncodedSample, MemeRecord, MEMOTION_SPLIT_RATIOS};
use crate::embedding::SyntheticSpace;
use crate::error::{Error, Result};
use crate::evaluation::{task_b_f1, task_c_f1, weighted_f1, EmotionScores, ReportRow};
use crate::nn::OptimizerKind;

pub use checkpoint::{
    load_checkpoint, load_checkpoint_expecting, save_checkpoint, Checkpoint, EncoderKind, EncoderSpec, ModelKind,
    TrainedModel,
};
pub use simple::{train_linear, LinearClassifier};

/// Threshold used by the fixed-threshold variants.
pub const FIXED_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    /// Sentiment.
    A,
    /// Emotion presence and intensity.
    #[serde(rename = "B_C")]
    BC,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::A => "A",
            Task::BC => "B_C",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "A" | "a" => Ok(Task::A),
            "B_C" | "b_c" | "BC" => Ok(Task::BC),
            _ => Err(Error::config(format!("unknown task `{s}` (expected A or B_C)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Students trained directly on pre-labels; learned thresholds kept.
    NoTeacher,
    /// Teachers kept; thresholds fixed at 0.5.
    FixedThreshold,
    NoTeacherNoThreshold,
    /// One linear layer to three classes.
    SimpleClassifier,
    /// Presence head reads only the embedding.
    NoCascade,
}

impl Variant {
    pub const TASK_A: [Variant; 5] = [
        Variant::Full,
        Variant::NoTeacher,
        Variant::FixedThreshold,
        Variant::NoTeacherNoThreshold,
        Variant::SimpleClassifier,
    ];
    pub const TASK_BC: [Variant; 2] = [Variant::Full, Variant::NoCascade];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoTeacher => "no_teacher",
            Variant::FixedThreshold => "fixed_threshold",
            Variant::NoTeacherNoThreshold => "no_teacher_no_threshold",
            Variant::SimpleClassifier => "simple_classifier",
            Variant::NoCascade => "no_cascade",
        }
    }

    pub fn supports(self, task: Task) -> bool {
        match task {
            Task::A => Self::TASK_A.contains(&self),
            Task::BC => Self::TASK_BC.contains(&self),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::TASK_A
            .iter()
            .chain(&Self::TASK_BC)
            .copied()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown variant `{s}`")))
    }
}

/// Every knob of a run. Read from a flat TOML document; absent keys take
/// the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    pub variant: Variant,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    /// Noisy copies per meme.
    pub k: usize,
    pub noise_std: f64,
    /// Hidden width of teachers and students.
    pub hidden: usize,
    pub fusion_width: usize,
    pub head_hidden: usize,
    pub bin_count: usize,
    pub encoder: EncoderKind,
    pub d_s: usize,
    pub d_a: usize,
    pub jitter: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: Task::A,
            variant: Variant::Full,
            epochs: 50,
            batch_size: 32,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            k: PerturbationConfig::DEFAULT_K,
            noise_std: PerturbationConfig::DEFAULT_NOISE_STD,
            hidden: 128,
            fusion_width: 256,
            head_hidden: 128,
            bin_count: crate::ctm::DEFAULT_BIN_COUNT,
            encoder: EncoderKind::Synthetic,
            d_s: 64,
            d_a: 32,
            jitter: 0.05,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.variant.supports(self.task) {
            return Err(Error::config(format!(
                "variant `{}` is not available for task {}",
                self.variant, self.task
            )));
        }
        if self.batch_size == 0 || self.hidden == 0 || self.fusion_width == 0 || self.head_hidden == 0 {
            return Err(Error::config("batch_size and widths must be positive"));
        }
        if self.d_s == 0 || self.d_a == 0 {
            return Err(Error::config("d_s and d_a must be positive"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("invalid learning rate {}", self.learning_rate)));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::config(format!("invalid jitter {}", self.jitter)));
        }
        self.perturbation().validate()
    }

    pub fn perturbation(&self) -> PerturbationConfig {
        PerturbationConfig {
            k: self.k,
            noise_std: self.noise_std,
            rng_seed: self.seed,
        }
    }

    pub fn encoder_spec(&self) -> EncoderSpec {
        EncoderSpec {
            kind: self.encoder,
            d_s: self.d_s,
            d_a: self.d_a,
            jitter: self.jitter,
            seed: self.seed,
        }
    }

    pub fn ctm_config(&self) -> CtmTrainConfig {
        let (objective, thresholds) = match self.variant {
            Variant::NoTeacher => (CtmObjective::StudentOnly, ThresholdMode::Learned),
            Variant::FixedThreshold => (CtmObjective::Full, ThresholdMode::Fixed(FIXED_THRESHOLD)),
            Variant::NoTeacherNoThreshold => (CtmObjective::StudentOnly, ThresholdMode::Fixed(FIXED_THRESHOLD)),
            _ => (CtmObjective::Full, ThresholdMode::Learned),
        };
        CtmTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            hidden: self.hidden,
            perturbation: self.perturbation(),
            bin_count: self.bin_count,
            objective,
            thresholds,
        }
    }

    pub fn cec_config(&self) -> CecTrainConfig {
        CecTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            optimizer: self.optimizer,
            seed: self.seed,
            fusion_width: self.fusion_width,
            head_hidden: self.head_hidden,
            cascade: self.variant != Variant::NoCascade,
        }
    }
}

/// Encoded train/valid/test samples.
#[derive(Debug, Clone)]
pub struct EncodedSplits {
    pub train: Vec<EncodedSample>,
    pub valid: Vec<EncodedSample>,
    pub test: Vec<EncodedSample>,
}

/// Encodes records the way `encoder` describes. Image paths resolve
/// against `base_dir`.
pub fn encode_records(records: &[MemeRecord], encoder: &EncoderSpec, base_dir: &Path) -> Result<Vec<EncodedSample>> {
    match encoder.kind {
        EncoderKind::Synthetic => {
            let space = SyntheticSpace::new(encoder.seed, (encoder.d_s, encoder.d_a), encoder.jitter)?;
            encode_synthetic(records, &space)
        }
        EncoderKind::Builtin => encode_with_backends(records, &encoder.backend_set()?, base_dir, None),
    }
}

/// Seeded 5:1:1 split followed by encoding.
pub fn prepare_splits(records: &[MemeRecord], cfg: &RunConfig, base_dir: &Path) -> Result<EncodedSplits> {
    let splits = split_dataset(records, MEMOTION_SPLIT_RATIOS, cfg.seed)?;
    let enc = cfg.encoder_spec();
    // check separation over every profile at once
    let all = encode_records(records, &enc, base_dir)?;
    let by_id: IndexMap<&str, &EncodedSample> = all.iter().map(|s| (s.meme_id.as_str(), s)).collect();
    let pick = |rs: &[MemeRecord]| rs.iter().map(|r| by_id[r.meme_id.as_str()].clone()).collect();
    Ok(EncodedSplits {
        train: pick(&splits.train.records),
        valid: pick(&splits.valid.records),
        test: pick(&splits.test.records),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_b: Option<EmotionScores>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub task_c: Option<EmotionScores>,
}

/// Note attached to reports that carry emotion aggregates.
pub const EMOTION_AGGREGATE_NOTE: &str = "task B/C aggregate = unweighted mean of per-emotion weighted F1";

impl Metrics {
    pub fn rows(&self, variant: Variant) -> Vec<ReportRow> {
        let row = |task: &str, f: f64| ReportRow {
            task: task.into(),
            variant: variant.as_str().into(),
            weighted_f1: f,
        };
        let mut out = Vec::new();
        if let Some(f) = self.task_a {
            out.push(row("A", f));
        }
        if let Some(s) = self.task_b {
            out.push(row("B", s.mean));
        }
        if let Some(s) = self.task_c {
            out.push(row("C", s.mean));
        }
        out
    }
}

/// Scores a trained model on labeled samples.
pub fn evaluate_model(model: &TrainedModel, samples: &[EncodedSample]) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::input("no samples to evaluate"));
    }
    match model {
        TrainedModel::Ctm(state) => {
            let preds = samples.iter().map(|s| state.classify(&s.embedding)).collect::<Result<Vec<_>>>()?;
            let golds: Vec<_> = samples.iter().map(|s| s.sentiment).collect();
            Ok(Metrics {
                task_a: Some(weighted_f1(&preds, &golds)?),
                ..Metrics::default()
            })
        }
        TrainedModel::Linear(m) => {
            let preds = samples.iter().map(|s| m.classify(&s.embedding)).collect::<Result<Vec<_>>>()?;
            let golds: Vec<_> = samples.iter().map(|s| s.sentiment).collect();
            Ok(Metrics {
                task_a: Some(weighted_f1(&preds, &golds)?),
                ..Metrics::default()
            })
        }
        TrainedModel::Cec(state) => {
            let mut scales = Vec::with_capacity(samples.len());
            let mut presence = Vec::with_capacity(samples.len());
            for s in samples {
                let (c, b) = infer_cec(&s.embedding, state)?;
                scales.push(c);
                presence.push(b);
            }
            let gold_b: Vec<_> = samples.iter().map(|s| s.presence).collect();
            let gold_c: Vec<_> = samples.iter().map(|s| s.scales).collect();
            Ok(Metrics {
                task_b: Some(task_b_f1(&presence, &gold_b)?),
                task_c: Some(task_c_f1(&scales, &gold_c)?),
                ..Metrics::default()
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub good: f64,
    pub bad: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub task: Task,
    pub variant: Variant,
    /// Per-epoch mean loss terms.
    pub history: Vec<IndexMap<String, f64>>,
    pub metrics: Metrics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub config: RunConfig,
    /// Excluded from the JSON document so repeated runs compare equal.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl RunReport {
    pub fn rows(&self) -> Vec<ReportRow> {
        self.metrics.rows(self.variant)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct RunOutput {
    pub report: RunReport,
    pub checkpoint: Checkpoint,
}

fn terms(pairs: &[(&str, f64)]) -> IndexMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

/// Trains the configured model and variant on `data.train` and scores it
/// on `data.test`.
pub fn run(cfg: &RunConfig, data: &EncodedSplits) -> Result<RunOutput> {
    cfg.validate()?;
    if data.test.is_empty() {
        return Err(Error::input("test split is empty"));
    }
    let started = Instant::now();
    let (model, history, thresholds) = match (cfg.task, cfg.variant) {
        (Task::A, Variant::SimpleClassifier) => {
            let out = train_linear(
                &data.train,
                cfg.epochs,
                cfg.batch_size,
                cfg.learning_rate,
                cfg.optimizer,
                cfg.seed,
            )?;
            let history = out.history.iter().map(|&l| terms(&[("ce", l), ("total", l)])).collect();
            (TrainedModel::Linear(out.model), history, None)
        }
        (Task::A, _) => {
            let out = train_ctm(&data.train, &cfg.ctm_config())?;
            let history = out
                .history
                .iter()
                .map(|h| {
                    terms(&[
                        ("l_t", h.l_t),
                        ("l_dst", h.l_dst),
                        ("l_s", h.l_s),
                        ("l_cfd", h.l_cfd),
                        ("total", h.total),
                    ])
                })
                .collect();
            let th = Thresholds {
                good: out.state.tau_good,
                bad: out.state.tau_bad,
            };
            (TrainedModel::Ctm(out.state), history, Some(th))
        }
        (Task::BC, _) => {
            let out = train_cec(&data.train, &cfg.cec_config())?;
            let history = out
                .history
                .iter()
                .map(|h| terms(&[("l_b", h.l_b), ("l_c", h.l_c), ("total", h.total)]))
                .collect();
            (TrainedModel::Cec(out.state), history, None)
        }
    };
    let metrics = evaluate_model(&model, &data.test)?;
    let report = RunReport {
        task: cfg.task,
        variant: cfg.variant,
        history,
        metrics,
        thresholds,
        note: (cfg.task == Task::BC).then(|| EMOTION_AGGREGATE_NOTE.to_string()),
        config: cfg.clone(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        report,
        checkpoint: Checkpoint {
            model,
            encoder: cfg.encoder_spec(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_task_compatibility() {
        let mut cfg = RunConfig {
            task: Task::A,
            variant: Variant::NoCascade,
            ..RunConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.task = Task::BC;
        assert!(cfg.validate().is_ok());
        cfg.variant = Variant::NoTeacher;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = RunConfig {
            task: Task::BC,
            variant: Variant::NoCascade,
            k: 8,
            ..RunConfig::default()
        };
        let text = cfg.to_toml_string();
        assert!(text.contains("task = \"B_C\""));
        assert_eq!(RunConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn toml_defaults_and_unknown_keys() {
        let cfg = RunConfig::from_toml_str("epochs = 3\nvariant = \"fixed_threshold\"\n").unwrap();
        assert_eq!(cfg.epochs, 3);
        assert_eq!(cfg.batch_size, 32);
        assert!(RunConfig::from_toml_str("epoch = 3").is_err());
    }

    #[test]
    fn variant_parsing() {
        for v in Variant::TASK_A.iter().chain(&Variant::TASK_BC) {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), *v);
        }
        assert!("w/o".parse::<Variant>().is_err());
    }
}
