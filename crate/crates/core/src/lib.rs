//! Sentiment and emotion classifiers for memes.
//!
//! Memes are encoded into a three-part embedding (structural image vector,
//! aligned image vector, aligned caption vector). Sentiment is predicted by
//! a cooperative teaching model: a good and a bad teacher-student pair, each
//! student trained on noise-perturbed embeddings to follow its teacher, with
//! learned decision thresholds. Emotions are predicted by a cascaded
//! classifier whose presence head reads the intensity predictions.
//!
//! ```
//! use memesent::dataset::{generate_synthetic, LabelDistributionSpec};
//!
//! let split = generate_synthetic(&LabelDistributionSpec::memotion_train(), 100, 1).unwrap();
//! assert_eq!(split.records.len(), 100);
//! ```

pub mod cec;
pub mod ctm;
pub mod dataset;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod labels;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
pub use labels::{Emotion, EmotionPresenceVector, EmotionScaleVector, SentimentLabel};
