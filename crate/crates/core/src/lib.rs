//! Translationese-based fluency scoring and length-controlled correlation
//! analysis over POS-anonymized paragraph corpora.

pub mod classifier;
pub mod corpus;
pub mod evaluation;
pub mod features;
pub mod guardrails;
pub mod optim;
pub mod pipeline;
pub mod sampling;
pub mod seed;
pub mod stats;
pub mod synth;

pub use classifier::{fluency, train, ModelArtifact, TrainConfig, TrainedModel};
pub use corpus::{parse_records, ClassLabel, ParagraphRecord, SourceType};
pub use evaluation::{cross_val_oof, make_folds, FoldAssignment};
pub use features::{FeatureConfig, FeatureMatrix, Featurizer, Vocabulary};
pub use stats::{partial_spearman, spearman, CorrelationResult};
