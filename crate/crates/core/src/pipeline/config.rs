//! Flat `key = value` pipeline configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! input = corpus.jsonl
//! seed = 13
//! weighting = count
//! ngram_range = 1-3
//! alignment = percentile:0.02
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::classifier::{ClassWeight, TrainConfig};
use crate::features::{FeatureConfig, NgramRange, Weighting};
use crate::guardrails::{AlignmentMode, GuardrailConfig, MissingAlignPolicy};
use crate::stats::AnalysisBins;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("input file {0} does not exist")]
    InputNotFound(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SamplingMode {
    Downsampled,
    Full,
}

impl fmt::Display for SamplingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplingMode::Downsampled => "downsampled",
            SamplingMode::Full => "full",
        })
    }
}

impl FromStr for SamplingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "downsampled" => Ok(SamplingMode::Downsampled),
            "full" => Ok(SamplingMode::Full),
            other => Err(format!("expected `downsampled` or `full`, got `{other}`")),
        }
    }
}

pub const KEYS: &[&str] = &[
    "input",
    "output_dir",
    "seed",
    "min_words",
    "sampling",
    "length_bins",
    "weighting",
    "ngram_range",
    "max_features",
    "C",
    "max_iter",
    "tol",
    "class_weight",
    "k_folds",
    "refit_features_per_fold",
    "max_excess_chars",
    "alignment",
    "missing_align",
    "analysis_bins",
];

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub min_words: u32,
    pub sampling: SamplingMode,
    pub length_bins: usize,
    pub features: FeatureConfig,
    /// `train.seed` always equals `seed`.
    pub train: TrainConfig,
    pub k_folds: usize,
    pub refit_features_per_fold: bool,
    pub guardrails: GuardrailConfig,
    pub analysis_bins: AnalysisBins,
}

impl PipelineConfig {
    /// Defaults for everything but the input path.
    pub fn with_input(input: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            input: input.into(),
            output_dir: PathBuf::from("out"),
            seed: 0,
            min_words: 20,
            sampling: SamplingMode::Downsampled,
            length_bins: 10,
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            k_folds: 10,
            refit_features_per_fold: true,
            guardrails: GuardrailConfig::default(),
            analysis_bins: AnalysisBins::default(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            let (k, v) = (k.trim(), v.trim());
            let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
                return Err(ConfigError::UnknownKey { line: i + 1, key: k.to_owned() });
            };
            if kv.insert(key, v).is_some() {
                return Err(ConfigError::DuplicateKey { line: i + 1, key: k.to_owned() });
            }
        }

        let input = kv.get("input").ok_or(ConfigError::Missing("input"))?;
        let mut cfg = PipelineConfig::with_input(base_dir.join(input));
        cfg.output_dir = base_dir.join(kv.get("output_dir").copied().unwrap_or("out"));
        for (&key, &value) in &kv {
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one non-path key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let Some(&key) = KEYS.iter().find(|&&k| k == key) else {
            return Err(ConfigError::UnknownKey { line: 0, key: key.to_owned() });
        };
        let bad = |reason: String| ConfigError::Invalid { key, reason };
        fn num<T: FromStr>(v: &str) -> Result<T, String>
        where
            T::Err: fmt::Display,
        {
            v.parse::<T>().map_err(|e| format!("`{v}`: {e}"))
        }
        match key {
            "input" | "output_dir" => {}
            "seed" => {
                self.seed = num(value).map_err(bad)?;
                self.train.seed = self.seed;
            }
            "min_words" => self.min_words = num(value).map_err(bad)?,
            "sampling" => self.sampling = value.parse().map_err(bad)?,
            "length_bins" => self.length_bins = num(value).map_err(bad)?,
            "weighting" => {
                self.features.weighting = match value {
                    "tfidf" => Weighting::Tfidf,
                    "count" => Weighting::Count,
                    other => return Err(bad(format!("expected `tfidf` or `count`, got `{other}`"))),
                }
            }
            "ngram_range" => {
                let (lo, hi) = value
                    .split_once('-')
                    .ok_or_else(|| bad(format!("expected `min-max`, got `{value}`")))?;
                let lo: usize = num(lo.trim()).map_err(bad)?;
                let hi: usize = num(hi.trim()).map_err(bad)?;
                self.features.ngram = NgramRange::new(lo, hi).map_err(|e| bad(e.to_string()))?;
            }
            "max_features" => self.features.max_features = num(value).map_err(bad)?,
            "C" => self.train.c = num(value).map_err(bad)?,
            "max_iter" => self.train.max_iter = num(value).map_err(bad)?,
            "tol" => self.train.tol = num(value).map_err(bad)?,
            "class_weight" => {
                self.train.class_weight = match value {
                    "balanced" => ClassWeight::Balanced,
                    "none" => ClassWeight::None,
                    other => return Err(bad(format!("expected `balanced` or `none`, got `{other}`"))),
                }
            }
            "k_folds" => self.k_folds = num(value).map_err(bad)?,
            "refit_features_per_fold" => self.refit_features_per_fold = num(value).map_err(bad)?,
            "max_excess_chars" => self.guardrails.max_excess_chars = num(value).map_err(bad)?,
            "alignment" => {
                let (mode, x) = value
                    .split_once(':')
                    .ok_or_else(|| bad(format!("expected `percentile:q` or `absolute:tau`, got `{value}`")))?;
                let x: f64 = num(x.trim()).map_err(bad)?;
                self.guardrails.alignment = match mode.trim() {
                    "percentile" => AlignmentMode::Percentile { q: x },
                    "absolute" => AlignmentMode::Absolute { tau: x },
                    other => return Err(bad(format!("unknown alignment mode `{other}`"))),
                };
            }
            "missing_align" => {
                self.guardrails.missing_align = match value {
                    "error" => MissingAlignPolicy::Error,
                    "drop" => MissingAlignPolicy::Drop,
                    other => return Err(bad(format!("expected `error` or `drop`, got `{other}`"))),
                }
            }
            "analysis_bins" => self.analysis_bins = value.parse().map_err(|e: crate::stats::StatsError| bad(e.to_string()))?,
            _ => unreachable!("key list is exhaustive"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |key, reason: &str| Err(ConfigError::Invalid { key, reason: reason.to_owned() });
        if self.length_bins < 1 {
            return invalid("length_bins", "must be at least 1");
        }
        if let Err(e) = NgramRange::new(self.features.ngram.min, self.features.ngram.max) {
            return invalid("ngram_range", &e.to_string());
        }
        if self.features.max_features < 1 {
            return invalid("max_features", "must be at least 1");
        }
        if !(self.train.c.is_finite() && self.train.c > 0.0) {
            return invalid("C", "must be a positive number");
        }
        if self.train.max_iter < 1 {
            return invalid("max_iter", "must be at least 1");
        }
        if !(self.train.tol.is_finite() && self.train.tol > 0.0) {
            return invalid("tol", "must be a positive number");
        }
        if self.k_folds < 2 {
            return invalid("k_folds", "must be at least 2");
        }
        match self.guardrails.alignment {
            AlignmentMode::Percentile { q } if !(0.0..1.0).contains(&q) => {
                return invalid("alignment", "percentile q must lie in [0, 1)");
            }
            AlignmentMode::Absolute { tau } if !tau.is_finite() => {
                return invalid("alignment", "tau must be finite");
            }
            _ => {}
        }
        Ok(())
    }

    pub fn check_input_exists(&self) -> Result<(), ConfigError> {
        if self.input.is_file() {
            Ok(())
        } else {
            Err(ConfigError::InputNotFound(self.input.clone()))
        }
    }

    /// Canonical key/value form, excluding the two paths.
    pub fn settings(&self) -> BTreeMap<&'static str, String> {
        let alignment = match self.guardrails.alignment {
            AlignmentMode::Percentile { q } => format!("percentile:{q}"),
            AlignmentMode::Absolute { tau } => format!("absolute:{tau}"),
        };
        let class_weight = match self.train.class_weight {
            ClassWeight::Balanced => "balanced",
            ClassWeight::None => "none",
        };
        let missing = match self.guardrails.missing_align {
            MissingAlignPolicy::Error => "error",
            MissingAlignPolicy::Drop => "drop",
        };
        BTreeMap::from([
            ("seed", self.seed.to_string()),
            ("min_words", self.min_words.to_string()),
            ("sampling", self.sampling.to_string()),
            ("length_bins", self.length_bins.to_string()),
            ("weighting", self.features.weighting.to_string()),
            ("ngram_range", format!("{}-{}", self.features.ngram.min, self.features.ngram.max)),
            ("max_features", self.features.max_features.to_string()),
            ("C", self.train.c.to_string()),
            ("max_iter", self.train.max_iter.to_string()),
            ("tol", self.train.tol.to_string()),
            ("class_weight", class_weight.to_owned()),
            ("k_folds", self.k_folds.to_string()),
            ("refit_features_per_fold", self.refit_features_per_fold.to_string()),
            ("max_excess_chars", self.guardrails.max_excess_chars.to_string()),
            ("alignment", alignment),
            ("missing_align", missing.to_owned()),
            ("analysis_bins", self.analysis_bins.to_string()),
        ])
    }
}
