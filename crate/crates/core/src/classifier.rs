//! Weighted, L2-regularized binary logistic regression.
//!
//! The training objective is
//!
//! ```text
//! F(beta, b) = 0.5 * |beta|^2 + C * sum_i w_i * log(1 + exp(-s_i * (x_i . beta + b)))
//! ```
//!
//! with `s_i = -1` for original and `+1` for translated paragraphs. The
//! intercept is not penalized. `w_i` is the per-sample weight times the class
//! weight.

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::features::{FeatureMatrix, Featurizer, SparseRow, Vocabulary};
use crate::optim::{self, LbfgsConfig, Objective, Termination};
use crate::seed::substream;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training data contains only one class")]
    SingleClass,
    #[error("{rows} feature rows but {labels} labels and {weights} weights")]
    LengthMismatch { rows: usize, labels: usize, weights: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("sample weights must be non-negative")]
    NegativeWeight,
    #[error("labels must be 0 or 1")]
    BadLabel,
    #[error("invalid config: {0}")]
    Config(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum PredictError {
    #[error("feature index {index} outside model dimension {dim}")]
    DimensionMismatch { index: usize, dim: usize },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    Balanced,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    /// Convergence threshold on the gradient infinity norm.
    pub tol: f64,
    pub class_weight: ClassWeight,
    /// Seeds the starting point of the optimizer.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 10.0,
            max_iter: 2000,
            tol: 1e-6,
            class_weight: ClassWeight::Balanced,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(TrainError::Config(format!("C must be positive, got {}", self.c)));
        }
        if self.max_iter < 1 {
            return Err(TrainError::Config("max_iter must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(TrainError::Config(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub config: TrainConfig,
    pub converged: bool,
    pub final_objective: f64,
    pub grad_inf_norm: f64,
    pub iterations: usize,
}

/// Logistic function, evaluated without overflow.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z))`.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Per-class weights `n_total / (2 * n_class)` for balanced weighting.
pub fn class_weights(y: &[u8], mode: ClassWeight) -> [f64; 2] {
    match mode {
        ClassWeight::None => [1.0, 1.0],
        ClassWeight::Balanced => {
            let n1 = y.iter().filter(|&&v| v == 1).count() as f64;
            let n0 = y.len() as f64 - n1;
            let n = y.len() as f64;
            [n / (2.0 * n0), n / (2.0 * n1)]
        }
    }
}

/// Product of sample weight and class weight for every row.
pub fn effective_weights(y: &[u8], sample_weights: &[f64], mode: ClassWeight) -> Vec<f64> {
    let cw = class_weights(y, mode);
    y.iter()
        .zip(sample_weights)
        .map(|(&label, &w)| w * cw[label as usize])
        .collect()
}

/// The regularized weighted log-loss over parameters `[beta..., b]`.
pub struct LogisticObjective<'a> {
    pub x: &'a FeatureMatrix,
    /// Signed targets, -1 or +1.
    pub sign: Vec<f64>,
    pub weights: &'a [f64],
    pub c: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(x: &'a FeatureMatrix, y: &[u8], weights: &'a [f64], c: f64) -> Self {
        let sign = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
        LogisticObjective { x, sign, weights, c }
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let mut g = vec![0.0; params.len()];
        self.eval(params, &mut g)
    }
}

impl Objective for LogisticObjective<'_> {
    fn dim(&self) -> usize {
        self.x.n_cols + 1
    }

    fn eval(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        let d = self.x.n_cols;
        let (beta, b) = (&params[..d], params[d]);
        let mut loss = 0.0;
        grad[..d].copy_from_slice(beta);
        grad[d] = 0.0;
        for i in 0..self.x.n_rows() {
            let w = self.weights[i];
            if w == 0.0 {
                continue;
            }
            let s = self.sign[i];
            let margin = s * (self.x.row_dot(i, beta) + b);
            loss += w * softplus(-margin);
            // d/dz of softplus(-s z) = -s * sigmoid(-s z)
            let coef = -self.c * w * s * sigmoid(-margin);
            let (idx, val) = self.x.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                grad[j as usize] += coef * v;
            }
            grad[d] += coef;
        }
        0.5 * beta.iter().map(|v| v * v).sum::<f64>() + self.c * loss
    }
}

/// Fits the model. `y` holds 0 (original) or 1 (translated).
pub fn train(
    x: &FeatureMatrix,
    y: &[u8],
    sample_weights: &[f64],
    config: &TrainConfig,
) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    if x.n_rows() != y.len() || y.len() != sample_weights.len() {
        return Err(TrainError::LengthMismatch {
            rows: x.n_rows(),
            labels: y.len(),
            weights: sample_weights.len(),
        });
    }
    if y.iter().any(|&v| v > 1) {
        return Err(TrainError::BadLabel);
    }
    if !(y.contains(&0) && y.contains(&1)) {
        return Err(TrainError::SingleClass);
    }
    if x.values.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::NonFinite("features"));
    }
    if sample_weights.iter().any(|w| !w.is_finite()) {
        return Err(TrainError::NonFinite("sample weights"));
    }
    if sample_weights.iter().any(|&w| w < 0.0) {
        return Err(TrainError::NegativeWeight);
    }

    let weights = effective_weights(y, sample_weights, config.class_weight);
    let objective = LogisticObjective::new(x, y, &weights, config.c);
    let mut rng = substream(config.seed, "optimizer-start");
    let mut start: Vec<f64> = (0..x.n_cols).map(|_| rng.random_range(-0.01..0.01)).collect();
    start.push(0.0);
    let lbfgs = LbfgsConfig {
        max_iter: config.max_iter,
        gtol: config.tol,
        ..LbfgsConfig::default()
    };
    let min = optim::minimize(&objective, start, &lbfgs);
    if !min.value.is_finite() {
        return Err(TrainError::NonFinite("objective"));
    }
    let intercept = min.x[x.n_cols];
    let mut coefficients = min.x;
    coefficients.truncate(x.n_cols);
    Ok(TrainedModel {
        coefficients,
        intercept,
        config: *config,
        converged: min.termination == Termination::Converged,
        final_objective: min.value,
        grad_inf_norm: min.grad_inf_norm,
        iterations: min.iterations,
    })
}

impl TrainedModel {
    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// `P(translated | x)`.
    pub fn predict_proba(&self, row: &SparseRow) -> Result<f64, PredictError> {
        if let Some(&bad) = row.indices.iter().find(|&&i| i as usize >= self.dim()) {
            return Err(PredictError::DimensionMismatch { index: bad as usize, dim: self.dim() });
        }
        Ok(sigmoid(row.dot(&self.coefficients) + self.intercept))
    }

    pub fn predict_proba_matrix(&self, x: &FeatureMatrix) -> Result<Vec<f64>, PredictError> {
        if x.n_cols != self.dim() {
            return Err(PredictError::DimensionMismatch { index: x.n_cols, dim: self.dim() });
        }
        Ok((0..x.n_rows())
            .map(|i| sigmoid(x.row_dot(i, &self.coefficients) + self.intercept))
            .collect())
    }
}

/// Original-likeness: `1 - P(translated | x)`.
pub fn fluency(p_translated: f64) -> Result<f64, PredictError> {
    if !(0.0..=1.0).contains(&p_translated) {
        return Err(PredictError::ProbabilityOutOfRange(p_translated));
    }
    Ok(1.0 - p_translated)
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Everything needed to score new POS sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format_version: u32,
    pub vocab_hash: String,
    pub featurizer: Featurizer,
    pub model: TrainedModel,
}

pub fn vocab_hash(vocab: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for g in &vocab.entries {
        h.update(g.as_str().as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed model artifact: {0}")]
    Format(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("vocabulary hash mismatch")]
    VocabHash,
}

impl ModelArtifact {
    pub fn new(featurizer: Featurizer, model: TrainedModel) -> Self {
        ModelArtifact {
            format_version: MODEL_FORMAT_VERSION,
            vocab_hash: vocab_hash(&featurizer.vocab),
            featurizer,
            model,
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<(), ArtifactError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self, ArtifactError> {
        let a: ModelArtifact = serde_json::from_reader(r)?;
        if a.format_version != MODEL_FORMAT_VERSION {
            return Err(ArtifactError::Version(a.format_version));
        }
        if a.vocab_hash != vocab_hash(&a.featurizer.vocab) {
            return Err(ArtifactError::VocabHash);
        }
        Ok(a)
    }

    pub fn score_tags<S: AsRef<str>>(&self, tags: &[S]) -> f64 {
        let row = self.featurizer.transform_tags(tags);
        self.model
            .predict_proba(&row)
            .expect("featurizer and model share a vocabulary")
    }
}
