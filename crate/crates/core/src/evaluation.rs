//! Book-grouped, language-stratified k-fold cross-validation and classifier
//! metrics.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{self, effective_weights, TrainConfig, TrainError, TrainedModel};
use crate::corpus::{BookEntry, ClassLabel, EN_ORIGINAL};
use crate::features::{FeatureConfig, FeatureError, Featurizer, GramCorpus};
use crate::sampling::WeightedRecord;
use crate::seed::substream;
use crate::stats::rankdata;

pub const RARE_LANGUAGES: &str = "rare-languages";

/// Languages with at most this many books share the rare stratum.
pub const RARE_LANGUAGE_MAX_BOOKS: usize = 2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{books} books cannot fill {k} folds")]
    TooFewBooks { books: usize, k: usize },
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("book `{0}` has no fold assignment")]
    UnassignedBook(String),
    #[error("fold {fold}: {source}")]
    FoldTraining { fold: usize, source: TrainError },
    #[error("fold {fold}: {source}")]
    FoldFeatures { fold: usize, source: FeatureError },
    #[error("{0} labels but {1} scores")]
    LengthMismatch(usize, usize),
    #[error("AUC needs both classes present")]
    SingleClass,
    #[error("no records to evaluate")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stratum {
    pub label: String,
    pub book_ids: Vec<String>,
}

/// Groups books into fold-balancing strata: one per source language, a pooled
/// stratum for languages with few books, and one for original English.
pub fn strata(books: &[BookEntry]) -> Vec<Stratum> {
    let mut per_lang: BTreeMap<&str, usize> = BTreeMap::new();
    for b in books.iter().filter(|b| b.class_label == ClassLabel::Translated) {
        *per_lang.entry(&b.source_lang).or_insert(0) += 1;
    }
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for b in books {
        let label = match b.class_label {
            ClassLabel::Original => EN_ORIGINAL.to_owned(),
            ClassLabel::Translated if per_lang[b.source_lang.as_str()] <= RARE_LANGUAGE_MAX_BOOKS => {
                RARE_LANGUAGES.to_owned()
            }
            ClassLabel::Translated => b.source_lang.clone(),
        };
        groups.entry(label).or_default().push(b.book_id.clone());
    }
    groups
        .into_iter()
        .map(|(label, mut book_ids)| {
            book_ids.sort();
            book_ids.dedup();
            Stratum { label, book_ids }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub mapping: BTreeMap<String, usize>,
    pub strata: Vec<Stratum>,
}

impl FoldAssignment {
    pub fn fold_of(&self, book_id: &str) -> Option<usize> {
        self.mapping.get(book_id).copied()
    }

    /// Books per fold for every stratum, `counts[stratum][fold]`.
    pub fn stratum_counts(&self) -> Vec<Vec<usize>> {
        self.strata
            .iter()
            .map(|s| {
                let mut c = vec![0; self.k];
                for b in &s.book_ids {
                    c[self.mapping[b]] += 1;
                }
                c
            })
            .collect()
    }
}

/// Shuffles each stratum and deals its books round-robin. The dealing cursor
/// carries over between strata so that fold sizes also stay balanced overall.
pub fn make_folds(books: &[BookEntry], k: usize, seed: u64) -> Result<FoldAssignment, EvalError> {
    if k < 2 {
        return Err(EvalError::BadK(k));
    }
    if books.len() < k {
        return Err(EvalError::TooFewBooks { books: books.len(), k });
    }
    let strata = strata(books);
    let mut rng = substream(seed, "folds");
    let mut mapping = BTreeMap::new();
    let mut cursor = 0;
    for s in &strata {
        let mut ids = s.book_ids.clone();
        ids.shuffle(&mut rng);
        for id in ids {
            mapping.insert(id, cursor % k);
            cursor += 1;
        }
    }
    Ok(FoldAssignment { k, mapping, strata })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub features: FeatureConfig,
    pub train: TrainConfig,
    /// Fit vocabulary and idf on each training split; otherwise once on all
    /// records.
    pub refit_features_per_fold: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            features: FeatureConfig::default(),
            train: TrainConfig::default(),
            refit_features_per_fold: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OofScore {
    pub record_id: String,
    pub fold: usize,
    pub p_translated: f64,
    pub fluency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutput {
    /// One score per input record, in input order.
    pub scores: Vec<OofScore>,
    pub folds: Vec<FoldReport>,
}

/// A model fitted on every fold but one.
pub struct FoldFit {
    pub fold: usize,
    pub featurizer: Featurizer,
    pub model: TrainedModel,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Gram corpus over the records' POS tags.
pub fn gram_corpus(records: &[WeightedRecord], config: &FeatureConfig) -> GramCorpus {
    GramCorpus::from_tag_sequences(records.iter().map(|r| r.record.pos_tags.as_slice()), config.ngram)
}

fn record_folds(records: &[WeightedRecord], folds: &FoldAssignment) -> Result<Vec<usize>, EvalError> {
    records
        .iter()
        .map(|r| {
            folds
                .fold_of(&r.record.book_id)
                .ok_or_else(|| EvalError::UnassignedBook(r.record.book_id.clone()))
        })
        .collect()
}

/// Fits features, class weights and the classifier on the records outside
/// `fold`.
pub fn fit_fold(
    records: &[WeightedRecord],
    corpus: &GramCorpus,
    record_fold: &[usize],
    fold: usize,
    config: &CvConfig,
    global: Option<&Featurizer>,
) -> Result<FoldFit, EvalError> {
    let (mut train_rows, test_rows): (Vec<usize>, Vec<usize>) =
        (0..records.len()).partition(|&i| record_fold[i] != fold);
    // Summation order follows record ids, so input order cannot change the fit.
    train_rows.sort_by(|&a, &b| records[a].record.record_id.cmp(&records[b].record.record_id));
    let featurizer = match global {
        Some(f) if !config.refit_features_per_fold => f.clone(),
        _ => Featurizer::fit(corpus, &train_rows, config.features)
            .map_err(|source| EvalError::FoldFeatures { fold, source })?,
    };
    let x = featurizer.transform(corpus, &train_rows);
    let y: Vec<u8> = train_rows.iter().map(|&i| records[i].record.class_label.target()).collect();
    let w: Vec<f64> = train_rows.iter().map(|&i| records[i].weight).collect();
    let model = classifier::train(&x, &y, &w, &config.train)
        .map_err(|source| EvalError::FoldTraining { fold, source })?;
    Ok(FoldFit { fold, featurizer, model, train_rows, test_rows })
}

/// Out-of-fold `P(translated)` for every record.
pub fn cross_val_oof(
    records: &[WeightedRecord],
    folds: &FoldAssignment,
    config: &CvConfig,
) -> Result<CvOutput, EvalError> {
    if records.is_empty() {
        return Err(EvalError::Empty);
    }
    let record_fold = record_folds(records, folds)?;
    let corpus = gram_corpus(records, &config.features);
    let global = if config.refit_features_per_fold {
        None
    } else {
        let all: Vec<usize> = (0..records.len()).collect();
        Some(
            Featurizer::fit(&corpus, &all, config.features)
                .map_err(|source| EvalError::FoldFeatures { fold: 0, source })?,
        )
    };

    let active: Vec<usize> = (0..folds.k).filter(|f| record_fold.contains(f)).collect();
    let run = |&fold: &usize| -> Result<(FoldReport, Vec<(usize, f64)>), EvalError> {
        let fit = fit_fold(records, &corpus, &record_fold, fold, config, global.as_ref())?;
        let x_test = fit.featurizer.transform(&corpus, &fit.test_rows);
        let p = fit
            .model
            .predict_proba_matrix(&x_test)
            .expect("test rows use the fold featurizer");
        let report = FoldReport {
            fold,
            n_train: fit.train_rows.len(),
            n_test: fit.test_rows.len(),
            n_features: fit.featurizer.n_features(),
            converged: fit.model.converged,
            iterations: fit.model.iterations,
            final_objective: fit.model.final_objective,
        };
        Ok((report, fit.test_rows.into_iter().zip(p).collect()))
    };

    #[cfg(feature = "parallel")]
    let results: Vec<_> = {
        use rayon::prelude::*;
        active.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = active.iter().map(run).collect();

    let mut p = vec![f64::NAN; records.len()];
    let mut reports = Vec::with_capacity(results.len());
    for r in results {
        let (report, scored) = r?;
        for (i, v) in scored {
            p[i] = v;
        }
        reports.push(report);
    }
    let scores = records
        .iter()
        .zip(&record_fold)
        .zip(p)
        .map(|((r, &fold), p)| OofScore {
            record_id: r.record.record_id.clone(),
            fold,
            p_translated: p,
            fluency: 1.0 - p,
        })
        .collect();
    Ok(CvOutput { scores, folds: reports })
}

/// Class weights used inside a fold, exposed for reporting.
pub fn fold_effective_weights(records: &[WeightedRecord], rows: &[usize], config: &TrainConfig) -> Vec<f64> {
    let y: Vec<u8> = rows.iter().map(|&i| records[i].record.class_label.target()).collect();
    let w: Vec<f64> = rows.iter().map(|&i| records[i].weight).collect();
    effective_weights(&y, &w, config.class_weight)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    pub n: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub auc: f64,
}

/// Mann-Whitney AUC: probability that a translated record outscores an
/// original one, ties counting one half.
pub fn auc(y: &[u8], scores: &[f64]) -> Result<f64, EvalError> {
    if y.len() != scores.len() {
        return Err(EvalError::LengthMismatch(y.len(), scores.len()));
    }
    let n1 = y.iter().filter(|&&v| v == 1).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(EvalError::SingleClass);
    }
    let ranks = rankdata(scores).map_err(|_| EvalError::LengthMismatch(y.len(), scores.len()))?;
    let r1: f64 = ranks.iter().zip(y).filter(|(_, &v)| v == 1).map(|(r, _)| r).sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Accuracy and macro-F1 with `p > threshold` predicting translated, plus AUC.
pub fn classifier_metrics(y: &[u8], p: &[f64], threshold: f64) -> Result<ClassifierMetrics, EvalError> {
    if y.len() != p.len() {
        return Err(EvalError::LengthMismatch(y.len(), p.len()));
    }
    if y.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&t, &s) in y.iter().zip(p) {
        let pred = usize::from(s > threshold);
        confusion[t as usize][pred] += 1;
    }
    let correct = confusion[0][0] + confusion[1][1];
    let f1_translated = f1(confusion[1][1], confusion[0][1], confusion[1][0]);
    let f1_original = f1(confusion[0][0], confusion[1][0], confusion[0][1]);
    Ok(ClassifierMetrics {
        n: y.len(),
        accuracy: correct as f64 / y.len() as f64,
        macro_f1: 0.5 * (f1_translated + f1_original),
        auc: auc(y, p)?,
    })
}

/// Checks that every record's book maps to exactly one fold; returns the
/// offending book otherwise.
pub fn check_group_purity<'a, I>(pairs: I) -> Result<(), String>
where
    I: IntoIterator<Item = (&'a str, usize)>,
{
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (book, fold) in pairs {
        if let Some(&f) = seen.get(book) {
            if f != fold {
                return Err(book.to_owned());
            }
        } else {
            seen.insert(book, fold);
        }
    }
    Ok(())
}
