//! Stage orchestration and on-disk artifacts.
//!
//! Stages read the artifacts of the previous stage from the output directory,
//! so each can be rerun on its own. A run writes `manifest.json` with the
//! settings, seed and a SHA-256 of every artifact; a failed stage marks the
//! manifest `failed` and leaves the artifacts of earlier stages in place.

pub mod config;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classifier::{self, ModelArtifact};
use crate::corpus::{self, book_entries, ClassLabel, ParagraphRecord, SourceType};
use crate::evaluation::{self, check_group_purity, classifier_metrics, cross_val_oof, make_folds, CvConfig};
use crate::features::{Featurizer, Weighting};
use crate::guardrails::{apply_guardrails, FilterReport};
use crate::sampling::{assign_sample_weights, compute_length_bins, downsample_translated, BinSummary};
use crate::stats::{headline, stratified_analysis, AnalysisRow, Headline};

pub use config::{ConfigError, PipelineConfig, SamplingMode};

pub const FILTERED: &str = "filtered.jsonl";
pub const FILTER_REPORT: &str = "filter_report.json";
pub const DROPPED: &str = "dropped.csv";
pub const SAMPLED: &str = "sampled.jsonl";
pub const SAMPLING_SUMMARY: &str = "sampling_summary.csv";
pub const FOLDS: &str = "folds.csv";
pub const SCORES: &str = "scores.csv";
pub const CV_FOLDS: &str = "cv_folds.csv";
pub const METRICS: &str = "metrics.csv";
pub const MODEL: &str = "model.json";
pub const VOCAB: &str = "vocab.csv";
pub const CORRELATIONS: &str = "correlations.csv";
pub const HEADLINE: &str = "headline.json";
pub const REPORT: &str = "report.md";
pub const GRID: &str = "grid.csv";
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Filter,
    Sample,
    TrainCv,
    Correlate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Filter, Stage::Sample, Stage::TrainCv, Stage::Correlate, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Filter => "filter",
            Stage::Sample => "sample",
            Stage::TrainCv => "train-cv",
            Stage::Correlate => "correlate",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("data error: {0}")]
    Data(String),
    /// A step inside a stage, or run bookkeeping, failed.
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: BoxError,
    },
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<PipelineError>,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Data(_) => 2,
            PipelineError::Step { .. } => 3,
            PipelineError::Stage { source, .. } => source.exit_code(),
        }
    }
}

fn fail<E: Into<BoxError>>(step: &'static str) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Step { step, source: e.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: u64,
    pub settings: BTreeMap<String, String>,
    pub input_file: Option<String>,
    pub input_sha256: Option<String>,
    pub status: RunStatus,
    pub stages_completed: Vec<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// Artifact name to SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    fn new(config: &PipelineConfig) -> Self {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.seed,
            settings: config.settings().into_iter().map(|(k, v)| (k.to_owned(), v)).collect(),
            input_file: None,
            input_sha256: None,
            status: RunStatus::Complete,
            stages_completed: Vec::new(),
            failed_stage: None,
            error: None,
            artifacts: BTreeMap::new(),
        }
    }

    pub fn read(dir: &Path) -> Option<Manifest> {
        let bytes = fs::read(dir.join(MANIFEST)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

type Outputs = Vec<(&'static str, Vec<u8>)>;

fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, BoxError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(w.into_inner().map_err(|e| e.to_string())?)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, BoxError> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

fn missing(dir: &Path, name: &str) -> PipelineError {
    PipelineError::Data(format!("missing artifact {}; run the earlier stages first", dir.join(name).display()))
}

fn read_jsonl(dir: &Path, name: &str) -> Result<Vec<ParagraphRecord>, PipelineError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(missing(dir, name));
    }
    load_records(&path)
}

fn read_csv<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<Vec<T>, PipelineError> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(missing(dir, name));
    }
    let mut r = csv::Reader::from_path(&path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

fn read_json<T: DeserializeOwned>(dir: &Path, name: &str) -> Result<T, PipelineError> {
    let path = dir.join(name);
    let bytes = fs::read(&path).map_err(|_| missing(dir, name))?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

/// Parses and validates a corpus file. Any schema error, duplicate id or
/// inconsistent book is a data error.
pub fn load_records(path: &Path) -> Result<Vec<ParagraphRecord>, PipelineError> {
    let file = fs::File::open(path).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))?;
    let (records, errors) =
        corpus::parse_records(BufReader::new(file)).map_err(|e| PipelineError::Data(e.to_string()))?;
    if !errors.is_empty() {
        let shown: Vec<String> = errors.iter().take(5).map(ToString::to_string).collect();
        return Err(PipelineError::Data(format!(
            "{}: {} malformed record(s): {}",
            path.display(),
            errors.len(),
            shown.join("; ")
        )));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.record_id.as_str())) {
        return Err(PipelineError::Data(format!("duplicate record_id `{}`", dup.record_id)));
    }
    book_entries(&records).map_err(|e| PipelineError::Data(e.to_string()))?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub n_records: usize,
    pub n_original: usize,
    pub n_translated: usize,
    pub n_books: usize,
    pub per_source: BTreeMap<String, usize>,
    /// Translated books per source language.
    pub books_per_language: BTreeMap<String, usize>,
    pub n_missing_comet: usize,
    pub n_missing_align: usize,
}

pub fn ingest_check(path: &Path) -> Result<IngestSummary, PipelineError> {
    let records = load_records(path)?;
    let books = book_entries(&records).map_err(|e| PipelineError::Data(e.to_string()))?;
    let mut per_source = BTreeMap::new();
    for r in &records {
        *per_source.entry(r.source_type.to_string()).or_insert(0) += 1;
    }
    let mut books_per_language = BTreeMap::new();
    for b in books.iter().filter(|b| b.class_label == ClassLabel::Translated) {
        *books_per_language.entry(b.source_lang.clone()).or_insert(0) += 1;
    }
    let translated: Vec<&ParagraphRecord> = records.iter().filter(|r| r.is_translated()).collect();
    Ok(IngestSummary {
        n_records: records.len(),
        n_original: records.len() - translated.len(),
        n_translated: translated.len(),
        n_books: books.len(),
        per_source,
        books_per_language,
        n_missing_comet: translated.iter().filter(|r| r.comet_kiwi.is_none()).count(),
        n_missing_align: translated.iter().filter(|r| r.align_sim.is_none()).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub seed: u64,
    pub n_ingested: usize,
    pub n_after_dedupe: usize,
    pub min_words: u32,
    pub n_after_min_length: usize,
    pub guardrails: FilterReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DroppedRow {
    seed: u64,
    record_id: String,
    source_type: SourceType,
    reason: String,
}

fn stage_filter(config: &PipelineConfig) -> Result<Outputs, PipelineError> {
    let records = load_records(&config.input)?;
    let n_ingested = records.len();
    let records = corpus::dedupe_works(records);
    let n_after_dedupe = records.len();
    let records = corpus::filter_min_length(records, config.min_words);
    let n_after_min_length = records.len();
    let (kept, report, dropped) = apply_guardrails(records, &config.guardrails).map_err(fail("guardrails"))?;
    let summary = FilterSummary {
        seed: config.seed,
        n_ingested,
        n_after_dedupe,
        min_words: config.min_words,
        n_after_min_length,
        guardrails: report,
    };
    let dropped: Vec<DroppedRow> = dropped
        .into_iter()
        .map(|d| DroppedRow {
            seed: config.seed,
            record_id: d.record_id,
            source_type: d.source_type,
            reason: d.reason.as_str().to_owned(),
        })
        .collect();
    Ok(vec![
        (FILTERED, corpus::serialize_records(&kept).into_bytes()),
        (FILTER_REPORT, json_bytes(&summary).map_err(fail("filter"))?),
        (DROPPED, csv_bytes(&dropped).map_err(fail("filter"))?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub seed: u64,
    pub bin: usize,
    pub label: String,
    pub original: usize,
    pub translated_available: usize,
    pub translated_kept: usize,
    pub shortfall: usize,
}

fn stage_sample(config: &PipelineConfig, out: &Path) -> Result<Outputs, PipelineError> {
    let records = read_jsonl(out, FILTERED)?;
    let originals: Vec<u32> = records
        .iter()
        .filter(|r| !r.is_translated())
        .map(|r| r.word_count)
        .collect();
    let bins = compute_length_bins(&originals, config.length_bins).map_err(fail("sampling"))?;
    let (kept, summary): (Vec<ParagraphRecord>, Vec<BinSummary>) = match config.sampling {
        SamplingMode::Downsampled => downsample_translated(records, &bins, config.seed),
        SamplingMode::Full => {
            let mut summary: Vec<BinSummary> = (0..bins.n_bins())
                .map(|b| BinSummary {
                    bin: b,
                    label: bins.label(b),
                    original: 0,
                    translated_available: 0,
                    translated_kept: 0,
                })
                .collect();
            for r in &records {
                let s = &mut summary[bins.bin_of(r.word_count)];
                match r.class_label {
                    ClassLabel::Original => s.original += 1,
                    ClassLabel::Translated => {
                        s.translated_available += 1;
                        s.translated_kept += 1;
                    }
                }
            }
            (records, summary)
        }
    };
    let rows: Vec<BinRow> = summary
        .iter()
        .map(|s| BinRow {
            seed: config.seed,
            bin: s.bin,
            label: s.label.clone(),
            original: s.original,
            translated_available: s.translated_available,
            translated_kept: s.translated_kept,
            shortfall: s.shortfall(),
        })
        .collect();
    Ok(vec![
        (SAMPLED, corpus::serialize_records(&kept).into_bytes()),
        (SAMPLING_SUMMARY, csv_bytes(&rows).map_err(fail("sampling"))?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub seed: u64,
    pub record_id: String,
    pub book_id: String,
    pub class_label: ClassLabel,
    pub source_type: SourceType,
    pub fold: usize,
    pub p_translated: f64,
    pub fluency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub weighting: String,
    pub sampling: String,
    pub n: usize,
    pub k_folds: usize,
    pub folds_converged: usize,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FoldRow {
    seed: u64,
    book_id: String,
    stratum: String,
    fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CvFoldRow {
    seed: u64,
    fold: usize,
    n_train: usize,
    n_test: usize,
    n_features: usize,
    converged: bool,
    iterations: usize,
    final_objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct VocabRow {
    seed: u64,
    gram: String,
    index: usize,
    corpus_freq: u64,
    idf: Option<f64>,
}

fn stage_train_cv(config: &PipelineConfig, out: &Path) -> Result<Outputs, PipelineError> {
    let records = read_jsonl(out, SAMPLED)?;
    let books = book_entries(&records).map_err(|e| PipelineError::Data(e.to_string()))?;
    let weighted = assign_sample_weights(records).map_err(fail("weights"))?;
    let folds = make_folds(&books, config.k_folds, config.seed).map_err(fail("folds"))?;
    check_group_purity(
        weighted
            .iter()
            .map(|w| (w.record.book_id.as_str(), folds.fold_of(&w.record.book_id).unwrap_or(usize::MAX))),
    )
    .map_err(fail("folds"))?;

    let cv = CvConfig {
        features: config.features,
        train: config.train,
        refit_features_per_fold: config.refit_features_per_fold,
    };
    let oof = cross_val_oof(&weighted, &folds, &cv).map_err(fail("cv"))?;

    let y: Vec<u8> = weighted.iter().map(|w| w.record.class_label.target()).collect();
    let p: Vec<f64> = oof.scores.iter().map(|s| s.p_translated).collect();
    let m = classifier_metrics(&y, &p, 0.5).map_err(fail("metrics"))?;
    let metrics = MetricsRow {
        seed: config.seed,
        weighting: config.features.weighting.to_string(),
        sampling: config.sampling.to_string(),
        n: m.n,
        k_folds: config.k_folds,
        folds_converged: oof.folds.iter().filter(|f| f.converged).count(),
        accuracy: m.accuracy,
        macro_f1: m.macro_f1,
        auc: m.auc,
    };

    // Final model on every record, for scoring new text.
    let corpus = evaluation::gram_corpus(&weighted, &config.features);
    let all: Vec<usize> = (0..weighted.len()).collect();
    let featurizer = Featurizer::fit(&corpus, &all, config.features).map_err(fail("final-model"))?;
    let x = featurizer.transform(&corpus, &all);
    let w: Vec<f64> = weighted.iter().map(|r| r.weight).collect();
    let model = classifier::train(&x, &y, &w, &config.train).map_err(fail("final-model"))?;
    let vocab_rows: Vec<VocabRow> = featurizer
        .vocab
        .entries
        .iter()
        .enumerate()
        .map(|(i, g)| VocabRow {
            seed: config.seed,
            gram: g.as_str().to_owned(),
            index: i,
            corpus_freq: featurizer.vocab.corpus_freq[i],
            idf: featurizer.idf.as_ref().map(|v| v[i]),
        })
        .collect();
    let mut model_bytes = Vec::new();
    ModelArtifact::new(featurizer, model).write(&mut model_bytes).map_err(fail("final-model"))?;
    model_bytes.push(b'\n');

    let stratum_of: HashMap<&str, &str> = folds
        .strata
        .iter()
        .flat_map(|s| s.book_ids.iter().map(move |b| (b.as_str(), s.label.as_str())))
        .collect();
    let fold_rows: Vec<FoldRow> = folds
        .mapping
        .iter()
        .map(|(b, &f)| FoldRow {
            seed: config.seed,
            book_id: b.clone(),
            stratum: stratum_of[b.as_str()].to_owned(),
            fold: f,
        })
        .collect();
    let score_rows: Vec<ScoreRow> = weighted
        .iter()
        .zip(&oof.scores)
        .map(|(w, s)| ScoreRow {
            seed: config.seed,
            record_id: s.record_id.clone(),
            book_id: w.record.book_id.clone(),
            class_label: w.record.class_label,
            source_type: w.record.source_type,
            fold: s.fold,
            p_translated: s.p_translated,
            fluency: s.fluency,
        })
        .collect();
    let mut cv_rows: Vec<CvFoldRow> = oof
        .folds
        .iter()
        .map(|f| CvFoldRow {
            seed: config.seed,
            fold: f.fold,
            n_train: f.n_train,
            n_test: f.n_test,
            n_features: f.n_features,
            converged: f.converged,
            iterations: f.iterations,
            final_objective: f.final_objective,
        })
        .collect();
    cv_rows.sort_by_key(|r| r.fold);

    let write = fail::<BoxError>("train-cv");
    let outputs = (|| -> Result<Outputs, BoxError> {
        Ok(vec![
            (FOLDS, csv_bytes(&fold_rows)?),
            (SCORES, csv_bytes(&score_rows)?),
            (CV_FOLDS, csv_bytes(&cv_rows)?),
            (METRICS, csv_bytes(&[metrics])?),
            (MODEL, model_bytes),
            (VOCAB, csv_bytes(&vocab_rows)?),
        ])
    })();
    outputs.map_err(write)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationRow {
    pub seed: u64,
    pub source: String,
    pub bin: String,
    pub n: usize,
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
    pub significant: bool,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadlineArtifact {
    pub seed: u64,
    pub n_translated_scored: usize,
    pub n_missing_comet: usize,
    pub headline: Headline,
}

/// Analysis rows, their `align_sim` values, and the number of translated
/// records skipped for lacking `comet_kiwi`.
pub type AnalysisInput = (Vec<AnalysisRow>, Vec<Option<f64>>, usize);

/// Translated records of the scored set joined with their out-of-fold
/// fluency. Records without an adequacy score are left out.
pub fn analysis_rows(records: &[ParagraphRecord], scores: &[ScoreRow]) -> Result<AnalysisInput, PipelineError> {
    let fluency: HashMap<&str, f64> = scores.iter().map(|s| (s.record_id.as_str(), s.fluency)).collect();
    let mut rows = Vec::new();
    let mut align = Vec::new();
    let mut n_missing = 0;
    for r in records.iter().filter(|r| r.is_translated()) {
        let Some(&f) = fluency.get(r.record_id.as_str()) else {
            return Err(PipelineError::Data(format!(
                "record `{}` has no out-of-fold score; rerun train-cv",
                r.record_id
            )));
        };
        let Some(comet) = r.comet_kiwi else {
            n_missing += 1;
            continue;
        };
        rows.push(AnalysisRow {
            source_type: r.source_type,
            variant_index: r.variant_index,
            fluency: f,
            comet_kiwi: comet,
            word_count: r.word_count,
        });
        align.push(r.align_sim);
    }
    Ok((rows, align, n_missing))
}

fn stage_correlate(config: &PipelineConfig, out: &Path) -> Result<Outputs, PipelineError> {
    let records = read_jsonl(out, SAMPLED)?;
    let scores: Vec<ScoreRow> = read_csv(out, SCORES)?;
    let (rows, align, n_missing) = analysis_rows(&records, &scores)?;
    let align: Option<Vec<f64>> = align.into_iter().collect();
    let table: Vec<CorrelationRow> = stratified_analysis(&rows, &config.analysis_bins)
        .into_iter()
        .map(|s| CorrelationRow {
            seed: config.seed,
            significant: s.significant(),
            rho: s.result.as_ref().map(|r| r.rho),
            p_value: s.result.as_ref().map(|r| r.p_value),
            status: s.skipped.map_or_else(|| "ok".to_owned(), |why| format!("skipped: {why}")),
            source: s.source,
            bin: s.bin,
            n: s.n,
        })
        .collect();
    let head = HeadlineArtifact {
        seed: config.seed,
        n_translated_scored: rows.len(),
        n_missing_comet: n_missing,
        headline: headline(&rows, align.as_deref()),
    };
    Ok(vec![
        (CORRELATIONS, csv_bytes(&table).map_err(fail("stats"))?),
        (HEADLINE, json_bytes(&head).map_err(fail("stats"))?),
    ])
}

fn fmt_opt(r: &Option<crate::stats::CorrelationResult>) -> String {
    match r {
        Some(r) => format!("{:.4} (p = {:.3e}, n = {})", r.rho, r.p_value, r.n),
        None => "undefined".to_owned(),
    }
}

fn stage_report(config: &PipelineConfig, out: &Path) -> Result<Outputs, PipelineError> {
    use std::fmt::Write;
    let filter: FilterSummary = read_json(out, FILTER_REPORT)?;
    let bins: Vec<BinRow> = read_csv(out, SAMPLING_SUMMARY)?;
    let metrics: Vec<MetricsRow> = read_csv(out, METRICS)?;
    let head: HeadlineArtifact = read_json(out, HEADLINE)?;
    let corr: Vec<CorrelationRow> = read_csv(out, CORRELATIONS)?;

    let mut s = String::new();
    let g = &filter.guardrails;
    let _ = writeln!(s, "# Run report (seed {})\n", config.seed);
    let _ = writeln!(s, "## Filtering\n");
    let _ = writeln!(s, "- ingested: {}", filter.n_ingested);
    let _ = writeln!(s, "- after work dedupe: {}", filter.n_after_dedupe);
    let _ = writeln!(s, "- after min length ({} words): {}", filter.min_words, filter.n_after_min_length);
    let _ = writeln!(
        s,
        "- removed by length consistency: {}, by alignment: {} ({:.2}% of translations)",
        g.n_removed_length_consistency,
        g.n_removed_alignment,
        100.0 * g.translated_removal_fraction
    );
    let _ = writeln!(s, "\n## Sampling ({})\n", config.sampling);
    let _ = writeln!(s, "| bin | original | available | kept |\n|---|---|---|---|");
    for b in &bins {
        let _ = writeln!(s, "| {} | {} | {} | {} |", b.label, b.original, b.translated_available, b.translated_kept);
    }
    let _ = writeln!(s, "\n## Classifier ({} features)\n", config.features.weighting);
    for m in &metrics {
        let _ = writeln!(
            s,
            "accuracy {:.3}, macro-F1 {:.3}, AUC {:.3} over {} paragraphs; {}/{} folds converged",
            m.accuracy, m.macro_f1, m.auc, m.n, m.folds_converged, m.k_folds
        );
    }
    let h = &head.headline;
    let _ = writeln!(s, "\n## Correlations ({} scored translations)\n", head.n_translated_scored);
    let _ = writeln!(s, "- fluency vs adequacy: {}", fmt_opt(&h.fluency_comet));
    let _ = writeln!(s, "- fluency vs adequacy, short: {}", fmt_opt(&h.fluency_comet_short));
    let _ = writeln!(s, "- fluency vs adequacy, long: {}", fmt_opt(&h.fluency_comet_long));
    let _ = writeln!(s, "- length vs adequacy: {}", fmt_opt(&h.length_comet));
    let _ = writeln!(s, "- length vs fluency: {}", fmt_opt(&h.length_fluency));
    let _ = writeln!(s, "- length vs alignment: {}", fmt_opt(&h.length_align));
    let _ = writeln!(s, "- partial, controlling length: {}", fmt_opt(&h.partial));
    for (source, r) in &h.partial_by_source {
        let _ = writeln!(s, "- partial, {source}: {}", fmt_opt(&Some(r.clone())));
    }
    let _ = writeln!(s, "\n| source | bin | n | rho | p |\n|---|---|---|---|---|");
    for c in &corr {
        let star = if c.significant { "*" } else { "" };
        match (c.rho, c.p_value) {
            (Some(r), Some(p)) => {
                let _ = writeln!(s, "| {} | {} | {} | {:.4}{star} | {:.3e} |", c.source, c.bin, c.n, r, p);
            }
            _ => {
                let _ = writeln!(s, "| {} | {} | {} | - | {} |", c.source, c.bin, c.n, c.status);
            }
        }
    }
    Ok(vec![(REPORT, s.into_bytes())])
}

fn run_one(stage: Stage, config: &PipelineConfig) -> Result<Outputs, PipelineError> {
    let out = &config.output_dir;
    match stage {
        Stage::Filter => stage_filter(config),
        Stage::Sample => stage_sample(config, out),
        Stage::TrainCv => stage_train_cv(config, out),
        Stage::Correlate => stage_correlate(config, out),
        Stage::Report => stage_report(config, out),
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), PipelineError> {
    let bytes = json_bytes(m).map_err(fail("manifest"))?;
    fs::write(dir.join(MANIFEST), bytes).map_err(fail("manifest"))
}

/// Runs `stages` in order. Running every stage starts a fresh manifest;
/// running a subset updates the existing one.
pub fn run_stages(config: &PipelineConfig, stages: &[Stage]) -> Result<Manifest, PipelineError> {
    config.validate()?;
    if stages.contains(&Stage::Filter) {
        config.check_input_exists()?;
    }
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(fail("output"))?;

    let full = Stage::ALL.iter().all(|s| stages.contains(s));
    let mut manifest = match Manifest::read(out) {
        Some(old) if !full => Manifest {
            input_file: old.input_file,
            input_sha256: old.input_sha256,
            stages_completed: old.stages_completed,
            artifacts: old.artifacts,
            ..Manifest::new(config)
        },
        _ => Manifest::new(config),
    };
    if stages.contains(&Stage::Filter) {
        let bytes = fs::read(&config.input).map_err(|e| PipelineError::Data(format!("{}: {e}", config.input.display())))?;
        manifest.input_sha256 = Some(sha256_hex(&bytes));
        manifest.input_file = config.input.file_name().map(|f| f.to_string_lossy().into_owned());
    }

    for &stage in stages {
        let result = run_one(stage, config).and_then(|outputs| {
            for (name, bytes) in outputs {
                fs::write(out.join(name), &bytes).map_err(fail("output"))?;
                manifest.artifacts.insert(name.to_owned(), sha256_hex(&bytes));
            }
            Ok(())
        });
        if let Err(e) = result {
            let e = PipelineError::Stage { stage, source: Box::new(e) };
            manifest.status = RunStatus::Failed;
            manifest.failed_stage = Some(stage.to_string());
            manifest.error = Some(e.to_string());
            write_manifest(out, &manifest)?;
            return Err(e);
        }
        manifest.stages_completed.retain(|s| s != stage.as_str());
        manifest.stages_completed.push(stage.to_string());
    }
    write_manifest(out, &manifest)?;
    Ok(manifest)
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<Manifest, PipelineError> {
    run_stages(config, &Stage::ALL)
}

pub const DEFAULT_GRID: [(Weighting, SamplingMode); 4] = [
    (Weighting::Tfidf, SamplingMode::Downsampled),
    (Weighting::Tfidf, SamplingMode::Full),
    (Weighting::Count, SamplingMode::Downsampled),
    (Weighting::Count, SamplingMode::Full),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub seed: u64,
    pub weighting: String,
    pub sampling: String,
    pub n: usize,
    pub length_fluency_rho: Option<f64>,
    pub length_fluency_p: Option<f64>,
    pub partial_rho: Option<f64>,
    pub partial_p: Option<f64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub auc: f64,
}

pub fn grid_cell_dir(base: &Path, weighting: Weighting, sampling: SamplingMode) -> PathBuf {
    base.join("grid").join(format!("{weighting}-{sampling}"))
}

/// Runs the full pipeline once per (weighting, sampling) cell, each in its own
/// subdirectory, and writes one summary row per cell to `grid.csv`.
pub fn run_variant_grid(
    config: &PipelineConfig,
    cells: &[(Weighting, SamplingMode)],
) -> Result<Vec<GridRow>, PipelineError> {
    config.validate()?;
    config.check_input_exists()?;
    let mut rows = Vec::with_capacity(cells.len());
    for &(weighting, sampling) in cells {
        let mut cell = config.clone();
        cell.features.weighting = weighting;
        cell.sampling = sampling;
        cell.output_dir = grid_cell_dir(&config.output_dir, weighting, sampling);
        run_pipeline(&cell)?;
        let metrics: Vec<MetricsRow> = read_csv(&cell.output_dir, METRICS)?;
        let m = metrics.into_iter().next().ok_or_else(|| missing(&cell.output_dir, METRICS))?;
        let head: HeadlineArtifact = read_json(&cell.output_dir, HEADLINE)?;
        let lf = head.headline.length_fluency.as_ref();
        let partial = head.headline.partial.as_ref();
        rows.push(GridRow {
            seed: config.seed,
            weighting: weighting.to_string(),
            sampling: sampling.to_string(),
            n: m.n,
            length_fluency_rho: lf.map(|r| r.rho),
            length_fluency_p: lf.map(|r| r.p_value),
            partial_rho: partial.map(|r| r.rho),
            partial_p: partial.map(|r| r.p_value),
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            auc: m.auc,
        });
    }
    fs::create_dir_all(&config.output_dir).map_err(fail("output"))?;
    let bytes = csv_bytes(&rows).map_err(fail("grid"))?;
    fs::write(config.output_dir.join(GRID), bytes).map_err(fail("grid"))?;
    Ok(rows)
}
