//! Pre-analysis filters: LLM length consistency against the Google output of
//! the same source paragraph, then source/translation embedding similarity.
//! Neither filter looks at `comet_kiwi`.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ParagraphRecord, SourceType};

pub const DEFAULT_MAX_EXCESS_CHARS: usize = 500;

#[derive(Debug, Error, PartialEq)]
pub enum GuardrailError {
    #[error("translated record `{0}` has no align_sim")]
    MissingAlignSim(String),
    #[error("invalid alignment mode: {0}")]
    BadMode(String),
}

/// Characters counted as Unicode scalar values.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Keep,
    Drop,
}

/// Drops an LLM translation that is more than `max_excess_chars` longer than
/// the Google translation of the same paragraph. Without a Google pair the
/// record is kept (and the caller should warn).
pub fn length_consistency_filter(
    llm: &ParagraphRecord,
    google: Option<&ParagraphRecord>,
    max_excess_chars: usize,
) -> Decision {
    match google {
        Some(g) if char_len(&llm.english_text) > char_len(&g.english_text) + max_excess_chars => {
            Decision::Drop
        }
        _ => Decision::Keep,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Drop translated records with `align_sim < tau`.
    Absolute { tau: f64 },
    /// Drop the lowest `q` fraction (floor) of translated records.
    Percentile { q: f64 },
}

impl Default for AlignmentMode {
    fn default() -> Self {
        AlignmentMode::Percentile { q: 0.02 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingAlignPolicy {
    #[default]
    Error,
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardrailConfig {
    pub max_excess_chars: usize,
    pub alignment: AlignmentMode,
    pub missing_align: MissingAlignPolicy,
}

impl Default for GuardrailConfig {
    fn default() -> Self {
        GuardrailConfig {
            max_excess_chars: DEFAULT_MAX_EXCESS_CHARS,
            alignment: AlignmentMode::default(),
            missing_align: MissingAlignPolicy::Error,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    LengthConsistency,
    LowAlignment,
    MissingAlignment,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::LengthConsistency => "length_consistency",
            DropReason::LowAlignment => "low_alignment",
            DropReason::MissingAlignment => "missing_alignment",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRecord {
    pub record_id: String,
    pub source_type: SourceType,
    pub reason: DropReason,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub n_input: usize,
    pub n_translated_input: usize,
    pub n_kept: usize,
    pub n_removed_length_consistency: usize,
    pub n_removed_alignment: usize,
    /// Removed over `n_input`.
    pub removal_fraction: f64,
    /// Removed over `n_translated_input`.
    pub translated_removal_fraction: f64,
    pub per_source_removed: BTreeMap<String, usize>,
    /// `tau` in absolute mode; the similarity of the last removed record in
    /// percentile mode (`None` if nothing was removed).
    pub threshold_used: Option<f64>,
    /// LLM records without a Google counterpart (kept unchecked).
    pub n_unpaired_llm: usize,
}

impl FilterReport {
    pub fn n_removed(&self) -> usize {
        self.n_removed_length_consistency + self.n_removed_alignment
    }

    fn finish(&mut self, dropped: &[DroppedRecord]) {
        self.n_removed_length_consistency = dropped
            .iter()
            .filter(|d| d.reason == DropReason::LengthConsistency)
            .count();
        self.n_removed_alignment = dropped.len() - self.n_removed_length_consistency;
        self.n_kept = self.n_input - dropped.len();
        self.removal_fraction = ratio(dropped.len(), self.n_input);
        self.translated_removal_fraction = ratio(dropped.len(), self.n_translated_input);
        self.per_source_removed.clear();
        for d in dropped {
            *self.per_source_removed.entry(d.source_type.to_string()).or_insert(0) += 1;
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Applies the length-consistency rule to every LLM record, pairing it with
/// the Google record sharing its source paragraph (`book_id`, `source_text`).
pub fn apply_length_consistency(
    records: Vec<ParagraphRecord>,
    max_excess_chars: usize,
) -> (Vec<ParagraphRecord>, Vec<DroppedRecord>, usize) {
    let google: HashMap<(&str, &str), &ParagraphRecord> = records
        .iter()
        .filter(|r| r.source_type == SourceType::Google)
        .map(|r| (r.source_key(), r))
        .collect();
    let mut unpaired = 0;
    let remove: Vec<bool> = records
        .iter()
        .map(|r| {
            if r.source_type != SourceType::Llm {
                return false;
            }
            let pair = google.get(&r.source_key()).copied();
            if pair.is_none() {
                unpaired += 1;
            }
            length_consistency_filter(r, pair, max_excess_chars) == Decision::Drop
        })
        .collect();
    drop(google);
    let mut dropped = Vec::new();
    let kept = records
        .into_iter()
        .zip(remove)
        .filter_map(|(r, d)| {
            if d {
                dropped.push(DroppedRecord {
                    record_id: r.record_id,
                    source_type: r.source_type,
                    reason: DropReason::LengthConsistency,
                });
                None
            } else {
                Some(r)
            }
        })
        .collect();
    (kept, dropped, unpaired)
}

/// Embedding-similarity filter over translated records. Original records are
/// never removed.
pub fn alignment_filter(
    records: Vec<ParagraphRecord>,
    mode: AlignmentMode,
    missing: MissingAlignPolicy,
) -> Result<(Vec<ParagraphRecord>, FilterReport, Vec<DroppedRecord>), GuardrailError> {
    let mut remove = vec![None; records.len()];
    let mut scored: Vec<(f64, &str, usize)> = Vec::new();
    for (i, r) in records.iter().enumerate().filter(|(_, r)| r.is_translated()) {
        match r.align_sim {
            Some(s) => scored.push((s, &r.record_id, i)),
            None => match missing {
                MissingAlignPolicy::Error => {
                    return Err(GuardrailError::MissingAlignSim(r.record_id.clone()))
                }
                MissingAlignPolicy::Drop => remove[i] = Some(DropReason::MissingAlignment),
            },
        }
    }
    let threshold_used = match mode {
        AlignmentMode::Absolute { tau } => {
            if !tau.is_finite() {
                return Err(GuardrailError::BadMode(format!("tau {tau}")));
            }
            for &(s, _, i) in &scored {
                if s < tau {
                    remove[i] = Some(DropReason::LowAlignment);
                }
            }
            Some(tau)
        }
        AlignmentMode::Percentile { q } => {
            if !(0.0..=1.0).contains(&q) {
                return Err(GuardrailError::BadMode(format!("q {q} outside [0, 1]")));
            }
            let n_translated = records.iter().filter(|r| r.is_translated()).count();
            let cut = ((q * n_translated as f64).floor() as usize).min(scored.len());
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
            for &(_, _, i) in &scored[..cut] {
                remove[i] = Some(DropReason::LowAlignment);
            }
            cut.checked_sub(1).map(|last| scored[last].0)
        }
    };

    let mut report = FilterReport {
        n_input: records.len(),
        n_translated_input: records.iter().filter(|r| r.is_translated()).count(),
        threshold_used,
        ..Default::default()
    };
    let mut dropped = Vec::new();
    let kept = records
        .into_iter()
        .zip(remove)
        .filter_map(|(r, reason)| match reason {
            Some(reason) => {
                dropped.push(DroppedRecord {
                    record_id: r.record_id,
                    source_type: r.source_type,
                    reason,
                });
                None
            }
            None => Some(r),
        })
        .collect();
    report.finish(&dropped);
    Ok((kept, report, dropped))
}

/// Length consistency, then alignment, with a combined report.
pub fn apply_guardrails(
    records: Vec<ParagraphRecord>,
    config: &GuardrailConfig,
) -> Result<(Vec<ParagraphRecord>, FilterReport, Vec<DroppedRecord>), GuardrailError> {
    let n_input = records.len();
    let n_translated_input = records.iter().filter(|r| r.is_translated()).count();
    let (after_length, mut dropped, unpaired) =
        apply_length_consistency(records, config.max_excess_chars);
    let (kept, align_report, align_dropped) =
        alignment_filter(after_length, config.alignment, config.missing_align)?;
    dropped.extend(align_dropped);
    let mut report = FilterReport {
        n_input,
        n_translated_input,
        threshold_used: align_report.threshold_used,
        n_unpaired_llm: unpaired,
        ..Default::default()
    };
    report.finish(&dropped);
    Ok((kept, report, dropped))
}
