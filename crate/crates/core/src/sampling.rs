//! Length-bin downsampling of the translated class and `1/n` sample weights.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{ClassLabel, ParagraphRecord};
use crate::seed::substream;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SamplingError {
    #[error("cannot derive length bins from an empty set of word counts")]
    EmptyCounts,
    #[error("number of bins must be at least 1")]
    ZeroBins,
    #[error("record `{0}` has n_variants < 1")]
    BadVariantCount(String),
}

/// Word-count cut points. A count `w` falls in bin `i` where `i` is the number
/// of cut points strictly below `w`, so bin 0 is `(-inf, b0]` and the last bin
/// is `(b_last, inf)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthBins {
    pub boundaries: Vec<u32>,
    /// Number of bins asked for; `n_bins()` may be smaller after merging.
    pub requested: usize,
}

impl LengthBins {
    pub fn n_bins(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn bin_of(&self, word_count: u32) -> usize {
        self.boundaries.partition_point(|&b| b < word_count)
    }

    pub fn label(&self, bin: usize) -> String {
        let lo = if bin == 0 { None } else { Some(self.boundaries[bin - 1] + 1) };
        let hi = self.boundaries.get(bin).copied();
        match (lo, hi) {
            (None, None) => "all".into(),
            (None, Some(h)) => format!("<={h}"),
            (Some(l), Some(h)) => format!("{l}-{h}"),
            (Some(l), None) => format!(">={l}"),
        }
    }
}

/// Empirical `i/k` quantiles (value at sorted index `ceil(i*n/k) - 1`) of the
/// original-class word counts. Repeated cut points are merged, and a cut at
/// the maximum is dropped since it would leave an empty top bin.
pub fn compute_length_bins(counts: &[u32], k: usize) -> Result<LengthBins, SamplingError> {
    if counts.is_empty() {
        return Err(SamplingError::EmptyCounts);
    }
    if k == 0 {
        return Err(SamplingError::ZeroBins);
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let max = sorted[n - 1];
    let mut boundaries: Vec<u32> = (1..k)
        .map(|i| sorted[(i * n).div_ceil(k) - 1])
        .filter(|&b| b < max)
        .collect();
    boundaries.dedup();
    Ok(LengthBins {
        boundaries,
        requested: k,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinSummary {
    pub bin: usize,
    pub label: String,
    pub original: usize,
    pub translated_available: usize,
    pub translated_kept: usize,
}

impl BinSummary {
    pub fn shortfall(&self) -> usize {
        self.original - self.translated_kept.min(self.original)
    }
}

/// Keeps, per length bin, `min(original, available)` translated records drawn
/// uniformly without replacement. Original records pass through. Output keeps
/// input order; the selection depends only on the record ids, their bins and
/// the seed.
pub fn downsample_translated(
    records: Vec<ParagraphRecord>,
    bins: &LengthBins,
    seed: u64,
) -> (Vec<ParagraphRecord>, Vec<BinSummary>) {
    let nb = bins.n_bins();
    let mut original = vec![0usize; nb];
    let mut candidates: Vec<Vec<&str>> = vec![Vec::new(); nb];
    for r in &records {
        let b = bins.bin_of(r.word_count);
        match r.class_label {
            ClassLabel::Original => original[b] += 1,
            ClassLabel::Translated => candidates[b].push(&r.record_id),
        }
    }

    let mut rng = substream(seed, "sampling");
    let mut kept: BTreeSet<String> = BTreeSet::new();
    let mut summary = Vec::with_capacity(nb);
    for (b, ids) in candidates.iter_mut().enumerate() {
        ids.sort_unstable();
        let take = original[b].min(ids.len());
        ids.shuffle(&mut rng);
        kept.extend(ids[..take].iter().map(|s| s.to_string()));
        summary.push(BinSummary {
            bin: b,
            label: bins.label(b),
            original: original[b],
            translated_available: ids.len(),
            translated_kept: take,
        });
    }

    let out = records
        .into_iter()
        .filter(|r| !r.is_translated() || kept.contains(&r.record_id))
        .collect();
    (out, summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedRecord {
    pub record: ParagraphRecord,
    pub weight: f64,
}

pub fn sample_weight(record: &ParagraphRecord) -> Result<f64, SamplingError> {
    if record.n_variants < 1 {
        return Err(SamplingError::BadVariantCount(record.record_id.clone()));
    }
    Ok(match record.class_label {
        ClassLabel::Original => 1.0,
        ClassLabel::Translated => 1.0 / f64::from(record.n_variants),
    })
}

pub fn assign_sample_weights(
    records: Vec<ParagraphRecord>,
) -> Result<Vec<WeightedRecord>, SamplingError> {
    records
        .into_iter()
        .map(|record| {
            let weight = sample_weight(&record)?;
            Ok(WeightedRecord { record, weight })
        })
        .collect()
}
