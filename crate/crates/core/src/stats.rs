//! Rank statistics: Spearman and partial Spearman correlation with
//! t-approximation (or permutation) p-values, and the stratified
//! source x length-bin tables built on them.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::corpus::SourceType;
use crate::seed::substream;

pub const SIGNIFICANCE_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("non-finite input value")]
    NonFinite,
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("need at least {min} observations, got {n}")]
    TooFew { n: usize, min: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("control variable is perfectly rank-correlated with {0}")]
    DegenerateControl(&'static str),
    #[error("invalid analysis bins: {0}")]
    BadBins(String),
}

/// 1-based fractional ranks; tied values share the mean of their positions.
pub fn rankdata(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // Positions start+1 ..= end share their average.
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    Ok(ranks)
}

/// Pearson correlation; `None` when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Two-sided p-value of a correlation `rho` under `t = rho * sqrt(df / (1 - rho^2))`.
pub fn correlation_p_value(rho: f64, df: f64) -> f64 {
    let denom = 1.0 - rho * rho;
    if denom <= 0.0 {
        return 0.0;
    }
    let t = rho * (df / denom).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("df is positive");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub rho: f64,
    pub p_value: f64,
    pub n: usize,
    pub variables: (String, String),
    pub controlled_for: Option<String>,
}

impl CorrelationResult {
    pub fn significant(&self) -> bool {
        self.p_value < SIGNIFICANCE_LEVEL
    }

    pub fn named(mut self, x: &str, y: &str) -> Self {
        self.variables = (x.to_owned(), y.to_owned());
        self
    }

    pub fn controlling(mut self, z: &str) -> Self {
        self.controlled_for = Some(z.to_owned());
        self
    }
}

fn check_inputs(lens: &[usize], min: usize) -> Result<usize, StatsError> {
    let n = lens[0];
    if lens.iter().any(|&l| l != n) {
        return Err(StatsError::LengthMismatch);
    }
    if n < min {
        return Err(StatsError::TooFew { n, min });
    }
    Ok(n)
}

/// Spearman correlation: Pearson correlation of the rank vectors, with a
/// t(n-2) p-value.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult, StatsError> {
    let n = check_inputs(&[x.len(), y.len()], 3)?;
    let (rx, ry) = (rankdata(x)?, rankdata(y)?);
    let rho = rank_correlation(&rx, &ry, "x", "y")?;
    Ok(CorrelationResult {
        rho,
        p_value: correlation_p_value(rho, (n - 2) as f64),
        n,
        variables: ("x".into(), "y".into()),
        controlled_for: None,
    })
}

fn rank_correlation(a: &[f64], b: &[f64], na: &'static str, nb: &'static str) -> Result<f64, StatsError> {
    let first = a[0];
    if a.iter().all(|&v| v == first) {
        return Err(StatsError::ZeroVariance(na));
    }
    pearson(a, b).ok_or(StatsError::ZeroVariance(nb))
}

/// First-order partial rank correlation of `x` and `y` controlling for `z`,
/// with a t(n-3) p-value.
pub fn partial_spearman(x: &[f64], y: &[f64], z: &[f64]) -> Result<CorrelationResult, StatsError> {
    let n = check_inputs(&[x.len(), y.len(), z.len()], 4)?;
    let (rx, ry, rz) = (rankdata(x)?, rankdata(y)?, rankdata(z)?);
    let rho = partial_from_ranks(&rx, &ry, &rz)?;
    Ok(CorrelationResult {
        rho,
        p_value: correlation_p_value(rho, (n - 3) as f64),
        n,
        variables: ("x".into(), "y".into()),
        controlled_for: Some("z".into()),
    })
}

/// `1 - r^2` at or below this counts as a perfectly collinear control.
const DEGENERATE_EPS: f64 = 1e-12;

fn partial_from_ranks(rx: &[f64], ry: &[f64], rz: &[f64]) -> Result<f64, StatsError> {
    let rxy = rank_correlation(rx, ry, "x", "y")?;
    let rxz = rank_correlation(rz, rx, "z", "x")?;
    let ryz = rank_correlation(rz, ry, "z", "y")?;
    let dx = 1.0 - rxz * rxz;
    let dy = 1.0 - ryz * ryz;
    if dx <= DEGENERATE_EPS {
        return Err(StatsError::DegenerateControl("x"));
    }
    if dy <= DEGENERATE_EPS {
        return Err(StatsError::DegenerateControl("y"));
    }
    Ok(((rxy - rxz * ryz) / (dx * dy).sqrt()).clamp(-1.0, 1.0))
}

/// Residuals of `v` after least-squares regression on `z`.
fn residualize(v: &[f64], z: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let mv = v.iter().sum::<f64>() / n;
    let mz = z.iter().sum::<f64>() / n;
    let szz: f64 = z.iter().map(|a| (a - mz).powi(2)).sum();
    let svz: f64 = v.iter().zip(z).map(|(a, b)| (a - mv) * (b - mz)).sum();
    let slope = if szz == 0.0 { 0.0 } else { svz / szz };
    v.iter().zip(z).map(|(a, b)| (a - mv) - slope * (b - mz)).collect()
}

/// Permutation p-value for Spearman (`z = None`) or partial Spearman. For the
/// partial statistic the rank residuals of `x` given `z` are permuted.
pub fn permutation_p_value(
    x: &[f64],
    y: &[f64],
    z: Option<&[f64]>,
    iterations: usize,
    seed: u64,
) -> Result<f64, StatsError> {
    let (rx, ry) = (rankdata(x)?, rankdata(y)?);
    let (mut a, b) = match z {
        None => {
            check_inputs(&[x.len(), y.len()], 3)?;
            (rx, ry)
        }
        Some(z) => {
            check_inputs(&[x.len(), y.len(), z.len()], 4)?;
            let rz = rankdata(z)?;
            (residualize(&rx, &rz), residualize(&ry, &rz))
        }
    };
    let observed = pearson(&a, &b).ok_or(StatsError::ZeroVariance("x"))?.abs();
    let mut rng = substream(seed, "permutation");
    let mut hits = 0usize;
    for _ in 0..iterations {
        a.shuffle(&mut rng);
        let r = pearson(&a, &b).unwrap_or(0.0).abs();
        if r >= observed - 1e-12 {
            hits += 1;
        }
    }
    Ok((hits + 1) as f64 / (iterations + 1) as f64)
}

/// Word-count interval, inclusive; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LengthInterval {
    pub lo: u32,
    pub hi: Option<u32>,
}

impl LengthInterval {
    pub fn contains(&self, w: u32) -> bool {
        w >= self.lo && self.hi.is_none_or(|h| w <= h)
    }
}

impl fmt::Display for LengthInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hi {
            Some(h) => write!(f, "{}-{}", self.lo, h),
            None => write!(f, "{}+", self.lo),
        }
    }
}

/// Contiguous ascending word-count bins, the last one open-ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalysisBins {
    intervals: Vec<LengthInterval>,
}

impl AnalysisBins {
    pub fn new(intervals: Vec<LengthInterval>) -> Result<Self, StatsError> {
        if intervals.is_empty() {
            return Err(StatsError::BadBins("no intervals".into()));
        }
        for w in intervals.windows(2) {
            match w[0].hi {
                Some(h) if h >= w[0].lo && w[1].lo == h + 1 => {}
                _ => {
                    return Err(StatsError::BadBins(format!(
                        "`{}` and `{}` are not contiguous",
                        w[0], w[1]
                    )))
                }
            }
        }
        let last = intervals[intervals.len() - 1];
        if last.hi.is_some() {
            return Err(StatsError::BadBins(format!("last interval `{last}` must be open (`N+`)")));
        }
        Ok(AnalysisBins { intervals })
    }

    pub fn intervals(&self) -> &[LengthInterval] {
        &self.intervals
    }

    pub fn bin_of(&self, w: u32) -> Option<usize> {
        self.intervals.iter().position(|i| i.contains(w))
    }
}

impl Default for AnalysisBins {
    fn default() -> Self {
        "20-30,31-60,61-100,101+".parse().expect("default bins are valid")
    }
}

impl FromStr for AnalysisBins {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |p: &str| StatsError::BadBins(format!("cannot parse interval `{p}`"));
        let intervals = s
            .split(',')
            .map(str::trim)
            .map(|p| {
                if let Some(lo) = p.strip_suffix('+') {
                    Ok(LengthInterval { lo: lo.trim().parse().map_err(|_| bad(p))?, hi: None })
                } else {
                    let (lo, hi) = p.split_once('-').ok_or_else(|| bad(p))?;
                    Ok(LengthInterval {
                        lo: lo.trim().parse().map_err(|_| bad(p))?,
                        hi: Some(hi.trim().parse().map_err(|_| bad(p))?),
                    })
                }
            })
            .collect::<Result<Vec<_>, StatsError>>()?;
        AnalysisBins::new(intervals)
    }
}

impl fmt::Display for AnalysisBins {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, b) in self.intervals.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// One translated paragraph as seen by the correlation analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub source_type: SourceType,
    pub variant_index: u32,
    pub fluency: f64,
    pub comet_kiwi: f64,
    pub word_count: u32,
}

pub const ALL: &str = "all";
pub const POOLED_HUMAN: &str = "pooled-human";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumRow {
    pub source: String,
    pub bin: String,
    pub n: usize,
    pub result: Option<CorrelationResult>,
    /// Why no result was produced.
    pub skipped: Option<String>,
}

impl StratumRow {
    pub fn significant(&self) -> bool {
        self.result.as_ref().is_some_and(CorrelationResult::significant)
    }
}

fn source_groups(rows: &[AnalysisRow]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = vec![(ALL.into(), (0..rows.len()).collect())];
    let humans: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].source_type == SourceType::Human).collect();
    if !humans.is_empty() {
        let mut variants: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for &i in &humans {
            variants.entry(rows[i].variant_index).or_default().push(i);
        }
        groups.push((POOLED_HUMAN.into(), humans));
        for (v, idx) in variants {
            groups.push((format!("human-{v}"), idx));
        }
    }
    for st in [SourceType::Google, SourceType::Llm] {
        let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].source_type == st).collect();
        if !idx.is_empty() {
            groups.push((st.to_string(), idx));
        }
    }
    groups
}

fn partial_on(rows: &[AnalysisRow], idx: &[usize]) -> Result<CorrelationResult, StatsError> {
    let fl: Vec<f64> = idx.iter().map(|&i| rows[i].fluency).collect();
    let cm: Vec<f64> = idx.iter().map(|&i| rows[i].comet_kiwi).collect();
    let wc: Vec<f64> = idx.iter().map(|&i| f64::from(rows[i].word_count)).collect();
    Ok(partial_spearman(&fl, &cm, &wc)?
        .named("fluency", "comet_kiwi")
        .controlling("word_count"))
}

/// Partial Spearman (fluency, comet | word_count) for every source group
/// crossed with every length bin plus the unbinned total.
pub fn stratified_analysis(rows: &[AnalysisRow], bins: &AnalysisBins) -> Vec<StratumRow> {
    let bin_of: Vec<Option<usize>> = rows.iter().map(|r| bins.bin_of(r.word_count)).collect();
    let mut out = Vec::new();
    for (source, idx) in source_groups(rows) {
        let mut cells: Vec<(String, Vec<usize>)> = bins
            .intervals()
            .iter()
            .enumerate()
            .map(|(b, iv)| (iv.to_string(), idx.iter().copied().filter(|&i| bin_of[i] == Some(b)).collect()))
            .collect();
        cells.push((ALL.into(), idx));
        for (bin, cell) in cells {
            let n = cell.len();
            let (result, skipped) = if n < 4 {
                (None, Some(format!("n = {n} < 4")))
            } else {
                match partial_on(rows, &cell) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            out.push(StratumRow { source: source.clone(), bin, n, result, skipped });
        }
    }
    out
}

/// The scalar correlations reported alongside the stratified table.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Headline {
    pub n: usize,
    pub fluency_comet: Option<CorrelationResult>,
    pub fluency_comet_short: Option<CorrelationResult>,
    pub fluency_comet_long: Option<CorrelationResult>,
    pub length_comet: Option<CorrelationResult>,
    pub length_fluency: Option<CorrelationResult>,
    pub length_align: Option<CorrelationResult>,
    pub partial: Option<CorrelationResult>,
    pub partial_by_source: BTreeMap<String, CorrelationResult>,
}

/// Paragraphs shorter than this count as "short" in the headline split.
pub const LONG_PARAGRAPH_WORDS: u32 = 100;

pub fn headline(rows: &[AnalysisRow], align_sim: Option<&[f64]>) -> Headline {
    let col = |f: &dyn Fn(&AnalysisRow) -> f64, idx: &[usize]| -> Vec<f64> {
        idx.iter().map(|&i| f(&rows[i])).collect()
    };
    let fl = |r: &AnalysisRow| r.fluency;
    let cm = |r: &AnalysisRow| r.comet_kiwi;
    let wc = |r: &AnalysisRow| f64::from(r.word_count);
    let all: Vec<usize> = (0..rows.len()).collect();
    let short: Vec<usize> = all.iter().copied().filter(|&i| rows[i].word_count < LONG_PARAGRAPH_WORDS).collect();
    let long: Vec<usize> = all.iter().copied().filter(|&i| rows[i].word_count >= LONG_PARAGRAPH_WORDS).collect();

    let sp = |a: Vec<f64>, b: Vec<f64>, na: &str, nb: &str| spearman(&a, &b).ok().map(|r| r.named(na, nb));
    let mut partial_by_source = BTreeMap::new();
    for (source, idx) in source_groups(rows) {
        if source == ALL || source.starts_with("human-") {
            continue;
        }
        if let Ok(r) = partial_on(rows, &idx) {
            partial_by_source.insert(source, r);
        }
    }
    Headline {
        n: rows.len(),
        fluency_comet: sp(col(&fl, &all), col(&cm, &all), "fluency", "comet_kiwi"),
        fluency_comet_short: sp(col(&fl, &short), col(&cm, &short), "fluency", "comet_kiwi"),
        fluency_comet_long: sp(col(&fl, &long), col(&cm, &long), "fluency", "comet_kiwi"),
        length_comet: sp(col(&wc, &all), col(&cm, &all), "word_count", "comet_kiwi"),
        length_fluency: sp(col(&wc, &all), col(&fl, &all), "word_count", "fluency"),
        length_align: align_sim
            .and_then(|a| sp(col(&wc, &all), a.to_vec(), "word_count", "align_sim")),
        partial: partial_on(rows, &all).ok(),
        partial_by_source,
    }
}
