//! POS n-gram featurization.
//!
//! Tags are opaque tokens. An n-gram is stored as its tags joined by a single
//! space; since tags never contain whitespace, byte order on the joined string
//! coincides with lexicographic order on the tag tuple.
//!
//! Fitting works on a [`GramCorpus`], which interns every gram of every
//! document once so that per-fold vocabularies only need to re-count ids.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("invalid n-gram range {min}..={max}")]
    BadRange { min: usize, max: usize },
    #[error("vocabulary term `{0}` occurs in no document")]
    ZeroDocumentFrequency(String),
    #[error("tf-idf weighting requires an idf vector")]
    MissingIdf,
    #[error("idf length {idf} does not match vocabulary size {vocab}")]
    IdfLength { idf: usize, vocab: usize },
    #[error("cannot fit features on an empty document set")]
    EmptyCorpus,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Gram(String);

impl Gram {
    pub fn from_tags<S: AsRef<str>>(tags: &[S]) -> Self {
        let mut s = String::new();
        for (i, t) in tags.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(t.as_ref());
        }
        Gram(s)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn order(&self) -> usize {
        self.0.split(' ').count()
    }
}

impl fmt::Display for Gram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NgramRange {
    pub min: usize,
    pub max: usize,
}

impl NgramRange {
    pub fn new(min: usize, max: usize) -> Result<Self, FeatureError> {
        if min == 0 || min > max {
            return Err(FeatureError::BadRange { min, max });
        }
        Ok(NgramRange { min, max })
    }
}

impl Default for NgramRange {
    fn default() -> Self {
        NgramRange { min: 1, max: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Tfidf,
    Count,
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Weighting::Tfidf => "tfidf",
            Weighting::Count => "count",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub ngram: NgramRange,
    pub max_features: usize,
    pub weighting: Weighting,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            ngram: NgramRange::default(),
            max_features: 20_000,
            weighting: Weighting::Tfidf,
        }
    }
}

fn for_each_window<S: AsRef<str>>(tags: &[S], range: NgramRange, mut f: impl FnMut(&[S])) {
    for n in range.min..=range.max {
        if n > tags.len() {
            break;
        }
        for w in tags.windows(n) {
            f(w);
        }
    }
}

/// All contiguous n-grams with their multiplicities.
pub fn extract_ngrams<S: AsRef<str>>(tags: &[S], range: NgramRange) -> BTreeMap<Gram, u32> {
    let mut bag = BTreeMap::new();
    for_each_window(tags, range, |w| *bag.entry(Gram::from_tags(w)).or_insert(0) += 1);
    bag
}

/// Documents as sorted `(gram id, count)` lists over a shared gram table.
#[derive(Debug, Clone, Default)]
pub struct GramCorpus {
    grams: Vec<Gram>,
    lookup: HashMap<Gram, u32>,
    docs: Vec<Vec<(u32, u32)>>,
}

impl GramCorpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_tag_sequences<'a, I, S>(docs: I, range: NgramRange) -> Self
    where
        I: IntoIterator<Item = &'a [S]>,
        S: AsRef<str> + 'a,
    {
        let mut c = Self::new();
        for tags in docs {
            c.push_tags(tags, range);
        }
        c
    }

    pub fn from_bags(bags: &[BTreeMap<Gram, u32>]) -> Self {
        let mut c = Self::new();
        for bag in bags {
            let mut doc: Vec<(u32, u32)> = bag.iter().map(|(g, &n)| (c.intern(g), n)).collect();
            doc.sort_unstable();
            c.docs.push(doc);
        }
        c
    }

    fn intern(&mut self, g: &Gram) -> u32 {
        if let Some(&id) = self.lookup.get(g) {
            return id;
        }
        let id = self.grams.len() as u32;
        self.grams.push(g.clone());
        self.lookup.insert(g.clone(), id);
        id
    }

    pub fn push_tags<S: AsRef<str>>(&mut self, tags: &[S], range: NgramRange) {
        let mut counts: HashMap<u32, u32> = HashMap::new();
        let mut key = String::new();
        for_each_window(tags, range, |w| {
            key.clear();
            for (i, t) in w.iter().enumerate() {
                if i > 0 {
                    key.push(' ');
                }
                key.push_str(t.as_ref());
            }
            let id = match self.lookup.get(key.as_str()) {
                Some(&id) => id,
                None => self.intern(&Gram(key.clone())),
            };
            *counts.entry(id).or_insert(0) += 1;
        });
        let mut doc: Vec<(u32, u32)> = counts.into_iter().collect();
        doc.sort_unstable();
        self.docs.push(doc);
    }

    pub fn n_docs(&self) -> usize {
        self.docs.len()
    }

    pub fn n_grams(&self) -> usize {
        self.grams.len()
    }

    pub fn gram(&self, id: u32) -> &Gram {
        &self.grams[id as usize]
    }

    pub fn doc(&self, i: usize) -> &[(u32, u32)] {
        &self.docs[i]
    }
}

impl std::borrow::Borrow<str> for Gram {
    fn borrow(&self) -> &str {
        &self.0
    }
}

#[derive(Deserialize)]
struct VocabularyData {
    entries: Vec<Gram>,
    corpus_freq: Vec<u64>,
    max_features: usize,
}

impl From<VocabularyData> for Vocabulary {
    fn from(d: VocabularyData) -> Self {
        let mut v = Vocabulary {
            entries: d.entries,
            corpus_freq: d.corpus_freq,
            max_features: d.max_features,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }
}

/// Column assignment for the selected n-grams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyData")]
pub struct Vocabulary {
    /// Grams in column order (lexicographic).
    pub entries: Vec<Gram>,
    /// Total occurrences of each column's gram in the fitting documents.
    pub corpus_freq: Vec<u64>,
    pub max_features: usize,
    #[serde(skip)]
    index: HashMap<Gram, u32>,
}

impl Vocabulary {
    fn from_selection(mut selected: Vec<(Gram, u64)>, max_features: usize) -> Self {
        selected.sort_by(|a, b| a.0.cmp(&b.0));
        let (entries, corpus_freq): (Vec<_>, Vec<_>) = selected.into_iter().unzip();
        let mut v = Vocabulary {
            entries,
            corpus_freq,
            max_features,
            index: HashMap::new(),
        };
        v.rebuild_index();
        v
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, g)| (g.clone(), i as u32))
            .collect();
    }

    /// Picks the `max_features` most frequent grams over `docs` (ties go to
    /// the lexicographically smaller gram).
    pub fn fit(corpus: &GramCorpus, docs: &[usize], max_features: usize) -> Self {
        let mut freq = vec![0u64; corpus.n_grams()];
        for &d in docs {
            for &(id, n) in corpus.doc(d) {
                freq[id as usize] += u64::from(n);
            }
        }
        let mut present: Vec<u32> = (0..freq.len() as u32).filter(|&i| freq[i as usize] > 0).collect();
        present.sort_unstable_by(|&a, &b| {
            freq[b as usize]
                .cmp(&freq[a as usize])
                .then_with(|| corpus.gram(a).cmp(corpus.gram(b)))
        });
        present.truncate(max_features);
        let selected = present
            .into_iter()
            .map(|id| (corpus.gram(id).clone(), freq[id as usize]))
            .collect();
        Self::from_selection(selected, max_features)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn column(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).map(|&c| c as usize)
    }

    /// Maps every gram id of `corpus` to its column, if any.
    pub fn column_map(&self, corpus: &GramCorpus) -> Vec<Option<u32>> {
        corpus
            .grams
            .iter()
            .map(|g| self.index.get(g).copied())
            .collect()
    }
}

/// Vocabulary over a set of gram multisets.
pub fn build_vocabulary(bags: &[BTreeMap<Gram, u32>], max_features: usize) -> Vocabulary {
    let corpus = GramCorpus::from_bags(bags);
    let all: Vec<usize> = (0..corpus.n_docs()).collect();
    Vocabulary::fit(&corpus, &all, max_features)
}

/// Smoothed idf: `ln((1 + N) / (1 + df)) + 1`.
pub fn idf_value(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

fn idf_from_df(df: &[usize], n_docs: usize, vocab: &Vocabulary) -> Result<Vec<f64>, FeatureError> {
    df.iter()
        .zip(&vocab.entries)
        .map(|(&d, g)| {
            if d == 0 {
                Err(FeatureError::ZeroDocumentFrequency(g.to_string()))
            } else {
                Ok(idf_value(n_docs, d))
            }
        })
        .collect()
}

pub fn fit_idf(bags: &[BTreeMap<Gram, u32>], vocab: &Vocabulary) -> Result<Vec<f64>, FeatureError> {
    let mut df = vec![0usize; vocab.len()];
    for bag in bags {
        for g in bag.keys() {
            if let Some(c) = vocab.column(g.as_str()) {
                df[c] += 1;
            }
        }
    }
    idf_from_df(&df, bags.len(), vocab)
}

/// One sparse row with strictly increasing column indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| v * dense[i as usize])
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn from_counts(mut counts: Vec<(u32, u32)>, weighting: Weighting, idf: Option<&[f64]>) -> Self {
        counts.sort_unstable();
        let indices: Vec<u32> = counts.iter().map(|&(c, _)| c).collect();
        let mut values: Vec<f64> = match weighting {
            Weighting::Count => counts.iter().map(|&(_, n)| f64::from(n)).collect(),
            Weighting::Tfidf => {
                let idf = idf.expect("checked by callers");
                counts.iter().map(|&(c, n)| f64::from(n) * idf[c as usize]).collect()
            }
        };
        if weighting == Weighting::Tfidf {
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                values.iter_mut().for_each(|v| *v /= norm);
            }
        }
        SparseRow { indices, values }
    }
}

fn check_idf(vocab: &Vocabulary, weighting: Weighting, idf: Option<&[f64]>) -> Result<(), FeatureError> {
    if weighting == Weighting::Tfidf {
        match idf {
            None => return Err(FeatureError::MissingIdf),
            Some(v) if v.len() != vocab.len() => {
                return Err(FeatureError::IdfLength { idf: v.len(), vocab: vocab.len() })
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Count or l2-normalized tf-idf row for one gram multiset; out-of-vocabulary
/// grams are ignored.
pub fn vectorize(
    bag: &BTreeMap<Gram, u32>,
    vocab: &Vocabulary,
    weighting: Weighting,
    idf: Option<&[f64]>,
) -> Result<SparseRow, FeatureError> {
    check_idf(vocab, weighting, idf)?;
    let counts = bag
        .iter()
        .filter_map(|(g, &n)| vocab.column(g.as_str()).map(|c| (c as u32, n)))
        .collect();
    Ok(SparseRow::from_counts(counts, weighting, idf))
}

/// Row-major sparse matrix (CSR).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub n_cols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    pub weighting: Weighting,
}

impl FeatureMatrix {
    pub fn from_rows(rows: Vec<SparseRow>, n_cols: usize, weighting: Weighting) -> Self {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let nnz = rows.iter().map(|r| r.indices.len()).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for r in rows {
            indices.extend(r.indices);
            values.extend(r.values);
            indptr.push(indices.len());
        }
        FeatureMatrix { n_cols, indptr, indices, values, weighting }
    }

    /// Dense input, zeros dropped.
    pub fn from_dense(rows: &[Vec<f64>], weighting: Weighting) -> Self {
        let n_cols = rows.first().map_or(0, Vec::len);
        let sparse = rows
            .iter()
            .map(|r| {
                let (indices, values) = r
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(i, &v)| (i as u32, v))
                    .unzip();
                SparseRow { indices, values }
            })
            .collect();
        Self::from_rows(sparse, n_cols, weighting)
    }

    pub fn n_rows(&self) -> usize {
        self.indptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn row_dot(&self, i: usize, dense: &[f64]) -> f64 {
        let (idx, val) = self.row(i);
        idx.iter().zip(val).map(|(&j, &v)| v * dense[j as usize]).sum()
    }

    /// `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows()).flat_map(move |i| {
            let (idx, val) = self.row(i);
            idx.iter().zip(val).map(move |(&j, &v)| (i, j as usize, v))
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n_cols]; self.n_rows()];
        for (i, j, v) in self.triplets() {
            out[i][j] = v;
        }
        out
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut indptr = Vec::with_capacity(rows.len() + 1);
        indptr.push(0);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for &r in rows {
            let (idx, val) = self.row(r);
            indices.extend_from_slice(idx);
            values.extend_from_slice(val);
            indptr.push(indices.len());
        }
        FeatureMatrix { n_cols: self.n_cols, indptr, indices, values, weighting: self.weighting }
    }
}

/// Vocabulary, idf and weighting fitted on one set of documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Featurizer {
    pub config: FeatureConfig,
    pub vocab: Vocabulary,
    pub idf: Option<Vec<f64>>,
}

impl Featurizer {
    pub fn fit(corpus: &GramCorpus, docs: &[usize], config: FeatureConfig) -> Result<Self, FeatureError> {
        if docs.is_empty() {
            return Err(FeatureError::EmptyCorpus);
        }
        let vocab = Vocabulary::fit(corpus, docs, config.max_features);
        let idf = match config.weighting {
            Weighting::Count => None,
            Weighting::Tfidf => {
                let columns = vocab.column_map(corpus);
                let mut df = vec![0usize; vocab.len()];
                for &d in docs {
                    for &(id, _) in corpus.doc(d) {
                        if let Some(c) = columns[id as usize] {
                            df[c as usize] += 1;
                        }
                    }
                }
                Some(idf_from_df(&df, docs.len(), &vocab)?)
            }
        };
        Ok(Featurizer { config, vocab, idf })
    }

    pub fn n_features(&self) -> usize {
        self.vocab.len()
    }

    /// Rows for `docs` of the corpus the featurizer may or may not have been
    /// fitted on.
    pub fn transform(&self, corpus: &GramCorpus, docs: &[usize]) -> FeatureMatrix {
        let columns = self.vocab.column_map(corpus);
        let rows = docs
            .iter()
            .map(|&d| {
                let counts = corpus
                    .doc(d)
                    .iter()
                    .filter_map(|&(id, n)| columns[id as usize].map(|c| (c, n)))
                    .collect();
                SparseRow::from_counts(counts, self.config.weighting, self.idf.as_deref())
            })
            .collect();
        FeatureMatrix::from_rows(rows, self.vocab.len(), self.config.weighting)
    }

    pub fn transform_tags<S: AsRef<str>>(&self, tags: &[S]) -> SparseRow {
        let bag = extract_ngrams(tags, self.config.ngram);
        vectorize(&bag, &self.vocab, self.config.weighting, self.idf.as_deref())
            .expect("fitted featurizer carries a consistent idf")
    }
}
