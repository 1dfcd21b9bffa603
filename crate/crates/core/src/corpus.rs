//! Paragraph records: schema, newline-delimited ingestion, work
//! deduplication and the minimum-length filter.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Stratum label used for books written originally in English.
pub const EN_ORIGINAL: &str = "en-original";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Original,
    Translated,
}

impl ClassLabel {
    /// Binary target used by the classifier: original = 0, translated = 1.
    pub fn target(self) -> u8 {
        match self {
            ClassLabel::Original => 0,
            ClassLabel::Translated => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceType {
    Human,
    Google,
    Llm,
    Original,
}

impl SourceType {
    pub fn as_str(self) -> &'static str {
        match self {
            SourceType::Human => "human",
            SourceType::Google => "google",
            SourceType::Llm => "llm",
            SourceType::Original => "original",
        }
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One aligned paragraph pair, or one paragraph of original English.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParagraphRecord {
    pub record_id: String,
    pub book_id: String,
    pub work_id: String,
    pub class_label: ClassLabel,
    pub source_lang: String,
    pub source_text: String,
    pub english_text: String,
    pub source_type: SourceType,
    pub variant_index: u32,
    pub n_variants: u32,
    #[serde(deserialize_with = "tags_from_string_or_seq")]
    pub pos_tags: Vec<String>,
    pub word_count: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comet_kiwi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub align_sim: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roundtrip_sim: Option<f64>,
}

fn tags_from_string_or_seq<'de, D>(deserializer: D) -> Result<Vec<String>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Tags {
        Joined(String),
        List(Vec<String>),
    }

    Ok(match Tags::deserialize(deserializer)? {
        Tags::Joined(s) => s.split_whitespace().map(str::to_owned).collect(),
        Tags::List(v) => v,
    })
}

impl ParagraphRecord {
    pub fn is_translated(&self) -> bool {
        self.class_label == ClassLabel::Translated
    }

    /// Checks the record-level invariants, returning the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.record_id.is_empty() {
            return Err("record_id is empty".into());
        }
        if self.book_id.is_empty() {
            return Err("book_id is empty".into());
        }
        if self.work_id.is_empty() {
            return Err("work_id is empty".into());
        }
        match self.class_label {
            ClassLabel::Original => {
                if self.source_type != SourceType::Original {
                    return Err(format!(
                        "original record has source_type `{}`",
                        self.source_type
                    ));
                }
                if !self.source_text.is_empty() {
                    return Err("original record has non-empty source_text".into());
                }
                for (name, v) in [
                    ("comet_kiwi", self.comet_kiwi),
                    ("align_sim", self.align_sim),
                    ("roundtrip_sim", self.roundtrip_sim),
                ] {
                    if v.is_some() {
                        return Err(format!("original record carries {name}"));
                    }
                }
            }
            ClassLabel::Translated => {
                if self.source_type == SourceType::Original {
                    return Err("translated record has source_type `original`".into());
                }
            }
        }
        if self.n_variants < 1 {
            return Err("n_variants must be >= 1".into());
        }
        if self.variant_index < 1 || self.variant_index > self.n_variants {
            return Err(format!(
                "variant_index {} outside 1..={}",
                self.variant_index, self.n_variants
            ));
        }
        let counted = count_words(&self.english_text);
        if counted as u32 != self.word_count {
            return Err(format!(
                "word_count {} does not match english_text ({counted} tokens)",
                self.word_count
            ));
        }
        if !self.english_text.trim().is_empty() && self.pos_tags.is_empty() {
            return Err("pos_tags empty for non-empty english_text".into());
        }
        if let Some(v) = self.comet_kiwi {
            if !(0.0..=1.0).contains(&v) {
                return Err(format!("comet_kiwi {v} outside [0, 1]"));
            }
        }
        for (name, v) in [("align_sim", self.align_sim), ("roundtrip_sim", self.roundtrip_sim)] {
            if let Some(v) = v {
                if !(-1.0..=1.0).contains(&v) {
                    return Err(format!("{name} {v} outside [-1, 1]"));
                }
            }
        }
        Ok(())
    }

    /// Key identifying the source paragraph this record translates.
    pub fn source_key(&self) -> (&str, &str) {
        (&self.book_id, &self.source_text)
    }
}

/// A line of the ingestion stream that could not be turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct SchemaError {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error while reading records: {0}")]
    Io(#[from] std::io::Error),
    #[error("book `{book_id}` mixes {what}")]
    InconsistentBook { book_id: String, what: String },
}

/// Parses newline-delimited JSON records. Blank lines are skipped; every
/// other line yields either a record or a [`SchemaError`].
pub fn parse_records<R: BufRead>(
    reader: R,
) -> Result<(Vec<ParagraphRecord>, Vec<SchemaError>), CorpusError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ParagraphRecord>(&line) {
            Ok(rec) => match rec.validate() {
                Ok(()) => records.push(rec),
                Err(reason) => errors.push(SchemaError { line: i + 1, reason }),
            },
            Err(e) => errors.push(SchemaError {
                line: i + 1,
                reason: e.to_string(),
            }),
        }
    }
    Ok((records, errors))
}

pub fn parse_records_str(s: &str) -> (Vec<ParagraphRecord>, Vec<SchemaError>) {
    parse_records(s.as_bytes()).expect("reading from memory cannot fail")
}

pub fn write_records<W: Write>(mut w: W, records: &[ParagraphRecord]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn serialize_records(records: &[ParagraphRecord]) -> String {
    let mut buf = Vec::new();
    write_records(&mut buf, records).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Number of maximal runs of non-whitespace characters.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Keeps, for every work with several translated volumes, only the volume
/// whose `book_id` sorts first. Original-English records are untouched.
pub fn dedupe_works(records: Vec<ParagraphRecord>) -> Vec<ParagraphRecord> {
    let mut first_book: BTreeMap<&str, &str> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_translated()) {
        let slot = first_book.entry(&r.work_id).or_insert(&r.book_id);
        if r.book_id.as_str() < *slot {
            *slot = &r.book_id;
        }
    }
    let keep: BTreeSet<(String, String)> = first_book
        .into_iter()
        .map(|(w, b)| (w.to_owned(), b.to_owned()))
        .collect();
    records
        .into_iter()
        .filter(|r| {
            !r.is_translated() || keep.contains(&(r.work_id.clone(), r.book_id.clone()))
        })
        .collect()
}

pub fn filter_min_length(records: Vec<ParagraphRecord>, min_words: u32) -> Vec<ParagraphRecord> {
    records
        .into_iter()
        .filter(|r| r.word_count >= min_words)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BookEntry {
    pub book_id: String,
    pub work_id: String,
    pub source_lang: String,
    pub class_label: ClassLabel,
    pub n_paragraphs: usize,
}

/// Collects one entry per book, sorted by `book_id`, checking that every
/// paragraph of a book agrees on language and class.
pub fn book_entries(records: &[ParagraphRecord]) -> Result<Vec<BookEntry>, CorpusError> {
    let mut books: BTreeMap<&str, BookEntry> = BTreeMap::new();
    for r in records {
        match books.get_mut(r.book_id.as_str()) {
            Some(entry) => {
                if entry.source_lang != r.source_lang {
                    return Err(CorpusError::InconsistentBook {
                        book_id: r.book_id.clone(),
                        what: format!("languages `{}` and `{}`", entry.source_lang, r.source_lang),
                    });
                }
                if entry.class_label != r.class_label {
                    return Err(CorpusError::InconsistentBook {
                        book_id: r.book_id.clone(),
                        what: "original and translated paragraphs".into(),
                    });
                }
                entry.n_paragraphs += 1;
            }
            None => {
                books.insert(
                    &r.book_id,
                    BookEntry {
                        book_id: r.book_id.clone(),
                        work_id: r.work_id.clone(),
                        source_lang: r.source_lang.clone(),
                        class_label: r.class_label,
                        n_paragraphs: 1,
                    },
                );
            }
        }
    }
    Ok(books.into_values().collect())
}
