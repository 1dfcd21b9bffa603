//! Synthetic corpora with a known generating process, for fixtures, tests
//! and the demo.
//!
//! Tag sequences come from two first-order Markov chains over a small Penn
//! Treebank tag set. Each paragraph mixes the "original" and "translated"
//! chains by a latent translationese level `t`; adequacy scores are planted as
//! a linear function of `1 - t` and paragraph length plus noise.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{ClassLabel, ParagraphRecord, SourceType, EN_ORIGINAL};
use crate::seed::substream;
use crate::stats::AnalysisRow;

pub const TAGS: &[&str] = &[
    "DT", "NN", "NNS", "NNP", "VBD", "VBZ", "VB", "VBG", "VBN", "IN", "JJ", "RB", "PRP", "CC",
    "TO", "MD", ".", ",", "''", "``",
];

fn token_for(tag: &str, i: usize) -> &'static str {
    const NOUNS: &[&str] = &["house", "road", "letter", "evening", "door", "river"];
    const VERBS: &[&str] = &["said", "walked", "saw", "took", "knew", "asked"];
    match tag {
        "DT" => ["the", "a", "this"][i % 3],
        "NN" => NOUNS[i % NOUNS.len()],
        "NNS" => ["houses", "roads", "letters"][i % 3],
        "NNP" => ["Ivan", "Dmitry", "Alyosha", "Marie"][i % 4],
        "VBD" => VERBS[i % VERBS.len()],
        "VBZ" => ["is", "has", "seems"][i % 3],
        "VB" => ["meet", "go", "see"][i % 3],
        "VBG" => ["walking", "saying"][i % 2],
        "VBN" => ["taken", "known"][i % 2],
        "IN" => ["at", "for", "in", "of"][i % 4],
        "JJ" => ["old", "quiet", "dark"][i % 3],
        "RB" => ["quickly", "never", "then"][i % 3],
        "PRP" => ["him", "she", "they"][i % 3],
        "CC" => ["and", "but"][i % 2],
        "TO" => "to",
        "MD" => ["would", "could"][i % 2],
        "," => ",",
        "''" => "''",
        "``" => "``",
        _ => ".",
    }
}

/// A row-stochastic transition matrix over `TAGS`.
#[derive(Debug, Clone)]
struct Chain {
    start: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl Chain {
    fn random(rng: &mut ChaCha8Rng, sharpness: f64) -> Self {
        let k = TAGS.len();
        let draw = |rng: &mut ChaCha8Rng| {
            let v: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powf(sharpness)).collect();
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect::<Vec<_>>()
        };
        let start = draw(rng);
        let rows = (0..k).map(|_| draw(rng)).collect();
        Chain { start, rows }
    }
}

fn pick(probs: impl Iterator<Item = f64>, u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.enumerate() {
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// The two tag grammars; fixed, independent of the corpus seed.
#[derive(Debug, Clone)]
pub struct Grammar {
    original: Chain,
    translated: Chain,
}

impl Default for Grammar {
    fn default() -> Self {
        let mut rng = substream(0x5EED, "synth-grammar");
        let original = Chain::random(&mut rng, 3.0);
        let translated = Chain::random(&mut rng, 3.0);
        Grammar { original, translated }
    }
}

impl Grammar {
    /// `len` tags whose transitions mix the two chains with weight `t` on
    /// the translated one.
    pub fn sample_tags(&self, len: usize, t: f64, rng: &mut ChaCha8Rng) -> Vec<String> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect::<Vec<_>>();
        let mut cur = pick(mix(&self.original.start, &self.translated.start).into_iter(), rng.random());
        out.push(TAGS[cur].to_owned());
        for _ in 1..len {
            cur = pick(
                mix(&self.original.rows[cur], &self.translated.rows[cur]).into_iter(),
                rng.random(),
            );
            out.push(TAGS[cur].to_owned());
        }
        out
    }
}

pub fn render_text(tags: &[String], rng: &mut ChaCha8Rng) -> String {
    let offset: usize = rng.random_range(0..1000);
    tags.iter()
        .enumerate()
        .map(|(i, t)| token_for(t, i + offset))
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    /// Source languages; the first ones get more books.
    pub languages: Vec<String>,
    pub translated_books: usize,
    pub original_books: usize,
    pub source_paragraphs_per_book: usize,
    /// Original-English paragraphs in total, dealt across the original books.
    pub original_paragraphs: usize,
    /// Human translations per source paragraph (inclusive range).
    pub human_variants: (u32, u32),
    /// Planted fluency effect on the adequacy score.
    pub comet_fluency_effect: f64,
    /// Planted effect per 100 words on the adequacy score.
    pub comet_length_effect: f64,
    pub comet_noise: f64,
    /// Share of translated paragraphs that are misaligned.
    pub misaligned_rate: f64,
    /// Share of LLM outputs that are degenerate (padded with repetition).
    pub degenerate_llm_rate: f64,
    /// Share of paragraphs that are short headings.
    pub heading_rate: f64,
}

impl SynthConfig {
    /// The small corpus bundled as a test fixture: exactly `total` paragraphs.
    pub fn fixture(total: usize) -> Self {
        let mut cfg = SynthConfig {
            seed: 2024,
            languages: ["fr", "ru", "de", "ja"].map(String::from).to_vec(),
            translated_books: 8,
            original_books: 8,
            source_paragraphs_per_book: 3,
            original_paragraphs: 0,
            ..SynthConfig::default()
        };
        // Translated records are generated first, so their number does not
        // depend on the original-paragraph count.
        let translated = generate_corpus(&cfg).len();
        cfg.original_paragraphs = total.saturating_sub(translated);
        cfg
    }
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            languages: ["fr", "ru", "de", "ja", "it", "ta"].map(String::from).to_vec(),
            translated_books: 12,
            original_books: 12,
            source_paragraphs_per_book: 6,
            original_paragraphs: 288,
            human_variants: (2, 3),
            comet_fluency_effect: -0.15,
            comet_length_effect: -0.03,
            comet_noise: 0.03,
            misaligned_rate: 0.03,
            degenerate_llm_rate: 0.02,
            heading_rate: 0.04,
        }
    }
}

fn paragraph_length(rng: &mut ChaCha8Rng) -> usize {
    // Long-tailed lengths, mostly 20..200 words.
    let u: f64 = rng.random();
    (20.0 + 180.0 * u * u) as usize
}

/// Generates a corpus in record order: translated books, then originals.
pub fn generate_corpus(cfg: &SynthConfig) -> Vec<ParagraphRecord> {
    let grammar = Grammar::default();
    let mut rng = substream(cfg.seed, "synth-corpus");
    let noise = Normal::new(0.0, cfg.comet_noise.max(1e-12)).expect("positive sd");
    let mut records = Vec::new();

    let weights: Vec<f64> = (0..cfg.languages.len()).map(|i| 1.0 / (i + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut prev_lang = String::new();
    for b in 0..cfg.translated_books {
        // The last book is a second volume of the previous work.
        let second_volume = b > 0 && b + 1 == cfg.translated_books;
        let (lang, book_id, work_id) = if second_volume {
            (prev_lang.clone(), format!("tr-{prev_lang}-{:03}-vol2", b - 1), format!("work-{:03}", b - 1))
        } else {
            // Skewed assignment: language i gets roughly 1/(i+1) of the books.
            let idx = if b < cfg.languages.len() {
                b
            } else {
                pick(weights.iter().map(|w| w / total), rng.random())
            };
            let lang = cfg.languages[idx].clone();
            (lang.clone(), format!("tr-{lang}-{b:03}"), format!("work-{b:03}"))
        };
        prev_lang = lang.clone();
        let n_human = rng.random_range(cfg.human_variants.0..=cfg.human_variants.1);
        for p in 0..cfg.source_paragraphs_per_book {
            let heading = rng.random::<f64>() < cfg.heading_rate;
            let base_len = if heading { rng.random_range(1..4) } else { paragraph_length(&mut rng) };
            let source_text = format!("[{lang}] source paragraph {p} of {book_id}");
            let n_variants = n_human + 2;
            let mut variants: Vec<(SourceType, u32, f64)> =
                (1..=n_human).map(|v| (SourceType::Human, v, rng.random_range(0.2..0.9))).collect();
            variants.push((SourceType::Google, 1, rng.random_range(0.45..1.0)));
            variants.push((SourceType::Llm, 1, rng.random_range(0.4..0.95)));
            let mut google_len = 0usize;
            for (source, v, t) in variants {
                let jitter: i64 = rng.random_range(-3..=3);
                let len = (base_len as i64 + jitter).max(1) as usize;
                let tags = grammar.sample_tags(len, t, &mut rng);
                let mut text = render_text(&tags, &mut rng);
                let mut tags = tags;
                if source == SourceType::Google {
                    google_len = text.chars().count();
                }
                if source == SourceType::Llm && rng.random::<f64>() < cfg.degenerate_llm_rate {
                    while text.chars().count() <= google_len + 600 {
                        text.push_str(" and then");
                        tags.push("CC".into());
                        tags.push("RB".into());
                    }
                }
                let words = text.split_whitespace().count();
                let misaligned = rng.random::<f64>() < cfg.misaligned_rate;
                let align = if misaligned {
                    rng.random_range(0.3..0.5)
                } else {
                    rng.random_range(0.7..0.95)
                };
                let comet = 0.8
                    + cfg.comet_fluency_effect * (1.0 - t)
                    + cfg.comet_length_effect * words as f64 / 100.0
                    + noise.sample(&mut rng);
                let kind = match source {
                    SourceType::Human => format!("h{v}"),
                    other => other.to_string(),
                };
                records.push(ParagraphRecord {
                    record_id: format!("{book_id}-p{p:03}-{kind}"),
                    book_id: book_id.clone(),
                    work_id: work_id.clone(),
                    class_label: ClassLabel::Translated,
                    source_lang: lang.clone(),
                    source_text: source_text.clone(),
                    english_text: text,
                    source_type: source,
                    variant_index: v,
                    n_variants,
                    pos_tags: tags,
                    word_count: words as u32,
                    comet_kiwi: Some(comet.clamp(0.0, 1.0)),
                    align_sim: Some(align),
                    roundtrip_sim: (source == SourceType::Llm)
                        .then(|| (align + noise.sample(&mut rng)).clamp(-1.0, 1.0)),
                });
            }
        }
    }

    for b in 0..cfg.original_books {
        let book_id = format!("en-{b:03}");
        let n_paragraphs = cfg.original_paragraphs / cfg.original_books
            + usize::from(b < cfg.original_paragraphs % cfg.original_books);
        for p in 0..n_paragraphs {
            let heading = rng.random::<f64>() < cfg.heading_rate;
            let len = if heading { rng.random_range(1..4) } else { paragraph_length(&mut rng) };
            let t = rng.random_range(0.0..0.4);
            let tags = grammar.sample_tags(len, t, &mut rng);
            let text = render_text(&tags, &mut rng);
            records.push(ParagraphRecord {
                record_id: format!("{book_id}-p{p:03}"),
                book_id: book_id.clone(),
                work_id: format!("en-work-{b:03}"),
                class_label: ClassLabel::Original,
                source_lang: EN_ORIGINAL.into(),
                source_text: String::new(),
                word_count: text.split_whitespace().count() as u32,
                english_text: text,
                source_type: SourceType::Original,
                variant_index: 1,
                n_variants: 1,
                pos_tags: tags,
                comet_kiwi: None,
                align_sim: None,
                roundtrip_sim: None,
            });
        }
    }
    records
}

/// Rows with `comet = effect_fluency * fluency + effect_length * len/100 + noise`
/// where length also drives fluency down, so that raw and partial
/// correlations differ.
pub fn planted_rows(
    n: usize,
    effect_fluency: f64,
    effect_length: f64,
    noise_sd: f64,
    seed: u64,
) -> Vec<AnalysisRow> {
    let mut rng = substream(seed, "planted");
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let sources = [SourceType::Human, SourceType::Google, SourceType::Llm];
    (0..n)
        .map(|i| {
            let word_count = paragraph_length(&mut rng) as u32;
            let fluency =
                (0.6 - 0.15 * f64::from(word_count) / 100.0 + 0.15 * normal.sample(&mut rng)).clamp(0.0, 1.0);
            let comet = 0.7
                + effect_fluency * fluency
                + effect_length * f64::from(word_count) / 100.0
                + noise_sd * normal.sample(&mut rng);
            AnalysisRow {
                source_type: sources[i % 3],
                variant_index: 1 + (i / 3 % 2) as u32,
                fluency,
                comet_kiwi: comet,
                word_count,
            }
        })
        .collect()
}
