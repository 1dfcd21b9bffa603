//! Independent reference implementations and record builders shared by the
//! integration tests. Nothing here calls into the library's numerics.
#![allow(dead_code)]

use fluency_core::corpus::{count_words, ClassLabel, ParagraphRecord, SourceType};

/// Fractional ranks straight from the definition: 1 + #smaller + (#equal - 1) / 2.
pub fn ranks_by_definition(v: &[f64]) -> Vec<f64> {
    v.iter()
        .map(|&a| {
            let less = v.iter().filter(|&&b| b < a).count() as f64;
            let equal = v.iter().filter(|&&b| b == a).count() as f64;
            1.0 + less + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Two-pass Pearson correlation.
pub fn pearson_two_pass(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    cov / (vx * vy).sqrt()
}

pub fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
    pearson_two_pass(&ranks_by_definition(x), &ranks_by_definition(y))
}

/// Residuals of `v` after ordinary least squares on `[1, z]`.
pub fn ols_residuals(v: &[f64], z: &[f64]) -> Vec<f64> {
    let n = v.len() as f64;
    let (sz, sv) = (z.iter().sum::<f64>(), v.iter().sum::<f64>());
    let szz: f64 = z.iter().map(|a| a * a).sum();
    let szv: f64 = z.iter().zip(v).map(|(a, b)| a * b).sum();
    let slope = (n * szv - sz * sv) / (n * szz - sz * sz);
    let intercept = (sv - slope * sz) / n;
    v.iter().zip(z).map(|(b, a)| b - intercept - slope * a).collect()
}

/// Partial rank correlation by residualizing the ranks of `x` and `y` on the
/// ranks of `z`.
pub fn partial_oracle(x: &[f64], y: &[f64], z: &[f64]) -> f64 {
    let (rx, ry, rz) = (ranks_by_definition(x), ranks_by_definition(y), ranks_by_definition(z));
    pearson_two_pass(&ols_residuals(&rx, &rz), &ols_residuals(&ry, &rz))
}

/// Mann-Whitney AUC by counting all (translated, original) pairs.
pub fn auc_pairs(y: &[u8], s: &[f64]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for i in 0..y.len() {
        for j in 0..y.len() {
            if y[i] == 1 && y[j] == 0 {
                pairs += 1.0;
                if s[i] > s[j] {
                    wins += 1.0;
                } else if s[i] == s[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

pub fn words(n: usize) -> String {
    vec!["w"; n].join(" ")
}

pub fn original(id: &str, book: &str, n_words: usize) -> ParagraphRecord {
    let text = words(n_words);
    ParagraphRecord {
        record_id: id.into(),
        book_id: book.into(),
        work_id: format!("work-{book}"),
        class_label: ClassLabel::Original,
        source_lang: "en-original".into(),
        source_text: String::new(),
        word_count: count_words(&text) as u32,
        pos_tags: vec!["NN".into(); n_words],
        english_text: text,
        source_type: SourceType::Original,
        variant_index: 1,
        n_variants: 1,
        comet_kiwi: None,
        align_sim: None,
        roundtrip_sim: None,
    }
}

pub fn translated(id: &str, book: &str, lang: &str, source: SourceType, n_words: usize) -> ParagraphRecord {
    let text = words(n_words);
    ParagraphRecord {
        record_id: id.into(),
        book_id: book.into(),
        work_id: format!("work-{book}"),
        class_label: ClassLabel::Translated,
        source_lang: lang.into(),
        source_text: format!("src {id}"),
        word_count: count_words(&text) as u32,
        pos_tags: vec!["NN".into(); n_words],
        english_text: text,
        source_type: source,
        variant_index: 1,
        n_variants: 1,
        comet_kiwi: Some(0.5),
        align_sim: Some(0.8),
        roundtrip_sim: None,
    }
}

pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}
