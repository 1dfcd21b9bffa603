//! Browser demo: three small operations over synthetic data, each returning
//! JSON to the page.

use std::cell::OnceCell;

use fluency_core::classifier::{train, TrainConfig};
use fluency_core::corpus::ClassLabel;
use fluency_core::evaluation::gram_corpus;
use fluency_core::features::{FeatureConfig, Featurizer};
use fluency_core::sampling::{assign_sample_weights, compute_length_bins, downsample_translated};
use fluency_core::stats::{partial_spearman, spearman};
use fluency_core::synth::{generate_corpus, planted_rows, SynthConfig};
use fluency_core::TrainedModel;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct Point {
    pub fluency: f64,
    pub comet: f64,
    pub words: u32,
}

#[derive(Debug, Serialize)]
pub struct PartialDemo {
    pub n: usize,
    pub rho_fluency_comet: Option<f64>,
    pub rho_length_comet: Option<f64>,
    pub rho_length_fluency: Option<f64>,
    pub partial_rho: Option<f64>,
    pub partial_p: Option<f64>,
    /// At most 400 points for plotting.
    pub points: Vec<Point>,
}

/// Simulates `comet = a * fluency + b * words / 100 + noise` and reports raw
/// and length-controlled rank correlations.
pub fn partial_demo(n: usize, a: f64, b: f64, noise: f64, seed: u64) -> PartialDemo {
    let rows = planted_rows(n.max(4), a, b, noise.max(0.0), seed);
    let fl: Vec<f64> = rows.iter().map(|r| r.fluency).collect();
    let cm: Vec<f64> = rows.iter().map(|r| r.comet_kiwi).collect();
    let wc: Vec<f64> = rows.iter().map(|r| f64::from(r.word_count)).collect();
    let rho = |x: &[f64], y: &[f64]| spearman(x, y).ok().map(|r| r.rho);
    let partial = partial_spearman(&fl, &cm, &wc).ok();
    let step = rows.len().div_ceil(400);
    PartialDemo {
        n: rows.len(),
        rho_fluency_comet: rho(&fl, &cm),
        rho_length_comet: rho(&wc, &cm),
        rho_length_fluency: rho(&wc, &fl),
        partial_rho: partial.as_ref().map(|r| r.rho),
        partial_p: partial.as_ref().map(|r| r.p_value),
        points: rows
            .iter()
            .step_by(step)
            .map(|r| Point { fluency: r.fluency, comet: r.comet_kiwi, words: r.word_count })
            .collect(),
    }
}

struct DemoModel {
    featurizer: Featurizer,
    model: TrainedModel,
}

fn fit_demo_model() -> DemoModel {
    let records = generate_corpus(&SynthConfig::default());
    let weighted = assign_sample_weights(records).expect("synthetic records have n_variants >= 1");
    let config = FeatureConfig::default();
    let corpus = gram_corpus(&weighted, &config);
    let all: Vec<usize> = (0..weighted.len()).collect();
    let featurizer = Featurizer::fit(&corpus, &all, config).expect("non-empty corpus");
    let x = featurizer.transform(&corpus, &all);
    let y: Vec<u8> = weighted.iter().map(|w| w.record.class_label.target()).collect();
    let w: Vec<f64> = weighted.iter().map(|r| r.weight).collect();
    let model = train(&x, &y, &w, &TrainConfig::default()).expect("both classes present");
    DemoModel { featurizer, model }
}

thread_local! {
    static MODEL: OnceCell<DemoModel> = const { OnceCell::new() };
}

#[derive(Debug, Serialize)]
pub struct Contribution {
    pub gram: String,
    /// Signed push towards "translated".
    pub weight: f64,
}

#[derive(Debug, Serialize)]
pub struct ScoreDemo {
    pub n_tags: usize,
    pub grams_in_vocabulary: usize,
    pub p_translated: f64,
    pub fluency: f64,
    /// Largest absolute contributions first, at most 8.
    pub top: Vec<Contribution>,
}

/// Scores a whitespace-separated POS tag sequence with a classifier trained
/// once on the default synthetic corpus.
pub fn score_demo(tags: &str) -> ScoreDemo {
    let tags: Vec<&str> = tags.split_whitespace().collect();
    MODEL.with(|cell| {
        let m = cell.get_or_init(fit_demo_model);
        let row = m.featurizer.transform_tags(&tags);
        let p = m.model.predict_proba(&row).expect("model matches featurizer");
        let mut top: Vec<Contribution> = row
            .indices
            .iter()
            .zip(&row.values)
            .map(|(&c, &v)| Contribution {
                gram: m.featurizer.vocab.entries[c as usize].as_str().to_owned(),
                weight: v * m.model.coefficients[c as usize],
            })
            .collect();
        top.sort_by(|a, b| b.weight.abs().total_cmp(&a.weight.abs()).then_with(|| a.gram.cmp(&b.gram)));
        top.truncate(8);
        ScoreDemo {
            n_tags: tags.len(),
            grams_in_vocabulary: row.indices.len(),
            p_translated: p,
            fluency: 1.0 - p,
            top,
        }
    })
}

#[derive(Debug, Serialize)]
pub struct BinBar {
    pub label: String,
    pub original: usize,
    pub available: usize,
    pub kept: usize,
}

#[derive(Debug, Serialize)]
pub struct DownsampleDemo {
    pub n_bins: usize,
    pub n_original: usize,
    pub n_translated_before: usize,
    pub n_translated_after: usize,
    pub bins: Vec<BinBar>,
}

/// Length-bin downsampling of the default synthetic corpus.
pub fn downsample_demo(k: usize, seed: u64) -> Result<DownsampleDemo, String> {
    let records = generate_corpus(&SynthConfig::default());
    let originals: Vec<u32> = records
        .iter()
        .filter(|r| r.class_label == ClassLabel::Original)
        .map(|r| r.word_count)
        .collect();
    let bins = compute_length_bins(&originals, k).map_err(|e| e.to_string())?;
    let before = records.len() - originals.len();
    let (kept, summary) = downsample_translated(records, &bins, seed);
    Ok(DownsampleDemo {
        n_bins: bins.n_bins(),
        n_original: originals.len(),
        n_translated_before: before,
        n_translated_after: kept.len() - originals.len(),
        bins: summary
            .into_iter()
            .map(|s| BinBar {
                label: s.label,
                original: s.original,
                available: s.translated_available,
                kept: s.translated_kept,
            })
            .collect(),
    })
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_else(|e| format!("{{\"error\":\"{e}\"}}"))
}

#[wasm_bindgen(js_name = partialDemo)]
pub fn partial_demo_js(n: usize, a: f64, b: f64, noise: f64, seed: u32) -> String {
    to_json(&partial_demo(n, a, b, noise, u64::from(seed)))
}

#[wasm_bindgen(js_name = scoreTags)]
pub fn score_tags_js(tags: &str) -> String {
    to_json(&score_demo(tags))
}

#[wasm_bindgen(js_name = downsampleDemo)]
pub fn downsample_demo_js(k: usize, seed: u32) -> String {
    match downsample_demo(k, u64::from(seed)) {
        Ok(d) => to_json(&d),
        Err(e) => to_json(&serde_json::json!({ "error": e })),
    }
}
