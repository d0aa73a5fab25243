//! `lexmatch synth`: write a synthetic corpus to a directory.

use std::path::PathBuf;

use clap::Args;
use lexmatch_core::data::synthetic::synth_sentences;
use lexmatch_core::data::{
    generate_synthetic, save_article_embeddings, save_case_embeddings, save_citations,
    save_pairs, save_vectors, SyntheticSpec,
};
use lexmatch_core::discover::{save_sentences, SentenceRecord};
use lexmatch_core::Result;

use crate::manifest::{atomic_file, RunManifest};

#[derive(Args)]
pub struct SynthArgs {
    /// Output directory for the dataset files.
    #[arg(long)]
    out: PathBuf,
    /// Spec file (TOML); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Embedding dimension.
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    articles: Option<usize>,
    #[arg(long)]
    cases: Option<usize>,
    #[arg(long)]
    train_pairs: Option<usize>,
    #[arg(long)]
    valid_pairs: Option<usize>,
    #[arg(long)]
    test_pairs: Option<usize>,
    /// Observation-noise scale.
    #[arg(long)]
    noise: Option<f64>,
    /// Confounder scale.
    #[arg(long)]
    confounder: Option<f64>,
    /// Law share of the planted label rule.
    #[arg(long)]
    law_weight: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write sentence vectors: this many per cited article.
    #[arg(long, default_value_t = 0)]
    sentences_per_article: usize,
    /// Jitter scale for the sentence vectors.
    #[arg(long, default_value_t = 0.3)]
    sentence_jitter: f64,
}

pub fn run(args: SynthArgs) -> Result<i32> {
    let (mut spec, toml_sets_seed) = match &args.config {
        Some(p) => {
            let (spec, value) = super::read_toml::<SyntheticSpec>(p)?;
            (spec, value.get("seed").is_some())
        }
        None => (SyntheticSpec::default(), false),
    };
    if let Some(d) = args.d {
        spec.d = d;
    }
    if let Some(n) = args.articles {
        spec.num_articles = n;
    }
    if let Some(n) = args.cases {
        spec.num_cases = n;
    }
    if let Some(n) = args.train_pairs {
        spec.train_pairs = n;
    }
    if let Some(n) = args.valid_pairs {
        spec.valid_pairs = n;
    }
    if let Some(n) = args.test_pairs {
        spec.test_pairs = n;
    }
    if let Some(s) = args.noise {
        spec.noise_scale = s;
    }
    if let Some(s) = args.confounder {
        spec.confounder_scale = s;
    }
    if let Some(w) = args.law_weight {
        spec.law_rule_weight = w;
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    } else if !toml_sets_seed {
        spec.seed = super::resolve_seed(None);
    }
    spec.validate()?;

    let data = generate_synthetic(&spec)?;

    let out = &args.out;
    let files = [
        "cases.jsonl",
        "articles.jsonl",
        "citations.jsonl",
        "pairs_train.jsonl",
        "pairs_valid.jsonl",
        "pairs_test.jsonl",
        "truth_law.jsonl",
        "truth_other.jsonl",
    ];
    let mut manifest = RunManifest::new("synth", spec.seed, serde_json::to_value(&spec)?);
    if let Some(p) = &args.config {
        manifest.add_input(p)?;
    }
    for f in files {
        manifest.add_output(&out.join(f));
    }
    let with_sentences = args.sentences_per_article > 0;
    if with_sentences {
        manifest.add_output(&out.join("sentences.jsonl"));
    }
    manifest.write(out)?;

    atomic_file(&out.join("cases.jsonl"), |p| {
        save_case_embeddings(p, &data.store)
    })?;
    atomic_file(&out.join("articles.jsonl"), |p| {
        save_article_embeddings(p, &data.store)
    })?;
    atomic_file(&out.join("citations.jsonl"), |p| {
        save_citations(p, &data.store)
    })?;
    atomic_file(&out.join("pairs_train.jsonl"), |p| save_pairs(p, &data.train))?;
    atomic_file(&out.join("pairs_valid.jsonl"), |p| save_pairs(p, &data.valid))?;
    atomic_file(&out.join("pairs_test.jsonl"), |p| save_pairs(p, &data.test))?;
    atomic_file(&out.join("truth_law.jsonl"), |p| {
        save_vectors(p, &data.truth.law)
    })?;
    atomic_file(&out.join("truth_other.jsonl"), |p| {
        save_vectors(p, &data.truth.other)
    })?;
    if with_sentences {
        let map = synth_sentences(
            &data.store,
            args.sentences_per_article,
            args.sentence_jitter,
            spec.seed,
        );
        let mut records = Vec::new();
        for (id, sentences) in &map {
            for (ordinal, vector) in sentences.iter().enumerate() {
                records.push(SentenceRecord {
                    case_id: id.clone(),
                    ordinal,
                    vector: vector.clone(),
                });
            }
        }
        atomic_file(&out.join("sentences.jsonl"), |p| save_sentences(p, &records))?;
    }

    println!(
        "wrote {} ({} cases, {} articles, {}/{}/{} pairs, seed {})",
        out.display(),
        spec.num_cases,
        spec.num_articles,
        spec.train_pairs,
        spec.valid_pairs,
        spec.test_pairs,
        spec.seed
    );
    Ok(0)
}
