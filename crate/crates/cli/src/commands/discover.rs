//! `lexmatch discover`: build the sentence-cluster/article graph from
//! cited cases and infer article lists for every case with sentences.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use clap::Args;
use lexmatch_core::data::{load_citations_map, save_citations_map};
use lexmatch_core::discover::{
    build_graph, infer_for_case, load_sentences, Corpus, CorpusEntry, DiscoverConfig,
};
use lexmatch_core::{Error, Result};

use crate::manifest::{atomic_file, RunManifest};

#[derive(Args)]
pub struct DiscoverArgs {
    /// Sentence vectors (JSON lines: {"case_id", "ordinal", "vector"}).
    #[arg(long)]
    sentences: PathBuf,
    /// Citations per case; cases listed here anchor the graph.
    #[arg(long)]
    citations: PathBuf,
    /// Output directory for graph.json and inferred.jsonl.
    #[arg(long)]
    out: PathBuf,
    /// Discovery configuration (TOML); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sentence clusters; 0 picks min(articles, sentences).
    #[arg(long, default_value_t = 0)]
    clusters: usize,
    #[arg(long)]
    k_prime: Option<usize>,
    /// Minimum witnessing sentences for an edge.
    #[arg(long)]
    support: Option<usize>,
    #[arg(long)]
    radius_scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: DiscoverArgs) -> Result<i32> {
    let (mut config, toml_sets_seed) = match &args.config {
        Some(p) => {
            let (config, value) = super::read_toml::<DiscoverConfig>(p)?;
            (config, value.get("seed").is_some())
        }
        None => (DiscoverConfig::default(), false),
    };
    if let Some(k) = args.k_prime {
        config.k_prime = k;
    }
    if let Some(s) = args.support {
        config.support = s;
    }
    if let Some(r) = args.radius_scale {
        config.radius_scale = r;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    } else if !toml_sets_seed {
        config.seed = super::resolve_seed(None);
    }
    config.validate()?;

    let records = load_sentences(&args.sentences)?;
    let mut sentences: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for rec in records {
        sentences.entry(rec.case_id).or_default().push(rec.vector);
    }
    if sentences.is_empty() {
        return Err(Error::Input(format!(
            "no sentence records in {}",
            args.sentences.display()
        )));
    }
    let citations = load_citations_map(&args.citations)?;

    // The graph is anchored on cases that both have sentences and cite
    // articles; inference then covers every case with sentences.
    let mut corpus = Corpus::new();
    for (id, sents) in &sentences {
        if let Some(cited) = citations.get(id) {
            if !cited.is_empty() {
                corpus.insert(
                    id.clone(),
                    CorpusEntry {
                        sentences: sents.clone(),
                        cited: cited.clone(),
                    },
                );
            }
        }
    }
    if corpus.is_empty() {
        return Err(Error::Input(
            "no case has both sentences and citations; cannot build the graph".into(),
        ));
    }
    let distinct_articles: BTreeSet<&str> = corpus
        .values()
        .flat_map(|e| e.cited.iter().map(String::as_str))
        .collect();
    let total_sentences: usize = corpus.values().map(|e| e.sentences.len()).sum();
    let c = if args.clusters > 0 {
        args.clusters
    } else {
        distinct_articles.len().min(total_sentences)
    };

    let mut manifest = RunManifest::new(
        "discover",
        config.seed,
        serde_json::json!({ "discover": &config, "clusters": c }),
    );
    manifest.add_input(&args.sentences)?;
    manifest.add_input(&args.citations)?;
    if let Some(p) = &args.config {
        manifest.add_input(p)?;
    }
    let graph_path = args.out.join("graph.json");
    let inferred_path = args.out.join("inferred.jsonl");
    manifest.add_output(&graph_path);
    manifest.add_output(&inferred_path);
    manifest.write(&args.out)?;

    let graph = build_graph(&corpus, c, &config)?;
    atomic_file(&graph_path, |p| graph.save(p))?;
    if graph.edges.is_empty() {
        eprintln!("warning: graph has no edges; every inferred list is empty");
    }

    let mut inferred: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (id, sents) in &sentences {
        let cited: Option<BTreeSet<String>> = citations
            .get(id)
            .filter(|c| !c.is_empty())
            .map(|c| c.iter().cloned().collect());
        let articles = infer_for_case(sents, &graph, cited.as_ref())?;
        inferred.insert(id.clone(), articles.into_iter().collect());
    }
    atomic_file(&inferred_path, |p| save_citations_map(p, &inferred))?;

    println!(
        "graph: {} clusters, {} articles, {} edges; inferred lists for {} cases",
        graph.clusters.len(),
        graph.articles.len(),
        graph.edges.len(),
        inferred.len()
    );
    println!("wrote {} and {}", graph_path.display(), inferred_path.display());
    Ok(0)
}
