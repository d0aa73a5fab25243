//! `lexmatch train`: fit the decomposition and matching model.

use std::path::PathBuf;

use clap::Args;
use lexmatch_core::data::{load_pairs, load_store, CasePair};
use lexmatch_core::trainer::{train, TrainConfig, TrainStatus};
use lexmatch_core::Result;

use crate::manifest::{atomic_write, RunManifest};

#[derive(Args)]
pub struct TrainArgs {
    /// Case embeddings (JSON lines: {"id", "vec"}).
    #[arg(long)]
    embeddings: PathBuf,
    /// Article embeddings, same grammar.
    #[arg(long)]
    articles: PathBuf,
    /// Citations per case (JSON lines: {"id", "articles"}).
    #[arg(long)]
    citations: PathBuf,
    /// Training pairs (JSON lines: {"x", "y", "z"}). Every fifth pair
    /// is held out for validation unless --valid-pairs is given.
    #[arg(long)]
    pairs: PathBuf,
    /// Validation pairs, same grammar.
    #[arg(long)]
    valid_pairs: Option<PathBuf>,
    /// Output directory for checkpoint, history, and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Training configuration (TOML); flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Reconstruction mode: full, fitted_only, residual_only, or
    /// concat_parts.
    #[arg(long)]
    mode: Option<String>,
    /// Instrument mode: shared or separate.
    #[arg(long)]
    iv_mode: Option<String>,
    /// Number of match classes.
    #[arg(long, short = 'z')]
    z: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr_iv: Option<f64>,
    #[arg(long)]
    lr_match: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    /// Matching head: concat_mlp or bilinear.
    #[arg(long)]
    head: Option<String>,
}

/// Applies flag overrides on top of the file (or default) config and
/// settles the seed: flag, then config file, then a drawn one.
fn resolve_config(args: &TrainArgs) -> Result<TrainConfig> {
    let (mut config, toml_sets_seed) = match &args.config {
        Some(p) => {
            let (config, value) = super::read_toml::<TrainConfig>(p)?;
            (config, value.get("seed").is_some())
        }
        None => (TrainConfig::default(), false),
    };
    if let Some(s) = &args.mode {
        config.mode = s.parse()?;
    }
    if let Some(s) = &args.iv_mode {
        config.iv_mode = s.parse()?;
    }
    if let Some(z) = args.z {
        config.z_classes = z;
    }
    if let Some(n) = args.iterations {
        config.iterations = n;
    }
    if let Some(n) = args.batch_size {
        config.batch_size = n;
    }
    if let Some(lr) = args.lr_iv {
        config.lr_iv = lr;
    }
    if let Some(lr) = args.lr_match {
        config.lr_match = lr;
    }
    if let Some(n) = args.patience {
        config.patience = n;
    }
    if let Some(s) = &args.head {
        config.head_kind = s.parse()?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    } else if !toml_sets_seed {
        config.seed = super::resolve_seed(None);
    }
    config.validate()?;
    Ok(config)
}

/// Deterministic holdout when no validation file is given: every
/// fifth pair validates, the rest train.
fn split_holdout(pairs: Vec<CasePair>) -> (Vec<CasePair>, Vec<CasePair>) {
    let mut train = Vec::new();
    let mut valid = Vec::new();
    for (i, p) in pairs.into_iter().enumerate() {
        if i % 5 == 4 {
            valid.push(p);
        } else {
            train.push(p);
        }
    }
    (train, valid)
}

pub fn run(args: TrainArgs) -> Result<i32> {
    let config = resolve_config(&args)?;
    let store = load_store(&args.embeddings, &args.articles, &args.citations)?;
    let pairs = load_pairs(&args.pairs, &store, config.z_classes)?;
    let (train_pairs, valid_pairs, valid_source) = match &args.valid_pairs {
        Some(p) => {
            let valid = load_pairs(p, &store, config.z_classes)?;
            (pairs, valid, p.display().to_string())
        }
        None => {
            let (t, v) = split_holdout(pairs);
            (t, v, "holdout:every-fifth".to_string())
        }
    };

    let mut manifest = RunManifest::new(
        "train",
        config.seed,
        serde_json::json!({
            "train": &config,
            "valid_source": valid_source,
        }),
    );
    for input in [&args.embeddings, &args.articles, &args.citations, &args.pairs] {
        manifest.add_input(input)?;
    }
    if let Some(p) = &args.valid_pairs {
        manifest.add_input(p)?;
    }
    if let Some(p) = &args.config {
        manifest.add_input(p)?;
    }
    let ck_path = args.out.join("model.ckpt");
    let hist_path = args.out.join("history.json");
    manifest.add_output(&ck_path);
    manifest.add_output(&hist_path);
    manifest.write(&args.out)?;

    let outcome = train(&train_pairs, &valid_pairs, &store, &config, None)?;
    let checkpoint = outcome.model.to_checkpoint(store.dimension(), &config);
    atomic_write(&ck_path, &checkpoint.to_bytes()?)?;
    let sidecar = serde_json::json!({
        "status": outcome.status.as_str(),
        "history": &outcome.history,
    });
    let mut bytes = serde_json::to_vec_pretty(&sidecar)?;
    bytes.push(b'\n');
    atomic_write(&hist_path, &bytes)?;

    let last = outcome.history.iterations.last();
    println!(
        "status: {} ({} iterations)",
        outcome.status.as_str(),
        outcome.history.iterations.len()
    );
    if let Some(r) = last {
        println!(
            "final: train L_IV {:.6} L_match {:.6}, valid L_match {:.6} accuracy {:.4}",
            r.train_iv_loss, r.train_match_loss, r.valid_match_loss, r.valid_accuracy
        );
    }
    println!("wrote {} and {}", ck_path.display(), hist_path.display());
    if outcome.status == TrainStatus::Diverged {
        eprintln!("training diverged; checkpoint holds the last non-diverged parameters");
        return Ok(3);
    }
    Ok(0)
}
