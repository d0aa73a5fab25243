//! `lexmatch decompose`: export the fitted/residual split of every
//! case under a trained checkpoint.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use lexmatch_core::data::load_store;
use lexmatch_core::numcore::checkpoint::Checkpoint;
use lexmatch_core::reconstruct::{decompose, decompose_passthrough};
use lexmatch_core::trainer::TrainedModel;
use lexmatch_core::{Error, Result};

use crate::manifest::{atomic_file, RunManifest};

#[derive(Args)]
pub struct DecomposeArgs {
    /// Checkpoint written by `lexmatch train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    articles: PathBuf,
    #[arg(long)]
    citations: PathBuf,
    /// Output directory for manifest and decompositions.jsonl.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(args: DecomposeArgs) -> Result<i32> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let (model, d, config) = TrainedModel::from_checkpoint(&ck)?;
    let store = load_store(&args.embeddings, &args.articles, &args.citations)?;
    if store.dimension() != d {
        return Err(Error::Shape(format!(
            "store dimension {} does not match checkpoint dimension {d}",
            store.dimension()
        )));
    }

    let mut manifest = RunManifest::new(
        "decompose",
        config.seed,
        serde_json::json!({ "train": &config }),
    );
    for input in [
        &args.checkpoint,
        &args.embeddings,
        &args.articles,
        &args.citations,
    ] {
        manifest.add_input(input)?;
    }
    let records_path = args.out.join("decompositions.jsonl");
    manifest.add_output(&records_path);
    manifest.write(&args.out)?;

    // Each case decomposes as a source with its own instrument on both
    // attention slots; uncited cases pass through whole.
    let mut count = 0usize;
    let mut passthrough = 0usize;
    atomic_file(&records_path, |p| {
        let mut w = std::io::BufWriter::new(std::fs::File::create(p)?);
        for id in store.case_ids() {
            let e = store.case(id).expect("listed case id");
            let dec = if store.is_uncited(id) {
                passthrough += 1;
                decompose_passthrough(e, config.mode)
            } else {
                let iv = store.iv_vector(id)?;
                decompose(e, &iv, &iv, &model.recon.source, config.mode)?
            };
            serde_json::to_writer(&mut w, &dec.to_record(id))?;
            w.write_all(b"\n")?;
            count += 1;
        }
        w.flush()?;
        Ok(())
    })?;

    println!(
        "wrote {} ({count} records, {passthrough} without instruments)",
        records_path.display()
    );
    Ok(0)
}
