//! `lexmatch eval`: score a checkpoint on labelled pairs, optionally
//! timing the reconstruction module's share of inference.

use std::path::PathBuf;
use std::time::Instant;

use clap::Args;
use lexmatch_core::data::{load_pairs, load_store};
use lexmatch_core::evalkit::metrics;
use lexmatch_core::numcore::checkpoint::Checkpoint;
use lexmatch_core::reconstruct::reconstruct_pair;
use lexmatch_core::trainer::{predict_pairs, TrainedModel};
use lexmatch_core::{Error, Result};

use crate::manifest::{atomic_write, RunManifest};

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint written by `lexmatch train`.
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    articles: PathBuf,
    #[arg(long)]
    citations: PathBuf,
    /// Pairs to score (JSON lines: {"x", "y", "z"}).
    #[arg(long)]
    pairs: PathBuf,
    /// Directory for manifest and report.json; stdout-only when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also measure per-pair inference time with and without the
    /// reconstruction module.
    #[arg(long)]
    timing: bool,
}

pub fn run(args: EvalArgs) -> Result<i32> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let (model, d, config) = TrainedModel::from_checkpoint(&ck)?;
    let store = load_store(&args.embeddings, &args.articles, &args.citations)?;
    if store.dimension() != d {
        return Err(Error::Shape(format!(
            "store dimension {} does not match checkpoint dimension {d}",
            store.dimension()
        )));
    }
    let pairs = load_pairs(&args.pairs, &store, config.z_classes)?;
    if pairs.is_empty() {
        return Err(Error::Input(format!(
            "no pairs in {}",
            args.pairs.display()
        )));
    }

    let predicted = predict_pairs(&pairs, &store, &model, config.mode, config.iv_mode)?;
    let truth: Vec<usize> = pairs.iter().map(|p| p.z).collect();
    let report = metrics(&predicted, &truth, config.z_classes)?;

    if let Some(out) = &args.out {
        let mut manifest = RunManifest::new(
            "eval",
            config.seed,
            serde_json::json!({ "train": &config, "timing": args.timing }),
        );
        for input in [
            &args.checkpoint,
            &args.embeddings,
            &args.articles,
            &args.citations,
            &args.pairs,
        ] {
            manifest.add_input(input)?;
        }
        let report_path = out.join("report.json");
        manifest.add_output(&report_path);
        manifest.write(out)?;
        let mut bytes = serde_json::to_vec_pretty(&report)?;
        bytes.push(b'\n');
        atomic_write(&report_path, &bytes)?;
    }

    println!(
        "pairs {}  accuracy {:.4}  macro_precision {:.4}  macro_recall {:.4}  macro_f1 {:.4}",
        report.total, report.accuracy, report.macro_precision, report.macro_recall, report.macro_f1
    );
    println!("confusion (rows = truth, columns = prediction):");
    for row in &report.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:6}")).collect();
        println!("  {}", cells.join(" "));
    }

    if args.timing {
        // Reconstructions are computed once up front so the second
        // column times the head alone on valid inputs for every mode.
        let rebuilt: Vec<(Vec<f64>, Vec<f64>)> = pairs
            .iter()
            .map(|p| {
                let (dx, dy) = reconstruct_pair(
                    &p.x_id,
                    &p.y_id,
                    &store,
                    &model.recon,
                    config.mode,
                    config.iv_mode,
                )?;
                Ok((dx.reconstructed, dy.reconstructed))
            })
            .collect::<Result<_>>()?;

        let time_full = || -> Result<f64> {
            let t = Instant::now();
            for p in &pairs {
                let (dx, dy) = reconstruct_pair(
                    &p.x_id,
                    &p.y_id,
                    &store,
                    &model.recon,
                    config.mode,
                    config.iv_mode,
                )?;
                std::hint::black_box(model.head.logits(&dx.reconstructed, &dy.reconstructed)?);
            }
            Ok(t.elapsed().as_secs_f64())
        };
        let time_head = || -> Result<f64> {
            let t = Instant::now();
            for (rx, ry) in &rebuilt {
                std::hint::black_box(model.head.logits(rx, ry)?);
            }
            Ok(t.elapsed().as_secs_f64())
        };
        // One warmup pass each, then the best of three timed passes.
        time_full()?;
        time_head()?;
        let full = (0..3).map(|_| time_full()).collect::<Result<Vec<_>>>()?;
        let head = (0..3).map(|_| time_head()).collect::<Result<Vec<_>>>()?;
        let per_pair = |xs: &[f64]| {
            xs.iter().cloned().fold(f64::INFINITY, f64::min) / pairs.len() as f64 * 1e6
        };
        let with_recon = per_pair(&full);
        let head_only = per_pair(&head);
        let rel = (with_recon - head_only) / head_only * 100.0;
        println!(
            "per-pair inference: {with_recon:.2} us with reconstruction, {head_only:.2} us head only (relative cost +{rel:.1}%)"
        );
    }
    Ok(0)
}
