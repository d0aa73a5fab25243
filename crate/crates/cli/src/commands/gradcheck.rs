//! `lexmatch gradcheck`: compare both stage losses' analytic
//! gradients against central finite differences on small synthetic
//! batches, across dimensions, heads, and reconstruction modes.

use clap::Args;
use lexmatch_core::data::{generate_synthetic, SyntheticSpec};
use lexmatch_core::head::HeadKind;
use lexmatch_core::numcore::gradcheck::grad_check;
use lexmatch_core::numcore::params::{flatten, write_flat};
use lexmatch_core::reconstruct::ReconMode;
use lexmatch_core::trainer::{init_model, iv_batch_loss, match_batch_loss, TrainConfig};
use lexmatch_core::Result;

#[derive(Args)]
pub struct GradcheckArgs {
    /// Embedding dimensions to check.
    #[arg(long, value_delimiter = ',', default_values_t = [4, 16])]
    d: Vec<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest acceptable relative error.
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
}

pub fn run(args: GradcheckArgs) -> Result<i32> {
    let seed = super::resolve_seed(args.seed);
    let mut worst = 0.0f64;

    for &d in &args.d {
        let data = generate_synthetic(&SyntheticSpec {
            d,
            num_articles: 6,
            num_cases: 24,
            train_pairs: 12,
            valid_pairs: 4,
            test_pairs: 4,
            seed,
            ..Default::default()
        })?;
        let batch = &data.train[..6];
        let store = &data.store;

        for head_kind in [HeadKind::ConcatMlp, HeadKind::Bilinear] {
            for mode in [ReconMode::Full, ReconMode::ConcatParts] {
                let config = TrainConfig {
                    mode,
                    head_kind,
                    head_hidden: 8,
                    seed,
                    ..Default::default()
                };
                let model = init_model(d, &config)?;

                let iv_flat = flatten(&model.recon.iv_tensor_refs());
                let iv_eval = |p: &[f64]| -> Result<f64> {
                    let mut recon = model.recon.clone();
                    write_flat(&mut recon.iv_tensor_muts(), p)?;
                    Ok(iv_batch_loss(batch, store, &recon, config.iv_mode)?.0)
                };
                let iv_grad = |p: &[f64]| -> Result<Vec<f64>> {
                    let mut recon = model.recon.clone();
                    write_flat(&mut recon.iv_tensor_muts(), p)?;
                    Ok(iv_batch_loss(batch, store, &recon, config.iv_mode)?.1)
                };
                let iv_report = grad_check(iv_eval, iv_grad, &iv_flat, args.step)?;

                let match_flat = {
                    let mut refs = model.recon.weight_tensor_refs();
                    refs.extend(model.head.tensor_refs("head"));
                    flatten(&refs)
                };
                let match_eval = |p: &[f64]| -> Result<f64> {
                    let mut m = model.clone();
                    let mut muts = m.recon.weight_tensor_muts();
                    muts.extend(m.head.tensor_muts("head"));
                    write_flat(&mut muts, p)?;
                    Ok(match_batch_loss(
                        batch,
                        store,
                        &m.recon,
                        &m.head,
                        config.mode,
                        config.iv_mode,
                    )?
                    .0)
                };
                let match_grad = |p: &[f64]| -> Result<Vec<f64>> {
                    let mut m = model.clone();
                    let mut muts = m.recon.weight_tensor_muts();
                    muts.extend(m.head.tensor_muts("head"));
                    write_flat(&mut muts, p)?;
                    Ok(match_batch_loss(
                        batch,
                        store,
                        &m.recon,
                        &m.head,
                        config.mode,
                        config.iv_mode,
                    )?
                    .1)
                };
                let match_report = grad_check(match_eval, match_grad, &match_flat, args.step)?;

                println!(
                    "d={d:<3} head={:<10} mode={:<12} regression {:.3e}  matching {:.3e}",
                    head_kind.as_str(),
                    mode.as_str(),
                    iv_report.max_rel_error,
                    match_report.max_rel_error
                );
                worst = worst
                    .max(iv_report.max_rel_error)
                    .max(match_report.max_rel_error);
            }
        }
    }

    println!(
        "max relative error {worst:.3e} (tolerance {:.1e})",
        args.tolerance
    );
    if worst < args.tolerance {
        Ok(0)
    } else {
        eprintln!("gradient check failed");
        Ok(3)
    }
}
