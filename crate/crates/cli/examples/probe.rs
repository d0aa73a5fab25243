//! Ad-hoc tuning probe: directional grid means under candidate label
//! rule mixes. Not part of the shipped surface.

use lexmatch_core::data::{generate_synthetic, SyntheticSpec};
use lexmatch_core::evalkit::{run_cell, IvSource};
use lexmatch_core::reconstruct::{IvMode, ReconMode};
use lexmatch_core::trainer::{evaluate_raw, train_raw_head, TrainConfig};
use lexmatch_core::Result;

fn main() -> Result<()> {
    let ivb = |n: usize| TrainConfig {
        iv_batches_per_iter: Some(n),
        ..Default::default()
    };
    let variants: Vec<(&str, f64, TrainConfig)> = vec![
        ("law0.80 ivb10", 0.80, ivb(10)),
        ("law0.70 ivb5", 0.70, ivb(5)),
        ("law0.70 ivb10", 0.70, ivb(10)),
        ("law0.70 ivb25", 0.70, ivb(25)),
        ("law0.65 ivb10", 0.65, ivb(10)),
    ];

    println!(
        "{:<22} {:>7} {:>7} {:>7} {:>7} {:>7} {:>7} {:>9} {:>9}",
        "variant", "full", "fitted", "resid", "half", "all", "raw", "full>=raw", "all>=raw"
    );
    for (name, law_weight, base) in variants {
        let mut acc = [0.0f64; 6];
        let mut full_wins = 0usize;
        let mut noise_wins = 0usize;
        let mut detail = String::new();
        for seed in 0..10u64 {
            let data = generate_synthetic(&SyntheticSpec {
                seed,
                law_rule_weight: law_weight,
                ..Default::default()
            })?;
            let cell = |mode: ReconMode, noise: f64| -> Result<f64> {
                Ok(run_cell(
                    &data,
                    &base,
                    mode,
                    IvMode::Shared,
                    IvSource::Oracle,
                    noise,
                    seed,
                    false,
                )?
                .0
                .accuracy)
            };
            let raw_cfg = TrainConfig {
                seed,
                ..base.clone()
            };
            let raw_out = train_raw_head(&data.train, &data.valid, &data.store, &raw_cfg)?;
            let raw = evaluate_raw(&data.test, &data.store, &raw_out.head)?.1;
            let row = [
                cell(ReconMode::Full, 0.0)?,
                cell(ReconMode::FittedOnly, 0.0)?,
                cell(ReconMode::ResidualOnly, 0.0)?,
                cell(ReconMode::Full, 0.5)?,
                cell(ReconMode::Full, 1.0)?,
                raw,
            ];
            for (slot, v) in acc.iter_mut().zip(row) {
                *slot += v;
            }
            if row[0] >= raw {
                full_wins += 1;
            }
            if row[4] >= raw {
                noise_wins += 1;
            }
            detail.push_str(&format!(
                "  seed {seed}: full {:.2} fit {:.2} res {:.2} half {:.2} all {:.2} raw {:.2}\n",
                row[0], row[1], row[2], row[3], row[4], row[5]
            ));
        }
        for slot in acc.iter_mut() {
            *slot /= 10.0;
        }
        println!(
            "{:<22} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>7.4} {:>8}/10 {:>8}/10",
            name, acc[0], acc[1], acc[2], acc[3], acc[4], acc[5], full_wins, noise_wins
        );
        print!("{detail}");
    }
    Ok(())
}
