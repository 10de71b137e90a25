//! Noise-level sensitivity sweep: how denoising quality depends on the gap
//! between the real noise level σ_o and the input level σ the network is
//! told to remove.
//!
//! Trains a small model first, then evaluates every (σ_o, σ) combination on
//! the held-out split and prints the curves plus the CSV they serialize to.
//! With a trained model, each σ curve plateaus while σ_o ≤ σ and falls off
//! once σ_o grows past it.
//!
//! Run with: cargo run --release --example sensitivity_sweep

use vlc_chanest::channel::{GridSpec, VlcScene};
use vlc_chanest::config::short_hash;
use vlc_chanest::eval::{curve_csv_string, run_sensitivity_sweep, CsvMeta, SweepSpec};
use vlc_chanest::model::ModelConfig;
use vlc_chanest::training::{generate_dataset, train, SceneRandomization, TrainConfig};
use vlc_chanest::Result;

fn main() -> Result<()> {
    let scene = VlcScene::with_grids(
        GridSpec { count_x: 6, count_y: 6, spacing_m: 0.4, plane_height_m: 3.0 },
        GridSpec { count_x: 6, count_y: 6, spacing_m: 0.1, plane_height_m: 1.0 },
    );
    let records = generate_dataset(&scene, 40, 5, &SceneRandomization::default())?;
    let (train_set, test_set) = vlc_chanest::dataset::split_dataset(records)?;

    println!("training a small model first (a few seconds)...");
    let outcome = train(
        &train_set,
        ModelConfig::new(5, 8)?,
        &TrainConfig { epochs: 600, batch_size: 8, patch_size: 24, seed: 1, ..TrainConfig::default() },
    )?;

    let spec = SweepSpec {
        sigma_o_grid: vec![0.0, 10.0, 20.0, 30.0, 40.0, 50.0],
        sigma_inputs: vec![15.0, 25.0, 50.0],
        seeds: vec![1, 2],
        ..SweepSpec::default()
    };
    let train_ids: Vec<u64> = train_set.iter().map(|r| r.id).collect();
    let points = run_sensitivity_sweep(&outcome.params, &train_ids, &test_set, &spec)?;

    println!("\nmean PSNR [dB] over {} test images × {} seeds:", test_set.len(), spec.seeds.len());
    print!("{:>8}", "sigma_o");
    for sigma in &spec.sigma_inputs {
        print!(" {:>11}", format!("sigma={sigma}"));
    }
    println!();
    for (row, &sigma_o) in spec.sigma_o_grid.iter().enumerate() {
        print!("{sigma_o:>8}");
        for col in 0..spec.sigma_inputs.len() {
            print!(" {:>11.2}", points[row * spec.sigma_inputs.len() + col].psnr_mean);
        }
        println!();
    }

    let meta = CsvMeta {
        config_hash: short_hash(spec.to_config().to_text().as_bytes()),
        seeds: spec.seeds.clone(),
    };
    println!("\nCSV form (first lines):");
    for line in curve_csv_string(&points, &meta).lines().take(5) {
        println!("  {line}");
    }
    Ok(())
}
