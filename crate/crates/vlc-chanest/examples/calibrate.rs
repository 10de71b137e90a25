//! Throwaway calibration harness; not part of the example suite.

use std::time::Instant;

use vlc_chanest::channel::VlcScene;
use vlc_chanest::dataset::split_dataset;
use vlc_chanest::eval::{
    noisy_psnr_stats, run_mmse_comparison, run_sensitivity_sweep, SigmaMode, SweepSpec,
};
use vlc_chanest::mmse::fit_mmse;
use vlc_chanest::model::ModelConfig;
use vlc_chanest::training::{generate_dataset, train, SceneRandomization, TrainConfig};
use vlc_chanest::Result;

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(16);

    let t0 = Instant::now();
    let records =
        generate_dataset(&VlcScene::default_128(), 250, 7, &SceneRandomization::default())?;
    eprintln!("gen 250 records: {:.1}s", t0.elapsed().as_secs_f64());
    let (train_set, test_set) = split_dataset(records)?;
    eprintln!("split: {} train / {} test", train_set.len(), test_set.len());

    let cfg = TrainConfig { epochs, batch_size: batch, seed: 1, ..TrainConfig::default() };
    let steps_per_epoch = (train_set.len() + batch - 1) / batch;
    let t0 = Instant::now();
    let outcome = train(&train_set, ModelConfig::new(15, 32)?, &cfg)?;
    let secs = t0.elapsed().as_secs_f64();
    eprintln!(
        "train {epochs} epochs × {steps_per_epoch} steps: {:.0}s ({:.2} s/step)",
        secs,
        secs / (epochs * steps_per_epoch) as f64
    );
    for (e, l) in outcome.loss_history.iter().enumerate() {
        if e % 5 == 0 || e + 1 == epochs {
            eprintln!("  epoch {e}: loss {l:.4}");
        }
    }

    let ckpt = std::env::temp_dir().join("calibrate-model.ffdn");
    outcome.params.save(&ckpt)?;
    eprintln!("checkpoint: {}", ckpt.display());

    let train_ids: Vec<u64> = train_set.iter().map(|r| r.id).collect();
    let spec = SweepSpec {
        sigma_o_grid: vec![5.0, 15.0, 25.0, 40.0, 50.0],
        sigma_inputs: vec![25.0],
        seeds: vec![1, 2],
        ..SweepSpec::default()
    };
    let t0 = Instant::now();
    let pts = run_sensitivity_sweep(&outcome.params, &train_ids, &test_set, &spec)?;
    eprintln!("sweep: {:.1}s", t0.elapsed().as_secs_f64());
    for p in &pts {
        eprintln!("  sigma_o={:>2} {} psnr={:.2}±{:.2}", p.sigma_o, p.method, p.psnr_mean, p.psnr_std);
    }
    let (noisy_mean, _) = noisy_psnr_stats(&test_set, 25.0, &[1, 2])?;
    eprintln!("noisy input at sigma_o=25: {noisy_mean:.2} dB");

    let clean: Vec<_> = train_set.iter().map(|r| r.clean_image.clone()).collect();
    let t0 = Instant::now();
    let mmse = fit_mmse(&clean, 8, 20_000, 0)?;
    eprintln!("fit mmse: {:.1}s", t0.elapsed().as_secs_f64());
    let spec = SweepSpec {
        sigma_o_grid: vec![40.0, 50.0],
        seeds: vec![1, 2],
        mode: SigmaMode::Tunable,
        ..SweepSpec::default()
    };
    let t0 = Instant::now();
    let pts = run_mmse_comparison(&outcome.params, &mmse, &train_ids, &test_set, &spec)?;
    eprintln!("compare: {:.1}s", t0.elapsed().as_secs_f64());
    for p in &pts {
        eprintln!("  sigma_o={:>2} {:<16} psnr={:.2}", p.sigma_o, p.method, p.psnr_mean);
    }
    Ok(())
}
