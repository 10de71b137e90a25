//! Throwaway probe: full-scale decline trajectory for fixture budgeting.
//! Not part of the example suite.

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
    let batch: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);
    let patch: usize = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(64);
    let lr: f64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(3e-3);
    let features: usize = args.get(6).and_then(|s| s.parse().ok()).unwrap_or(32);

    let scene = VlcScene::default_128();
    let t0 = Instant::now();
    let records = generate_dataset(&scene, 250, 7, &SceneRandomization::default())?;
    let (train_set, test_set) = split_dataset(records)?;
    let train_ids: Vec<u64> = train_set.iter().map(|r| r.id).collect();
    eprintln!("dataset: {:.0}s", t0.elapsed().as_secs_f64());

    let cfg = TrainConfig {
        epochs,
        batch_size: batch,
        patch_size: patch,
        learning_rate: lr,
        seed: 1,
        ..TrainConfig::default()
    };
    let t1 = Instant::now();
    let outcome = train(&train_set, ModelConfig::new(15, features)?, &cfg)?;
    let secs = t1.elapsed().as_secs_f64();
    let steps = epochs * train_set.len().div_ceil(batch);
    eprintln!(
        "epochs {epochs} batch {batch} patch {patch} lr {lr}: {secs:.0}s, {steps} steps, \
         {:.3} s/step, loss {:.2}",
        secs / steps as f64,
        outcome.loss_history.last().unwrap()
    );

    if args.get(5).map(|s| s == "notest").unwrap_or(false) {
        return Ok(());
    }
    let t2 = Instant::now();
    let spec = SweepSpec {
        sigma_o_grid: vec![5.0, 15.0, 25.0, 40.0, 50.0],
        sigma_inputs: vec![25.0],
        seeds: vec![1, 2],
        ..SweepSpec::default()
    };
    let pts = run_sensitivity_sweep(&outcome.params, &train_ids, &test_set, &spec)?;
    for p in &pts {
        eprintln!("  sigma_o={:>2} {:<10} psnr={:.2}", p.sigma_o, p.method, p.psnr_mean);
    }
    let spec2 = SweepSpec {
        sigma_o_grid: vec![25.0, 50.0],
        sigma_inputs: vec![5.0, 50.0],
        seeds: vec![1, 2],
        ..SweepSpec::default()
    };
    let pts2 = run_sensitivity_sweep(&outcome.params, &train_ids, &test_set, &spec2)?;
    for p in &pts2 {
        eprintln!("  sigma_o={:>2} {:<10} psnr={:.2}", p.sigma_o, p.method, p.psnr_mean);
    }
    let clean: Vec<_> = train_set.iter().map(|r| r.clean_image.clone()).collect();
    let mmse = fit_mmse(&clean, 8, 20_000, 0)?;
    let spec3 = SweepSpec {
        sigma_o_grid: vec![40.0, 50.0],
        sigma_inputs: vec![25.0],
        seeds: vec![1, 2],
        mode: SigmaMode::Tunable,
        ..SweepSpec::default()
    };
    let pts3 = run_mmse_comparison(&outcome.params, &mmse, &train_ids, &test_set, &spec3)?;
    for p in &pts3 {
        eprintln!("  sigma_o={:>2} {:<16} psnr={:.2}", p.sigma_o, p.method, p.psnr_mean);
    }
    let find = |pts: &[vlc_chanest::eval::CurvePoint], so: f64, label: &str| {
        pts.iter()
            .find(|p| p.sigma_o == so && p.method == label)
            .map(|p| p.psnr_mean)
            .unwrap()
    };
    eprintln!(
        "  matched-25 {:.2} | decline (map 25): {:.2} dB | plateau |p5-p15| {:.2} | \
         map effect at 50: {:.2} dB | noisy25 {:.2} | eval {:.0}s",
        find(&pts, 25.0, "FFDNet-25"),
        find(&pts, 25.0, "FFDNet-25") - find(&pts, 50.0, "FFDNet-25"),
        (find(&pts, 5.0, "FFDNet-25") - find(&pts, 15.0, "FFDNet-25")).abs(),
        find(&pts2, 50.0, "FFDNet-50") - find(&pts2, 50.0, "FFDNet-5"),
        noisy_psnr_stats(&test_set, 25.0, &[1, 2])?.0,
        t2.elapsed().as_secs_f64()
    );
    Ok(())
}
