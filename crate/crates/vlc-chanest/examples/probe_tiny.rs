//! Throwaway probe: how noise-map sensitivity grows with training length
//! and scene diversity at toy scale. Not part of the example suite.

use std::time::Instant;

use vlc_chanest::channel::{GridSpec, VlcScene};
use vlc_chanest::dataset::split_dataset;
use vlc_chanest::eval::{noisy_psnr_stats, run_sensitivity_sweep, SweepSpec};
use vlc_chanest::model::ModelConfig;
use vlc_chanest::training::{generate_dataset, train, SceneRandomization, TrainConfig};
use vlc_chanest::Result;

fn main() -> Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let epochs: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(600);
    let grid: String = args.get(2).cloned().unwrap_or_else(|| "6x6".to_string());
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let patch: usize = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(24);
    let batch: usize = args.get(5).and_then(|s| s.parse().ok()).unwrap_or(8);
    let wide: bool = args.get(6).map(|s| s == "wide").unwrap_or(false);

    let (gx, gy) = {
        let mut it = grid.split('x').map(|s| s.parse::<usize>().unwrap());
        (it.next().unwrap(), it.next().unwrap())
    };
    let scene = VlcScene::with_grids(
        GridSpec { count_x: gx, count_y: gy, spacing_m: 0.4, plane_height_m: 3.0 },
        GridSpec { count_x: gx, count_y: gy, spacing_m: 0.1, plane_height_m: 1.0 },
    );
    let mut ranges = SceneRandomization::default();
    if wide {
        ranges.vertical_distance_m = (1.2, 2.8);
        ranges.pd_offset_x_m = (-1.2, 1.2);
        ranges.pd_offset_y_m = (-1.2, 1.2);
        ranges.led_spacing_m = (0.25, 0.55);
        ranges.pd_spacing_m = (0.04, 0.16);
    }
    let records = generate_dataset(&scene, 40, 5, &ranges)?;
    let (train_set, test_set) = split_dataset(records)?;
    let train_ids: Vec<u64> = train_set.iter().map(|r| r.id).collect();

    let cfg = TrainConfig {
        epochs,
        batch_size: batch,
        patch_size: patch,
        learning_rate: lr,
        seed: 1,
        ..TrainConfig::default()
    };
    let t0 = Instant::now();
    let outcome = train(&train_set, ModelConfig::new(5, 8)?, &cfg)?;
    eprintln!(
        "epochs {epochs} grid {grid} lr {lr} patch {patch} batch {batch} wide {wide}: train {:.0}s, final loss {:.3}",
        t0.elapsed().as_secs_f64(),
        outcome.loss_history.last().unwrap()
    );

    let spec = SweepSpec {
        sigma_o_grid: vec![5.0, 25.0, 50.0],
        sigma_inputs: vec![5.0, 25.0, 50.0],
        seeds: vec![1, 2],
        ..SweepSpec::default()
    };
    let pts = run_sensitivity_sweep(&outcome.params, &train_ids, &test_set, &spec)?;
    for p in &pts {
        eprintln!(
            "  sigma_o={:>2} {:<10} psnr={:.2}",
            p.sigma_o, p.method, p.psnr_mean
        );
    }
    let m = |so: f64, label: &str| {
        pts.iter().find(|p| p.sigma_o == so && p.method == label).unwrap().psnr_mean
    };
    eprintln!(
        "  matched-25 {:.2} | decline (map 25): {:.2} dB | map effect at 50: {:.2} dB | noisy25 {:.2}",
        m(25.0, "FFDNet-25"),
        m(25.0, "FFDNet-25") - m(50.0, "FFDNet-25"),
        m(50.0, "FFDNet-50") - m(50.0, "FFDNet-5"),
        noisy_psnr_stats(&test_set, 25.0, &[1, 2])?.0
    );
    Ok(())
}
