//! Fit the patchwise MMSE baseline and watch it interpolate between the
//! data and the prior as the noise level grows.
//!
//! Run with: cargo run --release --example mmse_baseline

use vlc_chanest::channel::{GridSpec, VlcScene};
use vlc_chanest::imaging::{add_awgn, psnr};
use vlc_chanest::mmse::{fit_mmse, mmse_denoise};
use vlc_chanest::training::{generate_dataset, SceneRandomization};
use vlc_chanest::Result;

fn main() -> Result<()> {
    let scene = VlcScene::with_grids(
        GridSpec { count_x: 8, count_y: 8, spacing_m: 0.4, plane_height_m: 3.0 },
        GridSpec { count_x: 8, count_y: 8, spacing_m: 0.1, plane_height_m: 1.0 },
    );
    let records = generate_dataset(&scene, 40, 9, &SceneRandomization::default())?;
    let (train_set, test_set) = vlc_chanest::dataset::split_dataset(records)?;

    let patch_size = 8;
    let clean: Vec<_> = train_set.iter().map(|r| r.clean_image.clone()).collect();
    let model = fit_mmse(&clean, patch_size, 20_000, 0)?;
    println!(
        "fitted {p}×{p} patch prior from {} images{}",
        clean.len(),
        if model.underdetermined() { " (underdetermined, jitter-backed)" } else { "" },
        p = patch_size
    );
    let dim = patch_size * patch_size;
    let mean_of_mean = model.mean().iter().sum::<f64>() / dim as f64;
    let mean_var = (0..dim).map(|i| model.covariance(i, i)).sum::<f64>() / dim as f64;
    println!("prior: mean pixel {mean_of_mean:.4}, average variance {mean_var:.3e}");

    // Denoise a held-out image across noise levels. As sigma_o grows the
    // estimate is pulled from the observation toward the prior mean, and the
    // PSNR gain over the raw noisy image grows with it.
    let reference = &test_set[0].clean_image;
    println!("\n{:>8} {:>12} {:>12} {:>8}", "sigma_o", "noisy [dB]", "mmse [dB]", "gain");
    for sigma_o in [5.0, 15.0, 25.0, 50.0] {
        let noisy = add_awgn(reference, sigma_o, 123)?;
        let estimate = mmse_denoise(&model, &noisy)?;
        let noisy_db = psnr(reference, noisy.pixels())?;
        let mmse_db = psnr(reference, &estimate)?;
        println!(
            "{sigma_o:>8} {noisy_db:>12.2} {mmse_db:>12.2} {:>+8.2}",
            mmse_db - noisy_db
        );
    }

    // The zero-noise limit returns the input unchanged.
    let clean_input = add_awgn(reference, 0.0, 1)?;
    let estimate = mmse_denoise(&model, &clean_input)?;
    let max_dev = estimate
        .iter()
        .zip(clean_input.pixels())
        .map(|(e, y)| (e - y).abs())
        .fold(0.0f64, f64::max);
    println!("\nat sigma_o = 0 the estimator is the identity: max deviation {max_dev:.2e}");
    Ok(())
}
