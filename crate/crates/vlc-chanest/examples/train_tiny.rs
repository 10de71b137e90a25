//! Train a small denoiser end to end in seconds.
//!
//! Uses a 36×36 channel (6×6 arrays) and a reduced architecture so the whole
//! loop (scene randomization, patch sampling, noise injection, Adam) runs at
//! example speed. The printed loss history should fall steeply over the
//! first epochs; the final section denoises a held-out image and reports the
//! PSNR gain over the raw noisy input.
//!
//! Run with: cargo run --release --example train_tiny

use vlc_chanest::channel::{GridSpec, VlcScene};
use vlc_chanest::eval::ffdnet_denoise;
use vlc_chanest::imaging::{add_awgn, psnr};
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
    println!("dataset: {} training images, {} held out", train_set.len(), test_set.len());

    let model_config = ModelConfig::new(5, 8)?;
    let train_config = TrainConfig {
        epochs: 600,
        batch_size: 8,
        patch_size: 24,
        seed: 1,
        ..TrainConfig::default()
    };
    println!(
        "training depth {} / {} features ({} parameters) for {} epochs",
        model_config.depth,
        model_config.features,
        model_config.parameter_count(),
        train_config.epochs
    );

    let outcome = train(&train_set, model_config, &train_config)?;
    println!("\nepoch  loss");
    for (epoch, loss) in outcome.loss_history.iter().enumerate() {
        if epoch % 25 == 0 || epoch + 1 == outcome.loss_history.len() {
            println!("{epoch:>5}  {loss:.6}");
        }
    }

    // Denoise a held-out image at matched noise level.
    let sigma_o = 25.0;
    let reference = &test_set[0].clean_image;
    let noisy = add_awgn(reference, sigma_o, 77)?;
    let estimate = ffdnet_denoise(&outcome.params, &noisy, sigma_o)?;
    let noisy_psnr = psnr(reference, noisy.pixels())?;
    let denoised_psnr = psnr(reference, &estimate)?;
    println!("\nheld-out image at sigma_o = {sigma_o}:");
    println!("  noisy     {noisy_psnr:.2} dB");
    println!("  denoised  {denoised_psnr:.2} dB ({:+.2} dB)", denoised_psnr - noisy_psnr);
    Ok(())
}
