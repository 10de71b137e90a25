//! Treat a channel matrix as an image, corrupt it with Gaussian noise at
//! several levels, and score the noisy copies with PSNR.
//!
//! Run with: cargo run --release --example noise_and_psnr

use vlc_chanest::channel::{build_channel_matrix, VlcScene};
use vlc_chanest::imaging::{add_awgn, matrix_to_image, psnr};
use vlc_chanest::Result;

fn main() -> Result<()> {
    let scene = VlcScene::default_128();
    let matrix = build_channel_matrix(&scene)?;
    let image = matrix_to_image(&matrix)?;
    println!(
        "channel image: {}×{}, normalization min {:.3e}, scale {:.3e}",
        image.rows(),
        image.cols(),
        image.norm_min(),
        image.norm_scale()
    );

    // Noise levels follow the 0-255 convention: σ_o = 25 means a standard
    // deviation of 25/255 on the unit pixel scale. For pure Gaussian noise
    // the expected PSNR is 20·log10(255/σ_o).
    println!("\n{:>8} {:>12} {:>12}", "sigma_o", "psnr [dB]", "expected");
    for sigma_o in [5.0, 15.0, 25.0, 50.0] {
        let noisy = add_awgn(&image, sigma_o, 42)?;
        let measured = psnr(&image, noisy.pixels())?;
        let expected = 20.0 * (255.0 / sigma_o).log10();
        println!("{sigma_o:>8} {measured:>12.2} {expected:>12.2}");
    }

    // The normalization is invertible: a denoised image converts back to
    // physical channel gains.
    let restored = image.to_matrix()?;
    let max_rel = matrix
        .entries()
        .iter()
        .zip(restored.entries())
        .map(|(a, b)| ((a - b) / a.abs().max(1e-300)).abs())
        .fold(0.0f64, f64::max)
        .max(0.0);
    println!("\nround trip back to gains: max relative error {max_rel:.2e}");
    Ok(())
}
