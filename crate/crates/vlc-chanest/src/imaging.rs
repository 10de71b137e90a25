//! Channel matrices as grayscale images.
//!
//! A gain matrix is min-max normalized to `[0, 1]` and treated as a noise-free
//! image; the stored `(min, scale)` pair makes the mapping invertible, so an
//! estimate produced in pixel space converts back to physical gains. Noise
//! levels follow the 0–255 convention throughout the crate: AWGN at level
//! `σ_o` has standard deviation `σ_o / 255` on the unit pixel scale, and PSNR
//! uses peak 1, which is the same number as the 255-peak convention on 8-bit
//! pixels.
//!
//! Noisy pixels are deliberately left unclipped; clipping would distort the
//! noise statistics the denoiser is trained on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::ChannelMatrix;
use crate::error::{Error, Result};

/// Noise-free channel image: pixels in `[0, 1]` plus the normalization that
/// produced them (`original = pixel * norm_scale + norm_min`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelImage {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    norm_min: f64,
    norm_scale: f64,
}

impl ChannelImage {
    /// Assemble an image from parts, checking the pixel-range and scale
    /// invariants. Used by patch extraction and dataset deserialization.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        pixels: Vec<f64>,
        norm_min: f64,
        norm_scale: f64,
    ) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pixels for {rows}×{cols}, got {}",
                rows * cols,
                pixels.len()
            )));
        }
        if !(norm_scale > 0.0) || !norm_scale.is_finite() || !norm_min.is_finite() {
            return Err(Error::DegenerateNormalization(format!(
                "norm_min {norm_min}, norm_scale {norm_scale}"
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("pixel {bad} outside [0, 1]")));
        }
        Ok(Self { rows, cols, pixels, norm_min, norm_scale })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }

    /// Offset of the normalization (the source matrix minimum).
    pub fn norm_min(&self) -> f64 {
        self.norm_min
    }

    /// Scale of the normalization (the source matrix dynamic range).
    pub fn norm_scale(&self) -> f64 {
        self.norm_scale
    }

    /// Invert the normalization back to a gain matrix.
    pub fn to_matrix(&self) -> Result<ChannelMatrix> {
        let entries = self
            .pixels
            .iter()
            .map(|p| p * self.norm_scale + self.norm_min)
            .collect();
        ChannelMatrix::from_entries(self.rows, self.cols, entries)
    }
}

/// Channel image after AWGN injection. Pixels may leave `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyChannelImage {
    rows: usize,
    cols: usize,
    pixels: Vec<f64>,
    sigma_o: f64,
}

impl NoisyChannelImage {
    /// Assemble a noisy image from parts. Pixels must be finite but can lie
    /// outside `[0, 1]`; the noise level uses the 0-255 convention.
    pub fn from_parts(rows: usize, cols: usize, pixels: Vec<f64>, sigma_o: f64) -> Result<Self> {
        if pixels.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "expected {} pixels for {rows}×{cols}, got {}",
                rows * cols,
                pixels.len()
            )));
        }
        if !(sigma_o >= 0.0) || !sigma_o.is_finite() {
            return Err(Error::Domain(format!("noise level must be >= 0, got {sigma_o}")));
        }
        if let Some(bad) = pixels.iter().find(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("noisy pixel {bad} is not finite")));
        }
        Ok(Self { rows, cols, pixels, sigma_o })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    /// Real noise level on the 0–255 convention.
    pub fn sigma_o(&self) -> f64 {
        self.sigma_o
    }
}

/// Min-max normalize a gain matrix into a `[0, 1]` image.
///
/// The matrix must span at least two distinct values (otherwise the mapping
/// cannot be inverted) and must have even dimensions so the downsampling
/// stage of the denoiser accepts the image.
pub fn matrix_to_image(matrix: &ChannelMatrix) -> Result<ChannelImage> {
    let (rows, cols) = (matrix.n_r(), matrix.n_t());
    if rows % 2 != 0 || cols % 2 != 0 {
        return Err(Error::Size(format!(
            "channel image dimensions must be even, got {rows}×{cols}"
        )));
    }
    let entries = matrix.entries();
    let min = entries.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = entries.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = max - min;
    if !(scale > 0.0) {
        return Err(Error::DegenerateNormalization(format!(
            "matrix is constant at {min}; min-max normalization is not invertible"
        )));
    }
    let pixels = entries.iter().map(|v| ((v - min) / scale).clamp(0.0, 1.0)).collect();
    ChannelImage::from_parts(rows, cols, pixels, min, scale)
}

/// Add zero-mean white Gaussian noise with standard deviation `sigma_o / 255`
/// on the pixel scale. Deterministic for a fixed seed: samples come from a
/// ChaCha8 stream through the ziggurat standard-normal sampler, row-major.
pub fn add_awgn(image: &ChannelImage, sigma_o: f64, seed: u64) -> Result<NoisyChannelImage> {
    if !(sigma_o >= 0.0) || !sigma_o.is_finite() {
        return Err(Error::Domain(format!("noise level must be >= 0, got {sigma_o}")));
    }
    let std = sigma_o / 255.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pixels = image
        .pixels()
        .iter()
        .map(|p| {
            let e: f64 = rng.sample(StandardNormal);
            p + std * e
        })
        .collect();
    Ok(NoisyChannelImage {
        rows: image.rows(),
        cols: image.cols(),
        pixels,
        sigma_o,
    })
}

/// Peak signal-to-noise ratio in dB with peak 1: `10·log10(1 / MSE)`.
///
/// Identical images report positive infinity.
pub fn psnr(reference: &ChannelImage, estimate: &[f64]) -> Result<f64> {
    if estimate.len() != reference.pixels().len() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} pixels, reference {}",
            estimate.len(),
            reference.pixels().len()
        )));
    }
    let mse: f64 = reference
        .pixels()
        .iter()
        .zip(estimate)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / estimate.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(-10.0 * mse.log10())
}

/// Extract `count` random square patches with uniformly drawn top-left
/// corners. Patches inherit the parent normalization, so they still convert
/// back to physical gains. Deterministic for a fixed seed.
pub fn extract_patches(
    image: &ChannelImage,
    patch: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ChannelImage>> {
    if patch == 0 || patch > image.rows() || patch > image.cols() {
        return Err(Error::Size(format!(
            "patch {patch} does not fit a {}×{} image",
            image.rows(),
            image.cols()
        )));
    }
    if patch % 2 != 0 {
        return Err(Error::Size(format!("patch size must be even, got {patch}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let r0 = rng.gen_range(0..=image.rows() - patch);
        let c0 = rng.gen_range(0..=image.cols() - patch);
        let mut pixels = Vec::with_capacity(patch * patch);
        for r in r0..r0 + patch {
            pixels.extend_from_slice(&image.pixels()[r * image.cols() + c0..][..patch]);
        }
        out.push(ChannelImage::from_parts(
            patch,
            patch,
            pixels,
            image.norm_min(),
            image.norm_scale(),
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_channel_matrix, ChannelMatrix, VlcScene};

    fn image_from(rows: usize, cols: usize, entries: Vec<f64>) -> ChannelImage {
        matrix_to_image(&ChannelMatrix::from_entries(rows, cols, entries).unwrap()).unwrap()
    }

    #[test]
    fn minmax_maps_endpoints_to_zero_and_one() {
        let img = image_from(2, 2, vec![0.0, 4.6e-5, 1e-5, 2e-5]);
        assert_eq!(img.pixel(0, 0), 0.0);
        assert_eq!(img.pixel(0, 1), 1.0);
    }

    #[test]
    fn two_by_two_example_scales_linearly() {
        let img = image_from(2, 2, vec![0.0, 1.0, 2.0, 4.0]);
        assert_eq!(img.pixels(), &[0.0, 0.25, 0.5, 1.0]);
    }

    #[test]
    fn normalization_round_trip_recovers_matrix() {
        let scene = VlcScene::with_grids(
            crate::channel::GridSpec { count_x: 4, count_y: 2, spacing_m: 0.7, plane_height_m: 3.0 },
            crate::channel::GridSpec { count_x: 4, count_y: 2, spacing_m: 0.2, plane_height_m: 1.0 },
        );
        let h = build_channel_matrix(&scene).unwrap();
        let img = matrix_to_image(&h).unwrap();
        let back = img.to_matrix().unwrap();
        for (a, b) in h.entries().iter().zip(back.entries()) {
            let rel = (a - b).abs() / a.abs().max(1e-300);
            assert!(rel < 1e-9 || (a - b).abs() < 1e-300, "{a} vs {b}");
        }
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        let m = ChannelMatrix::from_entries(2, 2, vec![3e-5; 4]).unwrap();
        assert!(matches!(matrix_to_image(&m), Err(Error::DegenerateNormalization(_))));
    }

    #[test]
    fn odd_dimensions_are_rejected() {
        let m = ChannelMatrix::from_entries(3, 2, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!(matches!(matrix_to_image(&m), Err(Error::Size(_))));
    }

    #[test]
    fn zero_noise_is_identity() {
        let img = image_from(2, 2, vec![0.0, 1.0, 2.0, 4.0]);
        let noisy = add_awgn(&img, 0.0, 7).unwrap();
        assert_eq!(noisy.pixels(), img.pixels());
    }

    #[test]
    fn noise_std_matches_sigma_over_255() {
        let n = 256;
        let pixels = vec![0.5; n * n];
        let img = ChannelImage::from_parts(n, n, pixels, 0.0, 1.0).unwrap();
        let noisy = add_awgn(&img, 25.0, 42).unwrap();
        let diffs: Vec<f64> = noisy.pixels().iter().map(|p| p - 0.5).collect();
        let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
        let var =
            diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (diffs.len() - 1) as f64;
        let std = var.sqrt();
        let expected = 25.0 / 255.0;
        assert!(
            (std - expected).abs() / expected < 0.05,
            "sample std {std}, expected {expected}"
        );
        // Sample mean of N(0, σ²) over n² draws stays within 3σ/√(n²) = 3σ/n.
        assert!(mean.abs() < 3.0 * expected / n as f64, "sample mean {mean}");
    }

    #[test]
    fn awgn_is_seed_deterministic() {
        let img = image_from(2, 2, vec![0.0, 1.0, 2.0, 4.0]);
        let a = add_awgn(&img, 15.0, 123).unwrap();
        let b = add_awgn(&img, 15.0, 123).unwrap();
        assert_eq!(a.pixels(), b.pixels());
        let c = add_awgn(&img, 15.0, 124).unwrap();
        assert_ne!(a.pixels(), c.pixels());
    }

    #[test]
    fn psnr_of_constant_offset() {
        let img = image_from(2, 2, vec![0.0, 0.2, 0.5, 1.0]);
        let shifted: Vec<f64> = img.pixels().iter().map(|p| p + 0.1).collect();
        let db = psnr(&img, &shifted).unwrap();
        assert!((db - 20.0).abs() < 1e-12, "psnr {db}");
    }

    #[test]
    fn psnr_of_sigma_25_noise() {
        let n = 256;
        let img = ChannelImage::from_parts(n, n, vec![0.5; n * n], 0.0, 1.0).unwrap();
        let noisy = add_awgn(&img, 25.0, 3).unwrap();
        let db = psnr(&img, noisy.pixels()).unwrap();
        // 20·log10(255/25) for Gaussian noise at σ_o = 25.
        assert!((db - 20.172).abs() < 0.3, "psnr {db}");
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let img = image_from(2, 2, vec![0.0, 1.0, 2.0, 4.0]);
        assert_eq!(psnr(&img, img.pixels()).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_decreases_with_noise_level() {
        let scene = VlcScene::default_128();
        let img = matrix_to_image(&build_channel_matrix(&scene).unwrap()).unwrap();
        // Majority ordering across three seeds.
        let mut votes = 0;
        for seed in [1u64, 2, 3] {
            let psnrs: Vec<f64> = [5.0, 15.0, 25.0, 50.0]
                .iter()
                .map(|&s| {
                    let noisy = add_awgn(&img, s, seed).unwrap();
                    psnr(&img, noisy.pixels()).unwrap()
                })
                .collect();
            if psnrs.windows(2).all(|w| w[0] > w[1]) {
                votes += 1;
            }
        }
        assert!(votes >= 2, "monotone ordering held in only {votes}/3 seeds");
    }

    #[test]
    fn patches_have_requested_shape() {
        let scene = VlcScene::default_128();
        let img = matrix_to_image(&build_channel_matrix(&scene).unwrap()).unwrap();
        let patches = extract_patches(&img, 70, 4, 9).unwrap();
        assert_eq!(patches.len(), 4);
        for p in &patches {
            assert_eq!((p.rows(), p.cols()), (70, 70));
            assert_eq!(p.norm_min(), img.norm_min());
        }
    }

    #[test]
    fn full_size_patch_is_the_image() {
        let img = image_from(4, 4, (0..16).map(f64::from).collect());
        let patches = extract_patches(&img, 4, 1, 0).unwrap();
        assert_eq!(patches[0].pixels(), img.pixels());
    }

    #[test]
    fn patch_corners_are_seed_deterministic() {
        let scene = VlcScene::default_128();
        let img = matrix_to_image(&build_channel_matrix(&scene).unwrap()).unwrap();
        let a = extract_patches(&img, 32, 6, 11).unwrap();
        let b = extract_patches(&img, 32, 6, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn oversized_or_odd_patches_are_rejected() {
        let img = image_from(4, 4, (0..16).map(f64::from).collect());
        assert!(matches!(extract_patches(&img, 6, 1, 0), Err(Error::Size(_))));
        assert!(matches!(extract_patches(&img, 3, 1, 0), Err(Error::Size(_))));
    }
}
