//! Patchwise linear minimum-mean-square-error baseline.
//!
//! The estimator treats non-overlapping p×p patches as draws from a single
//! Gaussian prior whose mean and covariance are learned from clean training
//! images. Given a noisy patch `y` and the true noise level, the estimate is
//! the Wiener filter
//!
//! ```text
//! x̂ = μ + C (C + σ² I)⁻¹ (y − μ),    σ = σ_o / 255
//! ```
//!
//! with `C` the (regularized) patch covariance. The noise level is assumed
//! known, matching the per-noise-level comparison protocol, and patches are
//! processed independently with no overlap or aggregation.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imaging::{ChannelImage, NoisyChannelImage};

/// Diagonal regularization added before every factorization.
pub const DEFAULT_JITTER: f64 = 1e-8;

/// Patch sizes above this make the p⁴-entry covariance impractical.
const MAX_PATCH_SIZE: usize = 32;

/// How many times the jitter is escalated (×10 each time) when a
/// factorization fails before giving up.
const MAX_JITTER_ESCALATIONS: u32 = 6;

const MODEL_MAGIC: &[u8; 4] = b"MMSE";
const MODEL_VERSION: u32 = 1;

/// Gaussian patch prior: sample mean and raw sample covariance of p×p
/// training patches, plus the jitter used to regularize solves.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseModel {
    patch_size: usize,
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    jitter: f64,
    /// Number of patches the statistics were estimated from; `None` for
    /// models read back from disk (the file format does not carry it).
    fitted_patches: Option<usize>,
}

impl MmseModel {
    /// Build a model from explicit statistics. The covariance is the raw
    /// (unregularized) one: it must be symmetric to 1e-10 and have
    /// eigenvalues no smaller than -1e-10.
    pub fn new(
        patch_size: usize,
        mean: Vec<f64>,
        covariance_rows: Vec<Vec<f64>>,
        jitter: f64,
    ) -> Result<Self> {
        if patch_size == 0 || patch_size > MAX_PATCH_SIZE {
            return Err(Error::Config(format!(
                "patch size must lie in 1..={MAX_PATCH_SIZE}, got {patch_size}"
            )));
        }
        let dim = patch_size * patch_size;
        if mean.len() != dim || covariance_rows.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "patch size {patch_size} needs a {dim}-vector mean and {dim}×{dim} covariance"
            )));
        }
        let mut covariance = DMatrix::zeros(dim, dim);
        for (i, row) in covariance_rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "covariance row {i} has {} entries, expected {dim}",
                    row.len()
                )));
            }
            for (j, v) in row.iter().enumerate() {
                covariance[(i, j)] = *v;
            }
        }
        if !(jitter > 0.0) || !jitter.is_finite() {
            return Err(Error::Config(format!("jitter must be positive, got {jitter}")));
        }
        let model = Self {
            patch_size,
            mean: DVector::from_vec(mean),
            covariance,
            jitter,
            fitted_patches: None,
        };
        model.check_statistics()?;
        Ok(model)
    }

    fn check_statistics(&self) -> Result<()> {
        if self.mean.iter().any(|v| !v.is_finite())
            || self.covariance.iter().any(|v| !v.is_finite())
        {
            return Err(Error::NonFinite("MMSE statistics contain NaN/Inf".into()));
        }
        let dim = self.covariance.nrows();
        for i in 0..dim {
            for j in i + 1..dim {
                let diff = (self.covariance[(i, j)] - self.covariance[(j, i)]).abs();
                if diff > 1e-10 {
                    return Err(Error::Statistics(format!(
                        "covariance asymmetric at ({i}, {j}): difference {diff:.3e}"
                    )));
                }
            }
        }
        let eigen = SymmetricEigen::new(self.covariance.clone());
        let min_eig = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < -1e-10 {
            return Err(Error::Statistics(format!(
                "covariance is not positive semidefinite: eigenvalue {min_eig:.3e}"
            )));
        }
        Ok(())
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    /// Prior mean, row-major over the patch.
    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    /// Raw sample covariance entry `(i, j)`.
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.covariance[(i, j)]
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// True when the fit saw fewer patches than the covariance dimension,
    /// so the statistics are rank-deficient and lean on the jitter.
    pub fn underdetermined(&self) -> bool {
        self.fitted_patches
            .map(|n| n < self.patch_size * self.patch_size)
            .unwrap_or(false)
    }

    /// Jitter-regularized covariance, the prior actually used by
    /// [`mmse_denoise`].
    fn regularized(&self) -> DMatrix<f64> {
        let mut c = self.covariance.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += self.jitter;
        }
        c
    }

    /// Serialize: magic `MMSE`, format version, patch size, then mean and
    /// raw covariance (row-major) as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut writer = BufWriter::new(File::create(path)?);
        writer.write_all(MODEL_MAGIC)?;
        writer.write_all(&MODEL_VERSION.to_le_bytes())?;
        writer.write_all(&(self.patch_size as u32).to_le_bytes())?;
        for v in self.mean.iter() {
            writer.write_all(&v.to_le_bytes())?;
        }
        let dim = self.covariance.nrows();
        for i in 0..dim {
            for j in 0..dim {
                writer.write_all(&self.covariance[(i, j)].to_le_bytes())?;
            }
        }
        writer.flush()?;
        Ok(())
    }

    /// Read a model written by [`MmseModel::save`], re-validating the
    /// statistics. The jitter reverts to [`DEFAULT_JITTER`].
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_bytes(&mut reader, &mut magic)?;
        if &magic != MODEL_MAGIC {
            return Err(Error::Format(format!(
                "not an MMSE model file: magic {magic:?} != {MODEL_MAGIC:?}"
            )));
        }
        let version = read_u32(&mut reader)?;
        if version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported MMSE model version {version}, expected {MODEL_VERSION}"
            )));
        }
        let patch_size = read_u32(&mut reader)? as usize;
        if patch_size == 0 || patch_size > MAX_PATCH_SIZE {
            return Err(Error::Format(format!(
                "MMSE model patch size {patch_size} outside 1..={MAX_PATCH_SIZE}"
            )));
        }
        let dim = patch_size * patch_size;
        let mut mean = DVector::zeros(dim);
        for i in 0..dim {
            mean[i] = read_f64(&mut reader)?;
        }
        let mut covariance = DMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                covariance[(i, j)] = read_f64(&mut reader)?;
            }
        }
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing)? != 0 {
            return Err(Error::Format("MMSE model file has trailing data".into()));
        }
        let model = Self {
            patch_size,
            mean,
            covariance,
            jitter: DEFAULT_JITTER,
            fitted_patches: None,
        };
        model
            .check_statistics()
            .map_err(|e| Error::Format(format!("MMSE model statistics invalid: {e}")))?;
        Ok(model)
    }
}

fn read_bytes<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Format("MMSE model file is truncated".into())
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(reader: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_bytes(reader, &mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64<R: Read>(reader: &mut R) -> Result<f64> {
    let mut buf = [0u8; 8];
    read_bytes(reader, &mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

/// Estimate the patch prior from clean images: sample mean and unbiased
/// sample covariance over non-overlapping p×p patches, at most `max_patches`
/// of them (subsampled deterministically under `seed` when more are
/// available). A fit from fewer patches than p² is allowed but flagged via
/// [`MmseModel::underdetermined`].
pub fn fit_mmse(
    images: &[ChannelImage],
    patch_size: usize,
    max_patches: usize,
    seed: u64,
) -> Result<MmseModel> {
    if patch_size == 0 || patch_size > MAX_PATCH_SIZE {
        return Err(Error::Config(format!(
            "patch size must lie in 1..={MAX_PATCH_SIZE}, got {patch_size}"
        )));
    }
    if images.is_empty() {
        return Err(Error::Statistics("MMSE fit needs at least one image".into()));
    }
    if max_patches < 2 {
        return Err(Error::Config("max_patches must be at least 2".into()));
    }
    // Non-overlapping grid positions across all images.
    let mut positions: Vec<(usize, usize, usize)> = Vec::new();
    for (idx, image) in images.iter().enumerate() {
        for by in 0..image.rows() / patch_size {
            for bx in 0..image.cols() / patch_size {
                positions.push((idx, by, bx));
            }
        }
    }
    if positions.len() < 2 {
        return Err(Error::Statistics(format!(
            "found {} patch(es) of size {patch_size}; covariance needs at least 2",
            positions.len()
        )));
    }
    if positions.len() > max_patches {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        positions.shuffle(&mut rng);
        positions.truncate(max_patches);
    }
    let dim = patch_size * patch_size;
    let read_patch = |&(idx, by, bx): &(usize, usize, usize)| -> DVector<f64> {
        let image = &images[idx];
        let mut v = DVector::zeros(dim);
        for r in 0..patch_size {
            for c in 0..patch_size {
                v[r * patch_size + c] = image.pixel(by * patch_size + r, bx * patch_size + c);
            }
        }
        v
    };
    let n = positions.len();
    let mut mean = DVector::zeros(dim);
    for pos in &positions {
        mean += read_patch(pos);
    }
    mean /= n as f64;
    let mut covariance = DMatrix::zeros(dim, dim);
    for pos in &positions {
        let centered = read_patch(pos) - &mean;
        // Accumulate the lower triangle; the matrix is mirrored below so
        // symmetry is exact by construction.
        for i in 0..dim {
            for j in 0..=i {
                covariance[(i, j)] += centered[i] * centered[j];
            }
        }
    }
    covariance /= (n - 1) as f64;
    for i in 0..dim {
        for j in 0..i {
            covariance[(j, i)] = covariance[(i, j)];
        }
    }
    let model = MmseModel {
        patch_size,
        mean,
        covariance,
        jitter: DEFAULT_JITTER,
        fitted_patches: Some(n),
    };
    model.check_statistics()?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// Denoising
// ---------------------------------------------------------------------------

/// Mirror an out-of-range index back into `0..len` (edge-inclusive
/// reflection), for padding images whose dimensions are not multiples of the
/// patch size.
fn reflect(index: usize, len: usize) -> usize {
    if index < len {
        index
    } else {
        2 * len - 1 - index
    }
}

/// Denoise a noisy channel image with the patch prior at its known noise
/// level. Dimensions that are not multiples of the patch size are handled by
/// reflect-padding on the bottom/right and cropping the result.
pub fn mmse_denoise(model: &MmseModel, noisy: &NoisyChannelImage) -> Result<Vec<f64>> {
    let p = model.patch_size;
    let (rows, cols) = (noisy.rows(), noisy.cols());
    if rows < p || cols < p {
        return Err(Error::Size(format!(
            "image {rows}×{cols} is smaller than the {p}×{p} patch"
        )));
    }
    let padded_rows = rows.div_ceil(p) * p;
    let padded_cols = cols.div_ceil(p) * p;
    let mut padded = vec![0.0f64; padded_rows * padded_cols];
    for r in 0..padded_rows {
        let sr = reflect(r, rows);
        for c in 0..padded_cols {
            padded[r * padded_cols + c] = noisy.pixels()[sr * cols + reflect(c, cols)];
        }
    }
    let sigma = noisy.sigma_o() / 255.0;
    let noise_var = sigma * sigma;
    let prior = model.regularized();
    // (C + sigma^2 I) is shared by every patch; factor it once, escalating
    // the jitter only if the factorization fails.
    let mut extra = 0.0;
    let mut chol: Option<Cholesky<f64, nalgebra::Dyn>> = None;
    for attempt in 0..=MAX_JITTER_ESCALATIONS {
        let mut system = prior.clone();
        for i in 0..system.nrows() {
            system[(i, i)] += noise_var + extra;
        }
        if let Some(factor) = Cholesky::new(system) {
            chol = Some(factor);
            break;
        }
        extra = model.jitter * 10f64.powi(attempt as i32 + 1);
    }
    let chol = chol.ok_or_else(|| {
        Error::Numerical(format!(
            "Cholesky factorization failed even with jitter escalated to {extra:.3e}"
        ))
    })?;
    let dim = p * p;
    let mut estimate = vec![0.0f64; padded_rows * padded_cols];
    let mut patch = DVector::zeros(dim);
    for by in 0..padded_rows / p {
        for bx in 0..padded_cols / p {
            for r in 0..p {
                for c in 0..p {
                    patch[r * p + c] = padded[(by * p + r) * padded_cols + bx * p + c];
                }
            }
            let centered = &patch - &model.mean;
            let solved = chol.solve(&centered);
            // Guard the solve quality; an SPD factorization of a 0..1-scale
            // covariance should be far inside this bound.
            let rhs_norm = centered.norm();
            if rhs_norm > 0.0 {
                let system_times = {
                    let mut out = &prior * &solved;
                    out.axpy(noise_var + extra, &solved, 1.0);
                    out
                };
                let res = (&system_times - &centered).norm() / rhs_norm;
                if res > 1e-8 {
                    return Err(Error::Numerical(format!(
                        "linear solve residual {res:.3e} exceeds 1e-8"
                    )));
                }
            }
            let filtered = &model.mean + &prior * &solved;
            for r in 0..p {
                for c in 0..p {
                    estimate[(by * p + r) * padded_cols + bx * p + c] = filtered[r * p + c];
                }
            }
        }
    }
    let mut out = vec![0.0f64; rows * cols];
    for r in 0..rows {
        out[r * cols..(r + 1) * cols]
            .copy_from_slice(&estimate[r * padded_cols..r * padded_cols + cols]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};
    use tempfile::tempdir;

    fn uniform_image(rows: usize, cols: usize, seed: u64) -> ChannelImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels = (0..rows * cols).map(|_| rng.gen_range(0.0..1.0)).collect();
        ChannelImage::from_parts(rows, cols, pixels, 0.0, 1.0).unwrap()
    }

    fn noisy_from(pixels: Vec<f64>, rows: usize, cols: usize, sigma_o: f64) -> NoisyChannelImage {
        NoisyChannelImage::from_parts(rows, cols, pixels, sigma_o).unwrap()
    }

    #[test]
    fn constant_images_give_zero_covariance_and_constant_mean() {
        let images: Vec<ChannelImage> = (0..3)
            .map(|_| ChannelImage::from_parts(8, 8, vec![0.4; 64], 0.0, 1.0).unwrap())
            .collect();
        let model = fit_mmse(&images, 4, 1000, 1).unwrap();
        for v in model.mean() {
            assert!((v - 0.4).abs() <= 1e-12);
        }
        for i in 0..16 {
            for j in 0..16 {
                assert!(model.covariance(i, j).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn two_patch_covariance_matches_hand_formula() {
        let a = vec![0.1, 0.2, 0.3, 0.4];
        let b = vec![0.5, 0.1, 0.9, 0.3];
        let images = vec![
            ChannelImage::from_parts(2, 2, a.clone(), 0.0, 1.0).unwrap(),
            ChannelImage::from_parts(2, 2, b.clone(), 0.0, 1.0).unwrap(),
        ];
        let model = fit_mmse(&images, 2, 10, 1).unwrap();
        for i in 0..4 {
            assert!((model.mean()[i] - (a[i] + b[i]) / 2.0).abs() < 1e-15);
        }
        // With two samples the unbiased covariance is the outer product of
        // the half-difference, times two.
        for i in 0..4 {
            for j in 0..4 {
                let di = (a[i] - b[i]) / 2.0;
                let dj = (a[j] - b[j]) / 2.0;
                assert!((model.covariance(i, j) - 2.0 * di * dj).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn fitted_covariance_is_symmetric() {
        let images: Vec<ChannelImage> = (0..4).map(|s| uniform_image(16, 16, s)).collect();
        let model = fit_mmse(&images, 4, 1000, 2).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                assert!((model.covariance(i, j) - model.covariance(j, i)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn underdetermined_fits_are_flagged_not_rejected() {
        let image = uniform_image(8, 16, 3);
        let model = fit_mmse(&[image], 8, 1000, 3).unwrap();
        assert!(model.underdetermined());
        let many: Vec<ChannelImage> = (0..5).map(|s| uniform_image(32, 32, s)).collect();
        let model = fit_mmse(&many, 4, 10_000, 4).unwrap();
        assert!(!model.underdetermined());
    }

    #[test]
    fn single_patch_or_no_images_is_rejected() {
        assert!(matches!(fit_mmse(&[], 4, 100, 1), Err(Error::Statistics(_))));
        let image = uniform_image(4, 4, 5);
        assert!(matches!(
            fit_mmse(&[image], 4, 100, 1),
            Err(Error::Statistics(_))
        ));
    }

    #[test]
    fn zero_noise_returns_the_input() {
        let images: Vec<ChannelImage> = (0..6).map(|s| uniform_image(24, 24, s)).collect();
        let model = fit_mmse(&images, 4, 10_000, 6).unwrap();
        let probe = uniform_image(8, 8, 99);
        let noisy = noisy_from(probe.pixels().to_vec(), 8, 8, 0.0);
        let estimate = mmse_denoise(&model, &noisy).unwrap();
        for (e, y) in estimate.iter().zip(probe.pixels()) {
            assert!((e - y).abs() <= 1e-8, "deviation {}", (e - y).abs());
        }
    }

    #[test]
    fn extreme_noise_returns_the_prior_mean() {
        let images: Vec<ChannelImage> = (0..6).map(|s| uniform_image(24, 24, s)).collect();
        let model = fit_mmse(&images, 4, 10_000, 7).unwrap();
        let probe = uniform_image(4, 4, 98);
        let noisy = noisy_from(probe.pixels().to_vec(), 4, 4, 1e6);
        let estimate = mmse_denoise(&model, &noisy).unwrap();
        for (i, e) in estimate.iter().enumerate() {
            assert!((e - model.mean()[i]).abs() <= 1e-6, "deviation {}", (e - model.mean()[i]).abs());
        }
    }

    #[test]
    fn scalar_model_halves_the_innovation_at_matched_variance() {
        // 1x1 patches, prior variance 1, noise variance 1: the Wiener factor
        // is exactly 1/2.
        let model = MmseModel::new(1, vec![0.25], vec![vec![1.0]], DEFAULT_JITTER).unwrap();
        let noisy = noisy_from(vec![0.85, 0.05, 0.45, 0.65], 2, 2, 255.0);
        let estimate = mmse_denoise(&model, &noisy).unwrap();
        for (e, y) in estimate.iter().zip(noisy.pixels()) {
            let expected = 0.25 + (y - 0.25) / 2.0;
            assert!((e - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn scalar_shrinkage_decreases_with_noise() {
        let model = MmseModel::new(1, vec![0.5], vec![vec![0.04]], DEFAULT_JITTER).unwrap();
        let mut previous = f64::INFINITY;
        for sigma_o in [1.0, 5.0, 25.0, 100.0, 400.0] {
            let noisy = noisy_from(vec![0.9], 1, 1, sigma_o);
            let estimate = mmse_denoise(&model, &noisy).unwrap();
            let pull = (estimate[0] - 0.5).abs();
            assert!(pull < previous, "shrinkage not monotone at sigma_o {sigma_o}");
            previous = pull;
        }
    }

    #[test]
    fn beats_identity_on_data_drawn_from_the_prior() {
        // Synthetic 2x2-patch prior with a known full-rank covariance.
        let l = vec![
            vec![0.08, 0.0, 0.0, 0.0],
            vec![0.03, 0.07, 0.0, 0.0],
            vec![0.01, 0.02, 0.06, 0.0],
            vec![0.02, 0.01, 0.03, 0.05],
        ];
        let mut cov = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] = (0..4).map(|k| l[i][k] * l[j][k]).sum();
            }
        }
        let mean = vec![0.5, 0.45, 0.55, 0.5];
        let model = MmseModel::new(2, mean.clone(), cov, DEFAULT_JITTER).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for sigma_o in [5.0, 25.0, 50.0] {
            let sigma = sigma_o / 255.0;
            let mut mse_estimator = 0.0;
            let mut mse_identity = 0.0;
            let trials = 200;
            for _ in 0..trials {
                let g: Vec<f64> =
                    (0..4).map(|_| StandardNormal.sample(&mut rng)).collect();
                let x: Vec<f64> = (0..4)
                    .map(|i| mean[i] + (0..4).map(|k| l[i][k] * g[k]).sum::<f64>())
                    .collect();
                let y: Vec<f64> = x
                    .iter()
                    .map(|v| {
                        let n: f64 = StandardNormal.sample(&mut rng);
                        v + sigma * n
                    })
                    .collect();
                let noisy = noisy_from(y.clone(), 2, 2, sigma_o);
                let estimate = mmse_denoise(&model, &noisy).unwrap();
                for i in 0..4 {
                    mse_estimator += (estimate[i] - x[i]).powi(2);
                    mse_identity += (y[i] - x[i]).powi(2);
                }
            }
            assert!(
                mse_estimator <= mse_identity,
                "sigma_o {sigma_o}: estimator {mse_estimator} vs identity {mse_identity}"
            );
        }
    }

    #[test]
    fn non_multiple_dimensions_are_reflect_padded() {
        let images: Vec<ChannelImage> = (0..6).map(|s| uniform_image(24, 24, s)).collect();
        let model = fit_mmse(&images, 4, 10_000, 8).unwrap();
        let probe = uniform_image(6, 10, 97);
        let noisy = noisy_from(probe.pixels().to_vec(), 6, 10, 0.0);
        let estimate = mmse_denoise(&model, &noisy).unwrap();
        assert_eq!(estimate.len(), 60);
        for (e, y) in estimate.iter().zip(probe.pixels()) {
            assert!((e - y).abs() <= 1e-8);
        }
    }

    #[test]
    fn asymmetric_covariance_is_rejected() {
        let mut cov = vec![vec![0.0; 4]; 4];
        for (i, row) in cov.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        cov[0][1] = 0.5;
        cov[1][0] = 0.5 + 1e-6;
        assert!(matches!(
            MmseModel::new(2, vec![0.0; 4], cov, DEFAULT_JITTER),
            Err(Error::Statistics(_))
        ));
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let cov = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, -0.5, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        assert!(matches!(
            MmseModel::new(2, vec![0.0; 4], cov, DEFAULT_JITTER),
            Err(Error::Statistics(_))
        ));
    }

    #[test]
    fn serialization_roundtrip_is_bit_exact() {
        let dir = tempdir().unwrap();
        let images: Vec<ChannelImage> = (0..4).map(|s| uniform_image(16, 16, s)).collect();
        let model = fit_mmse(&images, 4, 1000, 9).unwrap();
        let path_a = dir.path().join("a.mmse");
        let path_b = dir.path().join("b.mmse");
        model.save(&path_a).unwrap();
        let loaded = MmseModel::load(&path_a).unwrap();
        assert_eq!(loaded.mean(), model.mean());
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(loaded.covariance(i, j).to_bits(), model.covariance(i, j).to_bits());
            }
        }
        loaded.save(&path_b).unwrap();
        assert_eq!(std::fs::read(&path_a).unwrap(), std::fs::read(&path_b).unwrap());
    }

    #[test]
    fn corrupted_model_files_are_rejected() {
        let dir = tempdir().unwrap();
        let images: Vec<ChannelImage> = (0..4).map(|s| uniform_image(16, 16, s)).collect();
        let model = fit_mmse(&images, 4, 1000, 10).unwrap();
        let path = dir.path().join("model.mmse");
        model.save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'Z';
        std::fs::write(&path, &bad_magic).unwrap();
        assert!(matches!(MmseModel::load(&path), Err(Error::Format(_))));
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(MmseModel::load(&path), Err(Error::Format(_))));
    }
}
