//! Noise-sensitivity sweeps, method comparisons, and CSV output.
//!
//! Both evaluation drivers walk a grid of real noise levels σ_o, corrupt
//! every held-out test image once per (σ_o, seed), and score estimators
//! against the clean image with PSNR. The sensitivity sweep runs the
//! denoiser at several fixed input noise levels σ to expose the σ-mismatch
//! trade-off; the comparison pits the fixed-σ denoiser, the tunable-σ
//! denoiser (σ follows σ_o, optionally shifted), and the patchwise MMSE
//! baseline against each other on identical noisy inputs.
//!
//! Results are deterministic: noise seeds derive from (master seed, record
//! id, σ_o) through a fixed 64-bit mixer, methods are evaluated in a fixed
//! order, and CSV text is assembled with fixed formatting. Identical inputs
//! therefore reproduce identical output bytes.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::config::FlatConfig;
use crate::error::{Error, Result};
use crate::imaging::{add_awgn, psnr, NoisyChannelImage};
use crate::mmse::{mmse_denoise, MmseModel};
use crate::model::{forward_inference, ModelParams};
use crate::tensor::Tensor;
use crate::training::DatasetRecord;

/// Input noise level of the fixed-σ denoiser in comparisons.
pub const FIXED_COMPARISON_SIGMA: f64 = 15.0;

// ---------------------------------------------------------------------------
// Sweep specification
// ---------------------------------------------------------------------------

/// Which σ policy the comparison emphasizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaMode {
    /// Fixed-σ denoiser versus MMSE.
    Fixed,
    /// Adds the tunable-σ denoiser (σ follows σ_o) to the lineup.
    Tunable,
}

impl fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SigmaMode::Fixed => "fixed",
            SigmaMode::Tunable => "tunable",
        })
    }
}

impl FromStr for SigmaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(SigmaMode::Fixed),
            "tunable" => Ok(SigmaMode::Tunable),
            other => Err(Error::Config(format!(
                "mode must be `fixed` or `tunable`, got `{other}`"
            ))),
        }
    }
}

/// Grids and seeds describing one evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Real noise levels σ_o to corrupt test images with.
    pub sigma_o_grid: Vec<f64>,
    /// Input noise levels σ for the sensitivity sweep curves.
    pub sigma_inputs: Vec<f64>,
    /// Master seeds; every (seed, image, σ_o) triple gets its own noise.
    pub seeds: Vec<u64>,
    /// Method lineup for comparisons.
    pub mode: SigmaMode,
    /// Offset of the tunable policy: σ = σ_o + shift.
    pub sigma_shift: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            sigma_o_grid: (0..=10).map(|k| 5.0 * k as f64).collect(),
            sigma_inputs: vec![5.0, 15.0, 25.0, 50.0],
            seeds: vec![1],
            mode: SigmaMode::Fixed,
            sigma_shift: 0.0,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, grid) in [("sigma_o_grid", &self.sigma_o_grid), ("sigma_inputs", &self.sigma_inputs)]
        {
            if grid.is_empty() {
                return Err(Error::Config(format!("{name} must not be empty")));
            }
            if let Some(bad) = grid.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Config(format!("{name} contains invalid level {bad}")));
            }
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if !self.sigma_shift.is_finite() || self.sigma_shift < 0.0 {
            return Err(Error::Config(format!(
                "sigma_shift must be a finite non-negative level, got {}",
                self.sigma_shift
            )));
        }
        Ok(())
    }

    /// Canonical flat-config form, used for logging and config hashing.
    pub fn to_config(&self) -> FlatConfig {
        let mut cfg = FlatConfig::new();
        cfg.set("sigma_o_grid", join(&self.sigma_o_grid));
        cfg.set("sigma_inputs", join(&self.sigma_inputs));
        cfg.set(
            "seeds",
            self.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(","),
        );
        cfg.set("mode", self.mode);
        cfg.set("sigma_shift", self.sigma_shift);
        cfg
    }

    /// Overlay present sweep keys from a config onto `self`.
    pub fn apply_config(&mut self, cfg: &FlatConfig) -> Result<()> {
        if let Some(grid) = cfg.get_f64_list("sigma_o_grid")? {
            self.sigma_o_grid = grid;
        }
        if let Some(inputs) = cfg.get_f64_list("sigma_inputs")? {
            self.sigma_inputs = inputs;
        }
        if let Some(seeds) = cfg.get_u64_list("seeds")? {
            self.seeds = seeds;
        }
        if let Some(mode) = cfg.get("mode") {
            self.mode = mode.parse()?;
        }
        if let Some(shift) = cfg.get_f64("sigma_shift")? {
            self.sigma_shift = shift;
        }
        Ok(())
    }
}

/// Every key used by [`SweepSpec::apply_config`].
pub const SWEEP_KEYS: &[&str] = &["sigma_o_grid", "sigma_inputs", "seeds", "mode", "sigma_shift"];

fn join(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// One point of a result curve: an aggregated PSNR for a method at one real
/// noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub sigma_o: f64,
    pub method: String,
    /// Input noise level fed to the denoiser; `None` for methods without
    /// one (MMSE uses the true σ_o).
    pub sigma_input: Option<f64>,
    pub psnr_mean: f64,
    /// Sample standard deviation over (seed, test image) pairs; zero when
    /// only one sample exists.
    pub psnr_std: f64,
}

// ---------------------------------------------------------------------------
// Deterministic seed derivation
// ---------------------------------------------------------------------------

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Noise seed for one (master seed, record, σ_o) combination. Hand-rolled
/// mixing keeps the value independent of the standard library's hasher, so
/// outputs stay stable across toolchains.
pub fn mix_eval_seed(master: u64, record_id: u64, sigma_o: f64) -> u64 {
    let a = splitmix64(master);
    let b = splitmix64(a ^ record_id);
    splitmix64(b ^ sigma_o.to_bits())
}

// ---------------------------------------------------------------------------
// Denoiser adapters
// ---------------------------------------------------------------------------

/// Run the trained denoiser on one noisy image at the given input noise
/// level σ (0–255 convention), returning pixel estimates.
pub fn ffdnet_denoise(
    params: &ModelParams<f32>,
    noisy: &NoisyChannelImage,
    sigma_input: f64,
) -> Result<Vec<f64>> {
    let pixels: Vec<f32> = noisy.pixels().iter().map(|p| *p as f32).collect();
    let tensor = Tensor::new([1, 1, noisy.rows(), noisy.cols()], pixels)?;
    let output = forward_inference(params, &tensor, sigma_input as f32)?;
    Ok(output.data().iter().map(|v| *v as f64).collect())
}

struct Stats {
    values: Vec<f64>,
}

impl Stats {
    fn new() -> Self {
        Self { values: Vec::new() }
    }

    fn push(&mut self, v: f64) {
        self.values.push(v);
    }

    fn mean_std(&self) -> (f64, f64) {
        let n = self.values.len();
        let mean = self.values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return (mean, 0.0);
        }
        let var =
            self.values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        (mean, var.sqrt())
    }
}

fn check_test_set(train_ids: &[u64], test: &[DatasetRecord]) -> Result<()> {
    if test.is_empty() {
        return Err(Error::Config("test set must not be empty".into()));
    }
    let train: HashSet<u64> = train_ids.iter().copied().collect();
    for record in test {
        if train.contains(&record.id) {
            return Err(Error::Protocol(format!(
                "record {} appears in both the training and the test set",
                record.id
            )));
        }
    }
    Ok(())
}

fn format_level(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e6 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

// ---------------------------------------------------------------------------
// Evaluation drivers
// ---------------------------------------------------------------------------

/// Noise-level sensitivity sweep: for every σ_o in the grid and every fixed
/// input level σ, the mean/std PSNR of the denoiser over all (seed, test
/// image) pairs. The method label is `FFDNet-<σ>`.
///
/// `train_ids` are the ids the model was trained on; any overlap with the
/// test set is a protocol error.
pub fn run_sensitivity_sweep(
    params: &ModelParams<f32>,
    train_ids: &[u64],
    test: &[DatasetRecord],
    spec: &SweepSpec,
) -> Result<Vec<CurvePoint>> {
    spec.validate()?;
    check_test_set(train_ids, test)?;
    let mut points = Vec::with_capacity(spec.sigma_o_grid.len() * spec.sigma_inputs.len());
    for &sigma_o in &spec.sigma_o_grid {
        let mut stats: Vec<Stats> = spec.sigma_inputs.iter().map(|_| Stats::new()).collect();
        for &seed in &spec.seeds {
            for record in test {
                let noisy = add_awgn(
                    &record.clean_image,
                    sigma_o,
                    mix_eval_seed(seed, record.id, sigma_o),
                )?;
                for (slot, &sigma_input) in spec.sigma_inputs.iter().enumerate() {
                    let estimate = ffdnet_denoise(params, &noisy, sigma_input)?;
                    stats[slot].push(psnr(&record.clean_image, &estimate)?);
                }
            }
        }
        for (slot, &sigma_input) in spec.sigma_inputs.iter().enumerate() {
            let (psnr_mean, psnr_std) = stats[slot].mean_std();
            points.push(CurvePoint {
                sigma_o,
                method: format!("FFDNet-{}", format_level(sigma_input)),
                sigma_input: Some(sigma_input),
                psnr_mean,
                psnr_std,
            });
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy)]
enum CompareMethod {
    FixedSigma,
    TunableSigma,
    Mmse,
}

/// Head-to-head comparison on identical noisy inputs. In `fixed` mode the
/// lineup is the σ=15 denoiser and MMSE; `tunable` mode adds the σ = σ_o +
/// shift denoiser. MMSE always runs at the true σ_o.
pub fn run_mmse_comparison(
    params: &ModelParams<f32>,
    mmse: &MmseModel,
    train_ids: &[u64],
    test: &[DatasetRecord],
    spec: &SweepSpec,
) -> Result<Vec<CurvePoint>> {
    spec.validate()?;
    check_test_set(train_ids, test)?;
    let tunable_label = if spec.sigma_shift == 0.0 {
        "FFDNet-tunable".to_string()
    } else {
        format!("FFDNet-tunable+{}", format_level(spec.sigma_shift))
    };
    let methods: Vec<(CompareMethod, String)> = match spec.mode {
        SigmaMode::Fixed => vec![
            (CompareMethod::FixedSigma, format!("FFDNet-{}", format_level(FIXED_COMPARISON_SIGMA))),
            (CompareMethod::Mmse, "MMSE".to_string()),
        ],
        SigmaMode::Tunable => vec![
            (CompareMethod::FixedSigma, format!("FFDNet-{}", format_level(FIXED_COMPARISON_SIGMA))),
            (CompareMethod::TunableSigma, tunable_label),
            (CompareMethod::Mmse, "MMSE".to_string()),
        ],
    };
    let mut points = Vec::with_capacity(spec.sigma_o_grid.len() * methods.len());
    for &sigma_o in &spec.sigma_o_grid {
        let mut stats: Vec<Stats> = methods.iter().map(|_| Stats::new()).collect();
        for &seed in &spec.seeds {
            for record in test {
                let noisy = add_awgn(
                    &record.clean_image,
                    sigma_o,
                    mix_eval_seed(seed, record.id, sigma_o),
                )?;
                for (slot, (method, _)) in methods.iter().enumerate() {
                    let estimate = match method {
                        CompareMethod::FixedSigma => {
                            ffdnet_denoise(params, &noisy, FIXED_COMPARISON_SIGMA)?
                        }
                        CompareMethod::TunableSigma => {
                            ffdnet_denoise(params, &noisy, sigma_o + spec.sigma_shift)?
                        }
                        CompareMethod::Mmse => mmse_denoise(mmse, &noisy)?,
                    };
                    stats[slot].push(psnr(&record.clean_image, &estimate)?);
                }
            }
        }
        for (slot, (method, label)) in methods.iter().enumerate() {
            let (psnr_mean, psnr_std) = stats[slot].mean_std();
            let sigma_input = match method {
                CompareMethod::FixedSigma => Some(FIXED_COMPARISON_SIGMA),
                CompareMethod::TunableSigma => Some(sigma_o + spec.sigma_shift),
                CompareMethod::Mmse => None,
            };
            points.push(CurvePoint {
                sigma_o,
                method: label.clone(),
                sigma_input,
                psnr_mean,
                psnr_std,
            });
        }
    }
    Ok(points)
}

/// PSNR of the raw noisy images themselves against the clean references,
/// aggregated like the sweep. The no-denoiser baseline.
pub fn noisy_psnr_stats(test: &[DatasetRecord], sigma_o: f64, seeds: &[u64]) -> Result<(f64, f64)> {
    if test.is_empty() || seeds.is_empty() {
        return Err(Error::Config("need at least one test image and one seed".into()));
    }
    let mut stats = Stats::new();
    for &seed in seeds {
        for record in test {
            let noisy = add_awgn(
                &record.clean_image,
                sigma_o,
                mix_eval_seed(seed, record.id, sigma_o),
            )?;
            stats.push(psnr(&record.clean_image, noisy.pixels())?);
        }
    }
    Ok(stats.mean_std())
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

/// Provenance stamped into the CSV comment header.
#[derive(Debug, Clone)]
pub struct CsvMeta {
    /// Short hash of the resolved configuration that produced the run.
    pub config_hash: String,
    /// Master seeds of the run.
    pub seeds: Vec<u64>,
}

/// Render curve points as CSV text: one comment line with tool version,
/// config hash, and seeds; then a header row; then one row per point with
/// four-decimal fixed formatting. Points are emitted in their given order,
/// which the drivers produce sorted by (σ_o, method lineup).
pub fn curve_csv_string(points: &[CurvePoint], meta: &CsvMeta) -> String {
    let mut out = String::new();
    let seeds =
        meta.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
    out.push_str(&format!(
        "# vlc-chanest {} config={} seeds={}\n",
        env!("CARGO_PKG_VERSION"),
        meta.config_hash,
        seeds
    ));
    out.push_str("sigma_o,method,sigma_input,psnr_mean,psnr_std\n");
    for p in points {
        let sigma_input =
            p.sigma_input.map(|v| format!("{v:.4}")).unwrap_or_default();
        out.push_str(&format!(
            "{:.4},{},{},{:.4},{:.4}\n",
            p.sigma_o, p.method, sigma_input, p.psnr_mean, p.psnr_std
        ));
    }
    out
}

/// Write [`curve_csv_string`] to a file.
pub fn write_curve_csv(path: &Path, points: &[CurvePoint], meta: &CsvMeta) -> Result<()> {
    std::fs::write(path, curve_csv_string(points, meta))?;
    Ok(())
}
