//! Dataset generation and the optimization loop.
//!
//! A dataset is a list of clean channel images, each produced by a randomized
//! variant of a base scene so the denoiser sees a family of geometries rather
//! than one fixed matrix. Training samples one random patch per image per
//! epoch, corrupts it with Gaussian noise at a per-patch level drawn from the
//! configured range, feeds the matching level to the noise map, and minimizes
//! the scaled squared error `1/(2N) * sum ||F(y_k, M_k) - x_k||^2` with
//! bias-corrected Adam.
//!
//! Everything is driven by explicit seeds: a full training run (scene draws,
//! patch corners, noise levels, noise samples, initialization, shuffling)
//! reproduces bit-identically under the same configuration.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::channel::{build_channel_matrix, VlcScene};
use crate::error::{Error, Result};
use crate::imaging::{add_awgn, extract_patches, matrix_to_image, ChannelImage};
use crate::model::{
    backward, forward_train_mapped, init_params, ModelConfig, ModelGrads, ModelParams,
    NoiseLevelMap,
};
use crate::tensor::{mse_loss, Element, Tensor, UncheckedScope};

/// Attempts to draw a valid randomized scene before giving up on a record.
const MAX_REDRAWS: usize = 32;

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

/// One training sample: a clean channel image and the scene it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub id: u64,
    pub clean_image: ChannelImage,
    pub scene: VlcScene,
}

impl DatasetRecord {
    /// The image dimensions must match the scene's array sizes (rows are
    /// PDs, columns are LEDs).
    pub fn validate(&self) -> Result<()> {
        if self.clean_image.rows() != self.scene.n_r()
            || self.clean_image.cols() != self.scene.n_t()
        {
            return Err(Error::ShapeMismatch(format!(
                "record {}: image is {}×{} but the scene implies {}×{}",
                self.id,
                self.clean_image.rows(),
                self.clean_image.cols(),
                self.scene.n_r(),
                self.scene.n_t()
            )));
        }
        Ok(())
    }
}

/// Uniform ranges for the scene properties that vary across dataset records.
/// A zero-width range pins the property to that value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneRandomization {
    /// LED-to-PD plane separation in metres (PD plane height is derived).
    pub vertical_distance_m: (f64, f64),
    /// Lateral PD-array offset along x in metres.
    pub pd_offset_x_m: (f64, f64),
    /// Lateral PD-array offset along y in metres.
    pub pd_offset_y_m: (f64, f64),
    /// LED grid spacing in metres.
    pub led_spacing_m: (f64, f64),
    /// PD grid spacing in metres.
    pub pd_spacing_m: (f64, f64),
}

impl Default for SceneRandomization {
    fn default() -> Self {
        Self {
            vertical_distance_m: (1.5, 2.5),
            pd_offset_x_m: (-0.5, 0.5),
            pd_offset_y_m: (-0.5, 0.5),
            led_spacing_m: (0.35, 0.48),
            pd_spacing_m: (0.05, 0.12),
        }
    }
}

impl SceneRandomization {
    /// Zero-width ranges at the scene's own values: generation reproduces
    /// the base scene exactly.
    pub fn none(scene: &VlcScene) -> Self {
        let l = scene.vertical_distance_m();
        Self {
            vertical_distance_m: (l, l),
            pd_offset_x_m: (scene.pd_plane_offset.0, scene.pd_plane_offset.0),
            pd_offset_y_m: (scene.pd_plane_offset.1, scene.pd_plane_offset.1),
            led_spacing_m: (scene.led_grid.spacing_m, scene.led_grid.spacing_m),
            pd_spacing_m: (scene.pd_grid.spacing_m, scene.pd_grid.spacing_m),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("vertical_distance_m", self.vertical_distance_m),
            ("pd_offset_x_m", self.pd_offset_x_m),
            ("pd_offset_y_m", self.pd_offset_y_m),
            ("led_spacing_m", self.led_spacing_m),
            ("pd_spacing_m", self.pd_spacing_m),
        ] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Config(format!(
                    "randomization range {name} = ({lo}, {hi}) is not a finite low..high pair"
                )));
            }
        }
        Ok(())
    }

    /// Draw one randomized variant of `base`. Draw order is fixed (vertical
    /// distance, offset x, offset y, LED spacing, PD spacing) so results are
    /// stable for a given generator state.
    fn apply<R: Rng>(&self, base: &VlcScene, rng: &mut R) -> VlcScene {
        let mut scene = base.clone();
        let distance = draw_uniform(rng, self.vertical_distance_m);
        scene.pd_grid.plane_height_m = scene.led_grid.plane_height_m - distance;
        scene.pd_plane_offset = (
            draw_uniform(rng, self.pd_offset_x_m),
            draw_uniform(rng, self.pd_offset_y_m),
        );
        scene.led_grid.spacing_m = draw_uniform(rng, self.led_spacing_m);
        scene.pd_grid.spacing_m = draw_uniform(rng, self.pd_spacing_m);
        scene
    }
}

fn draw_uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn draw_record(
    base: &VlcScene,
    ranges: &SceneRandomization,
    rng: &mut ChaCha8Rng,
    id: u64,
) -> Result<DatasetRecord> {
    for _ in 0..MAX_REDRAWS {
        let scene = ranges.apply(base, rng);
        let image = match scene
            .validate()
            .and_then(|_| build_channel_matrix(&scene))
            .and_then(|matrix| matrix_to_image(&matrix))
        {
            Ok(image) => image,
            // A draw can land outside the room or otherwise break the scene
            // invariants; discard it and draw again from the same stream.
            Err(_) => continue,
        };
        return Ok(DatasetRecord { id, clean_image: image, scene });
    }
    Err(Error::Geometry(format!(
        "record {id}: no valid scene within {MAX_REDRAWS} redraws; \
         the randomization ranges are incompatible with the base scene"
    )))
}

/// Build `count` records from randomized variants of `base`. Each record
/// draws from its own generator stream (derived from the master seed and the
/// record id), so the dataset is reproducible and records are independent.
pub fn generate_dataset(
    base: &VlcScene,
    count: usize,
    seed: u64,
    ranges: &SceneRandomization,
) -> Result<Vec<DatasetRecord>> {
    if count == 0 {
        return Err(Error::Config("dataset generation needs count >= 1".into()));
    }
    base.validate()?;
    ranges.validate()?;
    let mut records = Vec::with_capacity(count);
    for id in 0..count as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        records.push(draw_record(base, ranges, &mut rng, id)?);
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// First and second moment estimates, one pair per trainable slice, aligned
/// with [`ModelParams::trainable_slices_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Element> AdamState<T> {
    /// Zeroed moments shaped after a parameter set.
    pub fn for_params(params: &ModelParams<T>) -> Self {
        let m: Vec<Vec<T>> = params
            .trainable_slices()
            .iter()
            .map(|s| vec![T::zero(); s.len()])
            .collect();
        let v = m.clone();
        Self { m, v }
    }
}

/// One bias-corrected Adam update on a flat parameter slice. `t` is the
/// 1-based step count used for bias correction.
pub fn adam_update_slice<T: Element>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::Config("Adam step count is 1-based; got t = 0".into()));
    }
    if grad.len() != param.len() || m.len() != param.len() || v.len() != param.len() {
        return Err(Error::ShapeMismatch(format!(
            "Adam buffers disagree: param {}, grad {}, m {}, v {}",
            param.len(),
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    let one = T::one();
    let bias1 = one - beta1.powi(t as i32);
    let bias2 = one - beta2.powi(t as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (one - beta1) * g;
        v[i] = beta2 * v[i] + (one - beta2) * g * g;
        let m_hat = m[i] / bias1;
        let v_hat = v[i] / bias2;
        param[i] = param[i] - lr * m_hat / (v_hat.sqrt() + epsilon);
    }
    Ok(())
}

/// Apply one Adam step to every trainable tensor of a model.
#[allow(clippy::too_many_arguments)]
pub fn adam_step<T: Element>(
    params: &mut ModelParams<T>,
    grads: &ModelGrads<T>,
    state: &mut AdamState<T>,
    lr: T,
    beta1: T,
    beta2: T,
    epsilon: T,
    t: u64,
) -> Result<()> {
    let slices = params.trainable_slices_mut();
    let grad_slices = grads.slices();
    if slices.len() != grad_slices.len() || slices.len() != state.m.len() {
        return Err(Error::ShapeMismatch(format!(
            "model has {} trainable slices, gradients {}, state {}",
            slices.len(),
            grad_slices.len(),
            state.m.len()
        )));
    }
    for ((param, grad), (m, v)) in slices
        .into_iter()
        .zip(grad_slices)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        adam_update_slice(param, grad, m, v, lr, beta1, beta2, epsilon, t)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Base learning rate; halved after each third of the epoch budget.
    pub learning_rate: f64,
    pub patch_size: usize,
    /// Noise levels are drawn uniformly from this inclusive range (0-255
    /// convention).
    pub sigma_range: (f64, f64),
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            patch_size: 70,
            sigma_range: (0.0, 55.0),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.patch_size < 2 || self.patch_size % 2 != 0 {
            return Err(Error::Config(format!(
                "patch size must be even and >= 2, got {}",
                self.patch_size
            )));
        }
        let (lo, hi) = self.sigma_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
            return Err(Error::Config(format!(
                "sigma range must satisfy 0 <= low <= high, got ({lo}, {hi})"
            )));
        }
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {beta}")));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Stepped schedule: the base rate in the first third of the epochs,
    /// half in the second, a quarter in the last.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let stage = ((epoch * 3) / self.epochs).min(2);
        self.learning_rate / f64::powi(2.0, stage as i32)
    }
}

/// Result of a training run: final parameters and the per-epoch loss.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    /// Mean of `1/2 ||F(y, M) - x||^2` per sample, one entry per epoch.
    pub loss_history: Vec<f64>,
}

/// Train a fresh model on the dataset. Initialization, shuffling, patch
/// corners, noise levels, and noise samples all derive from `config.seed`,
/// so two runs with the same inputs produce bit-identical checkpoints.
pub fn train(
    dataset: &[DatasetRecord],
    model: ModelConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    model.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    for record in dataset {
        record.validate()?;
        if config.patch_size > record.clean_image.rows()
            || config.patch_size > record.clean_image.cols()
        {
            return Err(Error::Size(format!(
                "patch size {} exceeds the {}×{} image of record {}",
                config.patch_size,
                record.clean_image.rows(),
                record.clean_image.cols(),
                record.id
            )));
        }
    }
    // The hot loop checks the loss explicitly; per-op scans would dominate.
    let _fast = UncheckedScope::new();
    let mut params = init_params::<f32>(model, config.seed)?;
    let mut state = AdamState::for_params(&params);
    // Initialization consumes stream 0 of this seed; training draws use a
    // separate stream so the two never overlap.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);
    let patch = config.patch_size;
    let plane = patch * patch;
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step: u64 = 0;
    for epoch in 0..config.epochs {
        let lr = config.learning_rate_at(epoch) as f32;
        order.shuffle(&mut rng);
        let mut squared_sum = 0.0;
        let mut samples = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut clean = vec![0f32; batch.len() * plane];
            let mut noisy = vec![0f32; batch.len() * plane];
            let mut sigmas = Vec::with_capacity(batch.len());
            for (k, record_idx) in batch.iter().enumerate() {
                let record = &dataset[*record_idx];
                let patch_seed = rng.gen::<u64>();
                let clean_patch = extract_patches(&record.clean_image, patch, 1, patch_seed)?
                    .pop()
                    .expect("requested one patch");
                let sigma = draw_uniform(&mut rng, config.sigma_range);
                let noisy_patch = add_awgn(&clean_patch, sigma, rng.gen::<u64>())?;
                for (dst, src) in
                    clean[k * plane..][..plane].iter_mut().zip(clean_patch.pixels())
                {
                    *dst = *src as f32;
                }
                for (dst, src) in
                    noisy[k * plane..][..plane].iter_mut().zip(noisy_patch.pixels())
                {
                    *dst = *src as f32;
                }
                sigmas.push(sigma as f32);
            }
            let clean = Tensor::new([batch.len(), 1, patch, patch], clean)?;
            let noisy = Tensor::new([batch.len(), 1, patch, patch], noisy)?;
            let map = NoiseLevelMap::per_sample(&sigmas, patch / 2, patch / 2)?;
            let (prediction, cache) = forward_train_mapped(&mut params, &noisy, &map)?;
            let scale = 0.5 / batch.len() as f32;
            let (loss, loss_grad) = mse_loss(&prediction, &clean, scale)?;
            if !loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "loss became non-finite at epoch {epoch}, step {step}; \
                     reduce the learning rate"
                )));
            }
            let grads = backward(&params, &cache, &loss_grad)?;
            step += 1;
            adam_step(
                &mut params,
                &grads,
                &mut state,
                lr,
                config.beta1 as f32,
                config.beta2 as f32,
                config.epsilon as f32,
                step,
            )?;
            // Undo the per-batch scale so epochs with ragged batches still
            // average per sample.
            squared_sum += 2.0 * batch.len() as f64 * loss as f64;
            samples += batch.len();
        }
        history.push(squared_sum / (2.0 * samples as f64));
    }
    Ok(TrainOutcome { params, loss_history: history })
}
