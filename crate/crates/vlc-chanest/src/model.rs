//! The noise-conditioned convolutional denoiser.
//!
//! An even-sized grayscale channel image is rearranged into four
//! half-resolution planes, a constant noise-level plane (sigma / 255) is
//! appended as a fifth channel, and the stack runs through a plain CNN:
//! Conv+ReLU, then Conv+BatchNorm+ReLU repeated, then a final Conv back to
//! four planes that are reassembled to full resolution. The reassembled
//! planes are the predicted noise field, and the denoised image is the noisy
//! input minus that prediction. The residual form puts the identity mapping
//! at the zero point of the parameterization, so an undertrained model
//! passes detail through instead of erasing it.
//!
//! Parameters are generic over the element type so the identical code path
//! can be verified in double precision; checkpoints on disk are always
//! 32-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{
    batchnorm_backward, batchnorm_forward, batchnorm_inference, concat_channels, conv2d_backward,
    conv2d_forward, pixel_shuffle, pixel_unshuffle, relu_backward, relu_forward, BatchNormParams,
    ConvLayerParams, Element, Mode, Tensor,
};

/// The denoiser works on single-channel (grayscale) channel images.
pub const IMAGE_CHANNELS: usize = 1;

/// Channels entering the first layer: four subsampled image planes plus the
/// noise-level plane.
const INPUT_CHANNELS: usize = 4 * IMAGE_CHANNELS + 1;

/// Channels leaving the last layer: the four subsampled planes of the
/// predicted noise field.
const OUTPUT_CHANNELS: usize = 4 * IMAGE_CHANNELS;

const CHECKPOINT_MAGIC: &[u8; 4] = b"FFDN";
const CHECKPOINT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Architecture hyperparameters: total layer count and filters per hidden
/// layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub depth: usize,
    pub features: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { depth: 15, features: 64 }
    }
}

impl ModelConfig {
    /// Validated constructor: at least three layers (first, one hidden,
    /// last) and at least one filter.
    pub fn new(depth: usize, features: usize) -> Result<Self> {
        let config = Self { depth, features };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 3 {
            return Err(Error::Config(format!(
                "model depth must be at least 3, got {}",
                self.depth
            )));
        }
        if self.features < 1 {
            return Err(Error::Config("model needs at least 1 feature channel".into()));
        }
        Ok(())
    }

    /// Receptive field in full-resolution pixels: each 3x3 layer widens the
    /// half-resolution field by 2, and the subsampling doubles it.
    pub fn receptive_field(&self) -> usize {
        2 * (2 * self.depth + 1)
    }

    /// Closed-form count of trainable scalars (conv weights and biases plus
    /// batch-norm scale and shift).
    pub fn parameter_count(&self) -> usize {
        let f = self.features;
        let first = f * INPUT_CHANNELS * 9 + f;
        let mid = (self.depth - 2) * (f * f * 9 + f + 2 * f);
        let last = OUTPUT_CHANNELS * f * 9 + OUTPUT_CHANNELS;
        first + mid + last
    }
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

/// One hidden layer: convolution followed by batch normalization (ReLU has
/// no parameters).
#[derive(Debug, Clone, PartialEq)]
pub struct MidLayer<T> {
    pub conv: ConvLayerParams<T>,
    pub norm: BatchNormParams<T>,
}

/// Complete parameter set of the denoiser, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    config: ModelConfig,
    pub first: ConvLayerParams<T>,
    pub mid: Vec<MidLayer<T>>,
    pub last: ConvLayerParams<T>,
}

impl<T: Element> ModelParams<T> {
    pub fn config(&self) -> ModelConfig {
        self.config
    }

    /// Count trainable scalars by walking the parameter list. Must agree
    /// with [`ModelConfig::parameter_count`].
    pub fn parameter_count(&self) -> usize {
        let mid: usize = self
            .mid
            .iter()
            .map(|l| l.conv.parameter_count() + l.norm.parameter_count())
            .sum();
        self.first.parameter_count() + mid + self.last.parameter_count()
    }

    /// Shared views of every trainable slice, in the same fixed order as
    /// [`ModelParams::trainable_slices_mut`].
    pub fn trainable_slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        out.push(self.first.weights().data());
        out.push(self.first.bias());
        for layer in &self.mid {
            out.push(layer.conv.weights().data());
            out.push(layer.conv.bias());
            out.push(&layer.norm.gamma);
            out.push(&layer.norm.beta);
        }
        out.push(self.last.weights().data());
        out.push(self.last.bias());
        out
    }

    /// Mutable views of every trainable slice, in a fixed order (first conv
    /// weights, first bias, then per hidden layer conv weights, conv bias,
    /// gamma, beta, then last conv weights, last bias). Running statistics
    /// are tracked by the forward pass, not trained, so they are excluded.
    pub fn trainable_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        let (w, b) = self.first.slices_mut();
        out.push(w);
        out.push(b);
        for layer in self.mid.iter_mut() {
            let (w, b) = layer.conv.slices_mut();
            out.push(w);
            out.push(b);
            out.push(&mut layer.norm.gamma);
            out.push(&mut layer.norm.beta);
        }
        let (w, b) = self.last.slices_mut();
        out.push(w);
        out.push(b);
        out
    }
}

impl<T: Element> ConvLayerParams<T> {
    /// Weight and bias storage as two disjoint mutable slices.
    pub fn slices_mut(&mut self) -> (&mut [T], &mut [T]) {
        let (weights, bias) = self.parts_mut();
        (weights.data_mut(), bias)
    }
}

/// Gradients for every trainable tensor, mirroring [`ModelParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads<T> {
    pub first_weights: Tensor<T>,
    pub first_bias: Vec<T>,
    pub mid: Vec<MidLayerGrads<T>>,
    pub last_weights: Tensor<T>,
    pub last_bias: Vec<T>,
}

/// Hidden-layer gradients: convolution and batch-norm affine terms.
#[derive(Debug, Clone, PartialEq)]
pub struct MidLayerGrads<T> {
    pub weights: Tensor<T>,
    pub bias: Vec<T>,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
}

impl<T: Element> ModelGrads<T> {
    /// Shared views of every gradient slice, in the same fixed order as
    /// [`ModelParams::trainable_slices_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        out.push(self.first_weights.data());
        out.push(&self.first_bias);
        for layer in &self.mid {
            out.push(layer.weights.data());
            out.push(&layer.bias);
            out.push(&layer.gamma);
            out.push(&layer.beta);
        }
        out.push(self.last_weights.data());
        out.push(&self.last_bias);
        out
    }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

/// Draw fresh parameters: conv weights from a zero-mean Gaussian with
/// standard deviation `sqrt(2 / (in_channels * 9))`, biases zero, batch-norm
/// layers at identity. The same seed always produces bit-identical
/// parameters.
pub fn init_params<T: Element>(config: ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut conv = |out_ch: usize, in_ch: usize| -> Result<ConvLayerParams<T>> {
        let std = (2.0 / (in_ch as f64 * 9.0)).sqrt();
        let data: Vec<T> = (0..out_ch * in_ch * 9)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::from(z * std).unwrap()
            })
            .collect();
        let weights = Tensor::new([out_ch, in_ch, 3, 3], data)?;
        ConvLayerParams::new(weights, vec![T::zero(); out_ch])
    };
    let first = conv(config.features, INPUT_CHANNELS)?;
    let mid = (0..config.depth - 2)
        .map(|_| {
            Ok(MidLayer {
                conv: conv(config.features, config.features)?,
                norm: BatchNormParams::new(config.features),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let last = conv(OUTPUT_CHANNELS, config.features)?;
    Ok(ModelParams { config, first, mid, last })
}

// ---------------------------------------------------------------------------
// Forward and backward passes
// ---------------------------------------------------------------------------

/// The plane appended as the network's fifth input channel: per batch
/// member, a constant `sigma / 255`, putting the 0-255 noise convention on
/// the unit pixel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLevelMap<T> {
    sigmas: Vec<T>,
    tensor: Tensor<T>,
}

impl<T: Element> NoiseLevelMap<T> {
    /// The same noise level for every member of a batch of half-resolution
    /// planes.
    pub fn uniform(sigma: T, batch: usize, rows: usize, cols: usize) -> Result<Self> {
        Self::per_sample(&vec![sigma; batch], rows, cols)
    }

    /// One noise level per batch member. Every value must be finite and
    /// nonnegative.
    pub fn per_sample(sigmas: &[T], rows: usize, cols: usize) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Domain("noise map needs at least one noise level".into()));
        }
        for sigma in sigmas {
            if !sigma.is_finite() || *sigma < T::zero() {
                return Err(Error::Domain(format!(
                    "noise level must be finite and >= 0, got {sigma:?}"
                )));
            }
        }
        let scale = T::from(255.0).unwrap();
        let mut tensor = Tensor::zeros([sigmas.len(), 1, rows, cols]);
        let plane = rows * cols;
        for (b, sigma) in sigmas.iter().enumerate() {
            tensor.data_mut()[b * plane..][..plane].fill(*sigma / scale);
        }
        Ok(Self { sigmas: sigmas.to_vec(), tensor })
    }

    pub fn sigmas(&self) -> &[T] {
        &self.sigmas
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.tensor
    }
}

/// Subsample the image into four planes and append the noise map: the
/// five-channel network input.
fn prepare_input_mapped<T: Element>(
    image: &Tensor<T>,
    map: &NoiseLevelMap<T>,
) -> Result<Tensor<T>> {
    if image.channels() != IMAGE_CHANNELS {
        return Err(Error::ShapeMismatch(format!(
            "expected a {IMAGE_CHANNELS}-channel image, got {} channels",
            image.channels()
        )));
    }
    let planes = pixel_unshuffle(image)?;
    let expected = [planes.batch(), 1, planes.height(), planes.width()];
    if map.tensor().shape() != expected {
        return Err(Error::ShapeMismatch(format!(
            "noise map shape {:?} does not match subsampled image shape {expected:?}",
            map.tensor().shape()
        )));
    }
    concat_channels(&planes, map.tensor())
}

fn prepare_input<T: Element>(image: &Tensor<T>, sigma: T) -> Result<Tensor<T>> {
    let map = NoiseLevelMap::uniform(sigma, image.batch(), image.height() / 2, image.width() / 2)?;
    prepare_input_mapped(image, &map)
}

/// Subtract the predicted noise field from the noisy input.
fn residual_output<T: Element>(image: &Tensor<T>, noise: &Tensor<T>) -> Result<Tensor<T>> {
    let data = image
        .data()
        .iter()
        .zip(noise.data())
        .map(|(y, r)| *y - *r)
        .collect();
    Tensor::new(image.shape(), data)
}

fn run_inference<T: Element>(
    params: &ModelParams<T>,
    image: &Tensor<T>,
    input: &Tensor<T>,
) -> Result<Tensor<T>> {
    let mut act = relu_forward(&conv2d_forward(input, &params.first)?)?;
    for layer in &params.mid {
        let conv = conv2d_forward(&act, &layer.conv)?;
        let norm = batchnorm_inference(&conv, &layer.norm)?;
        act = relu_forward(&norm)?;
    }
    let planes = conv2d_forward(&act, &params.last)?;
    residual_output(image, &pixel_shuffle(&planes)?)
}

/// Denoise a batch of even-sized grayscale images at the given noise level,
/// using stored running statistics in the batch-norm layers. Deterministic
/// and side-effect free, so one parameter set can serve many threads.
pub fn forward_inference<T: Element>(
    params: &ModelParams<T>,
    image: &Tensor<T>,
    sigma: T,
) -> Result<Tensor<T>> {
    run_inference(params, image, &prepare_input(image, sigma)?)
}

/// [`forward_inference`] with an explicit, possibly per-sample noise map.
pub fn forward_inference_mapped<T: Element>(
    params: &ModelParams<T>,
    image: &Tensor<T>,
    map: &NoiseLevelMap<T>,
) -> Result<Tensor<T>> {
    run_inference(params, image, &prepare_input_mapped(image, map)?)
}

/// Intermediate tensors captured by a training-mode forward pass; consumed
/// by [`backward`]. Holding one of these is proof the forward pass ran, so
/// a backward call can never observe missing state.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    /// Five-channel network input.
    input: Tensor<T>,
    /// Post-ReLU output of each layer except the last; `activations[i]` is
    /// the input to layer `i + 2`.
    activations: Vec<Tensor<T>>,
    /// Pre-normalization convolution output of each hidden layer.
    conv_outputs: Vec<Tensor<T>>,
}

/// Training-mode forward pass: batch-norm layers use batch statistics and
/// fold them into their running estimates, and every tensor the backward
/// pass needs is cached. Returns the denoised batch and the cache.
pub fn forward_train<T: Element>(
    params: &mut ModelParams<T>,
    image: &Tensor<T>,
    sigma: T,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let input = prepare_input(image, sigma)?;
    run_train(params, image, input)
}

/// [`forward_train`] with an explicit, possibly per-sample noise map.
pub fn forward_train_mapped<T: Element>(
    params: &mut ModelParams<T>,
    image: &Tensor<T>,
    map: &NoiseLevelMap<T>,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let input = prepare_input_mapped(image, map)?;
    run_train(params, image, input)
}

fn run_train<T: Element>(
    params: &mut ModelParams<T>,
    image: &Tensor<T>,
    input: Tensor<T>,
) -> Result<(Tensor<T>, ForwardCache<T>)> {
    let depth = params.config.depth;
    let mut activations = Vec::with_capacity(depth - 1);
    let mut conv_outputs = Vec::with_capacity(depth - 2);
    let mut act = relu_forward(&conv2d_forward(&input, &params.first)?)?;
    activations.push(act.clone());
    for layer in params.mid.iter_mut() {
        let conv = conv2d_forward(&act, &layer.conv)?;
        let norm = batchnorm_forward(&conv, &mut layer.norm, Mode::Train)?;
        act = relu_forward(&norm)?;
        conv_outputs.push(conv);
        activations.push(act.clone());
    }
    let planes = conv2d_forward(&act, &params.last)?;
    let output = residual_output(image, &pixel_shuffle(&planes)?)?;
    Ok((output, ForwardCache { input, activations, conv_outputs }))
}

/// Backpropagate a loss gradient (shaped like the forward output) through
/// the cached forward pass, producing gradients for every trainable tensor.
pub fn backward<T: Element>(
    params: &ModelParams<T>,
    cache: &ForwardCache<T>,
    loss_grad: &Tensor<T>,
) -> Result<ModelGrads<T>> {
    // The output is input minus predicted noise, so the gradient w.r.t. the
    // prediction is the negated loss gradient; the plane reassembly is a
    // pure permutation whose gradient is the inverse permutation.
    let mut grad = pixel_unshuffle(loss_grad)?;
    for v in grad.data_mut() {
        *v = T::zero() - *v;
    }
    let last_input = cache.activations.last().ok_or_else(|| {
        Error::ShapeMismatch("forward cache has no activations".into())
    })?;
    let (mut grad_act, last_weights, last_bias) =
        conv2d_backward(last_input, &params.last, &grad)?;
    let mut mid = Vec::with_capacity(params.mid.len());
    for (i, layer) in params.mid.iter().enumerate().rev() {
        // The ReLU mask can be read off the post-ReLU activation: it is
        // positive exactly where the pre-activation was.
        grad = relu_backward(&cache.activations[i + 1], &grad_act)?;
        let (g, gamma, beta) = batchnorm_backward(&cache.conv_outputs[i], &layer.norm, &grad)?;
        let (g, weights, bias) = conv2d_backward(&cache.activations[i], &layer.conv, &g)?;
        grad_act = g;
        mid.push(MidLayerGrads { weights, bias, gamma, beta });
    }
    mid.reverse();
    grad = relu_backward(&cache.activations[0], &grad_act)?;
    let (_, first_weights, first_bias) = conv2d_backward(&cache.input, &params.first, &grad)?;
    Ok(ModelGrads { first_weights, first_bias, mid, last_weights, last_bias })
}

// ---------------------------------------------------------------------------
// Checkpoint persistence (f32 on disk)
// ---------------------------------------------------------------------------

fn read_bytes<R: Read>(reader: &mut R, buf: &mut [u8]) -> Result<()> {
    reader.read_exact(buf).map_err(|e| {
        if e.kind() == ErrorKind::UnexpectedEof {
            Error::Format("checkpoint file is truncated".into())
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

fn write_block<W: Write>(writer: &mut W, dims: &[usize], data: &[f32]) -> Result<()> {
    writer.write_all(&(dims.len() as u32).to_le_bytes())?;
    for d in dims {
        writer.write_all(&(*d as u32).to_le_bytes())?;
    }
    for v in data {
        writer.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Read one shape-tagged block, insisting on the expected dimensions.
fn read_block<R: Read>(reader: &mut R, expected_dims: &[usize]) -> Result<Vec<f32>> {
    let ndim = read_u32(reader)? as usize;
    if ndim != expected_dims.len() {
        return Err(Error::Format(format!(
            "checkpoint block has {ndim} dimensions, expected {}",
            expected_dims.len()
        )));
    }
    let mut len = 1usize;
    for expected in expected_dims {
        let d = read_u32(reader)? as usize;
        if d != *expected {
            return Err(Error::Format(format!(
                "checkpoint block dimension {d} does not match expected {expected}"
            )));
        }
        len *= d;
    }
    let mut data = vec![0f32; len];
    let mut buf = [0u8; 4];
    for v in data.iter_mut() {
        read_bytes(reader, &mut buf)?;
        *v = f32::from_le_bytes(buf);
    }
    Ok(data)
}

fn write_conv<W: Write>(writer: &mut W, layer: &ConvLayerParams<f32>) -> Result<()> {
    let shape = layer.weights().shape();
    write_block(writer, &shape, layer.weights().data())?;
    write_block(writer, &[layer.bias().len()], layer.bias())
}

fn read_conv<R: Read>(reader: &mut R, out_ch: usize, in_ch: usize) -> Result<ConvLayerParams<f32>> {
    let weights = read_block(reader, &[out_ch, in_ch, 3, 3])?;
    let bias = read_block(reader, &[out_ch])?;
    ConvLayerParams::new(Tensor::new([out_ch, in_ch, 3, 3], weights)?, bias)
}

impl ModelParams<f32> {
    /// Write the checkpoint: magic `FFDN`, format version, config, then
    /// every layer's tensors as shape-tagged little-endian f32 blocks.
    /// Batch-norm running statistics are included so inference reproduces
    /// training-time behavior exactly.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut writer = BufWriter::new(File::create(path)?);
        writer.write_all(CHECKPOINT_MAGIC)?;
        writer.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        writer.write_all(&(self.config.depth as u32).to_le_bytes())?;
        writer.write_all(&(self.config.features as u32).to_le_bytes())?;
        write_conv(&mut writer, &self.first)?;
        for layer in &self.mid {
            write_conv(&mut writer, &layer.conv)?;
            let f = layer.norm.channels();
            write_block(&mut writer, &[f], &layer.norm.gamma)?;
            write_block(&mut writer, &[f], &layer.norm.beta)?;
            write_block(&mut writer, &[f], &layer.norm.running_mean)?;
            write_block(&mut writer, &[f], &layer.norm.running_var)?;
        }
        write_conv(&mut writer, &self.last)?;
        writer.flush()?;
        Ok(())
    }

    /// Read a checkpoint written by [`ModelParams::save`], validating magic,
    /// version, configuration, and every block shape.
    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        read_bytes(&mut reader, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format(format!(
                "not a checkpoint file: magic {magic:?} != {CHECKPOINT_MAGIC:?}"
            )));
        }
        let version = read_u32(&mut reader)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let depth = read_u32(&mut reader)? as usize;
        let features = read_u32(&mut reader)? as usize;
        let config = ModelConfig::new(depth, features)
            .map_err(|e| Error::Format(format!("invalid checkpoint config: {e}")))?;
        let first = read_conv(&mut reader, features, INPUT_CHANNELS)?;
        let mut mid = Vec::with_capacity(depth - 2);
        for _ in 0..depth - 2 {
            let conv = read_conv(&mut reader, features, features)?;
            let mut norm = BatchNormParams::new(features);
            norm.gamma = read_block(&mut reader, &[features])?;
            norm.beta = read_block(&mut reader, &[features])?;
            norm.running_mean = read_block(&mut reader, &[features])?;
            norm.running_var = read_block(&mut reader, &[features])?;
            mid.push(MidLayer { conv, norm });
        }
        let last = read_conv(&mut reader, OUTPUT_CHANNELS, features)?;
        let mut trailing = [0u8; 1];
        if reader.read(&mut trailing)? != 0 {
            return Err(Error::Format("checkpoint has trailing data".into()));
        }
        Ok(Self { config, first, mid, last })
    }
}
