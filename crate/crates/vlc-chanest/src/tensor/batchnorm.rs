//! Per-channel batch normalization with learned scale and shift.
//!
//! Training mode normalizes by the statistics of the current batch (biased
//! variance over batch and spatial positions) and folds those statistics into
//! the running estimates used at inference time.

use crate::error::{Error, Result};
use crate::tensor::{Element, Mode, Tensor};

/// Learned and tracked state of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub epsilon: T,
    pub momentum: T,
}

impl<T: Element> BatchNormParams<T> {
    /// Identity-initialized layer: scale 1, shift 0, running mean 0, running
    /// variance 1, epsilon 1e-5, momentum 0.1.
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            epsilon: T::from(1e-5).unwrap(),
            momentum: T::from(0.1).unwrap(),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    /// Number of learned scalars (scale and shift; running statistics are
    /// tracked, not trained).
    pub fn parameter_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }

    fn check_input<U: Element>(&self, input: &Tensor<U>) -> Result<()> {
        if input.channels() != self.channels() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} channels but layer expects {}",
                input.channels(),
                self.channels()
            )));
        }
        Ok(())
    }
}

/// Per-channel mean and biased variance over batch and spatial positions.
fn batch_stats<T: Element>(input: &Tensor<T>) -> (Vec<T>, Vec<T>) {
    let [batch, channels, h, w] = input.shape();
    let n = T::from(batch * h * w).unwrap();
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for c in 0..channels {
        let mut sum = T::zero();
        for b in 0..batch {
            sum = input.plane(b, c).iter().fold(sum, |acc, v| acc + *v);
        }
        let mu = sum / n;
        let mut sq = T::zero();
        for b in 0..batch {
            sq = input.plane(b, c).iter().fold(sq, |acc, v| {
                let d = *v - mu;
                acc + d * d
            });
        }
        mean[c] = mu;
        var[c] = sq / n;
    }
    (mean, var)
}

fn normalize<T: Element>(
    input: &Tensor<T>,
    mean: &[T],
    var: &[T],
    params: &BatchNormParams<T>,
) -> Tensor<T> {
    let [batch, channels, h, w] = input.shape();
    let hw = h * w;
    let mut out = vec![T::zero(); input.len()];
    for c in 0..channels {
        let inv_std = (var[c] + params.epsilon).sqrt().recip();
        let scale = params.gamma[c] * inv_std;
        let shift = params.beta[c] - mean[c] * scale;
        for b in 0..batch {
            let src = input.plane(b, c);
            let dst = &mut out[(b * channels + c) * hw..][..hw];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = *s * scale + shift;
            }
        }
    }
    Tensor::new(input.shape(), out).expect("normalized tensor matches input shape")
}

/// Normalize with batch statistics (training) or running statistics
/// (inference). Training mode needs at least two values per channel and
/// updates the running estimates in place.
pub fn batchnorm_forward<T: Element>(
    input: &Tensor<T>,
    params: &mut BatchNormParams<T>,
    mode: Mode,
) -> Result<Tensor<T>> {
    match mode {
        Mode::Inference => batchnorm_inference(input, params),
        Mode::Train => {
            input.check_finite("batchnorm_forward input")?;
            params.check_input(input)?;
            let [batch, _, h, w] = input.shape();
            if batch * h * w < 2 {
                return Err(Error::Statistics(format!(
                    "batch normalization needs at least 2 values per channel, got {}",
                    batch * h * w
                )));
            }
            let (mean, var) = batch_stats(input);
            let keep = T::one() - params.momentum;
            for c in 0..params.channels() {
                params.running_mean[c] = keep * params.running_mean[c] + params.momentum * mean[c];
                params.running_var[c] = keep * params.running_var[c] + params.momentum * var[c];
            }
            Ok(normalize(input, &mean, &var, params))
        }
    }
}

/// Inference-mode normalization using the stored running statistics. Does
/// not mutate the layer, so shared parameters can be used concurrently.
pub fn batchnorm_inference<T: Element>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
) -> Result<Tensor<T>> {
    input.check_finite("batchnorm_inference input")?;
    params.check_input(input)?;
    Ok(normalize(input, &params.running_mean, &params.running_var, params))
}

/// Gradients of training-mode batch normalization with respect to the input,
/// the scale, and the shift. Batch statistics are recomputed from `input`, so
/// this must receive the same tensor the forward pass saw.
pub fn batchnorm_backward<T: Element>(
    input: &Tensor<T>,
    params: &BatchNormParams<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    input.check_finite("batchnorm_backward input")?;
    upstream.check_finite("batchnorm_backward upstream")?;
    params.check_input(input)?;
    if upstream.shape() != input.shape() {
        return Err(Error::ShapeMismatch(format!(
            "upstream shape {:?} does not match input shape {:?}",
            upstream.shape(),
            input.shape()
        )));
    }
    let [batch, channels, h, w] = input.shape();
    let hw = h * w;
    let n = T::from(batch * h * w).unwrap();
    let (mean, var) = batch_stats(input);
    let mut input_grad = vec![T::zero(); input.len()];
    let mut gamma_grad = vec![T::zero(); channels];
    let mut beta_grad = vec![T::zero(); channels];
    for c in 0..channels {
        let inv_std = (var[c] + params.epsilon).sqrt().recip();
        // Channel-wide sums of the upstream gradient and of its product with
        // the normalized activations.
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for b in 0..batch {
            for (v, g) in input.plane(b, c).iter().zip(upstream.plane(b, c)) {
                let xhat = (*v - mean[c]) * inv_std;
                sum_g = sum_g + *g;
                sum_gx = sum_gx + *g * xhat;
            }
        }
        beta_grad[c] = sum_g;
        gamma_grad[c] = sum_gx;
        let mean_g = sum_g / n;
        let mean_gx = sum_gx / n;
        let scale = params.gamma[c] * inv_std;
        for b in 0..batch {
            let src = input.plane(b, c);
            let ups = upstream.plane(b, c);
            let dst = &mut input_grad[(b * channels + c) * hw..][..hw];
            for ((d, v), g) in dst.iter_mut().zip(src).zip(ups) {
                let xhat = (*v - mean[c]) * inv_std;
                *d = scale * (*g - mean_g - xhat * mean_gx);
            }
        }
    }
    Ok((Tensor::new(input.shape(), input_grad)?, gamma_grad, beta_grad))
}
