//! Pointwise and layout operations: ReLU, pixel unshuffle/shuffle at
//! factor 2, channel concatenation, and the scaled sum-of-squares loss.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Elementwise `max(0, x)`.
pub fn relu_forward<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.check_finite("relu_forward input")?;
    let data = input.data().iter().map(|v| v.max(T::zero())).collect();
    Tensor::new(input.shape(), data)
}

/// Pass `upstream` through where the forward input was positive, zero
/// elsewhere (the subgradient at exactly zero is taken as zero).
pub fn relu_backward<T: Element>(input: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    input.check_finite("relu_backward input")?;
    upstream.check_finite("relu_backward upstream")?;
    if input.shape() != upstream.shape() {
        return Err(Error::ShapeMismatch(format!(
            "upstream shape {:?} does not match input shape {:?}",
            upstream.shape(),
            input.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(upstream.data())
        .map(|(v, g)| if *v > T::zero() { *g } else { T::zero() })
        .collect();
    Tensor::new(input.shape(), data)
}

/// Rearrange `(b, c, h, w)` into `(b, 4c, h/2, w/2)` by moving each 2×2
/// spatial block into four channels. Output channel `4c + k` holds the input
/// pixels at row offset `k / 2` and column offset `k % 2`. Spatial dimensions
/// must be even.
pub fn pixel_unshuffle<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.check_finite("pixel_unshuffle input")?;
    let [batch, channels, h, w] = input.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Size(format!(
            "pixel_unshuffle needs even spatial dimensions, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros([batch, channels * 4, oh, ow]);
    for b in 0..batch {
        for c in 0..channels {
            let src = input.plane(b, c);
            for k in 0..4 {
                let (dy, dx) = (k / 2, k % 2);
                let base = out.index(b, c * 4 + k, 0, 0);
                let dst = &mut out.data_mut()[base..][..oh * ow];
                for y in 0..oh {
                    let srow = &src[(2 * y + dy) * w..][..w];
                    for x in 0..ow {
                        dst[y * ow + x] = srow[2 * x + dx];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_unshuffle`]: `(b, 4c, h, w)` back to `(b, c, 2h, 2w)`.
/// The channel count must be a multiple of 4.
pub fn pixel_shuffle<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    input.check_finite("pixel_shuffle input")?;
    let [batch, channels, h, w] = input.shape();
    if channels % 4 != 0 {
        return Err(Error::Size(format!(
            "pixel_shuffle needs a channel count divisible by 4, got {channels}"
        )));
    }
    let oc = channels / 4;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = Tensor::zeros([batch, oc, oh, ow]);
    for b in 0..batch {
        for c in 0..oc {
            let base = out.index(b, c, 0, 0);
            for k in 0..4 {
                let (dy, dx) = (k / 2, k % 2);
                let src = input.plane(b, c * 4 + k);
                let dst = &mut out.data_mut()[base..][..oh * ow];
                for y in 0..h {
                    let srow = &src[y * w..][..w];
                    for x in 0..w {
                        dst[(2 * y + dy) * ow + 2 * x + dx] = srow[x];
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Stack two tensors along the channel axis, `first` channels leading. Batch
/// and spatial dimensions must agree.
pub fn concat_channels<T: Element>(first: &Tensor<T>, second: &Tensor<T>) -> Result<Tensor<T>> {
    first.check_finite("concat_channels first")?;
    second.check_finite("concat_channels second")?;
    let [b1, c1, h1, w1] = first.shape();
    let [b2, c2, h2, w2] = second.shape();
    if (b1, h1, w1) != (b2, h2, w2) {
        return Err(Error::ShapeMismatch(format!(
            "cannot concatenate {:?} with {:?}: batch or spatial dimensions differ",
            first.shape(),
            second.shape()
        )));
    }
    let hw = h1 * w1;
    let mut data = Vec::with_capacity((c1 + c2) * b1 * hw);
    for b in 0..b1 {
        data.extend_from_slice(&first.data()[b * c1 * hw..][..c1 * hw]);
        data.extend_from_slice(&second.data()[b * c2 * hw..][..c2 * hw]);
    }
    Tensor::new([b1, c1 + c2, h1, w1], data)
}

/// Scaled sum of squared differences and its gradient with respect to
/// `prediction`: loss `scale * sum((p - t)^2)`, gradient `2 * scale * (p - t)`.
pub fn mse_loss<T: Element>(
    prediction: &Tensor<T>,
    target: &Tensor<T>,
    scale: T,
) -> Result<(T, Tensor<T>)> {
    prediction.check_finite("mse_loss prediction")?;
    target.check_finite("mse_loss target")?;
    if prediction.shape() != target.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction shape {:?} does not match target shape {:?}",
            prediction.shape(),
            target.shape()
        )));
    }
    let mut loss = T::zero();
    let two_scale = scale + scale;
    let mut grad = vec![T::zero(); prediction.len()];
    for ((g, p), t) in grad.iter_mut().zip(prediction.data()).zip(target.data()) {
        let d = *p - *t;
        loss = loss + d * d;
        *g = two_scale * d;
    }
    Ok((loss * scale, Tensor::new(prediction.shape(), grad)?))
}
