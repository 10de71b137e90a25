//! 3×3 convolution, stride 1, zero padding 1 (same-size output), with the
//! exact transpose backward pass.
//!
//! The inner loops fuse all kernel taps that touch one output row into a
//! single pass, so each row of the accumulator is loaded and stored once per
//! input channel instead of once per tap. Reductions (weight and bias
//! gradients) use fixed four-lane partial sums: the compiler will not
//! reassociate float additions on its own, so the lanes make the dot products
//! vectorizable while keeping results deterministic.

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Weights and biases of one convolution layer. Weight shape is
/// `(out_channels, in_channels, 3, 3)`, one bias per output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayerParams<T> {
    weights: Tensor<T>,
    bias: Vec<T>,
}

impl<T: Element> ConvLayerParams<T> {
    /// Build a layer, rejecting anything that is not a 3×3 kernel or a bias
    /// vector of the wrong length.
    pub fn new(weights: Tensor<T>, bias: Vec<T>) -> Result<Self> {
        let [oc, _ic, kh, kw] = weights.shape();
        if kh != 3 || kw != 3 {
            return Err(Error::ShapeMismatch(format!(
                "convolution kernels must be 3x3, got {kh}x{kw}"
            )));
        }
        if bias.len() != oc {
            return Err(Error::ShapeMismatch(format!(
                "expected {oc} biases for {oc} output channels, got {}",
                bias.len()
            )));
        }
        Ok(Self { weights, bias })
    }

    pub fn out_channels(&self) -> usize {
        self.weights.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weights.shape()[1]
    }

    pub fn weights(&self) -> &Tensor<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [T] {
        &mut self.bias
    }

    /// Weights and bias as disjoint mutable borrows, for optimizers that
    /// update both in one pass.
    pub fn parts_mut(&mut self) -> (&mut Tensor<T>, &mut [T]) {
        (&mut self.weights, &mut self.bias)
    }

    /// Number of scalar parameters in the layer.
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Add one input row's three-tap contribution to one output row with zero
/// padding at both ends: `out[x] += w0*in[x-1] + w1*in[x] + w2*in[x+1]`.
#[inline]
fn add_row_taps<T: Element>(out_row: &mut [T], in_row: &[T], w0: T, w1: T, w2: T) {
    let w = out_row.len();
    if w == 1 {
        out_row[0] = out_row[0] + w1 * in_row[0];
        return;
    }
    out_row[0] = out_row[0] + w1 * in_row[0] + w2 * in_row[1];
    let dst = &mut out_row[1..w - 1];
    let (s0, s1, s2) = (&in_row[..w - 2], &in_row[1..w - 1], &in_row[2..]);
    for i in 0..dst.len() {
        dst[i] = dst[i] + w0 * s0[i] + w1 * s1[i] + w2 * s2[i];
    }
    out_row[w - 1] = out_row[w - 1] + w0 * in_row[w - 2] + w1 * in_row[w - 1];
}

/// Add all nine taps for an interior output row in one pass. `above`, `mid`
/// and `below` are the input rows `y-1`, `y` and `y+1`; `t` is the kernel in
/// row-major order.
#[inline]
fn add_row_taps3<T: Element>(
    out_row: &mut [T],
    above: &[T],
    mid: &[T],
    below: &[T],
    t: &[T],
) {
    let w = out_row.len();
    if w == 1 {
        out_row[0] = out_row[0] + t[1] * above[0] + t[4] * mid[0] + t[7] * below[0];
        return;
    }
    out_row[0] = out_row[0]
        + t[1] * above[0]
        + t[2] * above[1]
        + t[4] * mid[0]
        + t[5] * mid[1]
        + t[7] * below[0]
        + t[8] * below[1];
    let dst = &mut out_row[1..w - 1];
    let (t0, t1, t2) = (t[0], t[1], t[2]);
    let (t3, t4, t5) = (t[3], t[4], t[5]);
    let (t6, t7, t8) = (t[6], t[7], t[8]);
    for i in 0..dst.len() {
        let a = t0 * above[i] + t1 * above[i + 1] + t2 * above[i + 2];
        let m = t3 * mid[i] + t4 * mid[i + 1] + t5 * mid[i + 2];
        let b = t6 * below[i] + t7 * below[i + 1] + t8 * below[i + 2];
        dst[i] = dst[i] + a + m + b;
    }
    out_row[w - 1] = out_row[w - 1]
        + t[0] * above[w - 2]
        + t[1] * above[w - 1]
        + t[3] * mid[w - 2]
        + t[4] * mid[w - 1]
        + t[6] * below[w - 2]
        + t[7] * below[w - 1];
}

/// Accumulate `plane_len`-row taps of `src_plane` into `dst_plane` using the
/// nine kernel values `t`; the shared row structure of the forward pass and
/// the transposed backward pass.
#[inline]
fn accumulate_plane<T: Element>(dst_plane: &mut [T], src_plane: &[T], t: &[T], h: usize, w: usize) {
    if h == 1 {
        add_row_taps(&mut dst_plane[..w], &src_plane[..w], t[3], t[4], t[5]);
        return;
    }
    {
        let row0 = &mut dst_plane[..w];
        add_row_taps(row0, &src_plane[..w], t[3], t[4], t[5]);
        add_row_taps(row0, &src_plane[w..2 * w], t[6], t[7], t[8]);
    }
    for y in 1..h - 1 {
        let out_row = &mut dst_plane[y * w..(y + 1) * w];
        let above = &src_plane[(y - 1) * w..y * w];
        let mid = &src_plane[y * w..(y + 1) * w];
        let below = &src_plane[(y + 1) * w..(y + 2) * w];
        add_row_taps3(out_row, above, mid, below, t);
    }
    {
        let last = &mut dst_plane[(h - 1) * w..h * w];
        add_row_taps(last, &src_plane[(h - 2) * w..(h - 1) * w], t[0], t[1], t[2]);
        add_row_taps(last, &src_plane[(h - 1) * w..h * w], t[3], t[4], t[5]);
    }
}

/// Dot product with four deterministic partial sums so the loop vectorizes.
#[inline]
fn dot<T: Element>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    for (ca, cb) in a.chunks_exact(4).zip(b.chunks_exact(4)) {
        for k in 0..4 {
            lanes[k] = lanes[k] + ca[k] * cb[k];
        }
    }
    let tail = a.len() - a.len() % 4;
    let mut sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (x, y) in a[tail..].iter().zip(&b[tail..]) {
        sum = sum + *x * *y;
    }
    sum
}

/// Sum of a slice with the same four-lane scheme as [`dot`].
#[inline]
fn lane_sum<T: Element>(a: &[T]) -> T {
    let mut lanes = [T::zero(); 4];
    for ca in a.chunks_exact(4) {
        for k in 0..4 {
            lanes[k] = lanes[k] + ca[k];
        }
    }
    let tail = a.len() - a.len() % 4;
    let mut sum = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for x in &a[tail..] {
        sum = sum + *x;
    }
    sum
}

/// Convolve `input` `(b, c_in, h, w)` with a layer, producing
/// `(b, c_out, h, w)`. Padding is zero, stride is 1.
pub fn conv2d_forward<T: Element>(
    input: &Tensor<T>,
    params: &ConvLayerParams<T>,
) -> Result<Tensor<T>> {
    input.check_finite("conv2d_forward input")?;
    params.weights.check_finite("conv2d_forward weights")?;
    let [batch, c_in, h, w] = input.shape();
    if c_in != params.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "input has {c_in} channels but layer expects {}",
            params.in_channels()
        )));
    }
    let c_out = params.out_channels();
    let hw = h * w;
    let mut out = vec![T::zero(); batch * c_out * hw];
    let wdata = params.weights.data();
    for b in 0..batch {
        for o in 0..c_out {
            let out_plane = &mut out[(b * c_out + o) * hw..][..hw];
            out_plane.fill(params.bias[o]);
            for ic in 0..c_in {
                let in_plane = input.plane(b, ic);
                let taps = &wdata[(o * c_in + ic) * 9..][..9];
                accumulate_plane(out_plane, in_plane, taps, h, w);
            }
        }
    }
    Tensor::new([batch, c_out, h, w], out)
}

/// Gradients of a convolution: with respect to the input, the weights, and
/// the biases. `upstream` is the loss gradient at the output, shaped like the
/// forward output.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    params: &ConvLayerParams<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Vec<T>)> {
    input.check_finite("conv2d_backward input")?;
    upstream.check_finite("conv2d_backward upstream")?;
    let [batch, c_in, h, w] = input.shape();
    let c_out = params.out_channels();
    if c_in != params.in_channels() {
        return Err(Error::ShapeMismatch(format!(
            "input has {c_in} channels but layer expects {}",
            params.in_channels()
        )));
    }
    if upstream.shape() != [batch, c_out, h, w] {
        return Err(Error::ShapeMismatch(format!(
            "upstream shape {:?} does not match output shape {:?}",
            upstream.shape(),
            [batch, c_out, h, w]
        )));
    }
    let hw = h * w;
    let wdata = params.weights.data();
    let mut input_grad = vec![T::zero(); batch * c_in * hw];
    let mut weight_grad = vec![T::zero(); c_out * c_in * 9];
    let mut bias_grad = vec![T::zero(); c_out];
    for b in 0..batch {
        for o in 0..c_out {
            let up_plane = upstream.plane(b, o);
            for y in 0..h {
                bias_grad[o] = bias_grad[o] + lane_sum(&up_plane[y * w..(y + 1) * w]);
            }
            for ic in 0..c_in {
                let in_plane = input.plane(b, ic);
                let ig_plane = &mut input_grad[(b * c_in + ic) * hw..][..hw];
                let taps = &wdata[(o * c_in + ic) * 9..][..9];

                // The input gradient is the correlation of the upstream
                // gradient with the kernel rotated by 180 degrees, which is
                // the forward row structure with the taps reversed.
                let flipped = [
                    taps[8], taps[7], taps[6], taps[5], taps[4], taps[3], taps[2], taps[1],
                    taps[0],
                ];
                accumulate_plane(ig_plane, up_plane, &flipped, h, w);

                // Each weight gradient is a shifted dot product between the
                // upstream rows and the input rows they read in the forward
                // pass.
                let wg = &mut weight_grad[(o * c_in + ic) * 9..][..9];
                for ky in 0..3 {
                    let y0 = usize::from(ky == 0);
                    let y1 = if ky == 2 { h - 1 } else { h };
                    for y in y0..y1 {
                        let up_row = &up_plane[y * w..(y + 1) * w];
                        let in_row = &in_plane[(y + ky - 1) * w..(y + ky) * w];
                        if w > 1 {
                            wg[ky * 3] = wg[ky * 3] + dot(&up_row[1..], &in_row[..w - 1]);
                            wg[ky * 3 + 2] =
                                wg[ky * 3 + 2] + dot(&up_row[..w - 1], &in_row[1..]);
                        }
                        wg[ky * 3 + 1] = wg[ky * 3 + 1] + dot(up_row, in_row);
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new([batch, c_in, h, w], input_grad)?,
        Tensor::new([c_out, c_in, 3, 3], weight_grad)?,
        bias_grad,
    ))
}
