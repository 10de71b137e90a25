//! Dense 4-axis tensor engine with forward and backward passes for the
//! handful of primitives the denoiser needs: 3×3 zero-padded convolution,
//! ReLU, batch normalization, pixel shuffle/unshuffle at factor 2, channel
//! concatenation, and mean-squared loss.
//!
//! Everything is generic over the element type: training and inference run in
//! `f32`, gradient verification runs the same code in `f64`. Every operation
//! is a pure function of its inputs (batch-norm training mode additionally
//! updates running statistics through an explicit `&mut`), so distinct
//! tensors can be processed concurrently without synchronization.

mod batchnorm;
mod conv;
mod ops;

pub use batchnorm::{batchnorm_backward, batchnorm_forward, batchnorm_inference, BatchNormParams};
pub use conv::{conv2d_backward, conv2d_forward, ConvLayerParams};
pub use ops::{
    concat_channels, mse_loss, pixel_shuffle, pixel_unshuffle, relu_backward, relu_forward,
};

use std::sync::atomic::{AtomicBool, Ordering};

use crate::error::{Error, Result};

/// Bounds every tensor element type must satisfy.
pub trait Element:
    num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

impl<T> Element for T where
    T: num_traits::Float + num_traits::FromPrimitive + std::fmt::Debug + Send + Sync + 'static
{
}

/// Whether an operation runs with batch statistics (training) or stored
/// running statistics (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

static CHECKED: AtomicBool = AtomicBool::new(true);

/// Enable or disable NaN/Inf rejection at operation boundaries. On by
/// default; the training hot loop disables it through [`UncheckedScope`].
pub fn set_checked(enabled: bool) {
    CHECKED.store(enabled, Ordering::Relaxed);
}

/// Current checked-mode state.
pub fn checked() -> bool {
    CHECKED.load(Ordering::Relaxed)
}

/// RAII guard that turns checked mode off and restores the previous state on
/// drop.
pub struct UncheckedScope {
    prev: bool,
}

impl UncheckedScope {
    pub fn new() -> Self {
        let prev = checked();
        set_checked(false);
        Self { prev }
    }
}

impl Default for UncheckedScope {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for UncheckedScope {
    fn drop(&mut self) {
        set_checked(self.prev);
    }
}

/// Dense `(batch, channels, height, width)` array, row-major with width
/// fastest. May carry a gradient of the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: [usize; 4],
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Element> Tensor<T> {
    /// Build a tensor from a shape and row-major data. Rejects length
    /// mismatches always and non-finite values in checked mode.
    pub fn new(shape: [usize; 4], data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        let t = Self { shape, data, grad: None };
        t.check_finite("Tensor::new")?;
        Ok(t)
    }

    /// All-zero tensor.
    pub fn zeros(shape: [usize; 4]) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![T::zero(); len], grad: None }
    }

    /// Constant-filled tensor.
    pub fn filled(shape: [usize; 4], value: T) -> Self {
        let len = shape.iter().product();
        Self { shape, data: vec![value; len], grad: None }
    }

    pub fn shape(&self) -> [usize; 4] {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape[0]
    }

    pub fn channels(&self) -> usize {
        self.shape[1]
    }

    pub fn height(&self) -> usize {
        self.shape[2]
    }

    pub fn width(&self) -> usize {
        self.shape[3]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    /// Flat index of `(b, c, y, x)`.
    #[inline]
    pub fn index(&self, b: usize, c: usize, y: usize, x: usize) -> usize {
        ((b * self.shape[1] + c) * self.shape[2] + y) * self.shape[3] + x
    }

    /// Value at `(b, c, y, x)`.
    #[inline]
    pub fn at(&self, b: usize, c: usize, y: usize, x: usize) -> T {
        self.data[self.index(b, c, y, x)]
    }

    /// Contiguous `height × width` plane of one `(batch, channel)` pair.
    #[inline]
    pub fn plane(&self, b: usize, c: usize) -> &[T] {
        let hw = self.shape[2] * self.shape[3];
        &self.data[(b * self.shape[1] + c) * hw..][..hw]
    }

    /// Attached gradient, if any.
    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    /// Attach a gradient of the same shape.
    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "gradient length {} does not match tensor length {}",
                grad.len(),
                self.data.len()
            )));
        }
        self.grad = Some(grad);
        Ok(())
    }

    /// Drop the attached gradient.
    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    /// Reject NaN/Inf when checked mode is on. `context` names the operation
    /// for the diagnostic.
    pub fn check_finite(&self, context: &str) -> Result<()> {
        if !checked() {
            return Ok(());
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{context}: tensor {:?}", self.shape)));
        }
        Ok(())
    }

    /// Cast every element (used to move between f32 and f64).
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|v| U::from(*v).unwrap()).collect(),
            grad: None,
        }
    }
}
