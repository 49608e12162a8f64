use crate::scalar::{sigmoid, Scalar};
use ndarray::{Array2, Array3};

/// Window weights `W[t, i, d]` for hours `t = 1..=T` (stored at index `t − 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTensor<T> {
    pub weights: Array3<T>,
}

impl<T: Scalar> WeightTensor<T> {
    pub fn hours(&self) -> usize {
        self.weights.dim().0
    }

    /// Contiguous copy of the weights for summary `i` of variable `d`.
    pub fn column(&self, i: usize, d: usize) -> Vec<T> {
        (0..self.hours()).map(|t| self.weights[[t, i, d]]).collect()
    }
}

/// Soft window position `(t − T + C)/τ` of hour `t` (1-based).
#[inline]
pub fn window_logit<T: Scalar>(hour: usize, hours: usize, duration: T, temperature: T) -> T {
    (T::from_usize_lossy(hour) - T::from_usize_lossy(hours) + duration) / temperature
}

/// `w[t, i, d] = σ((t − T + C[d, i]) / τ)`.
pub fn compute_weights<T: Scalar>(durations: &Array2<T>, hours: usize, temperature: T) -> WeightTensor<T> {
    let (d, i) = durations.dim();
    let weights = Array3::from_shape_fn((hours, i, d), |(t, ii, dd)| {
        sigmoid(window_logit(t + 1, hours, durations[[dd, ii]], temperature))
    });
    WeightTensor { weights }
}

/// `w[t, i, d] = 1(t > T − C[d, i])`.
pub fn compute_weights_hard<T: Scalar>(durations: &Array2<T>, hours: usize) -> WeightTensor<T> {
    let (d, i) = durations.dim();
    let total = T::from_usize_lossy(hours);
    let weights = Array3::from_shape_fn((hours, i, d), |(t, ii, dd)| {
        if T::from_usize_lossy(t + 1) > total - durations[[dd, ii]] {
            T::one()
        } else {
            T::zero()
        }
    });
    WeightTensor { weights }
}

/// Soft window column for one cell, with `dw/dC` alongside.
pub fn window_with_derivative<T: Scalar>(duration: T, hours: usize, temperature: T) -> (Vec<T>, Vec<T>) {
    (1..=hours)
        .map(|t| {
            let z = window_logit(t, hours, duration, temperature);
            let w = sigmoid(z);
            (w, w * sigmoid(-z) / temperature)
        })
        .unzip()
}
