//! Small deterministic neural core: dense layers, a unidirectional LSTM,
//! softmax cross-entropy, hand-written backward passes, Adam, and a
//! central-difference gradient checker.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f64` for
//! gradient verification and in `f32` for experiments.

mod adam;
mod checkpoint;
mod gradcheck;
mod lstm;
mod mlp;
mod model;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::PrngStream;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use gradcheck::{
    finite_difference_check, reference_checks, GradCheckReport, NamedCheck, REL_ERROR_FLOOR,
};
pub use lstm::{LstmCache, LstmParams};
pub use mlp::{MlpCache, MlpParams};
pub use model::{InputStep, Model, ModelCache, Net};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    F64,
}

pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Default
    + Send
    + Sync
    + 'static
{
    const PRECISION: Precision;

    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("representable constant")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("finite conversion")
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const PRECISION: Precision = Precision::F32;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const PRECISION: Precision = Precision::F64;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

impl Precision {
    pub fn bytes(self) -> usize {
        match self {
            Precision::F32 => 4,
            Precision::F64 => 8,
        }
    }
}

/// Row-major matrix; vectors are `n x 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn vector(values: Vec<T>) -> Self {
        Self {
            rows: values.len(),
            cols: 1,
            data: values,
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn uniform_init(
        rows: usize,
        cols: usize,
        fan_in: usize,
        rng: &mut PrngStream,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || fan_in == 0 {
            return Err(Error::Shape(format!(
                "cannot initialise {rows}x{cols} with fan_in {fan_in}"
            )));
        }
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| T::c(rng.uniform(-bound, bound)))
            .collect();
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, v: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![v; rows * cols],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self * x (+ bias)`.
    pub fn matvec(&self, x: &[T], bias: Option<&[T]>) -> Vec<T> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|r| {
                let acc = dot(self.row(r), x);
                bias.map_or(acc, |b| acc + b[r])
            })
            .collect()
    }

    /// `out += self * x`.
    pub fn matvec_acc(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.row(r), x);
        }
    }

    /// `out += self^T * y`.
    pub fn matvec_t_acc(&self, y: &[T], out: &mut [T]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == T::zero() {
                continue;
            }
            axpy(yr, self.row(r), out);
        }
    }

    /// `self += a * b^T`.
    pub fn outer_acc(&mut self, a: &[T], b: &[T]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let cols = self.cols;
        for (r, &ar) in a.iter().enumerate() {
            if ar == T::zero() {
                continue;
            }
            axpy(ar, b, &mut self.data[r * cols..(r + 1) * cols]);
        }
    }

    pub fn add_assign_slice(&mut self, v: &[T]) {
        for (d, &x) in self.data.iter_mut().zip(v) {
            *d += x;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Dot product with eight independent accumulators so the loop vectorises.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [T::zero(); 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += a * x`.
pub fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Max-shifted softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `-log softmax(logits)[label]`, via log-sum-exp.
pub fn cross_entropy<T: Scalar>(logits: &[T], label: usize) -> Result<T> {
    if label >= logits.len() {
        return Err(Error::Index(format!(
            "label {label} for {} classes",
            logits.len()
        )));
    }
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln();
    Ok((lse - logits[label]).max(T::zero()))
}

/// Gradient of cross-entropy w.r.t. the logits: `softmax - onehot`.
pub fn cross_entropy_grad<T: Scalar>(logits: &[T], label: usize) -> Vec<T> {
    let mut g = softmax(logits);
    g[label] -= T::one();
    g
}

pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Anything exposing its trainable tensors in a fixed order. Gradients use
/// the same type as the parameters they belong to.
pub trait Params<T: Scalar>: Clone {
    fn tensors(&self) -> Vec<&Tensor<T>>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
        z
    }

    fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    fn get_flat(&self, mut index: usize) -> T {
        for t in self.tensors() {
            if index < t.len() {
                return t.data[index];
            }
            index -= t.len();
        }
        panic!("flat index out of range")
    }

    fn set_flat(&mut self, mut index: usize, v: T) {
        for t in self.tensors_mut() {
            if index < t.len() {
                t.data[index] = v;
                return;
            }
            index -= t.len();
        }
        panic!("flat index out of range")
    }

    fn add_scaled(&mut self, other: &Self, scale: T) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(scale, &b.data, &mut a.data);
        }
    }

    fn scale(&mut self, s: T) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn l2_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter())
            .map(|v| v.f64() * v.f64())
            .sum::<f64>()
            .sqrt()
    }

    fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.is_finite())
    }
}

/// Inverted dropout mask: entries are 0 or `1 / (1 - rate)`.
pub(crate) fn dropout_mask<T: Scalar>(n: usize, rate: f64, rng: &mut PrngStream) -> Vec<T> {
    let keep = T::c(1.0 / (1.0 - rate));
    (0..n)
        .map(|_| if rng.bernoulli(rate) { T::zero() } else { keep })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cross_entropy_examples() {
        assert!((cross_entropy(&[0.0f64, 0.0], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
        let tiny = cross_entropy(&[1000.0f64, 0.0], 0).unwrap();
        assert!(tiny.is_finite() && tiny < 1e-12);
        let big = cross_entropy(&[0.0f64, 1000.0], 0).unwrap();
        assert!((big - 1000.0).abs() < 1e-9);
        assert!(matches!(cross_entropy(&[0.0f64], 3), Err(Error::Index(_))));
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..21).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-9);
    }

    #[test]
    fn matvec_transpose_consistent() {
        let w = Tensor::from_vec(2, 3, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(w.matvec(&[1.0, 0.0, -1.0], Some(&[0.5, 0.5])), [-1.5, -1.5]);
        let mut out = vec![0.0; 3];
        w.matvec_t_acc(&[1.0, 1.0], &mut out);
        assert_eq!(out, [5.0, 7.0, 9.0]);
    }

    proptest! {
        #[test]
        fn softmax_normalised(logits in prop::collection::vec(-50.0f64..50.0, 1..10), label in 0usize..10) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let label = label % logits.len();
            prop_assert!(cross_entropy(&logits, label).unwrap() >= 0.0);
        }
    }
}
