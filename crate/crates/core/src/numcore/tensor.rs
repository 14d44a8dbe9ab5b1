use std::fmt;

use crate::error::{invalid, Error, Result};

/// Dense row-major `f64` array with explicit shape.
///
/// Activations are laid out `batch × channels × length`; per-example windows
/// are `channels × length`. Dense activations use a trailing length of 1.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor{:?}{:?}", self.shape, self.data)
        } else {
            write!(f, "Tensor{:?}[{} values]", self.shape, self.data.len())
        }
    }
}

fn product(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: impl Into<Vec<usize>>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        if shape.contains(&0) {
            return Err(invalid(format!("tensor dimensions must be positive, got {shape:?}")));
        }
        if product(&shape) != data.len() {
            return Err(Error::ShapeMismatch {
                op: "new",
                left: shape,
                right: vec![data.len()],
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("tensor construction".into()));
        }
        Ok(Self { shape, data })
    }

    /// Crate-internal constructor for kernels whose output shape is correct by construction.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(product(&shape), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Vec<usize>>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: impl Into<Vec<usize>>, value: f64) -> Self {
        let shape = shape.into();
        let n = product(&shape);
        Self {
            shape,
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interprets the tensor as `batch × channels × length`.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[n, c, l] => Ok((n, c, l)),
            _ => Err(invalid(format!(
                "expected a batch x channels x length tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(&self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if product(&shape) != self.data.len() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape.clone(),
                right: shape,
            });
        }
        Ok(Self {
            shape,
            data: self.data.clone(),
        })
    }

    pub fn into_reshape(self, shape: impl Into<Vec<usize>>) -> Result<Tensor> {
        let shape = shape.into();
        if product(&shape) != self.data.len() || shape.contains(&0) {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                left: self.shape,
                right: shape,
            });
        }
        Ok(Self {
            shape,
            data: self.data,
        })
    }

    fn check_same(&self, other: &Tensor, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(())
    }

    fn finite_or(self, op: &'static str) -> Result<Tensor> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op.into()))
        }
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        // Equal shapes, or `other` broadcast over the leading batch dimension.
        if self.shape == other.shape {
            let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
            return Tensor::from_parts(self.shape.clone(), data).finite_or(op);
        }
        if self.rank() == other.rank() + 1 && self.shape[1..] == other.shape[..] {
            let inner = other.data.len();
            let data = self
                .data
                .chunks(inner)
                .flat_map(|row| row.iter().zip(&other.data).map(|(&a, &b)| f(a, b)))
                .collect();
            return Tensor::from_parts(self.shape.clone(), data).finite_or(op);
        }
        Err(Error::ShapeMismatch {
            op,
            left: self.shape.clone(),
            right: other.shape.clone(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn scale(&self, factor: f64) -> Result<Tensor> {
        let data = self.data.iter().map(|v| v * factor).collect();
        Tensor::from_parts(self.shape.clone(), data).finite_or("scale")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    /// `(m×k)·(k×n) → (m×n)`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (m, k) = match self.shape.as_slice() {
            &[m, k] => (m, k),
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    left: self.shape.clone(),
                    right: other.shape.clone(),
                })
            }
        };
        let n = match other.shape.as_slice() {
            &[k2, n] if k2 == k => n,
            _ => {
                return Err(Error::ShapeMismatch {
                    op: "matmul",
                    left: self.shape.clone(),
                    right: other.shape.clone(),
                })
            }
        };
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let a = self.data[i * k + p];
                if a == 0.0 {
                    continue;
                }
                let brow = &other.data[p * n..(p + 1) * n];
                for (o, &b) in row.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Tensor::from_parts(vec![m, n], out).finite_or("matmul")
    }

    pub fn transpose2(&self) -> Result<Tensor> {
        let (m, n) = match self.shape.as_slice() {
            &[m, n] => (m, n),
            _ => return Err(invalid(format!("transpose needs rank 2, got {:?}", self.shape))),
        };
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(Tensor::from_parts(vec![n, m], out))
    }

    pub fn sum(&self) -> f64 {
        pairwise_sum(&self.data)
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Sums over the leading (batch) dimension.
    pub fn sum_batch(&self) -> Result<Tensor> {
        if self.rank() < 2 {
            return Err(invalid(format!("sum_batch needs rank >= 2, got {:?}", self.shape)));
        }
        let inner = self.data.len() / self.shape[0];
        let mut out = vec![0.0; inner];
        for row in self.data.chunks(inner) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok(Tensor::from_parts(self.shape[1..].to_vec(), out))
    }

    pub fn mean_batch(&self) -> Result<Tensor> {
        let n = self.shape.first().copied().unwrap_or(1) as f64;
        self.sum_batch()?.scale(1.0 / n)
    }

    /// Stacks equally shaped tensors along a new leading dimension.
    pub fn stack(items: &[&Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| invalid("cannot stack an empty list"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.check_same(t, "stack")?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor::from_parts(shape, data))
    }

    /// Returns example `i` of the leading dimension.
    pub fn index_batch(&self, i: usize) -> Result<Tensor> {
        let n = *self.shape.first().ok_or_else(|| invalid("empty shape"))?;
        if i >= n || self.rank() < 2 {
            return Err(invalid(format!("batch index {i} out of range for {:?}", self.shape)));
        }
        let inner = self.data.len() / n;
        Ok(Tensor::from_parts(
            self.shape[1..].to_vec(),
            self.data[i * inner..(i + 1) * inner].to_vec(),
        ))
    }

    /// Gathers examples `ids` of the leading dimension, in order.
    pub fn select_batch(&self, ids: &[usize]) -> Result<Tensor> {
        let n = *self.shape.first().ok_or_else(|| invalid("empty shape"))?;
        if ids.is_empty() || self.rank() < 2 {
            return Err(invalid("selection needs a batched tensor and at least one index"));
        }
        let inner = self.data.len() / n;
        let mut data = Vec::with_capacity(inner * ids.len());
        for &i in ids {
            if i >= n {
                return Err(invalid(format!("batch index {i} out of range for {:?}", self.shape)));
            }
            data.extend_from_slice(&self.data[i * inner..(i + 1) * inner]);
        }
        let mut shape = self.shape.clone();
        shape[0] = ids.len();
        Ok(Tensor::from_parts(shape, data))
    }

    pub(crate) fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    /// Rounds every entry through `f32`, the checkpoint storage precision.
    pub fn round_f32(&self) -> Tensor {
        self.map(|v| v as f32 as f64)
    }
}

/// Order-independent-by-construction pairwise (tree) summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 32;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
