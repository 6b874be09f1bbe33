//! Dense row-major tensor container.
//!
//! The models in this crate only ever need rank-1 vectors and rank-2
//! matrices at desk scale, so this is a deliberately small container: a
//! shape plus a flat `Vec`, with checked constructors and a handful of
//! accessors. All arithmetic lives in the modules that own the semantics
//! (the tape for differentiable ops, the solver for Gram algebra).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense tensor with row-major storage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    /// Builds a tensor after checking that `data` fills `shape` exactly and
    /// contains only finite values.
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::DimensionMismatch {
                op: "tensor construction",
                lhs: format!("shape {:?} ({} elements)", shape, expected),
                rhs: format!("{} data values", data.len()),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "tensor construction rejects non-finite value {bad}"
            )));
        }
        Ok(Tensor { shape, data })
    }

    /// Rank-1 tensor from a plain vector.
    pub fn vector(data: Vec<T>) -> Result<Self> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    /// Rank-2 tensor from equal-length rows.
    pub fn matrix(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|row| row.len() != c) {
            return Err(Error::DimensionMismatch {
                op: "matrix construction",
                lhs: format!("row of length {c}"),
                rhs: format!("row of length {}", bad.len()),
            });
        }
        Tensor::new(vec![r, c], rows.into_iter().flatten().collect())
    }

    /// Internal constructor for values produced by already-checked math.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    /// Zero-filled tensor of the given shape.
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape,
            data: vec![T::zero(); n],
        }
    }

    /// Rank-1 tensor holding a single value.
    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// n-by-n identity matrix.
    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(vec![n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
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

    /// Number of rows when viewed as a matrix (rank-2 only).
    pub fn rows(&self) -> usize {
        debug_assert_eq!(self.rank(), 2, "rows() expects a rank-2 tensor");
        self.shape[0]
    }

    /// Number of columns when viewed as a matrix (rank-2 only).
    pub fn cols(&self) -> usize {
        debug_assert_eq!(self.rank(), 2, "cols() expects a rank-2 tensor");
        self.shape[1]
    }

    /// Element access for rank-2 tensors.
    pub fn at(&self, i: usize, j: usize) -> T {
        debug_assert_eq!(self.rank(), 2, "at() expects a rank-2 tensor");
        self.data[i * self.shape[1] + j]
    }

    /// Row view for rank-2 tensors.
    pub fn row(&self, i: usize) -> &[T] {
        debug_assert_eq!(self.rank(), 2, "row() expects a rank-2 tensor");
        let c = self.shape[1];
        &self.data[i * c..(i + 1) * c]
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> T {
        debug_assert_eq!(self.len(), 1, "item() expects a one-element tensor");
        self.data[0]
    }

    /// True when every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sum of element-wise products; shapes must match exactly.
    pub fn dot(&self, other: &Tensor<T>) -> Result<T> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch {
                op: "dot",
                lhs: format!("{:?}", self.shape),
                rhs: format!("{:?}", other.shape),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .sum())
    }

    /// Adds `scale * other` into `self`; shapes must match exactly.
    pub fn add_scaled(&mut self, other: &Tensor<T>, scale: T) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::DimensionMismatch {
                op: "add_scaled",
                lhs: format!("{:?}", self.shape),
                rhs: format!("{:?}", other.shape),
            });
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
        Ok(())
    }

    /// Resets every entry to zero, keeping the shape.
    pub fn fill_zero(&mut self) {
        for v in &mut self.data {
            *v = T::zero();
        }
    }
}
