//! Dense row-major `f64` tensors.
//!
//! The last axis is contiguous: element `[i0, i1, ..., ik]` lives at
//! `sum_j i_j * stride_j` with `stride_k = 1`. Checkpoints serialize `data`
//! verbatim, so this layout is part of the on-disk format.
//!
//! Broadcasting is limited to equal shapes or a single-element operand
//! combined with any tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Elementwise unary maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapOp {
    Identity,
    Neg,
    Square,
    Sqrt,
    Exp,
    Ln,
    Abs,
    Relu,
}

impl MapOp {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            MapOp::Identity => x,
            MapOp::Neg => -x,
            MapOp::Square => x * x,
            MapOp::Sqrt => x.sqrt(),
            MapOp::Exp => x.exp(),
            MapOp::Ln => x.ln(),
            MapOp::Abs => x.abs(),
            MapOp::Relu => x.max(0.0),
        }
    }
}

/// Elementwise binary combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZipOp {
    Add,
    Sub,
    Mul,
    Div,
    Max,
}

impl ZipOp {
    #[inline]
    pub fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            ZipOp::Add => a + b,
            ZipOp::Sub => a - b,
            ZipOp::Mul => a * b,
            ZipOp::Div => a / b,
            ZipOp::Max => a.max(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Sum,
    Mean,
    Max,
}

impl Tensor {
    /// Builds a tensor, checking `product(shape) == data.len()`.
    ///
    /// Zero extents are accepted so that empty batches flow through the
    /// network without special casing.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::dim(format!(
                "shape {shape:?} needs {expected} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a `[rows.len() x cols]` matrix from equally long rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::dim("ragged rows"));
        }
        let data = rows.iter().flatten().copied().collect();
        Tensor::new(vec![rows.len(), cols], data)
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// In-place access. Callers must keep the shape invariant intact.
    pub fn data_mut(&mut self) -> &mut [f64] {
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

    /// Rows of a matrix; for higher ranks, the leading extent.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Product of all extents after the first.
    pub fn cols(&self) -> usize {
        self.shape.iter().skip(1).product()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn reshape(self, shape: Vec<usize>) -> Result<Self> {
        Tensor::new(shape, self.data)
    }

    /// Copies the listed rows (leading-axis slices) into a new tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        let mut shape = self.shape.clone();
        if shape.is_empty() {
            shape.push(indices.len());
        } else {
            shape[0] = indices.len();
        }
        Tensor { shape, data }
    }

    /// Concatenates two matrices along the column axis.
    pub fn hstack(a: &Tensor, b: &Tensor) -> Result<Tensor> {
        if a.rows() != b.rows() {
            return Err(Error::dim(format!(
                "hstack row mismatch: {} vs {}",
                a.rows(),
                b.rows()
            )));
        }
        let (ca, cb) = (a.cols(), b.cols());
        let mut data = Vec::with_capacity(a.rows() * (ca + cb));
        for i in 0..a.rows() {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Tensor::new(vec![a.rows(), ca + cb], data)
    }

    pub fn map(&self, op: MapOp) -> Tensor {
        self.map_with(|x| op.apply(x))
    }

    pub fn map_with(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Tensor, op: ZipOp) -> Result<Tensor> {
        self.zip_with(other, |a, b| op.apply(a, b))
    }

    /// Combines elementwise. Shapes must match, or one side must hold a
    /// single element which is then broadcast.
    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        if other.data.len() == 1 {
            let b = other.data[0];
            return Ok(self.map_with(|a| f(a, b)));
        }
        if self.data.len() == 1 {
            let a = self.data[0];
            return Ok(other.map_with(|b| f(a, b)));
        }
        Err(Error::dim(format!(
            "cannot combine shapes {:?} and {:?}",
            self.shape, other.shape
        )))
    }

    /// Reduces over all elements (`axis = None`) or along one axis.
    pub fn reduce(&self, kind: Reduction, axis: Option<usize>) -> Result<Tensor> {
        let fold = |xs: &mut dyn Iterator<Item = f64>, n: usize| -> f64 {
            match kind {
                Reduction::Sum => xs.sum(),
                Reduction::Mean => xs.sum::<f64>() / n as f64,
                Reduction::Max => xs.fold(f64::NEG_INFINITY, f64::max),
            }
        };
        let Some(axis) = axis else {
            let n = self.data.len();
            return Ok(Tensor::scalar(fold(&mut self.data.iter().copied(), n)));
        };
        if axis >= self.shape.len() {
            return Err(Error::dim(format!(
                "axis {axis} out of range for rank {}",
                self.shape.len()
            )));
        }
        let outer: usize = self.shape[..axis].iter().product();
        let extent = self.shape[axis];
        let inner: usize = self.shape[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for i in 0..inner {
                let base = o * extent * inner + i;
                let mut it = (0..extent).map(|k| self.data[base + k * inner]);
                out.push(fold(&mut it, extent));
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Tensor::new(shape, out)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Matrix transpose of a rank-2 tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = self.as_matrix()?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], data)
    }

    fn as_matrix(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::dim(format!("expected a matrix, got shape {s:?}"))),
        }
    }
}

/// Which operands enter [`gemm`] transposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transpose {
    None,
    Left,
    Right,
}

/// `a x b` for `a: [m x k]`, `b: [k x n]`.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    gemm(a, b, Transpose::None)
}

/// General product with an optionally transposed operand:
/// `None` gives `a b`, `Left` gives `a^T b`, `Right` gives `a b^T`.
pub fn gemm(a: &Tensor, b: &Tensor, trans: Transpose) -> Result<Tensor> {
    let (ar, ac) = a.as_matrix()?;
    let (br, bc) = b.as_matrix()?;
    // (m, k, n) plus row/col strides of the logical operands.
    let (m, k, n, rsa, csa, rsb, csb) = match trans {
        Transpose::None => (ar, ac, bc, ac, 1, bc, 1),
        Transpose::Left => (ac, ar, bc, 1, ac, bc, 1),
        Transpose::Right => (ar, ac, br, ac, 1, 1, bc),
    };
    let kb = match trans {
        Transpose::Right => bc,
        _ => br,
    };
    if k != kb {
        return Err(Error::dim(format!(
            "matmul inner extents differ: {:?} x {:?} ({trans:?})",
            a.shape, b.shape
        )));
    }
    let mut out = vec![0.0; m * n];
    if m > 0 && n > 0 && k > 0 {
        // SAFETY: strides describe in-bounds views of `a.data` / `b.data`
        // with the extents checked above; `out` is a dense m x n buffer.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                1.0,
                a.data.as_ptr(),
                rsa as isize,
                csa as isize,
                b.data.as_ptr(),
                rsb as isize,
                csb as isize,
                0.0,
                out.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
    Tensor::new(vec![m, n], out)
}
