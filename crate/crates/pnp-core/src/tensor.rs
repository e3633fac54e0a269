//! Dense row-major f64 tensors and the handful of kernels the models need.
//!
//! Everything is plain loops over `Vec<f64>`. Accumulation order is fixed
//! (ascending index), so results are bit-identical across runs and
//! platforms for the same inputs.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Dense tensor. Construction validates that the element count matches the
/// dims and that every value is finite, so any `Tensor` in circulation is
/// known-good.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expect: usize = dims.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeMismatch {
                op: "tensor::new",
                expected: dims.clone(),
                actual: vec![data.len()],
            });
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { op: "tensor::new" });
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Tensor { dims, data: vec![0.0; n] }
    }

    /// Build from a function of the flat index. The values are validated.
    pub fn from_fn(dims: Vec<usize>, f: impl FnMut(usize) -> f64) -> Result<Self> {
        let n: usize = dims.iter().product();
        let data: Vec<f64> = (0..n).map(f).collect();
        Tensor::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Rows of a rank-2 tensor.
    pub fn rows(&self) -> usize {
        self.dims[0]
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    pub fn get2(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.dims[1] + c]
    }

    /// Element of a rank-3 tensor indexed as [a][b][c].
    pub fn get3(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[(a * self.dims[1] + b) * self.dims[2] + c]
    }

    /// Borrow row `r` of a rank-2 tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.dims[1];
        &self.data[r * c..(r + 1) * c]
    }

    fn require_rank2(&self, op: &'static str) -> Result<()> {
        if self.dims.len() != 2 {
            return Err(Error::DimMismatch {
                op,
                detail: alloc::format!("expected rank-2 tensor, got rank {}", self.dims.len()),
            });
        }
        Ok(())
    }
}

/// `a @ b` for rank-2 tensors: [m,k] x [k,n] -> [m,n].
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.require_rank2("matmul")?;
    b.require_rank2("matmul")?;
    let (m, k) = (a.dims[0], a.dims[1]);
    let (k2, n) = (b.dims[0], b.dims[1]);
    if k != k2 {
        return Err(Error::DimMismatch {
            op: "matmul",
            detail: alloc::format!("inner dims {k} vs {k2}"),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `a @ b^T` for rank-2 tensors: [m,k] x [n,k] -> [m,n].
pub fn matmul_nt(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    a.require_rank2("matmul_nt")?;
    b.require_rank2("matmul_nt")?;
    let (m, k) = (a.dims[0], a.dims[1]);
    let (n, k2) = (b.dims[0], b.dims[1]);
    if k != k2 {
        return Err(Error::DimMismatch {
            op: "matmul_nt",
            detail: alloc::format!("inner dims {k} vs {k2}"),
        });
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a.data[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b.data[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for p in 0..k {
                acc += arow[p] * brow[p];
            }
            out[i * n + j] = acc;
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Numerically stable softmax of one slice, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for &v in row.iter() {
        if v > max {
            max = v;
        }
    }
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Softmax along the last axis of a tensor of any rank >= 1.
pub fn softmax_rows(x: &Tensor) -> Result<Tensor> {
    if x.dims.is_empty() {
        return Err(Error::DimMismatch {
            op: "softmax_rows",
            detail: alloc::string::String::from("rank-0 tensor"),
        });
    }
    let width = x.dims[x.dims.len() - 1];
    if width == 0 {
        return Err(Error::DimMismatch {
            op: "softmax_rows",
            detail: alloc::string::String::from("zero-width last axis"),
        });
    }
    let mut data = x.data.clone();
    for chunk in data.chunks_mut(width) {
        softmax_in_place(chunk);
    }
    Tensor::new(x.dims.clone(), data)
}

/// out = a + b, elementwise, same shape.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims != b.dims {
        return Err(Error::ShapeMismatch {
            op: "add",
            expected: a.dims.clone(),
            actual: b.dims.clone(),
        });
    }
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    Tensor::new(a.dims.clone(), data)
}

/// Add a [n]-vector to every row of an [m,n] tensor.
pub fn add_row_broadcast(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    a.require_rank2("add_row_broadcast")?;
    if bias.rank() != 1 || bias.dims[0] != a.dims[1] {
        return Err(Error::ShapeMismatch {
            op: "add_row_broadcast",
            expected: vec![a.dims[1]],
            actual: bias.dims.clone(),
        });
    }
    let n = a.dims[1];
    let data = a
        .data
        .iter()
        .enumerate()
        .map(|(i, v)| v + bias.data[i % n])
        .collect();
    Tensor::new(a.dims.clone(), data)
}

/// Elementwise tanh.
pub fn tanh(x: &Tensor) -> Result<Tensor> {
    let data = x.data.iter().map(|&v| libm::tanh(v)).collect();
    Tensor::new(x.dims.clone(), data)
}
