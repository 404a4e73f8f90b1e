//! Dense row-major `f64` arrays.
//!
//! Shapes are checked at call time. A [`Tensor`] is an owned value; every
//! operation returns a fresh tensor and leaves its inputs untouched.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, domain, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that `data.len()` equals the product of `shape`.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return domain(format!("zero extent in shape {shape:?}"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Validation(format!(
                "shape {shape:?} needs {numel} entries, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, 1.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn vector(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// Builds a matrix from equally long rows.
    pub fn matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return domain("matrix needs at least one row");
        };
        let cols = first.len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Validation("ragged matrix rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    /// Entries drawn i.i.d. from `U[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], lo: f64, hi: f64) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(lo..hi)).collect();
        Self {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// The single entry of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => domain(format!("item() on tensor of shape {:?}", self.shape)),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    fn dims2(&self, op: &'static str) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[r, c] => Ok((r, c)),
            _ => domain(format!("{op} expects a matrix, got shape {:?}", self.shape)),
        }
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("tensor has at least one axis")
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols() + c]
    }

    pub fn row(&self, r: usize) -> Result<Self> {
        let (rows, cols) = self.dims2("row")?;
        if r >= rows {
            return domain(format!("row {r} out of range for {rows} rows"));
        }
        Ok(Self::vector(self.data[r * cols..(r + 1) * cols].to_vec()))
    }

    pub fn col(&self, c: usize) -> Result<Self> {
        let (rows, cols) = self.dims2("col")?;
        if c >= cols {
            return domain(format!("column {c} out of range for {cols} columns"));
        }
        Ok(Self::vector((0..rows).map(|r| self.data[r * cols + c]).collect()))
    }

    /// Stacks equally shaped vectors as the rows of a matrix.
    pub fn from_rows(rows: &[Tensor]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return domain("from_rows needs at least one row");
        };
        let cols = first.numel();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.numel() != cols {
                return dim_err("from_rows", first.shape(), r.shape());
            }
            data.extend_from_slice(&r.data);
        }
        Self::new(vec![rows.len(), cols], data)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2("transpose")?;
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = self.data[i * c + j];
            }
        }
        Self::new(vec![c, r], data)
    }

    pub fn matmul(&self, other: &Tensor) -> Result<Self> {
        let (m, k) = self.dims2("matmul")?;
        let (k2, n) = other.dims2("matmul")?;
        if k != k2 {
            return dim_err("matmul", &self.shape, &other.shape);
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &other.data, &mut out, m, k, n);
        Self::new(vec![m, n], out)
    }

    /// Matrix times vector.
    pub fn matvec(&self, v: &Tensor) -> Result<Self> {
        let (m, k) = self.dims2("matvec")?;
        if v.rank() != 1 || v.numel() != k {
            return dim_err("matvec", &self.shape, &v.shape);
        }
        let out = (0..m)
            .map(|i| dot_slices(&self.data[i * k..(i + 1) * k], &v.data))
            .collect();
        Ok(Self::vector(out))
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return dim_err(op, &self.shape, &other.shape);
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Tensor) -> Result<Self> {
        self.zip_with(other, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        if self.rank() != 1 || self.shape != other.shape {
            return dim_err("dot", &self.shape, &other.shape);
        }
        Ok(dot_slices(&self.data, &other.data))
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest absolute entry-wise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return dim_err("max_abs_diff", &self.shape, &other.shape);
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Numerically stable softmax of a vector.
    pub fn softmax_vec(&self) -> Result<Self> {
        if self.rank() != 1 {
            return domain(format!("softmax_vec expects a vector, got {:?}", self.shape));
        }
        Ok(Self::vector(softmax_slice(&self.data)))
    }

    /// Softmax applied independently along the last axis.
    pub fn softmax_last(&self) -> Self {
        let c = self.cols();
        let mut data = Vec::with_capacity(self.numel());
        for chunk in self.data.chunks(c) {
            data.extend(softmax_slice(chunk));
        }
        Self {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Index of the largest entry; ties resolve to the smallest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += a[m×k] · b[k×n]`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

pub(crate) fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
