//! Dense real tensors of arbitrary order.
//!
//! Storage is column-major: the first index varies fastest, so the linear
//! offset of `(i_1, ..., i_M)` (0-based) is `sum_k i_k * stride_k` with
//! `stride_1 = 1` and `stride_k = I_1 * ... * I_{k-1}`. Mode-m unfolding
//! places entry `(i_1, ..., i_M)` at row `i_m` and column
//! `j = sum_{k != m} i_k * J_k`, where `J_k` is the product of the dimensions
//! preceding `k` with dimension `m` skipped. Folding is the exact inverse, so
//! `fold(unfold(x, m), m, shape) == x` bitwise.

use std::io::{Read, Write};

use crate::error::{CoreError, Result};
use crate::prox::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(CoreError::ShapeMismatch(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        let expect: usize = shape.iter().product();
        if data.len() != expect {
            return Err(CoreError::ShapeMismatch(format!(
                "data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                expect
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.shape.len()];
        for k in 1..self.shape.len() {
            s[k] = s[k - 1] * self.shape[k - 1];
        }
        s
    }

    /// Linear offset of a 0-based multi-index.
    pub fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.shape.len());
        let mut off = 0;
        let mut stride = 1;
        for (k, &i) in idx.iter().enumerate() {
            debug_assert!(i < self.shape[k]);
            off += i * stride;
            stride *= self.shape[k];
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    /// Mode-m unfolding (0-based mode). Row index is `i_m`; the column index
    /// follows the `J_k` products of the remaining dimensions in order.
    pub fn unfold(&self, mode: usize) -> Result<Mat> {
        let order = self.order();
        if mode >= order {
            return Err(CoreError::ModeOutOfRange { mode, order });
        }
        let rows = self.shape[mode];
        let cols = self.len() / rows;
        let mut out = Mat::zeros(rows, cols);
        let mut idx = vec![0usize; order];
        for off in 0..self.len() {
            let mut j = 0usize;
            let mut jk = 1usize;
            for k in 0..order {
                if k != mode {
                    j += idx[k] * jk;
                    jk *= self.shape[k];
                }
            }
            out.set(idx[mode], j, self.data[off]);
            // advance the column-major multi-index
            for k in 0..order {
                idx[k] += 1;
                if idx[k] < self.shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(out)
    }

    /// Inverse of `unfold`: rebuilds the tensor of `shape` from its mode-m
    /// matricization.
    pub fn fold(mat: &Mat, mode: usize, shape: &[usize]) -> Result<Tensor> {
        let order = shape.len();
        if mode >= order {
            return Err(CoreError::ModeOutOfRange { mode, order });
        }
        let total: usize = shape.iter().product();
        if mat.rows() != shape[mode] || mat.rows() * mat.cols() != total {
            return Err(CoreError::DimensionMismatch(format!(
                "{}x{} matrix cannot fold into shape {:?} at mode {}",
                mat.rows(),
                mat.cols(),
                shape,
                mode
            )));
        }
        let mut out = Tensor::zeros(shape.to_vec());
        let mut idx = vec![0usize; order];
        for off in 0..total {
            let mut j = 0usize;
            let mut jk = 1usize;
            for k in 0..order {
                if k != mode {
                    j += idx[k] * jk;
                    jk *= shape[k];
                }
            }
            out.data[off] = mat.get(idx[mode], j);
            for k in 0..order {
                idx[k] += 1;
                if idx[k] < shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(out)
    }

    pub fn inner(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch(format!(
                "inner product of shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a * b)
            .sum())
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Sum of squared forward differences along every dimension. Differences
    /// that would step past the last index of a dimension are dropped.
    pub fn lttv(&self) -> f64 {
        let strides = self.strides();
        let mut acc = 0.0;
        for (d, &dim) in self.shape.iter().enumerate() {
            if dim < 2 {
                continue;
            }
            let stride = strides[d];
            for off in 0..self.len() {
                let id = (off / stride) % dim;
                if id + 1 < dim {
                    let diff = self.data[off + stride] - self.data[off];
                    acc += diff * diff;
                }
            }
        }
        acc
    }

    /// `self + c * other`, shapes must match.
    pub fn add_scaled(&mut self, c: f64, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch(format!(
                "add_scaled of shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for a in self.data.iter_mut() {
            *a *= c;
        }
    }

    /// Frobenius distance between two same-shaped tensors.
    pub fn distance(&self, other: &Tensor) -> Result<f64> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch(format!(
                "distance of shapes {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    // ── Serialization ───────────────────────────────────────────────────
    //
    // Layout: magic `TNS1`, u32 order, u64 dimension sizes, then the data
    // as little-endian f64 in the column-major order documented above.

    const MAGIC: [u8; 4] = *b"TNS1";

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&Self::MAGIC)?;
        w.write_all(&(self.order() as u32).to_le_bytes())?;
        for &d in &self.shape {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        for &v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Tensor> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != Self::MAGIC {
            return Err(CoreError::Parse("bad tensor file magic".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let order = u32::from_le_bytes(b4) as usize;
        if order == 0 || order > 16 {
            return Err(CoreError::Parse(format!("implausible tensor order {order}")));
        }
        let mut shape = Vec::with_capacity(order);
        let mut b8 = [0u8; 8];
        for _ in 0..order {
            r.read_exact(&mut b8)?;
            shape.push(u64::from_le_bytes(b8) as usize);
        }
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total);
        for _ in 0..total {
            r.read_exact(&mut b8)?;
            data.push(f64::from_le_bytes(b8));
        }
        Tensor::new(shape, data)
    }
}
