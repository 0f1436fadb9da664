//! Numerical kernels for the completion solver: dense matrices with a
//! one-sided Jacobi SVD, singular-value soft-thresholding, and the sparse
//! symmetric positive-definite operator behind the smoothness subproblem.

use crate::error::{CoreError, Result};

/// Dense real matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::DimensionMismatch(format!(
                "matrix data length {} != {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn transpose(&self) -> Mat {
        let mut out = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c));
            }
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &Mat) -> Result<Mat> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(CoreError::DimensionMismatch("matrix subtraction".into()));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a - b)
            .collect();
        Ok(Mat {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }
}

// ── SVD ─────────────────────────────────────────────────────────────────────

/// Full SVD via one-sided Jacobi rotations. Returns `(u, sigma, v)` with
/// `k = min(rows, cols)` columns each and `sigma` sorted descending, so that
/// `a = u * diag(sigma) * v^T`.
pub fn jacobi_svd(a: &Mat) -> (Mat, Vec<f64>, Mat) {
    if a.rows() < a.cols() {
        let (u, s, v) = jacobi_svd(&a.transpose());
        return (v, s, u);
    }
    let m = a.rows();
    let n = a.cols();

    // Work on columns of A; V accumulates the right rotations.
    let mut g: Vec<Vec<f64>> = (0..n).map(|c| (0..m).map(|r| a.get(r, c)).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|c| (0..n).map(|r| if r == c { 1.0 } else { 0.0 }).collect())
        .collect();

    let eps = 1e-15;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut changed = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let app: f64 = g[p].iter().map(|x| x * x).sum();
                let aqq: f64 = g[q].iter().map(|x| x * x).sum();
                let apq: f64 = g[p].iter().zip(g[q].iter()).map(|(x, y)| x * y).sum();
                if apq.abs() <= eps * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                changed = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for r in 0..m {
                    let gp = g[p][r];
                    let gq = g[q][r];
                    g[p][r] = cs * gp - sn * gq;
                    g[q][r] = sn * gp + cs * gq;
                }
                for r in 0..n {
                    let vp = v[p][r];
                    let vq = v[q][r];
                    v[p][r] = cs * vp - sn * vq;
                    v[q][r] = sn * vp + cs * vq;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let mut sigma: Vec<f64> = g
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap());

    let mut u = Mat::zeros(m, n);
    let mut vm = Mat::zeros(n, n);
    let mut sorted = vec![0.0; n];
    for (slot, &src) in order.iter().enumerate() {
        sorted[slot] = sigma[src];
        if sigma[src] > 0.0 {
            let inv = 1.0 / sigma[src];
            for r in 0..m {
                u.set(r, slot, g[src][r] * inv);
            }
        }
        for r in 0..n {
            vm.set(r, slot, v[src][r]);
        }
    }
    sigma.copy_from_slice(&sorted);
    (u, sigma, vm)
}

/// Number of singular values above `1e-12 * sigma_max`; used for rank
/// diagnostics only.
pub fn effective_rank(sigma: &[f64]) -> usize {
    let smax = sigma.iter().cloned().fold(0.0f64, f64::max);
    if smax <= 0.0 {
        return 0;
    }
    sigma.iter().filter(|&&s| s > 1e-12 * smax).count()
}

/// Singular-value soft-thresholding: shrinks every singular value by `tau`,
/// flooring at zero, keeping the singular vectors. The result is the unique
/// minimizer of `tau * ||X||_* + 0.5 * ||X - A||_F^2`.
pub fn svt(a: &Mat, tau: f64) -> Mat {
    assert!(tau >= 0.0, "soft threshold must be non-negative");
    if tau == 0.0 {
        return a.clone();
    }
    let (u, sigma, v) = jacobi_svd(a);
    let mut out = Mat::zeros(a.rows(), a.cols());
    for (idx, &s) in sigma.iter().enumerate() {
        let shrunk = (s - tau).max(0.0);
        if shrunk == 0.0 {
            continue;
        }
        for r in 0..a.rows() {
            let us = u.get(r, idx) * shrunk;
            if us == 0.0 {
                continue;
            }
            for c in 0..a.cols() {
                out.data[r * a.cols() + c] += us * v.get(c, idx);
            }
        }
    }
    out
}

/// Nuclear norm (sum of singular values).
pub fn nuclear_norm(a: &Mat) -> f64 {
    jacobi_svd(a).1.iter().sum()
}

// ── Grid smoothness operator ────────────────────────────────────────────────

/// Symmetric positive-definite operator for the per-beam smoothness solve.
///
/// Row `i` of the base matrix has diagonal `n2 * lambda + 2 * gamma * deg(i)`
/// where `deg(i)` counts in-range axis neighbors of grid point `i`, and
/// off-diagonal `-2 * gamma` at each such neighbor. `diag_add` carries the
/// per-row data-fit augmentation (the `2 * mu * W` term), zero by default.
#[derive(Debug, Clone)]
pub struct SpdOperator {
    grid_shape: Vec<usize>,
    n: usize,
    diag_base: Vec<f64>,
    adj_offsets: Vec<usize>,
    adj_cols: Vec<u32>,
    gamma: f64,
    diag_add: Vec<f64>,
}

/// Dense Cholesky factor of `base + diag(diag_add)`.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    n: usize,
    lower: Vec<f64>,
}

/// Relative residual bound every solve must satisfy.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

pub fn build_a_operator(
    grid_shape: &[usize],
    n2: usize,
    lambda: f64,
    gamma: f64,
) -> Result<SpdOperator> {
    if lambda <= 0.0 {
        return Err(CoreError::InvalidConfig(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if gamma < 0.0 {
        return Err(CoreError::InvalidConfig(format!(
            "gamma must be non-negative, got {gamma}"
        )));
    }
    if grid_shape.is_empty() || grid_shape.iter().any(|&d| d == 0) {
        return Err(CoreError::InvalidConfig(format!(
            "grid shape {grid_shape:?} must be non-empty with positive dims"
        )));
    }
    let n: usize = grid_shape.iter().product();
    let mut strides = vec![1usize; grid_shape.len()];
    for k in 1..grid_shape.len() {
        strides[k] = strides[k - 1] * grid_shape[k - 1];
    }

    let mut diag_base = vec![0.0; n];
    let mut adj_offsets = Vec::with_capacity(n + 1);
    let mut adj_cols = Vec::new();
    adj_offsets.push(0);
    for i in 0..n {
        let mut deg = 0usize;
        for (d, &dim) in grid_shape.iter().enumerate() {
            let id = (i / strides[d]) % dim;
            if id > 0 {
                adj_cols.push((i - strides[d]) as u32);
                deg += 1;
            }
            if id + 1 < dim {
                adj_cols.push((i + strides[d]) as u32);
                deg += 1;
            }
        }
        diag_base[i] = n2 as f64 * lambda + 2.0 * gamma * deg as f64;
        adj_offsets.push(adj_cols.len());
    }

    Ok(SpdOperator {
        grid_shape: grid_shape.to_vec(),
        n,
        diag_base,
        adj_offsets,
        adj_cols,
        gamma,
        diag_add: vec![0.0; n],
    })
}

impl SpdOperator {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid_shape(&self) -> &[usize] {
        &self.grid_shape
    }

    /// Replace the per-row diagonal augmentation.
    pub fn set_diag_add(&mut self, diag_add: &[f64]) -> Result<()> {
        if diag_add.len() != self.n {
            return Err(CoreError::DimensionMismatch(format!(
                "diag_add length {} != {}",
                diag_add.len(),
                self.n
            )));
        }
        if diag_add.iter().any(|&v| v < 0.0) {
            return Err(CoreError::InvalidConfig(
                "diag_add entries must be non-negative".into(),
            ));
        }
        self.diag_add.copy_from_slice(diag_add);
        Ok(())
    }

    pub fn clear_diag_add(&mut self) {
        self.diag_add.iter_mut().for_each(|v| *v = 0.0);
    }

    /// `(base + diag(diag_add)) * x`.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let mut acc = (self.diag_base[i] + self.diag_add[i]) * x[i];
            for k in self.adj_offsets[i]..self.adj_offsets[i + 1] {
                acc -= 2.0 * self.gamma * x[self.adj_cols[k] as usize];
            }
            y[i] = acc;
        }
        y
    }

    /// Dense row of the operator, for oracle-style assembly in tests.
    pub fn dense_row(&self, i: usize) -> Vec<f64> {
        let mut row = vec![0.0; self.n];
        row[i] = self.diag_base[i] + self.diag_add[i];
        for k in self.adj_offsets[i]..self.adj_offsets[i + 1] {
            row[self.adj_cols[k] as usize] = -2.0 * self.gamma;
        }
        row
    }

    pub fn factorize(&self) -> Result<SpdFactor> {
        let n = self.n;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            a[i * n + i] = self.diag_base[i] + self.diag_add[i];
            for k in self.adj_offsets[i]..self.adj_offsets[i + 1] {
                a[i * n + self.adj_cols[k] as usize] = -2.0 * self.gamma;
            }
        }
        // in-place lower Cholesky
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                let l = a[j * n + k];
                d -= l * l;
            }
            if d <= 0.0 {
                return Err(CoreError::NotPositiveDefinite);
            }
            let d = d.sqrt();
            a[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= a[i * n + k] * a[j * n + k];
                }
                a[i * n + j] = s / d;
            }
        }
        // zero the strict upper triangle for cleanliness
        for i in 0..n {
            for j in (i + 1)..n {
                a[i * n + j] = 0.0;
            }
        }
        Ok(SpdFactor { n, lower: a })
    }

    /// Solve `(base + diag(diag_add)) x = rhs` with a fresh factorization.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let factor = self.factorize()?;
        self.solve_with(&factor, rhs)
    }

    /// Solve against a previously computed factor of the current operator.
    /// Every solve is verified against the relative-residual contract.
    pub fn solve_with(&self, factor: &SpdFactor, rhs: &[f64]) -> Result<Vec<f64>> {
        if rhs.len() != self.n {
            return Err(CoreError::DimensionMismatch(format!(
                "rhs length {} != {}",
                rhs.len(),
                self.n
            )));
        }
        let rhs_norm = rhs.iter().map(|x| x * x).sum::<f64>().sqrt();
        if rhs_norm == 0.0 {
            return Ok(vec![0.0; self.n]);
        }
        let x = factor.solve_raw(rhs);
        let ax = self.matvec(&x);
        let residual = ax
            .iter()
            .zip(rhs.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
            / rhs_norm;
        if residual > SOLVE_RESIDUAL_TOL {
            return Err(CoreError::SolveResidual {
                residual,
                tol: SOLVE_RESIDUAL_TOL,
            });
        }
        Ok(x)
    }
}

impl SpdFactor {
    /// Forward/backward substitution, no residual check.
    fn solve_raw(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.n;
        let l = &self.lower;
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }
}
