//! Dense complex matrices for channel bookkeeping.

use num_complex::Complex64;

use crate::error::{CoreError, Result};
use crate::prox::{jacobi_svd, Mat};

/// Row-major complex matrix; houses MIMO channel matrices and beamformed
/// amplitude tables.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::DimensionMismatch(format!(
                "complex matrix data length {} != {}x{}",
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

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    /// `self += gain * a * b^H` for column vectors `a` (rows) and `b` (cols).
    pub fn add_scaled_outer(&mut self, gain: Complex64, a: &[Complex64], b: &[Complex64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let ga = gain * ar;
            for (c, &bc) in b.iter().enumerate() {
                self.data[r * self.cols + c] += ga * bc.conj();
            }
        }
    }

    /// `w^H * self * f` for column vectors `w` (rows) and `f` (cols).
    pub fn quad_form(&self, w: &[Complex64], f: &[Complex64]) -> Complex64 {
        debug_assert_eq!(w.len(), self.rows);
        debug_assert_eq!(f.len(), self.cols);
        let mut acc = Complex64::new(0.0, 0.0);
        for (r, &wr) in w.iter().enumerate() {
            let mut row = Complex64::new(0.0, 0.0);
            for (c, &fc) in f.iter().enumerate() {
                row += self.data[r * self.cols + c] * fc;
            }
            acc += wr.conj() * row;
        }
        acc
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Squared spectral norm: the largest eigenvalue of the Gram matrix of
    /// the shorter side, computed exactly through the real embedding
    /// `[[Re, -Im], [Im, Re]]` whose singular values duplicate the complex
    /// ones.
    pub fn spectral_norm_sq(&self) -> f64 {
        let gram = if self.rows >= self.cols {
            self.gram_cols()
        } else {
            self.gram_rows()
        };
        let n = gram.cols;
        let mut emb = Mat::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                let z = gram.get(r, c);
                emb.set(r, c, z.re);
                emb.set(r, c + n, -z.im);
                emb.set(r + n, c, z.im);
                emb.set(r + n, c + n, z.re);
            }
        }
        let (_, sigma, _) = jacobi_svd(&emb);
        // Hermitian PSD Gram: sigma_max equals lambda_max = ||self||_2^2
        sigma.first().copied().unwrap_or(0.0)
    }

    /// `self^H * self` (cols x cols).
    fn gram_cols(&self) -> ComplexMatrix {
        let n = self.cols;
        let mut g = ComplexMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..self.rows {
                    acc += self.get(r, a).conj() * self.get(r, b);
                }
                g.set(a, b, acc);
            }
        }
        g
    }

    /// `self * self^H` (rows x rows).
    fn gram_rows(&self) -> ComplexMatrix {
        let n = self.rows;
        let mut g = ComplexMatrix::zeros(n, n);
        for a in 0..n {
            for b in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in 0..self.cols {
                    acc += self.get(a, c) * self.get(b, c).conj();
                }
                g.set(a, b, acc);
            }
        }
        g
    }
}
