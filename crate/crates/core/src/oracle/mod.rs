//! Brute-force ground truth: dense symmetric eigensolvers, singular values via
//! Gram matrices, and finite-difference gradients of the penalty.
//!
//! Nothing here touches the matrix-free path; every quantity is computed from
//! the materialized transformation matrix.

pub(crate) mod jacobi;
mod tridiag;

use crate::error::{Error, Result};
use crate::opmatrix::{materialize, DenseMatrix, SymmetricOperator};
use crate::tensor::Kernel4D;

/// Dense symmetric matrix, checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseSym {
    n: usize,
    entries: Vec<f64>,
}

impl DenseSym {
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(Error::LengthMismatch {
                what: "symmetric matrix entries",
                expected: n * n,
                found: entries.len(),
            });
        }
        let scale = entries.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i + 1..n {
                worst = worst.max((entries[i * n + j] - entries[j * n + i]).abs());
            }
        }
        if scale > 0.0 && worst > 1e-12 * scale {
            return Err(Error::NotSymmetric(worst / scale));
        }
        Ok(Self { n, entries })
    }

    pub fn from_dense(m: DenseMatrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::InvalidDimension(format!(
                "symmetric matrix must be square, got {}x{}",
                m.rows(),
                m.cols()
            )));
        }
        Self::new(m.rows(), m.data().to_vec())
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut entries = vec![0.0; n * n];
        for (i, v) in values.iter().enumerate() {
            entries[i * n + i] = *v;
        }
        Self { n, entries }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }
}

impl SymmetricOperator for DenseSym {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::LengthMismatch {
                what: "symmetric matvec input",
                expected: self.n,
                found: x.len(),
            });
        }
        Ok(self.matvec(x))
    }
}

/// Full eigendecomposition, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// `vectors[i]` is the unit eigenvector for `values[i]`.
    pub vectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn pairs(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.values
            .iter()
            .copied()
            .zip(self.vectors.iter().map(Vec::as_slice))
    }

    /// `max_i ||S v_i - lambda_i v_i||`.
    pub fn max_residual(&self, s: &DenseSym) -> f64 {
        self.pairs()
            .map(|(lambda, v)| {
                s.matvec(v)
                    .iter()
                    .zip(v)
                    .map(|(a, b)| (a - lambda * b).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Eigendecomposition by cyclic Jacobi. `tol` bounds the final off-diagonal
/// mass relative to `||S||_F`, which in turn bounds every residual.
pub fn eigh_dense(s: &DenseSym, tol: f64) -> Result<EigenDecomposition> {
    let n = s.dim();
    let mut work = s.entries.clone();
    let (values, v) = jacobi::cyclic_jacobi(&mut work, n, tol)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let vectors = order
        .iter()
        .map(|&col| (0..n).map(|row| v[row * n + col]).collect())
        .collect();
    Ok(EigenDecomposition {
        values: order.iter().map(|&i| values[i]).collect(),
        vectors,
    })
}

/// Eigenvalues only, descending, via tridiagonal reduction and QL.
pub fn eigvalsh(s: &DenseSym) -> Result<Vec<f64>> {
    let mut values = tridiag::symmetric_eigenvalues(s.entries.clone(), s.dim())?;
    values.reverse();
    Ok(values)
}

/// Singular values of `m`, descending, `min(rows, cols)` of them.
pub fn singvals_dense(m: &DenseMatrix) -> Result<Vec<f64>> {
    let gram = if m.rows() <= m.cols() {
        m.gram_rows()
    } else {
        m.gram_cols()
    };
    Ok(eigvalsh(&DenseSym::from_dense(gram)?)?
        .into_iter()
        .map(|v| v.max(0.0).sqrt())
        .collect())
}

/// Exact spectrum of `M^T M` for a kernel, obtained from whichever Gram
/// matrix is smaller. The `gN^2 - hN^2` structural zeros (when `h < g`) are
/// carried as a count instead of being diagonalized.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    /// Eigenvalues of the smaller Gram matrix, descending.
    pub small: Vec<f64>,
    /// Extra zero eigenvalues of `M^T M`.
    pub zero_count: usize,
}

impl GramSpectrum {
    pub fn of_kernel(kernel: &Kernel4D, n: usize) -> Result<Self> {
        let m = materialize(kernel, n)?;
        let (gram, zero_count) = if m.rows() < m.cols() {
            (m.gram_rows(), m.cols() - m.rows())
        } else {
            (m.gram_cols(), 0)
        };
        Ok(Self {
            small: eigvalsh(&DenseSym::from_dense(gram)?)?,
            zero_count,
        })
    }

    pub fn sigma_max(&self) -> f64 {
        self.small.first().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    pub fn sigma_min(&self) -> f64 {
        self.small.last().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// The two largest `|lambda|` of `M^T M - alpha I`, descending.
    pub fn top2_abs_shifted(&self, alpha: f64) -> (f64, f64) {
        let mut best = (0.0_f64, 0.0_f64);
        let mut push = |v: f64| {
            if v > best.0 {
                best = (v, best.0);
            } else if v > best.1 {
                best.1 = v;
            }
        };
        for &lambda in &self.small {
            push((lambda - alpha).abs());
        }
        for _ in 0..self.zero_count.min(2) {
            push(alpha);
        }
        best
    }

    /// `max |lambda(M^T M - alpha I)|`.
    pub fn penalty(&self, alpha: f64) -> f64 {
        self.top2_abs_shifted(alpha).0
    }
}

/// Penalty evaluated entirely on the dense path.
pub fn penalty_dense(kernel: &Kernel4D, n: usize, alpha: f64) -> Result<f64> {
    Ok(GramSpectrum::of_kernel(kernel, n)?.penalty(alpha))
}

/// Central finite differences of [`penalty_dense`] in every kernel entry.
pub fn fd_grad(kernel: &Kernel4D, n: usize, alpha: f64, step: f64) -> Result<Kernel4D> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let mut grad = Vec::with_capacity(kernel.len());
    for idx in 0..kernel.len() {
        let base = kernel.data()[idx];
        let plus = penalty_dense(&kernel.with_entry(idx, base + step), n, alpha)?;
        let minus = penalty_dense(&kernel.with_entry(idx, base - step), n, alpha)?;
        grad.push((plus - minus) / (2.0 * step));
    }
    Kernel4D::new(
        kernel.k(),
        kernel.in_channels(),
        kernel.out_channels(),
        grad,
    )
}
