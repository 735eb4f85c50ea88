//! The transformation matrix `M = M(K)` of a convolution kernel.
//!
//! `vec` stacks columns within a channel and channels outermost, so the
//! 0-based linear index of `(i, j, d)` is `i + j*N + d*N^2`. Row indices of
//! `M` use this map on the output tensor (`h` channels) and column indices on
//! the input tensor (`g` channels); `M` is `hN^2 x gN^2`.
//!
//! [`materialize`] and [`omega_enumerate`] build the dense matrix and the
//! per-entry placement sets for the oracle path. [`GramOperator`] applies
//! `M^T M - alpha I` through two convolution passes without forming anything.

use crate::error::{Error, Result};
use crate::tensor::{conv_adjoint, conv_multi, tap_offset, Kernel4D, Tensor3};

/// Largest number of entries [`materialize`] will allocate.
pub const DENSE_CAP: usize = 10_000_000;

/// Bijection between tensor coordinates `(i, j, d)` and `vec` positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VecIndexMap {
    pub n: usize,
    pub c: usize,
}

impl VecIndexMap {
    pub fn new(n: usize, c: usize) -> Self {
        Self { n, c }
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear(&self, i: usize, j: usize, d: usize) -> usize {
        i + self.n * (j + self.n * d)
    }

    #[inline]
    pub fn coords(&self, l: usize) -> (usize, usize, usize) {
        let nn = self.n * self.n;
        (l % self.n, (l % nn) / self.n, l / nn)
    }
}

/// `vec(X)`. The storage order of [`Tensor3`] already is the `vec` order.
pub fn vec(x: &Tensor3) -> Vec<f64> {
    x.data().to_vec()
}

pub fn unvec(x: &[f64], n: usize, c: usize) -> Result<Tensor3> {
    Tensor3::new(n, c, x.to_vec())
}

/// Row-major dense matrix used by the oracle path.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "dense matrix data",
                expected: rows * cols,
                found: data.len(),
            });
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
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::LengthMismatch {
                what: "matvec input",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok((0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect())
    }

    pub fn transpose_matvec(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.rows {
            return Err(Error::LengthMismatch {
                what: "transposed matvec input",
                expected: self.rows,
                found: y.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (i, &yi) in y.iter().enumerate() {
            if yi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a * yi;
            }
        }
        Ok(out)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// `M^T M` (columns side), skipping structural zeros row by row.
    pub fn gram_cols(&self) -> DenseMatrix {
        let mut out = Self::zeros(self.cols, self.cols);
        let mut nz = Vec::new();
        for i in 0..self.rows {
            nz.clear();
            nz.extend(
                self.row(i)
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v)),
            );
            for &(a, va) in &nz {
                for &(b, vb) in &nz {
                    out.data[a * self.cols + b] += va * vb;
                }
            }
        }
        out
    }

    /// `M M^T` (rows side).
    pub fn gram_rows(&self) -> DenseMatrix {
        self.transpose().gram_cols()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn check_cap(rows: usize, cols: usize) -> Result<()> {
    match rows.checked_mul(cols) {
        Some(total) if total <= DENSE_CAP => Ok(()),
        _ => Err(Error::DenseCapExceeded {
            rows,
            cols,
            cap: DENSE_CAP,
        }),
    }
}

/// Visits every structural placement `(kernel index, row, col)` of `M(K)`.
fn for_each_placement(
    k: usize,
    g: usize,
    h: usize,
    n: usize,
    mut f: impl FnMut(usize, usize, usize),
) {
    let off = tap_offset(k);
    let rows = VecIndexMap::new(n, h);
    let cols = VecIndexMap::new(n, g);
    let ni = n as isize;
    for y in 0..h {
        for z in 0..g {
            for q in 0..k {
                for p in 0..k {
                    let key = p + k * (q + k * (z + g * y));
                    for s in 0..n {
                        let j = s as isize + q as isize + off;
                        if j < 0 || j >= ni {
                            continue;
                        }
                        for r in 0..n {
                            let i = r as isize + p as isize + off;
                            if i < 0 || i >= ni {
                                continue;
                            }
                            f(
                                key,
                                rows.linear(r, s, y),
                                cols.linear(i as usize, j as usize, z),
                            );
                        }
                    }
                }
            }
        }
    }
}

/// Dense `hN^2 x gN^2` transformation matrix with `vec(K*X) = M vec(X)`.
pub fn materialize(kernel: &Kernel4D, n: usize) -> Result<DenseMatrix> {
    let (k, g, h) = (kernel.k(), kernel.in_channels(), kernel.out_channels());
    let rows = h * n * n;
    let cols = g * n * n;
    check_cap(rows, cols)?;
    let mut m = DenseMatrix::zeros(rows, cols);
    let values = kernel.data();
    for_each_placement(k, g, h, n, |key, i, j| m.set(i, j, values[key]));
    Ok(m)
}

/// Positions of `M` occupied by one kernel entry. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OmegaSet {
    pub key: (usize, usize, usize, usize),
    pub entries: Vec<(usize, usize)>,
}

/// One [`OmegaSet`] per kernel entry, in kernel storage order.
pub fn omega_enumerate(k: usize, g: usize, h: usize, n: usize) -> Vec<OmegaSet> {
    let mut sets: Vec<OmegaSet> = Vec::with_capacity(k * k * g * h);
    for y in 0..h {
        for z in 0..g {
            for q in 0..k {
                for p in 0..k {
                    sets.push(OmegaSet {
                        key: (p, q, z, y),
                        entries: Vec::new(),
                    });
                }
            }
        }
    }
    for_each_placement(k, g, h, n, |key, i, j| sets[key].entries.push((i, j)));
    sets
}

/// A symmetric linear map given only by its action.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>>;
}

/// The implicit operator `x -> M^T M x - alpha x`.
#[derive(Debug, Clone)]
pub struct GramOperator {
    kernel: Kernel4D,
    n: usize,
    alpha: f64,
}

impl GramOperator {
    pub fn new(kernel: Kernel4D, n: usize, alpha: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension(
                "input size N must be positive".into(),
            ));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be finite and non-negative, got {alpha}"
            )));
        }
        Ok(Self { kernel, n, alpha })
    }

    pub fn kernel(&self) -> &Kernel4D {
        &self.kernel
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::LengthMismatch {
                what: "Gram operator input",
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `M x` as an output-side tensor (`h` channels).
    pub fn forward(&self, x: &[f64]) -> Result<Tensor3> {
        self.check_len(x)?;
        conv_multi(&self.kernel, &unvec(x, self.n, self.kernel.in_channels())?)
    }

    /// Dense `M^T M - alpha I`, for oracle comparisons.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let m = materialize(&self.kernel, self.n)?;
        let mut a = m.gram_cols();
        for i in 0..a.rows() {
            let v = a.get(i, i) - self.alpha;
            a.set(i, i, v);
        }
        Ok(a)
    }
}

impl SymmetricOperator for GramOperator {
    fn dim(&self) -> usize {
        self.n * self.n * self.kernel.in_channels()
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.forward(x)?;
        let z = conv_adjoint(&self.kernel, &y)?;
        Ok(z.into_data()
            .into_iter()
            .zip(x)
            .map(|(a, b)| a - self.alpha * b)
            .collect())
    }
}

impl SymmetricOperator for DenseMatrix {
    fn dim(&self) -> usize {
        self.rows
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.matvec(x)
    }
}
