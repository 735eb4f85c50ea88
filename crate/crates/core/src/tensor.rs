//! Convolution kernels, multichannel feature maps, and the three primitive
//! maps built on them: forward convolution, its adjoint, and the weight
//! gradient.
//!
//! Convolutions use unit stride and zero padding, and preserve the spatial
//! size. With `m = ceil(k/2)` (1-based) the output at `(r, s, c)` is
//!
//! ```text
//! y[r,s,c] = sum_d sum_p sum_q x[r-m+p, s-m+q, d] * k[p,q,d,c]
//! ```
//!
//! Storage is 0-based and column-major: for a [`Tensor3`] the row index
//! varies fastest, then the column, then the channel, which is exactly the
//! `vec` ordering of the transformation matrix. A [`Kernel4D`] is stored with
//! `p` fastest, then `q`, then input channel `z`, then output channel `y`.

use crate::error::{Error, Result};

/// Offset added to `output_index + tap_index` to get the input index.
///
/// Equals `1 - ceil(k/2)`; for even `k` the padding is asymmetric.
#[inline]
pub fn tap_offset(k: usize) -> isize {
    1 - k.div_ceil(2) as isize
}

/// A convolution kernel `K` of shape `k x k x g x h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel4D {
    k: usize,
    g: usize,
    h: usize,
    data: Vec<f64>,
}

impl Kernel4D {
    pub fn new(k: usize, g: usize, h: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || g == 0 || h == 0 {
            return Err(Error::InvalidDimension(format!(
                "kernel dimensions must be positive, got k={k} g={g} h={h}"
            )));
        }
        let expected = k * k * g * h;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                what: "kernel data",
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("kernel"));
        }
        Ok(Self { k, g, h, data })
    }

    /// Shape-checked but allows non-finite entries; for computed results
    /// whose finiteness the caller inspects.
    fn from_computed(k: usize, g: usize, h: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), k * k * g * h);
        Self { k, g, h, data }
    }

    pub fn zeros(k: usize, g: usize, h: usize) -> Result<Self> {
        Self::new(k, g, h, vec![0.0; k * k * g * h])
    }

    /// Kernel whose center tap connects input channel `i` to output channel
    /// `i` with weight 1. For `g == h` the induced operator is the identity.
    pub fn delta(k: usize, g: usize, h: usize) -> Result<Self> {
        let mut kernel = Self::zeros(k, g, h)?;
        let center = k.div_ceil(2) - 1;
        for c in 0..g.min(h) {
            let idx = kernel.index(center, center, c, c);
            kernel.data[idx] = 1.0;
        }
        Ok(kernel)
    }

    pub fn from_fn(
        k: usize,
        g: usize,
        h: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(k * k * g * h);
        for y in 0..h {
            for z in 0..g {
                for q in 0..k {
                    for p in 0..k {
                        data.push(f(p, q, z, y));
                    }
                }
            }
        }
        Self::new(k, g, h, data)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn in_channels(&self) -> usize {
        self.g
    }

    pub fn out_channels(&self) -> usize {
        self.h
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

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, p: usize, q: usize, z: usize, y: usize) -> usize {
        p + self.k * (q + self.k * (z + self.g * y))
    }

    /// Inverse of [`Kernel4D::index`].
    pub fn coords(&self, idx: usize) -> (usize, usize, usize, usize) {
        let p = idx % self.k;
        let rest = idx / self.k;
        let q = rest % self.k;
        let rest = rest / self.k;
        (p, q, rest % self.g, rest / self.g)
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, z: usize, y: usize) -> f64 {
        self.data[self.index(p, q, z, y)]
    }

    /// Returns a copy with the entry at linear index `idx` replaced.
    pub fn with_entry(&self, idx: usize, value: f64) -> Self {
        let mut out = self.clone();
        out.data[idx] = value;
        out
    }

    /// The `k x k` slice `K(:, :, z, y)` in column-major order.
    pub fn slice(&self, z: usize, y: usize) -> &[f64] {
        let start = self.index(0, 0, z, y);
        &self.data[start..start + self.k * self.k]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.k == other.k && self.g == other.g && self.h == other.h
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self - step * direction`, without the finiteness check of
    /// [`Kernel4D::new`] so that the caller can report where it failed.
    pub fn sub_scaled(&self, step: f64, direction: &Self) -> Self {
        assert!(self.same_shape(direction), "kernel shape mismatch");
        let data = self
            .data
            .iter()
            .zip(&direction.data)
            .map(|(a, b)| a - step * b)
            .collect();
        Self {
            k: self.k,
            g: self.g,
            h: self.h,
            data,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.sub_scaled(-1.0, other)
    }
}

/// A multichannel feature map `X` of shape `n x n x c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n: usize,
    c: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn new(n: usize, c: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || c == 0 {
            return Err(Error::InvalidDimension(format!(
                "tensor dimensions must be positive, got n={n} c={c}"
            )));
        }
        let expected = n * n * c;
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                what: "tensor data",
                expected,
                found: data.len(),
            });
        }
        Ok(Self { n, c, data })
    }

    pub fn zeros(n: usize, c: usize) -> Result<Self> {
        Self::new(n, c, vec![0.0; n * n * c])
    }

    pub fn from_fn(
        n: usize,
        c: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(n * n * c);
        for d in 0..c {
            for j in 0..n {
                for i in 0..n {
                    data.push(f(i, j, d));
                }
            }
        }
        Self::new(n, c, data)
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn channels(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, d: usize) -> usize {
        i + self.n * (j + self.n * d)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, d: usize) -> f64 {
        self.data[self.index(i, j, d)]
    }

    /// Zero-padded read with signed spatial indices.
    #[inline]
    fn get_padded(&self, i: isize, j: isize, d: usize) -> f64 {
        let n = self.n as isize;
        if i < 0 || j < 0 || i >= n || j >= n {
            0.0
        } else {
            self.get(i as usize, j as usize, d)
        }
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// One-channel convolution of an `n x n` matrix with a `k x k` kernel, both
/// column-major.
pub fn conv_single(kernel: &[f64], k: usize, x: &[f64], n: usize) -> Result<Vec<f64>> {
    let kernel = Kernel4D::new(k, 1, 1, kernel.to_vec())?;
    let x = Tensor3::new(n, 1, x.to_vec())?;
    Ok(conv_multi(&kernel, &x)?.into_data())
}

/// Multichannel convolution `Y = K * X`.
pub fn conv_multi(kernel: &Kernel4D, x: &Tensor3) -> Result<Tensor3> {
    if x.channels() != kernel.in_channels() {
        return Err(Error::ChannelMismatch {
            expected: kernel.in_channels(),
            found: x.channels(),
        });
    }
    let (k, g, h) = (kernel.k(), kernel.in_channels(), kernel.out_channels());
    let n = x.size();
    let off = tap_offset(k);
    let mut out = Vec::with_capacity(n * n * h);
    for c in 0..h {
        for s in 0..n {
            for r in 0..n {
                let mut acc = 0.0;
                for d in 0..g {
                    for p in 0..k {
                        let i = r as isize + p as isize + off;
                        for q in 0..k {
                            let j = s as isize + q as isize + off;
                            acc += x.get_padded(i, j, d) * kernel.get(p, q, d, c);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor3::new(n, h, out)
}

/// Adjoint of [`conv_multi`]: `vec(Z) = M^T vec(Y)` for `M = M(K)`.
pub fn conv_adjoint(kernel: &Kernel4D, y: &Tensor3) -> Result<Tensor3> {
    if y.channels() != kernel.out_channels() {
        return Err(Error::ChannelMismatch {
            expected: kernel.out_channels(),
            found: y.channels(),
        });
    }
    let (k, g, h) = (kernel.k(), kernel.in_channels(), kernel.out_channels());
    let n = y.size();
    let off = tap_offset(k);
    let mut out = Vec::with_capacity(n * n * g);
    for d in 0..g {
        for j in 0..n {
            for i in 0..n {
                let mut acc = 0.0;
                for c in 0..h {
                    for p in 0..k {
                        let r = i as isize - p as isize - off;
                        for q in 0..k {
                            let s = j as isize - q as isize - off;
                            acc += y.get_padded(r, s, c) * kernel.get(p, q, d, c);
                        }
                    }
                }
                out.push(acc);
            }
        }
    }
    Tensor3::new(n, g, out)
}

/// Gradient of the bilinear form `vec(U)^T M(K) vec(V)` with respect to the
/// kernel entries. `u` lives on the output side (`h` channels), `v` on the
/// input side (`g` channels). The result does not depend on `K`.
pub fn conv_weight_grad(u: &Tensor3, v: &Tensor3, k: usize) -> Result<Kernel4D> {
    if u.size() != v.size() {
        return Err(Error::SpatialMismatch {
            left: u.size(),
            right: v.size(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidDimension(
            "kernel size must be positive".into(),
        ));
    }
    let (g, h, n) = (v.channels(), u.channels(), u.size());
    let off = tap_offset(k);
    let mut data = Vec::with_capacity(k * k * g * h);
    for y in 0..h {
        for z in 0..g {
            for q in 0..k {
                for p in 0..k {
                    let mut acc = 0.0;
                    for s in 0..n {
                        let j = s as isize + q as isize + off;
                        for r in 0..n {
                            let i = r as isize + p as isize + off;
                            acc += u.get(r, s, y) * v.get_padded(i, j, z);
                        }
                    }
                    data.push(acc);
                }
            }
        }
    }
    Ok(Kernel4D::from_computed(k, g, h, data))
}
