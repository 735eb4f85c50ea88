//! Extremal spectra of the shifted Gram operator `A = M^T M - alpha I`.
//!
//! The fast path tracks the two eigenpairs of `A` largest in magnitude with a
//! block-2 subspace iteration (power steps on a two-column basis, then
//! Rayleigh-Ritz in that plane), warm-started by a wider guarded block. Because `A` is symmetric, its dominant
//! singular triple is `(|lambda|, sign(lambda) v, v)`. Ranking the Ritz pairs
//! by `|lambda|` after every refresh is what keeps the dominant pair from
//! being silently overtaken by the runner-up.
//!
//! The oracle path ([`spectrum_summary`]) goes through the dense matrix.

use crate::error::{Error, Result};
use crate::opmatrix::SymmetricOperator;
use crate::oracle::jacobi::cyclic_jacobi;
use crate::oracle::GramSpectrum;
use crate::rng::SplitMix64;
use crate::tensor::Kernel4D;

/// Relative gap below which the dominant singular value is treated as
/// non-simple.
pub const GAP_TOLERANCE: f64 = 1e-8;

pub const DEFAULT_INIT_TOL: f64 = 1e-8;
pub const DEFAULT_INIT_MAXIT: usize = 1000;
pub const DEFAULT_REFINE_ITERS: usize = 2;

/// Eigenpair estimate of the symmetric operator `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    pub v: Vec<f64>,
    /// `||A v - lambda v||`.
    pub residual: f64,
}

impl EigenPair {
    /// Singular value of `A` carried by this pair.
    pub fn sigma(&self) -> f64 {
        self.lambda.abs()
    }

    pub fn sign(&self) -> f64 {
        if self.lambda < 0.0 {
            -1.0
        } else {
            1.0
        }
    }

    /// Left singular vector `u = sign(lambda) v`.
    pub fn u(&self) -> Vec<f64> {
        let s = self.sign();
        self.v.iter().map(|x| s * x).collect()
    }
}

/// The two tracked pairs, ranked `|first.lambda| >= |second.lambda|`.
#[derive(Debug, Clone, PartialEq)]
pub struct Top2 {
    pub first: EigenPair,
    pub second: EigenPair,
    pub iterations: usize,
    pub converged: bool,
}

impl Top2 {
    pub fn dominant(&self) -> &EigenPair {
        &self.first
    }

    /// `|lambda_1| - |lambda_2|`.
    pub fn gap(&self) -> f64 {
        self.first.sigma() - self.second.sigma()
    }

    pub fn is_degenerate(&self) -> bool {
        self.gap() < GAP_TOLERANCE * self.first.sigma()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(x: &mut [f64], s: f64) {
    x.iter_mut().for_each(|v| *v *= s);
}

/// Orthonormalizes `[a, b]` in place with two rounds of Gram-Schmidt.
/// Collapsed columns are replaced by deterministic pseudo-random directions.
/// Returns false when `a` itself vanished (the basis was left untouched).
fn orthonormalize(a: &mut Vec<f64>, b: &mut Vec<f64>, fallback: &[Vec<f64>; 2]) -> bool {
    let na = norm(a);
    if !(na > 0.0 && na.is_finite()) {
        a.clone_from(&fallback[0]);
        b.clone_from(&fallback[1]);
        return false;
    }
    scale(a, 1.0 / na);
    let nb0 = norm(b);
    for _ in 0..2 {
        let c = dot(a, b);
        axpy(b, -c, a);
    }
    let nb = norm(b);
    if !(nb > 1e-12 * nb0.max(f64::MIN_POSITIVE) && nb.is_finite()) {
        let mut rng = SplitMix64::new(0x5EED_u64 ^ b.len() as u64);
        *b = rng.fill_signed(a.len());
        for _ in 0..2 {
            let c = dot(a, b);
            axpy(b, -c, a);
        }
        let nb = norm(b);
        scale(b, 1.0 / nb);
    } else {
        scale(b, 1.0 / nb);
    }
    true
}

/// Rayleigh-Ritz in the plane spanned by the orthonormal `basis`.
/// Returns ranked pairs plus `A x` for each Ritz vector.
fn rayleigh_ritz<O: SymmetricOperator + ?Sized>(
    op: &O,
    basis: &[Vec<f64>; 2],
) -> Result<([EigenPair; 2], [Vec<f64>; 2])> {
    let w0 = op.apply(&basis[0])?;
    let w1 = op.apply(&basis[1])?;
    let h00 = dot(&basis[0], &w0);
    let h11 = dot(&basis[1], &w1);
    let h01 = 0.5 * (dot(&basis[0], &w1) + dot(&basis[1], &w0));

    // One Jacobi rotation diagonalizes the 2x2 projection.
    let (c, s, l0, l1) = if h01.abs() <= f64::MIN_POSITIVE {
        (1.0, 0.0, h00, h11)
    } else {
        let theta = (h11 - h00) / (2.0 * h01);
        let t = if theta.abs() > 1e150 {
            0.5 / theta
        } else {
            theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
        };
        let c = 1.0 / (t * t + 1.0).sqrt();
        (c, t * c, h00 - t * h01, h11 + t * h01)
    };
    let combine = |ca: f64, a: &[f64], cb: f64, b: &[f64]| -> Vec<f64> {
        a.iter().zip(b).map(|(x, y)| ca * x + cb * y).collect()
    };
    let x0 = combine(c, &basis[0], -s, &basis[1]);
    let x1 = combine(s, &basis[0], c, &basis[1]);
    let ax0 = combine(c, &w0, -s, &w1);
    let ax1 = combine(s, &w0, c, &w1);

    let residual = |ax: &[f64], x: &[f64], l: f64| -> f64 {
        ax.iter()
            .zip(x)
            .map(|(a, b)| (a - l * b).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let p0 = EigenPair {
        lambda: l0,
        residual: residual(&ax0, &x0, l0),
        v: x0,
    };
    let p1 = EigenPair {
        lambda: l1,
        residual: residual(&ax1, &x1, l1),
        v: x1,
    };
    if p1.sigma() > p0.sigma() {
        Ok(([p1, p0], [ax1, ax0]))
    } else {
        Ok(([p0, p1], [ax0, ax1]))
    }
}

/// Flips each Ritz vector so that it points along the reference vector it
/// overlaps most.
fn align_signs(pairs: &mut [EigenPair; 2], images: &mut [Vec<f64>; 2], reference: &[Vec<f64>; 2]) {
    for (pair, image) in pairs.iter_mut().zip(images.iter_mut()) {
        let d0 = dot(&pair.v, &reference[0]);
        let d1 = dot(&pair.v, &reference[1]);
        let d = if d0.abs() >= d1.abs() { d0 } else { d1 };
        if d < 0.0 {
            scale(&mut pair.v, -1.0);
            scale(image, -1.0);
        }
    }
}

/// Extra basis columns carried by [`top2_init`]. They only speed up
/// convergence: the rate is governed by `|lambda_{2+GUARD+1}| / |lambda_2|`
/// instead of `|lambda_3| / |lambda_2|`.
const GUARD_COLUMNS: usize = 6;

/// Modified Gram-Schmidt, applied twice. Columns that collapse are replaced
/// by seeded random directions and re-orthogonalized.
fn orthonormalize_block(cols: &mut [Vec<f64>], rng: &mut SplitMix64) {
    for j in 0..cols.len() {
        let (done, rest) = cols.split_at_mut(j);
        let col = &mut rest[0];
        let mut original = norm(col);
        for attempt in 0..3 {
            for _ in 0..2 {
                for q in done.iter() {
                    let c = dot(q, col);
                    axpy(col, -c, q);
                }
            }
            let nrm = norm(col);
            if nrm > 1e-12 * original.max(f64::MIN_POSITIVE) && nrm.is_finite() {
                scale(col, 1.0 / nrm);
                break;
            }
            assert!(attempt < 2, "could not complete an orthonormal basis");
            *col = rng.fill_signed(col.len());
            original = norm(col);
        }
    }
}

/// Ritz pairs of the block, ranked by `|lambda|`, plus `A x` for each.
fn block_rayleigh_ritz<O: SymmetricOperator + ?Sized>(
    op: &O,
    basis: &[Vec<f64>],
) -> Result<(Vec<EigenPair>, Vec<Vec<f64>>)> {
    let p = basis.len();
    let images = basis
        .iter()
        .map(|x| op.apply(x))
        .collect::<Result<Vec<_>>>()?;
    let mut h = vec![0.0; p * p];
    for i in 0..p {
        for j in i..p {
            let v = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
            h[i * p + j] = v;
            h[j * p + i] = v;
        }
    }
    let (values, y) = cyclic_jacobi(&mut h, p, 1e-15)?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()));

    let dim = basis[0].len();
    let mut pairs = Vec::with_capacity(p);
    let mut ritz_images = Vec::with_capacity(p);
    for &c in &order {
        let mut x = vec![0.0; dim];
        let mut ax = vec![0.0; dim];
        for r in 0..p {
            axpy(&mut x, y[r * p + c], &basis[r]);
            axpy(&mut ax, y[r * p + c], &images[r]);
        }
        let lambda = values[c];
        let residual = ax
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        pairs.push(EigenPair {
            lambda,
            v: x,
            residual,
        });
        ritz_images.push(ax);
    }
    Ok((pairs, ritz_images))
}

/// Computes the two eigenpairs of `op` largest in magnitude from a seeded
/// random start, iterating until both residuals are at most
/// `tol * |lambda_1|` or `maxit` iterations have run.
///
/// This is the cold start; it carries a few guard columns beyond the two
/// pairs it returns. The per-step tracker is [`top2_refine`].
pub fn top2_init<O: SymmetricOperator + ?Sized>(
    op: &O,
    tol: f64,
    maxit: usize,
    seed: u64,
) -> Result<Top2> {
    let dim = op.dim();
    if dim < 2 {
        return Err(Error::DimensionTooSmall(dim));
    }
    let width = (2 + GUARD_COLUMNS).min(dim);
    let mut rng = SplitMix64::new(seed);
    let mut basis: Vec<Vec<f64>> = (0..width).map(|_| rng.fill_signed(dim)).collect();
    orthonormalize_block(&mut basis, &mut rng);
    let (mut pairs, mut images) = block_rayleigh_ritz(op, &basis)?;
    let mut iterations = 0;
    loop {
        let threshold = tol * pairs[0].sigma();
        let converged = pairs[..2].iter().all(|p| p.residual <= threshold);
        if converged || iterations >= maxit {
            let mut it = pairs.into_iter();
            return Ok(Top2 {
                first: it.next().expect("two pairs"),
                second: it.next().expect("two pairs"),
                iterations,
                converged,
            });
        }
        if pairs[0].sigma() == 0.0 {
            // A annihilates the whole block: every Ritz value is exactly zero.
            let mut it = pairs.into_iter();
            return Ok(Top2 {
                first: it.next().expect("two pairs"),
                second: it.next().expect("two pairs"),
                iterations,
                converged: true,
            });
        }
        let reference = [pairs[0].v.clone(), pairs[1].v.clone()];
        basis = images;
        orthonormalize_block(&mut basis, &mut rng);
        let (mut p, mut im) = block_rayleigh_ritz(op, &basis)?;
        for (pair, image) in p.iter_mut().zip(im.iter_mut()) {
            let d0 = dot(&pair.v, &reference[0]);
            let d1 = dot(&pair.v, &reference[1]);
            if (if d0.abs() >= d1.abs() { d0 } else { d1 }) < 0.0 {
                scale(&mut pair.v, -1.0);
                scale(image, -1.0);
            }
        }
        pairs = p;
        images = im;
        iterations += 1;
    }
}

/// Runs `iters` power steps of the same block iteration from the given
/// pairs and re-extracts ranked Ritz pairs. The input is not modified.
pub fn top2_refine<O: SymmetricOperator + ?Sized>(
    op: &O,
    pairs: &Top2,
    iters: usize,
) -> Result<Top2> {
    let reference = [pairs.first.v.clone(), pairs.second.v.clone()];
    let mut a = reference[0].clone();
    let mut b = reference[1].clone();
    orthonormalize(&mut a, &mut b, &reference);
    for _ in 0..iters {
        let fallback = [a.clone(), b.clone()];
        let mut na = op.apply(&a)?;
        let mut nb = op.apply(&b)?;
        if !orthonormalize(&mut na, &mut nb, &fallback) {
            break;
        }
        a = na;
        b = nb;
    }
    let (mut ranked, mut images) = rayleigh_ritz(op, &[a, b])?;
    align_signs(&mut ranked, &mut images, &reference);
    let [first, second] = ranked;
    Ok(Top2 {
        first,
        second,
        iterations: pairs.iterations + iters,
        converged: pairs.converged,
    })
}

/// Oracle spectrum of a kernel's transformation matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumSummary {
    pub sigma_max_m: f64,
    pub sigma_min_m: f64,
    /// `sigma_max / sigma_min`, or `+inf` when `sigma_min == 0`.
    pub kappa: f64,
    /// `sigma_max(M^T M - alpha I)`.
    pub penalty: f64,
    /// `|lambda_1| - |lambda_2|` of `M^T M - alpha I`.
    pub gap: f64,
}

/// Singular values of `M` are taken over the smaller side, so `sigma_min` is
/// the `min(hN^2, gN^2)`-th singular value.
pub fn spectrum_summary(kernel: &Kernel4D, n: usize, alpha: f64) -> Result<SpectrumSummary> {
    let spectrum = GramSpectrum::of_kernel(kernel, n)?;
    Ok(summary_from_spectrum(&spectrum, alpha))
}

pub fn summary_from_spectrum(spectrum: &GramSpectrum, alpha: f64) -> SpectrumSummary {
    let sigma_max_m = spectrum.sigma_max();
    let sigma_min_m = spectrum.sigma_min();
    let kappa = if sigma_min_m > 0.0 {
        sigma_max_m / sigma_min_m
    } else {
        f64::INFINITY
    };
    let (top, next) = spectrum.top2_abs_shifted(alpha);
    SpectrumSummary {
        sigma_max_m,
        sigma_min_m,
        kappa,
        penalty: top,
        gap: top - next,
    }
}

/// Outcome of checking the singular-value bounds implied by a small penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundsVerdict {
    /// `penalty >= t * alpha`; nothing is claimed.
    NotApplicable,
    Holds,
    Violated,
}

impl BoundsVerdict {
    pub fn passed(self) -> bool {
        self != BoundsVerdict::Violated
    }
}

/// If `penalty < t * alpha`, checks
/// `sqrt((1-t) alpha) < sigma_min <= sigma_max < sqrt((1+t) alpha)` and
/// `kappa < sqrt((1+t)/(1-t))`.
pub fn check_bounds(summary: &SpectrumSummary, alpha: f64, t: f64) -> Result<BoundsVerdict> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidThreshold(t));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "alpha must be positive for the bound check, got {alpha}"
        )));
    }
    if summary.penalty >= t * alpha {
        return Ok(BoundsVerdict::NotApplicable);
    }
    let lower = ((1.0 - t) * alpha).sqrt();
    let upper = ((1.0 + t) * alpha).sqrt();
    let kappa_bound = ((1.0 + t) / (1.0 - t)).sqrt();
    let holds = lower < summary.sigma_min_m
        && summary.sigma_min_m <= summary.sigma_max_m
        && summary.sigma_max_m < upper
        && summary.kappa < kappa_bound;
    Ok(if holds {
        BoundsVerdict::Holds
    } else {
        BoundsVerdict::Violated
    })
}
