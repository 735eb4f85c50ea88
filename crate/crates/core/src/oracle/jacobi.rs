//! Cyclic Jacobi eigendecomposition of a dense symmetric matrix.

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Diagonalizes the row-major symmetric `a` (overwritten) and returns the
/// eigenvalues in diagonal order together with the row-major matrix whose
/// columns are the eigenvectors.
///
/// Iterates until the off-diagonal Frobenius norm is at most
/// `tol * ||A||_F`, or until a full sweep finds nothing left to rotate.
pub(crate) fn cyclic_jacobi(a: &mut [f64], n: usize, tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    debug_assert_eq!(a.len(), n * n);
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = tol * norm;
    let floor = 1e-300_f64.max(f64::EPSILON * 1e-3 * norm / n.max(1) as f64);

    for _sweep in 0..MAX_SWEEPS {
        let off = off_diagonal_norm(a, n);
        if off <= target {
            return Ok((diagonal(a, n), v));
        }
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                if apq.abs() <= floor
                    || apq.abs() <= 0.5 * f64::EPSILON * (app.abs() * aqq.abs()).sqrt()
                {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for r in 0..n {
                    if r == p || r == q {
                        continue;
                    }
                    let arp = a[r * n + p];
                    let arq = a[r * n + q];
                    let new_rp = arp - s * (arq + arp * tau);
                    let new_rq = arq + s * (arp - arq * tau);
                    a[r * n + p] = new_rp;
                    a[p * n + r] = new_rp;
                    a[r * n + q] = new_rq;
                    a[q * n + r] = new_rq;
                }
                for r in 0..n {
                    let vrp = v[r * n + p];
                    let vrq = v[r * n + q];
                    v[r * n + p] = vrp - s * (vrq + vrp * tau);
                    v[r * n + q] = vrq + s * (vrp - vrq * tau);
                }
            }
        }
        if !rotated {
            return Ok((diagonal(a, n), v));
        }
    }
    if off_diagonal_norm(a, n) <= target {
        return Ok((diagonal(a, n), v));
    }
    Err(Error::NoConvergence {
        method: "cyclic Jacobi",
        iterations: MAX_SWEEPS,
    })
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut sum = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                sum += a[i * n + j] * a[i * n + j];
            }
        }
    }
    sum.sqrt()
}

fn diagonal(a: &[f64], n: usize) -> Vec<f64> {
    (0..n).map(|i| a[i * n + i]).collect()
}
