//! The spectral penalty `R_alpha(K) = sigma_max(M^T M - alpha I)`, its
//! gradient with respect to the kernel, and gradient descent on it.
//!
//! For a simple dominant singular value with singular vectors `(u, v)` of the
//! symmetric `A = M^T M - alpha I`, perturbing one entry `m_ij` of `M` moves
//! the penalty by `v(j) (M u)(i) + u(j) (M v)(i)`. Summing that over every
//! position a kernel entry occupies gives its partial derivative.
//! [`grad_direct`] does exactly that on the dense matrix; [`grad_fast`] gets
//! the same numbers from two convolutions and two weight-gradient passes.

use crate::error::{Error, Result};
use crate::opmatrix::{materialize, omega_enumerate, unvec, GramOperator};
use crate::spectra::{
    spectrum_summary, top2_init, top2_refine, EigenPair, Top2, DEFAULT_INIT_MAXIT,
    DEFAULT_INIT_TOL, DEFAULT_REFINE_ITERS,
};
use crate::tensor::{conv_multi, conv_weight_grad, Kernel4D};

/// Seed of the random start used by [`penalty`].
const PENALTY_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyEstimate {
    pub value: f64,
    pub converged: bool,
}

/// `R_alpha(K)` from the matrix-free top-2 iteration at tolerance `1e-8`.
pub fn penalty(kernel: &Kernel4D, n: usize, alpha: f64) -> Result<PenaltyEstimate> {
    let op = GramOperator::new(kernel.clone(), n, alpha)?;
    let top = top2_init(&op, DEFAULT_INIT_TOL, DEFAULT_INIT_MAXIT, PENALTY_SEED)?;
    Ok(PenaltyEstimate {
        value: top.first.sigma(),
        converged: top.converged,
    })
}

fn check_pair_len(kernel: &Kernel4D, n: usize, pair: &EigenPair) -> Result<()> {
    let expected = n * n * kernel.in_channels();
    if pair.v.len() != expected {
        return Err(Error::LengthMismatch {
            what: "singular vector",
            expected,
            found: pair.v.len(),
        });
    }
    Ok(())
}

/// Gradient by explicit summation over the placement sets of the dense
/// transformation matrix. Limited to sizes the dense cap allows.
pub fn grad_direct(kernel: &Kernel4D, n: usize, pair: &EigenPair) -> Result<Kernel4D> {
    check_pair_len(kernel, n, pair)?;
    let (k, g, h) = (kernel.k(), kernel.in_channels(), kernel.out_channels());
    let m = materialize(kernel, n)?;
    let v = &pair.v;
    let u = pair.u();
    let mu = m.matvec(&u)?;
    let mv = m.matvec(v)?;
    let grad = omega_enumerate(k, g, h, n)
        .iter()
        .map(|set| {
            set.entries
                .iter()
                .map(|&(i, j)| v[j] * mu[i] + u[j] * mv[i])
                .sum()
        })
        .collect();
    Kernel4D::new(k, g, h, grad)
}

/// Same gradient through convolutions: with `a = K * u` and `b = K * v`,
/// `G = W(b, u) + W(a, v)` where `W` is the weight gradient.
pub fn grad_fast(kernel: &Kernel4D, n: usize, pair: &EigenPair) -> Result<Kernel4D> {
    check_pair_len(kernel, n, pair)?;
    let g = kernel.in_channels();
    let u = unvec(&pair.u(), n, g)?;
    let v = unvec(&pair.v, n, g)?;
    let a = conv_multi(kernel, &u)?;
    let b = conv_multi(kernel, &v)?;
    let first = conv_weight_grad(&b, &u, kernel.k())?;
    let second = conv_weight_grad(&a, &v, kernel.k())?;
    Ok(first.add(&second))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub alpha: f64,
    /// Fixed step size of the update `K <- K - lr * G`.
    pub lr: f64,
    pub iters: usize,
    /// Power steps per refresh of the tracked pairs.
    pub power_iters: usize,
    pub init_tol: f64,
    pub init_maxit: usize,
    /// Recompute exact spectra with the dense oracle for every trace row.
    pub record_oracle: bool,
    /// Stop once the tracked penalty moves less than `1e-10` for 5
    /// consecutive iterations.
    pub early_stop: bool,
    /// Seed of the random start for the initial pair computation.
    pub seed: u64,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lr: 0.01,
            iters: 50,
            power_iters: DEFAULT_REFINE_ITERS,
            init_tol: DEFAULT_INIT_TOL,
            init_maxit: DEFAULT_INIT_MAXIT,
            record_oracle: true,
            early_stop: false,
            seed: 0,
        }
    }
}

impl DescentConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !positive(self.lr) {
            return Err(Error::InvalidConfig(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        if self.power_iters == 0 {
            return Err(Error::InvalidConfig(
                "power_iters must be at least 1".into(),
            ));
        }
        if !positive(self.init_tol) || self.init_maxit == 0 {
            return Err(Error::InvalidConfig(
                "init_tol and init_maxit must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Per-iteration record. Row `i` describes the kernel after `i` updates.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    /// Exact penalty when the oracle was recorded, otherwise the tracked one.
    pub penalty: f64,
    /// `|lambda|` of the dominant tracked Ritz pair.
    pub ritz_penalty: f64,
    pub sigma_max_m: Option<f64>,
    pub sigma_min_m: Option<f64>,
    pub kappa: Option<f64>,
    /// The tracked dominant value was not separated from the runner-up.
    pub gap_flag: bool,
    /// Frobenius norm of the gradient taken at this kernel.
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct DescentResult {
    pub kernel: Kernel4D,
    pub trace: Vec<TraceRow>,
    /// Kernel after each update, aligned with `trace`.
    pub kernels: Vec<Kernel4D>,
}

fn row(iter: usize, top: &Top2, grad: &Kernel4D) -> TraceRow {
    let ritz = top.first.sigma();
    TraceRow {
        iter,
        penalty: ritz,
        ritz_penalty: ritz,
        sigma_max_m: None,
        sigma_min_m: None,
        kappa: None,
        gap_flag: top.is_degenerate(),
        grad_norm: grad.frobenius_norm(),
    }
}

/// Gradient descent on `R_alpha` with incremental tracking of the two
/// dominant pairs.
///
/// The initial pairs are computed accurately; afterwards each iteration takes
/// the gradient at the current dominant pair, updates the kernel, and
/// refreshes both pairs with `power_iters` power steps. Re-ranking by
/// magnitude after each refresh selects which pair drives the next step.
pub fn descend(k0: &Kernel4D, n: usize, config: &DescentConfig) -> Result<DescentResult> {
    config.validate()?;
    let mut kernel = k0.clone();
    let op = GramOperator::new(kernel.clone(), n, config.alpha)?;
    let mut top = top2_init(&op, config.init_tol, config.init_maxit, config.seed)?;
    let mut grad = grad_fast(&kernel, n, &top.first)?;
    if !grad.is_finite() {
        return Err(Error::NonFinite { iter: 0 });
    }
    let mut trace = vec![row(0, &top, &grad)];
    let mut kernels = vec![kernel.clone()];
    let mut quiet = 0;

    for iter in 1..=config.iters {
        let next = kernel.sub_scaled(config.lr, &grad);
        if !next.is_finite() {
            return Err(Error::NonFinite { iter });
        }
        kernel = next;
        let op = GramOperator::new(kernel.clone(), n, config.alpha)?;
        top = top2_refine(&op, &top, config.power_iters)?;
        grad = grad_fast(&kernel, n, &top.first)?;
        if !grad.is_finite() || !top.first.lambda.is_finite() {
            return Err(Error::NonFinite { iter });
        }
        let current = row(iter, &top, &grad);
        let previous = trace.last().map(|r| r.ritz_penalty).unwrap_or(f64::NAN);
        trace.push(current);
        kernels.push(kernel.clone());

        if config.early_stop {
            if (top.first.sigma() - previous).abs() < 1e-10 {
                quiet += 1;
                if quiet >= 5 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
    }

    if config.record_oracle {
        for (row, snapshot) in trace.iter_mut().zip(&kernels) {
            let summary = spectrum_summary(snapshot, n, config.alpha)?;
            row.penalty = summary.penalty;
            row.sigma_max_m = Some(summary.sigma_max_m);
            row.sigma_min_m = Some(summary.sigma_min_m);
            row.kappa = Some(summary.kappa);
        }
    }

    Ok(DescentResult {
        kernel,
        trace,
        kernels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::penalty_dense;
    use crate::rng::SplitMix64;

    fn random_kernel(seed: u64, k: usize, g: usize, h: usize) -> Kernel4D {
        let mut rng = SplitMix64::new(seed);
        Kernel4D::from_fn(k, g, h, |_, _, _, _| rng.next_f64()).unwrap()
    }

    #[test]
    fn penalty_special_cases() {
        let delta = Kernel4D::delta(3, 1, 1).unwrap();
        assert!(penalty(&delta, 4, 1.0).unwrap().value.abs() < 1e-12);
        let scalar = Kernel4D::new(1, 1, 1, vec![0.4]).unwrap();
        let p = penalty(&scalar, 3, 2.0).unwrap();
        assert!((p.value - (0.16_f64 - 2.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn penalty_matches_dense() {
        let kernel = random_kernel(41, 3, 2, 2);
        let fast = penalty(&kernel, 4, 1.0).unwrap();
        let dense = penalty_dense(&kernel, 4, 1.0).unwrap();
        assert!(fast.converged);
        assert!((fast.value - dense).abs() <= 1e-6 * dense);
    }

    #[test]
    fn zero_vectors_give_zero_gradient() {
        let kernel = random_kernel(42, 3, 2, 2);
        let pair = EigenPair {
            lambda: 1.0,
            v: vec![0.0; 32],
            residual: 0.0,
        };
        assert!(grad_direct(&kernel, 4, &pair)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 0.0));
        assert!(grad_fast(&kernel, 4, &pair)
            .unwrap()
            .data()
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn zero_kernel_has_zero_gradient() {
        let kernel = Kernel4D::zeros(3, 2, 1).unwrap();
        let mut rng = SplitMix64::new(43);
        let mut v = rng.fill_signed(18);
        let s = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= s);
        let pair = EigenPair {
            lambda: -1.0,
            v,
            residual: 0.0,
        };
        assert!(grad_fast(&kernel, 3, &pair)
            .unwrap()
            .data()
            .iter()
            .all(|x| *x == 0.0));
    }

    #[test]
    fn fast_and_direct_agree() {
        let kernel = random_kernel(44, 3, 2, 3);
        let op = GramOperator::new(kernel.clone(), 4, 1.0).unwrap();
        let top = top2_init(&op, 1e-10, 2000, 1).unwrap();
        let direct = grad_direct(&kernel, 4, &top.first).unwrap();
        let fast = grad_fast(&kernel, 4, &top.first).unwrap();
        let scale = direct.frobenius_norm();
        for (a, b) in direct.data().iter().zip(fast.data()) {
            assert!((a - b).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn pair_length_is_checked() {
        let kernel = random_kernel(45, 3, 2, 2);
        let pair = EigenPair {
            lambda: 1.0,
            v: vec![0.0; 10],
            residual: 0.0,
        };
        assert!(grad_fast(&kernel, 4, &pair).is_err());
        assert!(grad_direct(&kernel, 4, &pair).is_err());
    }

    #[test]
    fn zero_iterations_returns_initial_row() {
        let kernel = random_kernel(46, 3, 2, 1);
        let config = DescentConfig {
            iters: 0,
            ..DescentConfig::default()
        };
        let out = descend(&kernel, 4, &config).unwrap();
        assert_eq!(out.kernel, kernel);
        assert_eq!(out.trace.len(), 1);
        assert_eq!(out.trace[0].iter, 0);
        assert!(out.trace[0].kappa.is_some());
    }

    #[test]
    fn invalid_config_is_rejected() {
        let kernel = random_kernel(47, 3, 1, 1);
        for config in [
            DescentConfig {
                lr: 0.0,
                ..DescentConfig::default()
            },
            DescentConfig {
                alpha: -1.0,
                ..DescentConfig::default()
            },
            DescentConfig {
                power_iters: 0,
                ..DescentConfig::default()
            },
        ] {
            assert!(matches!(
                descend(&kernel, 4, &config),
                Err(Error::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn divergence_names_the_iteration() {
        let kernel = random_kernel(48, 3, 2, 2);
        let config = DescentConfig {
            lr: 1e150,
            iters: 10,
            record_oracle: false,
            ..DescentConfig::default()
        };
        match descend(&kernel, 4, &config) {
            Err(Error::NonFinite { iter }) => assert!(iter >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn early_stop_shortens_a_stalled_run() {
        let kernel = random_kernel(49, 3, 1, 1);
        let config = DescentConfig {
            lr: 1e-15,
            iters: 40,
            early_stop: true,
            record_oracle: false,
            ..DescentConfig::default()
        };
        let out = descend(&kernel, 4, &config).unwrap();
        assert!(out.trace.len() < 41);
    }
}
