//! Self-checks that compare the fast paths against the dense oracle. Used by
//! the `check` mode of the runner and by the acceptance tests.

use crate::error::Result;
use crate::experiment::init_uniform;
use crate::opmatrix::{materialize, omega_enumerate, GramOperator};
use crate::oracle::fd_grad;
use crate::regularizer::{descend, grad_direct, grad_fast, DescentConfig, TraceRow};
use crate::rng::SplitMix64;
use crate::spectra::{check_bounds, top2_init, BoundsVerdict, SpectrumSummary};
use crate::tensor::{conv_adjoint, conv_multi, Kernel4D, Tensor3};

/// Minimum `|lambda_1| - |lambda_2|` for a finite-difference comparison to be
/// meaningful.
pub const FD_MIN_GAP: f64 = 1e-3;
pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-5;
pub const BOUND_THRESHOLDS: [f64; 3] = [0.3, 0.5, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// `max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)`, with `floor` a tiny
/// fraction of the largest reference entry so exact zeros compare absolutely.
pub fn max_coordinate_rel_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().chain(a).fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = (1e-8 * scale).max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub fn random_signed_kernel(rng: &mut SplitMix64, k: usize, g: usize, h: usize) -> Kernel4D {
    Kernel4D::from_fn(k, g, h, |_, _, _, _| rng.next_signed()).expect("valid shape")
}

pub fn random_tensor(rng: &mut SplitMix64, n: usize, c: usize) -> Tensor3 {
    Tensor3::from_fn(n, c, |_, _, _| rng.next_signed()).expect("valid shape")
}

/// Worst normalized defect of `<K*X, Y> = <X, K^T Y>` over `trials` draws.
pub fn adjoint_defect(
    k: usize,
    g: usize,
    h: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = SplitMix64::new(seed);
    let mut worst = 0.0_f64;
    for _ in 0..trials {
        let kernel = random_signed_kernel(&mut rng, k, g, h);
        let x = random_tensor(&mut rng, n, g);
        let y = random_tensor(&mut rng, n, h);
        let lhs = conv_multi(&kernel, &x)?.dot(&y);
        let rhs = x.dot(&conv_adjoint(&kernel, &y)?);
        let scale = x.frobenius_norm() * y.frobenius_norm() * kernel.frobenius_norm();
        worst = worst.max((lhs - rhs).abs() / scale.max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Placement sets are disjoint and cover exactly the structural nonzeros of
/// the materialized matrix (probed with all-distinct kernel entries).
pub fn omega_partition_ok(k: usize, g: usize, h: usize, n: usize) -> Result<bool> {
    let labelled: Vec<f64> = (0..k * k * g * h).map(|i| (i + 1) as f64).collect();
    let probe = Kernel4D::new(k, g, h, labelled)?;
    let m = materialize(&probe, n)?;
    let mut seen = vec![false; m.rows() * m.cols()];
    for (idx, set) in omega_enumerate(k, g, h, n).iter().enumerate() {
        for &(i, j) in &set.entries {
            let slot = i * m.cols() + j;
            if seen[slot] || m.get(i, j) != (idx + 1) as f64 {
                return Ok(false);
            }
            seen[slot] = true;
        }
    }
    Ok(m.data()
        .iter()
        .zip(&seen)
        .all(|(v, covered)| (*v != 0.0) == *covered))
}

/// Relative defect between the direct placement-set gradient and the
/// convolution gradient at the dominant pair of a kernel.
pub fn direct_vs_fast_defect(kernel: &Kernel4D, n: usize, alpha: f64, seed: u64) -> Result<f64> {
    let op = GramOperator::new(kernel.clone(), n, alpha)?;
    let top = top2_init(&op, 1e-8, 1000, seed)?;
    let direct = grad_direct(kernel, n, &top.first)?;
    let fast = grad_fast(kernel, n, &top.first)?;
    let scale = direct.frobenius_norm().max(f64::MIN_POSITIVE);
    Ok(direct
        .data()
        .iter()
        .zip(fast.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FdComparison {
    /// The dominant eigenvalue is too close to the runner-up.
    Skipped {
        gap: f64,
    },
    Compared {
        gap: f64,
        max_rel_error: f64,
    },
}

/// Analytic gradient (converged dominant pair) versus central differences of
/// the dense penalty.
pub fn gradient_vs_fd(kernel: &Kernel4D, n: usize, alpha: f64, seed: u64) -> Result<FdComparison> {
    let op = GramOperator::new(kernel.clone(), n, alpha)?;
    let top = top2_init(&op, 1e-12, 20_000, seed)?;
    let gap = top.gap();
    if gap <= FD_MIN_GAP {
        return Ok(FdComparison::Skipped { gap });
    }
    let analytic = grad_fast(kernel, n, &top.first)?;
    let numeric = fd_grad(kernel, n, alpha, FD_STEP)?;
    Ok(FdComparison::Compared {
        gap,
        max_rel_error: max_coordinate_rel_error(analytic.data(), numeric.data()),
    })
}

/// Counts rows violating the singular-value bounds for each threshold in
/// [`BOUND_THRESHOLDS`]; returns `(applicable, violations)`.
pub fn bound_violations(trace: &[TraceRow], alpha: f64) -> Result<(usize, usize)> {
    let mut applicable = 0;
    let mut violations = 0;
    for row in trace {
        let (Some(sigma_max_m), Some(sigma_min_m), Some(kappa)) =
            (row.sigma_max_m, row.sigma_min_m, row.kappa)
        else {
            continue;
        };
        let summary = SpectrumSummary {
            sigma_max_m,
            sigma_min_m,
            kappa,
            penalty: row.penalty,
            gap: 0.0,
        };
        for t in BOUND_THRESHOLDS {
            match check_bounds(&summary, alpha, t)? {
                BoundsVerdict::NotApplicable => {}
                BoundsVerdict::Holds => applicable += 1,
                BoundsVerdict::Violated => {
                    applicable += 1;
                    violations += 1;
                }
            }
        }
    }
    Ok((applicable, violations))
}

/// Runs the invariant suite at the given sizes.
pub fn run_invariant_suite(
    k: usize,
    g: usize,
    h: usize,
    n: usize,
    alpha: f64,
    seed: u64,
) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();

    let defect = adjoint_defect(k, g, h, n, 10, seed)?;
    out.push(CheckOutcome::new(
        "adjoint",
        defect <= 1e-12,
        format!("max normalized defect {defect:.3e}"),
    ));

    let partition = omega_partition_ok(k, g, h, n)?;
    let kernel = init_uniform(k, g, h, seed)?;
    let agreement = direct_vs_fast_defect(&kernel, n, alpha, seed)?;
    out.push(CheckOutcome::new(
        "omega",
        partition && agreement <= 1e-12,
        format!("partition ok: {partition}, direct vs fast defect {agreement:.3e}"),
    ));

    let fd = gradient_vs_fd(&kernel, n, alpha, seed)?;
    out.push(match fd {
        FdComparison::Skipped { gap } => CheckOutcome::new(
            "gradient-fd",
            true,
            format!("skipped: spectral gap {gap:.3e} below {FD_MIN_GAP:e}"),
        ),
        FdComparison::Compared { gap, max_rel_error } => CheckOutcome::new(
            "gradient-fd",
            max_rel_error <= FD_TOLERANCE,
            format!("gap {gap:.3e}, max relative error {max_rel_error:.3e}"),
        ),
    });

    let config = DescentConfig {
        alpha,
        iters: 20,
        ..DescentConfig::default()
    };
    let result = descend(&kernel, n, &config)?;
    let (applicable, violations) = bound_violations(&result.trace, alpha)?;
    out.push(CheckOutcome::new(
        "bounds",
        violations == 0,
        format!("{applicable} applicable row/threshold pairs, {violations} violations"),
    ));

    Ok(out)
}
