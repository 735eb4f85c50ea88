//! Gradient and operator checks against matrices built independently of the
//! library's own placement code.

use convreg::opmatrix::{materialize, DenseMatrix, GramOperator};
use convreg::oracle::{eigh_dense, DenseSym};
use convreg::regularizer::grad_direct;
use convreg::rng::SplitMix64;
use convreg::{grad_fast, EigenPair, Kernel4D, SymmetricOperator};

/// Transformation matrix from the definition, written with 1-based indices:
/// `y(r,s,c) = sum_d sum_{p,q} x(r+p-c0, s+q-c0, d) K(p,q,d,c)` with
/// `c0 = ceil(k/2)`, vec index `(r-1) + N (s-1) + N^2 (channel)`.
/// `select` picks a single kernel entry (by storage index) to build the
/// indicator of its placement set instead.
fn reference_matrix(kernel: &Kernel4D, n: usize, select: Option<usize>) -> DenseMatrix {
    let (k, g, h) = (kernel.k(), kernel.in_channels(), kernel.out_channels());
    let c0 = k.div_ceil(2) as isize;
    let nn = n * n;
    let mut m = DenseMatrix::zeros(h * nn, g * nn);
    for c in 1..=h {
        for d in 1..=g {
            for r in 1..=n as isize {
                for s in 1..=n as isize {
                    for p in 1..=k as isize {
                        for q in 1..=k as isize {
                            let (i, j) = (r + p - c0, s + q - c0);
                            if i < 1 || j < 1 || i > n as isize || j > n as isize {
                                continue;
                            }
                            let idx = kernel.index(p as usize - 1, q as usize - 1, d - 1, c - 1);
                            let value = match select {
                                Some(sel) if sel == idx => 1.0,
                                Some(_) => continue,
                                None => kernel.data()[idx],
                            };
                            let row = (r - 1) as usize + n * (s - 1) as usize + nn * (c - 1);
                            let col = (i - 1) as usize + n * (j - 1) as usize + nn * (d - 1);
                            m.set(row, col, m.get(row, col) + value);
                        }
                    }
                }
            }
        }
    }
    m
}

fn random_kernel(rng: &mut SplitMix64, k: usize, g: usize, h: usize) -> Kernel4D {
    Kernel4D::from_fn(k, g, h, |_, _, _, _| rng.next_signed()).unwrap()
}

fn dominant_pair(kernel: &Kernel4D, n: usize, alpha: f64) -> EigenPair {
    let op = GramOperator::new(kernel.clone(), n, alpha).unwrap();
    let dense = DenseSym::from_dense(op.to_dense().unwrap()).unwrap();
    let eig = eigh_dense(&dense, 1e-14).unwrap();
    let (lambda, v) = eig
        .pairs()
        .max_by(|a, b| a.0.abs().total_cmp(&b.0.abs()))
        .unwrap();
    EigenPair {
        lambda,
        v: v.to_vec(),
        residual: 0.0,
    }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = b
        .iter()
        .fold(0.0_f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

#[test]
fn materialize_matches_definition() {
    let mut rng = SplitMix64::new(11);
    for n in 1..=5 {
        for k in [1, 2, 3, 4, 5] {
            for (g, h) in [(1, 1), (2, 3), (3, 2)] {
                let kernel = random_kernel(&mut rng, k, g, h);
                let ours = materialize(&kernel, n).unwrap();
                let reference = reference_matrix(&kernel, n, None);
                assert_eq!(ours.data(), reference.data(), "n={n} k={k} g={g} h={h}");
            }
        }
    }
}

/// With `A = M^T M - alpha I` and dominant pair `(lambda, v)`,
/// `d|lambda| / dk = 2 sign(lambda) (M v)^T E_k v` where `E_k` is the
/// indicator of entry `k`'s placements.
#[test]
fn gradient_matches_matrix_calculus() {
    let mut rng = SplitMix64::new(12);
    for (k, g, h, n, alpha) in [
        (3, 1, 1, 4, 1.0),
        (3, 1, 1, 5, 10.0),
        (2, 2, 1, 4, 0.5),
        (3, 2, 3, 3, 1.0),
        (5, 1, 2, 4, 2.0),
    ] {
        let kernel = random_kernel(&mut rng, k, g, h);
        let pair = dominant_pair(&kernel, n, alpha);
        let m = reference_matrix(&kernel, n, None);
        let mv = m.matvec(&pair.v).unwrap();
        let expected: Vec<f64> = (0..kernel.len())
            .map(|idx| {
                let e = reference_matrix(&kernel, n, Some(idx));
                let ev = e.matvec(&pair.v).unwrap();
                2.0 * pair.lambda.signum() * mv.iter().zip(&ev).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let fast = grad_fast(&kernel, n, &pair).unwrap();
        let direct = grad_direct(&kernel, n, &pair).unwrap();
        assert!(
            rel_diff(fast.data(), &expected) < 1e-11,
            "fast, k={k} g={g} h={h}"
        );
        assert!(
            rel_diff(direct.data(), &expected) < 1e-11,
            "direct, k={k} g={g} h={h}"
        );
    }
}

/// Forward, adjoint and Gram application agree with their dense
/// counterparts over a grid of small shapes.
#[test]
fn operator_consistency_grid() {
    let mut rng = SplitMix64::new(13);
    for n in 1..=6 {
        for k in [1, 2, 3, 5] {
            for g in 1..=3 {
                for h in 1..=3 {
                    let kernel = random_kernel(&mut rng, k, g, h);
                    let m = reference_matrix(&kernel, n, None);
                    let x = rng.fill_signed(g * n * n);
                    let y = rng.fill_signed(h * n * n);
                    let alpha = 0.75;
                    let op = GramOperator::new(kernel.clone(), n, alpha).unwrap();

                    let forward = op.forward(&x).unwrap();
                    assert!(rel_diff(forward.data(), &m.matvec(&x).unwrap()) < 1e-12);

                    let mty = m.transpose_matvec(&y).unwrap();
                    let adj = convreg::tensor::conv_adjoint(
                        &kernel,
                        &convreg::opmatrix::unvec(&y, n, h).unwrap(),
                    )
                    .unwrap();
                    assert!(rel_diff(adj.data(), &mty) < 1e-12);

                    let mut want = m.transpose_matvec(&m.matvec(&x).unwrap()).unwrap();
                    for (w, xi) in want.iter_mut().zip(&x) {
                        *w -= alpha * xi;
                    }
                    assert!(rel_diff(&op.apply(&x).unwrap(), &want) < 1e-12);
                }
            }
        }
    }
}
