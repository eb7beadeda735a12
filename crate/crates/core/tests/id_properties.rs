use aeidc::gradcheck::{central_difference, rel_error};
use aeidc::id::{gid, lid, participation_ratio, ID_EPS};
use aeidc::loss::id_gradient_linear;
use aeidc::Tensor;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
}

fn to_tensor(m: &DMatrix<f64>) -> Tensor<f64> {
    Tensor::from_fn(&[m.nrows(), m.ncols()], |i| m[(i / m.ncols(), i % m.ncols())])
}

/// Haar-ish orthogonal matrix from the QR factor of a Gaussian matrix.
fn orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    gaussian(rng, n, n).qr().q()
}

fn centered(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    c
}

/// `(Σλ)² / (Σλ² + ε)` from an explicit eigendecomposition of `YᵀY`.
fn eigen_ratio(y: &DMatrix<f64>) -> f64 {
    let ev = SymmetricEigen::new(y.transpose() * y).eigenvalues;
    let s: f64 = ev.iter().sum();
    let s2: f64 = ev.iter().map(|l| l * l).sum();
    s * s / (s2 + ID_EPS)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn gid_matches_eigen_oracle(seed in any::<u64>(), n in 3usize..12, m in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, n, m);
        let ours = gid(&to_tensor(&x)).unwrap().value();
        prop_assert!(close(ours, eigen_ratio(&centered(&x)), 1e-9));
    }

    #[test]
    fn lid_matches_eigen_oracle(seed in any::<u64>(), c in 1usize..5, hw in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // LID uses the C × C row Gram; its spectrum is that of (C × HW)ᵀ (C × HW).
        let s = gaussian(&mut rng, c, hw);
        let t = Tensor::from_fn(&[c, 1, hw], |i| s[(i / hw, i % hw)]);
        prop_assert!(close(lid(&t).unwrap().value(), eigen_ratio(&s.transpose()), 1e-9));
    }

    #[test]
    fn scale_invariance(seed in any::<u64>(), n in 3usize..10, m in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Large enough that ε stays below 1e-9 of tr(C²) even at α = 0.1.
        let x = to_tensor(&(gaussian(&mut rng, n, m) * 10.0));
        let base = gid(&x).unwrap().value();
        let sample = x.reshaped(&[1, n, m]).unwrap();
        let lbase = lid(&sample).unwrap().value();
        for alpha in [0.1, 3.7, -2.0] {
            prop_assert!(close(gid(&x.scale(alpha)).unwrap().value(), base, 1e-9));
            prop_assert!(close(lid(&sample.scale(alpha)).unwrap().value(), lbase, 1e-9));
        }
    }

    #[test]
    fn gid_orthogonal_invariance(seed in any::<u64>(), n in 3usize..10, m in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, n, m);
        let q = orthogonal(&mut rng, m);
        let a = gid(&to_tensor(&x)).unwrap().value();
        let b = gid(&to_tensor(&(&x * q))).unwrap().value();
        prop_assert!(close(a, b, 1e-9));
    }

    #[test]
    fn gid_bounded_by_rank(seed in any::<u64>(), n in 4usize..12, m in 4usize..12, r in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, n, r) * gaussian(&mut rng, r, m);
        let xc = centered(&x);
        let ev = SymmetricEigen::new(xc.transpose() * &xc).eigenvalues;
        let top = ev.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
        let rank = ev.iter().filter(|l| l.abs() > 1e-10 * top).count();
        let v = gid(&to_tensor(&x)).unwrap().value();
        prop_assert!(rank <= r);
        prop_assert!(v <= rank as f64 + 1e-9, "gid {} > rank {}", v, rank);
        prop_assert!(v >= 1.0 - 1e-9);
    }

    #[test]
    fn pr_of_diagonal_spectrum(vals in proptest::collection::vec(0.01f64..10.0, 1..8)) {
        let g = Tensor::diag(&vals);
        let s: f64 = vals.iter().sum();
        let s2: f64 = vals.iter().map(|v| v * v).sum();
        prop_assert!(close(participation_ratio(&g).unwrap().value(), s * s / (s2 + 1e-12), 1e-12));
    }
}

fn linear_pr(w: &Tensor<f64>, x: &Tensor<f64>) -> f64 {
    // Y = X Wᵀ; spectrum of YᵀY via nalgebra, independent of the trace path.
    let (n, m) = w.dims2().unwrap();
    let (rows, _) = x.dims2().unwrap();
    let wm = DMatrix::from_row_slice(n, m, w.data());
    let xm = DMatrix::from_row_slice(rows, m, x.data());
    let c = (&xm * wm.transpose()).transpose() * (&xm * wm.transpose());
    c.trace().powi(2) / c.norm_squared()
}

#[test]
fn linear_gradient_matches_finite_differences() {
    for s in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let (n, m, rows) = (2 + s as usize % 3, 3 + s as usize % 4, 6 + s as usize % 5);
        let w = to_tensor(&gaussian(&mut rng, n, m));
        let x = to_tensor(&gaussian(&mut rng, rows, m));
        let g = id_gradient_linear(&w, &x).unwrap();
        let f = central_difference(&w, 1e-5, |w| Ok(linear_pr(w, &x))).unwrap();
        let e = rel_error(&g, &f);
        assert!(e < 1e-6, "instance {s}: relative error {e:.3e}");
        // Scale invariance in W makes the gradient orthogonal to W.
        let inner = g.dot(&w).unwrap();
        let norm = (g.dot(&g).unwrap() * w.dot(&w).unwrap()).sqrt();
        assert!(inner.abs() <= 1e-9 * norm.max(1.0), "instance {s}: <grad, W> = {inner:e}");
    }
}

#[test]
fn linear_gradient_rejects_degenerate_input() {
    let w = Tensor::zeros(&[2, 3]);
    let x = Tensor::from_fn(&[4, 3], |i| i as f64);
    assert!(id_gradient_linear(&w, &x).is_err());
}
