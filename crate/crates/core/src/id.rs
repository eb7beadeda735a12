//! Participation-ratio intrinsic dimension.
//!
//! The estimator is `(Σ eᵢ)² / Σ eᵢ²` over the eigenvalues of a covariance
//! matrix. Both sums are traces, `tr(C)` and `tr(C²) = ‖C‖²_F`, so no
//! eigendecomposition is ever formed. The two traces are the same for `YᵀY`
//! and `YYᵀ`; everything here works on the smaller row Gram matrix.
//!
//! * GID: a batch reshaped to `N × (C·H·W)` with every feature centered.
//! * LID: one sample reshaped to `C × (H·W)`, used as is (no centering).

use crate::error::{dim_err, Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{center_columns, frob_sq, gram, matmul, trace, Tensor};

/// Added to `tr(C²)` so that a zero covariance yields an ID of 0.
pub const ID_EPS: f64 = 1e-12;

const SYMMETRY_TOL: f64 = 1e-9;

/// An effective dimension count; always nonnegative.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct IdValue<T>(T);

impl<T: Scalar> IdValue<T> {
    pub fn value(self) -> T {
        self.0
    }
}

impl<T: Scalar> std::fmt::Display for IdValue<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        std::fmt::Display::fmt(&self.0, f)
    }
}

/// `(tr g)² / (‖g‖²_F + ε)` for a symmetric positive semidefinite `g`.
pub fn participation_ratio<T: Scalar>(g: &Tensor<T>) -> Result<IdValue<T>> {
    let (n, m) = g.dims2()?;
    if n != m {
        return Err(dim_err("participation_ratio", format!("non-square {n}x{m}")));
    }
    let tol = T::lit(SYMMETRY_TOL) * T::one().max(g.max_abs());
    for i in 0..n {
        for j in (i + 1)..n {
            if (g.at2(i, j) - g.at2(j, i)).abs() > tol {
                return Err(Error::Validation(format!(
                    "participation_ratio needs a symmetric matrix; entry ({i},{j}) differs"
                )));
            }
        }
    }
    Ok(ratio(trace(g)?, frob_sq(g)))
}

#[inline]
fn ratio<T: Scalar>(t: T, f: T) -> IdValue<T> {
    IdValue(t * t / (f + T::lit(ID_EPS)))
}

/// Participation ratio of the rows of `y` (through `y yᵀ`) and its gradient
/// with respect to `y`:
///
/// `∂/∂Y = 4t/d · Y − 4t²/d² · G Y`, with `G = Y Yᵀ`, `t = tr G`, `d = ‖G‖²_F + ε`.
pub fn row_ratio_with_grad<T: Scalar>(y: &Tensor<T>) -> Result<(IdValue<T>, Tensor<T>)> {
    let g = gram(y)?;
    let t = trace(&g)?;
    let d = frob_sq(&g) + T::lit(ID_EPS);
    let gy = matmul(&g, y)?;
    let four = T::lit(4.0);
    let a = four * t / d;
    let b = four * t * t / (d * d);
    let grad = y.zip_map(&gy, |yv, gv| a * yv - b * gv)?;
    Ok((IdValue(t * t / d), grad))
}

fn batch_matrix<T: Scalar>(batch: &Tensor<T>) -> Result<Tensor<T>> {
    if batch.rank() < 2 {
        return Err(dim_err("gid", format!("expected a batch, got {:?}", batch.shape())));
    }
    if batch.outer() < 2 {
        return Err(Error::Validation(format!(
            "GID needs at least 2 samples, got {}",
            batch.outer()
        )));
    }
    center_columns(&batch.as_matrix()?)
}

fn channel_matrix<T: Scalar>(sample: &Tensor<T>) -> Result<Tensor<T>> {
    if sample.rank() == 0 || sample.outer() == 0 {
        return Err(dim_err("lid", format!("expected a C×H×W sample, got {:?}", sample.shape())));
    }
    sample.as_matrix()
}

/// Global ID of a batch `N × C × H × W` (any rank ≥ 2 with the batch leading).
pub fn gid<T: Scalar>(batch: &Tensor<T>) -> Result<IdValue<T>> {
    let x = batch_matrix(batch)?;
    let g = gram(&x)?;
    Ok(ratio(trace(&g)?, frob_sq(&g)))
}

/// Local ID of one sample `C × H × W`.
pub fn lid<T: Scalar>(sample: &Tensor<T>) -> Result<IdValue<T>> {
    let m = channel_matrix(sample)?;
    let g = gram(&m)?;
    Ok(ratio(trace(&g)?, frob_sq(&g)))
}

/// GID and its gradient with respect to the (uncentered) batch.
pub fn gid_with_grad<T: Scalar>(batch: &Tensor<T>) -> Result<(IdValue<T>, Tensor<T>)> {
    let x = batch_matrix(batch)?;
    let (v, g) = row_ratio_with_grad(&x)?;
    // Centering is an orthogonal projection, so its adjoint is itself.
    let g = center_columns(&g)?.reshape(batch.shape())?;
    Ok((v, g))
}

/// LID and its gradient with respect to the sample.
pub fn lid_with_grad<T: Scalar>(sample: &Tensor<T>) -> Result<(IdValue<T>, Tensor<T>)> {
    let m = channel_matrix(sample)?;
    let (v, g) = row_ratio_with_grad(&m)?;
    Ok((v, g.reshape(sample.shape())?))
}

/// LID of every sample in a batch.
pub fn lid_per_sample<T: Scalar>(batch: &Tensor<T>) -> Result<Vec<IdValue<T>>> {
    (0..batch.outer()).map(|i| lid(&batch.sample(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + b.abs())
    }

    #[test]
    fn identity_gives_its_size() {
        for r in [1usize, 2, 5] {
            let v = participation_ratio(&Tensor::<f64>::identity(r)).unwrap().value();
            assert!(close(v, r as f64, 1e-9), "{r}: {v}");
        }
    }

    #[test]
    fn zero_and_diagonal_spectra() {
        assert_eq!(participation_ratio(&Tensor::<f64>::zeros(&[3, 3])).unwrap().value(), 0.0);
        let v = participation_ratio(&Tensor::diag(&[4.0, 1.0])).unwrap().value();
        assert!(close(v, 25.0 / 17.0, 1e-12));
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let g = Tensor::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(participation_ratio(&g), Err(Error::Validation(_))));
    }

    #[test]
    fn gid_of_identical_samples_is_zero() {
        let b = Tensor::from_fn(&[4, 2, 2, 2], |i| (i % 8) as f64 * 0.3);
        assert_eq!(gid(&b).unwrap().value(), 0.0);
    }

    #[test]
    fn gid_of_plus_minus_axes_is_two() {
        let mut rows = vec![vec![0.0; 12]; 4];
        rows[0][0] = 1.0;
        rows[1][0] = -1.0;
        rows[2][1] = 1.0;
        rows[3][1] = -1.0;
        let b = Tensor::from_rows(&rows).unwrap().reshape(&[4, 3, 2, 2]).unwrap();
        assert!(close(gid(&b).unwrap().value(), 2.0, 1e-9));
    }

    #[test]
    fn gid_rejects_single_sample() {
        let b = Tensor::<f64>::zeros(&[1, 1, 2, 2]);
        assert!(matches!(gid(&b), Err(Error::Validation(_))));
    }

    #[test]
    fn lid_rank_cases() {
        let one = Tensor::from_fn(&[1, 3, 3], |i| i as f64 + 1.0);
        assert!(close(lid(&one).unwrap().value(), 1.0, 1e-9));
        let same = Tensor::from_fn(&[4, 2, 2], |i| (i % 4) as f64 - 1.5);
        assert!(close(lid(&same).unwrap().value(), 1.0, 1e-9));
        // three orthogonal channels of equal norm
        let mut d = vec![0.0; 3 * 4];
        d[0] = 2.0;
        d[4 + 1] = -2.0;
        d[8 + 2] = 2.0;
        let orth = Tensor::new(vec![3, 2, 2], d).unwrap();
        assert!(close(lid(&orth).unwrap().value(), 3.0, 1e-9));
    }

    #[test]
    fn works_in_single_precision() {
        let v = participation_ratio(&Tensor::<f32>::identity(3)).unwrap().value();
        assert!((v - 3.0).abs() < 1e-5);
    }
}
