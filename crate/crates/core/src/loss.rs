//! Reconstruction losses, the GID/LID penalties and the composite objective
//!
//! `J = w·L(X, X̂) + λ₁ (GID(X) − GID(X̂))² + λ₂ Σᵢ (LID(xᵢ) − LID(x̂ᵢ))²`.
//!
//! Targets computed from `X` are constants: gradients flow into `X̂` only.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::id::{gid, gid_with_grad, lid, lid_with_grad, ID_EPS};
use crate::scalar::Scalar;
use crate::tensor::{matmul, trace, Tensor};

/// Clamp applied to predictions before taking logarithms.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconKind {
    #[default]
    Mse,
    Bce,
}

fn check_pair<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>, op: &'static str) -> Result<usize> {
    if x.shape() != xh.shape() {
        return Err(dim_err(op, format!("{:?} vs {:?}", x.shape(), xh.shape())));
    }
    if x.rank() < 2 || x.outer() == 0 {
        return Err(dim_err(op, format!("expected a non-empty batch, got {:?}", x.shape())));
    }
    Ok(x.outer())
}

/// `(1/N) Σᵢ ‖x̂ᵢ − xᵢ‖²`.
pub fn mse<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<T> {
    Ok(mse_with_grad(x, xh)?.0)
}

pub fn mse_with_grad<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let n = T::from_count(check_pair(x, xh, "mse")?);
    let diff = xh.sub(x)?;
    let value = diff.data().iter().fold(T::zero(), |a, &d| a + d * d) / n;
    let two_over_n = T::lit(2.0) / n;
    Ok((value, diff.scale(two_over_n)))
}

/// `−(1/N) Σᵢ Σ [x log x̂ + (1−x) log(1−x̂)]` with `x̂` clamped to `[ε, 1−ε]`.
pub fn bce<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<T> {
    Ok(bce_with_grad(x, xh)?.0)
}

pub fn bce_with_grad<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let n = T::from_count(check_pair(x, xh, "bce")?);
    if let Some(bad) = x.data().iter().find(|&&v| !(v >= T::zero() && v <= T::one())) {
        return Err(Error::Validation(format!("BCE targets must lie in [0, 1]; found {bad}")));
    }
    let eps = T::lit(BCE_EPS);
    let hi = T::one() - eps;
    let mut sum = T::zero();
    let mut grad = Vec::with_capacity(x.len());
    for (&t, &p) in x.data().iter().zip(xh.data()) {
        let q = p.max(eps).min(hi);
        sum += t * q.ln() + (T::one() - t) * (T::one() - q).ln();
        // the clamp is flat outside [ε, 1−ε]
        let g = if p < eps || p > hi {
            T::zero()
        } else {
            -(t / q - (T::one() - t) / (T::one() - q)) / n
        };
        grad.push(g);
    }
    Ok((-sum / n, Tensor::new(xh.shape().to_vec(), grad)?))
}

pub fn reconstruction_with_grad<T: Scalar>(kind: ReconKind, x: &Tensor<T>, xh: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    match kind {
        ReconKind::Mse => mse_with_grad(x, xh),
        ReconKind::Bce => bce_with_grad(x, xh),
    }
}

pub fn reconstruction<T: Scalar>(kind: ReconKind, x: &Tensor<T>, xh: &Tensor<T>) -> Result<T> {
    match kind {
        ReconKind::Mse => mse(x, xh),
        ReconKind::Bce => bce(x, xh),
    }
}

/// `(GID(X) − GID(X̂))²`.
pub fn gid_penalty<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<T> {
    check_pair(x, xh, "gid_penalty")?;
    let d = gid(x)?.value() - gid(xh)?.value();
    Ok(d * d)
}

pub fn gid_penalty_with_grad<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    check_pair(x, xh, "gid_penalty")?;
    let target = gid(x)?.value();
    let (v, g) = gid_with_grad(xh)?;
    let d = target - v.value();
    Ok((d * d, g.scale(-T::lit(2.0) * d)))
}

/// `Σᵢ (LID(xᵢ) − LID(x̂ᵢ))²`.
pub fn lid_penalty<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<T> {
    let n = check_pair(x, xh, "lid_penalty")?;
    (0..n).try_fold(T::zero(), |acc, i| {
        let d = lid(&x.sample(i))?.value() - lid(&xh.sample(i))?.value();
        Ok(acc + d * d)
    })
}

pub fn lid_penalty_with_grad<T: Scalar>(x: &Tensor<T>, xh: &Tensor<T>) -> Result<(T, Tensor<T>)> {
    let n = check_pair(x, xh, "lid_penalty")?;
    let mut total = T::zero();
    let mut grad = Tensor::zeros(xh.shape());
    for i in 0..n {
        let target = lid(&x.sample(i))?.value();
        let (v, g) = lid_with_grad(&xh.sample(i))?;
        let d = target - v.value();
        total += d * d;
        let scale = -T::lit(2.0) * d;
        for (o, &gv) in grad.row_mut(i).iter_mut().zip(g.data()) {
            *o = scale * gv;
        }
    }
    Ok((total, grad))
}

/// Per-term values of the composite objective.
///
/// A term whose weight is zero is not evaluated and reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub reconstruction: T,
    pub gid_term: T,
    pub lid_term: T,
    pub total: T,
    pub recon_weight: T,
    pub lambda_gid: T,
    pub lambda_lid: T,
}

/// Weights of the composite objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective<T> {
    pub kind: ReconKind,
    pub recon_weight: T,
    pub lambda_gid: T,
    pub lambda_lid: T,
}

impl<T: Scalar> Objective<T> {
    pub fn new(kind: ReconKind, lambda_gid: T, lambda_lid: T) -> Self {
        Self {
            kind,
            recon_weight: T::one(),
            lambda_gid,
            lambda_lid,
        }
    }

    fn breakdown(&self, recon: T, gid_term: T, lid_term: T) -> LossBreakdown<T> {
        LossBreakdown {
            reconstruction: recon,
            gid_term,
            lid_term,
            total: self.recon_weight * recon + self.lambda_gid * gid_term + self.lambda_lid * lid_term,
            recon_weight: self.recon_weight,
            lambda_gid: self.lambda_gid,
            lambda_lid: self.lambda_lid,
        }
    }

    pub fn evaluate(&self, x: &Tensor<T>, xh: &Tensor<T>) -> Result<LossBreakdown<T>> {
        let recon = reconstruction(self.kind, x, xh)?;
        let g = if self.lambda_gid > T::zero() { gid_penalty(x, xh)? } else { T::zero() };
        let l = if self.lambda_lid > T::zero() { lid_penalty(x, xh)? } else { T::zero() };
        Ok(self.breakdown(recon, g, l))
    }

    /// Objective value and its gradient with respect to `xh`.
    pub fn evaluate_with_grad(&self, x: &Tensor<T>, xh: &Tensor<T>) -> Result<(LossBreakdown<T>, Tensor<T>)> {
        let (recon, mut grad) = reconstruction_with_grad(self.kind, x, xh)?;
        grad = grad.scale(self.recon_weight);
        let mut g = T::zero();
        if self.lambda_gid > T::zero() {
            let (v, gg) = gid_penalty_with_grad(x, xh)?;
            g = v;
            grad.axpy(self.lambda_gid, &gg)?;
        }
        let mut l = T::zero();
        if self.lambda_lid > T::zero() {
            let (v, lg) = lid_penalty_with_grad(x, xh)?;
            l = v;
            grad.axpy(self.lambda_lid, &lg)?;
        }
        Ok((self.breakdown(recon, g, l), grad))
    }
}

/// Composite objective with unit reconstruction weight.
pub fn total_loss<T: Scalar>(
    x: &Tensor<T>,
    xh: &Tensor<T>,
    lambda_gid: T,
    lambda_lid: T,
    kind: ReconKind,
) -> Result<LossBreakdown<T>> {
    Objective::new(kind, lambda_gid, lambda_lid).evaluate(x, xh)
}

/// Closed-form gradient in `W` of `tr(W XᵀX Wᵀ)² / tr((W XᵀX Wᵀ)²)`, i.e. the
/// participation ratio of `Y = X Wᵀ` seen through its `n × n` covariance.
///
/// `W` is `n × m`, `X` is `N × m`. Evaluated exactly as
/// `4t₂/t₄ · T₀ − 4t₂²/t₄² · T₃` with `T₀ = W XᵀX`, `T₁ = T₀ Wᵀ`, `t₂ = tr T₁`,
/// `T₃ = T₁ W XᵀX`, `t₄ = tr(T₃ Wᵀ)`.
pub fn id_gradient_linear<T: Scalar>(w: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, m) = w.dims2()?;
    let (_, m2) = x.dims2()?;
    if m != m2 {
        return Err(dim_err("id_gradient_linear", format!("W has {m} columns, X has {m2}")));
    }
    let xtx = matmul(&x.transpose()?, x)?;
    let wt = w.transpose()?;
    let t0 = matmul(w, &xtx)?;
    let t1 = matmul(&t0, &wt)?;
    let t2 = trace(&t1)?;
    let t3 = matmul(&matmul(&t1, w)?, &xtx)?;
    let t4 = trace(&matmul(&t3, &wt)?)?;
    if !(t4 > T::lit(ID_EPS)) {
        return Err(Error::Validation(format!("degenerate t4 = {t4}")));
    }
    let four = T::lit(4.0);
    let a = four * t2 / t4;
    let b = four * t2 * t2 / (t4 * t4);
    t0.zip_map(&t3, |p, q| a * p - b * q)
}
