//! Synthetic datasets with a known intrinsic dimension.
//!
//! Every sample is `class_mean + U·z + noise` with an `r`-column basis `U`
//! and isotropic latent `z`; the whole dataset is then mapped affinely to
//! `[0, 1]` with its global min/max.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::Shape3;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

fn default_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub intrinsic_dim: usize,
    pub shape: Shape3,
    pub classes: usize,
    pub per_class: usize,
    #[serde(default)]
    pub noise_std: f64,
    /// Standard deviation of each latent coordinate.
    #[serde(default = "default_one")]
    pub latent_std: f64,
    /// Norm of each class mean before renormalisation.
    #[serde(default = "default_one")]
    pub class_separation: f64,
    #[serde(default)]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let m: usize = self.shape.iter().product();
        if self.intrinsic_dim == 0 || self.intrinsic_dim > m {
            return Err(Error::Validation(format!(
                "intrinsic dimension {} must lie in 1..={m}",
                self.intrinsic_dim
            )));
        }
        if m == 0 || self.classes == 0 || self.per_class == 0 {
            return Err(Error::Validation("shape, classes and per_class must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.latent_std >= 0.0 && self.class_separation >= 0.0) {
            return Err(Error::Validation("noise, latent and separation scales must be nonnegative".into()));
        }
        Ok(())
    }
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Modified Gram-Schmidt on `r` Gaussian vectors of length `m`.
fn orthonormal_basis(rng: &mut ChaCha8Rng, m: usize, r: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);
    while basis.len() < r {
        let mut v = gaussian(rng, m);
        for b in &basis {
            let p: f64 = v.iter().zip(b).map(|(a, c)| a * c).sum();
            v.iter_mut().zip(b).for_each(|(a, c)| *a -= p * c);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    basis
}

/// A smooth random pattern: one low-frequency plane wave per channel.
fn smooth_pattern(rng: &mut ChaCha8Rng, shape: Shape3) -> Vec<f64> {
    let [c, h, w] = shape;
    let mut v = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        let amp: f64 = rng.random_range(0.5..1.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let fx: f64 = rng.random_range(0.0..2.0);
        let fy: f64 = rng.random_range(0.0..2.0);
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for y in 0..h {
            for x in 0..w {
                let arg = std::f64::consts::TAU * (fx * x as f64 / w as f64 + fy * y as f64 / h as f64) + phase;
                v.push(amp * arg.sin());
            }
        }
    }
    normalize(&mut v);
    v
}

fn assemble<T: Scalar>(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, basis: &[Vec<f64>], means: &[Vec<f64>]) -> Result<LabeledDataset<T>> {
    let m: usize = spec.shape.iter().product();
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * m);
    let mut labels = Vec::with_capacity(n);
    for (class, mean) in means.iter().enumerate() {
        for _ in 0..spec.per_class {
            let z: Vec<f64> = gaussian(rng, basis.len()).into_iter().map(|v| v * spec.latent_std).collect();
            let noise = gaussian(rng, m);
            for j in 0..m {
                let mut v = mean[j] + spec.noise_std * noise[j];
                for (zk, b) in z.iter().zip(basis) {
                    v += zk * b[j];
                }
                data.push(v);
            }
            labels.push(class);
        }
    }
    let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = hi - lo;
    let samples = data
        .into_iter()
        .map(|v| T::lit(if span > 0.0 { (v - lo) / span } else { 0.0 }))
        .collect();
    let [c, h, w] = spec.shape;
    let ds = LabeledDataset::new(Tensor::new(vec![n, c, h, w], samples)?, labels)?;
    ds.with_split(spec.test_fraction, spec.seed ^ SPLIT_SALT)
}

/// Keeps the split shuffle independent of the generator stream.
const SPLIT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// Linear manifold with a random orthonormal basis.
pub fn gen_linear_manifold<T: Scalar>(spec: &SyntheticSpec) -> Result<LabeledDataset<T>> {
    spec.validate()?;
    let m: usize = spec.shape.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let basis = orthonormal_basis(&mut rng, m, spec.intrinsic_dim);
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            let mut v = gaussian(&mut rng, m);
            normalize(&mut v);
            v.into_iter().map(|x| x * spec.class_separation).collect()
        })
        .collect();
    assemble(spec, &mut rng, &basis, &means)
}

/// Image-like variant: basis images and class templates are smooth plane
/// waves, so neighbouring pixels and channels are correlated.
pub fn gen_image_manifold<T: Scalar>(spec: &SyntheticSpec) -> Result<LabeledDataset<T>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let basis: Vec<Vec<f64>> = (0..spec.intrinsic_dim).map(|_| smooth_pattern(&mut rng, spec.shape)).collect();
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| smooth_pattern(&mut rng, spec.shape).into_iter().map(|x| x * spec.class_separation).collect())
        .collect();
    assemble(spec, &mut rng, &basis, &means)
}
