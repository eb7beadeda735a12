//! Labeled image datasets, seeded batching, synthetic generators and IDX I/O.

pub mod idx;
pub mod synthetic;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::Shape3;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use idx::{load_idx, read_idx_tensor, write_idx_labels, write_idx_tensor_f64, write_idx_u8_images};
pub use synthetic::{gen_image_manifold, gen_linear_manifold, SyntheticSpec};

/// Samples `[N, C, H, W]`, one label per sample and a train/test split.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset<T> {
    pub samples: Tensor<T>,
    pub labels: Vec<usize>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl<T: Scalar> LabeledDataset<T> {
    /// Every sample in the train split.
    pub fn new(samples: Tensor<T>, labels: Vec<usize>) -> Result<Self> {
        let n = labels.len();
        let ds = Self {
            samples,
            labels,
            train: (0..n).collect(),
            test: Vec::new(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.rank() != 4 {
            return Err(Error::Validation(format!(
                "dataset samples must be [N, C, H, W], got {:?}",
                self.samples.shape()
            )));
        }
        let n = self.samples.outer();
        if self.labels.len() != n {
            return Err(Error::Validation(format!("{n} samples but {} labels", self.labels.len())));
        }
        let mut seen = vec![false; n];
        for &i in self.train.iter().chain(&self.test) {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::Validation(format!("split index {i} is out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Validation("train/test split does not cover the dataset".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_shape(&self) -> Shape3 {
        let s = self.samples.shape();
        [s[1], s[2], s[3]]
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    /// True when every value lies in `[0, 1]`.
    pub fn in_unit_range(&self) -> bool {
        self.samples.data().iter().all(|&v| v >= T::zero() && v <= T::one())
    }

    /// Stratified split: within each class a seeded shuffle sends
    /// `round(test_fraction · count)` samples to the test split.
    pub fn with_split(mut self, test_fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Validation(format!("test fraction {test_fraction} not in [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for class in 0..self.num_classes() {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == class).collect();
            members.shuffle(&mut rng);
            let k = (test_fraction * members.len() as f64).round() as usize;
            test.extend_from_slice(&members[..k]);
            train.extend_from_slice(&members[k..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        self.train = train;
        self.test = test;
        self.validate()?;
        Ok(self)
    }

    /// Appends `other` as the test split of a combined dataset.
    pub fn with_test_set(self, other: Self) -> Result<Self> {
        if self.sample_shape() != other.sample_shape() {
            return Err(Error::Validation("train and test samples differ in shape".into()));
        }
        let n = self.len();
        let m = other.len();
        let mut data = self.samples.into_data();
        data.extend_from_slice(other.samples.data());
        let [c, h, w] = [other.samples.shape()[1], other.samples.shape()[2], other.samples.shape()[3]];
        let mut labels = self.labels;
        labels.extend(other.labels);
        let ds = Self {
            samples: Tensor::new(vec![n + m, c, h, w], data)?,
            labels,
            train: (0..n).collect(),
            test: (n..n + m).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn gather(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        (self.samples.select(indices), indices.iter().map(|&i| self.labels[i]).collect())
    }
}

/// Seeded shuffle of `indices` for one epoch, cut into batches; a final batch
/// with fewer than two samples is dropped.
pub fn batch_indices(indices: &[usize], batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 2, "batch size must be at least 2");
    let mut order = indices.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect()
}

/// Training-split batches for one epoch.
pub fn batches<T: Scalar>(ds: &LabeledDataset<T>, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Tensor<T>>> {
    if batch_size < 2 {
        return Err(Error::Validation(format!("batch size must be at least 2, got {batch_size}")));
    }
    Ok(batch_indices(&ds.train, batch_size, seed, epoch)
        .iter()
        .map(|b| ds.samples.select(b))
        .collect())
}
