//! Scoring of learned embeddings: KNN accuracy, K-means with ARI/AMI, and
//! KNN-graph geodesic distances.
//!
//! Metrics are computed in `f64` whatever the training precision; embeddings
//! are flattened to one row per sample first.

pub mod cluster;
pub mod geodesic;
pub mod knn;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub use cluster::{ami, ari, cluster_and_score, kmeans, ClusteringResult, KMeansFit};
pub use geodesic::{class_distance_matrix, geodesic_distances, Geodesic};
pub use knn::{knn_accuracy, knn_predict};

/// `N × d` vectors with one label each.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    vectors: Vec<f64>,
    dim: usize,
    pub labels: Vec<usize>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<f64>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        if vectors.len() != dim * labels.len() {
            return Err(Error::Validation(format!(
                "{} values do not form {} vectors of length {dim}",
                vectors.len(),
                labels.len()
            )));
        }
        Ok(Self { vectors, dim, labels })
    }

    /// Flattens every trailing axis of `t` (`[N, ...]`).
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>, labels: Vec<usize>) -> Result<Self> {
        let n = t.outer();
        let dim = t.len().checked_div(n).unwrap_or_else(|| t.shape()[1..].iter().product());
        Self::new(t.data().iter().map(|v| v.as_f64()).collect(), dim, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Metric file contents.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// KNN accuracy keyed by `k`.
    pub knn_accuracy: BTreeMap<usize, f64>,
    pub ari: Option<f64>,
    pub ami: Option<f64>,
    pub inertia: Option<f64>,
}

impl MetricsReport {
    pub fn from_scores(knn: &[(usize, f64)], clustering: Option<&ClusteringResult>) -> Self {
        Self {
            knn_accuracy: knn.iter().copied().collect(),
            ari: clustering.map(|c| c.ari),
            ami: clustering.map(|c| c.ami),
            inertia: clustering.map(|c| c.inertia),
        }
    }
}

/// Comma-separated grid; missing entries are left empty.
pub fn grid_csv(rows: &[Vec<Option<f64>>]) -> String {
    let mut s = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}
