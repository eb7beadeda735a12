use std::cmp::Reverse;
use std::collections::BinaryHeap;

use super::{sq_dist, EmbeddingSet};
use crate::error::{Error, Result};

/// Rescaled shortest-path distances over the symmetrised KNN graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Geodesic {
    pub n: usize,
    /// Row-major `n × n`, finite entries divided by the largest one;
    /// unreachable pairs are 1.
    pub distances: Vec<f64>,
    pub components: usize,
}

impl Geodesic {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.distances[i * self.n + j]
    }

    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        self.distances.chunks(self.n.max(1)).map(|r| r.iter().map(|&v| Some(v)).collect()).collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Edges join each point to its `k` nearest others (either direction).
/// `k` is capped at `n - 1`.
pub fn geodesic_distances(set: &EmbeddingSet, k: usize) -> Result<Geodesic> {
    let n = set.len();
    if n == 0 || k == 0 {
        return Err(Error::Validation("geodesic distances need points and k >= 1".into()));
    }
    let k = k.min(n - 1);
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        order.clear();
        order.extend((0..n).filter(|&j| j != i).map(|j| (sq_dist(set.vector(i), set.vector(j)), j)));
        if k > 0 {
            order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        }
        for &(d, j) in &order[..k] {
            adj[i].push((j, d.sqrt()));
            adj[j].push((i, d.sqrt()));
        }
    }

    let mut dist = vec![f64::INFINITY; n * n];
    let mut heap = BinaryHeap::new();
    for s in 0..n {
        let row = &mut dist[s * n..(s + 1) * n];
        row[s] = 0.0;
        heap.push(Reverse((Dist(0.0), s)));
        while let Some(Reverse((Dist(d), u))) = heap.pop() {
            if d > row[u] {
                continue;
            }
            for &(v, w) in &adj[u] {
                let nd = d + w;
                if nd < row[v] {
                    row[v] = nd;
                    heap.push(Reverse((Dist(nd), v)));
                }
            }
        }
    }
    // Dijkstra sums in different orders per source; restore exact symmetry.
    for i in 0..n {
        for j in i + 1..n {
            let m = dist[i * n + j].min(dist[j * n + i]);
            dist[i * n + j] = m;
            dist[j * n + i] = m;
        }
    }

    let mut components = 0;
    let mut seen = vec![false; n];
    for s in 0..n {
        if !seen[s] {
            components += 1;
            for j in 0..n {
                if dist[s * n + j].is_finite() {
                    seen[j] = true;
                }
            }
        }
    }
    if components > 1 {
        log::warn!("KNN graph (k = {k}) has {components} components; unreachable pairs get distance 1");
    }

    let max = dist.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    for d in &mut dist {
        *d = if !d.is_finite() {
            1.0
        } else if max > 0.0 {
            *d / max
        } else {
            0.0
        };
    }
    Ok(Geodesic {
        n,
        distances: dist,
        components,
    })
}

/// Mean geodesic distance between every pair of classes. Self-pairs are
/// excluded; an entry with no pairs is `None`.
pub fn class_distance_matrix(geo: &Geodesic, labels: &[usize]) -> Result<Vec<Vec<Option<f64>>>> {
    if labels.len() != geo.n {
        return Err(Error::Validation(format!("{} labels for {} points", labels.len(), geo.n)));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sum = vec![vec![0.0; k]; k];
    let mut count = vec![vec![0usize; k]; k];
    for i in 0..geo.n {
        for j in 0..geo.n {
            if i != j {
                sum[labels[i]][labels[j]] += geo.at(i, j);
                count[labels[i]][labels[j]] += 1;
            }
        }
    }
    Ok((0..k)
        .map(|a| (0..k).map(|b| (count[a][b] > 0).then(|| sum[a][b] / count[a][b] as f64)).collect())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> EmbeddingSet {
        EmbeddingSet::new(xs.to_vec(), 1, vec![0; xs.len()]).unwrap()
    }

    #[test]
    fn collinear_points() {
        let g = geodesic_distances(&line(&[0.0, 1.0, 2.0]), 2).unwrap();
        assert_eq!(g.distances, vec![0.0, 0.5, 1.0, 0.5, 0.0, 0.5, 1.0, 0.5, 0.0]);
        assert_eq!(g.components, 1);
    }

    #[test]
    fn path_follows_the_chain() {
        // With k = 1 the end points connect only through the middle ones.
        let g = geodesic_distances(&line(&[0.0, 1.0, 3.0, 6.0]), 1).unwrap();
        assert_eq!(g.at(0, 3), 1.0);
        assert_eq!(g.at(0, 2), 0.5);
    }

    #[test]
    fn disconnected_pairs_get_one() {
        let g = geodesic_distances(&line(&[0.0, 1.0, 100.0, 101.0]), 1).unwrap();
        assert_eq!(g.components, 2);
        assert_eq!(g.at(0, 1), 1.0);
        assert_eq!(g.at(0, 2), 1.0);
    }

    #[test]
    fn singleton_class_has_missing_diagonal() {
        let g = geodesic_distances(&line(&[0.0, 1.0, 2.0]), 2).unwrap();
        let m = class_distance_matrix(&g, &[0, 0, 1]).unwrap();
        assert_eq!(m[0][0], Some(0.5));
        assert_eq!(m[1][1], None);
        assert_eq!(m[0][1], m[1][0]);
        assert_eq!(m[0][1], Some(0.75));
    }
}
