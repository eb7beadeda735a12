use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sq_dist, EmbeddingSet};
use crate::error::{Error, Result};

pub const MAX_LLOYD_ITERS: usize = 300;

/// One K-means run.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    /// Inertia after each assignment step of the winning restart.
    pub trace: Vec<f64>,
    pub restart: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub inertia: f64,
    pub ari: f64,
    pub ami: f64,
}

fn plus_plus(set: &EmbeddingSet, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = set.len();
    let mut centroids = vec![set.vector(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(set.vector(i), &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    chosen = i;
                    break;
                }
                r -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = set.vector(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(set.vector(i), &c));
        }
        centroids.push(c);
    }
    centroids
}

fn assign(set: &EmbeddingSet, centroids: &[Vec<f64>], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, a) in out.iter_mut().enumerate() {
        let v = set.vector(i);
        let (best, d) = centroids
            .iter()
            .enumerate()
            .map(|(c, m)| (c, sq_dist(v, m)))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        *a = best;
        inertia += d;
    }
    inertia
}

/// An emptied cluster keeps its previous centroid.
fn update(set: &EmbeddingSet, assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let d = set.dim();
    let mut sums = vec![vec![0.0; d]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        sums[a].iter_mut().zip(set.vector(i)).for_each(|(s, v)| *s += v);
    }
    for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
        if n > 0 {
            *c = s.into_iter().map(|v| v / n as f64).collect();
        }
    }
}

fn lloyd(set: &EmbeddingSet, mut centroids: Vec<Vec<f64>>, restart: usize) -> KMeansFit {
    let mut assignments = vec![usize::MAX; set.len()];
    let mut next = vec![0; set.len()];
    let mut trace = Vec::new();
    for _ in 0..MAX_LLOYD_ITERS {
        let inertia = assign(set, &centroids, &mut next);
        trace.push(inertia);
        if next == assignments {
            break;
        }
        assignments.clone_from(&next);
        update(set, &assignments, &mut centroids);
    }
    KMeansFit {
        inertia: assign(set, &centroids, &mut next),
        assignments: next,
        centroids,
        trace,
        restart,
    }
}

/// K-means++ seeding and Lloyd iterations, repeated `restarts` times; the
/// lowest final inertia wins (earliest restart on ties). Restart `r` draws
/// from stream `r` of a generator seeded with `seed`.
pub fn kmeans(set: &EmbeddingSet, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 || k > set.len() {
        return Err(Error::Validation(format!("k = {k} must lie in 1..={}", set.len())));
    }
    if restarts == 0 {
        return Err(Error::Validation("at least one restart is required".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let fit = lloyd(set, plus_plus(set, k, &mut rng), r);
        if best.as_ref().is_none_or(|b| fit.inertia < b.inertia) {
            best = Some(fit);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Clusters `set` into `k` groups and scores the partition against its labels.
pub fn cluster_and_score(set: &EmbeddingSet, k: usize, restarts: usize, seed: u64) -> Result<ClusteringResult> {
    let fit = kmeans(set, k, restarts, seed)?;
    Ok(ClusteringResult {
        ari: ari(&set.labels, &fit.assignments)?,
        ami: ami(&set.labels, &fit.assignments)?,
        assignments: fit.assignments,
        inertia: fit.inertia,
    })
}

struct Contingency {
    n: usize,
    cells: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn relabel(x: &[usize]) -> (Vec<usize>, usize) {
    let mut ids = std::collections::BTreeMap::new();
    let out = x
        .iter()
        .map(|v| {
            let next = ids.len();
            *ids.entry(*v).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn contingency(a: &[usize], b: &[usize]) -> Result<Contingency> {
    if a.len() != b.len() {
        return Err(Error::Validation(format!("labelings have lengths {} and {}", a.len(), b.len())));
    }
    let (a, ka) = relabel(a);
    let (b, kb) = relabel(b);
    let mut cells = vec![vec![0; kb]; ka];
    for (&i, &j) in a.iter().zip(&b) {
        cells[i][j] += 1;
    }
    let rows = cells.iter().map(|r| r.iter().sum()).collect();
    let cols = (0..kb).map(|j| cells.iter().map(|r| r[j]).sum()).collect();
    Ok(Contingency {
        n: a.len(),
        cells,
        rows,
        cols,
    })
}

fn pairs(m: usize) -> f64 {
    (m * m.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index. Two trivial identical partitions (both one cluster,
/// or both all singletons) score 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    let index: f64 = t.cells.iter().flatten().map(|&m| pairs(m)).sum();
    let sa: f64 = t.rows.iter().map(|&m| pairs(m)).sum();
    let sb: f64 = t.cols.iter().map(|&m| pairs(m)).sum();
    let total = pairs(t.n);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Expected mutual information under the permutation model.
fn expected_mi(t: &Contingency) -> f64 {
    let n = t.n;
    let mut lf = vec![0.0; n + 1];
    for i in 1..=n {
        lf[i] = lf[i - 1] + (i as f64).ln();
    }
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in &t.rows {
        for &bj in &t.cols {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            let fixed = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj] - lf[n];
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (ai as f64 * bj as f64)).ln();
                let log_p = fixed - lf[nij] - lf[ai - nij] - lf[bj - nij] - lf[n + nij - ai - bj];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information, normalised by `max(H(a), H(b))`. Two
/// single-cluster labelings score 1.
pub fn ami(a: &[usize], b: &[usize]) -> Result<f64> {
    let t = contingency(a, b)?;
    if t.rows.len() <= 1 && t.cols.len() <= 1 {
        return Ok(1.0);
    }
    let nf = t.n as f64;
    let mut mi = 0.0;
    for (i, row) in t.cells.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (nf * c / (t.rows[i] as f64 * t.cols[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mi(&t);
    let h = entropy(&t.rows, t.n).max(entropy(&t.cols, t.n));
    let denom = h - emi;
    let denom = if denom < 0.0 { denom.min(-f64::EPSILON) } else { denom.max(f64::EPSILON) };
    Ok((mi - emi) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> EmbeddingSet {
        let mut v = Vec::new();
        let mut l = Vec::new();
        for i in 0..20 {
            let c = (i % 2) as f64 * 100.0;
            v.extend_from_slice(&[c + (i as f64 * 0.37).sin(), c + (i as f64 * 0.11).cos()]);
            l.push(i % 2);
        }
        EmbeddingSet::new(v, 2, l).unwrap()
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let r = cluster_and_score(&blobs(), 2, 10, 7).unwrap();
        assert_eq!(r.ari, 1.0);
        assert!((r.ami - 1.0).abs() < 1e-12);
    }

    #[test]
    fn n_equals_k_gives_zero_inertia() {
        let s = EmbeddingSet::new(vec![0.0, 1.0, 5.0, -2.0], 1, vec![0, 1, 2, 3]).unwrap();
        let fit = kmeans(&s, 4, 3, 1).unwrap();
        assert_eq!(fit.inertia, 0.0);
        let mut a = fit.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, vec![0, 1, 2, 3]);
    }

    #[test]
    fn seeded_runs_repeat() {
        assert_eq!(kmeans(&blobs(), 3, 4, 9).unwrap(), kmeans(&blobs(), 3, 4, 9).unwrap());
    }

    #[test]
    fn k_above_n_fails() {
        assert!(kmeans(&blobs(), 21, 1, 0).is_err());
    }

    #[test]
    fn ari_ami_known_values() {
        let a = [0, 0, 1, 1, 2, 2];
        let b = [5, 5, 3, 3, 9, 9];
        assert_eq!(ari(&a, &b).unwrap(), 1.0);
        assert!((ami(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        // sklearn: adjusted_rand_score([0,0,1,1],[0,0,1,2]) = 0.5714285714285715
        assert!((ari(&[0, 0, 1, 1], &[0, 0, 1, 2]).unwrap() - 4.0 / 7.0).abs() < 1e-12);
        assert!(ari(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ami_is_near_zero_for_independent_labelings() {
        let a: Vec<usize> = (0..200).map(|i| i % 4).collect();
        let b: Vec<usize> = (0..200).map(|i| (i / 50) % 4).collect();
        // Each block of 50 holds a balanced mix of a's classes.
        assert!(ami(&a, &b).unwrap().abs() < 0.02);
    }
}
