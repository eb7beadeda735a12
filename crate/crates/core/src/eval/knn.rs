use super::{sq_dist, EmbeddingSet};
use crate::error::{Error, Result};

fn check(train: &EmbeddingSet, test: &EmbeddingSet, k: usize) -> Result<()> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::Validation("KNN needs nonempty train and test sets".into()));
    }
    if train.dim() != test.dim() {
        return Err(Error::Validation(format!(
            "train vectors have length {}, test vectors {}",
            train.dim(),
            test.dim()
        )));
    }
    if k == 0 || k > train.len() {
        return Err(Error::Validation(format!("k = {k} must lie in 1..={}", train.len())));
    }
    Ok(())
}

/// Majority label among the `k` nearest training vectors of each test vector.
/// Neighbours at equal distance are taken in training order; a vote tie goes
/// to the label with the smaller summed distance, then the smaller label.
pub fn knn_predict(train: &EmbeddingSet, test: &EmbeddingSet, k: usize) -> Result<Vec<usize>> {
    check(train, test, k)?;
    let classes = train.labels.iter().max().map_or(0, |m| m + 1);
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(train.len());
    let mut out = Vec::with_capacity(test.len());
    for q in 0..test.len() {
        let v = test.vector(q);
        order.clear();
        order.extend((0..train.len()).map(|i| (sq_dist(v, train.vector(i)), i)));
        order.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut votes = vec![(0usize, 0.0f64); classes];
        for &(d, i) in &order[..k] {
            let slot = &mut votes[train.labels[i]];
            slot.0 += 1;
            slot.1 += d.sqrt();
        }
        let best = (0..classes)
            .filter(|&c| votes[c].0 > 0)
            .min_by(|&a, &b| {
                votes[b].0.cmp(&votes[a].0).then(votes[a].1.total_cmp(&votes[b].1)).then(a.cmp(&b))
            })
            .expect("k >= 1 gives at least one vote");
        out.push(best);
    }
    Ok(out)
}

/// Top-1 accuracy of [`knn_predict`] on `test`.
pub fn knn_accuracy(train: &EmbeddingSet, test: &EmbeddingSet, k: usize) -> Result<f64> {
    let pred = knn_predict(train, test, k)?;
    let hits = pred.iter().zip(&test.labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / test.len() as f64)
}
