use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Indices sorted by descending score, ties by ascending index.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Average precision: `Σ_n (R_n − R_{n−1})·P_n` over the ranked list.
pub fn pr_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("pr_auc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("pr_auc received a NaN score".into()));
    }
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 {
        return Err(Error::Data("pr_auc needs at least one positive label".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in ranking(scores).iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

/// Top-`k` classes of one score row, ties by ascending class index.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order = ranking(scores);
    order.truncate(k);
    order
}

/// Mean over examples of `|top-k ∩ y| / min(k, |y|)`.
pub fn precision_at_k(scores: &[Vec<f64>], labels: &[Vec<usize>], k: usize) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::shape("precision_at_k", &[scores.len()], &[labels.len()]));
    }
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let mut total = 0.0;
    for (row, y) in scores.iter().zip(labels) {
        if y.is_empty() {
            return Err(Error::Data("precision_at_k needs nonempty label sets".into()));
        }
        let hits = top_k(row, k).iter().filter(|c| y.contains(c)).count();
        total += hits as f64 / k.min(y.len()) as f64;
    }
    Ok(total / scores.len() as f64)
}

/// Expected precision@k of a uniformly random ranking over `classes` classes.
pub fn random_precision_at_k(labels: &[Vec<usize>], classes: usize, k: usize) -> Result<f64> {
    if labels.is_empty() || classes == 0 || k == 0 {
        return Err(Error::Data("random baseline needs labels, classes and k".into()));
    }
    let total: f64 = labels
        .iter()
        .map(|y| {
            let expected_hits = k.min(classes) as f64 * y.len() as f64 / classes as f64;
            expected_hits / k.min(y.len()).max(1) as f64
        })
        .sum();
    Ok(total / labels.len() as f64)
}
