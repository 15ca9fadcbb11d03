//! Clustering and feature-selection accuracy.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{GeccoError, Result};

fn choose2(m: u64) -> f64 {
    (m * m.saturating_sub(1) / 2) as f64
}

/// Adjusted Rand index between two labelings of the same samples.
///
/// Equals 1 for identical partitions (up to relabeling) and is 0 in
/// expectation for independent random labelings; it can be negative.
pub fn adjusted_rand_index<A: Eq + Hash, B: Eq + Hash>(a: &[A], b: &[B]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(GeccoError::Shape(format!(
            "labelings have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(GeccoError::Empty("need at least two samples".into()));
    }
    let mut table: HashMap<(&A, &B), u64> = HashMap::new();
    let mut rows: HashMap<&A, u64> = HashMap::new();
    let mut cols: HashMap<&B, u64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&m| choose2(m)).sum();
    let sa: f64 = rows.values().map(|&m| choose2(m)).sum();
    let sb: f64 = cols.values().map(|&m| choose2(m)).sum();
    let expected = sa * sb / choose2(a.len() as u64);
    let max = 0.5 * (sa + sb);
    if max == expected {
        // both partitions trivial in the same way, hence identical
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// F1 score of a selected-feature mask against the true informative mask.
///
/// Two empty masks score 1.
pub fn f1_selection(selected: &[bool], truth: &[bool]) -> Result<f64> {
    if selected.len() != truth.len() {
        return Err(GeccoError::Shape(format!(
            "masks have lengths {} and {}",
            selected.len(),
            truth.len()
        )));
    }
    let tp = selected.iter().zip(truth).filter(|(s, t)| **s && **t).count() as f64;
    let pos = selected.iter().filter(|s| **s).count() as f64;
    let real = truth.iter().filter(|t| **t).count() as f64;
    if pos == 0.0 && real == 0.0 {
        return Ok(1.0);
    }
    if tp == 0.0 {
        return Ok(0.0);
    }
    let (p, r) = (tp / pos, tp / real);
    Ok(2.0 * p * r / (p + r))
}
