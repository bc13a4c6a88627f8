//! Scoring fitted models against a known hidden path.
//!
//! Fitted state indices are arbitrary, so every comparison first finds the
//! relabelling of fitted states that best agrees with the truth.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..n).collect();
    loop {
        out.push(current.clone());
        // next lexicographic permutation
        let Some(i) = (1..n).rev().find(|&i| current[i - 1] < current[i]) else {
            return out;
        };
        let j = (i..n).rev().find(|&j| current[j] > current[i - 1]).expect("pivot exists");
        current.swap(i - 1, j);
        current[i..].reverse();
    }
}

/// `counts[true][fitted]`.
pub fn confusion(truth: &[usize], fitted: &[usize], num_states: usize) -> Result<Vec<Vec<usize>>> {
    if truth.len() != fitted.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: fitted.len(),
        });
    }
    let mut counts = vec![vec![0; num_states]; num_states];
    for (&a, &b) in truth.iter().zip(fitted) {
        if a >= num_states || b >= num_states {
            return Err(Error::invalid(format!("state index out of range for {num_states} states")));
        }
        counts[a][b] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    /// `mapping[true_state] = fitted_state`.
    pub mapping: Vec<usize>,
    pub accuracy: f64,
}

/// Relabelling maximizing agreement; ties go to the lexicographically first
/// permutation. Brute force, so meant for small state counts.
pub fn best_matching(truth: &[usize], fitted: &[usize], num_states: usize) -> Result<Matching> {
    if truth.is_empty() {
        return Err(Error::invalid("cannot match empty paths"));
    }
    if num_states > 8 {
        return Err(Error::invalid("brute-force matching supports at most 8 states"));
    }
    let counts = confusion(truth, fitted, num_states)?;
    let mut best = (0usize, Vec::new());
    for perm in permutations(num_states) {
        let hits: usize = perm.iter().enumerate().map(|(t, &f)| counts[t][f]).sum();
        if best.1.is_empty() || hits > best.0 {
            best = (hits, perm);
        }
    }
    Ok(Matching {
        mapping: best.1,
        accuracy: best.0 as f64 / truth.len() as f64,
    })
}

/// Max-abs difference between the true transition matrix and the fitted one
/// with rows and columns relabelled by `mapping`.
pub fn matched_transition_error(truth: &DMatrix<f64>, fitted: &DMatrix<f64>, mapping: &[usize]) -> Result<f64> {
    let s = truth.nrows();
    if fitted.shape() != (s, s) || mapping.len() != s {
        return Err(Error::DimensionMismatch {
            expected: s,
            actual: fitted.nrows(),
        });
    }
    let mut worst = 0.0f64;
    for i in 0..s {
        for j in 0..s {
            worst = worst.max((truth[(i, j)] - fitted[(mapping[i], mapping[j])]).abs());
        }
    }
    Ok(worst)
}

/// Fraction of days on which two position series agree exactly.
pub fn agreement_rate(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// Number of index changes along a state path.
pub fn count_switches(path: &[usize]) -> usize {
    path.windows(2).filter(|w| w[0] != w[1]).count()
}
