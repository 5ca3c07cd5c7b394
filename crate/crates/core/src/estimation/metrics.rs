//! Clustering agreement, label matching and small test statistics.

use std::collections::HashMap;

use nalgebra::DMatrix;
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{Error, Result};

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index of two labelings of the same items.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), got: b.len() });
    }
    let n = a.len() as u64;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sa: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sb: f64 = cols.values().map(|&c| choose2(c)).sum();
    let total = choose2(n);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sa * sb / total;
    let max = 0.5 * (sa + sb);
    if max == expected {
        return Ok(1.0);
    }
    Ok((index - expected) / (max - expected))
}

/// Minimum-cost assignment on a square cost matrix: `result[row] = column`.
pub fn hungarian(cost: &DMatrix<f64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // potentials formulation, 1-based with a virtual row/column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Relabels `estimated` to maximise agreement with `truth`; both use labels `0..k`.
pub fn match_labels(truth: &[usize], estimated: &[usize], k: usize) -> Result<Vec<usize>> {
    if truth.len() != estimated.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: estimated.len() });
    }
    let mut overlap = DMatrix::zeros(k, k);
    for (&t, &e) in truth.iter().zip(estimated) {
        if t >= k || e >= k {
            return Err(Error::InvalidInput(format!("label outside 0..{k}")));
        }
        overlap[(e, t)] -= 1.0;
    }
    let map = hungarian(&overlap);
    Ok(estimated.iter().map(|&e| map[e]).collect())
}

/// Fraction of disagreeing labels after optimal relabelling.
pub fn misclassification_rate(truth: &[usize], estimated: &[usize], k: usize) -> Result<f64> {
    let relabelled = match_labels(truth, estimated, k)?;
    let wrong = truth.iter().zip(&relabelled).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / truth.len().max(1) as f64)
}

/// Permutation `perm` with `estimated.row(perm[k])` matched to `truth.row(k)`,
/// minimising total Euclidean distance.
pub fn match_rows(truth: &DMatrix<f64>, estimated: &DMatrix<f64>) -> Result<Vec<usize>> {
    if truth.shape() != estimated.shape() {
        return Err(Error::DimensionMismatch { expected: truth.nrows(), got: estimated.nrows() });
    }
    let k = truth.nrows();
    let cost = DMatrix::from_fn(k, k, |i, j| (truth.row(i) - estimated.row(j)).norm());
    Ok(hungarian(&cost))
}

/// Hausdorff distance between two finite point sets (rows).
pub fn hausdorff_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let directed = |x: &DMatrix<f64>, y: &DMatrix<f64>| {
        x.row_iter()
            .map(|r| y.row_iter().map(|s| (r - s).norm()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// One-sided sign test: `P(Bin(trials, 1/2) >= successes)`.
pub fn sign_test_p_value(successes: usize, trials: usize) -> f64 {
    if successes == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, trials as u64).expect("valid binomial");
    1.0 - b.cdf(successes as u64 - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_assignment(cost: &DMatrix<f64>) -> f64 {
        fn rec(cost: &DMatrix<f64>, row: usize, used: &mut Vec<bool>) -> f64 {
            if row == cost.nrows() {
                return 0.0;
            }
            let mut best = f64::INFINITY;
            for j in 0..cost.ncols() {
                if !used[j] {
                    used[j] = true;
                    best = best.min(cost[(row, j)] + rec(cost, row + 1, used));
                    used[j] = false;
                }
            }
            best
        }
        rec(cost, 0, &mut vec![false; cost.ncols()])
    }

    #[test]
    fn hungarian_matches_brute_force() {
        for seed in 0..40u64 {
            let n = 1 + (seed % 6) as usize;
            let cost = DMatrix::from_fn(n, n, |i, j| (((i * 7 + j * 13 + seed as usize * 31) % 17) as f64).sin());
            let a = hungarian(&cost);
            let total: f64 = a.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
            assert!((total - brute_force_assignment(&cost)).abs() < 1e-12);
            let mut seen = a.clone();
            seen.sort();
            assert_eq!(seen, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn ari_examples() {
        let a = [0, 0, 1, 1, 2, 2];
        assert_eq!(adjusted_rand_index(&a, &a).unwrap(), 1.0);
        let renamed = [2, 2, 0, 0, 1, 1];
        assert!((adjusted_rand_index(&a, &renamed).unwrap() - 1.0).abs() < 1e-15);
        // one cluster vs four singletons: index 0, expected 0, max 3
        assert_eq!(adjusted_rand_index(&[0, 0, 0, 0], &[0, 1, 2, 3]).unwrap(), 0.0);
        assert!(adjusted_rand_index(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn ari_against_contingency_formula() {
        // contingency [[2,1],[0,3]]: index 4, row sums (3,3) -> 6, col sums (2,4) -> 7, total 15
        let a = [0, 0, 0, 1, 1, 1];
        let b = [0, 0, 1, 1, 1, 1];
        let expected_index = 6.0 * 7.0 / 15.0;
        let want = (4.0 - expected_index) / (6.5 - expected_index);
        assert!((adjusted_rand_index(&a, &b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn label_matching() {
        let truth = [0, 0, 1, 1, 1];
        let est = [1, 1, 0, 0, 1];
        assert_eq!(match_labels(&truth, &est, 2).unwrap(), vec![0, 0, 1, 1, 0]);
        assert!((misclassification_rate(&truth, &est, 2).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn hausdorff_examples() {
        let a = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[1.0, 3.0]);
        assert_eq!(hausdorff_distance(&a, &b), 2.0);
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
    }

    #[test]
    fn sign_test_tail() {
        assert!((sign_test_p_value(20, 20) - 0.5f64.powi(20)).abs() < 1e-18);
        assert_eq!(sign_test_p_value(0, 20), 1.0);
        // P(X >= 15 | n = 20) = 21700 / 2^20
        assert!((sign_test_p_value(15, 20) - 21700.0 / 1048576.0).abs() < 1e-12);
    }
}
