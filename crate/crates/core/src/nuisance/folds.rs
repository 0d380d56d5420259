use rand::seq::SliceRandom;

use crate::error::{GaiError, Result};
use crate::rng::rng_from_seed;

/// Random balanced partition of `n` observations into `k` folds.
///
/// Returns the fold index of every observation. Fold sizes differ by at most
/// one and the assignment is a pure function of `(n, k, seed)`.
pub fn assign_folds(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(GaiError::config(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(GaiError::config(format!("cannot split {n} observations into {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(folds)
}

/// Indices grouped by fold.
pub fn fold_members(folds: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (i, f) in folds.iter().enumerate() {
        out[*f].push(i);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sizes(n: usize, k: usize, seed: u64) -> Vec<usize> {
        let f = assign_folds(n, k, seed).unwrap();
        let mut s: Vec<usize> = fold_members(&f, k).iter().map(Vec::len).collect();
        s.sort_unstable_by(|a, b| b.cmp(a));
        s
    }

    #[test]
    fn balanced() {
        assert_eq!(sizes(10, 5, 1), vec![2; 5]);
        assert_eq!(sizes(7, 3, 99), vec![3, 2, 2]);
    }

    #[test]
    fn deterministic() {
        assert_eq!(assign_folds(50, 5, 11).unwrap(), assign_folds(50, 5, 11).unwrap());
        assert_ne!(assign_folds(50, 5, 11).unwrap(), assign_folds(50, 5, 12).unwrap());
    }

    #[test]
    fn too_few_rows() {
        assert!(assign_folds(3, 5, 0).is_err());
        assert!(assign_folds(10, 1, 0).is_err());
    }
}
