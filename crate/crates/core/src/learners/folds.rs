use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;

/// Unit-level fold assignment shared by every time point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    folds: Vec<usize>,
    seed: u64,
}

impl FoldAssignment {
    /// Every unit in one fold: train and predict on the full sample.
    pub fn single(n: usize) -> FoldAssignment {
        FoldAssignment {
            k: 1,
            folds: vec![0; n],
            seed: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, unit: usize) -> usize {
        self.folds[unit]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.folds
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len()).filter(|&i| self.folds[i] == fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.folds {
            s[f] += 1;
        }
        s
    }
}

/// Random balanced `k`-fold split of `n` units, deterministic in `seed`.
pub fn make_folds(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Folds(format!("need at least 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::Folds(format!("{k} folds requested for {n} units")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[rng::streams::FOLDS, n as u64, k as u64]));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % k;
    }
    Ok(FoldAssignment { k, folds, seed })
}

/// `make_folds`, or a single fold when `k <= 1`.
pub fn folds_or_single(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k <= 1 {
        Ok(FoldAssignment::single(n))
    } else {
        make_folds(n, k, seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_units_five_folds() {
        let f = make_folds(10, 5, 1).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
    }

    #[test]
    fn seven_units_five_folds() {
        let mut s = make_folds(7, 5, 1).unwrap().sizes();
        s.sort_unstable_by(|a, b| b.cmp(a));
        assert_eq!(s, vec![2, 2, 1, 1, 1]);
    }

    #[test]
    fn deterministic_and_validated() {
        assert_eq!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 9).unwrap());
        assert_ne!(make_folds(50, 5, 9).unwrap(), make_folds(50, 5, 10).unwrap());
        assert!(make_folds(3, 5, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }
}
