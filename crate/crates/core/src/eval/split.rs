//! Seeded train/test partitioning.
//!
//! The shuffle is Fisher–Yates driven by a 64-bit LCG with Knuth's MMIX
//! constants: `s' = s * 6364136223846793005 + 1442695040888963407 (mod 2^64)`.
//! Each draw uses the top 31 bits of the new state, reduced modulo the
//! remaining range. The starting state is the seed itself.

use serde::{Deserialize, Serialize};

use super::EvalError;

const LCG_MUL: u64 = 6_364_136_223_846_793_005;
const LCG_INC: u64 = 1_442_695_040_888_963_407;

#[derive(Debug, Clone)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
        self.state
    }

    /// Uniform-ish draw in `0..bound`.
    pub fn below(&mut self, bound: u64) -> u64 {
        (self.next_u64() >> 33) % bound
    }
}

/// Shuffles in place: for i from n-1 down to 1, swap i with a draw in 0..=i.
pub fn shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = Lcg64::new(seed);
    for i in (1..items.len()).rev() {
        let j = rng.below(i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

pub fn split_dataset<T: Clone>(items: &[T], train_n: usize, test_n: usize, seed: u64) -> Result<DatasetSplit<T>, EvalError> {
    if train_n + test_n > items.len() {
        return Err(EvalError::InsufficientItems { requested: train_n + test_n, available: items.len() });
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    shuffle(&mut order, seed);
    let pick = |range: &[usize]| range.iter().map(|&i| items[i].clone()).collect::<Vec<_>>();
    Ok(DatasetSplit {
        train: pick(&order[..train_n]),
        test: pick(&order[train_n..train_n + test_n]),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Expected values come from an independent big-integer implementation.
    #[test]
    fn lcg_stream_is_pinned() {
        let mut r = Lcg64::new(42);
        assert_eq!(r.next_u64(), 0x9177_8aed_87ee_5eb1);
        assert_eq!(r.next_u64(), 0x39b7_f8a5_c64c_f56c);
        assert_eq!(r.next_u64(), 0x69af_c5a5_e88b_394b);
    }

    #[test]
    fn shuffle_is_pinned() {
        let mut v: Vec<u32> = (0..10).collect();
        shuffle(&mut v, 42);
        assert_eq!(v, vec![3, 8, 0, 9, 1, 6, 7, 2, 5, 4]);
        let items: Vec<u32> = (0..430).collect();
        let split = split_dataset(&items, 100, 200, 42).unwrap();
        assert_eq!(&split.train[..10], &[148, 138, 35, 311, 157, 392, 204, 396, 109, 16]);
    }

    #[test]
    fn split_sizes_disjoint_deterministic() {
        let items: Vec<u32> = (0..430).collect();
        let a = split_dataset(&items, 100, 200, 42).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (100, 200));
        assert!(a.train.iter().all(|x| !a.test.contains(x)));
        assert_eq!(a, split_dataset(&items, 100, 200, 42).unwrap());
        assert_ne!(a.train, split_dataset(&items, 100, 200, 43).unwrap().train);
        assert!(matches!(split_dataset(&items, 300, 200, 42), Err(EvalError::InsufficientItems { .. })));
    }
}
