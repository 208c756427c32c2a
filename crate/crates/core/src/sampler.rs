//! Fitness-proportional (roulette) sampling over integer weights.

use rand::Rng;

/// Fenwick tree over non-negative integer weights.
///
/// Sampling and point updates are `O(log n)`. Weights are integers so the
/// prefix sums are exact and a zero-weight slot can never be drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FenwickSampler {
    tree: Vec<u64>,
    weights: Vec<u64>,
    total: u64,
    top_bit: usize,
}

impl FenwickSampler {
    pub fn new(weights: &[u64]) -> Self {
        let n = weights.len();
        let mut tree = vec![0u64; n + 1];
        for (i, &w) in weights.iter().enumerate() {
            tree[i + 1] += w;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        let top_bit = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        FenwickSampler {
            tree,
            weights: weights.to_vec(),
            total: weights.iter().sum(),
            top_bit,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn weight(&self, i: usize) -> u64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[u64] {
        &self.weights
    }

    pub fn set(&mut self, i: usize, w: u64) {
        let old = self.weights[i];
        if old == w {
            return;
        }
        self.weights[i] = w;
        self.total = self.total - old + w;
        let mut j = i + 1;
        while j < self.tree.len() {
            self.tree[j] = self.tree[j] - old + w;
            j += j & j.wrapping_neg();
        }
    }

    /// Sum of weights in `0..i`.
    pub fn prefix_sum(&self, i: usize) -> u64 {
        let mut j = i;
        let mut s = 0;
        while j > 0 {
            s += self.tree[j];
            j &= j - 1;
        }
        s
    }

    /// Smallest index `i` with `prefix_sum(i + 1) > target`.
    pub fn find(&self, target: u64) -> usize {
        debug_assert!(target < self.total);
        let n = self.weights.len();
        let mut pos = 0;
        let mut rem = target;
        let mut step = self.top_bit;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= rem {
                pos = next;
                rem -= self.tree[next];
            }
            step >>= 1;
        }
        pos
    }

    /// Draws index `i` with probability `weight(i) / total()`.
    ///
    /// Returns `None` when every weight is zero.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        if self.total == 0 {
            return None;
        }
        Some(self.find(rng.gen_range(0..self.total)))
    }
}
