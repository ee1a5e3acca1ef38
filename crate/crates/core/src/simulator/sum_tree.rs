/// Complete binary tree of nonnegative weights supporting point updates and
/// proportional sampling in `O(log n)`.
///
/// Internal nodes are recomputed from their children on every update, so no
/// rounding drift accumulates in the root.
#[derive(Debug, Clone)]
pub struct SumTree {
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(len: usize) -> Self {
        let leaves = len.max(1).next_power_of_two();
        Self {
            leaves,
            nodes: vec![0.0; 2 * leaves],
        }
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        self.nodes[self.leaves + i]
    }

    pub fn set(&mut self, i: usize, weight: f64) {
        debug_assert!(weight >= 0.0 && weight.is_finite(), "bad weight {weight}");
        let mut k = self.leaves + i;
        self.nodes[k] = weight;
        while k > 1 {
            k >>= 1;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Index `i` such that the prefix sum before `i` is `<= u` and the prefix
    /// through `i` is `> u`, for `u` in `[0, total)`. Zero-weight leaves are
    /// never returned.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.leaves {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] == 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        let mut i = k - self.leaves;
        // Rounding can land on an empty leaf at the far right; step back.
        while self.nodes[self.leaves + i] == 0.0 && i > 0 {
            i -= 1;
        }
        i
    }
}
