/// Complete binary tree of partial sums over per-site weights.
///
/// Parents are recomputed as `left + right` on every update, never
/// patched by deltas, so the tree is a pure function of its leaves and a
/// rebuild reproduces it bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct SumTree {
    len: usize,
    leaves: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(weights: &[f64]) -> Self {
        let len = weights.len();
        let leaves = len.next_power_of_two().max(1);
        let mut nodes = vec![0.0; 2 * leaves];
        nodes[leaves..leaves + len].copy_from_slice(weights);
        for i in (1..leaves).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        SumTree { len, leaves, nodes }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub fn get(&self, k: usize) -> f64 {
        self.nodes[self.leaves + k]
    }

    #[inline]
    pub fn set(&mut self, k: usize, w: f64) {
        let mut i = self.leaves + k;
        self.nodes[i] = w;
        i >>= 1;
        while i > 0 {
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1];
            i >>= 1;
        }
    }

    /// Index `k` with `sum_{i<k} w_i <= u < sum_{i<=k} w_i`, for `u` in
    /// `[0, total)`. Never returns a zero-weight leaf while the total is
    /// positive, even when rounding pushes `u` past a boundary.
    #[inline]
    pub fn sample(&self, mut u: f64) -> usize {
        let mut i = 1;
        while i < self.leaves {
            let left = self.nodes[2 * i];
            if u < left || self.nodes[2 * i + 1] <= 0.0 {
                i *= 2;
            } else {
                u -= left;
                i = 2 * i + 1;
            }
        }
        i - self.leaves
    }

    /// Prefix sum `sum_{i<=k} w_i`.
    pub fn prefix(&self, k: usize) -> f64 {
        (0..=k).map(|i| self.get(i)).sum()
    }
}
