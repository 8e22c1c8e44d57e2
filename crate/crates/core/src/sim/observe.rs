use serde::Serialize;

use super::state::SimState;

/// Scaled mass empirical measure: weight `occ[k] / N` at `k / N` for every
/// site that is not super-slow. Super-slow sites carry macroscopically
/// infinite mass and are reported raw.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalMeasure {
    pub n: usize,
    /// Per-site weight; zero at super-slow sites.
    pub weights: Vec<f64>,
    /// `(defect index, site, occupancy)` for each super-slow defect.
    pub super_slow: Vec<(usize, usize, u64)>,
}

impl EmpiricalMeasure {
    pub fn of(state: &SimState) -> Self {
        let n = state.n();
        let nf = n as f64;
        let mut weights: Vec<f64> = state.occupancies().iter().map(|&o| o as f64 / nf).collect();
        let mut super_slow = Vec::new();
        for (j, &k) in state.defect_sites().iter().enumerate() {
            if state.is_super_slow(k) {
                super_slow.push((j, k, state.occupancies()[k]));
                weights[k] = 0.0;
            }
        }
        EmpiricalMeasure { n, weights, super_slow }
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `<G, pi^N>` for a test function on the unit torus.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        let nf = self.n as f64;
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(k, &w)| w * g(k as f64 / nf))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    /// `{k - l, ..., k + l}`
    Centered,
    /// `{k + 1, ..., k + 2l + 1}`, which excludes `k` itself.
    Right,
}

/// Mean occupancy over a block of `2l + 1` sites.
pub fn block_average(occ: &[u64], k: usize, l: usize, side: Side) -> f64 {
    let n = occ.len();
    assert!(2 * l + 1 < n, "block of {} sites does not fit on {n}", 2 * l + 1);
    let start = match side {
        Side::Centered => k + n - l,
        Side::Right => k + 1,
    };
    let sum: u64 = (start..start + 2 * l + 1).map(|y| occ[y % n]).sum();
    sum as f64 / (2 * l + 1) as f64
}
