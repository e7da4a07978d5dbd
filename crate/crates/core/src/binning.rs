//! Least-squares Monte Carlo conditional expectations on an indicator
//! basis: partition the Markov state into bins, average within each bin.
//!
//! Regression on indicator functions of a partition is exactly the
//! piecewise-constant least-squares fit, so conditional means, variances
//! and covariances all reduce to per-bin sample moments.

use rayon::prelude::*;

use crate::error::{HedgeError, Result};
use crate::num::count;
use crate::Scalar;

// Paths per parallel accumulation block. Partial sums are combined in
// block order, so results do not depend on the worker count.
const BLOCK: usize = 16 * 1024;

/// Partition of the per-path state into bins with (approximately)
/// equal-probability quantile edges per dimension.
#[derive(Debug, Clone)]
pub struct BinPartition {
    /// Bin index per path.
    pub assignment: Vec<u32>,
    /// Total number of bins (product over dimensions of effective counts).
    pub n_bins: usize,
    /// Interior quantile edges per dimension (degenerate dimensions keep
    /// an empty edge list and collapse to one slab).
    pub edges: Vec<Vec<f64>>,
    counts: Vec<usize>,
}

impl BinPartition {
    /// Quantile-based partition of a `state_dim`-dimensional sample.
    ///
    /// `states[d]` holds the `d`-th coordinate for every path. A dimension
    /// whose sample is constant collapses to a single slab. Ties at a
    /// quantile edge stay together (upper-bound search), so equal states
    /// always land in equal bins.
    pub fn build<T: Scalar>(states: &[&[T]], bins_per_dim: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(HedgeError::invalid("partition needs at least one dimension"));
        }
        let n = states[0].len();
        if n == 0 || states.iter().any(|s| s.len() != n) {
            return Err(HedgeError::invalid("state columns must be nonempty and aligned"));
        }
        if bins_per_dim == 0 {
            return Err(HedgeError::invalid("bins_per_dim must be >= 1"));
        }

        let mut dim_edges: Vec<Vec<f64>> = Vec::with_capacity(states.len());
        for col in states {
            let mut sorted: Vec<f64> =
                col.iter().map(|v| v.to_f64().expect("finite state")).collect();
            if sorted.iter().any(|v| !v.is_finite()) {
                return Err(HedgeError::NonFinite("partition state".into()));
            }
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut edges = Vec::new();
            for q in 1..bins_per_dim {
                let rank = q * n / bins_per_dim;
                let e = sorted[rank.min(n - 1)];
                // Dedupe collapses heavy ties into wider bins.
                if edges.last() != Some(&e) && e > sorted[0] {
                    edges.push(e);
                }
            }
            dim_edges.push(edges);
        }

        let counts: Vec<usize> = dim_edges.iter().map(|e| e.len() + 1).collect();
        let n_bins: usize = counts.iter().product();
        let assignment: Vec<u32> = (0..n)
            .map(|p| {
                let mut bin = 0usize;
                for (d, edges) in dim_edges.iter().enumerate() {
                    let x = states[d][p].to_f64().unwrap();
                    // First edge strictly greater than x; values equal to
                    // an edge fall in the lower bin.
                    let slot = edges.partition_point(|e| *e <= x);
                    bin = bin * counts[d] + slot;
                }
                bin as u32
            })
            .collect();

        Ok(Self::with_counts(assignment, n_bins, dim_edges))
    }

    fn with_counts(assignment: Vec<u32>, n_bins: usize, edges: Vec<Vec<f64>>) -> Self {
        let mut counts = vec![0usize; n_bins];
        for b in &assignment {
            counts[*b as usize] += 1;
        }
        BinPartition { assignment, n_bins, edges, counts }
    }

    /// Partition from an explicit assignment; bins must be `< n_bins`.
    /// Used for exact discrete markets and for the trivial one-bin case.
    pub fn from_assignment(assignment: Vec<u32>, n_bins: usize) -> Result<Self> {
        if n_bins == 0 || assignment.iter().any(|b| *b as usize >= n_bins) {
            return Err(HedgeError::invalid("bin assignment out of range"));
        }
        Ok(Self::with_counts(assignment, n_bins, Vec::new()))
    }

    /// Single-bin partition (deterministic state, e.g. the initial time).
    pub fn trivial(n_paths: usize) -> Self {
        Self::with_counts(vec![0; n_paths], 1, Vec::new())
    }

    pub fn n_paths(&self) -> usize {
        self.assignment.len()
    }

    /// Paths per bin.
    pub fn occupancy(&self) -> &[usize] {
        &self.counts
    }

    /// Path indices grouped by bin, in path order.
    pub fn groups(&self) -> Vec<Vec<u32>> {
        let mut groups: Vec<Vec<u32>> =
            self.counts.iter().map(|c| Vec::with_capacity(*c)).collect();
        for (p, b) in self.assignment.iter().enumerate() {
            groups[*b as usize].push(p as u32);
        }
        groups
    }

    // Deterministic block-parallel accumulation of per-bin sums of the
    // mapped value; partials merge in block order.
    fn accumulate<T: Scalar, F: Fn(usize) -> T + Sync>(&self, f: F) -> Vec<T> {
        let n = self.assignment.len();
        let blocks: Vec<Vec<T>> = (0..n.div_ceil(BLOCK))
            .into_par_iter()
            .map(|blk| {
                let mut sums = vec![T::zero(); self.n_bins];
                let lo = blk * BLOCK;
                let hi = (lo + BLOCK).min(n);
                for p in lo..hi {
                    let b = self.assignment[p] as usize;
                    sums[b] += f(p);
                }
                sums
            })
            .collect();
        let mut total = vec![T::zero(); self.n_bins];
        for partial in blocks {
            for (acc, s) in total.iter_mut().zip(partial) {
                *acc += s;
            }
        }
        total
    }

    /// Per-bin sample mean of `target`.
    pub fn bin_mean<T: Scalar>(&self, target: &[T]) -> Vec<T> {
        let sums = self.accumulate(|p| target[p]);
        let grand = sums.iter().copied().sum::<T>()
            / count::<T>(self.n_paths().max(1));
        sums.into_iter()
            .zip(&self.counts)
            .map(|(s, c)| if *c > 0 { s / count::<T>(*c) } else { grand })
            .collect()
    }

    /// Per-bin covariance `mean(u w) - mean(u) mean(w)`.
    pub fn bin_cov<T: Scalar>(&self, u: &[T], w: &[T]) -> Vec<T> {
        // One pass over paths accumulating (u, w, uw) together.
        let n = self.assignment.len();
        let blocks: Vec<Vec<[T; 3]>> = (0..n.div_ceil(BLOCK))
            .into_par_iter()
            .map(|blk| {
                let mut sums = vec![[T::zero(); 3]; self.n_bins];
                for p in blk * BLOCK..((blk + 1) * BLOCK).min(n) {
                    let b = self.assignment[p] as usize;
                    sums[b][0] += u[p];
                    sums[b][1] += w[p];
                    sums[b][2] += u[p] * w[p];
                }
                sums
            })
            .collect();
        let mut total = vec![[T::zero(); 3]; self.n_bins];
        for partial in blocks {
            for (acc, s) in total.iter_mut().zip(partial) {
                for (a, b) in acc.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
        total
            .into_iter()
            .zip(&self.counts)
            .map(|([su, sw, suw], c)| {
                if *c == 0 {
                    return T::zero();
                }
                let inv = T::one() / count::<T>(*c);
                suw * inv - su * inv * (sw * inv)
            })
            .collect()
    }

    /// Per-bin variance, floored at zero.
    pub fn bin_var<T: Scalar>(&self, u: &[T]) -> Vec<T> {
        self.bin_cov(u, u)
            .into_iter()
            .map(|v| if v > T::zero() { v } else { T::zero() })
            .collect()
    }

    /// Broadcast per-bin values back to paths.
    pub fn broadcast<T: Scalar>(&self, per_bin: &[T]) -> Vec<T> {
        self.assignment.iter().map(|b| per_bin[*b as usize]).collect()
    }
}

/// Conditional mean of `target` given the partitioned state, per path.
pub fn conditional_mean<T: Scalar>(partition: &BinPartition, target: &[T]) -> Vec<T> {
    partition.broadcast(&partition.bin_mean(target))
}

/// Conditional covariance of `u` and `w` given the partitioned state,
/// per path.
pub fn conditional_cov<T: Scalar>(partition: &BinPartition, u: &[T], w: &[T]) -> Vec<T> {
    partition.broadcast(&partition.bin_cov(u, w))
}

/// Conditional variance, floored at zero, per path.
pub fn conditional_var<T: Scalar>(partition: &BinPartition, u: &[T]) -> Vec<T> {
    partition.broadcast(&partition.bin_var(u))
}

/// Sample excess-kurtosis heuristic for the moment conditions behind the
/// regression: a severely heavy-tailed input makes the conditional-moment
/// estimates unreliable.
pub fn excess_kurtosis<T: Scalar>(sample: &[T]) -> f64 {
    let n = sample.len() as f64;
    if n < 4.0 {
        return 0.0;
    }
    let mean = sample.iter().map(|x| x.to_f64().unwrap()).sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0f64, 0.0f64);
    for x in sample {
        let d = x.to_f64().unwrap() - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    if m2 <= 0.0 {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn two_dim_sample(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let a = (0..n).map(|_| rng.gen::<f64>()).collect();
        let b = (0..n).map(|_| rng.gen::<f64>() * 3.0 - 1.0).collect();
        (a, b)
    }

    #[test]
    fn degenerate_dimension_collapses_to_one_bin() {
        let flat = vec![2.5f64; 100];
        let part = BinPartition::build(&[&flat], 10).unwrap();
        assert_eq!(part.n_bins, 1);
        assert!(part.assignment.iter().all(|b| *b == 0));
    }

    #[test]
    fn median_split_balances_counts() {
        let (a, _) = two_dim_sample(1000, 3);
        let part = BinPartition::build(&[&a], 2).unwrap();
        let occ = part.occupancy();
        assert_eq!(occ.len(), 2);
        assert_eq!(occ[0], 500);
        assert_eq!(occ[1], 500);
    }

    #[test]
    fn quantile_bins_bound_imbalance() {
        let (a, b) = two_dim_sample(100_000, 99);
        let part = BinPartition::build(&[&a, &b], 10).unwrap();
        assert_eq!(part.n_bins, 100);
        let occ = part.occupancy();
        let max = *occ.iter().max().unwrap() as f64;
        let min = *occ.iter().min().unwrap() as f64;
        assert!(min > 0.0);
        assert!(max / min <= 3.0, "imbalance {max}/{min}");
    }

    #[test]
    fn constant_target_reproduced_exactly() {
        let (a, b) = two_dim_sample(500, 1);
        let part = BinPartition::build(&[&a, &b], 4).unwrap();
        let target = vec![7.25f64; 500];
        assert_eq!(conditional_mean(&part, &target), target);
    }

    #[test]
    fn indicator_of_a_bin_is_reproduced() {
        let (a, b) = two_dim_sample(500, 2);
        let part = BinPartition::build(&[&a, &b], 3).unwrap();
        let pick = part.assignment[42];
        let target: Vec<f64> =
            part.assignment.iter().map(|bb| if *bb == pick { 1.0 } else { 0.0 }).collect();
        assert_eq!(conditional_mean(&part, &target), target);
    }

    #[test]
    fn piecewise_constant_functions_of_the_partition_are_exact() {
        let (a, b) = two_dim_sample(2000, 5);
        let part = BinPartition::build(&[&a, &b], 5).unwrap();
        let target: Vec<f64> =
            part.assignment.iter().map(|bb| (*bb as f64).sin() * 3.0 + 1.0).collect();
        let fit = conditional_mean(&part, &target);
        for (f, t) in fit.iter().zip(&target) {
            assert!((f - t).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_hand_values() {
        // Bins {0,0,1,1}; bin 0 holds u = {1, 3}: variance 1.
        let part = BinPartition::from_assignment(vec![0, 0, 1, 1], 2).unwrap();
        let u = vec![1.0f64, 3.0, 5.0, 5.0];
        let var = part.bin_var(&u);
        assert_eq!(var[0], 1.0);
        assert_eq!(var[1], 0.0);

        let w = vec![2.0f64, 2.0, 0.0, 1.0];
        assert_eq!(part.bin_cov(&u, &w)[0], 0.0, "constant w in bin 0");
    }

    #[test]
    fn independent_samples_have_small_conditional_cov() {
        let n = 1_000_000;
        let (u, w) = two_dim_sample(n, 77);
        let part = BinPartition::trivial(n);
        let cov = part.bin_cov(&u, &w)[0];
        // Var(uniform) = 1/12; cov se ~ sqrt(Var_u Var_w / n).
        let se = (1.0f64 / 12.0 * (9.0 / 12.0) / n as f64).sqrt();
        assert!(cov.abs() < 4.0 * se, "cov {cov}, se {se}");
    }

    #[test]
    fn projection_is_idempotent_and_tower_consistent() {
        let (a, b) = two_dim_sample(3000, 8);
        let part = BinPartition::build(&[&a, &b], 6).unwrap();
        let target: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y + y.sin()).collect();
        let once = conditional_mean(&part, &target);
        let twice = conditional_mean(&part, &once);
        for (x, y) in once.iter().zip(&twice) {
            assert!((x - y).abs() < 1e-12);
        }
        let mean_t: f64 = target.iter().sum::<f64>() / 3000.0;
        let mean_fit: f64 = once.iter().sum::<f64>() / 3000.0;
        assert!((mean_t - mean_fit).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let (a, b) = two_dim_sample(60_000, 12);
        let target: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y * y).collect();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let part = BinPartition::build(&[&a, &b], 7).unwrap();
                part.bin_mean(&target)
            })
        };
        assert_eq!(run(1), run(8));
    }

    proptest! {
        #[test]
        fn cauchy_schwarz_per_bin(seed in 0u64..5000) {
            let (u, wraw) = two_dim_sample(400, seed);
            let w: Vec<f64> = wraw.iter().map(|x| x * 2.0 - 0.3).collect();
            let part = BinPartition::build(&[&u], 4).unwrap();
            let cov = part.bin_cov(&u, &w);
            let vu = part.bin_var(&u);
            let vw = part.bin_var(&w);
            for b in 0..part.n_bins {
                let lhs = cov[b] * cov[b];
                let rhs = vu[b] * vw[b];
                prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-18);
            }
        }
    }
}
