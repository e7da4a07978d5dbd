//! Backward-induction computation of the locally risk-minimizing strategy
//! under liquidity costs.
//!
//! At each step `k` (from the horizon backwards) the holdings over
//! `(t_k, t_{k+1}]` minimize, per information cell,
//!
//! ```text
//! Var(V_{k+1} - c' dS_{k+1})
//!   + alpha * E[ sum_j eps_j S_j (X_{k+2,j} - c_j)^2 ]
//! ```
//!
//! which is a strictly convex quadratic whenever the price covariance
//! matrix is positive definite, so the minimizer solves the symmetric
//! linear system `F c = b` assembled from conditional moments. Holdings of
//! matured assets are pinned at zero, shrinking the system to the active
//! assets. The book value recurses through the pathwise gains
//! representation `W_k = H - sum_{m>k} X_m' dS_m` with one conditional
//! expectation per step, avoiding compounded regression bias.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::Serialize;

use crate::binning::BinPartition;
use crate::error::{HedgeError, Result};
use crate::futures::{active_assets, ExtendedPriceSet};
use crate::linalg::{solve_symmetric, SymMatrix};
use crate::market::PathSet;
use crate::num::{count, real};
use crate::Scalar;

/// Fixed-point settings for the truncated-supply-curve solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct FixedPointConfig {
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { max_iters: 200, tolerance: 1e-12 }
    }
}

/// Engine settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct LrmConfig {
    /// Liquidity-aversion weight; `0` reproduces the classical strategy.
    pub alpha: f64,
    /// Minimum admissible pivot before the ridge fallback engages.
    pub pd_tolerance: f64,
    /// Multiplier on the sampling-noise shrinkage `Var_bin(V) / n_bin`
    /// added to the step-matrix diagonal. Conditional moments estimated
    /// from a few hundred paths carry noise of exactly that order, and the
    /// raw regression ratio blows up wherever the price variance drops
    /// near it; the shrinkage caps those holdings at the statistically
    /// identifiable size. `0` solves the unmodified system.
    #[serde(default)]
    pub variance_ridge: f64,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
}

impl Default for LrmConfig {
    fn default() -> Self {
        LrmConfig {
            alpha: 1.0,
            pd_tolerance: 1e-10,
            variance_ridge: 0.0,
            fixed_point: FixedPointConfig::default(),
        }
    }
}

impl LrmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(HedgeError::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.pd_tolerance > 0.0) {
            return Err(HedgeError::invalid("pd_tolerance must be > 0"));
        }
        if self.fixed_point.max_iters == 0 || !(self.fixed_point.tolerance > 0.0) {
            return Err(HedgeError::invalid("fixed point settings must be positive"));
        }
        Ok(())
    }
}

/// Holdings, cash and book values of a strategy on every path.
///
/// Row `k` of `x` holds `X_{k+1}`, the risky positions over
/// `(t_k, t_{k+1}]`; the final row holds the claim's delivery component,
/// which is zero under cash settlement. `v` is the book value
/// `X_{k+1}' S_k + Y_k` and `V_T = H` pathwise.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategySet<T> {
    /// `(path, step k = 0..=T, asset)`.
    pub x: Array3<T>,
    /// `(path, grid index)`: cash position over `(t_k, t_{k+1}]`.
    pub y: Array2<T>,
    /// `(path, grid index)`: book value.
    pub v: Array2<T>,
}

impl<T: Scalar> StrategySet<T> {
    pub fn n_paths(&self) -> usize {
        self.v.shape()[0]
    }

    pub fn n_assets(&self) -> usize {
        self.x.shape()[2]
    }
}

/// Per-bin linear system at one step.
#[derive(Debug, Clone)]
pub struct BinSystem<T> {
    /// Full matrix `F = F0 + alpha * diag(A_eps)` over active assets.
    pub f: SymMatrix<T>,
    /// Covariance part only.
    pub f0: SymMatrix<T>,
    /// Diagonal liquidity terms `E[eps S]` per active asset.
    pub a_eps: Vec<T>,
    /// Conditional mean next-step price per active asset (scale reference
    /// for degeneracy detection).
    pub mean_s: Vec<T>,
    /// Right-hand side `b = b0 + alpha * b_eps`.
    pub b: Vec<T>,
    pub b0: Vec<T>,
    pub b_eps: Vec<T>,
    /// Paths in this bin.
    pub count: usize,
    /// Shrinkage level `variance_ridge * Var_bin(V_next) / count`,
    /// already scaled; zero when shrinkage is disabled.
    pub noise_ridge: T,
    /// Minimizer over the active assets, filled by [`solve_step`].
    pub solution: Vec<T>,
}

impl<T: Scalar> BinSystem<T> {
    /// Assets whose step objective actually depends on their holding:
    /// diagonal above `tol` times the squared price scale. Discretization
    /// can make a final in-delivery increment measurable at the step
    /// start; with `alpha = 0` those coordinates are objective-flat and
    /// any nonzero holding would only burn transaction costs, so they are
    /// pinned at zero.
    fn usable_assets(&self, tol: T) -> Vec<usize> {
        (0..self.f.d)
            .filter(|&j| {
                let scale = self.mean_s[j] * self.mean_s[j];
                self.f.at(j, j) > tol * scale.max(T::min_positive_value())
            })
            .collect()
    }
}

/// Assembled systems for every bin at one step.
#[derive(Debug, Clone)]
pub struct StepSystem<T> {
    pub step: usize,
    /// Global indices of the active assets; system dimension is its length.
    pub active: Vec<usize>,
    pub bins: Vec<BinSystem<T>>,
}

/// One ridge-regularization event (never silent).
#[derive(Debug, Clone, Serialize)]
pub struct RidgeEvent {
    pub step: usize,
    pub bin: usize,
    pub pivot: f64,
    pub ridge: f64,
}

/// Flags from the truncated-curve fixed point solver.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationEvent {
    pub step: usize,
    pub bin: usize,
    pub converged: bool,
    pub iterations: usize,
    /// A second starting point found a different fixed point.
    pub alternative: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub dimension: usize,
    pub n_bins: usize,
    pub min_occupancy: usize,
    pub max_occupancy: usize,
    pub min_pivot: f64,
    pub ridge_events: Vec<RidgeEvent>,
    pub truncation_events: Vec<TruncationEvent>,
    /// Holdings pinned at zero because the asset's step objective was
    /// flat in them (degenerate price variance at that bin).
    pub degenerate_pins: usize,
}

/// Per-run engine report: one entry per step, latest step first (the
/// induction runs backwards).
#[derive(Debug, Clone, Default, Serialize)]
pub struct EngineDiagnostics {
    pub steps: Vec<StepDiagnostics>,
}

impl EngineDiagnostics {
    pub fn total_ridge_events(&self) -> usize {
        self.steps.iter().map(|s| s.ridge_events.len()).sum()
    }
}

/// Supplies the information partitions used at each step.
///
/// The solve partition conditions the per-bin linear systems; the value
/// partition carries the book-value regression `V_k = E[W_k | cell]`.
/// They coincide by default. Value cells can be much finer: a conditional
/// mean tolerates thin cells, while the covariance solves need enough
/// paths per cell to identify the trade.
pub trait PartitionBuilder<T: Scalar> {
    fn partition_at(&self, k: usize) -> Result<BinPartition>;

    fn value_partition_at(&self, k: usize) -> Result<BinPartition> {
        self.partition_at(k)
    }
}

/// Quantile bins on the driving factor state at `t_k`. The initial state
/// is deterministic, so step 0 degenerates to a single bin on its own.
pub struct FactorBinning<'a, T> {
    pub paths: &'a PathSet<T>,
    pub bins_per_dim: usize,
}

impl<T: Scalar> PartitionBuilder<T> for FactorBinning<'_, T> {
    fn partition_at(&self, k: usize) -> Result<BinPartition> {
        let n = self.paths.n_paths();
        let cols: Vec<Vec<T>> = (0..self.paths.n_factors())
            .map(|i| (0..n).map(|p| self.paths.factor_values[(p, k, i)]).collect())
            .collect();
        let views: Vec<&[T]> = cols.iter().map(|c| c.as_slice()).collect();
        BinPartition::build(&views, self.bins_per_dim)
    }
}

/// Quantile bins on the Markov state of the claim-and-market system: the
/// factor values plus the running average of the spot over the claim
/// window. Path-dependent claims make the bare factor state insufficient
/// once the averaging window opens; the accumulated average is the
/// missing coordinate. Before the window opens it is identically zero
/// and the extra dimension collapses on its own.
pub struct ClaimStateBinning<'a, T> {
    pub paths: &'a PathSet<T>,
    /// Running average per `(path, grid index)`.
    pub running_average: ndarray::Array2<T>,
    pub bins_per_dim: usize,
    /// Finer resolution for the value regression; defaults to
    /// `bins_per_dim`.
    pub value_bins_per_dim: usize,
}

impl<'a, T: Scalar> ClaimStateBinning<'a, T> {
    /// Accumulate the left-endpoint running average of the spot over
    /// `[t1c, min(t, t2c))`.
    pub fn new(
        paths: &'a PathSet<T>,
        t1c: f64,
        t2c: f64,
        bins_per_dim: usize,
    ) -> Result<Self> {
        let k1 = paths.grid.index_of(t1c)?;
        let k2 = paths.grid.index_of(t2c)?;
        let n = paths.n_paths();
        let h: T = real(paths.grid.step());
        let inv_len: T = T::one() / (real::<T>(t2c - t1c));
        let mut running_average = ndarray::Array2::zeros((n, paths.grid.len()));
        for p in 0..n {
            let mut acc = T::zero();
            for k in 0..paths.grid.len() {
                running_average[(p, k)] = acc;
                if k >= k1 && k < k2 {
                    acc = acc + paths.spot_values[(p, k)] * h * inv_len;
                }
            }
        }
        Ok(ClaimStateBinning {
            paths,
            running_average,
            bins_per_dim,
            value_bins_per_dim: bins_per_dim,
        })
    }

    pub fn with_value_bins(mut self, value_bins_per_dim: usize) -> Self {
        self.value_bins_per_dim = value_bins_per_dim;
        self
    }
}

impl<T: Scalar> ClaimStateBinning<'_, T> {
    fn build_with(&self, k: usize, bins: usize) -> Result<BinPartition> {
        let n = self.paths.n_paths();
        let mut cols: Vec<Vec<T>> = (0..self.paths.n_factors())
            .map(|i| (0..n).map(|p| self.paths.factor_values[(p, k, i)]).collect())
            .collect();
        cols.push((0..n).map(|p| self.running_average[(p, k)]).collect());
        let views: Vec<&[T]> = cols.iter().map(|c| c.as_slice()).collect();
        BinPartition::build(&views, bins)
    }
}

impl<T: Scalar> PartitionBuilder<T> for ClaimStateBinning<'_, T> {
    fn partition_at(&self, k: usize) -> Result<BinPartition> {
        self.build_with(k, self.bins_per_dim)
    }

    fn value_partition_at(&self, k: usize) -> Result<BinPartition> {
        self.build_with(k, self.value_bins_per_dim)
    }
}

/// Quantile bins on the extended asset prices at `t_k` instead of the
/// factor state.
pub struct PriceBinning<'a, T> {
    pub prices: &'a ExtendedPriceSet<T>,
    pub bins_per_dim: usize,
}

impl<T: Scalar> PartitionBuilder<T> for PriceBinning<'_, T> {
    fn partition_at(&self, k: usize) -> Result<BinPartition> {
        let n = self.prices.n_paths();
        let cols: Vec<Vec<T>> = (0..self.prices.n_assets())
            .map(|j| (0..n).map(|p| self.prices.prices[(p, k, j)]).collect())
            .collect();
        let views: Vec<&[T]> = cols.iter().map(|c| c.as_slice()).collect();
        BinPartition::build(&views, self.bins_per_dim)
    }
}

/// Externally fixed partitions, e.g. the exact state groups of a discrete
/// market.
pub struct FixedPartitions {
    pub partitions: Vec<BinPartition>,
}

impl<T: Scalar> PartitionBuilder<T> for FixedPartitions {
    fn partition_at(&self, k: usize) -> Result<BinPartition> {
        self.partitions
            .get(k)
            .cloned()
            .ok_or_else(|| HedgeError::invalid(format!("no partition for step {k}")))
    }
}

/// Assemble the per-bin systems at step `k` over the active assets.
///
/// `v_next` is the regressed book value at `t_{k+1}`, `x_next` the full
/// holdings row `X_{k+2}` (all assets). With `eps = 0` or `alpha = 0` the
/// assembled system is the classical one, `F0 c = b0`.
pub fn assemble_step_system<T: Scalar>(
    k: usize,
    prices: &ExtendedPriceSet<T>,
    v_next: &[T],
    x_next: ArrayView2<'_, T>,
    partition: &BinPartition,
    cfg: &LrmConfig,
) -> Result<StepSystem<T>> {
    let active = active_assets(k, &prices.maturity_indices);
    if active.is_empty() {
        return Err(HedgeError::invalid(format!("no active assets at step {k}")));
    }
    let n = prices.n_paths();
    if v_next.len() != n || partition.n_paths() != n {
        return Err(HedgeError::invalid("path count mismatch in step assembly"));
    }
    let d = active.len();
    let alpha: T = real(cfg.alpha);
    let t_next = prices.grid.time(k + 1);
    let n_bins = partition.n_bins;

    // Per active asset: price increments, next prices, eps level.
    let mut ds: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut a0: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut a_eps: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut mean_s: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut b0: Vec<Vec<T>> = Vec::with_capacity(d);
    let mut b_eps: Vec<Vec<T>> = Vec::with_capacity(d);
    for &j in &active {
        let eps: T = real(prices.specs[j].liquidity_structure().epsilon_at(t_next)?);
        let mut ds_j = Vec::with_capacity(n);
        let mut s_j = Vec::with_capacity(n);
        let mut sx_j = Vec::with_capacity(n);
        for p in 0..n {
            let s_next = prices.prices[(p, k + 1, j)];
            ds_j.push(s_next - prices.prices[(p, k, j)]);
            s_j.push(s_next);
            sx_j.push(s_next * x_next[(p, j)]);
        }
        let m_s = partition.bin_mean(&s_j);
        a0.push(partition.bin_var(&ds_j));
        a_eps.push(m_s.iter().map(|m| eps * *m).collect());
        mean_s.push(m_s);
        b0.push(partition.bin_cov(v_next, &ds_j));
        b_eps.push(partition.bin_mean(&sx_j).into_iter().map(|m| eps * m).collect());
        ds.push(ds_j);
    }
    let mut cross: Vec<((usize, usize), Vec<T>)> = Vec::new();
    for a in 0..d {
        for b in (a + 1)..d {
            cross.push(((a, b), partition.bin_cov(&ds[a], &ds[b])));
        }
    }
    let var_v: Vec<T> = if cfg.variance_ridge > 0.0 {
        partition.bin_var(v_next)
    } else {
        vec![T::zero(); n_bins]
    };

    let counts = partition.occupancy();
    let ridge_mult: T = real(cfg.variance_ridge);
    let bins = (0..n_bins)
        .map(|bin| {
            let noise_ridge = if counts[bin] > 0 {
                ridge_mult * var_v[bin] / count::<T>(counts[bin])
            } else {
                T::zero()
            };
            let mut f0 = SymMatrix::zeros(d);
            let mut f = SymMatrix::zeros(d);
            for a in 0..d {
                f0.set(a, a, a0[a][bin]);
                f.set(a, a, a0[a][bin] + alpha * a_eps[a][bin] + noise_ridge);
            }
            for ((a, b), cov) in &cross {
                f0.set(*a, *b, cov[bin]);
                f0.set(*b, *a, cov[bin]);
                f.set(*a, *b, cov[bin]);
                f.set(*b, *a, cov[bin]);
            }
            let b0_bin: Vec<T> = (0..d).map(|a| b0[a][bin]).collect();
            let beps_bin: Vec<T> = (0..d).map(|a| b_eps[a][bin]).collect();
            let b_bin: Vec<T> =
                b0_bin.iter().zip(&beps_bin).map(|(x, e)| *x + alpha * *e).collect();
            BinSystem {
                f,
                f0,
                a_eps: (0..d).map(|a| a_eps[a][bin]).collect(),
                mean_s: (0..d).map(|a| mean_s[a][bin]).collect(),
                b: b_bin,
                b0: b0_bin,
                b_eps: beps_bin,
                count: counts[bin],
                noise_ridge,
                solution: Vec::new(),
            }
        })
        .collect();

    Ok(StepSystem { step: k, active, bins })
}

/// Outcome of solving one step.
#[derive(Debug, Clone, Default)]
pub struct SolveOutcome {
    pub ridge_events: Vec<RidgeEvent>,
    pub min_pivot: f64,
    pub degenerate_pins: usize,
}

/// Solve every bin system in place.
///
/// Assets whose diagonal is degenerate relative to the price scale are
/// pinned at zero first (see [`BinSystem::usable_assets`]); the remaining
/// system is solved directly, and a pivot under `cfg.pd_tolerance`
/// triggers the documented fallback: add `pd_tolerance * trace(F) / d` to
/// the diagonal, re-solve, and record the event. Nothing fails silently.
pub fn solve_step<T: Scalar>(
    system: &mut StepSystem<T>,
    cfg: &LrmConfig,
) -> Result<SolveOutcome> {
    let d = system.active.len();
    let tol: T = real(cfg.pd_tolerance);
    let mut out = SolveOutcome { min_pivot: f64::INFINITY, ..Default::default() };
    for (bin, bs) in system.bins.iter_mut().enumerate() {
        bs.solution = vec![T::zero(); d];
        if bs.count == 0 {
            continue;
        }
        let usable = bs.usable_assets(tol);
        out.degenerate_pins += d - usable.len();
        if usable.is_empty() {
            continue;
        }
        let (f_use, b_use) = if usable.len() == d {
            (bs.f.clone(), bs.b.clone())
        } else {
            let mut sub = SymMatrix::zeros(usable.len());
            for (a, &i) in usable.iter().enumerate() {
                for (c, &j) in usable.iter().enumerate() {
                    sub.set(a, c, bs.f.at(i, j));
                }
            }
            (sub, usable.iter().map(|&i| bs.b[i]).collect())
        };
        let sol = solve_symmetric(&f_use, &b_use).map_err(|e| e.at_step(system.step))?;
        let pivot = sol.min_pivot.to_f64().unwrap_or(0.0);
        out.min_pivot = out.min_pivot.min(pivot);
        let x = if pivot < cfg.pd_tolerance {
            let ridge = tol * f_use.trace() / count::<T>(usable.len());
            let mut ridged = f_use.clone();
            ridged.add_ridge(ridge);
            let again = solve_symmetric(&ridged, &b_use).map_err(|e| e.at_step(system.step))?;
            out.ridge_events.push(RidgeEvent {
                step: system.step,
                bin,
                pivot,
                ridge: ridge.to_f64().unwrap_or(0.0),
            });
            again.x
        } else {
            sol.x
        };
        for (a, &i) in usable.iter().enumerate() {
            bs.solution[i] = x[a];
        }
    }
    Ok(out)
}

/// Inputs of the one-dimensional truncated-supply-curve step: per-path
/// values inside one bin plus the bin's second moments.
#[derive(Debug, Clone)]
pub struct TruncatedStep1d<T> {
    pub var_ds: T,
    pub cov_v_ds: T,
    /// `eps_{k+1} * S_{k+1}` per path in the bin.
    pub eps_s: Vec<T>,
    /// `X_{k+2}` per path in the bin.
    pub x_next: Vec<T>,
    /// Truncation level `z_{k+1}`.
    pub z: T,
    pub alpha: T,
}

#[derive(Debug, Clone, Copy)]
pub struct TruncatedSolve<T> {
    pub x: T,
    pub converged: bool,
    pub iterations: usize,
    /// Fixed point reached from an alternative start, when it differs.
    pub alternative: Option<T>,
}

/// Fixed-point iteration for the implicit one-dimensional relation of the
/// truncated nonnegative supply curve:
///
/// ```text
/// c = [ Cov(V, dS) + a E[eps S X 1{X - c >= -z}] - a Q / 2 ]
///     / [ Var(dS) + a E[eps S 1{X - c >= -z}] ],
/// Q = E[z eps S 1{X - c < -z}]
/// ```
///
/// started from the untruncated solution. When no trade can reach the
/// truncation region, the indicator saturates and the first iterate equals
/// the untruncated formula.
pub fn solve_truncated_1d<T: Scalar>(
    inputs: &TruncatedStep1d<T>,
    cfg: &LrmConfig,
) -> TruncatedSolve<T> {
    let n = count::<T>(inputs.eps_s.len().max(1));
    let mean = |f: &dyn Fn(T, T) -> T| -> T {
        inputs
            .eps_s
            .iter()
            .zip(&inputs.x_next)
            .map(|(es, x)| f(*es, *x))
            .sum::<T>()
            / n
    };
    let iterate = |c: T| -> T {
        let keep = |es: T, x: T| if x - c >= -inputs.z { es } else { T::zero() };
        let e_es = mean(&keep);
        let e_esx = mean(&|es, x| keep(es, x) * x);
        let q = mean(&|es, x| if x - c < -inputs.z { inputs.z * es } else { T::zero() });
        let half: T = real(0.5);
        let num = inputs.cov_v_ds + inputs.alpha * (e_esx - q * half);
        let den = inputs.var_ds + inputs.alpha * e_es;
        if den == T::zero() {
            T::zero()
        } else {
            num / den
        }
    };

    let run = |start: T| -> (T, bool, usize) {
        let tol: T = real(cfg.fixed_point.tolerance);
        let mut c = start;
        for it in 0..cfg.fixed_point.max_iters {
            let next = iterate(c);
            if (next - c).abs() < tol {
                return (next, true, it + 1);
            }
            c = next;
        }
        (c, false, cfg.fixed_point.max_iters)
    };

    // Untruncated start: linear-curve solution.
    let e_es_all = mean(&|es, _| es);
    let e_esx_all = mean(&|es, x| es * x);
    let den = inputs.var_ds + inputs.alpha * e_es_all;
    let start = if den == T::zero() {
        T::zero()
    } else {
        (inputs.cov_v_ds + inputs.alpha * e_esx_all) / den
    };
    let (x, converged, iterations) = run(start);

    // Probe for multiple fixed points from a displaced start.
    let probe = run(x - inputs.z - T::one());
    let alternative = (probe.1 && (probe.0 - x).abs() > real::<T>(10.0 * cfg.fixed_point.tolerance))
        .then_some(probe.0);

    TruncatedSolve { x, converged, iterations, alternative }
}

/// Full backward induction; returns the strategy and per-step diagnostics.
///
/// `payoff` is the cash-settled claim `H` per path (terminal book value).
pub fn backward_induction<T: Scalar>(
    prices: &ExtendedPriceSet<T>,
    payoff: &[T],
    partitions: &dyn PartitionBuilder<T>,
    cfg: &LrmConfig,
) -> Result<(StrategySet<T>, EngineDiagnostics)> {
    cfg.validate()?;
    let n = prices.n_paths();
    let n_assets = prices.n_assets();
    let n_steps = prices.grid.n_steps;
    if payoff.len() != n {
        return Err(HedgeError::invalid("payoff length must match path count"));
    }
    if payoff.iter().any(|h| !h.is_finite()) {
        return Err(HedgeError::NonFinite("payoff".into()));
    }

    let mut x = Array3::zeros((n, n_steps + 1, n_assets));
    let mut v = Array2::zeros((n, n_steps + 1));
    let mut y = Array2::zeros((n, n_steps + 1));
    for p in 0..n {
        v[(p, n_steps)] = payoff[p];
        y[(p, n_steps)] = payoff[p];
    }

    // Accumulated hedging gains sum_{m = k+1}^{T} X_m' dS_m per path.
    let mut gains = vec![T::zero(); n];
    let mut w_k = vec![T::zero(); n];
    let mut diags = EngineDiagnostics::default();

    for k in (0..n_steps).rev() {
        let partition = partitions.partition_at(k).map_err(|e| e.at_step(k))?;
        if partition.n_paths() != n {
            return Err(HedgeError::invalid("partition path count mismatch").at_step(k));
        }
        let active = active_assets(k, &prices.maturity_indices);
        let mut step_diag = StepDiagnostics {
            step: k,
            dimension: active.len(),
            n_bins: partition.n_bins,
            min_occupancy: partition.occupancy().iter().copied().min().unwrap_or(0),
            max_occupancy: partition.occupancy().iter().copied().max().unwrap_or(0),
            min_pivot: f64::INFINITY,
            ..Default::default()
        };

        if !active.is_empty() {
            let v_next: Vec<T> = (0..n).map(|p| v[(p, k + 1)]).collect();
            let x_next = x.index_axis(Axis(1), k + 1);
            let truncated_asset = (active.len() == 1)
                .then(|| prices.specs[active[0]].floor_fraction.map(|z| (active[0], z)))
                .flatten();

            let mut system =
                assemble_step_system(k, prices, &v_next, x_next, &partition, cfg)?;

            if let Some((j, z)) = truncated_asset {
                solve_step_truncated(
                    &mut system,
                    prices,
                    &x_next.to_owned(),
                    &partition,
                    j,
                    z,
                    cfg,
                    &mut step_diag,
                )?;
            } else {
                let outcome = solve_step(&mut system, cfg)?;
                step_diag.ridge_events = outcome.ridge_events;
                step_diag.min_pivot = outcome.min_pivot;
                step_diag.degenerate_pins = outcome.degenerate_pins;
            }

            for p in 0..n {
                let bin = partition.assignment[p] as usize;
                let sol = &system.bins[bin].solution;
                for (a_idx, &j) in system.active.iter().enumerate() {
                    x[(p, k, j)] = sol[a_idx];
                }
            }
        }

        for p in 0..n {
            let mut g = gains[p];
            for &j in &active {
                g = g + x[(p, k, j)] * (prices.prices[(p, k + 1, j)] - prices.prices[(p, k, j)]);
            }
            gains[p] = g;
            w_k[p] = payoff[p] - g;
        }

        let value_partition = if k == 0 {
            BinPartition::trivial(n)
        } else {
            partitions.value_partition_at(k).map_err(|e| e.at_step(k))?
        };
        let v_k = value_partition.broadcast(&value_partition.bin_mean(&w_k));
        for p in 0..n {
            v[(p, k)] = v_k[p];
            let mut held = T::zero();
            for j in 0..n_assets {
                held = held + x[(p, k, j)] * prices.prices[(p, k, j)];
            }
            y[(p, k)] = v_k[p] - held;
        }
        diags.steps.push(step_diag);
    }

    Ok((StrategySet { x, y, v }, diags))
}

// Truncated-curve variant of the per-bin solve (single active asset).
#[allow(clippy::too_many_arguments)]
fn solve_step_truncated<T: Scalar>(
    system: &mut StepSystem<T>,
    prices: &ExtendedPriceSet<T>,
    x_next: &Array2<T>,
    partition: &BinPartition,
    asset: usize,
    z: f64,
    cfg: &LrmConfig,
    diag: &mut StepDiagnostics,
) -> Result<()> {
    let k = system.step;
    let t_next = prices.grid.time(k + 1);
    let eps: T = real(prices.specs[asset].liquidity_structure().epsilon_at(t_next)?);
    let groups = partition.groups();
    for (bin, bs) in system.bins.iter_mut().enumerate() {
        if bs.count == 0 {
            bs.solution = vec![T::zero()];
            continue;
        }
        if bs.usable_assets(real(cfg.pd_tolerance)).is_empty() {
            bs.solution = vec![T::zero()];
            diag.degenerate_pins += 1;
            continue;
        }
        let paths = &groups[bin];
        let inputs = TruncatedStep1d {
            var_ds: bs.f0.at(0, 0) + bs.noise_ridge,
            cov_v_ds: bs.b0[0],
            eps_s: paths
                .iter()
                .map(|&p| eps * prices.prices[(p as usize, k + 1, asset)])
                .collect(),
            x_next: paths.iter().map(|&p| x_next[(p as usize, asset)]).collect(),
            z: real(z),
            alpha: real(cfg.alpha),
        };
        let sol = solve_truncated_1d(&inputs, cfg);
        if !sol.converged || sol.alternative.is_some() {
            diag.truncation_events.push(TruncationEvent {
                step: k,
                bin,
                converged: sol.converged,
                iterations: sol.iterations,
                alternative: sol.alternative.map(|a| a.to_f64().unwrap_or(f64::NAN)),
            });
        }
        bs.solution = vec![sol.x];
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::futures::FuturesSpec;
    use crate::grid::TimeGrid;
    use crate::liquidity::LiquidityKind;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};

    // Small synthetic market: one asset, three steps, random prices.
    fn tiny_prices(eps: f64, n: usize, seed: u64) -> ExtendedPriceSet<f64> {
        let grid = TimeGrid::new(3.0, 3).unwrap();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut prices: Array3<f64> = Array3::zeros((n, 4, 1));
        for p in 0..n {
            prices[(p, 0, 0)] = 10.0;
            for k in 1..4 {
                let shock = rng.gen_range(-0.5..0.5);
                prices[(p, k, 0)] = (prices[(p, k - 1, 0)] + shock).max(0.1);
            }
        }
        let spec = FuturesSpec {
            label: "a".into(),
            t1f: 2.0,
            t2f: 3.0,
            liquidity: if eps == 0.0 {
                LiquidityKind::Zero
            } else {
                LiquidityKind::Constant { m: eps, n: eps }
            },
            floor_fraction: None,
        };
        ExtendedPriceSet::from_raw(grid, prices, vec![spec]).unwrap()
    }

    #[test]
    fn one_dim_system_matches_scalar_formula() {
        // Single active asset: the assembled system must reproduce
        // X = (Cov(V, dS) + E[eps S X_next]) / (Var(dS) + E[eps S]).
        let prices = tiny_prices(0.02, 64, 5);
        let n = prices.n_paths();
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(9);
        let v_next: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..3.0)).collect();
        let mut x_next = Array2::zeros((n, 1));
        for p in 0..n {
            x_next[(p, 0)] = rng.gen_range(-1.0..1.0);
        }
        let partition = BinPartition::trivial(n);
        let cfg = LrmConfig::default();
        let k = 1usize;
        let mut sys =
            assemble_step_system(k, &prices, &v_next, x_next.view(), &partition, &cfg).unwrap();
        solve_step(&mut sys, &cfg).unwrap();

        let eps = 0.02;
        let mean = |f: &dyn Fn(usize) -> f64| (0..n).map(f).sum::<f64>() / n as f64;
        let ds = |p: usize| prices.prices[(p, k + 1, 0)] - prices.prices[(p, k, 0)];
        let m_ds = mean(&ds);
        let m_v = mean(&|p| v_next[p]);
        let var = mean(&|p| (ds(p) - m_ds).powi(2));
        let cov = mean(&|p| (v_next[p] - m_v) * (ds(p) - m_ds));
        let e_es = mean(&|p| eps * prices.prices[(p, k + 1, 0)]);
        let e_esx = mean(&|p| eps * prices.prices[(p, k + 1, 0)] * x_next[(p, 0)]);
        let expect = (cov + e_esx) / (var + e_es);
        let got = sys.bins[0].solution[0];
        assert!((got - expect).abs() < 1e-10 * expect.abs().max(1.0), "{got} vs {expect}");
    }

    #[test]
    fn zero_eps_and_zero_alpha_coincide_bitwise() {
        let with_eps = tiny_prices(0.05, 256, 12);
        let no_eps = tiny_prices(0.0, 256, 12);
        let payoff: Vec<f64> =
            (0..256).map(|p| (with_eps.prices[(p, 3, 0)] - 10.0).max(0.0)).collect();
        let parts = FixedPartitions {
            partitions: (0..3).map(|_| BinPartition::trivial(256)).collect(),
        };
        let classical_by_alpha = backward_induction(
            &with_eps,
            &payoff,
            &parts,
            &LrmConfig { alpha: 0.0, ..Default::default() },
        )
        .unwrap()
        .0;
        let classical_by_eps =
            backward_induction(&no_eps, &payoff, &parts, &LrmConfig::default()).unwrap().0;
        assert_eq!(classical_by_alpha.x, classical_by_eps.x);
        assert_eq!(classical_by_alpha.v, classical_by_eps.v);
        assert_eq!(classical_by_alpha.y, classical_by_eps.y);
    }

    #[test]
    fn strategy_bookkeeping_invariants() {
        let prices = tiny_prices(0.03, 512, 3);
        let payoff: Vec<f64> =
            (0..512).map(|p| (prices.prices[(p, 3, 0)] - 10.0).max(0.0)).collect();
        let parts = FixedPartitions {
            partitions: vec![
                BinPartition::trivial(512),
                BinPartition::from_assignment(
                    (0..512u32).map(|p| p % 4).collect(),
                    4,
                )
                .unwrap(),
                BinPartition::from_assignment((0..512u32).map(|p| p % 8).collect(), 8).unwrap(),
            ],
        };
        let (strat, diags) =
            backward_induction(&prices, &payoff, &parts, &LrmConfig::default()).unwrap();
        // Terminal condition and cash settlement.
        for p in 0..512 {
            assert_eq!(strat.v[(p, 3)], payoff[p]);
            assert_eq!(strat.x[(p, 3, 0)], 0.0);
            // y = v - x . S everywhere.
            for k in 0..=3 {
                let held = strat.x[(p, k, 0)] * prices.prices[(p, k, 0)];
                assert!((strat.y[(p, k)] - (strat.v[(p, k)] - held)).abs() < 1e-12);
            }
        }
        assert_eq!(diags.steps.len(), 3);
        assert!(diags.steps.iter().all(|s| s.dimension == 1));
    }

    #[test]
    fn huge_eps_drives_holdings_to_zero() {
        let base = tiny_prices(0.02, 400, 21);
        let scaled = tiny_prices(0.02 * 1e6, 400, 21);
        let payoff: Vec<f64> =
            (0..400).map(|p| (base.prices[(p, 3, 0)] - 10.0).max(0.0)).collect();
        let parts = FixedPartitions {
            partitions: (0..3).map(|_| BinPartition::trivial(400)).collect(),
        };
        let cfg = LrmConfig::default();
        let (a, _) = backward_induction(&base, &payoff, &parts, &cfg).unwrap();
        let (b, _) = backward_induction(&scaled, &payoff, &parts, &cfg).unwrap();
        let max_abs = |s: &StrategySet<f64>| {
            s.x.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
        };
        assert!(max_abs(&b) < 1e-3 * max_abs(&a), "{} vs {}", max_abs(&b), max_abs(&a));
    }

    #[test]
    fn singular_bin_triggers_ridge_event() {
        // Two identical assets produce an exactly singular covariance.
        let grid = TimeGrid::new(3.0, 3).unwrap();
        let n = 64;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(4);
        let mut prices: Array3<f64> = Array3::zeros((n, 4, 2));
        for p in 0..n {
            prices[(p, 0, 0)] = 10.0;
            prices[(p, 0, 1)] = 10.0;
            for k in 1..4 {
                let shock = rng.gen_range(-0.5..0.5);
                let v = (prices[(p, k - 1, 0)] + shock).max(0.1);
                prices[(p, k, 0)] = v;
                prices[(p, k, 1)] = v;
            }
        }
        let spec = |label: &str| FuturesSpec {
            label: label.into(),
            t1f: 2.0,
            t2f: 3.0,
            liquidity: LiquidityKind::Zero,
            floor_fraction: None,
        };
        let ext = ExtendedPriceSet::from_raw(grid, prices, vec![spec("a"), spec("b")]).unwrap();
        let payoff: Vec<f64> = (0..n).map(|p| ext.prices[(p, 3, 0)]).collect();
        let parts = FixedPartitions {
            partitions: (0..3).map(|_| BinPartition::trivial(n)).collect(),
        };
        let (_, diags) =
            backward_induction(&ext, &payoff, &parts, &LrmConfig::default()).unwrap();
        assert!(diags.total_ridge_events() > 0, "duplicate assets must be flagged");
    }

    #[test]
    fn truncated_solver_saturated_indicator_is_untruncated_formula() {
        // All X_next - c far above -z: one iteration, linear-curve answer.
        let inputs = TruncatedStep1d {
            var_ds: 0.5f64,
            cov_v_ds: 0.3,
            eps_s: vec![0.02, 0.03, 0.025, 0.015],
            x_next: vec![0.5, 0.4, 0.6, 0.55],
            z: 100.0,
            alpha: 1.0,
        };
        let cfg = LrmConfig::default();
        let sol = solve_truncated_1d(&inputs, &cfg);
        let e_es = inputs.eps_s.iter().sum::<f64>() / 4.0;
        let e_esx =
            inputs.eps_s.iter().zip(&inputs.x_next).map(|(a, b)| a * b).sum::<f64>() / 4.0;
        let expect = (0.3 + e_esx) / (0.5 + e_es);
        assert!(sol.converged);
        assert!((sol.x - expect).abs() < 1e-12);
        assert!(sol.alternative.is_none());
    }

    #[test]
    fn truncated_solver_first_order_condition() {
        // Two-point sample with the indicator splitting: validate that the
        // fixed point zeroes the numeric derivative of the objective.
        let inputs = TruncatedStep1d {
            var_ds: 0.2f64,
            cov_v_ds: -0.05,
            eps_s: vec![0.6, 0.8],
            x_next: vec![-2.0, 1.0],
            z: 1.0,
            alpha: 1.0,
        };
        let cfg = LrmConfig { fixed_point: FixedPointConfig { max_iters: 500, tolerance: 1e-14 }, ..Default::default() };
        let sol = solve_truncated_1d(&inputs, &cfg);
        assert!(sol.converged);

        // Objective: c^2 Var - 2 c Cov + mean over sample of the truncated
        // liquidity cost; derivative by central differences.
        let objective = |c: f64| {
            let quad = c * c * inputs.var_ds - 2.0 * c * inputs.cov_v_ds;
            let liq: f64 = inputs
                .eps_s
                .iter()
                .zip(&inputs.x_next)
                .map(|(es, x)| {
                    let trade = x - c;
                    if trade >= -inputs.z {
                        es * trade * trade
                    } else {
                        -inputs.z * es * trade
                    }
                })
                .sum::<f64>()
                / 2.0;
            quad + liq
        };
        let eta = 1e-6;
        let deriv = (objective(sol.x + eta) - objective(sol.x - eta)) / (2.0 * eta);
        assert!(deriv.abs() < 1e-8, "f'({}) = {deriv}", sol.x);

        // The split must actually be active for this to be a useful case.
        assert!(inputs.x_next[0] - sol.x < -inputs.z);
        assert!(inputs.x_next[1] - sol.x >= -inputs.z);
    }
}
