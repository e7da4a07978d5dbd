//! Cost processes and the performance criteria reported for a strategy
//! under a liquidity structure.
//!
//! For a strategy with book values `V_k` and holdings `X`, the classical
//! cost process is `C_k = V_k - sum_{m<=k} X_m' dS_m`; the illiquid one
//! adds the accumulated transaction costs of every rebalancing trade. The
//! reported criteria are sample means over paths:
//!
//! * `t0_tilde`: quadratic hedge criterion `E[(C_T - C_0)^2]`
//! * `l0`: expected total liquidity cost
//! * `t0 = t0_tilde + l0`: the combined criterion
//! * `c0`: initial cost `E[H - sum_m X_m' dS_m]`
//! * `l0_bar`: linear risk `E[|Chat_T - Chat_0|]`

use ndarray::Array2;
use serde::Serialize;

use crate::engine::StrategySet;
use crate::error::{HedgeError, Result};
use crate::futures::ExtendedPriceSet;
use crate::liquidity::SupplyCurve;
use crate::num::{count, real};
use crate::Scalar;

/// Whether transaction costs enter the cost process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostMode {
    Classical,
    Illiquid,
}

/// A point estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate<T> {
    pub value: T,
    pub std_error: T,
}

/// Criteria of one strategy under one liquidity structure.
#[derive(Debug, Clone, Serialize)]
pub struct CriteriaReport<T> {
    /// Combined criterion `t0_tilde + l0` (alpha = 1 weighting).
    pub t0: Estimate<T>,
    /// Alpha-weighted combination `t0_tilde + alpha * l0`.
    pub t0_alpha: Estimate<T>,
    pub t0_tilde: Estimate<T>,
    pub l0: Estimate<T>,
    pub c0: Estimate<T>,
    pub l0_bar: Estimate<T>,
    /// Mean total variation of holdings per asset,
    /// `E[sum_m |X_{m+1} - X_m|]` over the charged trades `m = 1..T`.
    pub strategy_variability: Vec<Estimate<T>>,
    pub alpha: f64,
    pub n_paths: usize,
}

fn estimate<T: Scalar>(sample: &[T]) -> Estimate<T> {
    let n = count::<T>(sample.len().max(1));
    let mean = sample.iter().copied().sum::<T>() / n;
    let var = sample.iter().map(|x| (*x - mean) * (*x - mean)).sum::<T>() / n;
    Estimate { value: mean, std_error: (var / n).sqrt() }
}

fn check_aligned<T: Scalar>(
    strategy: &StrategySet<T>,
    prices: &ExtendedPriceSet<T>,
) -> Result<(usize, usize, usize)> {
    let n = strategy.n_paths();
    let d = strategy.n_assets();
    let steps = prices.grid.n_steps;
    if prices.n_paths() != n || prices.n_assets() != d || strategy.v.shape()[1] != steps + 1 {
        return Err(HedgeError::invalid("strategy and price panel are misaligned"));
    }
    Ok((n, steps, d))
}

// Supply curve of asset `j` at grid time index `m`, with the term
// structure extended past maturity (holdings there are zero for any
// admissible strategy, so the extension never charges anything).
fn curve_at<T: Scalar>(prices: &ExtendedPriceSet<T>, p: usize, m: usize, j: usize) -> SupplyCurve<T> {
    let spec = &prices.specs[j];
    let eps: T = real(spec.liquidity_structure().epsilon_extended(prices.grid.time(m)));
    SupplyCurve {
        marginal_price: prices.prices[(p, m, j)],
        epsilon: eps,
        floor_fraction: spec.floor_fraction.map(real),
    }
}

/// Cost process per path and grid index.
///
/// `Classical` charges nothing for trading; `Illiquid` adds
/// `dX_{m+1}' [S_m(dX_{m+1}) - S_m]` for every `m = 1..T`, including the
/// terminal liquidation trade. The initial portfolio setup at `m = 0` is
/// not charged.
pub fn cost_process<T: Scalar>(
    strategy: &StrategySet<T>,
    prices: &ExtendedPriceSet<T>,
    mode: CostMode,
) -> Result<Array2<T>> {
    let (n, steps, d) = check_aligned(strategy, prices)?;
    let mut c = Array2::zeros((n, steps + 1));
    for p in 0..n {
        let mut gains = T::zero();
        let mut liq = T::zero();
        c[(p, 0)] = strategy.v[(p, 0)];
        for m in 1..=steps {
            for j in 0..d {
                gains = gains
                    + strategy.x[(p, m - 1, j)]
                        * (prices.prices[(p, m, j)] - prices.prices[(p, m - 1, j)]);
            }
            if mode == CostMode::Illiquid {
                for j in 0..d {
                    let dx = strategy.x[(p, m, j)] - strategy.x[(p, m - 1, j)];
                    if dx != T::zero() {
                        liq = liq + curve_at(prices, p, m, j).transaction_liquidity_cost(dx);
                    }
                }
            }
            c[(p, m)] = strategy.v[(p, m)] - gains + liq;
        }
    }
    Ok(c)
}

/// Evaluate all criteria of a strategy under the liquidity structures
/// attached to the price panel.
///
/// `alpha` only affects the reported alpha-weighted combination; `t0`
/// always uses the equal weighting that the combined criterion is defined
/// with.
pub fn evaluate_criteria<T: Scalar>(
    strategy: &StrategySet<T>,
    prices: &ExtendedPriceSet<T>,
    payoff: &[T],
    alpha: f64,
) -> Result<CriteriaReport<T>> {
    let (n, steps, d) = check_aligned(strategy, prices)?;
    if payoff.len() != n {
        return Err(HedgeError::invalid("payoff length mismatch"));
    }
    for p in 0..n {
        if (strategy.v[(p, steps)] - payoff[p]).abs()
            > real::<T>(1e-9) * payoff[p].abs().max(T::one())
        {
            return Err(HedgeError::invalid(
                "terminal book value does not replicate the payoff",
            ));
        }
    }

    let mut sq_cost = Vec::with_capacity(n);
    let mut liq_total = Vec::with_capacity(n);
    let mut c0_sample = Vec::with_capacity(n);
    let mut lin_risk = Vec::with_capacity(n);
    let mut tv: Vec<Vec<T>> = vec![Vec::with_capacity(n); d];

    for p in 0..n {
        let mut gains = T::zero();
        let mut liq = T::zero();
        let mut tv_p = vec![T::zero(); d];
        for m in 1..=steps {
            for j in 0..d {
                gains = gains
                    + strategy.x[(p, m - 1, j)]
                        * (prices.prices[(p, m, j)] - prices.prices[(p, m - 1, j)]);
                let dx = strategy.x[(p, m, j)] - strategy.x[(p, m - 1, j)];
                if dx != T::zero() {
                    liq = liq + curve_at(prices, p, m, j).transaction_liquidity_cost(dx);
                    tv_p[j] = tv_p[j] + dx.abs();
                }
            }
        }
        // C_T - C_0 = H - V_0 - gains; Chat_T - Chat_0 adds the costs.
        let hedge_error = payoff[p] - strategy.v[(p, 0)] - gains;
        sq_cost.push(hedge_error * hedge_error);
        liq_total.push(liq);
        c0_sample.push(payoff[p] - gains);
        lin_risk.push((hedge_error + liq).abs());
        for j in 0..d {
            tv[j].push(tv_p[j]);
        }
    }

    let t0_tilde = estimate(&sq_cost);
    let l0 = estimate(&liq_total);
    let combined: Vec<T> = sq_cost.iter().zip(&liq_total).map(|(a, b)| *a + *b).collect();
    let alpha_t: T = real(alpha);
    let weighted: Vec<T> =
        sq_cost.iter().zip(&liq_total).map(|(a, b)| *a + alpha_t * *b).collect();
    // The combined criterion is the sum of its parts by definition; fix
    // the value so the identity holds exactly and keep the sample error.
    let t0 = Estimate { value: t0_tilde.value + l0.value, std_error: estimate(&combined).std_error };
    let t0_alpha = Estimate {
        value: t0_tilde.value + alpha_t * l0.value,
        std_error: estimate(&weighted).std_error,
    };

    Ok(CriteriaReport {
        t0,
        t0_alpha,
        t0_tilde,
        l0,
        c0: estimate(&c0_sample),
        l0_bar: estimate(&lin_risk),
        strategy_variability: tv.iter().map(|col| estimate(col)).collect(),
        alpha,
        n_paths: n,
    })
}
