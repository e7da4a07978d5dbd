//! Multi-factor jump-driven spot model on the hedging grid.
//!
//! The spot price is `E(t) = sum_i Lambda_i(t) * Y_i(t)` where each factor
//! `Y_i` mean-reverts at rate `lambda_i` and is driven by an increasing
//! pure-jump process, simulated by an Euler scheme on the grid.

use ndarray::{Array2, Array3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drivers::{sample_increment, LevyDriverSpec, RngStream};
use crate::error::{HedgeError, Result};
use crate::grid::TimeGrid;
use crate::num::{count, real};
use crate::Scalar;

/// A deterministic, positive function of time: constant or a
/// piecewise-constant table with grid-aligned breakpoints.
///
/// A table value applies from its breakpoint until the next one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimeFunction {
    Constant(f64),
    Table { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl TimeFunction {
    pub fn constant(v: f64) -> Self {
        TimeFunction::Constant(v)
    }

    fn default_one() -> Self {
        TimeFunction::Constant(1.0)
    }

    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            TimeFunction::Constant(v) => *v,
            TimeFunction::Table { breakpoints, values } => {
                let mut v = values[0];
                for (bp, val) in breakpoints.iter().zip(values) {
                    if t >= *bp - 1e-12 {
                        v = *val;
                    } else {
                        break;
                    }
                }
                v
            }
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            TimeFunction::Constant(v) => Some(*v),
            TimeFunction::Table { values, .. } => {
                let first = values[0];
                values.iter().all(|v| *v == first).then_some(first)
            }
        }
    }

    pub(crate) fn validate_positive(&self, grid: &TimeGrid, name: &str) -> Result<()> {
        match self {
            TimeFunction::Constant(v) => {
                if !(*v > 0.0) || !v.is_finite() {
                    return Err(HedgeError::invalid(format!("{name} must be > 0, got {v}")));
                }
            }
            TimeFunction::Table { breakpoints, values } => {
                if breakpoints.is_empty() || breakpoints.len() != values.len() {
                    return Err(HedgeError::invalid(format!(
                        "{name} table needs matching nonempty breakpoints/values"
                    )));
                }
                if breakpoints[0] != 0.0 {
                    return Err(HedgeError::invalid(format!("{name} table must start at t = 0")));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(HedgeError::invalid(format!(
                        "{name} table breakpoints must be strictly increasing"
                    )));
                }
                for bp in breakpoints {
                    grid.index_of(*bp)?;
                }
                if values.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                    return Err(HedgeError::invalid(format!("{name} values must be > 0")));
                }
            }
        }
        Ok(())
    }
}

/// One mean-reverting factor of the spot model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OUFactorSpec {
    /// Mean-reversion rate, > 0.
    pub lambda: f64,
    /// Volatility loading on the driver.
    pub sigma: TimeFunction,
    /// Initial factor value, >= 0.
    pub y0: f64,
    pub driver: LevyDriverSpec,
    /// Seasonality weight of this factor in the spot price.
    #[serde(default = "TimeFunction::default_one")]
    pub seasonality: TimeFunction,
}

impl OUFactorSpec {
    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(HedgeError::invalid(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if !(self.y0 >= 0.0) || !self.y0.is_finite() {
            return Err(HedgeError::invalid(format!("y0 must be >= 0, got {}", self.y0)));
        }
        self.sigma.validate_positive(grid, "sigma")?;
        self.seasonality.validate_positive(grid, "seasonality")?;
        self.driver.validate()
    }
}

/// Simulated factor and spot values for every path and grid point.
#[derive(Debug, Clone)]
pub struct PathSet<T> {
    pub grid: TimeGrid,
    /// `(path, grid index, factor)`.
    pub factor_values: Array3<T>,
    /// `(path, grid index)`.
    pub spot_values: Array2<T>,
    pub seed: u64,
}

impl<T: Scalar> PathSet<T> {
    pub fn n_paths(&self) -> usize {
        self.factor_values.shape()[0]
    }

    pub fn n_factors(&self) -> usize {
        self.factor_values.shape()[2]
    }
}

/// Euler simulation of all factors, one RNG stream per path.
///
/// `Y(t_{k+1}) = Y(t_k) - lambda * Y(t_k) * h + sigma(t_k) * dL(t_k)`,
/// clamped at zero. The exact solution is nonnegative; the clamp only
/// absorbs Euler undershoot, which is negligible for `lambda * h <= 0.1`.
pub fn simulate_paths<T: Scalar>(
    factors: &[OUFactorSpec],
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
) -> Result<PathSet<T>> {
    if n_paths == 0 {
        return Err(HedgeError::invalid("n_paths must be >= 1"));
    }
    if factors.is_empty() {
        return Err(HedgeError::invalid("at least one factor is required"));
    }
    for f in factors {
        f.validate(grid)?;
    }

    let n_times = grid.len();
    let n_factors = factors.len();
    let h: T = real(grid.step());

    // Per-factor per-step coefficients, shared by all paths.
    let lambdas: Vec<T> = factors.iter().map(|f| real(f.lambda)).collect();
    let sigmas: Vec<Vec<T>> = factors
        .iter()
        .map(|f| (0..grid.n_steps).map(|k| real(f.sigma.value_at(grid.time(k)))).collect())
        .collect();
    let weights: Vec<Vec<T>> = factors
        .iter()
        .map(|f| (0..n_times).map(|k| real(f.seasonality.value_at(grid.time(k)))).collect())
        .collect();
    let y0s: Vec<T> = factors.iter().map(|f| real(f.y0)).collect();

    let rows: Vec<(Vec<T>, Vec<T>)> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let mut stream = RngStream::new(seed, p as u64);
            let mut fac = vec![T::zero(); n_times * n_factors];
            let mut spot = vec![T::zero(); n_times];
            for (i, y0) in y0s.iter().enumerate() {
                fac[i] = *y0;
            }
            for k in 0..grid.n_steps {
                for i in 0..n_factors {
                    let y = fac[k * n_factors + i];
                    let dl = sample_increment(&factors[i].driver, h, &mut stream)
                        .expect("driver validated");
                    let next = y - lambdas[i] * y * h + sigmas[i][k] * dl;
                    fac[(k + 1) * n_factors + i] = next.max(T::zero());
                }
            }
            for k in 0..n_times {
                let mut e = T::zero();
                for i in 0..n_factors {
                    e = e + weights[i][k] * fac[k * n_factors + i];
                }
                spot[k] = e;
            }
            (fac, spot)
        })
        .collect();

    let mut factor_values = Array3::zeros((n_paths, n_times, n_factors));
    let mut spot_values = Array2::zeros((n_paths, n_times));
    for (p, (fac, spot)) in rows.into_iter().enumerate() {
        for k in 0..n_times {
            for i in 0..n_factors {
                factor_values[(p, k, i)] = fac[k * n_factors + i];
            }
            spot_values[(p, k)] = spot[k];
        }
    }

    Ok(PathSet { grid: *grid, factor_values, spot_values, seed })
}

/// Per-path left-endpoint Riemann average of the spot over
/// `[t_start, t_end_avg)`.
pub fn average_spot<T: Scalar>(
    paths: &PathSet<T>,
    t_start: f64,
    t_end_avg: f64,
) -> Result<Vec<T>> {
    if !(t_start < t_end_avg) {
        return Err(HedgeError::invalid(format!(
            "averaging window must have t_start < t_end, got [{t_start}, {t_end_avg})"
        )));
    }
    let k0 = paths.grid.index_of(t_start)?;
    let k1 = paths.grid.index_of(t_end_avg)?;
    let inv_cells = T::one() / count::<T>(k1 - k0);
    Ok((0..paths.n_paths())
        .map(|p| {
            let mut sum = T::zero();
            for k in k0..k1 {
                sum = sum + paths.spot_values[(p, k)];
            }
            sum * inv_cells
        })
        .collect())
}

/// Per-path payoff of an Asian-style call on the average spot over the
/// claim window, `max(average - strike, 0)`.
///
/// The claim settles in cash: no terminal delivery of hedge assets, the
/// whole payoff is a cash obligation at the final grid point.
pub fn asian_call_payoff<T: Scalar>(
    paths: &PathSet<T>,
    t1c: f64,
    t2c: f64,
    strike: f64,
) -> Result<Vec<T>> {
    let strike: T = real(strike);
    let mut avg = average_spot(paths, t1c, t2c)?;
    for v in &mut avg {
        *v = (*v - strike).max(T::zero());
    }
    Ok(avg)
}
