//! Analytic futures prices for delivery-period contracts, the
//! maturity-extended discrete price process, and active-asset bookkeeping.
//!
//! A futures contract pays the average spot over its delivery period
//! `[t1f, t2f]` and ceases to exist at `t2f`. Before delivery its price is a
//! factor-linear expression `sum_i w_i(t) Y_i(t) + D(t)`; in delivery it
//! additionally carries the realized part of the average. After maturity the
//! asset is kept in the price panel with a frozen price, so its increments
//! vanish and holdings in it never earn or cost anything.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::grid::TimeGrid;
use crate::liquidity::{LiquidityKind, LiquidityStructure};
use crate::market::{OUFactorSpec, PathSet, TimeFunction};
use crate::num::{count, real};
use crate::Scalar;

/// One hedge instrument: delivery period and liquidity term structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuturesSpec {
    pub label: String,
    /// Delivery start, on the grid, `0 < t1f`.
    pub t1f: f64,
    /// Delivery end (maturity), on the grid, `t1f < t2f <= horizon`.
    pub t2f: f64,
    #[serde(flatten)]
    pub liquidity: LiquidityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_fraction: Option<f64>,
}

impl FuturesSpec {
    /// Full liquidity structure with the owning asset's dates attached.
    pub fn liquidity_structure(&self) -> LiquidityStructure {
        LiquidityStructure {
            kind: self.liquidity,
            t1f: self.t1f,
            t2f: self.t2f,
            floor_fraction: self.floor_fraction,
        }
    }

    /// Grid indices `(delivery start, maturity)`.
    pub fn delivery_indices(&self, grid: &TimeGrid) -> Result<(usize, usize)> {
        let i1 = grid.index_of(self.t1f)?;
        let i2 = grid.index_of(self.t2f)?;
        if i1 == 0 || i2 <= i1 {
            return Err(HedgeError::invalid(format!(
                "asset {}: delivery period must satisfy 0 < t1f < t2f, got [{}, {}]",
                self.label, self.t1f, self.t2f
            )));
        }
        Ok((i1, i2))
    }

    pub fn validate(&self, grid: &TimeGrid) -> Result<()> {
        self.delivery_indices(grid)?;
        self.liquidity_structure().validate()
    }
}

// Stable evaluation of (e^{-lambda a} - e^{-lambda b}) / lambda for
// 0 <= a <= b; second-order Taylor guard for lambda (b - a) < 1e-8.
fn exp_diff<T: Scalar>(lambda: T, a: T, b: T) -> T {
    let d = b - a;
    let x = lambda * d;
    let head = (-lambda * a).exp();
    if x < real(1e-8) {
        let half: T = real(0.5);
        let sixth: T = real(1.0 / 6.0);
        head * d * (T::one() - x * half + x * x * sixth)
    } else {
        head * (-(-x).exp_m1()) / lambda
    }
}

// Stable evaluation of int_p^q (1 - e^{-lambda x}) / lambda dx for
// 0 <= p <= q; series branch for small lambda q.
fn int_one_minus_exp<T: Scalar>(lambda: T, p: T, q: T) -> T {
    let x = lambda * q;
    if x < real(1e-4) {
        let p2 = p * p;
        let q2 = q * q;
        let half: T = real(0.5);
        (q2 - p2) * half - lambda * (q * q2 - p * p2) * real(1.0 / 6.0)
            + lambda * lambda * (q2 * q2 - p2 * p2) * real(1.0 / 24.0)
    } else {
        (q - p) / lambda - exp_diff(lambda, p, q) / lambda
    }
}

// Composite Simpson with interval doubling until the relative change is
// below `tol`, on a single smooth piece.
fn simpson_adaptive<T: Scalar>(f: &dyn Fn(T) -> T, a: T, b: T, tol: f64) -> T {
    if b <= a {
        return T::zero();
    }
    let simpson = |n: usize| {
        let h = (b - a) / count::<T>(n);
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w: T = if i % 2 == 1 { real(4.0) } else { real(2.0) };
            acc = acc + w * f(a + count::<T>(i) * h);
        }
        acc * h / real(3.0)
    };
    let mut n = 8;
    let mut prev = simpson(n);
    loop {
        n *= 2;
        let next = simpson(n);
        let scale = next.abs().max(real(1e-30));
        if (next - prev).abs() <= real::<T>(tol) * scale || n >= 1 << 20 {
            return next;
        }
        prev = next;
    }
}

// Per-asset, per-grid-index coefficients of the factor-linear price:
// F(t_k) = sum_i weights[k][i] * Y_i(t_k) + drift[k]
//          + (realized average, in delivery).
struct AssetCoeffs<T> {
    maturity_idx: usize,
    delivery_idx: usize,
    weights: Vec<Vec<T>>,
    drift: Vec<T>,
}

fn asset_coeffs<T: Scalar>(
    spec: &FuturesSpec,
    factors: &[OUFactorSpec],
    grid: &TimeGrid,
) -> Result<AssetCoeffs<T>> {
    let (i1, i2) = spec.delivery_indices(grid)?;
    let delta = spec.t2f - spec.t1f;
    let mut weights = Vec::with_capacity(i2 + 1);
    let mut drift = Vec::with_capacity(i2 + 1);
    for k in 0..=i2 {
        let t = grid.time(k);
        let mut w_row = Vec::with_capacity(factors.len());
        let mut d_k = T::zero();
        for f in factors {
            let (w, d) = factor_weight_and_drift(f, t, spec.t1f.max(t), spec.t2f, delta)?;
            w_row.push(w);
            d_k = d_k + d;
        }
        weights.push(w_row);
        drift.push(d_k);
    }
    Ok(AssetCoeffs { maturity_idx: i2, delivery_idx: i1, weights, drift })
}

// Weight and drift contribution of one factor:
//   w = (1/delta) int_a^b Lambda(u) e^{-lambda (u - t)} du
//   d = (m/delta) int_a^b Lambda(u) int_t^u sigma(s) e^{-lambda (u - s)} ds du
// Closed form for constant Lambda and sigma, piecewise Simpson otherwise
// (relative tolerance 1e-10).
fn factor_weight_and_drift<T: Scalar>(
    factor: &OUFactorSpec,
    t: f64,
    a: f64,
    b: f64,
    delta: f64,
) -> Result<(T, T)> {
    let lambda: T = real(factor.lambda);
    let m: T = real(factor.driver.first_moment());
    let inv_delta: T = real(1.0 / delta);
    let ta: T = real(a - t);
    let tb: T = real(b - t);

    if let (Some(lam), Some(sig)) = (factor.seasonality.is_constant(), factor.sigma.is_constant())
    {
        let lam: T = real(lam);
        let sig: T = real(sig);
        let w = lam * exp_diff(lambda, ta, tb) * inv_delta;
        let d = m * sig * lam * int_one_minus_exp(lambda, ta, tb) * inv_delta;
        return Ok((w, d));
    }

    // General piecewise-constant case: split at breakpoints, Simpson per piece.
    let mut cuts: Vec<f64> = vec![a, b];
    for tf in [&factor.seasonality, &factor.sigma] {
        if let TimeFunction::Table { breakpoints, .. } = tf {
            for bp in breakpoints {
                if *bp > a && *bp < b {
                    cuts.push(*bp);
                }
            }
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();

    let seasonality = &factor.seasonality;
    let sigma = &factor.sigma;
    let mut w = T::zero();
    let mut d = T::zero();
    for pair in cuts.windows(2) {
        let (lo, hi) = (pair[0], pair[1]);
        let w_int = |u: T| -> T {
            let uf = u.to_f64().unwrap();
            real::<T>(seasonality.value_at(uf)) * (-lambda * (u - real(t))).exp()
        };
        w = w + simpson_adaptive(&w_int, real(lo), real(hi), 1e-10);

        let d_int = |u: T| -> T {
            let uf = u.to_f64().unwrap();
            // Inner integral is exact per sigma piece.
            let mut inner = T::zero();
            let mut s_cuts: Vec<f64> = vec![t, uf];
            if let TimeFunction::Table { breakpoints, .. } = sigma {
                for bp in breakpoints {
                    if *bp > t && *bp < uf {
                        s_cuts.push(*bp);
                    }
                }
            }
            s_cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            s_cuts.dedup();
            for sp in s_cuts.windows(2) {
                let sig_val: T = real(sigma.value_at(sp[0]));
                inner =
                    inner + sig_val * exp_diff(lambda, real(uf - sp[1]), real(uf - sp[0]));
            }
            real::<T>(seasonality.value_at(uf)) * inner
        };
        d = d + simpson_adaptive(&d_int, real(lo), real(hi), 1e-10);
    }
    Ok((w * inv_delta, d * m * inv_delta))
}

/// Futures price at time `t` from the factor state, with the realized part
/// of the delivery average supplied by the caller when `t` is in delivery.
///
/// `realized_average` is `(1/(t2f - t1f)) * int_{t1f}^{t} E(u) du` (zero
/// before delivery).
pub fn futures_price<T: Scalar>(
    factor_values: &[T],
    realized_average: T,
    spec: &FuturesSpec,
    t: f64,
    factors: &[OUFactorSpec],
) -> Result<T> {
    if t > spec.t2f + 1e-12 {
        return Err(HedgeError::invalid(format!(
            "asset {} price requested at t = {t} beyond maturity {}",
            spec.label, spec.t2f
        )));
    }
    if factor_values.len() != factors.len() {
        return Err(HedgeError::invalid("factor state length mismatch"));
    }
    let delta = spec.t2f - spec.t1f;
    let a = spec.t1f.max(t);
    let mut price = if t > spec.t1f { realized_average } else { T::zero() };
    for (f, y) in factors.iter().zip(factor_values) {
        let (w, d) = factor_weight_and_drift::<T>(f, t, a, spec.t2f, delta)?;
        price = price + w * *y + d;
    }
    Ok(price)
}

/// Maturity-extended price panel: `prices[(path, k, j)]` is the price of
/// asset `j` at `t_k`, frozen at its maturity value afterwards.
#[derive(Debug, Clone)]
pub struct ExtendedPriceSet<T> {
    pub grid: TimeGrid,
    /// `(path, grid index, asset)`.
    pub prices: Array3<T>,
    /// Asset specs, maturities nondecreasing.
    pub specs: Vec<FuturesSpec>,
    /// Maturity grid index per asset.
    pub maturity_indices: Vec<usize>,
}

impl<T: Scalar> ExtendedPriceSet<T> {
    pub fn n_paths(&self) -> usize {
        self.prices.shape()[0]
    }

    pub fn n_assets(&self) -> usize {
        self.specs.len()
    }

    /// Price panel from externally supplied values; used by discrete test
    /// markets. Freezing past maturity must already hold in `prices`.
    pub fn from_raw(
        grid: TimeGrid,
        prices: Array3<T>,
        specs: Vec<FuturesSpec>,
    ) -> Result<Self> {
        check_sorted(&specs)?;
        let maturity_indices = specs
            .iter()
            .map(|s| s.delivery_indices(&grid).map(|(_, i2)| i2))
            .collect::<Result<Vec<_>>>()?;
        if prices.shape() != [prices.shape()[0], grid.len(), specs.len()] {
            return Err(HedgeError::invalid("price panel shape mismatch"));
        }
        Ok(ExtendedPriceSet { grid, prices, specs, maturity_indices })
    }
}

fn check_sorted(specs: &[FuturesSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(HedgeError::invalid("at least one hedge asset is required"));
    }
    if specs.windows(2).any(|w| w[0].t2f > w[1].t2f) {
        return Err(HedgeError::invalid(
            "asset maturities must be sorted nondecreasing",
        ));
    }
    Ok(())
}

/// Evaluate the analytic futures prices on simulated paths and freeze each
/// asset at its maturity.
pub fn build_extended_prices<T: Scalar>(
    paths: &PathSet<T>,
    assets: &[FuturesSpec],
    factors: &[OUFactorSpec],
) -> Result<ExtendedPriceSet<T>> {
    check_sorted(assets)?;
    let grid = paths.grid;
    let n_paths = paths.n_paths();
    let n_times = grid.len();
    let h: T = real(grid.step());

    let coeffs = assets
        .iter()
        .map(|spec| asset_coeffs::<T>(spec, factors, &grid))
        .collect::<Result<Vec<_>>>()?;

    let mut prices = Array3::zeros((n_paths, n_times, assets.len()));
    for (j, (spec, co)) in assets.iter().zip(&coeffs).enumerate() {
        let inv_delta: T = real(1.0 / (spec.t2f - spec.t1f));
        for p in 0..n_paths {
            let mut realized = T::zero();
            for k in 0..n_times {
                if k <= co.maturity_idx {
                    let mut v = if k > co.delivery_idx { realized } else { T::zero() };
                    for (i, w) in co.weights[k].iter().enumerate() {
                        v = v + *w * paths.factor_values[(p, k, i)];
                    }
                    v = v + co.drift[k];
                    prices[(p, k, j)] = v;
                    // Accumulate the left-Riemann delivery average.
                    if k >= co.delivery_idx {
                        realized = realized + paths.spot_values[(p, k)] * h * inv_delta;
                    }
                } else {
                    prices[(p, k, j)] = prices[(p, k - 1, j)];
                }
            }
        }
    }
    Ok(ExtendedPriceSet {
        grid,
        prices,
        specs: assets.to_vec(),
        maturity_indices: coeffs.iter().map(|c| c.maturity_idx).collect(),
    })
}

/// Indices of the assets whose holdings over `(t_k, t_{k+1}]` may be
/// nonzero: asset `j` is active at step `k` iff `t_{k+1} <= t2f_j`.
///
/// An asset maturing exactly at `t_k` is inactive at step `k`: its price
/// increment over the step is zero while its liquidity cost is positive, so
/// the optimal holding is zero either way.
pub fn active_assets(k: usize, maturity_indices: &[usize]) -> Vec<usize> {
    maturity_indices
        .iter()
        .enumerate()
        .filter(|(_, i2)| k + 1 <= **i2)
        .map(|(j, _)| j)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::{JumpMeanConvention, LevyDriverSpec};
    use crate::market::simulate_paths;

    fn paper_factors() -> Vec<OUFactorSpec> {
        vec![
            OUFactorSpec {
                lambda: 0.01,
                sigma: TimeFunction::constant(0.34),
                y0: 0.5,
                driver: LevyDriverSpec::gamma_process(1.0, 1.0),
                seasonality: TimeFunction::constant(1.0),
            },
            OUFactorSpec {
                lambda: 0.1,
                sigma: TimeFunction::constant(0.01),
                y0: 0.5,
                driver: LevyDriverSpec::compound_poisson(1.0, 0.1, JumpMeanConvention::Rate),
                seasonality: TimeFunction::constant(1.0),
            },
        ]
    }

    fn future(label: &str, t1f: f64, t2f: f64) -> FuturesSpec {
        FuturesSpec {
            label: label.into(),
            t1f,
            t2f,
            liquidity: LiquidityKind::Constant { m: 0.01, n: 0.01 },
            floor_fraction: None,
        }
    }

    #[test]
    fn closed_form_weight_matches_hand_value_and_simpson() {
        // lambda = 0.01, t = 0, delivery [0.05, 0.1]:
        // w = (e^{-0.0005} - e^{-0.001}) / (0.01 * 0.05) ~ 0.99925.
        let lambda = 0.01f64;
        let direct: f64 = exp_diff(lambda, 0.05, 0.1) / 0.05;
        assert!((direct - 0.99925).abs() < 5e-6, "got {direct}");

        let f = |u: f64| (-(lambda) * u).exp();
        let simpson: f64 = simpson_adaptive(&f, 0.05, 0.1, 1e-12) / 0.05;
        assert!((direct - simpson).abs() < 1e-12);
    }

    #[test]
    fn lambda_to_zero_guard() {
        // Both branches agree with the truncation-free expansion near the
        // switch point, and the expansion handles lambda = 0 in the limit.
        for x in [1.01e-8f64, 0.99e-8] {
            let d = 0.05f64;
            let lambda = x / d;
            let exact = d * (1.0 - x / 2.0 + x * x / 6.0 - x * x * x / 24.0);
            assert!((exp_diff::<f64>(lambda, 0.0, d) - exact).abs() < 1e-15 * d);
        }
        assert!((exp_diff::<f64>(1e-300, 0.0, 0.05) - 0.05).abs() < 1e-15);
        assert!((int_one_minus_exp::<f64>(1e-300, 0.0, 0.05) - 0.05 * 0.05 / 2.0).abs() < 1e-18);
    }

    #[test]
    fn int_one_minus_exp_matches_quadrature() {
        for lambda in [1e-6, 1e-3, 0.01, 0.5, 3.0] {
            let g = |x: f64| (1.0 - (-lambda * x).exp()) / lambda;
            let quad: f64 = simpson_adaptive(&g, 0.02, 0.4, 1e-12);
            let exact: f64 = int_one_minus_exp(lambda, 0.02, 0.4);
            assert!(
                (quad - exact).abs() <= 1e-10 * exact.abs().max(1e-12),
                "lambda {lambda}: {exact} vs {quad}"
            );
        }
    }

    #[test]
    fn zero_mean_reversion_no_drift_limit() {
        // sigma ~ 0 and lambda ~ 0: the price collapses to the factor sum.
        let factors = vec![OUFactorSpec {
            lambda: 1e-14,
            sigma: TimeFunction::constant(1e-300),
            y0: 0.7,
            driver: LevyDriverSpec::gamma_process(1.0, 1.0),
            seasonality: TimeFunction::constant(1.0),
        }];
        let spec = future("f", 0.05, 0.1);
        let p = futures_price(&[0.7f64], 0.0, &spec, 0.0, &factors).unwrap();
        assert!((p - 0.7).abs() < 1e-10, "got {p}");
    }

    #[test]
    fn piecewise_tables_match_constant_case() {
        // A table holding one value must price like the constant it equals.
        let grid = TimeGrid::new(0.1, 40).unwrap();
        let constant = paper_factors();
        let mut tabled = paper_factors();
        tabled[0].sigma = TimeFunction::Table {
            breakpoints: vec![0.0, 0.05],
            values: vec![0.34, 0.34],
        };
        tabled[0].seasonality = TimeFunction::Table {
            breakpoints: vec![0.0],
            values: vec![1.0],
        };
        let spec = future("f2", 0.0125, 0.1);
        for k in [0usize, 3, 7] {
            let t = grid.time(k);
            let y = [0.43f64, 0.52];
            let a: f64 = futures_price(&y, 0.0, &spec, t, &constant).unwrap();
            let b: f64 = futures_price(&y, 0.0, &spec, t, &tabled).unwrap();
            assert!((a - b).abs() < 1e-9 * a.abs(), "k {k}: {a} vs {b}");
        }
    }

    #[test]
    fn terminal_price_is_realized_average() {
        let grid = TimeGrid::new(0.1, 40).unwrap();
        let factors = paper_factors();
        let paths = simulate_paths::<f64>(&factors, &grid, 50, 31).unwrap();
        let spec = future("f2", 0.0125, 0.1);
        let ext = build_extended_prices(&paths, &[spec], &factors).unwrap();
        let avg = crate::market::average_spot(&paths, 0.0125, 0.1).unwrap();
        for p in 0..paths.n_paths() {
            let terminal = ext.prices[(p, 40, 0)];
            assert!(
                (terminal - avg[p]).abs() < 1e-12 * avg[p].max(1.0),
                "path {p}: {terminal} vs {}",
                avg[p]
            );
        }
    }

    #[test]
    fn frozen_after_maturity() {
        let grid = TimeGrid::new(0.1, 40).unwrap();
        let factors = paper_factors();
        let paths = simulate_paths::<f64>(&factors, &grid, 30, 5).unwrap();
        let f1 = future("f1", 0.0125, 0.05);
        let f2 = future("f2", 0.0125, 0.1);
        let ext = build_extended_prices(&paths, &[f1, f2], &factors).unwrap();
        let m = grid.index_of(0.05).unwrap();
        for p in 0..paths.n_paths() {
            for k in m..=40 {
                assert_eq!(ext.prices[(p, k, 0)], ext.prices[(p, m, 0)]);
            }
            // The longer future keeps moving after the short one matured.
            let moved = (m..40).any(|k| ext.prices[(p, k + 1, 1)] != ext.prices[(p, k, 1)]);
            assert!(moved, "path {p}: f2 should not be frozen before its maturity");
        }
    }

    #[test]
    fn unsorted_maturities_rejected() {
        let grid = TimeGrid::new(0.1, 40).unwrap();
        let factors = paper_factors();
        let paths = simulate_paths::<f64>(&factors, &grid, 5, 5).unwrap();
        let err = build_extended_prices(
            &paths,
            &[future("b", 0.0125, 0.1), future("a", 0.0125, 0.05)],
            &factors,
        );
        assert!(err.is_err());
    }

    #[test]
    fn active_asset_boundaries() {
        // Maturity indices for [f1 @ 0.05, f2 @ 0.1] on the 40-step grid.
        let mats = vec![20usize, 40];
        assert_eq!(active_assets(0, &mats), vec![0, 1]);
        assert_eq!(active_assets(19, &mats), vec![0, 1], "t_{{k+1}} = t2f is active");
        assert_eq!(active_assets(20, &mats), vec![1], "frozen step after maturity");
        assert_eq!(active_assets(39, &mats), vec![1]);
        assert_eq!(active_assets(40, &mats), Vec::<usize>::new());
    }

    #[test]
    fn weight_in_unit_interval() {
        let factors = paper_factors();
        let spec = future("f", 0.0125, 0.1);
        let delta = spec.t2f - spec.t1f;
        for f in &factors {
            for t in [0.0, 0.005, 0.0125, 0.06, 0.0975] {
                let a = spec.t1f.max(t);
                let (w, _) = factor_weight_and_drift::<f64>(f, t, a, spec.t2f, delta).unwrap();
                assert!(w > 0.0 && w <= 1.0, "w = {w} at t = {t}");
            }
            // At maturity the whole price is realized average; weight is 0.
            let (w, d) = factor_weight_and_drift::<f64>(f, 0.1, 0.1, 0.1, delta).unwrap();
            assert_eq!(w, 0.0);
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn discrete_prices_are_near_martingale() {
        // Mean one-step increment of each asset is zero within Monte Carlo
        // noise plus an O(h) discretization allowance.
        let grid = TimeGrid::new(0.1, 40).unwrap();
        let factors = paper_factors();
        let n = 20_000usize;
        let paths = simulate_paths::<f64>(&factors, &grid, n, 404).unwrap();
        let specs = vec![future("f1", 0.0125, 0.05), future("f2", 0.0125, 0.1)];
        let ext = build_extended_prices(&paths, &specs, &factors).unwrap();
        // Discretization bias per step: the left-Riemann delivery accrual
        // against the continuous kernel contributes about
        // h^2 / (2 delta) * (m sigma - lambda Y) per factor; bound it with
        // a factor-2 cushion and a unit factor scale.
        let h = grid.step();
        let scale: f64 = factors
            .iter()
            .map(|f| {
                f.driver.first_moment() * f.sigma.is_constant().unwrap() + f.lambda
            })
            .sum();
        for (j, spec) in specs.iter().enumerate() {
            let allowance = h * h / (spec.t2f - spec.t1f) * scale;
            for k in 0..40 {
                let mut sum = 0.0;
                let mut sumsq = 0.0;
                for p in 0..n {
                    let d = ext.prices[(p, k + 1, j)] - ext.prices[(p, k, j)];
                    sum += d;
                    sumsq += d * d;
                }
                let mean = sum / n as f64;
                let var = (sumsq / n as f64 - mean * mean).max(0.0);
                let se = (var / n as f64).sqrt();
                assert!(
                    mean.abs() <= 4.0 * se + allowance,
                    "asset {j} step {k}: mean {mean}, se {se}, allowance {allowance}"
                );
            }
        }
    }
}
