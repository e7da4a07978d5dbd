//! Supply curves and liquidity term structures.
//!
//! Trading `x` shares at time `k` executes at `S_k(x) = S_k * (1 + x * eps_k)`
//! per share, so the cost over the marginal price is `eps * S * x^2`. The
//! liquidity level `eps` is deterministic per asset: it either stays constant
//! until delivery or decays exponentially towards the delivery start, and
//! jumps to a (high) in-delivery level afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};
use crate::Scalar;

/// Deterministic liquidity term structure of one asset on `[0, t2f]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LiquidityKind {
    /// `eps(t) = a * (1 - exp(-(t1f - t))) + delta` before delivery with
    /// `a = m / (1 - exp(-t1f))`, then the constant `n` in delivery.
    TimeVarying { m: f64, n: f64, delta: f64 },
    /// `eps(t) = m` before delivery, `n` in delivery.
    Constant { m: f64, n: f64 },
    /// Frictionless comparison mode, `eps = 0` throughout.
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiquidityStructure {
    #[serde(flatten)]
    pub kind: LiquidityKind,
    /// Delivery start of the owning asset.
    pub t1f: f64,
    /// Delivery end (maturity) of the owning asset.
    pub t2f: f64,
    /// Floor fraction `z` of the truncated nonnegative supply curve;
    /// absent for the pure linear curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_fraction: Option<f64>,
}

impl LiquidityStructure {
    pub fn validate(&self) -> Result<()> {
        if !(self.t1f > 0.0) || !(self.t2f > self.t1f) {
            return Err(HedgeError::invalid(format!(
                "delivery period must satisfy 0 < t1f < t2f, got [{}, {}]",
                self.t1f, self.t2f
            )));
        }
        match self.kind {
            LiquidityKind::TimeVarying { m, n, delta } => {
                if !(m > 0.0) || !(n > 0.0) || !(delta > 0.0) {
                    return Err(HedgeError::invalid(
                        "time-varying liquidity needs m > 0, n > 0, delta > 0",
                    ));
                }
            }
            LiquidityKind::Constant { m, n } => {
                if !(m > 0.0) || !(n > 0.0) {
                    return Err(HedgeError::invalid("constant liquidity needs m > 0, n > 0"));
                }
            }
            LiquidityKind::Zero => {}
        }
        if let Some(z) = self.floor_fraction {
            if !(z > 0.0) {
                return Err(HedgeError::invalid("floor fraction must be > 0"));
            }
            // z <= 1/eps must hold wherever eps is largest.
            let eps_max = match self.kind {
                LiquidityKind::TimeVarying { m, n, delta } => (m + delta).max(n),
                LiquidityKind::Constant { m, n } => m.max(n),
                LiquidityKind::Zero => 0.0,
            };
            if eps_max > 0.0 && z > 1.0 / eps_max {
                return Err(HedgeError::invalid(format!(
                    "floor fraction z = {z} exceeds 1/eps = {}",
                    1.0 / eps_max
                )));
            }
        }
        Ok(())
    }

    /// Liquidity level at time `t` in `[0, t2f]`.
    pub fn epsilon_at(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t > self.t2f + 1e-12 {
            return Err(HedgeError::invalid(format!(
                "epsilon requested at t = {t} outside [0, {}]",
                self.t2f
            )));
        }
        Ok(self.epsilon_extended(t))
    }

    /// Total extension of the term structure: beyond maturity the asset is
    /// frozen and optimal holdings are zero, but the cost bookkeeping still
    /// needs a positive level there; the in-delivery level is kept.
    pub fn epsilon_extended(&self, t: f64) -> f64 {
        match self.kind {
            LiquidityKind::TimeVarying { m, n, delta } => {
                if t <= self.t1f {
                    let a = m / (1.0 - (-self.t1f).exp());
                    a * (1.0 - (-(self.t1f - t)).exp()) + delta
                } else {
                    n
                }
            }
            LiquidityKind::Constant { m, n } => {
                if t <= self.t1f {
                    m
                } else {
                    n
                }
            }
            LiquidityKind::Zero => 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, LiquidityKind::Zero)
    }
}

/// Supply curve at one `(time, asset)` point: marginal price plus the
/// liquidity slope, with an optional nonnegativity floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupplyCurve<T> {
    pub marginal_price: T,
    pub epsilon: T,
    /// Truncation level `z` in `(0, 1/eps]`; `None` for the linear curve.
    pub floor_fraction: Option<T>,
}

impl<T: Scalar> SupplyCurve<T> {
    pub fn linear(marginal_price: T, epsilon: T) -> Self {
        SupplyCurve { marginal_price, epsilon, floor_fraction: None }
    }

    pub fn truncated(marginal_price: T, epsilon: T, z: T) -> Self {
        SupplyCurve { marginal_price, epsilon, floor_fraction: Some(z) }
    }

    /// Price per share for an order of `x` shares (`x < 0` sells).
    pub fn price_per_share(&self, x: T) -> T {
        let s = self.marginal_price;
        match self.floor_fraction {
            Some(z) if x < -z => s * (T::one() - z * self.epsilon),
            _ => s * (T::one() + x * self.epsilon),
        }
    }

    /// Cost of the order over the marginal price,
    /// `x * (price_per_share(x) - price_per_share(0)) >= 0`.
    pub fn transaction_liquidity_cost(&self, x: T) -> T {
        x * (self.price_per_share(x) - self.marginal_price)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn time_varying() -> LiquidityStructure {
        LiquidityStructure {
            kind: LiquidityKind::TimeVarying { m: 0.005, n: 0.01, delta: 1e-6 },
            t1f: 0.0125,
            t2f: 0.05,
            floor_fraction: None,
        }
    }

    #[test]
    fn epsilon_at_delivery_start_is_delta() {
        let s = time_varying();
        assert!((s.epsilon_at(0.0125).unwrap() - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn epsilon_at_zero_is_m_plus_delta() {
        // a * (1 - e^{-t1f}) = m by the definition of a.
        let s = time_varying();
        assert!((s.epsilon_at(0.0).unwrap() - (0.005 + 1e-6)).abs() < 1e-15);
    }

    #[test]
    fn constant_structure_is_flat_before_delivery() {
        let s = LiquidityStructure {
            kind: LiquidityKind::Constant { m: 0.01, n: 0.01 },
            t1f: 0.0125,
            t2f: 0.1,
            floor_fraction: None,
        };
        for t in [0.0, 0.005, 0.0125, 0.02, 0.1] {
            assert_eq!(s.epsilon_at(t).unwrap(), 0.01);
        }
        assert!(s.epsilon_at(0.11).is_err());
    }

    #[test]
    fn in_delivery_level_switches_to_n() {
        let s = time_varying();
        assert_eq!(s.epsilon_at(0.013).unwrap(), 0.01);
        assert_eq!(s.epsilon_at(0.05).unwrap(), 0.01);
    }

    #[test]
    fn price_per_share_formula() {
        let c = SupplyCurve::linear(2.0f64, 0.01);
        assert!((c.price_per_share(5.0) - 2.1).abs() < 1e-15);
        assert_eq!(c.price_per_share(0.0), 2.0, "marginal price at x = 0");
    }

    #[test]
    fn truncated_floor_branch() {
        let c = SupplyCurve::truncated(2.0f64, 0.01, 50.0);
        assert!((c.price_per_share(-60.0) - 0.5 * 2.0).abs() < 1e-15);
        // Continuity at the truncation point.
        let at = c.price_per_share(-50.0);
        let below = c.price_per_share(-50.0 - 1e-12);
        assert!((at - below).abs() < 1e-10);
    }

    #[test]
    fn liquidity_cost_values() {
        let c = SupplyCurve::linear(2.0f64, 0.01);
        assert!((c.transaction_liquidity_cost(5.0) - 0.5).abs() < 1e-15);
        assert_eq!(c.transaction_liquidity_cost(0.0), 0.0);

        let t = SupplyCurve::truncated(1.0f64, 0.01, 50.0);
        // Floor branch: -z * eps * S * x checked against the definition.
        let x = -60.0;
        let direct = x * (t.price_per_share(x) - 1.0);
        assert!((t.transaction_liquidity_cost(x) - 30.0).abs() < 1e-12);
        assert!((direct - 30.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_scaling_doubles_cost() {
        let c1 = SupplyCurve::linear(3.0f64, 0.01);
        let c2 = SupplyCurve::linear(3.0f64, 0.02);
        let x = 1.7;
        assert!(
            (c2.transaction_liquidity_cost(x) - 2.0 * c1.transaction_liquidity_cost(x)).abs()
                < 1e-14
        );
    }

    #[test]
    fn validation_rejects_oversized_floor() {
        let mut s = time_varying();
        s.floor_fraction = Some(1e6);
        assert!(s.validate().is_err());
        s.floor_fraction = Some(10.0);
        assert!(s.validate().is_ok());
    }

    proptest! {
        #[test]
        fn cost_is_nonnegative(
            s in 1e-6f64..1e3,
            eps in 1e-6f64..1.0,
            x in -1e3f64..1e3,
            z_frac in 0.01f64..1.0,
        ) {
            let linear = SupplyCurve::linear(s, eps);
            prop_assert!(linear.transaction_liquidity_cost(x) >= 0.0);

            let z = z_frac / eps;
            let truncated = SupplyCurve::truncated(s, eps, z);
            prop_assert!(truncated.transaction_liquidity_cost(x) >= 0.0);
            // Truncated price never drops below the floor value.
            prop_assert!(truncated.price_per_share(x) >= s * (1.0 - z * eps) - 1e-12 * s);
        }
    }
}
