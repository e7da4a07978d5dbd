//! Monte Carlo engine for locally risk-minimizing hedging under liquidity
//! costs, with multiple hedge instruments of different maturities.
//!
//! The crate simulates a multi-factor jump-driven spot model, prices
//! delivery-period futures analytically on the simulated paths, and computes
//! hedge strategies by backward induction on a discrete time grid. Each step
//! solves a small symmetric linear system assembled from conditional moments
//! estimated by least-squares Monte Carlo (indicator binning). Liquidity
//! enters through a supply curve: trading `x` shares at marginal price `S`
//! costs `x * (S(x) - S)` on top of the frictionless outlay.

pub mod binning;
pub mod criteria;
pub mod diagnostics;
pub mod drivers;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod futures;
pub mod grid;
pub mod linalg;
pub mod liquidity;
pub mod market;
pub mod oracle;

mod num;

pub use error::{HedgeError, Result};
pub use num::{count, real, Scalar};

/// Default scalar type used by the configuration layer and the CLI.
pub type Real = f64;
