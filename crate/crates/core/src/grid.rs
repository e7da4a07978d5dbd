//! Uniform discrete hedging time grid.

use serde::{Deserialize, Serialize};

use crate::error::{HedgeError, Result};

/// Uniform grid `t_0 = 0 < t_1 < ... < t_T = t_end` with `T = n_steps`.
///
/// Every delivery date and claim date referenced by an experiment must
/// coincide exactly with a grid point; [`TimeGrid::index_of`] refuses
/// anything that does not.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n_steps: usize) -> Result<Self> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(HedgeError::invalid(format!("t_end must be > 0, got {t_end}")));
        }
        if n_steps == 0 {
            return Err(HedgeError::invalid("n_steps must be >= 1"));
        }
        Ok(TimeGrid { t_end, n_steps })
    }

    /// Step width `h`.
    pub fn step(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    /// Time of grid index `k` (clamped nowhere; `k <= n_steps` expected).
    pub fn time(&self, k: usize) -> f64 {
        // t_end * k / n avoids drift from repeated addition of h.
        self.t_end * k as f64 / self.n_steps as f64
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Exact index lookup: `t` must match a grid point to within a relative
    /// tolerance of 1e-9, otherwise the date is off-grid.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let h = self.step();
        let k = (t / h).round();
        let idx = k as usize;
        if k < 0.0 || idx > self.n_steps || (t - self.time(idx)).abs() > 1e-9 * self.t_end.max(1.0)
        {
            return Err(HedgeError::OffGrid { time: t, step: h });
        }
        Ok(idx)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |k| self.time(k))
    }
}
