//! Empirical quantiles under the order-statistic convention.
//!
//! `q_level(S)` is the `⌈n·level⌉`-th smallest element of `S` with no
//! interpolation. Every critical score in the crate goes through this
//! module so that finite-sample guarantees hold exactly.

use crate::error::{Error, Result};

/// Relative slack used when rounding `n·level` to an integer rank. Products
/// such as `0.9 · 10` land a few ulps above 9 and must still count as 9.
const RANK_TOL: f64 = 1e-9;

pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= RANK_TOL * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

pub(crate) fn floor_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= RANK_TOL * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

/// Significance level `alpha ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SignificanceLevel(f64);

impl SignificanceLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(format!(
                "significance level {alpha} outside [0, 1]"
            )));
        }
        Ok(Self(alpha))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Nominal coverage `1 - alpha`.
    pub fn confidence(self) -> f64 {
        1.0 - self.0
    }
}

/// 1-based rank `⌈n·level⌉`, clamped to `[1, n]`.
pub(crate) fn upper_rank(n: usize, level: f64) -> usize {
    let r = ceil_tol(n as f64 * level);
    (r.max(1.0) as usize).min(n)
}

/// 1-based rank `⌊n·level⌋`, clamped to `[1, n]`.
pub(crate) fn lower_rank(n: usize, level: f64) -> usize {
    let r = floor_tol(n as f64 * level);
    (r.max(1.0) as usize).min(n)
}

fn check_level(level: f64) -> Result<()> {
    if level.is_nan() || level <= 0.0 || level > 1.0 {
        return Err(Error::InvalidLevel(level));
    }
    Ok(())
}

/// `⌈n·level⌉`-th smallest value of `values`.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    check_level(level)?;
    SortedSample::new(values.to_vec())?.quantile(level)
}

/// Lower counterpart of [`empirical_quantile`]: the `⌊n·level⌋`-th smallest
/// value, with the rank clamped to `[1, n]` (so levels at or below `1/n`
/// return the minimum and levels above 1 the maximum).
pub fn lower_quantile(values: &[f64], level: f64) -> Result<f64> {
    SortedSample::new(values.to_vec())?.lower_quantile(level)
}

/// An ascending, NaN-free sample supporting repeated order-statistic and
/// rank-count queries.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedSample {
    values: Vec<f64>,
}

impl SortedSample {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if let Some(&v) = values.iter().find(|v| v.is_nan()) {
            return Err(Error::NonFinite {
                context: "sample".into(),
                value: v,
            });
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> Option<f64> {
        self.values.first().copied()
    }

    pub fn max(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// `rank`-th smallest value, 1-based.
    pub fn order_statistic(&self, rank: usize) -> Result<f64> {
        if rank == 0 || rank > self.values.len() {
            return Err(Error::invalid(format!(
                "rank {rank} outside 1..={}",
                self.values.len()
            )));
        }
        Ok(self.values[rank - 1])
    }

    pub fn quantile(&self, level: f64) -> Result<f64> {
        check_level(level)?;
        if self.values.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(self.values[upper_rank(self.len(), level) - 1])
    }

    pub fn lower_quantile(&self, level: f64) -> Result<f64> {
        if level.is_nan() {
            return Err(Error::InvalidLevel(level));
        }
        if self.values.is_empty() {
            return Err(Error::EmptySample);
        }
        Ok(self.values[lower_rank(self.len(), level) - 1])
    }

    pub fn count_lt(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v < x)
    }

    pub fn count_le(&self, x: f64) -> usize {
        self.values.partition_point(|&v| v <= x)
    }

    pub fn count_gt(&self, x: f64) -> usize {
        self.values.len() - self.count_le(x)
    }

    pub fn count_ge(&self, x: f64) -> usize {
        self.values.len() - self.count_lt(x)
    }

    pub fn count_eq(&self, x: f64) -> usize {
        self.count_le(x) - self.count_lt(x)
    }

    /// Right-continuous empirical CDF `#{v ≤ x} / n`.
    pub fn ecdf(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.count_le(x) as f64 / self.values.len() as f64
    }

    /// Insert keeping the order.
    pub fn insert(&mut self, x: f64) -> Result<()> {
        if x.is_nan() {
            return Err(Error::NonFinite {
                context: "sample".into(),
                value: x,
            });
        }
        let at = self.count_le(x);
        self.values.insert(at, x);
        Ok(())
    }
}
