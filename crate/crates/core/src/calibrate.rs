//! Inductive conformal calibration: critical scores, p-values, bands and
//! label sets.

use crate::error::{ensure_finite, Error, Result};
use crate::quantile::{ceil_tol, SignificanceLevel, SortedSample};
use crate::rng::SeededRng;
use crate::scores::{RegressionOutputs, RegressionScore};

/// Calibration scores with a significance level.
///
/// In strict mode (the default) a level `(1-α)(1+1/n)` above 1 yields an
/// infinite critical score, i.e. the trivial region. With strict mode off
/// the level is clamped to 1 and the largest score is used instead.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    scores: SortedSample,
    alpha: SignificanceLevel,
    strict: bool,
}

impl Calibration {
    pub fn new(scores: Vec<f64>, alpha: f64) -> Result<Self> {
        ensure_finite("calibration scores", &scores)?;
        Ok(Self {
            scores: SortedSample::new(scores)?,
            alpha: SignificanceLevel::new(alpha)?,
            strict: true,
        })
    }

    pub fn with_strict(mut self, strict: bool) -> Self {
        self.strict = strict;
        self
    }

    pub fn strict(&self) -> bool {
        self.strict
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Ok(Self {
            alpha: SignificanceLevel::new(alpha)?,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &SortedSample {
        &self.scores
    }

    /// The `(1-α)(1+1/n)` empirical quantile of the scores, or `+∞`.
    pub fn critical_score(&self) -> Result<f64> {
        let n = self.scores.len();
        if n == 0 {
            return Err(Error::EmptySample);
        }
        // rank ⌈(1-α)(n+1)⌉ is ⌈n·ℓ⌉ without the intermediate division
        let rank = ceil_tol(self.alpha.confidence() * (n as f64 + 1.0)).max(1.0) as usize;
        if rank > n {
            if self.strict {
                return Ok(f64::INFINITY);
            }
            return self.scores.order_statistic(n);
        }
        self.scores.order_statistic(rank)
    }

    fn check_test_score(&self, test_score: f64) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptySample);
        }
        if test_score.is_nan() {
            return Err(Error::NonFinite {
                context: "test score".into(),
                value: test_score,
            });
        }
        Ok(())
    }

    /// `(#{cal ≥ s} + 1) / (n + 1)`.
    pub fn p_value(&self, test_score: f64) -> Result<f64> {
        self.check_test_score(test_score)?;
        Ok((self.scores.count_ge(test_score) + 1) as f64 / (self.len() + 1) as f64)
    }

    /// `(#{cal > s} + τ·(#{cal = s} + 1)) / (n + 1)` for a given `τ`.
    pub fn smoothed_p_value_with(&self, test_score: f64, tau: f64) -> Result<f64> {
        self.check_test_score(test_score)?;
        let gt = self.scores.count_gt(test_score) as f64;
        let eq = self.scores.count_eq(test_score) as f64;
        Ok((gt + tau * (eq + 1.0)) / (self.len() + 1) as f64)
    }

    pub fn smoothed_p_value(&self, test_score: f64, rng: &mut SeededRng) -> Result<f64> {
        let tau = rng.open_uniform();
        self.smoothed_p_value_with(test_score, tau)
    }

    /// A new calibration with `score` added.
    pub fn appended(&self, score: f64) -> Result<Self> {
        ensure_finite("calibration scores", &[score])?;
        let mut next = self.clone();
        next.scores.insert(score)?;
        Ok(next)
    }
}

pub fn critical_score(cal: &Calibration) -> Result<f64> {
    cal.critical_score()
}

pub fn p_value(cal_scores: &[f64], test_score: f64) -> Result<f64> {
    if cal_scores.is_empty() {
        return Err(Error::EmptySample);
    }
    let ge = cal_scores.iter().filter(|&&s| s >= test_score).count();
    Ok((ge + 1) as f64 / (cal_scores.len() + 1) as f64)
}

pub fn smoothed_p_value_with(cal_scores: &[f64], test_score: f64, tau: f64) -> Result<f64> {
    if cal_scores.is_empty() {
        return Err(Error::EmptySample);
    }
    let gt = cal_scores.iter().filter(|&&s| s > test_score).count() as f64;
    let eq = cal_scores.iter().filter(|&&s| s == test_score).count() as f64;
    Ok((gt + tau * (eq + 1.0)) / (cal_scores.len() + 1) as f64)
}

pub fn smoothed_p_value(cal_scores: &[f64], test_score: f64, rng: &mut SeededRng) -> Result<f64> {
    let tau = rng.open_uniform();
    smoothed_p_value_with(cal_scores, test_score, tau)
}

pub fn online_append(cal: &Calibration, new_score: f64) -> Result<Calibration> {
    cal.appended(new_score)
}

/// Closed prediction interval `[lo, hi]`.
///
/// A `degenerate` band comes from an interval correction that would make the
/// bounds cross; it is collapsed to the midpoint and contains nothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConformalBand {
    pub lo: f64,
    pub hi: f64,
    pub alpha: Option<f64>,
    pub degenerate: bool,
}

impl ConformalBand {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            alpha: None,
            degenerate: false,
        }
    }

    pub fn full() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn at_level(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn contains(&self, y: f64) -> bool {
        !self.degenerate && self.lo <= y && y <= self.hi
    }

    pub fn width(&self) -> f64 {
        if self.degenerate {
            0.0
        } else {
            self.hi - self.lo
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    /// Whether `self` lies inside `other`. The empty band is inside anything.
    pub fn is_within(&self, other: &ConformalBand) -> bool {
        self.degenerate || (!other.degenerate && other.lo <= self.lo && self.hi <= other.hi)
    }
}

/// `[point - a*, point + a*]`.
pub fn band_point(point: f64, a_star: f64) -> ConformalBand {
    if a_star == f64::INFINITY {
        return ConformalBand::full();
    }
    ConformalBand::new(point - a_star, point + a_star)
}

/// `[point - a*·spread, point + a*·spread]`.
pub fn band_normalized(point: f64, spread: f64, a_star: f64) -> Result<ConformalBand> {
    if !(spread > 0.0) {
        return Err(Error::NonpositiveDifficulty(spread));
    }
    if a_star == f64::INFINITY {
        return Ok(ConformalBand::full());
    }
    Ok(ConformalBand::new(point - a_star * spread, point + a_star * spread))
}

/// `[lower - a*, upper + a*]`; a negative `a*` shrinks the interval.
pub fn band_interval(lower: f64, upper: f64, a_star: f64) -> Result<ConformalBand> {
    if lower > upper {
        return Err(Error::invalid(format!("interval lower {lower} exceeds upper {upper}")));
    }
    if a_star == f64::INFINITY {
        return Ok(ConformalBand::full());
    }
    let (lo, hi) = (lower - a_star, upper + a_star);
    if lo > hi {
        let mid = 0.5 * (lower + upper);
        return Ok(ConformalBand {
            lo: mid,
            hi: mid,
            alpha: None,
            degenerate: true,
        });
    }
    Ok(ConformalBand::new(lo, hi))
}

/// `{y : score(out, y) ≤ a*}` for the given measure.
pub fn band_for(kind: RegressionScore, out: &RegressionOutputs, a_star: f64) -> Result<ConformalBand> {
    match kind {
        RegressionScore::Residual => Ok(band_point(out.point, a_star)),
        RegressionScore::Normalized => band_normalized(out.point, out.require_spread()?, a_star),
        RegressionScore::Interval => {
            let (lo, hi) = out.require_interval()?;
            band_interval(lo, hi, a_star)
        }
        RegressionScore::SignedResidual => Ok(ConformalBand::new(f64::NEG_INFINITY, out.point + a_star)),
        RegressionScore::Standardized => {
            let s = out.require_spread()?;
            Ok(ConformalBand::new(f64::NEG_INFINITY, out.point + a_star * s))
        }
    }
}

/// Label subset of `{0, .., k-1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictionSet {
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl PredictionSet {
    pub fn contains(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_subset(&self, other: &PredictionSet) -> bool {
        self.labels.iter().all(|&l| other.contains(l))
    }
}

/// Labels whose score does not exceed `a*`.
pub fn predict_set(label_scores: &[f64], a_star: f64) -> PredictionSet {
    PredictionSet {
        labels: (0..label_scores.len()).filter(|&y| label_scores[y] <= a_star).collect(),
        n_classes: label_scores.len(),
    }
}

/// Labels whose p-value is at least `alpha`.
pub fn predict_set_from_p_values(p_values: &[f64], alpha: f64) -> PredictionSet {
    PredictionSet {
        labels: (0..p_values.len()).filter(|&y| p_values[y] >= alpha).collect(),
        n_classes: p_values.len(),
    }
}

/// Randomized predictive CDF built from signed calibration residuals.
pub fn cps_cdf(cal_signed_residuals: &SortedSample, point: f64, y: f64, tau: f64) -> Result<f64> {
    if cal_signed_residuals.is_empty() {
        return Err(Error::EmptySample);
    }
    let r = y - point;
    let lt = cal_signed_residuals.count_lt(r) as f64;
    let eq = cal_signed_residuals.count_eq(r) as f64;
    Ok((lt + tau * (eq + 1.0)) / (cal_signed_residuals.len() + 1) as f64)
}
