//! Nonconformity measures for regression and classification outputs.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// What a regression model reports for one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOutputs {
    /// Point prediction; the midpoint for interval-only models.
    pub point: f64,
    /// Difficulty or standard deviation estimate.
    pub spread: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl RegressionOutputs {
    pub fn point(point: f64) -> Self {
        Self {
            point,
            spread: None,
            lower: None,
            upper: None,
        }
    }

    pub fn with_spread(point: f64, spread: f64) -> Self {
        Self {
            spread: Some(spread),
            ..Self::point(point)
        }
    }

    pub fn interval(lower: f64, upper: f64) -> Self {
        Self {
            point: 0.5 * (lower + upper),
            spread: None,
            lower: Some(lower),
            upper: Some(upper),
        }
    }

    pub(crate) fn require_spread(&self) -> Result<f64> {
        match self.spread {
            Some(s) if s > 0.0 => Ok(s),
            Some(s) => Err(Error::NonpositiveDifficulty(s)),
            None => Err(Error::invalid("score requires a spread estimate")),
        }
    }

    pub(crate) fn require_interval(&self) -> Result<(f64, f64)> {
        match (self.lower, self.upper) {
            (Some(lo), Some(hi)) if lo <= hi => Ok((lo, hi)),
            (Some(lo), Some(hi)) => Err(Error::invalid(format!("interval lower {lo} exceeds upper {hi}"))),
            _ => Err(Error::invalid("score requires lower and upper estimates")),
        }
    }
}

pub fn residual_score(out: &RegressionOutputs, y: f64) -> f64 {
    (out.point - y).abs()
}

pub fn signed_residual_score(out: &RegressionOutputs, y: f64) -> f64 {
    y - out.point
}

pub fn normalized_score(out: &RegressionOutputs, y: f64) -> Result<f64> {
    Ok((out.point - y).abs() / out.require_spread()?)
}

pub fn standardized_score(out: &RegressionOutputs, y: f64) -> Result<f64> {
    Ok((y - out.point) / out.require_spread()?)
}

/// Signed distance outside `[lower, upper]`; negative inside.
pub fn interval_score(out: &RegressionOutputs, y: f64) -> Result<f64> {
    let (lo, hi) = out.require_interval()?;
    Ok((lo - y).max(y - hi))
}

/// Regression nonconformity measure selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegressionScore {
    Residual,
    SignedResidual,
    Normalized,
    Standardized,
    Interval,
}

impl RegressionScore {
    pub fn score(self, out: &RegressionOutputs, y: f64) -> Result<f64> {
        match self {
            RegressionScore::Residual => Ok(residual_score(out, y)),
            RegressionScore::SignedResidual => Ok(signed_residual_score(out, y)),
            RegressionScore::Normalized => normalized_score(out, y),
            RegressionScore::Standardized => standardized_score(out, y),
            RegressionScore::Interval => interval_score(out, y),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RegressionScore::Residual => "residual",
            RegressionScore::SignedResidual => "signed",
            RegressionScore::Normalized => "normalized",
            RegressionScore::Standardized => "standardized",
            RegressionScore::Interval => "interval",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        [
            RegressionScore::Residual,
            RegressionScore::SignedResidual,
            RegressionScore::Normalized,
            RegressionScore::Standardized,
            RegressionScore::Interval,
        ]
        .into_iter()
        .find(|s| s.name() == name)
    }
}

/// Probability vector over `k` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProbs(Vec<f64>);

impl ClassProbs {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::EmptySample);
        }
        if let Some(&p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!("probability {p} is not a finite nonnegative number")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn n_classes(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        // first index wins ties
        (0..self.0.len()).fold(0, |best, j| if self.0[j] > self.0[best] { j } else { best })
    }

    fn get(&self, y: usize) -> Result<f64> {
        self.0.get(y).copied().ok_or(Error::LabelOutOfRange {
            label: y,
            n_classes: self.0.len(),
        })
    }

    /// Whether class `j` ranks above class `y`: larger probability, or equal
    /// probability and smaller index.
    fn ranks_above(&self, j: usize, y: usize) -> bool {
        self.0[j] > self.0[y] || (self.0[j] == self.0[y] && j < y)
    }

    /// Mass of the classes ranked above `y`.
    fn mass_above(&self, y: usize) -> f64 {
        (0..self.0.len()).filter(|&j| self.ranks_above(j, y)).map(|j| self.0[j]).sum()
    }

    /// 1-based rank of `y`, 1 = most probable.
    pub fn descending_rank(&self, y: usize) -> Result<usize> {
        self.get(y)?;
        Ok(1 + (0..self.0.len()).filter(|&j| self.ranks_above(j, y)).count())
    }
}

pub fn zero_one_score(predicted: usize, y: usize) -> f64 {
    if predicted == y {
        0.0
    } else {
        1.0
    }
}

pub fn softmax_score(probs: &ClassProbs, y: usize) -> Result<f64> {
    Ok(1.0 - probs.get(y)?)
}

/// Adaptive prediction set score: mass of the classes ranked above `y` plus
/// `y`'s own mass, scaled by a uniform draw when `randomize` is given.
pub fn aps_score(probs: &ClassProbs, y: usize, randomize: Option<&mut SeededRng>) -> Result<f64> {
    let own = probs.get(y)?;
    let above = probs.mass_above(y);
    Ok(match randomize {
        Some(rng) => above + rng.uniform() * own,
        None => above + own,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankOrder {
    /// 1 = most probable class.
    Descending,
    /// 1 = least probable class.
    Ascending,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RapsConfig {
    pub lambda: f64,
    pub k_reg: usize,
    pub randomized: bool,
    pub rank_order: RankOrder,
}

impl RapsConfig {
    pub fn new(lambda: f64, k_reg: usize, randomized: bool) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("RAPS lambda must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            lambda,
            k_reg,
            randomized,
            rank_order: RankOrder::Descending,
        })
    }
}

pub fn raps_score(probs: &ClassProbs, y: usize, cfg: &RapsConfig, rng: &mut SeededRng) -> Result<f64> {
    let base = aps_score(probs, y, cfg.randomized.then_some(rng))?;
    let rank = match cfg.rank_order {
        RankOrder::Descending => probs.descending_rank(y)?,
        RankOrder::Ascending => probs.n_classes() + 1 - probs.descending_rank(y)?,
    };
    Ok(base + cfg.lambda * rank.saturating_sub(cfg.k_reg) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pi() -> ClassProbs {
        ClassProbs::new(vec![0.5, 0.3, 0.2]).unwrap()
    }

    #[test]
    fn regression_scores() {
        assert_eq!(residual_score(&RegressionOutputs::point(3.0), 7.0), 4.0);
        assert_eq!(residual_score(&RegressionOutputs::point(5.0), 5.0), 0.0);
        assert_eq!(residual_score(&RegressionOutputs::point(-1.0), 2.0), 3.0);
        assert_eq!(signed_residual_score(&RegressionOutputs::point(3.0), 7.0), 4.0);
        assert_eq!(signed_residual_score(&RegressionOutputs::point(7.0), 3.0), -4.0);
        assert_eq!(signed_residual_score(&RegressionOutputs::point(0.0), 0.0), 0.0);
        let ns = |p, s, y| normalized_score(&RegressionOutputs::with_spread(p, s), y).unwrap();
        assert_eq!(ns(0.0, 2.0, 3.0), 1.5);
        assert_eq!(ns(1.0, 1.0, 1.0), 0.0);
        assert_eq!(ns(10.0, 0.5, 9.0), 2.0);
        let ss = |p, s, y| standardized_score(&RegressionOutputs::with_spread(p, s), y).unwrap();
        assert_eq!(ss(0.0, 1.0, 1.5), 1.5);
        assert_eq!(ss(2.0, 2.0, 0.0), -1.0);
        assert_eq!(ss(5.0, 10.0, 5.0), 0.0);
        let is = |y| interval_score(&RegressionOutputs::interval(0.0, 1.0), y).unwrap();
        assert_eq!(is(2.0), 1.0);
        assert_eq!(is(0.5), -0.5);
        assert_eq!(is(-1.0), 1.0);
    }

    #[test]
    fn regression_score_errors() {
        let zero = RegressionOutputs::with_spread(0.0, 0.0);
        assert!(matches!(normalized_score(&zero, 1.0), Err(Error::NonpositiveDifficulty(_))));
        assert!(standardized_score(&RegressionOutputs::with_spread(0.0, -1.0), 1.0).is_err());
        assert!(normalized_score(&RegressionOutputs::point(0.0), 1.0).is_err());
        let crossed = RegressionOutputs {
            lower: Some(2.0),
            upper: Some(1.0),
            ..RegressionOutputs::point(0.0)
        };
        assert!(interval_score(&crossed, 0.0).is_err());
    }

    #[test]
    fn classification_scores() {
        assert_eq!(zero_one_score(2, 2), 0.0);
        assert_eq!(zero_one_score(2, 3), 1.0);
        assert_eq!(zero_one_score(1, 1), 0.0);
        let p = ClassProbs::new(vec![0.7, 0.3]).unwrap();
        assert!((softmax_score(&p, 1).unwrap() - 0.7).abs() < 1e-15);
        assert_eq!(softmax_score(&ClassProbs::new(vec![0.0, 1.0]).unwrap(), 1).unwrap(), 0.0);
        // binary output rho = P(class 1) = 0.8; label 0 scores rho itself
        let binary = ClassProbs::new(vec![0.2, 0.8]).unwrap();
        assert!((softmax_score(&binary, 0).unwrap() - 0.8).abs() < 1e-15);
        assert!(softmax_score(&p, 2).is_err());
    }

    /// Cumulative sum of ascending-sorted probabilities from y's position to
    /// the top, with ties ordered so that lower indices sit higher.
    fn aps_by_sorting(probs: &[f64], y: usize) -> f64 {
        let mut order: Vec<usize> = (0..probs.len()).collect();
        order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(b.cmp(&a)));
        let pos = order.iter().position(|&j| j == y).unwrap();
        order[pos..].iter().map(|&j| probs[j]).sum()
    }

    #[test]
    fn aps_examples() {
        let p = pi();
        assert!((aps_score(&p, 0, None).unwrap() - 0.5).abs() < 1e-12);
        assert!((aps_score(&p, 1, None).unwrap() - 0.8).abs() < 1e-12);
        assert!((aps_score(&p, 2, None).unwrap() - 1.0).abs() < 1e-12);
        for y in 0..3 {
            assert!((aps_score(&p, y, None).unwrap() - aps_by_sorting(p.as_slice(), y)).abs() < 1e-12);
        }
    }

    #[test]
    fn raps_examples() {
        let p = pi();
        let mut rng = SeededRng::new(0);
        let cfg = RapsConfig::new(0.1, 1, false).unwrap();
        assert!((raps_score(&p, 0, &cfg, &mut rng).unwrap() - 0.5).abs() < 1e-12);
        assert!((raps_score(&p, 1, &cfg, &mut rng).unwrap() - 0.9).abs() < 1e-12);
        let plain = RapsConfig::new(0.0, 1, false).unwrap();
        for y in 0..3 {
            assert_eq!(raps_score(&p, y, &plain, &mut rng).unwrap(), aps_score(&p, y, None).unwrap());
        }
        let asc = RapsConfig {
            rank_order: RankOrder::Ascending,
            ..cfg
        };
        // least probable class has ascending rank 1, no penalty
        assert!((raps_score(&p, 2, &asc, &mut rng).unwrap() - 1.0).abs() < 1e-12);
        assert!(RapsConfig::new(-1.0, 0, false).is_err());
    }

    #[test]
    fn probs_validation() {
        assert!(ClassProbs::new(vec![0.5, 0.6]).is_err());
        assert!(ClassProbs::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassProbs::new(vec![]).is_err());
        assert_eq!(ClassProbs::new(vec![0.25, 0.5, 0.25]).unwrap().argmax(), 1);
    }

    fn probs_strategy() -> impl Strategy<Value = ClassProbs> {
        prop::collection::vec(0u32..20, 1..8).prop_filter_map("nonzero mass", |w| {
            let total: u32 = w.iter().sum();
            (total > 0).then(|| {
                let mut p: Vec<f64> = w.iter().map(|&v| f64::from(v) / f64::from(total)).collect();
                let s: f64 = p.iter().sum();
                p[0] += 1.0 - s;
                p[0] = p[0].max(0.0);
                ClassProbs::new(p).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn residual_is_abs_signed(point in -1e3f64..1e3, spread in 1e-3f64..1e2, y in -1e3f64..1e3) {
            let out = RegressionOutputs::with_spread(point, spread);
            prop_assert_eq!(residual_score(&out, y), signed_residual_score(&out, y).abs());
            prop_assert_eq!(normalized_score(&out, y).unwrap(), standardized_score(&out, y).unwrap().abs());
        }

        #[test]
        fn interval_sign_is_membership(lo in -10f64..10.0, w in 0f64..10.0, y in -30f64..30.0) {
            let out = RegressionOutputs::interval(lo, lo + w);
            prop_assert_eq!(interval_score(&out, y).unwrap() <= 0.0, lo <= y && y <= lo + w);
        }

        #[test]
        fn normalized_shift_invariance(point in -10f64..10.0, spread in 0.1f64..5.0, y in -10f64..10.0, c in -3f64..3.0) {
            let a = normalized_score(&RegressionOutputs::with_spread(point, spread), y).unwrap();
            let b = normalized_score(&RegressionOutputs::with_spread(point + c * spread, spread), y + c * spread).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn normalized_order_survives_common_rescale(
            rows in prop::collection::vec((-10f64..10.0, 0.1f64..5.0, -10f64..10.0), 2..30),
            lambda in 0.01f64..100.0,
        ) {
            let order = |scale: f64| {
                let s: Vec<f64> = rows.iter()
                    .map(|&(p, sd, y)| normalized_score(&RegressionOutputs::with_spread(p, sd * scale), y).unwrap())
                    .collect();
                let mut idx: Vec<usize> = (0..s.len()).collect();
                idx.sort_by(|&a, &b| s[a].total_cmp(&s[b]).then(a.cmp(&b)));
                idx
            };
            let (a, b) = (order(1.0), order(lambda));
            // ties created by rounding may swap; compare ranks of distinct values only
            let base: Vec<f64> = rows.iter()
                .map(|&(p, sd, y)| normalized_score(&RegressionOutputs::with_spread(p, sd), y).unwrap())
                .collect();
            for w in a.windows(2) {
                if base[w[1]] - base[w[0]] > 1e-9 * (1.0 + base[w[1]].abs()) {
                    let pa = b.iter().position(|&i| i == w[0]).unwrap();
                    let pb = b.iter().position(|&i| i == w[1]).unwrap();
                    prop_assert!(pa < pb);
                }
            }
        }

        #[test]
        fn aps_range(p in probs_strategy(), seed in 0u64..1000) {
            let mut rng = SeededRng::new(seed);
            for y in 0..p.n_classes() {
                let det = aps_score(&p, y, None).unwrap();
                prop_assert!((det - aps_by_sorting(p.as_slice(), y)).abs() < 1e-12);
                prop_assert!(det <= 1.0 + 1e-12);
                if p.as_slice()[y] > 0.0 {
                    prop_assert!(det > 0.0);
                }
                let own = p.as_slice()[y];
                let r = aps_score(&p, y, Some(&mut rng)).unwrap();
                prop_assert!(r >= det - own - 1e-12 && r <= det + 1e-12);
            }
        }
    }
}
