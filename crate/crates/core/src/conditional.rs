//! Taxonomies and Mondrian (class-conditional) calibration.

use log::warn;

use crate::calibrate::{band_for, Calibration, ConformalBand, PredictionSet};
use crate::error::{Error, Result};
use crate::quantile::SortedSample;
use crate::scores::{RegressionOutputs, RegressionScore};

/// Bin edges `e_1 ≤ .. ≤ e_{k-1}`; a value goes to the first bin whose edge
/// it does not exceed, otherwise to the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinRule {
    edges: Vec<f64>,
}

impl BinRule {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.iter().any(|e| !e.is_finite()) {
            return Err(Error::invalid("bin edges must be finite"));
        }
        if edges.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::invalid("bin edges must be ascending"));
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() + 1
    }

    /// 0-based bin index.
    pub fn bin(&self, v: f64) -> usize {
        self.edges.partition_point(|&e| e < v)
    }
}

/// Edges at the `j/k` empirical quantiles, `j = 1..k-1`.
pub fn equal_frequency_bins(values: &[f64], k: usize) -> Result<BinRule> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if k == 0 {
        return Err(Error::invalid("at least one bin is required"));
    }
    if k > values.len() {
        return Err(Error::invalid(format!(
            "more bins than points ({k} bins, {} points)",
            values.len()
        )));
    }
    let sorted = SortedSample::new(values.to_vec())?;
    let edges = (1..k)
        .map(|j| sorted.quantile(j as f64 / k as f64))
        .collect::<Result<Vec<_>>>()?;
    BinRule::new(edges)
}

/// Assigns each instance to one of `k` classes.
#[derive(Debug, Clone, PartialEq)]
pub enum Taxonomy {
    /// The (0-based) response label itself.
    ByLabel { n_classes: usize },
    /// A feature column holding 1-based class indices.
    ByFeatureColumn { column: usize, n_classes: usize },
    /// Equal-frequency bins of a difficulty estimate.
    ByBinnedDifficulty(BinRule),
}

impl Taxonomy {
    pub fn n_classes(&self) -> usize {
        match self {
            Taxonomy::ByLabel { n_classes } | Taxonomy::ByFeatureColumn { n_classes, .. } => *n_classes,
            Taxonomy::ByBinnedDifficulty(rule) => rule.n_bins(),
        }
    }

    /// Whether the class is known from the features alone.
    pub fn is_feature_dependent(&self) -> bool {
        !matches!(self, Taxonomy::ByLabel { .. })
    }

    pub fn assign(&self, x: &[f64], label: Option<usize>, difficulty: Option<f64>) -> Result<usize> {
        match self {
            Taxonomy::ByLabel { n_classes } => {
                let label = label.ok_or_else(|| Error::invalid("label taxonomy needs a label"))?;
                if label >= *n_classes {
                    return Err(Error::LabelOutOfRange {
                        label,
                        n_classes: *n_classes,
                    });
                }
                Ok(label)
            }
            Taxonomy::ByFeatureColumn { column, n_classes } => {
                let v = *x.get(*column).ok_or_else(|| {
                    Error::invalid(format!("feature column {column} missing (dimension {})", x.len()))
                })?;
                if v.fract() != 0.0 || v < 1.0 || v > *n_classes as f64 {
                    return Err(Error::invalid(format!(
                        "feature column {column} value {v} is not a class index in 1..={n_classes}"
                    )));
                }
                Ok(v as usize - 1)
            }
            Taxonomy::ByBinnedDifficulty(rule) => {
                let d = difficulty.ok_or_else(|| Error::invalid("difficulty taxonomy needs a difficulty"))?;
                Ok(rule.bin(d))
            }
        }
    }
}

/// One calibration per taxonomy class.
#[derive(Debug, Clone, PartialEq)]
pub struct MondrianCalibration {
    strata: Vec<Calibration>,
    alpha: f64,
}

impl MondrianCalibration {
    pub fn n_classes(&self) -> usize {
        self.strata.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn stratum(&self, class: usize) -> Result<&Calibration> {
        self.strata.get(class).ok_or(Error::LabelOutOfRange {
            label: class,
            n_classes: self.strata.len(),
        })
    }

    /// Classes without calibration data.
    pub fn empty_classes(&self) -> Vec<usize> {
        (0..self.strata.len()).filter(|&c| self.strata[c].is_empty()).collect()
    }

    /// Critical score of `class`; `+∞` when the class has no calibration data.
    pub fn critical_score(&self, class: usize) -> Result<f64> {
        let s = self.stratum(class)?;
        if s.is_empty() {
            return Ok(f64::INFINITY);
        }
        s.critical_score()
    }

    pub fn critical_scores(&self) -> Result<Vec<f64>> {
        (0..self.strata.len()).map(|c| self.critical_score(c)).collect()
    }
}

pub fn mondrian_fit(scores: &[f64], classes: &[usize], n_classes: usize, alpha: f64) -> Result<MondrianCalibration> {
    mondrian_fit_with(scores, classes, n_classes, alpha, true)
}

pub fn mondrian_fit_with(
    scores: &[f64],
    classes: &[usize],
    n_classes: usize,
    alpha: f64,
    strict: bool,
) -> Result<MondrianCalibration> {
    if scores.len() != classes.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            actual: classes.len(),
        });
    }
    let mut buckets = vec![Vec::new(); n_classes];
    for (&s, &c) in scores.iter().zip(classes) {
        buckets
            .get_mut(c)
            .ok_or(Error::LabelOutOfRange { label: c, n_classes })?
            .push(s);
    }
    let strata = buckets
        .into_iter()
        .enumerate()
        .map(|(c, b)| {
            if b.is_empty() {
                warn!("class {} has no calibration data; its critical score is +inf", c + 1);
            }
            Calibration::new(b, alpha).map(|cal| cal.with_strict(strict))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MondrianCalibration { strata, alpha })
}

/// Band for an instance whose class is known from its features.
pub fn mondrian_predict_band(
    out: &RegressionOutputs,
    class: usize,
    mcal: &MondrianCalibration,
    kind: RegressionScore,
) -> Result<ConformalBand> {
    let a_star = mcal.critical_score(class)?;
    Ok(band_for(kind, out, a_star)?.at_level(mcal.alpha))
}

/// Label set when the class may depend on the candidate label: label `y` is
/// kept iff its score is within the critical score of `class_of_label[y]`.
pub fn mondrian_predict_set(
    label_scores: &[f64],
    class_of_label: &[usize],
    mcal: &MondrianCalibration,
) -> Result<PredictionSet> {
    if label_scores.len() != class_of_label.len() {
        return Err(Error::LengthMismatch {
            expected: label_scores.len(),
            actual: class_of_label.len(),
        });
    }
    let mut labels = Vec::new();
    for (y, (&s, &c)) in label_scores.iter().zip(class_of_label).enumerate() {
        if s <= mcal.critical_score(c)? {
            labels.push(y);
        }
    }
    Ok(PredictionSet {
        labels,
        n_classes: label_scores.len(),
    })
}
