//! Validity and efficiency metrics for prediction regions, plus point
//! prediction quality scores.

use std::collections::BTreeMap;
use std::io::Write;

use crate::calibrate::{ConformalBand, PredictionSet};
use crate::error::{Error, Result};
use crate::quantile::empirical_quantile;

/// A prediction region that may or may not contain a truth.
pub trait Region {
    type Truth: Copy;

    fn covers(&self, truth: Self::Truth) -> bool;

    /// Width for intervals, cardinality for label sets.
    fn size(&self) -> f64;
}

impl Region for ConformalBand {
    type Truth = f64;

    fn covers(&self, truth: f64) -> bool {
        self.contains(truth)
    }

    fn size(&self) -> f64 {
        self.width()
    }
}

impl Region for PredictionSet {
    type Truth = usize;

    fn covers(&self, truth: usize) -> bool {
        self.contains(truth)
    }

    fn size(&self) -> f64 {
        self.len() as f64
    }
}

fn check_lengths(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    if expected == 0 {
        return Err(Error::EmptySample);
    }
    Ok(())
}

/// Fraction of truths inside their region.
pub fn coverage<R: Region>(regions: &[R], truths: &[R::Truth]) -> Result<f64> {
    check_lengths(regions.len(), truths.len())?;
    let hits = regions.iter().zip(truths).filter(|(r, &t)| r.covers(t)).count();
    Ok(hits as f64 / regions.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCoverage {
    pub coverage: f64,
    pub support: usize,
}

/// Coverage restricted to each class. Classes without instances are listed
/// in `empty` instead of `per_class`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConditionalCoverage {
    pub per_class: BTreeMap<usize, ClassCoverage>,
    pub empty: Vec<usize>,
}

impl ConditionalCoverage {
    /// Support-weighted mean of the class coverages.
    pub fn weighted_mean(&self) -> f64 {
        let total: usize = self.per_class.values().map(|c| c.support).sum();
        self.per_class.values().map(|c| c.coverage * c.support as f64).sum::<f64>() / total as f64
    }
}

pub fn conditional_coverage<R: Region>(
    regions: &[R],
    truths: &[R::Truth],
    classes: &[usize],
    n_classes: usize,
) -> Result<ConditionalCoverage> {
    check_lengths(regions.len(), truths.len())?;
    check_lengths(regions.len(), classes.len())?;
    let mut hits = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for ((r, &t), &c) in regions.iter().zip(truths).zip(classes) {
        if c >= n_classes {
            return Err(Error::LabelOutOfRange { label: c, n_classes });
        }
        support[c] += 1;
        if r.covers(t) {
            hits[c] += 1;
        }
    }
    let mut out = ConditionalCoverage::default();
    for c in 0..n_classes {
        if support[c] == 0 {
            out.empty.push(c);
        } else {
            out.per_class.insert(
                c,
                ClassCoverage {
                    coverage: hits[c] as f64 / support[c] as f64,
                    support: support[c],
                },
            );
        }
    }
    Ok(out)
}

/// Mean region size; infinite as soon as one band is unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageSize {
    pub value: f64,
    pub infinite: usize,
}

pub fn avg_width<R: Region>(regions: &[R]) -> Result<AverageSize> {
    if regions.is_empty() {
        return Err(Error::EmptySample);
    }
    let infinite = regions.iter().filter(|r| r.size().is_infinite()).count();
    let value = if infinite > 0 {
        f64::INFINITY
    } else {
        regions.iter().map(Region::size).sum::<f64>() / regions.len() as f64
    };
    Ok(AverageSize { value, infinite })
}

/// Average width over the gap between the `α/2` and `1−α/2` quantiles of
/// the truths.
pub fn relative_width(bands: &[ConformalBand], truths: &[f64], alpha: f64) -> Result<f64> {
    check_lengths(bands.len(), truths.len())?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    let gap = empirical_quantile(truths, 1.0 - alpha / 2.0)? - empirical_quantile(truths, alpha / 2.0)?;
    if gap <= 0.0 {
        return Err(Error::invalid("truth quantile gap is zero"));
    }
    Ok(avg_width(bands)?.value / gap)
}

pub fn r_squared(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(preds.len(), truths.len())?;
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let ss_tot: f64 = truths.iter().map(|t| (t - mean) * (t - mean)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("R² undefined for constant truths"));
    }
    let ss_res: f64 = preds.iter().zip(truths).map(|(p, t)| (t - p) * (t - p)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    /// Unweighted mean recall over classes present in the truths.
    pub balanced_accuracy: f64,
    /// Per-class F1 weighted by class support.
    pub weighted_f1: f64,
}

pub fn classification_metrics(preds: &[usize], truths: &[usize], n_classes: usize) -> Result<ClassificationMetrics> {
    check_lengths(preds.len(), truths.len())?;
    let mut tp = vec![0usize; n_classes];
    let mut fp = vec![0usize; n_classes];
    let mut support = vec![0usize; n_classes];
    for (&p, &t) in preds.iter().zip(truths) {
        for label in [p, t] {
            if label >= n_classes {
                return Err(Error::LabelOutOfRange { label, n_classes });
            }
        }
        support[t] += 1;
        if p == t {
            tp[p] += 1;
        } else {
            fp[p] += 1;
        }
    }
    let n = truths.len() as f64;
    let present: Vec<usize> = (0..n_classes).filter(|&c| support[c] > 0).collect();
    let recall = |c: usize| tp[c] as f64 / support[c] as f64;
    let f1 = |c: usize| {
        let fn_ = support[c] - tp[c];
        let denom = 2 * tp[c] + fp[c] + fn_;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp[c] as f64 / denom as f64
        }
    };
    Ok(ClassificationMetrics {
        accuracy: tp.iter().sum::<usize>() as f64 / n,
        balanced_accuracy: present.iter().map(|&c| recall(c)).sum::<f64>() / present.len() as f64,
        weighted_f1: present.iter().map(|&c| support[c] as f64 * f1(c)).sum::<f64>() / n,
    })
}

/// Flat `metric,group,value` report. The group is `all` for marginal
/// metrics and a 1-based class id for conditional ones.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<(String, String, f64)>,
}

impl EvalReport {
    pub fn push(&mut self, metric: &str, group: &str, value: f64) {
        self.rows.push((metric.to_string(), group.to_string(), value));
    }

    pub fn get(&self, metric: &str, group: &str) -> Option<f64> {
        self.rows.iter().find(|r| r.0 == metric && r.1 == group).map(|r| r.2)
    }

    /// Coverage, size and optional per-class coverage of any regions.
    pub fn regions<R: Region>(
        regions: &[R],
        truths: &[R::Truth],
        classes: Option<(&[usize], usize)>,
    ) -> Result<Self> {
        let mut report = Self::default();
        report.push("coverage", "all", coverage(regions, truths)?);
        let size = avg_width(regions)?;
        report.push("avg_size", "all", size.value);
        report.push("infinite_regions", "all", size.infinite as f64);
        if let Some((classes, k)) = classes {
            let cond = conditional_coverage(regions, truths, classes, k)?;
            for (c, cc) in &cond.per_class {
                let group = (c + 1).to_string();
                report.push("coverage", &group, cc.coverage);
                report.push("support", &group, cc.support as f64);
            }
            for c in &cond.empty {
                log::warn!("class {} has no evaluation rows", c + 1);
                report.push("empty_class", &(c + 1).to_string(), 1.0);
            }
        }
        Ok(report)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "group", "value"])?;
        for (m, g, v) in &self.rows {
            w.write_record([m.as_str(), g.as_str(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}
