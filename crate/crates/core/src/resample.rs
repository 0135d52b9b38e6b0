//! Transductive and cross-conformal prediction, the jackknife family and
//! out-of-bag calibration.

use log::warn;
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::calibrate::{Calibration, ConformalBand, PredictionSet};
use crate::data::{Dataset, Responses};
use crate::error::{Error, Result};
use crate::models::{BaggedKnn, KnnModel, Regressor, RidgeModel};
use crate::quantile::{lower_quantile, SortedSample};
use crate::rng::SeededRng;
use crate::scores::{softmax_score, zero_one_score};

/// Assignment of rows to `f` nonempty folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    fold_of: Vec<usize>,
    n_folds: usize,
}

impl FoldPlan {
    pub fn new(fold_of: Vec<usize>, n_folds: usize) -> Result<Self> {
        let mut sizes = vec![0usize; n_folds];
        for &s in &fold_of {
            *sizes
                .get_mut(s)
                .ok_or_else(|| Error::invalid(format!("fold {s} outside 0..{n_folds}")))? += 1;
        }
        if let Some(empty) = sizes.iter().position(|&c| c == 0) {
            return Err(Error::invalid(format!("fold {empty} is empty")));
        }
        Ok(Self { fold_of, n_folds })
    }

    /// Balanced random folds: a seeded shuffle dealt round-robin.
    pub fn random(n: usize, n_folds: usize, rng: &mut SeededRng) -> Result<Self> {
        if n_folds == 0 || n_folds > n {
            return Err(Error::invalid(format!("{n_folds} folds for {n} rows")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut fold_of = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            fold_of[i] = pos % n_folds;
        }
        Self::new(fold_of, n_folds)
    }

    pub fn leave_one_out(n: usize) -> Result<Self> {
        Self::new((0..n).collect(), n)
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn len(&self) -> usize {
        self.fold_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fold_of.is_empty()
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.fold_of[row]
    }

    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }
}

/// Trains a regressor on a training multiset. Implementations must not
/// depend on the order of the training rows.
pub trait Refitter: Send + Sync {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn Regressor>>;
}

impl<F> Refitter for F
where
    F: Fn(&Dataset) -> Result<Box<dyn Regressor>> + Send + Sync,
{
    fn fit(&self, train: &Dataset) -> Result<Box<dyn Regressor>> {
        self(train)
    }
}

/// k-NN refitter; `k` is capped at the training size.
#[derive(Debug, Clone, Copy)]
pub struct KnnRefitter {
    pub k: usize,
}

impl Refitter for KnnRefitter {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(KnnModel::fit(train, self.k.min(train.len()))?))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RidgeRefitter {
    pub penalty: f64,
}

impl Refitter for RidgeRefitter {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn Regressor>> {
        Ok(Box::new(RidgeModel::fit(train, self.penalty)?))
    }
}

/// A fitted classification nonconformity measure.
pub trait LabelScorer: Send + Sync {
    fn score(&self, x: &[f64], y: usize) -> Result<f64>;
}

/// Trains a [`LabelScorer`]; must be permutation invariant in its input.
pub trait ClassRefitter: Send + Sync {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn LabelScorer>>;
}

/// Predicts the most frequent training label (lowest index on ties) and
/// scores with the zero-one loss.
#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityRefitter;

struct MajorityScorer(usize);

impl LabelScorer for MajorityScorer {
    fn score(&self, _x: &[f64], y: usize) -> Result<f64> {
        Ok(zero_one_score(self.0, y))
    }
}

impl ClassRefitter for MajorityRefitter {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn LabelScorer>> {
        let (labels, n_classes) = train.labels()?;
        let mut counts = vec![0usize; n_classes.max(1)];
        labels.iter().for_each(|&l| counts[l] += 1);
        let best = (0..counts.len()).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
        Ok(Box::new(MajorityScorer(best)))
    }
}

/// k-NN class probabilities scored with `1 - p_y`.
#[derive(Debug, Clone, Copy)]
pub struct KnnSoftmaxRefitter {
    pub k: usize,
    pub laplace: f64,
    pub n_classes: usize,
}

struct KnnSoftmaxScorer {
    model: KnnModel,
    laplace: f64,
    n_classes: usize,
}

impl LabelScorer for KnnSoftmaxScorer {
    fn score(&self, x: &[f64], y: usize) -> Result<f64> {
        softmax_score(&self.model.class_probs(x, self.n_classes, self.laplace)?, y)
    }
}

impl ClassRefitter for KnnSoftmaxRefitter {
    fn fit(&self, train: &Dataset) -> Result<Box<dyn LabelScorer>> {
        Ok(Box::new(KnnSoftmaxScorer {
            model: KnnModel::fit(train, self.k.min(train.len()))?,
            laplace: self.laplace,
            n_classes: self.n_classes,
        }))
    }
}

fn append_row(data: &Dataset, x: &[f64], y: usize) -> Result<Dataset> {
    let (labels, n_classes) = data.labels()?;
    if x.len() != data.dim() {
        return Err(Error::LengthMismatch {
            expected: data.dim(),
            actual: x.len(),
        });
    }
    let mut features = data.features().to_vec();
    features.extend_from_slice(x);
    let mut labels = labels.to_vec();
    labels.push(y);
    Dataset::new(features, data.dim(), Responses::Labels { labels, n_classes })
}

/// Transductive conformal p-values for every candidate label of `x`.
///
/// Each row of the augmented set is scored by a model refit without that
/// row. The smoothing draw is shared by all candidate labels.
pub fn tcp_p_values(
    data: &Dataset,
    x: &[f64],
    refit: &dyn ClassRefitter,
    smoothed: bool,
    rng: &mut SeededRng,
) -> Result<Vec<f64>> {
    let n_classes = match data.responses() {
        Responses::Labels { n_classes, .. } => *n_classes,
        Responses::Real(_) => {
            return Err(Error::invalid(
                "transductive prediction needs a finite label space (classification data)",
            ))
        }
    };
    let tau = rng.open_uniform();
    let n = data.len();
    (0..n_classes)
        .map(|y| {
            let augmented = append_row(data, x, y)?;
            let (labels, _) = augmented.labels()?;
            let scores = (0..=n)
                .into_par_iter()
                .map(|j| {
                    let rest: Vec<usize> = (0..=n).filter(|&i| i != j).collect();
                    refit.fit(&augmented.subset(&rest))?.score(augmented.row(j), labels[j])
                })
                .collect::<Result<Vec<f64>>>()?;
            let own = scores[n];
            let total = (n + 1) as f64;
            Ok(if smoothed {
                let gt = scores.iter().filter(|&&s| s > own).count() as f64;
                let eq = scores.iter().filter(|&&s| s == own).count() as f64;
                (gt + tau * eq) / total
            } else {
                scores.iter().filter(|&&s| s >= own).count() as f64 / total
            })
        })
        .collect()
}

/// Labels whose transductive p-value is at least `alpha`.
pub fn tcp_predict_set(
    data: &Dataset,
    x: &[f64],
    refit: &dyn ClassRefitter,
    alpha: f64,
    smoothed: bool,
    rng: &mut SeededRng,
) -> Result<PredictionSet> {
    let p = tcp_p_values(data, x, refit, smoothed, rng)?;
    Ok(PredictionSet {
        labels: (0..p.len()).filter(|&y| p[y] >= alpha).collect(),
        n_classes: p.len(),
    })
}

fn check_folds(fold_scores: &[Vec<f64>], test_scores: &[f64]) -> Result<()> {
    if fold_scores.len() != test_scores.len() {
        return Err(Error::LengthMismatch {
            expected: fold_scores.len(),
            actual: test_scores.len(),
        });
    }
    if fold_scores.is_empty() || fold_scores.iter().any(Vec::is_empty) {
        return Err(Error::EmptySample);
    }
    Ok(())
}

/// Cross-conformal p-value. `fold_scores[s]` are the scores of fold `s`
/// under the model trained without it; `test_scores[s]` is the candidate's
/// score under that same model.
pub fn ccp_p_value(fold_scores: &[Vec<f64>], test_scores: &[f64]) -> Result<f64> {
    check_folds(fold_scores, test_scores)?;
    let total: usize = fold_scores.iter().map(Vec::len).sum();
    let ge: usize = fold_scores
        .iter()
        .zip(test_scores)
        .map(|(f, &t)| f.iter().filter(|&&s| s >= t).count())
        .sum();
    Ok((ge + 1) as f64 / (total + 1) as f64)
}

/// Sum over folds of the per-fold strict-count p-values
/// `(#{fold scores > test} + 1) / (|fold| + 1)`. Can exceed 1.
pub fn ccp_avg_p_value(fold_scores: &[Vec<f64>], test_scores: &[f64]) -> Result<f64> {
    check_folds(fold_scores, test_scores)?;
    Ok(fold_scores
        .iter()
        .zip(test_scores)
        .map(|(f, &t)| (f.iter().filter(|&&s| s > t).count() + 1) as f64 / (f.len() + 1) as f64)
        .sum())
}

/// Per-fold strict-count p-values averaged with weights `|fold| / n`.
pub fn ccp_weighted_avg_p_value(fold_scores: &[Vec<f64>], test_scores: &[f64]) -> Result<f64> {
    check_folds(fold_scores, test_scores)?;
    let total: usize = fold_scores.iter().map(Vec::len).sum();
    Ok(fold_scores
        .iter()
        .zip(test_scores)
        .map(|(f, &t)| {
            let p = (f.iter().filter(|&&s| s > t).count() + 1) as f64 / (f.len() + 1) as f64;
            p * f.len() as f64 / total as f64
        })
        .sum())
}

/// Out-of-fold models and absolute residuals for a regression data set.
pub struct CrossFit {
    folds: FoldPlan,
    models: Vec<Box<dyn Regressor>>,
    /// `|y_i - μ_{-fold(i)}(x_i)|` for every row.
    residuals: Vec<f64>,
}

impl CrossFit {
    pub fn new(data: &Dataset, folds: &FoldPlan, refit: &dyn Refitter) -> Result<Self> {
        let y = data.targets()?;
        if folds.len() != data.len() {
            return Err(Error::LengthMismatch {
                expected: data.len(),
                actual: folds.len(),
            });
        }
        if folds.n_folds() < 2 {
            return Err(Error::invalid("cross-fitting needs at least two folds"));
        }
        let models = (0..folds.n_folds())
            .into_par_iter()
            .map(|s| refit.fit(&data.subset(&folds.complement(s))))
            .collect::<Result<Vec<_>>>()?;
        let residuals = (0..data.len())
            .map(|i| Ok((y[i] - models[folds.fold_of(i)].predict(data.row(i))?).abs()))
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            folds: folds.clone(),
            models,
            residuals,
        })
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Predictions of each fold model at `x`.
    pub fn fold_predictions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| m.predict(x)).collect()
    }

    /// `[q⁻_{(1+1/n)α}(J⁻), q_{(1+1/n)(1-α)}(J⁺)]` with
    /// `J± = {μ_{-fold(i)}(x) ± R_i}`; levels are clamped to `(0, 1]`.
    pub fn plus_band(&self, x: &[f64], alpha: f64) -> Result<ConformalBand> {
        let preds = self.fold_predictions(x)?;
        let n = self.residuals.len();
        let inflate = 1.0 + 1.0 / n as f64;
        let (mut minus, mut plus) = (Vec::with_capacity(n), Vec::with_capacity(n));
        for (i, r) in self.residuals.iter().enumerate() {
            let mu = preds[self.folds.fold_of(i)];
            minus.push(mu - r);
            plus.push(mu + r);
        }
        let lo = lower_quantile(&minus, (inflate * alpha).min(1.0))?;
        let hi_level = (inflate * (1.0 - alpha)).clamp(f64::MIN_POSITIVE, 1.0);
        let hi = SortedSample::new(plus)?.quantile(hi_level)?;
        Ok(ConformalBand::new(lo, hi).at_level(alpha))
    }

    /// Cross-conformal p-value of the candidate response `y` at `x` under
    /// the absolute-residual measure.
    pub fn ccp_p_value(&self, x: &[f64], y: f64) -> Result<f64> {
        let preds = self.fold_predictions(x)?;
        let ge = self
            .residuals
            .iter()
            .enumerate()
            .filter(|&(i, &r)| r >= (y - preds[self.folds.fold_of(i)]).abs())
            .count();
        Ok((ge + 1) as f64 / (self.residuals.len() + 1) as f64)
    }

    /// Grid values accepted by the cross-conformal predictor (`p ≥ α`).
    pub fn ccp_grid_set(&self, x: &[f64], grid: &[f64], alpha: f64) -> Result<Vec<f64>> {
        let mut kept = Vec::new();
        for &y in grid {
            if self.ccp_p_value(x, y)? >= alpha {
                kept.push(y);
            }
        }
        Ok(kept)
    }
}

/// `ŷ(x) ± q_{(1+1/n)(1-α)}` of the leave-one-out absolute residuals.
pub fn jackknife_band(data: &Dataset, refit: &dyn Refitter, x: &[f64], alpha: f64) -> Result<ConformalBand> {
    if data.len() < 2 {
        return Err(Error::invalid("the jackknife needs at least two rows"));
    }
    let cross = CrossFit::new(data, &FoldPlan::leave_one_out(data.len())?, refit)?;
    let a_star = Calibration::new(cross.residuals.clone(), alpha)?.critical_score()?;
    let point = refit.fit(data)?.predict(x)?;
    if a_star == f64::INFINITY {
        return Ok(ConformalBand::full().at_level(alpha));
    }
    Ok(ConformalBand::new(point - a_star, point + a_star).at_level(alpha))
}

pub fn jackknife_plus_band(data: &Dataset, refit: &dyn Refitter, x: &[f64], alpha: f64) -> Result<ConformalBand> {
    if data.len() < 2 {
        return Err(Error::invalid("the jackknife+ needs at least two rows"));
    }
    CrossFit::new(data, &FoldPlan::leave_one_out(data.len())?, refit)?.plus_band(x, alpha)
}

pub fn cv_plus_band(
    data: &Dataset,
    folds: &FoldPlan,
    refit: &dyn Refitter,
    x: &[f64],
    alpha: f64,
) -> Result<ConformalBand> {
    if folds.n_folds() < 2 {
        return Err(Error::invalid("CV+ needs at least two folds (a single fold leaves no out-of-fold data)"));
    }
    CrossFit::new(data, folds, refit)?.plus_band(x, alpha)
}

/// Signed out-of-bag errors `y_i - ŷ_(i)(x_i)`; rows seen by every bag are
/// skipped.
pub fn oob_errors(model: &BaggedKnn) -> Result<Vec<f64>> {
    let data = model.training_data();
    let y = data.targets()?;
    let mut errors = Vec::with_capacity(y.len());
    let mut skipped = 0usize;
    for (i, &yi) in y.iter().enumerate() {
        match model.oob_prediction(i)? {
            Some(p) => errors.push(yi - p),
            None => skipped += 1,
        }
    }
    if skipped > 0 {
        warn!("{skipped} training rows appear in every bag and were left out of the error sample");
    }
    Ok(errors)
}

/// `[ŷ(x) + q_{α/2}(E), ŷ(x) + q_{1-α/2}(E)]` from out-of-bag errors `E`.
pub fn oob_band_from_errors(point: f64, errors: &[f64], alpha: f64) -> Result<ConformalBand> {
    let e = SortedSample::new(errors.to_vec())?;
    let lo_level = (alpha / 2.0).max(f64::MIN_POSITIVE);
    let lo = e.quantile(lo_level)?;
    let hi = e.quantile(1.0 - alpha / 2.0)?;
    Ok(ConformalBand::new(point + lo, point + hi).at_level(alpha))
}

pub fn oob_conformal_band(model: &BaggedKnn, x: &[f64], alpha: f64) -> Result<ConformalBand> {
    let errors = oob_errors(model)?;
    oob_band_from_errors(model.predict_one(x)?, &errors, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scores::RegressionOutputs;

    /// Regressor returning fixed predictions per row-independent query.
    struct Fixed(f64);

    impl Regressor for Fixed {
        fn outputs(&self, _x: &[f64]) -> Result<RegressionOutputs> {
            Ok(RegressionOutputs::point(self.0))
        }
    }

    fn line(ys: &[f64]) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..ys.len()).map(|i| vec![i as f64]).collect();
        Dataset::regression(&rows, ys.to_vec()).unwrap()
    }

    #[test]
    fn fold_plans() {
        let p = FoldPlan::random(10, 3, &mut SeededRng::new(4)).unwrap();
        let sizes: Vec<usize> = (0..3).map(|s| p.members(s).len()).collect();
        assert_eq!(sizes.iter().sum::<usize>(), 10);
        assert!(sizes.iter().all(|&c| c == 3 || c == 4));
        assert!(FoldPlan::new(vec![0, 0, 2], 3).is_err());
        assert!(FoldPlan::random(2, 3, &mut SeededRng::new(0)).is_err());
        assert_eq!(FoldPlan::leave_one_out(3).unwrap().members(1), vec![1]);
    }

    #[test]
    fn ccp_examples() {
        let folds = vec![vec![1.0, 3.0], vec![2.0, 4.0]];
        assert!((ccp_p_value(&folds, &[2.0, 3.0]).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(ccp_p_value(&folds, &[-1.0, -1.0]).unwrap(), 1.0);
        let single = vec![vec![1.0, 2.0, 3.0, 4.0]];
        assert_eq!(
            ccp_p_value(&single, &[2.5]).unwrap(),
            crate::calibrate::p_value(&single[0], 2.5).unwrap()
        );
        assert!(ccp_p_value(&folds, &[1.0]).is_err());
        assert!(ccp_p_value(&[vec![]], &[1.0]).is_err());
    }

    #[test]
    fn ccp_average_examples() {
        // one fold: the strict-count p-value (#{> t} + 1)/(n + 1)
        let single = vec![vec![1.0, 2.0, 2.0, 4.0]];
        assert!((ccp_avg_p_value(&single, &[2.0]).unwrap() - 0.4).abs() < 1e-15);
        // two folds: 2/3 + 2/3
        let folds = vec![vec![1.0, 3.0], vec![2.0, 4.0]];
        assert!((ccp_avg_p_value(&folds, &[2.0, 3.0]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        // identical folds: the weighted average equals either fold's value
        let twin = vec![vec![1.0, 3.0], vec![1.0, 3.0]];
        let one = ccp_avg_p_value(&twin[..1], &[2.0]).unwrap();
        assert!((ccp_weighted_avg_p_value(&twin, &[2.0, 2.0]).unwrap() - one).abs() < 1e-15);
        assert!((ccp_avg_p_value(&twin, &[2.0, 2.0]).unwrap() - 2.0 * one).abs() < 1e-15);
    }

    /// Literal execution of the transductive loop with a majority-class
    /// measure (zero-one loss against the leave-one-out majority).
    #[test]
    fn tcp_majority_toy() {
        let data = Dataset::classification(&[vec![0.0], vec![1.0], vec![2.0]], vec![0, 0, 1], 2).unwrap();
        let p = tcp_p_values(&data, &[3.0], &MajorityRefitter, false, &mut SeededRng::new(0)).unwrap();
        // y = 0: augmented labels (0,0,1,0), scores (0,0,1,0), own score 0 → 4/4
        // y = 1: augmented labels (0,0,1,1), every leave-one-out majority
        // disagrees with the held-out label → scores (1,1,1,1) → 4/4
        assert_eq!(p, vec![1.0, 1.0]);

        let lopsided = Dataset::classification(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 0, 0, 1], 2).unwrap();
        let p = tcp_p_values(&lopsided, &[9.0], &MajorityRefitter, false, &mut SeededRng::new(0)).unwrap();
        // y = 0: scores (0,0,0,1,0) → 5/5
        // y = 1: dropping a 0 leaves a 2-2 tie resolved to 0 → scores (0,0,0,1,1) → 2/5
        assert_eq!(p[0], 1.0);
        assert!((p[1] - 0.4).abs() < 1e-15);
        let set = tcp_predict_set(&lopsided, &[9.0], &MajorityRefitter, 0.5, false, &mut SeededRng::new(0)).unwrap();
        assert_eq!(set.labels, vec![0]);
        let all = tcp_predict_set(&lopsided, &[9.0], &MajorityRefitter, 0.0, false, &mut SeededRng::new(0)).unwrap();
        assert_eq!(all.labels, vec![0, 1]);
        assert!(tcp_p_values(&line(&[1.0, 2.0]), &[0.0], &MajorityRefitter, false, &mut SeededRng::new(0)).is_err());
    }

    #[test]
    fn tcp_smoothed_at_alpha_one_is_empty() {
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![f64::from(i)]).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let data = Dataset::classification(&rows, labels, 3).unwrap();
        let refit = KnnSoftmaxRefitter { k: 3, laplace: 0.5, n_classes: 3 };
        let set = tcp_predict_set(&data, &[4.5], &refit, 1.0, true, &mut SeededRng::new(3)).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn jackknife_examples() {
        let zero = |_: &Dataset| -> Result<Box<dyn Regressor>> { Ok(Box::new(Fixed(5.0))) };
        let b = jackknife_band(&line(&[5.0, 5.0, 5.0]), &zero, &[0.0], 0.5).unwrap();
        assert_eq!((b.lo, b.hi), (5.0, 5.0));
        let constant = jackknife_band(&line(&[7.0, 3.0, 7.0, 3.0, 7.0, 3.0, 7.0, 3.0, 7.0, 3.0, 7.0, 3.0, 7.0, 3.0, 7.0, 3.0, 7.0, 3.0, 7.0, 3.0]), &zero, &[0.0], 0.1).unwrap();
        assert_eq!((constant.lo, constant.hi), (3.0, 7.0));
        assert!(jackknife_band(&line(&[1.0]), &zero, &[0.0], 0.1).is_err());
    }

    /// 1-NN on x = (0, 1, 2), y = (0, 2, 3): leave-one-out predictions are
    /// (2, 0, 2) (row 1 ties between rows 0 and 2 and takes row 0), giving
    /// residuals (2, 2, 1).
    #[test]
    fn jackknife_one_nn_toy() {
        let data = line(&[0.0, 2.0, 3.0]);
        let refit = KnnRefitter { k: 1 };
        let cross = CrossFit::new(&data, &FoldPlan::leave_one_out(3).unwrap(), &refit).unwrap();
        assert_eq!(cross.residuals(), &[2.0, 2.0, 1.0]);
        // α = 0.5: level (4/3)(1/2) = 2/3 → rank 2 of (1, 2, 2) → 2; full 1-NN at 0.9 → row 1 → 2
        let b = jackknife_band(&data, &refit, &[0.9], 0.5).unwrap();
        assert_eq!((b.lo, b.hi), (0.0, 4.0));
    }

    #[test]
    fn jackknife_plus_example() {
        // LOO residuals (1,2,3) and LOO predictions at x (10,11,12)
        let data = line(&[0.0, 0.0, 0.0]);
        let models: Vec<f64> = vec![10.0, 11.0, 12.0];
        let refit = move |train: &Dataset| -> Result<Box<dyn Regressor>> {
            // the removed row is the one missing from {0, 1, 2}
            let xs: Vec<f64> = train.rows().map(|r| r[0]).collect();
            let removed = (0..3).find(|i| !xs.contains(&(*i as f64))).unwrap_or(0);
            let pred = models[removed];
            let resid = [1.0, 2.0, 3.0][removed];
            Ok(Box::new(TwoPoint { at_x: pred, at_row: resid, row: removed as f64 }))
        };
        struct TwoPoint {
            at_x: f64,
            at_row: f64,
            row: f64,
        }
        impl Regressor for TwoPoint {
            fn outputs(&self, x: &[f64]) -> Result<RegressionOutputs> {
                Ok(RegressionOutputs::point(if x[0] == self.row { self.at_row } else { self.at_x }))
            }
        }
        let b = jackknife_plus_band(&data, &refit, &[100.0], 0.25).unwrap();
        assert_eq!((b.lo, b.hi), (9.0, 15.0));
    }

    #[test]
    fn jackknife_plus_collapses_to_jackknife_for_fixed_models() {
        let data = line(&[0.0, 1.0, 5.0, 2.0, 3.0, 9.0, 4.0, 4.0, 1.0, 0.5]);
        let fixed = |_: &Dataset| -> Result<Box<dyn Regressor>> { Ok(Box::new(Fixed(2.0))) };
        let plain = jackknife_band(&data, &fixed, &[0.0], 0.2).unwrap();
        let plus = jackknife_plus_band(&data, &fixed, &[0.0], 0.2).unwrap();
        assert_eq!(plus, plain);
        let zero = |_: &Dataset| -> Result<Box<dyn Regressor>> { Ok(Box::new(Fixed(0.0))) };
        let flat = jackknife_plus_band(&line(&[0.0; 5]), &zero, &[0.0], 0.0).unwrap();
        assert_eq!((flat.lo, flat.hi), (0.0, 0.0));
    }

    #[test]
    fn cv_plus_edge_cases() {
        let data = line(&[0.0, 2.0, 3.0, 1.0, 5.0, 4.0]);
        let refit = KnnRefitter { k: 1 };
        let single = FoldPlan::new(vec![0; 6], 1).unwrap();
        assert!(cv_plus_band(&data, &single, &refit, &[1.0], 0.2).is_err());
        let loo = FoldPlan::leave_one_out(6).unwrap();
        assert_eq!(
            cv_plus_band(&data, &loo, &refit, &[2.2], 0.2).unwrap(),
            jackknife_plus_band(&data, &refit, &[2.2], 0.2).unwrap()
        );
    }

    /// Two folds on x = (0,1,2,3), y = (0,1,2,3), 1-NN: fold {0,2} is
    /// predicted from {1,3} and vice versa.
    #[test]
    fn cv_plus_two_fold_toy() {
        let data = line(&[0.0, 1.0, 2.0, 3.0]);
        let folds = FoldPlan::new(vec![0, 1, 0, 1], 2).unwrap();
        let cross = CrossFit::new(&data, &folds, &KnnRefitter { k: 1 }).unwrap();
        // row0 ← row1 (1), row2 ← row1 (tie 1/3 → row1) → 1; row1 ← row0 → 0 (tie 0/2 → 0), row3 ← row2 → 2
        assert_eq!(cross.residuals(), &[1.0, 1.0, 1.0, 1.0]);
        // at x = 1.2: fold-0 model (rows 1,3) → 1; fold-1 model (rows 0,2) → 2
        assert_eq!(cross.fold_predictions(&[1.2]).unwrap(), vec![1.0, 2.0]);
        // J⁻ = {0,1,0,1}, J⁺ = {2,3,2,3}; α = 0.2: lower level 0.25 → rank 1 → 0;
        // upper level 1 → rank 4 → 3
        let b = cross.plus_band(&[1.2], 0.2).unwrap();
        assert_eq!((b.lo, b.hi), (0.0, 3.0));
    }

    #[test]
    fn oob_band_examples() {
        let b = oob_band_from_errors(10.0, &[-1.0, -1.0, -1.0, 9.0], 0.5).unwrap();
        assert_eq!((b.lo, b.hi), (9.0, 9.0));
        let b = oob_band_from_errors(10.0, &[-1.0, -1.0, -1.0, 9.0], 0.4).unwrap();
        assert_eq!((b.lo, b.hi), (9.0, 19.0));
        let sym = oob_band_from_errors(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 0.5).unwrap();
        assert_eq!((sym.lo, sym.hi), (-1.0, 1.0));
        // with n·α/2 integral the order-statistic quantiles are not mirror images
        let even = oob_band_from_errors(0.0, &[-2.0, -1.0, 1.0, 2.0], 0.5).unwrap();
        assert_eq!((even.lo, even.hi), (-2.0, 1.0));
        let zero = oob_band_from_errors(3.0, &[0.0; 5], 0.1).unwrap();
        assert_eq!((zero.lo, zero.hi), (3.0, 3.0));
        let d = line(&(0..20).map(f64::from).collect::<Vec<_>>());
        let bag = BaggedKnn::fit(&d, 2, 20, &mut SeededRng::new(1)).unwrap();
        let band = oob_conformal_band(&bag, &[4.0], 0.2).unwrap();
        assert!(band.lo <= band.hi);
    }
}
