//! Baseline predictors: k-nearest neighbours, ridge regression, bagged
//! k-NN with out-of-bag bookkeeping, and oracle models.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, Responses};
use crate::error::{Error, Result};
use crate::quantile::SortedSample;
use crate::rng::SeededRng;
use crate::scores::{ClassProbs, RegressionOutputs};

/// Anything that maps features to regression outputs.
pub trait Regressor: Send + Sync {
    fn outputs(&self, x: &[f64]) -> Result<RegressionOutputs>;

    fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.outputs(x)?.point)
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

/// k-nearest-neighbour model over Euclidean distance. Distance ties go to
/// the lower row index.
#[derive(Debug, Clone)]
pub struct KnnModel {
    data: Dataset,
    k: usize,
    /// Floor added to the neighbour standard deviation.
    pub sigma_floor: f64,
    /// Neighbour quantile levels reported as `lower`/`upper`.
    pub interval_levels: Option<(f64, f64)>,
}

impl KnnModel {
    pub fn fit(data: &Dataset, k: usize) -> Result<Self> {
        if k == 0 || k > data.len() {
            return Err(Error::invalid(format!(
                "k = {k} must lie in 1..={} (training size)",
                data.len()
            )));
        }
        Ok(Self {
            data: data.clone(),
            k,
            sigma_floor: 1e-6,
            interval_levels: None,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Indices of the `k` nearest training rows, nearest first.
    pub fn neighbors(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.data.dim() {
            return Err(Error::LengthMismatch {
                expected: self.data.dim(),
                actual: x.len(),
            });
        }
        let mut d: Vec<(f64, usize)> = self
            .data
            .rows()
            .enumerate()
            .map(|(i, r)| (squared_distance(r, x), i))
            .collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < d.len() {
            d.select_nth_unstable_by(self.k - 1, by_key);
            d.truncate(self.k);
        }
        d.sort_unstable_by(by_key);
        Ok(d.into_iter().map(|(_, i)| i).collect())
    }

    fn neighbor_targets(&self, x: &[f64]) -> Result<Vec<f64>> {
        let y = self.data.targets()?;
        Ok(self.neighbors(x)?.into_iter().map(|i| y[i]).collect())
    }

    /// Mean response of the neighbours.
    pub fn point(&self, x: &[f64]) -> Result<f64> {
        let ys = self.neighbor_targets(x)?;
        Ok(ys.iter().sum::<f64>() / ys.len() as f64)
    }

    /// Empirical quantile of the neighbours' responses.
    pub fn quantile(&self, x: &[f64], level: f64) -> Result<f64> {
        SortedSample::new(self.neighbor_targets(x)?)?.quantile(level)
    }

    /// Neighbour mean and population standard deviation plus the floor.
    pub fn meanvar(&self, x: &[f64]) -> Result<(f64, f64)> {
        if self.k < 2 {
            return Err(Error::invalid("a spread estimate needs k >= 2"));
        }
        let ys = self.neighbor_targets(x)?;
        let n = ys.len() as f64;
        let mu = ys.iter().sum::<f64>() / n;
        let var = ys.iter().map(|y| (y - mu) * (y - mu)).sum::<f64>() / n;
        Ok((mu, var.sqrt() + self.sigma_floor))
    }

    /// Laplace-smoothed neighbour class frequencies.
    pub fn class_probs(&self, x: &[f64], n_classes: usize, laplace: f64) -> Result<ClassProbs> {
        let labels = match self.data.responses() {
            Responses::Labels { labels, .. } => labels,
            Responses::Real(_) => return Err(Error::invalid("class probabilities need labelled data")),
        };
        if !(laplace >= 0.0) || !laplace.is_finite() {
            return Err(Error::invalid(format!("laplace must be finite and >= 0, got {laplace}")));
        }
        let mut counts = vec![0.0; n_classes];
        for i in self.neighbors(x)? {
            let c = labels[i];
            *counts.get_mut(c).ok_or(Error::LabelOutOfRange { label: c, n_classes })? += 1.0;
        }
        let denom = self.k as f64 + laplace * n_classes as f64;
        ClassProbs::new(counts.into_iter().map(|c| (c + laplace) / denom).collect())
    }
}

impl Regressor for KnnModel {
    fn outputs(&self, x: &[f64]) -> Result<RegressionOutputs> {
        let mut out = if self.k >= 2 {
            let (mu, sigma) = self.meanvar(x)?;
            RegressionOutputs::with_spread(mu, sigma)
        } else {
            RegressionOutputs::point(self.point(x)?)
        };
        if let Some((lo, hi)) = self.interval_levels {
            out.lower = Some(self.quantile(x, lo)?);
            out.upper = Some(self.quantile(x, hi)?);
        }
        Ok(out)
    }
}

/// Linear model fit by ridge-penalized least squares on centred data; the
/// intercept is not penalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeModel {
    pub intercept: f64,
    pub weights: Vec<f64>,
    pub penalty: f64,
}

impl RidgeModel {
    pub fn fit(data: &Dataset, penalty: f64) -> Result<Self> {
        let y = data.targets()?;
        let (n, d) = (data.len(), data.dim());
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if !(penalty >= 0.0) || !penalty.is_finite() {
            return Err(Error::invalid(format!("ridge penalty must be finite and >= 0, got {penalty}")));
        }
        let y_mean = y.iter().sum::<f64>() / n as f64;
        let x_mean: Vec<f64> = (0..d)
            .map(|j| data.rows().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let xc = DMatrix::from_fn(n, d, |i, j| data.row(i)[j] - x_mean[j]);
        let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
        let mut gram = xc.transpose() * &xc;
        for j in 0..d {
            gram[(j, j)] += penalty;
        }
        let rhs = xc.transpose() * yc;
        let scale = (0..d).map(|j| gram[(j, j)]).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
        let singular = || {
            Error::Singular(format!(
                "normal equations are singular at penalty {penalty}; use a penalty > 0"
            ))
        };
        let chol = gram.cholesky().ok_or_else(singular)?;
        let l = chol.l();
        if (0..d).any(|j| l[(j, j)] * l[(j, j)] <= 1e-12 * scale) {
            return Err(singular());
        }
        let w = chol.solve(&rhs);
        let weights: Vec<f64> = w.iter().copied().collect();
        let intercept = y_mean - weights.iter().zip(&x_mean).map(|(a, b)| a * b).sum::<f64>();
        Ok(Self {
            intercept,
            weights,
            penalty,
        })
    }

    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.intercept + self.weights.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }
}

impl Regressor for RidgeModel {
    fn outputs(&self, x: &[f64]) -> Result<RegressionOutputs> {
        if x.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                actual: x.len(),
            });
        }
        Ok(RegressionOutputs::point(self.predict_one(x)))
    }
}

type FeatureFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// True conditional mean and spread of a synthetic generator.
#[derive(Clone)]
pub struct OracleModel {
    mean: FeatureFn,
    spread: FeatureFn,
}

impl std::fmt::Debug for OracleModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("OracleModel")
    }
}

impl OracleModel {
    pub fn new(
        mean: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        spread: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            mean: Arc::new(mean),
            spread: Arc::new(spread),
        }
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        (self.mean)(x)
    }

    pub fn spread(&self, x: &[f64]) -> f64 {
        (self.spread)(x)
    }
}

impl Regressor for OracleModel {
    fn outputs(&self, x: &[f64]) -> Result<RegressionOutputs> {
        let s = self.spread(x);
        if !(s > 0.0) {
            return Err(Error::NonpositiveDifficulty(s));
        }
        Ok(RegressionOutputs::with_spread(self.mean(x), s))
    }
}

/// Bootstrap ensemble of k-NN regressors that remembers which rows each bag
/// left out.
#[derive(Debug, Clone)]
pub struct BaggedKnn {
    data: Dataset,
    bags: Vec<KnnModel>,
    in_bag: Vec<Vec<bool>>,
}

impl BaggedKnn {
    pub const DEFAULT_BAGS: usize = 50;

    pub fn fit(data: &Dataset, k: usize, n_bags: usize, rng: &mut SeededRng) -> Result<Self> {
        let n = data.len();
        if n == 0 || n_bags == 0 {
            return Err(Error::invalid("bagging needs data and at least one bag"));
        }
        let mut bags = Vec::with_capacity(n_bags);
        let mut in_bag = Vec::with_capacity(n_bags);
        for b in 0..n_bags {
            let mut bag_rng = rng.substream(&format!("bag:{b}"));
            let rows: Vec<usize> = (0..n).map(|_| bag_rng.index(n)).collect();
            let mut member = vec![false; n];
            rows.iter().for_each(|&i| member[i] = true);
            bags.push(KnnModel::fit(&data.subset(&rows), k.min(n))?);
            in_bag.push(member);
        }
        Ok(Self {
            data: data.clone(),
            bags,
            in_bag,
        })
    }

    pub fn n_bags(&self) -> usize {
        self.bags.len()
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for m in &self.bags {
            total += m.point(x)?;
        }
        Ok(total / self.bags.len() as f64)
    }

    /// Average over the bags that did not see row `i`; `None` if every bag did.
    pub fn oob_prediction(&self, i: usize) -> Result<Option<f64>> {
        let x = self.data.row(i);
        let mut total = 0.0;
        let mut count = 0usize;
        for (m, member) in self.bags.iter().zip(&self.in_bag) {
            if !member[i] {
                total += m.point(x)?;
                count += 1;
            }
        }
        Ok((count > 0).then(|| total / count as f64))
    }

    pub fn training_data(&self) -> &Dataset {
        &self.data
    }
}

impl Regressor for BaggedKnn {
    fn outputs(&self, x: &[f64]) -> Result<RegressionOutputs> {
        Ok(RegressionOutputs::point(self.predict_one(x)?))
    }
}
