//! Synthetic regression data with known conditional mean and spread.

use std::f64::consts::SQRT_2;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::OracleModel;
use crate::rng::SeededRng;

/// Standardized noise law (mean 0, variance 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    Normal,
    Laplace,
    Uniform,
    Exponential,
    Triangular,
}

impl Noise {
    pub const ALL: [Noise; 5] = [
        Noise::Normal,
        Noise::Laplace,
        Noise::Uniform,
        Noise::Exponential,
        Noise::Triangular,
    ];

    pub fn sample(self, rng: &mut SeededRng) -> f64 {
        match self {
            Noise::Normal => rng.normal(),
            Noise::Laplace => {
                let u = rng.open_uniform() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln() / SQRT_2
            }
            Noise::Uniform => 3f64.sqrt() * (2.0 * rng.uniform() - 1.0),
            Noise::Exponential => -rng.open_uniform().ln() - 1.0,
            // density 2y on [0,1] has mean 2/3 and sd 1/(3√2)
            Noise::Triangular => (rng.uniform().sqrt() - 2.0 / 3.0) * 3.0 * SQRT_2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Noise::Normal => "normal",
            Noise::Laplace => "laplace",
            Noise::Uniform => "uniform",
            Noise::Exponential => "exponential",
            Noise::Triangular => "triangular",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.name() == name)
    }
}

/// Distribution of the feature vector.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureLaw {
    /// Independent `U[lo, hi]` coordinates.
    UniformCube { lo: f64, hi: f64 },
    /// Independent normal coordinates with the given means and variances.
    Normal { means: Vec<f64>, variances: Vec<f64> },
}

impl FeatureLaw {
    fn sample(&self, dim: usize, rng: &mut SeededRng, out: &mut Vec<f64>) {
        match self {
            FeatureLaw::UniformCube { lo, hi } => {
                out.extend((0..dim).map(|_| lo + (hi - lo) * rng.uniform()));
            }
            FeatureLaw::Normal { means, variances } => {
                out.extend(means.iter().zip(variances).map(|(m, v)| m + v.sqrt() * rng.normal()));
            }
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            FeatureLaw::UniformCube { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::invalid(format!("feature range [{lo}, {hi}] is empty")));
                }
            }
            FeatureLaw::Normal { means, variances } => {
                if means.len() != dim || variances.len() != dim {
                    return Err(Error::LengthMismatch {
                        expected: dim,
                        actual: means.len().min(variances.len()),
                    });
                }
                if variances.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::invalid("feature variances must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Conditional law of the response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    /// `μ ≡ mean`, `σ(x) = sigma + slope·mean(x)`.
    Type1 { mean: f64, sigma: f64, slope: f64 },
    /// `μ(x) = mean(x)`, `σ(x) = cv·|μ(x)|`.
    Type2 { cv: f64 },
    /// `μ(x) = mean(x)`, `σ(x) = sigma + slope·x₁`.
    Type3 { sigma: f64, slope: f64 },
    /// Normal around `mean(x) − 1` below the threshold 2 and `mean(x) + 1`
    /// above it, with standard deviation `0.1·mean(x)`.
    Type4,
    /// `x ∈ [0,1]²`, `Y ∼ N(x¹+x², 1+|x²−0.5|)` (second argument a variance).
    Example47,
    /// Five normal features, `Y` exponential with mean `|mean(x)|`.
    ExpMean,
    /// Density `2y/λ²` on `[0, λ]` with `λ(x) = base + slope·mean(x)`.
    Triangular { base: f64, slope: f64 },
}

fn row_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// A generator: family, dimension, feature law and noise law. The noise law
/// applies to the location-scale families (types 1 to 3 and Example47).
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub family: Family,
    pub dim: usize,
    pub features: FeatureLaw,
    pub noise: Noise,
}

/// A generated sample with its oracle.
#[derive(Debug, Clone)]
pub struct Synthetic {
    pub data: Dataset,
    pub oracle: OracleModel,
}

impl GeneratorSpec {
    /// Family defaults: unit-cube features (`[0,4]` for Type4), two features
    /// for Example47, the fixed normal law for ExpMean, normal noise.
    pub fn new(family: Family, dim: usize) -> Self {
        let (dim, features) = match family {
            Family::Example47 => (2, FeatureLaw::UniformCube { lo: 0.0, hi: 1.0 }),
            Family::ExpMean => (
                5,
                FeatureLaw::Normal {
                    means: vec![0.0, 2.0, 4.0, 6.0, 8.0],
                    variances: vec![2.0, 3.0, 4.0, 5.0, 6.0],
                },
            ),
            Family::Type4 => (dim, FeatureLaw::UniformCube { lo: 0.0, hi: 4.0 }),
            _ => (dim, FeatureLaw::UniformCube { lo: 0.0, hi: 1.0 }),
        };
        Self {
            family,
            dim,
            features,
            noise: Noise::Normal,
        }
    }

    pub fn with_features(mut self, features: FeatureLaw) -> Self {
        self.features = features;
        self
    }

    pub fn with_noise(mut self, noise: Noise) -> Self {
        self.noise = noise;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::invalid("generator dimension must be positive"));
        }
        self.features.validate(self.dim)?;
        let (lo, hi) = match &self.features {
            FeatureLaw::UniformCube { lo, hi } => (*lo, *hi),
            FeatureLaw::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        };
        let ok = match self.family {
            Family::Type1 { mean, sigma, slope } => {
                let positive = |m: f64| slope == 0.0 || sigma + slope * m > 0.0;
                mean.is_finite() && sigma > 0.0 && slope.is_finite() && positive(lo) && positive(hi)
            }
            Family::Type2 { cv } => cv > 0.0 && lo >= 0.0,
            Family::Type3 { sigma, slope } => sigma > 0.0 && slope >= 0.0 && lo >= 0.0,
            Family::Type4 => lo >= 0.0,
            Family::Example47 => self.dim == 2,
            Family::ExpMean => matches!(self.features, FeatureLaw::Normal { .. }),
            Family::Triangular { base, slope } => base > 0.0 && slope >= 0.0 && lo >= 0.0,
        };
        if !ok {
            return Err(Error::invalid(format!("invalid parameters for {:?}", self.family)));
        }
        Ok(())
    }

    /// True conditional mean and standard deviation.
    pub fn oracle(&self) -> OracleModel {
        match self.family {
            Family::Type1 { mean, sigma, slope } => OracleModel::new(move |_| mean, move |x| sigma + slope * row_mean(x)),
            Family::Type2 { cv } => OracleModel::new(row_mean, move |x| cv * row_mean(x).abs()),
            Family::Type3 { sigma, slope } => OracleModel::new(row_mean, move |x| sigma + slope * x[0]),
            Family::Type4 => OracleModel::new(
                |x| {
                    let m = row_mean(x);
                    if m <= 2.0 {
                        m - 1.0
                    } else {
                        m + 1.0
                    }
                },
                |x| 0.1 * row_mean(x).abs(),
            ),
            Family::Example47 => OracleModel::new(|x| x[0] + x[1], |x| (1.0 + (x[1] - 0.5).abs()).sqrt()),
            Family::ExpMean => OracleModel::new(|x| row_mean(x).abs(), |x| row_mean(x).abs()),
            Family::Triangular { base, slope } => OracleModel::new(
                move |x| 2.0 * (base + slope * row_mean(x)) / 3.0,
                move |x| (base + slope * row_mean(x)) / (3.0 * SQRT_2),
            ),
        }
    }

    fn response(&self, oracle: &OracleModel, x: &[f64], rng: &mut SeededRng) -> f64 {
        match self.family {
            Family::ExpMean => -row_mean(x).abs() * rng.open_uniform().ln(),
            Family::Triangular { base, slope } => (base + slope * row_mean(x)) * rng.uniform().sqrt(),
            Family::Type4 => oracle.mean(x) + oracle.spread(x) * rng.normal(),
            _ => oracle.mean(x) + oracle.spread(x) * self.noise.sample(rng),
        }
    }

    pub fn generate(&self, n: usize, rng: &mut SeededRng) -> Result<Synthetic> {
        self.validate()?;
        if n == 0 {
            return Err(Error::invalid("sample size must be at least 1"));
        }
        let oracle = self.oracle();
        let mut features = Vec::with_capacity(n * self.dim);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let start = features.len();
            self.features.sample(self.dim, rng, &mut features);
            y.push(self.response(&oracle, &features[start..], rng));
        }
        let data = Dataset::new(features, self.dim, crate::data::Responses::Real(y))?;
        Ok(Synthetic { data, oracle })
    }
}
