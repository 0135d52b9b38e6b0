//! Distances between score distributions and the coverage bounds built on
//! them.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::quantile::SortedSample;

/// Discrete-metric Fréchet distance between two label paths of a depth-`d`
/// hierarchy: `Σ_{i<d} 2^{-i}·ρ/(1+ρ)` over the first `d-1` positions.
/// Missing positions act as a blank symbol unequal to every label.
pub fn frechet_distance<T: PartialEq>(a: &[T], b: &[T], depth: usize) -> f64 {
    (1..depth)
        .map(|i| {
            let differ = match (a.get(i - 1), b.get(i - 1)) {
                (Some(x), Some(y)) => x != y,
                (None, None) => false,
                _ => true,
            };
            if differ {
                0.5f64.powi(i as i32) * 0.5
            } else {
                0.0
            }
        })
        .sum()
}

/// Largest vertical gap between two empirical CDFs.
pub fn ks_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    let fa = SortedSample::new(a.to_vec())?;
    let fb = SortedSample::new(b.to_vec())?;
    if fa.is_empty() || fb.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(fa
        .as_slice()
        .iter()
        .chain(fb.as_slice())
        .map(|&x| (fa.ecdf(x) - fb.ecdf(x)).abs())
        .fold(0.0, f64::max))
}

/// Largest gap between two CDFs over the given evaluation points.
pub fn ks_distance_cdfs(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, points: &[f64]) -> f64 {
    points.iter().map(|&x| (f(x) - g(x)).abs()).fold(0.0, f64::max)
}

/// A quadrature value with the gap to the half-resolution estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn simpson_segment(h: &dyn Fn(f64) -> Result<f64>, lo: f64, hi: f64, panels: usize) -> Result<(f64, f64)> {
    let panels = panels.max(2) + panels % 2;
    let step = (hi - lo) / panels as f64;
    // one-sided limits at the segment ends
    let nudge = (hi - lo) * 1e-12;
    let mut fine = 0.0;
    let mut coarse = 0.0;
    for j in 0..=panels {
        let x = match j {
            0 => lo + nudge,
            j if j == panels => hi - nudge,
            j => lo + j as f64 * step,
        };
        let v = h(x)?;
        let w = if j == 0 || j == panels {
            1.0
        } else if j % 2 == 1 {
            4.0
        } else {
            2.0
        };
        fine += w * v;
        if j % 2 == 0 {
            let half = panels / 2;
            let k = j / 2;
            let wc = if k == 0 || k == half {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            coarse += wc * v;
        }
    }
    Ok((fine * step / 3.0, coarse * 2.0 * step / 3.0))
}

/// `½∫|f−g|` by composite Simpson between consecutive `breakpoints`, with
/// `panels` subintervals per segment. Densities are read as one-sided limits
/// at the breakpoints, so jumps placed there are integrated exactly.
pub fn tv_distance_numeric(
    f: impl Fn(f64) -> f64,
    g: impl Fn(f64) -> f64,
    breakpoints: &[f64],
    panels: usize,
) -> Result<Quadrature> {
    let mut pts: Vec<f64> = breakpoints.to_vec();
    if pts.iter().any(|p| !p.is_finite()) {
        return Err(Error::invalid("breakpoints must be finite"));
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    if pts.len() < 2 {
        return Err(Error::invalid("at least two distinct breakpoints are required"));
    }
    let h = |x: f64| -> Result<f64> {
        let (a, b) = (f(x), g(x));
        for v in [a, b] {
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("density at {x}"),
                    value: v,
                });
            }
        }
        Ok((a - b).abs())
    };
    let mut fine = 0.0;
    let mut coarse = 0.0;
    for w in pts.windows(2) {
        let (a, b) = simpson_segment(&h, w[0], w[1], panels)?;
        fine += a;
        coarse += b;
    }
    Ok(Quadrature {
        value: 0.5 * fine,
        error: 0.5 * (fine - coarse).abs(),
    })
}

/// Total variation between `U[a, a+w]` and `U[a2, a2+w2]`.
pub fn tv_uniform(a: f64, w: f64, a2: f64, w2: f64) -> Result<f64> {
    if !(w > 0.0 && w2 > 0.0) {
        return Err(Error::invalid(format!("uniform widths must be positive, got {w} and {w2}")));
    }
    let ((a, w), (a2, w2)) = if a <= a2 { ((a, w), (a2, w2)) } else { ((a2, w2), (a, w)) };
    Ok(if a2 - a >= w {
        1.0
    } else if a + w >= a2 + w2 {
        (w - w2) / w
    } else if w2 >= w {
        ((a2 - a) + (w2 - w)) / w2
    } else {
        (a2 - a) / w
    })
}

/// `1 − α − max_{c'} KS(F_c, F_{c'})` over the classes of one cluster,
/// floored at 0.
pub fn clusterwise_bound(cluster_scores: &[Vec<f64>], target: usize, alpha: f64) -> Result<f64> {
    if cluster_scores.is_empty() {
        return Err(Error::EmptySample);
    }
    let own = cluster_scores.get(target).ok_or(Error::LabelOutOfRange {
        label: target,
        n_classes: cluster_scores.len(),
    })?;
    let mut worst: f64 = 0.0;
    for other in cluster_scores {
        worst = worst.max(ks_distance(own, other)?);
    }
    Ok((1.0 - alpha - worst).max(0.0))
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::EmptySample);
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid("mixture weights must be nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
    }
    Ok(())
}

/// `(1−α)/λ_c − Σ_{c'≠c} λ_{c'}/λ_c`, possibly negative.
pub fn mixture_bound(weights: &[f64], target: usize, alpha: f64) -> Result<f64> {
    check_weights(weights)?;
    let lc = *weights.get(target).ok_or(Error::LabelOutOfRange {
        label: target,
        n_classes: weights.len(),
    })?;
    if lc == 0.0 {
        return Err(Error::invalid("target class has zero mixture weight"));
    }
    let others: f64 = weights.iter().enumerate().filter(|&(c, _)| c != target).map(|(_, w)| w).sum();
    Ok((1.0 - alpha) / lc - others / lc)
}

pub type Cdf = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Class weights with a score CDF per class.
#[derive(Clone)]
pub struct MixtureSpec {
    weights: Vec<f64>,
    cdfs: Vec<Cdf>,
}

impl fmt::Debug for MixtureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixtureSpec").field("weights", &self.weights).finish_non_exhaustive()
    }
}

impl MixtureSpec {
    pub fn new(weights: Vec<f64>, cdfs: Vec<Cdf>) -> Result<Self> {
        check_weights(&weights)?;
        if weights.len() != cdfs.len() {
            return Err(Error::LengthMismatch {
                expected: weights.len(),
                actual: cdfs.len(),
            });
        }
        Ok(Self { weights, cdfs })
    }

    /// Mixture of empirical CDFs. Step CDFs are flat almost everywhere, so
    /// quantile matching usually reports a non-unique quantile for these.
    pub fn from_samples(weights: Vec<f64>, samples: &[Vec<f64>]) -> Result<Self> {
        let cdfs = samples
            .iter()
            .map(|s| {
                let sorted = SortedSample::new(s.clone())?;
                if sorted.is_empty() {
                    return Err(Error::EmptySample);
                }
                Ok(Arc::new(move |x| sorted.ecdf(x)) as Cdf)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights, cdfs)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn class_cdf(&self, class: usize, x: f64) -> Result<f64> {
        let f = self.cdfs.get(class).ok_or(Error::LabelOutOfRange {
            label: class,
            n_classes: self.cdfs.len(),
        })?;
        Ok(f(x))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights.iter().zip(&self.cdfs).map(|(w, f)| w * f(x)).sum()
    }

    /// The unique `level`-quantile of the mixture.
    pub fn quantile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::InvalidLevel(level));
        }
        let (mut lo, mut hi) = (-1.0f64, 1.0f64);
        let mut expansions = 0;
        while self.cdf(lo) >= level || self.cdf(hi) < level {
            if self.cdf(lo) >= level {
                lo *= 2.0;
            }
            if self.cdf(hi) < level {
                hi *= 2.0;
            }
            expansions += 1;
            if expansions > 1100 {
                return Err(Error::invalid("mixture CDF never reaches the level"));
            }
        }
        // inf{x : F(x) ≥ level}
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.cdf(mid) >= level {
                b = mid;
            } else {
                a = mid;
            }
        }
        let lower = b;
        // sup{x : F(x) ≤ level}
        let mut hi = hi;
        while self.cdf(hi) <= level {
            hi = if hi > 0.0 { hi * 2.0 } else { 1.0 };
            expansions += 1;
            if expansions > 2200 {
                return Err(Error::QuantileNotUnique(level));
            }
        }
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if mid <= a || mid >= b {
                break;
            }
            if self.cdf(mid) <= level {
                a = mid;
            } else {
                b = mid;
            }
        }
        let upper = a;
        if upper - lower > 1e-9 * lower.abs().max(1.0) {
            return Err(Error::QuantileNotUnique(level));
        }
        Ok(lower)
    }
}

/// `P_{A|c}(A ≤ Q_A(1−α))` where `Q_A` is the mixture quantile.
pub fn quantile_matched_coverage(mix: &MixtureSpec, class: usize, alpha: f64) -> Result<f64> {
    let q = mix.quantile(1.0 - alpha)?;
    mix.class_cdf(class, q)
}
