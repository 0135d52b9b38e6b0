//! Score-distribution diagnostics: empirical CDF curves, Harrell–Davis
//! quantiles, the bootstrap quantile-difference test, the calibration-
//! conditional coverage band and Kolmogorov–Smirnov pivotality checks.

use std::io::Write;

use rayon::prelude::*;

use crate::cluster::ks_distance;
use crate::conditional::equal_frequency_bins;
use crate::error::{ensure_finite, Error, Result};
use crate::quantile::{ceil_tol, SortedSample};
use crate::rng::SeededRng;
use crate::special::{beta_quantile, reg_inc_beta};

/// Group name of the pooled curve in [`cdf_curves`].
pub const MARGINAL_GROUP: &str = "marginal";

/// Coefficient of the 99% two-sided Kolmogorov–Smirnov band.
pub const KS_COEFFICIENT_99: f64 = 1.63;

#[derive(Debug, Clone, PartialEq)]
pub struct CdfPoint {
    pub group: String,
    pub score: f64,
    pub cdf: f64,
}

/// Empirical CDFs of every non-empty group plus the pooled sample, each
/// evaluated on the merged grid of observed scores. Every grid value emits
/// the left limit and the value, so consecutive rows trace the step corners.
pub fn cdf_curves(groups: &[(String, Vec<f64>)]) -> Result<Vec<CdfPoint>> {
    let mut curves = Vec::new();
    let mut pooled = Vec::new();
    for (name, scores) in groups {
        if scores.is_empty() {
            log::warn!("group `{name}` has no scores; its CDF curve is skipped");
            continue;
        }
        ensure_finite("score", scores)?;
        pooled.extend_from_slice(scores);
        curves.push((name.clone(), SortedSample::new(scores.clone())?));
    }
    if curves.is_empty() {
        return Err(Error::EmptySample);
    }
    curves.push((MARGINAL_GROUP.to_string(), SortedSample::new(pooled.clone())?));
    let mut grid = pooled;
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut out = Vec::with_capacity(curves.len() * grid.len() * 2);
    for (name, sample) in &curves {
        let n = sample.len() as f64;
        let values = sample.as_slice();
        for &g in &grid {
            let below = values.partition_point(|&v| v < g) as f64;
            let at_or_below = values.partition_point(|&v| v <= g) as f64;
            out.push(CdfPoint { group: name.clone(), score: g, cdf: below / n });
            out.push(CdfPoint { group: name.clone(), score: g, cdf: at_or_below / n });
        }
    }
    Ok(out)
}

pub fn write_cdf_csv<W: Write>(points: &[CdfPoint], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "score", "cdf"])?;
    for p in points {
        w.write_record([p.group.as_str(), &p.score.to_string(), &p.cdf.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Harrell–Davis weights for a sample size and quantile level.
#[derive(Debug, Clone)]
pub struct HdWeights {
    level: f64,
    weights: Vec<f64>,
}

impl HdWeights {
    pub fn new(n: usize, q: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptySample);
        }
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::InvalidLevel(q));
        }
        let m = n as f64;
        let (a, b) = ((m + 1.0) * q, (m + 1.0) * (1.0 - q));
        let cum = (0..=n)
            .map(|i| reg_inc_beta(i as f64 / m, a, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            level: q,
            weights: cum.windows(2).map(|w| w[1] - w[0]).collect(),
        })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weighted sum over a sample already sorted ascending.
    pub fn apply_sorted(&self, sorted: &[f64]) -> Result<f64> {
        if sorted.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len(),
                actual: sorted.len(),
            });
        }
        let lo = sorted[0];
        let hi = sorted[sorted.len() - 1];
        let v: f64 = self.weights.iter().zip(sorted).map(|(w, x)| w * x).sum();
        Ok(v.clamp(lo, hi))
    }
}

pub fn hd_quantile(values: &[f64], q: f64) -> Result<f64> {
    let weights = HdWeights::new(values.len(), q)?;
    let sorted = SortedSample::new(values.to_vec())?;
    weights.apply_sorted(sorted.as_slice())
}

/// Outcome of [`bootstrap_quantile_test`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapTest {
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub excludes_zero: bool,
}

/// Quantile level `(1−α)(1+1/n)` used for a calibration set of size `n`.
pub fn inflated_level(alpha: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidLevel(alpha));
    }
    let q = (1.0 - alpha) * (1.0 + 1.0 / n as f64);
    if q >= 1.0 {
        return Err(Error::invalid(format!(
            "inflated level {q} is not below 1 for n = {n} and alpha = {alpha}"
        )));
    }
    Ok(q)
}

fn resample_sorted(values: &[f64], rng: &mut SeededRng, buf: &mut Vec<f64>) {
    buf.clear();
    buf.extend((0..values.len()).map(|_| values[rng.index(values.len())]));
    buf.sort_by(f64::total_cmp);
}

/// Percentile bootstrap for the difference of the Harrell–Davis quantiles
/// of two score samples, each at its inflated level. Resamples keep the
/// original sizes; replicate `i` draws from substream `i` of `rng`.
pub fn bootstrap_quantile_test(
    first: &[f64],
    second: &[f64],
    alpha: f64,
    replicates: usize,
    beta: f64,
    rng: &SeededRng,
) -> Result<BootstrapTest> {
    if first.is_empty() || second.is_empty() {
        return Err(Error::EmptySample);
    }
    if replicates < 100 {
        return Err(Error::invalid(format!(
            "bootstrap needs at least 100 replicates, got {replicates}"
        )));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidLevel(beta));
    }
    ensure_finite("score", first)?;
    ensure_finite("score", second)?;
    let w1 = HdWeights::new(first.len(), inflated_level(alpha, first.len())?)?;
    let w2 = HdWeights::new(second.len(), inflated_level(alpha, second.len())?)?;
    let mut diffs = (0..replicates as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.replicate(i);
            let mut buf = Vec::with_capacity(first.len().max(second.len()));
            resample_sorted(first, &mut r, &mut buf);
            let q1 = w1.apply_sorted(&buf)?;
            resample_sorted(second, &mut r, &mut buf);
            let q2 = w2.apply_sorted(&buf)?;
            Ok(q1 - q2)
        })
        .collect::<Result<Vec<f64>>>()?;
    diffs.sort_by(f64::total_cmp);
    let b = replicates as f64;
    let rank = |r: f64| (r.ceil() as usize).clamp(1, replicates);
    let ci_lo = diffs[rank(b * beta / 2.0) - 1];
    let ci_hi = diffs[rank(b - b * beta / 2.0) - 1];
    Ok(BootstrapTest {
        ci_lo,
        ci_hi,
        excludes_zero: ci_lo > 0.0 || ci_hi < 0.0,
    })
}

/// Central `band`-probability interval of the coverage attained
/// conditionally on a calibration set of size `n`. Returns `(1, 1)` when the
/// critical rank exceeds `n`.
pub fn beta_coverage_band(n: usize, alpha: f64, band: f64) -> Result<(f64, f64)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidLevel(alpha));
    }
    if !(band > 0.0 && band < 1.0) {
        return Err(Error::InvalidLevel(band));
    }
    let k = ceil_tol((1.0 - alpha) * (n as f64 + 1.0)).max(1.0);
    if k > n as f64 {
        return Ok((1.0, 1.0));
    }
    let b = n as f64 + 1.0 - k;
    let tail = (1.0 - band) / 2.0;
    Ok((beta_quantile(tail, k, b)?, beta_quantile(1.0 - tail, k, b)?))
}

/// 99% critical value of the two-sample Kolmogorov–Smirnov distance.
pub fn ks_critical_two_sample(m: usize, n: usize) -> f64 {
    let (m, n) = (m as f64, n as f64);
    KS_COEFFICIENT_99 * ((m + n) / (m * n)).sqrt()
}

/// 99% critical value of the one-sample Kolmogorov–Smirnov distance.
pub fn ks_critical_one_sample(n: usize) -> f64 {
    KS_COEFFICIENT_99 / (n as f64).sqrt()
}

/// Distance between the empirical CDF of `values` and the uniform law on
/// `[0, 1]`.
pub fn ks_uniform(values: &[f64]) -> Result<f64> {
    let sorted = SortedSample::new(values.to_vec())?;
    if sorted.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = sorted.len() as f64;
    Ok(sorted
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let u = v.clamp(0.0, 1.0);
            (u - i as f64 / n).abs().max(((i + 1) as f64 / n - u).abs())
        })
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinCheck {
    pub bin: usize,
    pub size: usize,
    pub distance: f64,
    pub critical: f64,
}

impl BinCheck {
    pub fn passes(&self) -> bool {
        self.distance < self.critical
    }
}

/// Compares each equal-frequency bin of `difficulty` against the pooled
/// scores with a two-sample KS distance.
pub fn pivotality_check(scores: &[f64], difficulty: &[f64], n_bins: usize) -> Result<Vec<BinCheck>> {
    if scores.len() != difficulty.len() {
        return Err(Error::LengthMismatch {
            expected: scores.len(),
            actual: difficulty.len(),
        });
    }
    let rule = equal_frequency_bins(difficulty, n_bins)?;
    let mut bins = vec![Vec::new(); rule.n_bins()];
    for (&s, &d) in scores.iter().zip(difficulty) {
        bins[rule.bin(d)].push(s);
    }
    bins.iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(bin, b)| {
            Ok(BinCheck {
                bin,
                size: b.len(),
                distance: ks_distance(b, scores)?,
                critical: ks_critical_two_sample(b.len(), scores.len()),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hd_examples() {
        assert_eq!(hd_quantile(&[4.2], 0.3).unwrap(), 4.2);
        assert!((hd_quantile(&[5.0, 1.0, 3.0, 2.0, 4.0], 0.5).unwrap() - 3.0).abs() < 1e-12);
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        let q = hd_quantile(&v, 0.9).unwrap();
        assert!(q > 8.0 && q < 10.0, "{q}");
        assert!(hd_quantile(&[], 0.5).is_err());
        assert!(hd_quantile(&[1.0], 0.0).is_err());
        assert!(hd_quantile(&[1.0], 1.0).is_err());
    }

    /// Independent oracle: weights from Simpson integration of the Beta
    /// density, not from the incomplete beta function.
    #[test]
    fn hd_weights_match_density_integration() {
        let n = 10usize;
        let q = 0.9;
        let (a, b) = (11.0 * q, 11.0 * (1.0 - q));
        let ln_norm = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b);
        let density = |t: f64| (ln_norm + (a - 1.0) * t.ln() + (b - 1.0) * (1.0 - t).ln()).exp();
        let integrate = |lo: f64, hi: f64| {
            let m = 20_000;
            let h = (hi - lo) / m as f64;
            let mut acc = density(lo) + density(hi);
            for j in 1..m {
                acc += density(lo + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0
        };
        let w = HdWeights::new(n, q).unwrap();
        for i in 0..n {
            let expect = integrate(i as f64 / n as f64, (i + 1) as f64 / n as f64);
            // (1 - t)^0.1 has an unbounded slope at 1, which slows Simpson there
            let tol = if i == n - 1 { 1e-4 } else { 1e-8 };
            assert!((w.weights()[i] - expect).abs() < tol, "cell {i}: {} vs {expect}", w.weights()[i]);
        }
        assert!((w.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn beta_band_examples() {
        let (lo, hi) = beta_coverage_band(99, 0.1, 0.9).unwrap();
        assert!((lo - 0.848).abs() < 2e-3 && (hi - 0.945).abs() < 2e-3, "({lo}, {hi})");
        assert_eq!(beta_coverage_band(99, 0.0, 0.9).unwrap(), (1.0, 1.0));
        assert_eq!(beta_coverage_band(5, 0.1, 0.9).unwrap(), (1.0, 1.0));
    }

    /// Monte Carlo cross-check: coverage of the critical score over fresh
    /// uniform calibration sets is Beta distributed.
    #[test]
    fn beta_band_matches_simulation() {
        let (lo, hi) = beta_coverage_band(99, 0.1, 0.9).unwrap();
        let mut rng = SeededRng::new(11);
        let reps = 4000;
        let mut inside = 0;
        for _ in 0..reps {
            let mut cal: Vec<f64> = (0..99).map(|_| rng.uniform()).collect();
            cal.sort_by(f64::total_cmp);
            let coverage = cal[89];
            if coverage >= lo && coverage <= hi {
                inside += 1;
            }
        }
        let frac = inside as f64 / reps as f64;
        assert!((frac - 0.9).abs() < 3.0 * (0.09f64 / reps as f64).sqrt() + 1e-3, "{frac}");
    }

    #[test]
    fn cdf_curve_examples() {
        let same = vec![1.0, 2.0, 3.0];
        let pts = cdf_curves(&[("a".into(), same.clone()), ("b".into(), same)]).unwrap();
        let a: Vec<f64> = pts.iter().filter(|p| p.group == "a").map(|p| p.cdf).collect();
        let b: Vec<f64> = pts.iter().filter(|p| p.group == "b").map(|p| p.cdf).collect();
        assert_eq!(a, b);

        let base = vec![0.0, 1.0, 2.0];
        let shifted: Vec<f64> = base.iter().map(|v| v + 100.0).collect();
        let pts = cdf_curves(&[("a".into(), base), ("b".into(), shifted)]).unwrap();
        let at = |g: &str, s: f64| pts.iter().rev().find(|p| p.group == g && p.score == s).unwrap().cdf;
        assert_eq!(at("a", 2.0) - at("b", 2.0), 1.0);
    }

    #[test]
    fn marginal_is_mixture_and_empty_groups_skip() {
        let groups = vec![
            ("a".to_string(), vec![0.5, 1.5, 1.5]),
            ("empty".to_string(), vec![]),
            ("b".to_string(), vec![1.0, 2.0, 3.0, 1.5, 0.1]),
        ];
        let pts = cdf_curves(&groups).unwrap();
        assert!(pts.iter().all(|p| p.group != "empty"));
        let per = |g: &str| pts.iter().filter(|p| p.group == g).map(|p| p.cdf).collect::<Vec<_>>();
        let (a, b, m) = (per("a"), per("b"), per(MARGINAL_GROUP));
        for i in 0..m.len() {
            assert!((m[i] - (3.0 * a[i] + 5.0 * b[i]) / 8.0).abs() < 1e-12);
        }
        assert!(cdf_curves(&[("x".into(), vec![])]).is_err());
    }

    #[test]
    fn csv_header() {
        let pts = cdf_curves(&[("a".into(), vec![1.0])]).unwrap();
        let mut buf = Vec::new();
        write_cdf_csv(&pts, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("group,score,cdf\n"));
    }

    #[test]
    fn bootstrap_detects_offset() {
        let mut rng = SeededRng::new(5);
        let a: Vec<f64> = (0..200).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..200).map(|_| rng.normal() + 100.0).collect();
        let t = bootstrap_quantile_test(&a, &b, 0.1, 300, 0.05, &SeededRng::new(6)).unwrap();
        assert!(t.excludes_zero && t.ci_hi < 0.0);
        assert!(bootstrap_quantile_test(&a, &b, 0.1, 1, 0.05, &rng).is_err());
        assert!(bootstrap_quantile_test(&[], &b, 0.1, 300, 0.05, &rng).is_err());
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let mut rng = SeededRng::new(8);
        let a: Vec<f64> = (0..50).map(|_| rng.normal()).collect();
        let b: Vec<f64> = (0..60).map(|_| rng.normal()).collect();
        let root = SeededRng::new(9);
        let x = bootstrap_quantile_test(&a, &b, 0.1, 200, 0.05, &root).unwrap();
        let y = bootstrap_quantile_test(&a, &b, 0.1, 200, 0.05, &root).unwrap();
        assert_eq!(x, y);
        assert!(x.ci_lo <= x.ci_hi);
    }

    #[test]
    fn uniform_ks() {
        assert!((ks_uniform(&[0.5]).unwrap() - 0.5).abs() < 1e-15);
        let grid: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 100.0).collect();
        assert!((ks_uniform(&grid).unwrap() - 0.005).abs() < 1e-12);
        assert!(ks_uniform(&[]).is_err());
    }

    #[test]
    fn pivotality_flags_heteroskedastic_residuals() {
        let mut rng = SeededRng::new(21);
        let n = 4000;
        let sigma: Vec<f64> = (0..n).map(|_| 0.1 + rng.uniform()).collect();
        let eps: Vec<f64> = sigma.iter().map(|s| s * rng.normal()).collect();
        let standardized: Vec<f64> = eps.iter().zip(&sigma).map(|(e, s)| (e / s).abs()).collect();
        let raw: Vec<f64> = eps.iter().map(|e| e.abs()).collect();
        assert!(pivotality_check(&standardized, &sigma, 4).unwrap().iter().all(BinCheck::passes));
        assert!(!pivotality_check(&raw, &sigma, 4).unwrap().iter().all(BinCheck::passes));
    }
}
