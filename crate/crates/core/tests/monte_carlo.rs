//! Seeded Monte Carlo checks of the coverage and martingale guarantees.

use rayon::prelude::*;

use conformal_kit::calibrate::Calibration;
use conformal_kit::cluster::clusterwise_bound;
use conformal_kit::conditional::mondrian_fit;
use conformal_kit::martingale::{mixture_wealth, power_step, Betting, CalibrationMode, MartingaleState, Monitor};
use conformal_kit::models::{KnnModel, Regressor};
use conformal_kit::resample::{jackknife_plus_band, CrossFit, FoldPlan, KnnRefitter};
use conformal_kit::scores::RegressionScore;
use conformal_kit::synthlab::experiments::{clusterwise_study, ClusterwiseStudy, SweepKind};
use conformal_kit::synthlab::{bootstrap_quantile_test, ks_critical_one_sample, ks_uniform, Family, FeatureLaw, GeneratorSpec};
use conformal_kit::{Dataset, SeededRng};

fn mean_stderr(hits: &[f64]) -> (f64, f64) {
    let n = hits.len() as f64;
    let m = hits.iter().sum::<f64>() / n;
    let var = hits.iter().map(|h| (h - m) * (h - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

#[test]
fn marginal_coverage_between_nominal_and_cap() {
    let root = SeededRng::new(101);
    let (n, alpha, reps) = (19, 0.1, 40_000u64);
    let hits: Vec<f64> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            let cal: Vec<f64> = (0..n).map(|_| s.normal().abs()).collect();
            let a = Calibration::new(cal, alpha).unwrap().critical_score().unwrap();
            indicator(s.normal().abs() <= a)
        })
        .collect();
    let (m, se) = mean_stderr(&hits);
    assert!(m >= 1.0 - alpha - 3.0 * se, "{m}");
    assert!(m <= 1.0 - alpha + 1.0 / (n as f64 + 1.0) + 3.0 * se, "{m}");
}

#[test]
fn smoothed_p_values_are_uniform() {
    let root = SeededRng::new(7);
    let m = 10_000u64;
    let ps: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            // discrete scores make ties common
            let cal: Vec<f64> = (0..20).map(|_| s.index(5) as f64).collect();
            let test = s.index(5) as f64;
            Calibration::new(cal, 0.1).unwrap().smoothed_p_value(test, &mut s).unwrap()
        })
        .collect();
    assert!(ks_uniform(&ps).unwrap() < ks_critical_one_sample(m as usize));
}

#[test]
fn mondrian_is_valid_per_class() {
    let root = SeededRng::new(33);
    let (alpha, reps) = (0.1, 4000u64);
    // class c has scores |N(0, (c + 1)^2)|; class 2 is rare
    let weights = [0.45, 0.45, 0.10];
    let draws: Vec<[f64; 3]> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            let mut scores = Vec::new();
            let mut classes = Vec::new();
            for _ in 0..400 {
                let u = s.uniform();
                let c = if u < weights[0] { 0 } else if u < weights[0] + weights[1] { 1 } else { 2 };
                scores.push((c as f64 + 1.0) * s.normal().abs());
                classes.push(c);
            }
            let m = mondrian_fit(&scores, &classes, 3, alpha).unwrap();
            let mut out = [0.0; 3];
            for (c, o) in out.iter_mut().enumerate() {
                let test = (c as f64 + 1.0) * s.normal().abs();
                *o = indicator(test <= m.critical_score(c).unwrap());
            }
            out
        })
        .collect();
    for c in 0..3 {
        let hits: Vec<f64> = draws.iter().map(|d| d[c]).collect();
        let (m, se) = mean_stderr(&hits);
        assert!(m >= 1.0 - alpha - 3.0 * se, "class {c}: {m}");
    }
}

/// With the oracle standardized score of a location-scale family, the
/// marginal predictor already covers every variance bin at the nominal rate.
#[test]
fn standardized_scores_make_marginal_calibration_conditional() {
    let spec = GeneratorSpec::new(Family::Type2 { cv: 0.1 }, 1).with_features(FeatureLaw::UniformCube { lo: 1.0, hi: 10.0 });
    let root = SeededRng::new(55);
    let (alpha, n_cal, reps) = (0.1, 99, 3000u64);
    let draws: Vec<[f64; 3]> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            let cal = spec.generate(n_cal, &mut s).unwrap();
            let score = |d: &Dataset, oracle: &dyn Regressor| -> Vec<f64> {
                d.rows()
                    .zip(d.targets().unwrap())
                    .map(|(x, &y)| RegressionScore::Standardized.score(&oracle.outputs(x).unwrap(), y).unwrap().abs())
                    .collect()
            };
            let a = Calibration::new(score(&cal.data, &cal.oracle), alpha).unwrap().critical_score().unwrap();
            // one test point per third of the feature range
            let mut out = [0.0; 3];
            for (b, o) in out.iter_mut().enumerate() {
                let x = 1.0 + 3.0 * (b as f64 + s.uniform());
                let mu = cal.oracle.mean(&[x]);
                let y = mu + cal.oracle.spread(&[x]) * s.normal();
                let test = Dataset::regression(&[vec![x]], vec![y]).unwrap();
                *o = indicator(score(&test, &cal.oracle)[0] <= a);
            }
            out
        })
        .collect();
    for b in 0..3 {
        let hits: Vec<f64> = draws.iter().map(|d| d[b]).collect();
        let (m, se) = mean_stderr(&hits);
        assert!((m - (1.0 - alpha)).abs() <= 3.0 * se, "bin {b}: {m}");
    }
}

fn toy_regression(n: usize, s: &mut SeededRng) -> (Dataset, Vec<f64>, f64) {
    let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![s.uniform()]).collect();
    let y: Vec<f64> = rows.iter().map(|x| (6.0 * x[0]).sin() + 0.3 * s.normal()).collect();
    let x = s.uniform();
    let yt = (6.0 * x).sin() + 0.3 * s.normal();
    (Dataset::regression(&rows, y).unwrap(), vec![x], yt)
}

#[test]
fn jackknife_plus_covers_at_twice_alpha() {
    let root = SeededRng::new(9);
    let alpha = 0.1;
    let hits: Vec<f64> = (0..3000u64)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            let (data, x, y) = toy_regression(30, &mut s);
            indicator(jackknife_plus_band(&data, &KnnRefitter { k: 1 }, &x, alpha).unwrap().contains(y))
        })
        .collect();
    let (m, se) = mean_stderr(&hits);
    assert!(m >= 1.0 - 2.0 * alpha - 3.0 * se, "{m}");
}

#[test]
fn cross_conformal_covers_at_twice_alpha() {
    let root = SeededRng::new(10);
    let (alpha, n, k) = (0.1, 40usize, 5usize);
    let hits: Vec<f64> = (0..3000u64)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            let (data, x, y) = toy_regression(n, &mut s);
            let folds = FoldPlan::random(n, k, &mut s).unwrap();
            let cross = CrossFit::new(&data, &folds, &KnnRefitter { k: 3 }).unwrap();
            indicator(cross.ccp_p_value(&x, y).unwrap() >= alpha)
        })
        .collect();
    let (m, se) = mean_stderr(&hits);
    let kf = k as f64;
    let correction = 2.0 * (1.0 - alpha) * (1.0 - 1.0 / kf) / (1.0 + n as f64 / kf);
    assert!(m >= 1.0 - 2.0 * alpha - correction - 3.0 * se, "{m}");
}

#[test]
fn power_martingale_has_unit_mean() {
    let root = SeededRng::new(12);
    let eps = 0.92;
    let wealth: Vec<f64> = (0..20_000u64)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            (0..100).fold(1.0, |w, _| power_step(w, s.open_uniform(), eps).unwrap())
        })
        .collect();
    let (m, se) = mean_stderr(&wealth);
    assert!((m - 1.0).abs() <= 3.0 * se, "{m} ± {se}");
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let h = (b - a) / panels as f64;
    let inner: f64 = (1..panels).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (f(a) + inner + f(b)) * h / 3.0
}

// Sample means of mixture wealth never settle (the wealth has infinite
// variance), so the martingale identity E[W(h, p)] = W(h) is checked by
// quadrature over a uniform next p-value, with p = exp(-t).
#[test]
fn mixture_wealth_is_a_martingale() {
    for history in [vec![0.3], vec![0.3, 0.7, 0.05], vec![0.9, 0.02, 0.4, 0.6, 0.11]] {
        let current = mixture_wealth(&history).unwrap();
        let next = |t: f64| {
            let mut h = history.clone();
            h.push((-t).exp());
            mixture_wealth(&h).unwrap() * (-t).exp()
        };
        let cuts = [1e-12, 1.0, 10.0, 100.0, 700.0];
        // beyond T the integrand behaves like (m+1)! / (Π p · t^(m+2))
        let m = history.len() as i32;
        let product: f64 = history.iter().product();
        let factorial: f64 = (1..=m).map(f64::from).product();
        let tail = factorial / (product * 700f64.powi(m + 1));
        let expected: f64 = cuts.windows(2).map(|w| simpson(&next, w[0], w[1], 4_000)).sum::<f64>() + tail;
        assert!((expected - current).abs() <= 1e-6 * current, "{history:?}: {expected} vs {current}");
    }
}

#[test]
fn false_alarms_respect_ville_bound() {
    let root = SeededRng::new(14);
    let threshold = 20.0;
    let alarms: Vec<f64> = (0..600u64)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            let cal: Vec<f64> = (0..100).map(|_| s.normal()).collect();
            let mut m = Monitor::new(
                Calibration::new(cal, 0.1).unwrap(),
                MartingaleState::new(Betting::Mixture, threshold).unwrap(),
                CalibrationMode::OnlineAppend,
                s.substream("smoothing"),
            )
            .unwrap();
            let mut alert = false;
            for _ in 0..400 {
                alert = m.observe(s.normal()).unwrap().alert;
            }
            indicator(alert)
        })
        .collect();
    let (m, se) = mean_stderr(&alarms);
    assert!(m <= 1.0 / threshold + 3.0 * se.max(1e-3), "{m}");
}

/// After a 3σ location shift, 1-NN residual scores push the mixture wealth
/// past 100 within 50 points in at least 95% of runs.
#[test]
fn shift_is_detected_quickly() {
    let root = SeededRng::new(15);
    let runs = 200u64;
    let detected: Vec<f64> = (0..runs)
        .into_par_iter()
        .map(|r| {
            let mut s = root.replicate(r);
            let draw = |s: &mut SeededRng, n: usize, shift: f64| {
                let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![s.uniform()]).collect();
                let y: Vec<f64> = rows.iter().map(|x| 2.0 * x[0] + shift + s.normal()).collect();
                Dataset::regression(&rows, y).unwrap()
            };
            let train = draw(&mut s, 200, 0.0);
            let model = KnnModel::fit(&train, 1).unwrap();
            let residuals = |d: &Dataset| -> Vec<f64> {
                d.rows().zip(d.targets().unwrap()).map(|(x, y)| (y - model.predict(x).unwrap()).abs()).collect()
            };
            let cal = residuals(&draw(&mut s, 200, 0.0));
            let mut m = Monitor::new(
                Calibration::new(cal, 0.1).unwrap(),
                MartingaleState::new(Betting::Mixture, 100.0).unwrap(),
                CalibrationMode::Fixed,
                s.substream("smoothing"),
            )
            .unwrap();
            for score in residuals(&draw(&mut s, 20, 0.0)) {
                m.observe(score).unwrap();
            }
            let mut hit = false;
            for score in residuals(&draw(&mut s, 50, 3.0)) {
                hit |= m.observe(score).unwrap().wealth >= 100.0;
            }
            indicator(hit)
        })
        .collect();
    let rate = detected.iter().sum::<f64>() / runs as f64;
    assert!(rate >= 0.95, "{rate}");
}

#[test]
fn clusterwise_coverage_respects_bounds_and_converges() {
    let rng = SeededRng::new(16);
    let grid = vec![0.5, 2.0, 4.0];
    let mut gaps = Vec::new();
    for n in [100, 1000] {
        let study = ClusterwiseStudy {
            kind: SweepKind::Shift,
            grid: grid.clone(),
            n_calibration: n,
            replicates: 2000,
            alpha: 0.1,
        };
        let points = clusterwise_study(&study, &rng.substream(&format!("n:{n}"))).unwrap();
        let mut gap: f64 = 0.0;
        for p in &points {
            assert!(p.empirical >= p.mixture_bound - 3.0 * p.stderr, "{p:?}");
            assert!(p.empirical >= p.tv_bound - 3.0 * p.stderr, "{p:?}");
            // the KS bound from large samples of the three components
            let mut s = rng.substream(&format!("ks:{n}:{}", p.param));
            let samples: Vec<Vec<f64>> = SweepKind::Shift
                .components(p.param)
                .iter()
                .map(|&(mu, sigma)| (0..4000).map(|_| (mu + sigma * s.normal()).abs()).collect())
                .collect();
            let ks = clusterwise_bound(&samples, p.class, 0.1).unwrap();
            assert!(p.empirical >= ks - 3.0 * p.stderr - 0.03, "{p:?} vs {ks}");
            gap = gap.max((p.empirical - p.quantile_matched).abs());
        }
        gaps.push(gap);
    }
    assert!(gaps[1] < 0.01, "{gaps:?}");
    assert!(gaps[1] <= gaps[0] + 0.005, "{gaps:?}");
}

#[test]
fn bootstrap_ci_straddles_zero_for_identical_classes() {
    let root = SeededRng::new(17);
    let seeds = 60u64;
    let straddles = (0..seeds)
        .filter(|&r| {
            let mut s = root.replicate(r);
            let a: Vec<f64> = (0..100).map(|_| s.normal()).collect();
            let b: Vec<f64> = (0..100).map(|_| s.normal()).collect();
            !bootstrap_quantile_test(&a, &b, 0.1, 1000, 0.05, &s.substream("bootstrap")).unwrap().excludes_zero
        })
        .count();
    assert!(straddles as f64 >= 0.95 * seeds as f64 - 3.0 * (0.05 * 0.95 * seeds as f64).sqrt(), "{straddles}");
}
