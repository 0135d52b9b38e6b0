//! Reproducible simulation recipes. Every recipe is a pure function of its
//! seed: replicates draw from named substreams and are collected in order,
//! so results do not depend on the thread count.

use std::f64::consts::SQRT_2;
use std::io::Write;

use rayon::prelude::*;

use crate::calibrate::Calibration;
use crate::cluster::{mixture_bound, quantile_matched_coverage, tv_distance_numeric, Cdf, MixtureSpec};
use crate::conditional::equal_frequency_bins;
use crate::error::{Error, Result};
use crate::martingale::{monitor, Betting, CalibrationMode, MartingaleState, MonitorEvent};
use crate::models::{Regressor, RidgeModel};
use crate::rng::SeededRng;
use crate::scores::{RegressionOutputs, RegressionScore};
use crate::special::{normal_cdf, normal_pdf};

use super::diagnostics::{beta_coverage_band, ks_critical_two_sample, pivotality_check};
use super::generators::{Family, FeatureLaw, GeneratorSpec, Noise};
use super::misspec::{gaussian_interval, misspecify, Misspec};

/// Names accepted by [`run_recipe`].
pub const RECIPES: &[&str] = &[
    "beta_band",
    "illustration",
    "table4_1",
    "table4_2",
    "misspec_sweep",
    "clusterwise_sweep",
    "pivotality",
    "martingale_demo",
];

/// A named CSV table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tables plus a README describing their columns.
#[derive(Debug, Clone, PartialEq)]
pub struct RecipeOutput {
    pub tables: Vec<Table>,
    pub readme: String,
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn run_recipe(name: &str, seed: u64) -> Result<RecipeOutput> {
    let rng = SeededRng::new(seed);
    match name {
        "beta_band" => beta_band_recipe(&BetaBandStudy::default(), &rng),
        "illustration" => illustration_recipe(&rng),
        "table4_1" => bin_table_recipe("table4_1", &BinStudy::oracle_table(), &rng),
        "table4_2" => bin_table_recipe("table4_2", &BinStudy::misspecified_table(), &rng),
        "misspec_sweep" => misspec_sweep_recipe(&rng),
        "clusterwise_sweep" => clusterwise_recipe(&rng),
        "pivotality" => pivotality_recipe(&rng),
        "martingale_demo" => martingale_recipe(&rng),
        other => Err(Error::config(
            "recipe",
            format!("unknown recipe `{other}`; available: {}", RECIPES.join(", ")),
        )),
    }
}

// ---------------------------------------------------------------- beta band

/// Coverage of split conformal regression over resampled calibration sets,
/// compared with the Beta law of the attained coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaBandStudy {
    pub max_calibration: usize,
    pub replicates: usize,
    pub test_size: usize,
    pub train_size: usize,
    pub alpha: f64,
    pub band: f64,
    pub ridge_penalty: f64,
}

impl Default for BetaBandStudy {
    fn default() -> Self {
        Self {
            max_calibration: 500,
            replicates: 100,
            test_size: 10_000,
            train_size: 500,
            alpha: 0.1,
            band: 0.9,
            ridge_penalty: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaBandRow {
    pub n: usize,
    pub band_lo: f64,
    pub band_hi: f64,
    pub mean_coverage: f64,
    pub inside_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaBandResult {
    pub rows: Vec<BetaBandRow>,
    /// Fraction of all empirical coverages inside their band.
    pub inside_fraction: f64,
}

fn residual_scores(model: &impl Regressor, data: &crate::data::Dataset) -> Result<Vec<f64>> {
    let y = data.targets()?;
    data.rows()
        .zip(y)
        .map(|(x, &t)| Ok(RegressionScore::Residual.score(&model.outputs(x)?, t)?))
        .collect()
}

pub fn beta_band_study(study: &BetaBandStudy, rng: &SeededRng) -> Result<BetaBandResult> {
    let spec = GeneratorSpec::new(Family::ExpMean, 5);
    let train = spec.generate(study.train_size, &mut rng.substream("train"))?;
    let model = RidgeModel::fit(&train.data, study.ridge_penalty)?;
    let rows = (1..=study.max_calibration)
        .into_par_iter()
        .map(|n| {
            let mut stream = rng.substream(&format!("size:{n}"));
            let test = spec.generate(study.test_size, &mut stream)?;
            let mut test_scores = residual_scores(&model, &test.data)?;
            test_scores.sort_by(f64::total_cmp);
            let (lo, hi) = beta_coverage_band(n, study.alpha, study.band)?;
            let mut inside = 0usize;
            let mut total = 0.0;
            for _ in 0..study.replicates {
                let cal = spec.generate(n, &mut stream)?;
                let critical = Calibration::new(residual_scores(&model, &cal.data)?, study.alpha)?.critical_score()?;
                let coverage = test_scores.partition_point(|&s| s <= critical) as f64 / test_scores.len() as f64;
                total += coverage;
                if coverage >= lo && coverage <= hi {
                    inside += 1;
                }
            }
            Ok(BetaBandRow {
                n,
                band_lo: lo,
                band_hi: hi,
                mean_coverage: total / study.replicates as f64,
                inside_fraction: inside as f64 / study.replicates as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let inside_fraction = rows.iter().map(|r| r.inside_fraction).sum::<f64>() / rows.len() as f64;
    Ok(BetaBandResult { rows, inside_fraction })
}

fn beta_band_recipe(study: &BetaBandStudy, rng: &SeededRng) -> Result<RecipeOutput> {
    let result = beta_band_study(study, rng)?;
    let mut per_size = Table::new("beta_band", &["n", "mean_coverage", "band_lo", "band_hi", "inside_fraction"]);
    for r in &result.rows {
        per_size.push(vec![
            r.n.to_string(),
            fmt(r.mean_coverage),
            fmt(r.band_lo),
            fmt(r.band_hi),
            fmt(r.inside_fraction),
        ]);
    }
    let mut summary = Table::new("beta_band_summary", &["metric", "value"]);
    summary.push(vec!["inside_fraction".into(), fmt(result.inside_fraction)]);
    let readme = format!(
        "# beta_band\n\n\
         Split conformal regression (ridge mean model, absolute residual score) on \
         five normal features with an exponential response whose mean is the \
         absolute feature mean. For every calibration size n = 1..{max}, {reps} \
         calibration sets are drawn and the coverage on one fixed test set of \
         {test} points is recorded at alpha = {alpha}.\n\n\
         beta_band.csv\n\
         - n: calibration size\n\
         - mean_coverage: average empirical coverage over the calibration sets\n\
         - band_lo, band_hi: central {band} interval of the Beta law of the attained coverage\n\
         - inside_fraction: fraction of empirical coverages inside [band_lo, band_hi]\n\n\
         beta_band_summary.csv\n\
         - inside_fraction: the same fraction pooled over all sizes\n",
        max = study.max_calibration,
        reps = study.replicates,
        test = study.test_size,
        alpha = study.alpha,
        band = study.band,
    );
    Ok(RecipeOutput {
        tables: vec![per_size, summary],
        readme,
    })
}

// ------------------------------------------------------------- illustration

/// Monte Carlo coverage of the set `{1..17}` under uniform draws from `{1..20}`.
pub fn illustration_coverage(draws: usize, rng: &mut SeededRng) -> f64 {
    let hits = (0..draws).filter(|_| rng.index(20) + 1 <= 17).count();
    hits as f64 / draws as f64
}

fn illustration_recipe(rng: &SeededRng) -> Result<RecipeOutput> {
    let draws = 100_000;
    let coverage = illustration_coverage(draws, &mut rng.substream("draws"));
    let mut t = Table::new("illustration", &["draws", "coverage", "population_coverage"]);
    t.push(vec![draws.to_string(), fmt(coverage), fmt(17.0 / 20.0)]);
    Ok(RecipeOutput {
        tables: vec![t],
        readme: "# illustration\n\n\
                 Coverage of the prediction set {1, ..., 17} when the truth is uniform on \
                 {1, ..., 20}.\n\n\
                 illustration.csv\n\
                 - draws: number of simulated truths\n\
                 - coverage: fraction of draws inside the set\n\
                 - population_coverage: exact population value\n"
            .into(),
    })
}

// --------------------------------------------------------- binned coverage

/// Per-bin coverage of marginal split conformal predictors whose bins are
/// equal-frequency classes of the model's spread estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStudy {
    pub generator: GeneratorSpec,
    pub misspec: Option<Misspec>,
    pub scores: Vec<RegressionScore>,
    pub n_calibration: usize,
    pub test_sets: usize,
    pub test_size: usize,
    pub n_bins: usize,
    pub alpha: f64,
}

impl BinStudy {
    fn cv_generator(hi: f64) -> GeneratorSpec {
        GeneratorSpec::new(Family::Type2 { cv: 0.1 }, 20).with_features(FeatureLaw::UniformCube { lo: 0.0, hi })
    }

    /// Oracle mean and spread on the coefficient-of-variation family.
    pub fn oracle_table() -> Self {
        Self {
            generator: Self::cv_generator(100.0),
            misspec: None,
            scores: vec![RegressionScore::Residual, RegressionScore::Normalized],
            n_calibration: 10_000,
            test_sets: 20,
            test_size: 1000,
            n_bins: 3,
            alpha: 0.1,
        }
    }

    /// Quadratic variance misspecification centred on its fixed point.
    pub fn misspecified_table() -> Self {
        Self {
            generator: Self::cv_generator(10.0 * SQRT_2),
            misspec: Some(Misspec::QuadraticVariance),
            ..Self::oracle_table()
        }
    }
}

/// Coverage per score and bin, mean and standard deviation over test sets.
#[derive(Debug, Clone, PartialEq)]
pub struct BinCoverage {
    pub score: RegressionScore,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

fn model_outputs(
    study: &BinStudy,
    data: &crate::data::Dataset,
    oracle: &crate::models::OracleModel,
    rng: &mut SeededRng,
) -> Result<Vec<RegressionOutputs>> {
    data.rows()
        .map(|x| {
            let mut out = oracle.outputs(x)?;
            if let Some(m) = study.misspec {
                out = misspecify(&out, m, rng)?;
            }
            gaussian_interval(&out, study.alpha)
        })
        .collect()
}

pub fn bin_coverage_study(study: &BinStudy, rng: &SeededRng) -> Result<Vec<BinCoverage>> {
    let mut cal_rng = rng.substream("calibration");
    let cal = study.generator.generate(study.n_calibration, &mut cal_rng)?;
    let cal_out = model_outputs(study, &cal.data, &cal.oracle, &mut cal_rng)?;
    let cal_y = cal.data.targets()?;
    let spreads: Vec<f64> = cal_out.iter().map(|o| o.spread.unwrap_or(0.0)).collect();
    let bins = equal_frequency_bins(&spreads, study.n_bins)?;
    let criticals = study
        .scores
        .iter()
        .map(|&kind| {
            let scores = cal_out
                .iter()
                .zip(cal_y)
                .map(|(o, &y)| kind.score(o, y))
                .collect::<Result<Vec<_>>>()?;
            Calibration::new(scores, study.alpha)?.critical_score()
        })
        .collect::<Result<Vec<_>>>()?;

    // per test set: [score][bin] coverage
    let per_set = (0..study.test_sets)
        .into_par_iter()
        .map(|t| {
            let mut r = rng.substream(&format!("test:{t}"));
            let test = study.generator.generate(study.test_size, &mut r)?;
            let out = model_outputs(study, &test.data, &test.oracle, &mut r)?;
            let y = test.data.targets()?;
            let mut grid = Vec::with_capacity(study.scores.len());
            for (&kind, &critical) in study.scores.iter().zip(&criticals) {
                let mut covered = vec![0usize; bins.n_bins()];
                let mut count = vec![0usize; bins.n_bins()];
                for (o, &yy) in out.iter().zip(y) {
                    let b = bins.bin(o.spread.unwrap_or(0.0));
                    count[b] += 1;
                    if kind.score(o, yy)? <= critical {
                        covered[b] += 1;
                    }
                }
                grid.push(
                    covered
                        .iter()
                        .zip(&count)
                        .map(|(&c, &n)| if n == 0 { f64::NAN } else { c as f64 / n as f64 })
                        .collect::<Vec<_>>(),
                );
            }
            Ok(grid)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(study
        .scores
        .iter()
        .enumerate()
        .map(|(s, &score)| {
            let (mean, sd) = (0..bins.n_bins())
                .map(|b| {
                    let vals: Vec<f64> = per_set.iter().map(|g| g[s][b]).filter(|v| !v.is_nan()).collect();
                    if vals.is_empty() {
                        (f64::NAN, f64::NAN)
                    } else {
                        mean_sd(&vals)
                    }
                })
                .unzip();
            BinCoverage { score, mean, sd }
        })
        .collect())
}

fn bin_table_recipe(name: &str, study: &BinStudy, rng: &SeededRng) -> Result<RecipeOutput> {
    let result = bin_coverage_study(study, rng)?;
    let mut cols = vec!["score".to_string()];
    for b in 1..=study.n_bins {
        cols.push(format!("bin{b}_mean"));
        cols.push(format!("bin{b}_sd"));
    }
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut t = Table::new(name, &col_refs);
    for r in &result {
        let mut row = vec![r.score.name().to_string()];
        for (m, s) in r.mean.iter().zip(&r.sd) {
            row.push(fmt(*m));
            row.push(fmt(*s));
        }
        t.push(row);
    }
    let model = match study.misspec {
        None => "the oracle mean and standard deviation".to_string(),
        Some(m) => format!("the oracle mean and a {} standard deviation", m.label()),
    };
    let readme = format!(
        "# {name}\n\n\
         Normal responses with mean equal to the feature mean and coefficient of \
         variation 0.1, on {d} uniform features. The model reports {model}. \
         A marginal split conformal predictor is calibrated on {ncal} points at \
         alpha = {alpha}; coverage is measured on {sets} test sets of {size} points, \
         separately in {bins} equal-frequency bins of the estimated standard \
         deviation (bin1 lowest).\n\n\
         {name}.csv\n\
         - score: nonconformity score\n\
         - binK_mean, binK_sd: mean and standard deviation of the coverage in bin K over test sets\n",
        d = study.generator.dim,
        ncal = study.n_calibration,
        alpha = study.alpha,
        sets = study.test_sets,
        size = study.test_size,
        bins = study.n_bins,
    );
    Ok(RecipeOutput {
        tables: vec![t],
        readme,
    })
}

// ---------------------------------------------------- misspecification sweep

fn sweep_families() -> Vec<(&'static str, GeneratorSpec)> {
    vec![
        (
            "type1",
            GeneratorSpec::new(
                Family::Type1 {
                    mean: 0.0,
                    sigma: 1.0,
                    slope: 1.0,
                },
                5,
            ),
        ),
        ("type2", GeneratorSpec::new(Family::Type2 { cv: 0.1 }, 5)),
        ("type3", GeneratorSpec::new(Family::Type3 { sigma: 0.5, slope: 2.0 }, 5)),
        ("type4", GeneratorSpec::new(Family::Type4, 5)),
    ]
}

fn sweep_modes() -> Vec<Option<Misspec>> {
    vec![
        None,
        Some(Misspec::SigmaShift(0.01)),
        Some(Misspec::SigmaShift(0.1)),
        Some(Misspec::SigmaShift(1.0)),
        Some(Misspec::SigmaScale(5.0)),
        Some(Misspec::MuShiftConst(1.0)),
        Some(Misspec::MuShiftProp(1.0)),
    ]
}

fn misspec_sweep_recipe(rng: &SeededRng) -> Result<RecipeOutput> {
    let mut t = Table::new("misspec_sweep", &["family", "model", "score", "bin", "coverage_mean", "coverage_sd"]);
    for (family, generator) in sweep_families() {
        for mode in sweep_modes() {
            let label = mode.map_or("oracle".to_string(), |m| m.label());
            let study = BinStudy {
                generator: generator.clone(),
                misspec: mode,
                scores: vec![RegressionScore::Residual, RegressionScore::Interval, RegressionScore::Normalized],
                n_calibration: 5000,
                test_sets: 10,
                test_size: 1000,
                n_bins: 3,
                alpha: 0.1,
            };
            let result = bin_coverage_study(&study, &rng.substream(&format!("{family}:{label}")))?;
            for r in &result {
                for (b, (m, s)) in r.mean.iter().zip(&r.sd).enumerate() {
                    t.push(vec![
                        family.to_string(),
                        label.clone(),
                        r.score.name().to_string(),
                        (b + 1).to_string(),
                        fmt(*m),
                        fmt(*s),
                    ]);
                }
            }
        }
    }
    Ok(RecipeOutput {
        tables: vec![t],
        readme: "# misspec_sweep\n\n\
                 Conditional coverage at alpha = 0.1 for four synthetic families on five \
                 uniform features under controlled misspecification of the oracle mean \
                 and standard deviation. Bins are equal-frequency classes of the \
                 estimated standard deviation (bin 1 lowest). Intervals for the \
                 interval score are mean +/- z * sd.\n\n\
                 misspec_sweep.csv\n\
                 - family: type1 (constant mean), type2 (coefficient of variation 0.1), \
                 type3 (spread driven by the first feature), type4 (bimodal mean)\n\
                 - model: oracle, sigma-shift(l) (additive normal noise on the sd), \
                 sigma-scale(l), mu-shift-const(l), mu-shift-prop(l)\n\
                 - score: residual, interval or normalized\n\
                 - bin: variance bin\n\
                 - coverage_mean, coverage_sd: mean and standard deviation over 10 test sets of 1000\n"
            .into(),
    })
}

// -------------------------------------------------------- clusterwise sweep

/// Which parameter the clusterwise sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    /// Means `(0, x, 2x)`, unit scales.
    Shift,
    /// Zero means, scales `(1, 0.1x, 0.25x)`.
    Scale,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Shift => "shift",
            SweepKind::Scale => "scale",
        }
    }

    pub fn components(self, x: f64) -> [(f64, f64); 3] {
        match self {
            SweepKind::Shift => [(0.0, 1.0), (x, 1.0), (2.0 * x, 1.0)],
            SweepKind::Scale => [(0.0, 1.0), (0.0, 0.1 * x), (0.0, 0.25 * x)],
        }
    }

    pub fn default_grid(self) -> Vec<f64> {
        match self {
            SweepKind::Shift => (0..=20).map(|i| 0.25 * i as f64).collect(),
            SweepKind::Scale => (1..=40).map(f64::from).collect(),
        }
    }
}

/// Absolute value of `N(μ, σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedNormal {
    pub mu: f64,
    pub sigma: f64,
}

impl FoldedNormal {
    pub fn cdf(self, a: f64) -> f64 {
        if a <= 0.0 {
            return 0.0;
        }
        normal_cdf((a - self.mu) / self.sigma) - normal_cdf((-a - self.mu) / self.sigma)
    }

    pub fn pdf(self, a: f64) -> f64 {
        if a < 0.0 {
            return 0.0;
        }
        (normal_pdf((a - self.mu) / self.sigma) + normal_pdf((-a - self.mu) / self.sigma)) / self.sigma
    }

    pub fn sample(self, rng: &mut SeededRng) -> f64 {
        (self.mu + self.sigma * rng.normal()).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterwiseStudy {
    pub kind: SweepKind,
    pub grid: Vec<f64>,
    pub n_calibration: usize,
    pub replicates: usize,
    pub alpha: f64,
}

impl ClusterwiseStudy {
    pub fn new(kind: SweepKind) -> Self {
        Self {
            kind,
            grid: kind.default_grid(),
            n_calibration: 100,
            replicates: 10_000,
            alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterwisePoint {
    pub param: f64,
    pub class: usize,
    pub empirical: f64,
    pub stderr: f64,
    pub quantile_matched: f64,
    pub tv_bound: f64,
    pub mixture_bound: f64,
}

const SWEEP_WEIGHTS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

fn tv_folded(f: FoldedNormal, g: FoldedNormal) -> Result<f64> {
    let reach = |c: FoldedNormal| c.mu.abs() + 40.0 * c.sigma;
    let top = reach(f).max(reach(g));
    let mut breaks = vec![0.0, top];
    for c in [f, g] {
        for k in [-4.0, -1.0, 0.0, 1.0, 4.0] {
            let b = c.mu + k * c.sigma;
            if b > 0.0 && b < top {
                breaks.push(b);
            }
        }
    }
    Ok(tv_distance_numeric(|a| f.pdf(a), |a| g.pdf(a), &breaks, 2000)?.value)
}

/// Per-class coverage of one clusterwise predictor calibrated on the pooled
/// three-component mixture. Each replicate draws a calibration set and
/// records the exact class-conditional coverage of its critical score.
pub fn clusterwise_study(study: &ClusterwiseStudy, rng: &SeededRng) -> Result<Vec<ClusterwisePoint>> {
    let mut out = Vec::new();
    for (gi, &x) in study.grid.iter().enumerate() {
        let comps = study.kind.components(x).map(|(mu, sigma)| FoldedNormal { mu, sigma });
        if comps.iter().any(|c| !(c.sigma > 0.0)) {
            return Err(Error::invalid(format!("sweep parameter {x} gives a nonpositive scale")));
        }
        let coverages = (0..study.replicates as u64)
            .into_par_iter()
            .map(|r| {
                let mut s = rng.substream(&format!("point:{gi}")).replicate(r);
                let scores: Vec<f64> = (0..study.n_calibration)
                    .map(|_| comps[s.index(3)].sample(&mut s))
                    .collect();
                let critical = Calibration::new(scores, study.alpha)?.critical_score()?;
                Ok(comps.map(|c| c.cdf(critical)))
            })
            .collect::<Result<Vec<_>>>()?;
        let cdfs: Vec<Cdf> = comps.iter().map(|&c| std::sync::Arc::new(move |a| c.cdf(a)) as Cdf).collect();
        let mix = MixtureSpec::new(SWEEP_WEIGHTS.to_vec(), cdfs)?;
        for class in 0..3 {
            let vals: Vec<f64> = coverages.iter().map(|c| c[class]).collect();
            let (mean, sd) = mean_sd(&vals);
            let mut worst: f64 = 0.0;
            for other in 0..3 {
                if other != class {
                    worst = worst.max(tv_folded(comps[class], comps[other])?);
                }
            }
            out.push(ClusterwisePoint {
                param: x,
                class,
                empirical: mean,
                stderr: sd / (vals.len() as f64).sqrt(),
                quantile_matched: quantile_matched_coverage(&mix, class, study.alpha)?,
                tv_bound: (1.0 - study.alpha - worst).max(0.0),
                mixture_bound: mixture_bound(&SWEEP_WEIGHTS, class, study.alpha)?,
            });
        }
    }
    Ok(out)
}

fn clusterwise_recipe(rng: &SeededRng) -> Result<RecipeOutput> {
    let mut tables = Vec::new();
    for kind in [SweepKind::Shift, SweepKind::Scale] {
        let study = ClusterwiseStudy::new(kind);
        let points = clusterwise_study(&study, &rng.substream(kind.name()))?;
        let mut t = Table::new(
            &format!("clusterwise_{}", kind.name()),
            &["param", "class", "empirical", "stderr", "quantile_matched", "tv_bound", "mixture_bound"],
        );
        for p in points {
            t.push(vec![
                fmt(p.param),
                (p.class + 1).to_string(),
                fmt(p.empirical),
                fmt(p.stderr),
                fmt(p.quantile_matched),
                fmt(p.tv_bound),
                fmt(p.mixture_bound),
            ]);
        }
        tables.push(t);
    }
    Ok(RecipeOutput {
        tables,
        readme: "# clusterwise_sweep\n\n\
                 Three classes with equal weights whose scores are absolute values of \
                 normal variables are calibrated together as one cluster (100 \
                 calibration points, alpha = 0.1, 10000 replicates per parameter).\n\n\
                 clusterwise_shift.csv: means (0, x, 2x), unit standard deviations.\n\
                 clusterwise_scale.csv: zero means, standard deviations (1, 0.1x, 0.25x).\n\n\
                 Columns\n\
                 - param: x\n\
                 - class: 1, 2 or 3\n\
                 - empirical: Monte Carlo class-conditional coverage\n\
                 - stderr: its standard error\n\
                 - quantile_matched: limit coverage for large calibration sets\n\
                 - tv_bound: 1 - alpha minus the largest total variation distance to another class, floored at 0\n\
                 - mixture_bound: lower bound implied by the mixture weights alone\n"
            .into(),
    })
}

// ---------------------------------------------------------------- pivotality

/// One location-scale setting of the pivotality suite.
#[derive(Debug, Clone, PartialEq)]
pub struct PivotalityCase {
    pub name: &'static str,
    pub generator: GeneratorSpec,
}

pub fn pivotality_cases() -> Vec<PivotalityCase> {
    let features = FeatureLaw::UniformCube { lo: 1.0, hi: 10.0 };
    let cv = |noise: Noise, cv: f64| {
        GeneratorSpec::new(Family::Type2 { cv }, 1)
            .with_features(features.clone())
            .with_noise(noise)
    };
    vec![
        PivotalityCase {
            name: "normal",
            generator: cv(Noise::Normal, 0.1),
        },
        PivotalityCase {
            name: "laplace",
            generator: cv(Noise::Laplace, 0.1),
        },
        PivotalityCase {
            name: "uniform",
            generator: cv(Noise::Uniform, 0.1),
        },
        PivotalityCase {
            name: "exponential",
            generator: cv(Noise::Exponential, 1.0),
        },
        PivotalityCase {
            name: "triangular",
            generator: GeneratorSpec::new(Family::Triangular { base: 1.0, slope: 1.0 }, 1).with_features(features),
        },
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PivotalityOutcome {
    pub case: &'static str,
    pub score: RegressionScore,
    /// Largest bin-vs-marginal distance divided by its critical value.
    pub worst_ratio: f64,
    pub max_distance: f64,
    pub passes: bool,
}

pub fn pivotality_suite(n: usize, n_bins: usize, rng: &SeededRng) -> Result<Vec<PivotalityOutcome>> {
    let mut out = Vec::new();
    for case in pivotality_cases() {
        let sample = case.generator.generate(n, &mut rng.substream(case.name))?;
        let y = sample.data.targets()?;
        let outputs = sample
            .data
            .rows()
            .map(|x| sample.oracle.outputs(x))
            .collect::<Result<Vec<_>>>()?;
        let spread: Vec<f64> = outputs.iter().map(|o| o.spread.unwrap_or(0.0)).collect();
        for score in [RegressionScore::Standardized, RegressionScore::Residual] {
            let scores = outputs
                .iter()
                .zip(y)
                .map(|(o, &t)| score.score(o, t))
                .collect::<Result<Vec<_>>>()?;
            let checks = pivotality_check(&scores, &spread, n_bins)?;
            let worst_ratio = checks.iter().map(|c| c.distance / c.critical).fold(0.0, f64::max);
            out.push(PivotalityOutcome {
                case: case.name,
                score,
                worst_ratio,
                max_distance: checks.iter().map(|c| c.distance).fold(0.0, f64::max),
                passes: checks.iter().all(|c| c.passes()),
            });
        }
    }
    Ok(out)
}

fn pivotality_recipe(rng: &SeededRng) -> Result<RecipeOutput> {
    let (n, bins) = (10_000, 3);
    let results = pivotality_suite(n, bins, rng)?;
    let mut t = Table::new("pivotality", &["family", "score", "max_distance", "critical_ratio", "passes"]);
    for r in &results {
        t.push(vec![
            r.case.to_string(),
            r.score.name().to_string(),
            fmt(r.max_distance),
            fmt(r.worst_ratio),
            r.passes.to_string(),
        ]);
    }
    Ok(RecipeOutput {
        tables: vec![t],
        readme: format!(
            "# pivotality\n\n\
             For each location-scale family ({n} points, one uniform feature on [1, 10], \
             oracle mean and standard deviation), scores are split into {bins} \
             equal-frequency bins of the standard deviation and each bin is compared \
             with the pooled scores by the two-sample Kolmogorov-Smirnov distance \
             against the 99% critical value 1.63 * sqrt((m + n) / (m n)) \
             (for one bin of 3333 against 10000 points: {crit:.5}).\n\n\
             pivotality.csv\n\
             - family: noise law (normal, laplace, uniform with coefficient of variation \
             0.1; exponential with mean equal to the sd; triangular)\n\
             - score: standardized (y - mean) / sd, or the absolute residual\n\
             - max_distance: largest bin-vs-pooled distance\n\
             - critical_ratio: largest distance divided by its critical value\n\
             - passes: true when every bin lies inside the band\n",
            crit = ks_critical_two_sample(3333, 10_000),
        ),
    })
}

// ------------------------------------------------------------ martingale demo

/// Scores `|N(0,1)|` for `pre` events followed by `|N(0, scale²)|`.
pub fn change_point_stream(pre: usize, post: usize, scale: f64, rng: &mut SeededRng) -> Vec<f64> {
    (0..pre + post)
        .map(|i| {
            let s = if i < pre { 1.0 } else { scale };
            (s * rng.normal()).abs()
        })
        .collect()
}

pub fn martingale_demo(rng: &SeededRng) -> Result<Vec<MonitorEvent>> {
    let mut cal_rng = rng.substream("calibration");
    let cal: Vec<f64> = (0..500).map(|_| cal_rng.normal().abs()).collect();
    let stream = change_point_stream(500, 500, 2.0, &mut rng.substream("stream"));
    monitor(
        stream,
        Calibration::new(cal, 0.1)?,
        MartingaleState::new(Betting::Mixture, 20.0)?,
        CalibrationMode::Fixed,
        rng.substream("smoothing"),
    )
}

pub fn monitor_table(events: &[MonitorEvent]) -> Table {
    let mut t = Table::new("monitor", &["index", "p_value", "wealth", "alert"]);
    for e in events {
        t.push(vec![e.index.to_string(), fmt(e.p_value), fmt(e.wealth), e.alert.to_string()]);
    }
    t
}

fn martingale_recipe(rng: &SeededRng) -> Result<RecipeOutput> {
    let events = martingale_demo(rng)?;
    let mut t = monitor_table(&events);
    t.name = "martingale_demo".into();
    Ok(RecipeOutput {
        tables: vec![t],
        readme: "# martingale_demo\n\n\
                 A mixture conformal test martingale with alert threshold 20 monitors \
                 absolute standard normal scores against a fixed calibration set of 500. \
                 After event 500 the scores double in scale.\n\n\
                 martingale_demo.csv\n\
                 - index: event index (0-based)\n\
                 - p_value: smoothed conformal p-value\n\
                 - wealth: martingale value after the event\n\
                 - alert: whether the wealth has reached the threshold so far\n"
            .into(),
    })
}
