//! The calibrate / predict / evaluate / monitor commands.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::calibrate::{band_for, Calibration, ConformalBand, PredictionSet};
use crate::cluster::{composite_cluster, size_threshold_cluster, ClusterMap, Hierarchy, DEFAULT_EMBED_LEVELS};
use crate::conditional::{equal_frequency_bins, mondrian_fit_with, BinRule};
use crate::data::{Dataset, Responses, TaskKind};
use crate::error::{Error, Result};
use crate::martingale::{monitor, Betting, CalibrationMode, MartingaleState};
use crate::metrics::{relative_width, EvalReport};
use crate::models::{BaggedKnn, KnnModel, OracleModel, Regressor, RidgeModel};
use crate::resample::{oob_band_from_errors, oob_errors, tcp_predict_set, CrossFit, FoldPlan, KnnRefitter, KnnSoftmaxRefitter, Refitter, RidgeRefitter};
use crate::rng::SeededRng;
use crate::scores::{aps_score, raps_score, softmax_score, zero_one_score, ClassProbs, RapsConfig, RegressionOutputs, RegressionScore};
use crate::synthlab::experiments::{monitor_table, Table};
use crate::synthlab::{gaussian_interval, Family, FeatureLaw, GeneratorSpec, Noise};

use super::config::Config;

const STRATEGIES: &[&str] = &[
    "marginal",
    "mondrian",
    "cluster-score",
    "cluster-hierarchy",
    "ccp",
    "jackknife+",
    "cv+",
    "oob",
    "tcp",
];

const CALIBRATION_FILE: &str = "calibration.csv";

fn data_err(msg: impl Into<String>) -> Error {
    Error::invalid(msg)
}

// ------------------------------------------------------------------- data

/// Training and calibration data of one run.
struct RunData {
    train: Dataset,
    calibration: Dataset,
    oracle: Option<OracleModel>,
    kind: TaskKind,
    n_classes: usize,
}

impl RunData {
    /// Training and calibration rows together, for the resampling strategies.
    fn learning(&self) -> Result<Dataset> {
        concat(&self.train, &self.calibration, self.n_classes)
    }
}

fn relabel(data: &Dataset, n_classes: usize) -> Result<Dataset> {
    match data.responses() {
        Responses::Labels { labels, .. } => Dataset::new(
            data.features().to_vec(),
            data.dim(),
            Responses::Labels {
                labels: labels.clone(),
                n_classes,
            },
        ),
        Responses::Real(_) => Ok(data.clone()),
    }
}

fn concat(a: &Dataset, b: &Dataset, n_classes: usize) -> Result<Dataset> {
    let mut features = a.features().to_vec();
    features.extend_from_slice(b.features());
    let responses = match (a.responses(), b.responses()) {
        (Responses::Real(x), Responses::Real(y)) => Responses::Real(x.iter().chain(y).copied().collect()),
        (Responses::Labels { labels: x, .. }, Responses::Labels { labels: y, .. }) => Responses::Labels {
            labels: x.iter().chain(y).copied().collect(),
            n_classes,
        },
        _ => return Err(data_err("training and calibration files mix regression and classification")),
    };
    Dataset::new(features, a.dim(), responses)
}

fn generator_from(cfg: &Config) -> Result<GeneratorSpec> {
    let family_name = cfg.choice(
        "generator.family",
        &["type1", "type2", "type3", "type4", "example47", "expmean", "triangular"],
        "type2",
    )?;
    let family = match family_name {
        "type1" => Family::Type1 {
            mean: cfg.get_or("generator.mean", 0.0)?,
            sigma: cfg.get_or("generator.sigma", 1.0)?,
            slope: cfg.get_or("generator.slope", 1.0)?,
        },
        "type2" => Family::Type2 {
            cv: cfg.get_or("generator.cv", 0.1)?,
        },
        "type3" => Family::Type3 {
            sigma: cfg.get_or("generator.sigma", 0.5)?,
            slope: cfg.get_or("generator.slope", 2.0)?,
        },
        "type4" => Family::Type4,
        "example47" => Family::Example47,
        "expmean" => Family::ExpMean,
        _ => Family::Triangular {
            base: cfg.get_or("generator.base", 1.0)?,
            slope: cfg.get_or("generator.slope", 1.0)?,
        },
    };
    let mut spec = GeneratorSpec::new(family, cfg.get_or("generator.dim", 1)?);
    if let Some(noise) = cfg.raw("generator.noise") {
        spec = spec.with_noise(
            Noise::parse(noise).ok_or_else(|| Error::config("generator.noise", format!("unknown noise `{noise}`")))?,
        );
    }
    if matches!(family, Family::Type2 { .. } | Family::Triangular { .. }) && cfg.raw("generator.dim").is_none() {
        spec = spec.with_features(FeatureLaw::UniformCube { lo: 1.0, hi: 10.0 });
    }
    spec.validate().map_err(|e| Error::config("generator.family", e.to_string()))?;
    Ok(spec)
}

fn load_data(cfg: &Config, rng: &SeededRng) -> Result<RunData> {
    let split_fraction: f64 = cfg.get_or("data.split", 0.5)?;
    if !(split_fraction > 0.0 && split_fraction < 1.0) {
        return Err(Error::config("data.split", "training fraction must lie in (0, 1)"));
    }
    let halves = |full: &Dataset| -> Result<(Dataset, Dataset)> {
        let (train, cal, _) = full.split((split_fraction, 1.0 - split_fraction, 0.0), &mut rng.substream("split"))?;
        Ok((train, cal))
    };
    let (train, calibration, oracle) = match (cfg.path("data.train")?, cfg.path("data.calibration")?, cfg.path("data.path")?) {
        (Some(t), Some(c), None) => (Dataset::from_csv_path(t)?, Dataset::from_csv_path(c)?, None),
        (None, None, Some(p)) => {
            let (t, c) = halves(&Dataset::from_csv_path(p)?)?;
            (t, c, None)
        }
        (None, None, None) if cfg.raw("generator.family").is_some() => {
            let spec = generator_from(cfg)?;
            let n: usize = cfg.get_or("generator.n", 1000)?;
            let sample = spec.generate(n, &mut rng.substream("generator"))?;
            let (t, c) = halves(&sample.data)?;
            (t, c, Some(sample.oracle))
        }
        _ => {
            return Err(Error::config(
                "data.path",
                "give either data.path, both data.train and data.calibration, or generator.family",
            ))
        }
    };
    if train.dim() != calibration.dim() {
        return Err(Error::LengthMismatch {
            expected: train.dim(),
            actual: calibration.dim(),
        });
    }
    if train.kind() != calibration.kind() {
        return Err(data_err("training and calibration files mix regression and classification"));
    }
    if train.is_empty() || calibration.is_empty() {
        return Err(Error::EmptySample);
    }
    let kind = train.kind();
    let mut n_classes = 0;
    if kind == TaskKind::Classification {
        let seen = train.labels()?.1.max(calibration.labels()?.1);
        n_classes = cfg.get_or("data.n_classes", seen)?;
        if n_classes < seen {
            return Err(Error::config("data.n_classes", format!("labels up to {seen} occur in the data")));
        }
    }
    Ok(RunData {
        train: relabel(&train, n_classes)?,
        calibration: relabel(&calibration, n_classes)?,
        oracle,
        kind,
        n_classes,
    })
}

/// Rows of a CSV with `x1..xd` columns; other columns are ignored.
fn read_features(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers = rdr.headers()?.clone();
    let cols = (1..=dim)
        .map(|j| {
            headers.iter().position(|h| h == format!("x{j}")).ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing feature column x{j} (model expects {dim} features)"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if headers.iter().any(|h| h.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()).is_some_and(|j| j > dim)) {
        return Err(Error::Parse {
            line: 1,
            message: format!("more feature columns than the {dim} the model was trained on"),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = cols
            .iter()
            .map(|&c| {
                let raw = rec.get(c).unwrap_or("");
                raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("cannot parse feature `{raw}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Values of one named column.
fn read_column(path: &Path, name: &str) -> Result<Vec<String>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let col = rdr.headers()?.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("{}: missing column `{name}`", path.display()),
    })?;
    rdr.records()
        .map(|r| {
            let r = r?;
            Ok(r.get(col).unwrap_or("").to_string())
        })
        .collect()
}

fn parse_num(raw: &str, what: &str, line: usize) -> Result<f64> {
    raw.parse().map_err(|_| Error::Parse {
        line: line as u64,
        message: format!("{what}: cannot parse `{raw}`"),
    })
}

fn parse_label(raw: &str, line: usize) -> Result<usize> {
    raw.parse::<usize>().ok().filter(|&l| l >= 1).map(|l| l - 1).ok_or_else(|| Error::Parse {
        line: line as u64,
        message: format!("expected a label >= 1, got `{raw}`"),
    })
}

// ------------------------------------------------------------------ models

enum ClassScore {
    ZeroOne,
    Softmax,
    Aps { randomized: bool },
    Raps(RapsConfig),
}

enum Scoring {
    Regression(RegressionScore),
    Classification(ClassScore),
}

/// Fitted model plus the scoring rule of one run.
struct Pipeline {
    alpha: f64,
    strict: bool,
    scoring: Scoring,
    regressor: Option<Box<dyn Regressor>>,
    classifier: Option<(KnnModel, f64)>,
    n_classes: usize,
}

impl Pipeline {
    fn new(cfg: &Config, data: &RunData, rng: &SeededRng) -> Result<Self> {
        let alpha: f64 = cfg.get_or("alpha", 0.1)?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::config("alpha", format!("{alpha} is not in (0, 1)")));
        }
        let strict = cfg.get_or("strict", true)?;
        let k: usize = cfg.get_or("model.k", 5)?;
        match data.kind {
            TaskKind::Regression => {
                let name = cfg.choice("score", &["residual", "signed", "normalized", "standardized", "interval"], "residual")?;
                let score = RegressionScore::parse(name).expect("validated above");
                let kind = cfg.choice("model.kind", &["knn", "ridge", "bagged-knn", "oracle"], "knn")?;
                let regressor: Box<dyn Regressor> = match kind {
                    "knn" => {
                        let mut m = KnnModel::fit(&data.train, k.min(data.train.len()))
                            .map_err(|e| Error::config("model.k", e.to_string()))?;
                        if score == RegressionScore::Interval {
                            m.interval_levels = Some((alpha / 2.0, 1.0 - alpha / 2.0));
                        }
                        Box::new(m)
                    }
                    "ridge" => Box::new(RidgeModel::fit(&data.train, cfg.get_or("model.penalty", 1.0)?)?),
                    "bagged-knn" => Box::new(BaggedKnn::fit(
                        &data.train,
                        k,
                        cfg.get_or("model.bags", BaggedKnn::DEFAULT_BAGS)?,
                        &mut rng.substream("bags"),
                    )?),
                    _ => Box::new(
                        data.oracle
                            .clone()
                            .ok_or_else(|| Error::config("model.kind", "the oracle model needs generator.family"))?,
                    ),
                };
                Ok(Self {
                    alpha,
                    strict,
                    scoring: Scoring::Regression(score),
                    regressor: Some(regressor),
                    classifier: None,
                    n_classes: 0,
                })
            }
            TaskKind::Classification => {
                cfg.choice("model.kind", &["knn"], "knn")?;
                let name = cfg.choice("score", &["zero-one", "softmax", "aps", "raps"], "softmax")?;
                let randomized = cfg.get_or("score.randomized", false)?;
                let score = match name {
                    "zero-one" => ClassScore::ZeroOne,
                    "softmax" => ClassScore::Softmax,
                    "aps" => ClassScore::Aps { randomized },
                    _ => ClassScore::Raps(
                        RapsConfig::new(cfg.get_or("score.lambda", 0.01)?, cfg.get_or("score.k_reg", 1)?, randomized)
                            .map_err(|e| Error::config("score.lambda", e.to_string()))?,
                    ),
                };
                let model = KnnModel::fit(&data.train, k.min(data.train.len()))
                    .map_err(|e| Error::config("model.k", e.to_string()))?;
                Ok(Self {
                    alpha,
                    strict,
                    scoring: Scoring::Classification(score),
                    regressor: None,
                    classifier: Some((model, cfg.get_or("model.laplace", 1.0)?)),
                    n_classes: data.n_classes,
                })
            }
        }
    }

    fn regression_score(&self) -> Result<RegressionScore> {
        match self.scoring {
            Scoring::Regression(s) => Ok(s),
            Scoring::Classification(_) => Err(Error::config("strategy", "this strategy needs regression data")),
        }
    }

    fn outputs(&self, x: &[f64]) -> Result<RegressionOutputs> {
        let model = self.regressor.as_ref().expect("regression pipeline");
        let out = model.outputs(x)?;
        match self.scoring {
            Scoring::Regression(RegressionScore::Interval) if out.lower.is_none() => gaussian_interval(&out, self.alpha),
            _ => Ok(out),
        }
    }

    fn probs(&self, x: &[f64]) -> Result<ClassProbs> {
        let (model, laplace) = self.classifier.as_ref().expect("classification pipeline");
        model.class_probs(x, self.n_classes, *laplace)
    }

    /// Score of every candidate label; randomized scores share one draw.
    fn label_scores(&self, x: &[f64], rng: &SeededRng) -> Result<Vec<f64>> {
        let probs = self.probs(x)?;
        (0..self.n_classes).map(|y| self.class_score(&probs, y, rng)).collect()
    }

    fn class_score(&self, probs: &ClassProbs, y: usize, rng: &SeededRng) -> Result<f64> {
        let Scoring::Classification(kind) = &self.scoring else {
            unreachable!("classification pipeline")
        };
        match kind {
            ClassScore::ZeroOne => Ok(zero_one_score(probs.argmax(), y)),
            ClassScore::Softmax => softmax_score(probs, y),
            ClassScore::Aps { randomized } => {
                let mut r = rng.clone();
                aps_score(probs, y, randomized.then_some(&mut r))
            }
            ClassScore::Raps(cfg) => raps_score(probs, y, cfg, &mut rng.clone()),
        }
    }

    /// Scores of labelled rows; row `i` uses replicate `i` of `rng`.
    fn scores(&self, data: &Dataset, rng: &SeededRng) -> Result<Vec<f64>> {
        match data.responses() {
            Responses::Real(y) => {
                let kind = self.regression_score()?;
                data.rows().zip(y).map(|(x, &t)| kind.score(&self.outputs(x)?, t)).collect()
            }
            Responses::Labels { labels, .. } => data
                .rows()
                .zip(labels)
                .enumerate()
                .map(|(i, (x, &l))| self.class_score(&self.probs(x)?, l, &rng.replicate(i as u64)))
                .collect(),
        }
    }
}

// ------------------------------------------------------------- calibration

/// Rows of `calibration.csv`: `kind,stratum,value`.
#[derive(Debug, Default)]
struct CalibrationArtifact {
    rows: Vec<(String, String, f64)>,
}

impl CalibrationArtifact {
    fn push(&mut self, kind: &str, stratum: impl ToString, value: f64) {
        self.rows.push((kind.to_string(), stratum.to_string(), value));
    }

    fn values(&self, kind: &str) -> Vec<(&str, f64)> {
        self.rows.iter().filter(|r| r.0 == kind).map(|r| (r.1.as_str(), r.2)).collect()
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["kind", "stratum", "value"])?;
        for (k, s, v) in &self.rows {
            w.write_record([k.as_str(), s.as_str(), &v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    fn read(path: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_path(path)?;
        let mut out = Self::default();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(Error::Parse {
                    line: i as u64 + 2,
                    message: "expected kind,stratum,value".into(),
                });
            }
            out.push(&rec[0], &rec[1], parse_num(&rec[2], "value", i + 2)?);
        }
        Ok(out)
    }

    fn critical(&self, stratum: &str) -> Result<f64> {
        self.values("critical")
            .into_iter()
            .find(|(s, _)| *s == stratum)
            .map(|(_, v)| v)
            .ok_or_else(|| data_err(format!("calibration artifact has no critical score for stratum {stratum}")))
    }
}

enum Taxon {
    Label,
    Difficulty(usize),
    Feature { column: usize, n_classes: usize },
}

fn taxonomy(cfg: &Config, kind: TaskKind) -> Result<Taxon> {
    let default = if kind == TaskKind::Classification { "label" } else { "difficulty" };
    Ok(match cfg.choice("mondrian.taxonomy", &["label", "difficulty", "feature"], default)? {
        "label" if kind == TaskKind::Classification => Taxon::Label,
        "label" => return Err(Error::config("mondrian.taxonomy", "label taxonomy needs classification data")),
        "difficulty" if kind == TaskKind::Regression => Taxon::Difficulty(cfg.get_or("mondrian.bins", 3)?),
        "difficulty" => return Err(Error::config("mondrian.taxonomy", "difficulty taxonomy needs regression data")),
        _ => {
            let column: usize = cfg.require("mondrian.column")?;
            if column == 0 {
                return Err(Error::config("mondrian.column", "columns are 1-based"));
            }
            Taxon::Feature {
                column: column - 1,
                n_classes: cfg.require("mondrian.n_classes")?,
            }
        }
    })
}

fn feature_class(x: &[f64], column: usize, n_classes: usize) -> Result<usize> {
    let v = *x
        .get(column)
        .ok_or_else(|| data_err(format!("feature column {} missing", column + 1)))?;
    if v.fract() != 0.0 || v < 1.0 || v > n_classes as f64 {
        return Err(data_err(format!("feature value {v} is not a class in 1..={n_classes}")));
    }
    Ok(v as usize - 1)
}

fn spread_of(p: &Pipeline, x: &[f64]) -> Result<f64> {
    p.outputs(x)?
        .spread
        .ok_or_else(|| Error::config("mondrian.taxonomy", "difficulty bins need a model with a spread estimate (knn with k >= 2 or oracle)"))
}

fn per_stratum_criticals(
    art: &mut CalibrationArtifact,
    scores: &[f64],
    classes: &[usize],
    n: usize,
    p: &Pipeline,
) -> Result<()> {
    for (&s, &c) in scores.iter().zip(classes) {
        art.push("score", c + 1, s);
    }
    let m = mondrian_fit_with(scores, classes, n, p.alpha, p.strict)?;
    for c in 0..n {
        art.push("critical", c + 1, m.critical_score(c)?);
    }
    Ok(())
}

fn cluster_rows(art: &mut CalibrationArtifact, map: &ClusterMap, scores: &[f64], labels: &[usize], p: &Pipeline) -> Result<()> {
    for class in 0..map.n_classes() {
        art.push("cluster", class + 1, (map.cluster_of(class)? + 1) as f64);
    }
    let clusters: Vec<usize> = labels.iter().map(|&l| map.cluster_of(l)).collect::<Result<_>>()?;
    for (&s, &c) in scores.iter().zip(&clusters) {
        art.push("score", c + 1, s);
    }
    let m = mondrian_fit_with(scores, &clusters, map.n_clusters(), p.alpha, p.strict)?;
    for class in 0..map.n_classes() {
        art.push("critical", class + 1, m.critical_score(map.cluster_of(class)?)?);
    }
    Ok(())
}

fn fold_plan(cfg: &Config, n: usize, strategy: &str, rng: &SeededRng) -> Result<FoldPlan> {
    if strategy == "jackknife+" {
        return FoldPlan::leave_one_out(n);
    }
    let folds: usize = cfg.get_or("resample.folds", 5)?;
    if folds < 2 || folds > n {
        return Err(Error::config("resample.folds", format!("need 2..={n} folds, got {folds}")));
    }
    FoldPlan::random(n, folds, &mut rng.substream("folds"))
}

fn refitter(cfg: &Config) -> Result<Box<dyn Refitter>> {
    Ok(match cfg.choice("model.kind", &["knn", "ridge", "bagged-knn", "oracle"], "knn")? {
        "knn" => Box::new(KnnRefitter { k: cfg.get_or("model.k", 5)? }),
        "ridge" => Box::new(RidgeRefitter {
            penalty: cfg.get_or("model.penalty", 1.0)?,
        }),
        other => return Err(Error::config("model.kind", format!("`{other}` cannot be refit by resampling strategies"))),
    })
}

fn bagged(cfg: &Config, data: &Dataset, rng: &SeededRng) -> Result<BaggedKnn> {
    BaggedKnn::fit(
        data,
        cfg.get_or("model.k", 5)?,
        cfg.get_or("model.bags", BaggedKnn::DEFAULT_BAGS)?,
        &mut rng.substream("bags"),
    )
}

fn require_regression(data: &RunData, strategy: &str) -> Result<()> {
    if data.kind != TaskKind::Regression {
        return Err(Error::config("strategy", format!("`{strategy}` needs regression data")));
    }
    Ok(())
}

fn require_classification(data: &RunData, strategy: &str) -> Result<()> {
    if data.kind != TaskKind::Classification {
        return Err(Error::config("strategy", format!("`{strategy}` needs classification data")));
    }
    Ok(())
}

fn build_artifact(cfg: &Config, data: &RunData, p: &Pipeline, rng: &SeededRng) -> Result<CalibrationArtifact> {
    let strategy = cfg.choice("strategy", STRATEGIES, "marginal")?;
    let mut art = CalibrationArtifact::default();
    let cal = &data.calibration;
    match strategy {
        "marginal" => {
            let scores = p.scores(cal, &rng.substream("calibration-scores"))?;
            for &s in &scores {
                art.push("score", "all", s);
            }
            let c = Calibration::new(scores, p.alpha)?.with_strict(p.strict);
            art.push("critical", "all", c.critical_score()?);
        }
        "mondrian" => {
            let scores = p.scores(cal, &rng.substream("calibration-scores"))?;
            match taxonomy(cfg, data.kind)? {
                Taxon::Label => {
                    let (labels, _) = cal.labels()?;
                    per_stratum_criticals(&mut art, &scores, labels, data.n_classes, p)?;
                }
                Taxon::Difficulty(bins) => {
                    let spreads = cal.rows().map(|x| spread_of(p, x)).collect::<Result<Vec<_>>>()?;
                    let rule = equal_frequency_bins(&spreads, bins).map_err(|e| Error::config("mondrian.bins", e.to_string()))?;
                    for (j, e) in rule.edges().iter().enumerate() {
                        art.push("edge", j + 1, *e);
                    }
                    let classes: Vec<usize> = spreads.iter().map(|&s| rule.bin(s)).collect();
                    per_stratum_criticals(&mut art, &scores, &classes, rule.n_bins(), p)?;
                }
                Taxon::Feature { column, n_classes } => {
                    let classes = cal.rows().map(|x| feature_class(x, column, n_classes)).collect::<Result<Vec<_>>>()?;
                    per_stratum_criticals(&mut art, &scores, &classes, n_classes, p)?;
                }
            }
        }
        "cluster-score" | "cluster-hierarchy" => {
            require_classification(data, strategy)?;
            let scores = p.scores(cal, &rng.substream("calibration-scores"))?;
            let (labels, _) = cal.labels()?;
            let map = if strategy == "cluster-score" {
                let mut per_class = vec![Vec::new(); data.n_classes];
                for (&s, &l) in scores.iter().zip(labels) {
                    per_class[l].push(s);
                }
                let levels = cfg.list("cluster.levels")?.unwrap_or_else(|| DEFAULT_EMBED_LEVELS.to_vec());
                composite_cluster(
                    &per_class,
                    &levels,
                    cfg.get_or("cluster.size_threshold", usize::MAX)?,
                    cfg.get_or("cluster.min_obs", 1)?,
                    cfg.get_or("cluster.m", 2)?,
                    &mut rng.substream("cluster"),
                )?
            } else {
                let path = cfg.path("cluster.hierarchy")?.ok_or_else(|| Error::config("cluster.hierarchy", "missing required key"))?;
                let hier = Hierarchy::from_path(path)?;
                if hier.n_classes() != data.n_classes {
                    return Err(data_err(format!(
                        "hierarchy covers {} classes but the data has {}",
                        hier.n_classes(),
                        data.n_classes
                    )));
                }
                let mut counts = vec![0usize; data.n_classes];
                labels.iter().for_each(|&l| counts[l] += 1);
                size_threshold_cluster(&hier, &counts, cfg.require("cluster.threshold")?)?
            };
            cluster_rows(&mut art, &map, &scores, labels, p)?;
        }
        "jackknife+" | "cv+" | "ccp" => {
            require_regression(data, strategy)?;
            let learn = data.learning()?;
            let plan = fold_plan(cfg, learn.len(), strategy, rng)?;
            let cross = CrossFit::new(&learn, &plan, refitter(cfg)?.as_ref())?;
            for (i, r) in cross.residuals().iter().enumerate() {
                art.push("residual", plan.fold_of(i) + 1, *r);
            }
        }
        "oob" => {
            require_regression(data, strategy)?;
            let model = bagged(cfg, &data.learning()?, rng)?;
            for e in oob_errors(&model)? {
                art.push("residual", "oob", e);
            }
        }
        _ => require_classification(data, strategy)?,
    }
    Ok(art)
}

fn effective_config(cfg_path: &Path, seed: Option<u64>) -> Result<(Config, SeededRng)> {
    let mut cfg = Config::from_path(cfg_path)?;
    if let Some(s) = seed {
        cfg.set("seed", s);
    }
    let seed: u64 = cfg.get_or("seed", 0)?;
    cfg.set("seed", seed);
    Ok((cfg, SeededRng::new(seed)))
}

pub fn cmd_calibrate(cfg_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, rng) = effective_config(cfg_path, seed)?;
    let data = load_data(&cfg, &rng)?;
    let p = Pipeline::new(&cfg, &data, &rng)?;
    let art = build_artifact(&cfg, &data, &p, &rng)?;
    fs::create_dir_all(out_dir)?;
    art.write(&out_dir.join(CALIBRATION_FILE))?;
    let mut meta = Table::new("meta", &["key", "value"]);
    for (k, v) in cfg.entries() {
        meta.push(vec![k.to_string(), v.to_string()]);
    }
    meta.push(vec![
        "task".into(),
        match data.kind {
            TaskKind::Regression => "regression".into(),
            TaskKind::Classification => "classification".into(),
        },
    ]);
    meta.push(vec!["n_train".into(), data.train.len().to_string()]);
    meta.push(vec!["n_calibration".into(), data.calibration.len().to_string()]);
    meta.write_csv(fs::File::create(out_dir.join("meta.csv"))?)?;
    log::info!("wrote {} and meta.csv to {}", CALIBRATION_FILE, out_dir.display());
    Ok(())
}

// -------------------------------------------------------------- prediction

fn empty_band() -> ConformalBand {
    ConformalBand {
        degenerate: true,
        ..ConformalBand::new(f64::NAN, f64::NAN)
    }
}

fn write_bands(path: &Path, bands: &[ConformalBand]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "lo", "hi"])?;
    for (i, b) in bands.iter().enumerate() {
        let (lo, hi) = if b.degenerate { (f64::NAN, f64::NAN) } else { (b.lo, b.hi) };
        w.write_record([(i + 1).to_string(), lo.to_string(), hi.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn write_sets(path: &Path, sets: &[PredictionSet]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["row", "labels"])?;
    for (i, s) in sets.iter().enumerate() {
        let labels: Vec<String> = s.labels.iter().map(|l| (l + 1).to_string()).collect();
        w.write_record([(i + 1).to_string(), labels.join(";")])?;
    }
    w.flush()?;
    Ok(())
}

fn ccp_grid(cfg: &Config, learn: &Dataset) -> Result<Vec<f64>> {
    let y = learn.targets()?;
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = (hi - lo).max(1.0);
    let points: usize = cfg.get_or("ccp.grid", 400)?;
    if points < 2 {
        return Err(Error::config("ccp.grid", "need at least two grid points"));
    }
    Ok((0..points)
        .map(|i| lo - pad + (hi - lo + 2.0 * pad) * i as f64 / (points - 1) as f64)
        .collect())
}

pub fn cmd_predict(cfg_path: &Path, cal_dir: &Path, test_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, rng) = effective_config(cfg_path, seed)?;
    let data = load_data(&cfg, &rng)?;
    let p = Pipeline::new(&cfg, &data, &rng)?;
    let art = CalibrationArtifact::read(&cal_dir.join(CALIBRATION_FILE))?;
    let rows = read_features(test_path, data.train.dim())?;
    let strategy = cfg.choice("strategy", STRATEGIES, "marginal")?;
    fs::create_dir_all(out_dir)?;
    let out_path = out_dir.join("predictions.csv");
    let test_rng = rng.substream("test-scores");

    let class_critical = |label: usize| -> Result<f64> {
        match strategy {
            "marginal" => art.critical("all"),
            _ => art.critical(&(label + 1).to_string()),
        }
    };

    match (data.kind, strategy) {
        (TaskKind::Classification, "tcp") => {
            let learn = data.learning()?;
            let refit = KnnSoftmaxRefitter {
                k: cfg.get_or("model.k", 5)?,
                laplace: cfg.get_or("model.laplace", 1.0)?,
                n_classes: data.n_classes,
            };
            let sets = rows
                .iter()
                .enumerate()
                .map(|(i, x)| tcp_predict_set(&learn, x, &refit, p.alpha, false, &mut test_rng.replicate(i as u64)))
                .collect::<Result<Vec<_>>>()?;
            write_sets(&out_path, &sets)
        }
        (TaskKind::Classification, "marginal" | "mondrian" | "cluster-score" | "cluster-hierarchy") => {
            if strategy == "mondrian" {
                if let Taxon::Feature { column, n_classes } = taxonomy(&cfg, data.kind)? {
                    let sets = rows
                        .iter()
                        .enumerate()
                        .map(|(i, x)| {
                            let a = art.critical(&(feature_class(x, column, n_classes)? + 1).to_string())?;
                            let scores = p.label_scores(x, &test_rng.replicate(i as u64))?;
                            Ok(crate::calibrate::predict_set(&scores, a))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    return write_sets(&out_path, &sets);
                }
            }
            let sets = rows
                .iter()
                .enumerate()
                .map(|(i, x)| {
                    let scores = p.label_scores(x, &test_rng.replicate(i as u64))?;
                    let mut labels = Vec::new();
                    for (y, &s) in scores.iter().enumerate() {
                        if s <= class_critical(y)? {
                            labels.push(y);
                        }
                    }
                    Ok(PredictionSet {
                        labels,
                        n_classes: data.n_classes,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_sets(&out_path, &sets)
        }
        (TaskKind::Regression, "marginal" | "mondrian") => {
            let kind = p.regression_score()?;
            let taxon = if strategy == "mondrian" { Some(taxonomy(&cfg, data.kind)?) } else { None };
            let edges: Vec<f64> = art.values("edge").into_iter().map(|(_, v)| v).collect();
            let bins = BinRule::new(edges)?;
            let bands = rows
                .iter()
                .map(|x| {
                    let out = p.outputs(x)?;
                    let a = match &taxon {
                        None => art.critical("all")?,
                        Some(Taxon::Difficulty(_)) => art.critical(&(bins.bin(spread_of(&p, x)?) + 1).to_string())?,
                        Some(Taxon::Feature { column, n_classes }) => {
                            art.critical(&(feature_class(x, *column, *n_classes)? + 1).to_string())?
                        }
                        Some(Taxon::Label) => unreachable!("rejected for regression"),
                    };
                    band_for(kind, &out, a)
                })
                .collect::<Result<Vec<_>>>()?;
            write_bands(&out_path, &bands)
        }
        (TaskKind::Regression, "jackknife+" | "cv+" | "ccp") => {
            let learn = data.learning()?;
            let cross = CrossFit::new(&learn, &fold_plan(&cfg, learn.len(), strategy, &rng)?, refitter(&cfg)?.as_ref())?;
            let grid = if strategy == "ccp" { ccp_grid(&cfg, &learn)? } else { Vec::new() };
            let bands = rows
                .iter()
                .map(|x| {
                    if strategy != "ccp" {
                        return cross.plus_band(x, p.alpha);
                    }
                    let kept = cross.ccp_grid_set(x, &grid, p.alpha)?;
                    Ok(match (kept.first(), kept.last()) {
                        (Some(&lo), Some(&hi)) => ConformalBand::new(lo, hi),
                        _ => empty_band(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            write_bands(&out_path, &bands)
        }
        (TaskKind::Regression, "oob") => {
            let model = bagged(&cfg, &data.learning()?, &rng)?;
            let errors: Vec<f64> = art.values("residual").into_iter().map(|(_, v)| v).collect();
            let bands = rows
                .iter()
                .map(|x| oob_band_from_errors(model.predict_one(x)?, &errors, p.alpha))
                .collect::<Result<Vec<_>>>()?;
            write_bands(&out_path, &bands)
        }
        (_, s) => Err(Error::config("strategy", format!("`{s}` does not apply to this task"))),
    }
}

// -------------------------------------------------------------- evaluation

pub fn cmd_evaluate(predictions: &Path, truths: &Path, classes: Option<&Path>, out_dir: &Path, alpha: f64) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().from_path(predictions)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let records = rdr.records().collect::<std::result::Result<Vec<_>, _>>()?;
    let class_ids = classes
        .map(|path| {
            read_column(path, "class")?
                .iter()
                .enumerate()
                .map(|(i, v)| parse_label(v, i + 2))
                .collect::<Result<Vec<_>>>()
        })
        .transpose()?;
    let check_rows = |n: usize| -> Result<()> {
        if n != records.len() {
            return Err(Error::LengthMismatch {
                expected: records.len(),
                actual: n,
            });
        }
        Ok(())
    };
    let report = match header.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["row", "lo", "hi"] => {
            let bands = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let lo = parse_num(&r[1], "lo", i + 2)?;
                    let hi = parse_num(&r[2], "hi", i + 2)?;
                    Ok(if lo.is_nan() || hi.is_nan() {
                        empty_band()
                    } else {
                        ConformalBand::new(lo, hi)
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let y = read_column(truths, "y")?
                .iter()
                .enumerate()
                .map(|(i, v)| parse_num(v, "y", i + 2))
                .collect::<Result<Vec<_>>>()?;
            check_rows(y.len())?;
            let class_arg = match &class_ids {
                Some(c) => {
                    check_rows(c.len())?;
                    Some((c.as_slice(), c.iter().max().map_or(0, |m| m + 1)))
                }
                None => None,
            };
            let mut report = EvalReport::regions(&bands, &y, class_arg)?;
            if let Ok(r) = relative_width(&bands, &y, alpha) {
                report.push("relative_width", "all", r);
            }
            report
        }
        ["row", "labels"] => {
            let labels = read_column(truths, "label")?
                .iter()
                .enumerate()
                .map(|(i, v)| parse_label(v, i + 2))
                .collect::<Result<Vec<_>>>()?;
            check_rows(labels.len())?;
            let sets = records
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let mut ls = r[1]
                        .split(';')
                        .filter(|s| !s.is_empty())
                        .map(|s| parse_label(s, i + 2))
                        .collect::<Result<Vec<_>>>()?;
                    ls.sort_unstable();
                    Ok(ls)
                })
                .collect::<Result<Vec<_>>>()?;
            let k = sets
                .iter()
                .flatten()
                .chain(&labels)
                .max()
                .map_or(0, |m| m + 1);
            let sets: Vec<PredictionSet> = sets.into_iter().map(|labels| PredictionSet { labels, n_classes: k }).collect();
            let classes = match &class_ids {
                Some(c) => {
                    check_rows(c.len())?;
                    c.clone()
                }
                None => labels.clone(),
            };
            let kc = classes.iter().max().map_or(0, |m| m + 1);
            let mut report = EvalReport::regions(&sets, &labels, Some((&classes, kc)))?;
            let empty = sets.iter().filter(|s| s.is_empty()).count();
            report.push("empty_sets", "all", empty as f64);
            report
        }
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "predictions header must be `row,lo,hi` or `row,labels`".into(),
            })
        }
    };
    fs::create_dir_all(out_dir)?;
    report.write_csv(fs::File::create(out_dir.join("report.csv"))?)
}

// --------------------------------------------------------------- monitor

pub fn cmd_monitor(cfg_path: &Path, cal_dir: &Path, stream: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, rng) = effective_config(cfg_path, seed)?;
    let art = CalibrationArtifact::read(&cal_dir.join(CALIBRATION_FILE))?;
    let cal_scores: Vec<f64> = art.values("score").into_iter().map(|(_, v)| v).collect();
    if cal_scores.is_empty() {
        return Err(data_err("calibration artifact holds no scores to monitor against"));
    }
    let scores = read_column(stream, "score")?
        .iter()
        .enumerate()
        .map(|(i, v)| parse_num(v, "score", i + 2))
        .collect::<Result<Vec<_>>>()?;
    let betting = match cfg.choice("monitor.betting", &["mixture", "power"], "mixture")? {
        "mixture" => Betting::Mixture,
        _ => Betting::power(cfg.get_or("monitor.epsilon", 0.92)?).map_err(|e| Error::config("monitor.epsilon", e.to_string()))?,
    };
    let threshold: f64 = cfg.get_or("monitor.threshold", 20.0)?;
    let state = MartingaleState::new(betting, threshold).map_err(|e| Error::config("monitor.threshold", e.to_string()))?;
    let mode = match cfg.choice("monitor.mode", &["fixed", "online"], "fixed")? {
        "fixed" => CalibrationMode::Fixed,
        _ => CalibrationMode::OnlineAppend,
    };
    let events = monitor(
        scores,
        Calibration::new(cal_scores, cfg.get_or("alpha", 0.1)?)?,
        state,
        mode,
        rng.substream("smoothing"),
    )?;
    fs::create_dir_all(out_dir)?;
    monitor_table(&events).write_csv(fs::File::create(out_dir.join("monitor.csv"))?)
}

// ------------------------------------------------------------ experiments

pub fn cmd_experiment(recipe: &str, out_dir: &Path, seed: u64) -> Result<()> {
    let output = crate::synthlab::experiments::run_recipe(recipe, seed)?;
    fs::create_dir_all(out_dir)?;
    for t in &output.tables {
        t.write_csv(fs::File::create(out_dir.join(format!("{}.csv", t.name)))?)?;
    }
    let mut readme = fs::File::create(out_dir.join("README.md"))?;
    readme.write_all(output.readme.as_bytes())?;
    writeln!(readme, "\nseed: {seed}")?;
    Ok(())
}
