//! Datasets, CSV ingestion and seeded train/calibration/test splits.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{ensure_finite, Error, Result};
use crate::quantile::floor_tol;
use crate::rng::SeededRng;

/// Response column of a [`Dataset`]. Class labels are 0-based in memory and
/// 1-based in files.
#[derive(Debug, Clone, PartialEq)]
pub enum Responses {
    Real(Vec<f64>),
    Labels { labels: Vec<usize>, n_classes: usize },
}

impl Responses {
    pub fn len(&self) -> usize {
        match self {
            Responses::Real(y) => y.len(),
            Responses::Labels { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn subset(&self, rows: &[usize]) -> Responses {
        match self {
            Responses::Real(y) => Responses::Real(rows.iter().map(|&i| y[i]).collect()),
            Responses::Labels { labels, n_classes } => Responses::Labels {
                labels: rows.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Regression,
    Classification,
}

/// Row-major feature matrix plus responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dim: usize,
    responses: Responses,
}

impl Dataset {
    pub fn new(features: Vec<f64>, dim: usize, responses: Responses) -> Result<Self> {
        let n = responses.len();
        if features.len() != n * dim {
            return Err(Error::LengthMismatch {
                expected: n * dim,
                actual: features.len(),
            });
        }
        ensure_finite("features", &features)?;
        match &responses {
            Responses::Real(y) => ensure_finite("responses", y)?,
            Responses::Labels { labels, n_classes } => {
                if let Some(&label) = labels.iter().find(|&&l| l >= *n_classes) {
                    return Err(Error::LabelOutOfRange {
                        label,
                        n_classes: *n_classes,
                    });
                }
            }
        }
        Ok(Self {
            features,
            dim,
            responses,
        })
    }

    pub fn regression(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::LengthMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(rows.concat(), dim, Responses::Real(y))
    }

    pub fn classification(rows: &[Vec<f64>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::LengthMismatch {
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(rows.concat(), dim, Responses::Labels { labels, n_classes })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> TaskKind {
        match self.responses {
            Responses::Real(_) => TaskKind::Regression,
            Responses::Labels { .. } => TaskKind::Classification,
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn responses(&self) -> &Responses {
        &self.responses
    }

    /// Real responses, or an error for a classification set.
    pub fn targets(&self) -> Result<&[f64]> {
        match &self.responses {
            Responses::Real(y) => Ok(y),
            Responses::Labels { .. } => Err(Error::invalid("expected real responses, found class labels")),
        }
    }

    pub fn labels(&self) -> Result<(&[usize], usize)> {
        match &self.responses {
            Responses::Labels { labels, n_classes } => Ok((labels, *n_classes)),
            Responses::Real(_) => Err(Error::invalid("expected class labels, found real responses")),
        }
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        Dataset {
            features,
            dim: self.dim,
            responses: self.responses.subset(rows),
        }
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    /// Reads a header-first CSV with columns `x1..xd` and either `y` or
    /// `label` (integer ≥ 1). Column order is free; other columns are ignored.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let mut feature_cols: Vec<(usize, usize)> = Vec::new();
        let mut y_col = None;
        let mut label_col = None;
        for (pos, name) in headers.iter().enumerate() {
            if name == "y" {
                y_col = Some(pos);
            } else if name == "label" {
                label_col = Some(pos);
            } else if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
                if idx >= 1 {
                    feature_cols.push((idx, pos));
                }
            }
        }
        feature_cols.sort_unstable();
        for (expect, &(idx, _)) in (1..).zip(&feature_cols) {
            if idx != expect {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("feature columns must be x1..xd without gaps; missing x{expect}"),
                });
            }
        }
        let response_col = match (y_col, label_col) {
            (Some(_), Some(_)) => {
                return Err(Error::Parse {
                    line: 1,
                    message: "both `y` and `label` columns present".into(),
                })
            }
            (None, None) => {
                return Err(Error::Parse {
                    line: 1,
                    message: "missing response column `y` or `label`".into(),
                })
            }
            (Some(c), None) | (None, Some(c)) => c,
        };
        let classification = label_col.is_some();
        let dim = feature_cols.len();
        let mut features = Vec::new();
        let mut y = Vec::new();
        let mut labels = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let field = |pos: usize, name: &str| -> Result<&str> {
                match record.get(pos) {
                    Some(s) if !s.is_empty() => Ok(s),
                    _ => Err(Error::Parse {
                        line,
                        message: format!("missing field `{name}`"),
                    }),
                }
            };
            let number = |pos: usize, name: &str| -> Result<f64> {
                let raw = field(pos, name)?;
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    line,
                    message: format!("field `{name}`: cannot parse `{raw}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        message: format!("field `{name}`: non-finite value `{raw}`"),
                    });
                }
                Ok(v)
            };
            for &(idx, pos) in &feature_cols {
                features.push(number(pos, &format!("x{idx}"))?);
            }
            if classification {
                let raw = field(response_col, "label")?;
                let l: usize = raw.parse().ok().filter(|&l| l >= 1).ok_or_else(|| Error::Parse {
                    line,
                    message: format!("field `label`: expected an integer >= 1, got `{raw}`"),
                })?;
                labels.push(l - 1);
            } else {
                y.push(number(response_col, "y")?);
            }
        }
        let responses = if classification {
            let n_classes = labels.iter().max().map_or(0, |m| m + 1);
            Responses::Labels { labels, n_classes }
        } else {
            Responses::Real(y)
        };
        Self::new(features, dim, responses)
    }

    /// Writes the dataset in the format read by [`Dataset::from_csv`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("x{j}")).collect();
        header.push(match self.kind() {
            TaskKind::Regression => "y".into(),
            TaskKind::Classification => "label".into(),
        });
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            rec.push(match &self.responses {
                Responses::Real(y) => y[i].to_string(),
                Responses::Labels { labels, .. } => (labels[i] + 1).to_string(),
            });
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Row indices of the three partitions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub calibration: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.calibration.len(), self.test.len())
    }
}

/// Seeded random partition. Each part gets `floor(n·fraction)` rows and the
/// remainder goes to training.
pub fn split(n_rows: usize, fractions: (f64, f64, f64), rng: &mut SeededRng) -> Result<Split> {
    let (ft, fc, fs) = fractions;
    let parts = [ft, fc, fs];
    if parts.iter().any(|f| !f.is_finite() || *f < 0.0) || ((ft + fc + fs) - 1.0).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "split fractions must be nonnegative and sum to 1, got ({ft}, {fc}, {fs})"
        )));
    }
    let nonzero = parts.iter().filter(|&&f| f > 0.0).count();
    if n_rows < nonzero {
        return Err(Error::invalid(format!(
            "{n_rows} rows cannot fill {nonzero} nonempty partitions"
        )));
    }
    let alloc = |f: f64| floor_tol(n_rows as f64 * f) as usize;
    let n_cal = alloc(fc);
    let n_test = alloc(fs);
    let mut n_train = n_rows - n_cal - n_test;
    let (mut n_cal, mut n_test) = (n_cal, n_test);
    // a nonzero fraction never yields an empty part
    for (frac, size) in [(fc, &mut n_cal), (fs, &mut n_test)] {
        if frac > 0.0 && *size == 0 {
            *size = 1;
            n_train -= 1;
        }
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(rng);
    let test = order.split_off(n_rows - n_test);
    let calibration = order.split_off(n_train);
    Ok(Split {
        train: order,
        calibration,
        test,
    })
}

impl Dataset {
    pub fn split(&self, fractions: (f64, f64, f64), rng: &mut SeededRng) -> Result<(Dataset, Dataset, Dataset)> {
        let s = split(self.len(), fractions, rng)?;
        Ok((self.subset(&s.train), self.subset(&s.calibration), self.subset(&s.test)))
    }
}
