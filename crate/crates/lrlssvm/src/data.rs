//! Dataset loading, generation, normalization, and benchmark-suite layout.
//!
//! CSV convention: comma separated, `.` decimal point, no header unless
//! requested, feature columns followed by one label column. Benchmark
//! suites are directories of `train_<k>.csv` / `test_<k>.csv` pairs with
//! contiguous 1-based indices.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A binary classification dataset: N x D features plus labels in {-1,+1}.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
}

impl Dataset {
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::Data("dataset must have N >= 1 and D >= 1".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(bad) = features.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value {bad}")));
        }
        if labels.iter().any(|&t| t != 1.0 && t != -1.0) {
            return Err(Error::Data("labels must be exactly -1 or +1".into()));
        }
        Ok(Dataset { features, labels })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    /// Row n as a feature vector.
    pub fn row(&self, n: usize) -> DVector<f64> {
        self.features.row(n).transpose()
    }
}

/// How the label column encodes the two classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelConvention {
    /// Labels are -1 / +1.
    Signed,
    /// Labels are 0 / 1, mapped to -1 / +1.
    ZeroOne,
}

fn parse_label(raw: f64, convention: LabelConvention) -> Option<f64> {
    match convention {
        LabelConvention::Signed => match raw {
            v if v == 1.0 => Some(1.0),
            v if v == -1.0 => Some(-1.0),
            _ => None,
        },
        LabelConvention::ZeroOne => match raw {
            v if v == 1.0 => Some(1.0),
            v if v == 0.0 => Some(-1.0),
            _ => None,
        },
    }
}

/// Load a dataset from CSV. The last column is the label; `header` skips
/// the first line.
pub fn load_csv(
    path: impl AsRef<Path>,
    convention: LabelConvention,
    header: bool,
) -> Result<Dataset> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let skip = usize::from(header);
    for (idx, line) in text.lines().enumerate().skip(skip) {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("expected at least 2 columns, got {}", fields.len()),
            });
        }
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    msg: format!("inconsistent column count: {} vs {}", fields.len(), w),
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(fields.len() - 1);
        for f in &fields[..fields.len() - 1] {
            let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("non-numeric cell {:?}", f.trim()),
            })?;
            row.push(v);
        }
        let raw: f64 = fields[fields.len() - 1]
            .trim()
            .parse()
            .map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                msg: format!("non-numeric label {:?}", fields[fields.len() - 1].trim()),
            })?;
        let label = parse_label(raw, convention).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            msg: format!("label {raw} outside convention {convention:?}"),
        })?;
        rows.push(row);
        labels.push(label);
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("no data rows in {}", path.display())));
    }
    let n = rows.len();
    let d = rows[0].len();
    let features = DMatrix::from_fn(n, d, |r, c| rows[r][c]);
    Dataset::new(features, DVector::from_vec(labels))
}

/// Write a dataset in the CSV convention accepted by [`load_csv`] with
/// signed labels. Feature values use the shortest exact decimal form, so
/// `load_csv(write_csv(d))` round-trips bit-exactly.
pub fn write_csv(d: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for n in 0..d.n() {
        for i in 0..d.d() {
            let _ = write!(out, "{},", d.features()[(n, i)]);
        }
        let _ = writeln!(out, "{}", if d.labels()[n] > 0.0 { 1 } else { -1 });
    }
    std::fs::write(path, out).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// An ordered collection of train/test realizations sharing one feature
/// dimension.
#[derive(Debug, Clone)]
pub struct BenchmarkSuite {
    pub name: String,
    pub realizations: Vec<(Dataset, Dataset)>,
}

impl BenchmarkSuite {
    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }
}

/// Load `train_<k>.csv` / `test_<k>.csv` pairs for k = 1..R from a
/// directory. Labels are signed.
pub fn load_benchmark_suite(dir: impl AsRef<Path>) -> Result<BenchmarkSuite> {
    let dir = dir.as_ref();
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let mut realizations = Vec::new();
    let mut k = 1usize;
    loop {
        let train_path: PathBuf = dir.join(format!("train_{k}.csv"));
        let test_path: PathBuf = dir.join(format!("test_{k}.csv"));
        match (train_path.exists(), test_path.exists()) {
            (false, false) => break,
            (true, true) => {
                let train = load_csv(&train_path, LabelConvention::Signed, false)?;
                let test = load_csv(&test_path, LabelConvention::Signed, false)?;
                if train.d() != test.d() {
                    return Err(Error::Data(format!(
                        "realization {k}: train D={} vs test D={}",
                        train.d(),
                        test.d()
                    )));
                }
                realizations.push((train, test));
            }
            (has_train, _) => {
                let missing = if has_train { "test" } else { "train" };
                return Err(Error::Data(format!(
                    "realization {k}: missing {missing}_{k}.csv"
                )));
            }
        }
        k += 1;
    }
    if realizations.is_empty() {
        return Err(Error::Data(format!(
            "no train_1.csv/test_1.csv pair in {}",
            dir.display()
        )));
    }
    let d0 = realizations[0].0.d();
    if let Some(i) = realizations.iter().position(|(tr, _)| tr.d() != d0) {
        return Err(Error::Data(format!(
            "realization {} has D={}, expected {d0}",
            i + 1,
            realizations[i].0.d()
        )));
    }
    Ok(BenchmarkSuite { name, realizations })
}

/// Per-dimension standardization statistics. Shift is the mean, scale the
/// population standard deviation floored at 1e-12.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

const SCALE_FLOOR: f64 = 1e-12;

pub fn fit_normalizer(d: &Dataset) -> NormStats {
    let n = d.n() as f64;
    let mut shift = vec![0.0; d.d()];
    let mut scale = vec![0.0; d.d()];
    for i in 0..d.d() {
        let col = d.features().column(i);
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        shift[i] = mean;
        scale[i] = var.sqrt().max(SCALE_FLOOR);
    }
    NormStats { shift, scale }
}

pub fn apply_normalizer(d: &Dataset, s: &NormStats) -> Result<Dataset> {
    if s.shift.len() != d.d() || s.scale.len() != d.d() {
        return Err(Error::Dimension(format!(
            "normalizer has D={}, dataset has D={}",
            s.shift.len(),
            d.d()
        )));
    }
    let features =
        DMatrix::from_fn(d.n(), d.d(), |r, c| (d.features()[(r, c)] - s.shift[c]) / s.scale[c]);
    Dataset::new(features, d.labels().clone())
}

/// Apply normalization to a single feature vector.
pub fn normalize_point(x: &DVector<f64>, s: &NormStats) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| (x[i] - s.shift[i]) / s.scale[i])
}

/// One class of a two-class Gaussian mixture: component centers with a
/// shared isotropic variance and mixing weights summing to 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub weight_per_component: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub variance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub classes: Vec<ClassSpec>,
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<usize> {
        if self.classes.len() != 2 {
            return Err(Error::Config(format!(
                "mixture spec needs exactly 2 classes, got {}",
                self.classes.len()
            )));
        }
        let d = self
            .classes
            .first()
            .and_then(|c| c.centers.first())
            .map(|c| c.len())
            .ok_or_else(|| Error::Config("mixture class has no components".into()))?;
        for (ci, class) in self.classes.iter().enumerate() {
            if class.centers.is_empty() || class.centers.len() != class.weight_per_component.len() {
                return Err(Error::Config(format!(
                    "class {ci}: {} centers vs {} weights",
                    class.centers.len(),
                    class.weight_per_component.len()
                )));
            }
            if class.centers.iter().any(|c| c.len() != d) {
                return Err(Error::Config(format!(
                    "class {ci}: centers must all have dimension {d}"
                )));
            }
            if class.weight_per_component.iter().any(|&w| w < 0.0) {
                return Err(Error::Config(format!("class {ci}: negative mixing weight")));
            }
            let sum: f64 = class.weight_per_component.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "class {ci}: mixing weights sum to {sum}, expected 1"
                )));
            }
            if class.variance <= 0.0 {
                return Err(Error::Config(format!(
                    "class {ci}: non-positive variance {}",
                    class.variance
                )));
            }
        }
        Ok(d)
    }

    /// The two-class mixture of bivariate normals from Ripley's synthetic
    /// benchmark: per class two components with shared variance 0.03.
    /// Class -1 is centered at (-0.7, 0.3) and (0.3, 0.3), class +1 at
    /// (-0.3, 0.7) and (0.4, 0.7).
    pub fn ripley() -> Self {
        MixtureSpec {
            classes: vec![
                ClassSpec {
                    weight_per_component: vec![0.5, 0.5],
                    centers: vec![vec![-0.7, 0.3], vec![0.3, 0.3]],
                    variance: 0.03,
                },
                ClassSpec {
                    weight_per_component: vec![0.5, 0.5],
                    centers: vec![vec![-0.3, 0.7], vec![0.4, 0.7]],
                    variance: 0.03,
                },
            ],
        }
    }
}

fn sample_dataset<R: Rng>(rng: &mut R, n: usize, d: usize, spec: &MixtureSpec) -> Result<Dataset> {
    let pickers: Vec<WeightedIndex<f64>> = spec
        .classes
        .iter()
        .map(|c| {
            WeightedIndex::new(c.weight_per_component.iter().copied())
                .map_err(|e| Error::Config(format!("invalid mixing weights: {e}")))
        })
        .collect::<Result<_>>()?;
    let mut features = DMatrix::zeros(n, d);
    let mut labels = DVector::zeros(n);
    for row in 0..n {
        let class = usize::from(rng.gen_bool(0.5));
        let spec_c = &spec.classes[class];
        let comp = pickers[class].sample(rng);
        let sigma = spec_c.variance.sqrt();
        for i in 0..d {
            let normal = Normal::new(spec_c.centers[comp][i], sigma)
                .map_err(|e| Error::Config(format!("invalid normal parameters: {e}")))?;
            features[(row, i)] = normal.sample(rng);
        }
        labels[row] = if class == 0 { -1.0 } else { 1.0 };
    }
    Dataset::new(features, labels)
}

/// Draw a (train, test) pair from a two-class Gaussian mixture. Pure in
/// (seed, sizes, spec).
pub fn generate_two_class_mixture(
    seed: u64,
    n_train: usize,
    n_test: usize,
    spec: &MixtureSpec,
) -> Result<(Dataset, Dataset)> {
    let d = spec.validate()?;
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config("n_train and n_test must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let train = sample_dataset(&mut rng, n_train, d, spec)?;
    let test = sample_dataset(&mut rng, n_test, d, spec)?;
    Ok((train, test))
}
