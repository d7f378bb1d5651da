//! Synthetic regression data, seller costs, and the CSV table format.
//!
//! Tables carry a header row with feature columns `f0..f{d-1}`, then the
//! optional columns `y` and `cost`, in that order. Values are written with
//! the shortest representation that parses back to the same `f64`.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::FeatureMatrix;
use crate::error::{Error, Result};
use crate::frank_wolfe::check_costs;

/// Deterministic generator for `(seed, stream)`. Streams with different
/// indices are independent, so buyers and experiments never share draws.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset {
    pub x: FeatureMatrix,
    pub y: Vec<f64>,
    pub coef: Vec<f64>,
    pub noise: f64,
    pub costs: Option<Vec<f64>>,
}

impl RegressionDataset {
    pub fn to_table(&self) -> LabeledTable {
        LabeledTable {
            features: self.x.clone(),
            targets: Some(self.y.clone()),
            costs: self.costs.clone(),
        }
    }
}

/// Linear-Gaussian data: unit-norm standard-normal rows (row `j` then scaled
/// by `costs[j]`), coefficients with exponential magnitude and random sign,
/// and `y = X·coef + noise·ε`.
///
/// Draw order: all of `X` row-major, the `d` coefficient magnitudes, the `d`
/// signs, then the `n` label-noise terms.
pub fn gen_gaussian_with<R: Rng>(
    rng: &mut R,
    n: usize,
    d: usize,
    noise: f64,
    costs: Option<&[f64]>,
) -> Result<RegressionDataset> {
    if n == 0 || d == 0 {
        return Err(Error::EmptyInput("gaussian data needs n, d ≥ 1"));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::invalid(format!("noise {noise} must be ≥ 0")));
    }
    let mut data: Vec<f64> = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    for row in data.chunks_exact_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    let mut x = FeatureMatrix::from_row_major(n, d, data)?;
    if let Some(c) = costs {
        x.scale_rows(c)?;
    }
    let mut coef: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
    for c in coef.iter_mut() {
        if rng.random_range(-1.0..1.0) < 0.0 {
            *c = -*c;
        }
    }
    let y = x
        .rows()
        .map(|row| {
            let eps: f64 = StandardNormal.sample(rng);
            row.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>() + noise * eps
        })
        .collect();
    Ok(RegressionDataset {
        x,
        y,
        coef,
        noise,
        costs: costs.map(<[f64]>::to_vec),
    })
}

pub fn gen_gaussian(n: usize, d: usize, noise: f64, costs: Option<&[f64]>, seed: u64) -> Result<RegressionDataset> {
    gen_gaussian_with(&mut rng_stream(seed, 0), n, d, noise, costs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CostFn {
    Sqrt,
    #[default]
    Square,
}

impl CostFn {
    pub fn apply(self, c: f64) -> f64 {
        match self {
            CostFn::Sqrt => c.sqrt(),
            CostFn::Square => c * c,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CostModel {
    pub support: Vec<f64>,
    pub cost_fn: CostFn,
    pub beta: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            support: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            cost_fn: CostFn::Square,
            beta: 0.3,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::EmptyInput("cost support is empty"));
        }
        if self.support.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::invalid("cost support values must be positive"));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(Error::invalid("noise level beta must be ≥ 0"));
        }
        Ok(())
    }
}

pub fn sample_costs_with<R: Rng>(rng: &mut R, n: usize, model: &CostModel) -> Result<Vec<f64>> {
    model.validate()?;
    let k = model.support.len();
    Ok((0..n).map(|_| model.support[rng.random_range(0..k)]).collect())
}

pub fn sample_costs(n: usize, model: &CostModel, seed: u64) -> Result<Vec<f64>> {
    sample_costs_with(&mut rng_stream(seed, 0), n, model)
}

/// `ỹ_j = y_j + β·ȳ·ε_j / h(c_j)` with `ȳ` the mean of the clean targets.
pub fn apply_cost_noise_with<R: Rng>(rng: &mut R, y: &[f64], costs: &[f64], model: &CostModel) -> Result<Vec<f64>> {
    model.validate()?;
    check_costs(costs, y.len())?;
    if y.is_empty() {
        return Ok(Vec::new());
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    Ok(y.iter()
        .zip(costs)
        .map(|(&yj, &c)| {
            let eps: f64 = StandardNormal.sample(rng);
            yj + model.beta * mean * eps / model.cost_fn.apply(c)
        })
        .collect())
}

pub fn apply_cost_noise(y: &[f64], costs: &[f64], model: &CostModel, seed: u64) -> Result<Vec<f64>> {
    apply_cost_noise_with(&mut rng_stream(seed, 0), y, costs, model)
}

/// A feature table with optional targets and costs.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTable {
    pub features: FeatureMatrix,
    pub targets: Option<Vec<f64>>,
    pub costs: Option<Vec<f64>>,
}

impl LabeledTable {
    pub fn unlabeled(features: FeatureMatrix) -> Self {
        Self {
            features,
            targets: None,
            costs: None,
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = (0..self.features.ncols()).map(|k| format!("f{k}")).collect();
        if self.targets.is_some() {
            h.push("y".into());
        }
        if self.costs.is_some() {
            h.push("cost".into());
        }
        h
    }
}

fn parse_err(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

/// Reads a table; rows and columns in errors are 1-based line numbers and
/// header names.
pub fn load_features_csv(path: impl AsRef<Path>) -> Result<LabeledTable> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?
        .iter()
        .map(str::to_string)
        .collect();

    let d = header.iter().take_while(|h| h.starts_with('f')).count();
    for (k, name) in header.iter().take(d).enumerate() {
        if *name != format!("f{k}") {
            return Err(parse_err(path, 1, name, format!("expected feature column f{k}")));
        }
    }
    if d == 0 {
        return Err(parse_err(path, 1, header.first().map_or("", |s| s), "missing feature column f0"));
    }
    let rest: Vec<&str> = header[d..].iter().map(String::as_str).collect();
    let (has_y, has_cost) = match rest.as_slice() {
        [] => (false, false),
        ["y"] => (true, false),
        ["cost"] => (false, true),
        ["y", "cost"] => (true, true),
        _ => {
            return Err(parse_err(
                path,
                1,
                &rest.join(","),
                "trailing columns must be `y`, `cost`, or `y,cost`",
            ))
        }
    };

    let mut data = Vec::new();
    let mut targets = Vec::new();
    let mut costs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        if record.len() != header.len() {
            return Err(parse_err(
                path,
                line,
                "",
                format!("ragged row: {} fields, header has {}", record.len(), header.len()),
            ));
        }
        for (k, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, &header[k], format!("not a number: {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, &header[k], "non-finite value"));
            }
            match header[k].as_str() {
                "y" if k >= d => targets.push(v),
                "cost" if k >= d => costs.push(v),
                _ => data.push(v),
            }
        }
    }
    let rows = data.len() / d;
    if rows == 0 {
        return Err(parse_err(path, 2, "", "no data rows"));
    }
    Ok(LabeledTable {
        features: FeatureMatrix::from_row_major(rows, d, data)?,
        targets: has_y.then_some(targets),
        costs: has_cost.then_some(costs),
    })
}

/// Reads the `cost` column from any table that has one.
pub fn load_costs_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let col = header
        .iter()
        .position(|h| h == "cost")
        .ok_or_else(|| parse_err(path, 1, "cost", "missing column"))?;
    let mut costs = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv {
            path: path.to_path_buf(),
            source,
        })?;
        let cell = record
            .get(col)
            .ok_or_else(|| parse_err(path, i + 2, "cost", "missing cell"))?;
        let v: f64 = cell
            .parse()
            .map_err(|_| parse_err(path, i + 2, "cost", format!("not a number: {cell:?}")))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(parse_err(path, i + 2, "cost", "cost must be positive"));
        }
        costs.push(v);
    }
    Ok(costs)
}

pub fn save_dataset_csv(path: impl AsRef<Path>, table: &LabeledTable) -> Result<()> {
    let path = path.as_ref();
    let n = table.features.nrows();
    for (name, col) in [("y", &table.targets), ("cost", &table.costs)] {
        if let Some(c) = col {
            if c.len() != n {
                return Err(Error::DimensionMismatch {
                    context: if name == "y" { "targets vs rows" } else { "costs vs rows" },
                    expected: n,
                    actual: c.len(),
                });
            }
        }
    }
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(File::create(path).map_err(io_err)?);
    let mut line = table.header().join(",");
    line.push('\n');
    out.write_all(line.as_bytes()).map_err(io_err)?;
    for (j, row) in table.features.rows().enumerate() {
        line.clear();
        let extras = table.targets.iter().chain(table.costs.iter()).map(|c| c[j]);
        for (k, v) in row.iter().copied().chain(extras).enumerate() {
            if k > 0 {
                line.push(',');
            }
            line.push_str(&v.to_string());
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_rows_are_unit_norm() {
        let ds = gen_gaussian(50, 4, 0.0, None, 3).unwrap();
        for (row, y) in ds.x.rows().zip(&ds.y) {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() <= 1e-9);
            let pred: f64 = row.iter().zip(&ds.coef).map(|(a, b)| a * b).sum();
            assert_eq!(pred, *y);
        }
    }

    #[test]
    fn unit_costs_leave_features_unchanged() {
        let plain = gen_gaussian(20, 3, 0.1, None, 11).unwrap();
        let ones = vec![1.0; 20];
        let scaled = gen_gaussian(20, 3, 0.1, Some(&ones), 11).unwrap();
        assert_eq!(plain.x, scaled.x);
        assert_eq!(plain.y, scaled.y);
    }

    #[test]
    fn cost_scaling_multiplies_rows() {
        let costs: Vec<f64> = (1..=6).map(f64::from).collect();
        let plain = gen_gaussian(6, 2, 0.0, None, 5).unwrap();
        let scaled = gen_gaussian(6, 2, 0.0, Some(&costs), 5).unwrap();
        for ((s, p), c) in scaled.x.rows().zip(plain.x.rows()).zip(&costs) {
            for (a, b) in s.iter().zip(p) {
                assert_eq!(*a, b * c);
            }
        }
    }

    #[test]
    fn generator_rejects_empty_shapes() {
        assert!(gen_gaussian(0, 3, 0.1, None, 1).is_err());
        assert!(gen_gaussian(3, 0, 0.1, None, 1).is_err());
        assert!(gen_gaussian(3, 3, -0.1, None, 1).is_err());
    }

    #[test]
    fn single_value_support() {
        let model = CostModel {
            support: vec![1.0],
            ..CostModel::default()
        };
        assert_eq!(sample_costs(7, &model, 0).unwrap(), vec![1.0; 7]);
        let empty = CostModel {
            support: vec![],
            ..CostModel::default()
        };
        assert!(sample_costs(3, &empty, 0).is_err());
    }

    #[test]
    fn cost_noise_trivial_cases() {
        let y = vec![1.0, 2.0, 3.0];
        let c = vec![1.0, 2.0, 3.0];
        let quiet = CostModel {
            beta: 0.0,
            ..CostModel::default()
        };
        assert_eq!(apply_cost_noise(&y, &c, &quiet, 1).unwrap(), y);
        let zeros = vec![0.0; 3];
        assert_eq!(apply_cost_noise(&zeros, &c, &CostModel::default(), 1).unwrap(), zeros);
        assert!(apply_cost_noise(&y, &[1.0, 0.0, 1.0], &CostModel::default(), 1).is_err());
    }

    #[test]
    fn csv_schema_dispatch_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        std::fs::write(&p, "f0,f1,y\n1,2,3\n4,5,6\n").unwrap();
        let t = load_features_csv(&p).unwrap();
        assert_eq!(t.features.nrows(), 2);
        assert_eq!(t.targets, Some(vec![3.0, 6.0]));
        assert_eq!(t.costs, None);

        std::fs::write(&p, "f0,f1\n1,2\n4\n").unwrap();
        let err = load_features_csv(&p).unwrap_err().to_string();
        assert!(err.contains("row 3") && err.contains("ragged"), "{err}");

        std::fs::write(&p, "f0,f1\n1,abc\n").unwrap();
        let err = load_features_csv(&p).unwrap_err().to_string();
        assert!(err.contains("row 2") && err.contains("column f1"), "{err}");

        std::fs::write(&p, "f0,f2\n1,2\n").unwrap();
        assert!(load_features_csv(&p).is_err());

        std::fs::write(&p, "f0,z\n1,2\n").unwrap();
        assert!(load_features_csv(&p).is_err());

        assert!(matches!(
            load_features_csv(dir.path().join("missing.csv")),
            Err(Error::Io { .. })
        ));
    }
}
