//! Fitted-model summaries and tabular data ingestion.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("invalid parameter count: {0}")]
    ParamCount(String),
    #[error("{n} observations is fewer than the {d} free parameters")]
    TooFewObservations { n: usize, d: usize },
    #[error("duplicate coefficient name {0:?}")]
    DuplicateName(String),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("non-numeric value {value:?} in column {column:?} at line {line}")]
    NonNumeric { column: String, line: u64, value: String },
    #[error("no complete rows remain")]
    NoRows,
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed fit file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
}

/// Summary of a maximum-likelihood fit.
///
/// `covariance` is the estimated covariance of the estimates, roughly the
/// inverse of `n` times the per-observation Fisher information. `n_params`
/// counts every free parameter in the penalty and may exceed the number of
/// coefficients (an error variance, thresholds).
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    coef_names: Vec<String>,
    estimates: DVector<f64>,
    covariance: DMatrix<f64>,
    loglik: f64,
    n_obs: usize,
    n_params: usize,
}

impl FittedModel {
    pub fn new(
        coef_names: Vec<String>,
        estimates: DVector<f64>,
        covariance: DMatrix<f64>,
        loglik: f64,
        n_obs: usize,
        n_params: usize,
    ) -> Result<Self, ModelError> {
        let dc = coef_names.len();
        if dc == 0 {
            return Err(ModelError::ParamCount("at least one coefficient is required".into()));
        }
        if estimates.len() != dc || covariance.shape() != (dc, dc) {
            return Err(ModelError::DimensionMismatch(format!(
                "{dc} names, {} estimates, {}x{} covariance",
                estimates.len(),
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        let mut seen = HashSet::new();
        for name in &coef_names {
            if !seen.insert(name.as_str()) {
                return Err(ModelError::DuplicateName(name.clone()));
            }
        }
        if estimates.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("estimates"));
        }
        if covariance.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("covariance"));
        }
        if !loglik.is_finite() {
            return Err(ModelError::NonFinite("loglik"));
        }
        if n_params < dc {
            return Err(ModelError::ParamCount(format!(
                "d = {n_params} is smaller than the {dc} coefficients"
            )));
        }
        if n_obs < n_params {
            return Err(ModelError::TooFewObservations { n: n_obs, d: n_params });
        }
        let covariance = linalg::symmetrize(&covariance);
        if Cholesky::new(covariance.clone()).is_none() {
            return Err(ModelError::NotPositiveDefinite);
        }
        Ok(Self { coef_names, estimates, covariance, loglik, n_obs, n_params })
    }

    pub fn coef_names(&self) -> &[String] {
        &self.coef_names
    }

    pub fn estimates(&self) -> &DVector<f64> {
        &self.estimates
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    /// Unit-information covariance `n * covariance`.
    pub fn unit_info_covariance(&self) -> DMatrix<f64> {
        &self.covariance * self.n_obs as f64
    }

    /// Ordinary BIC `-2 loglik + d ln n`.
    pub fn bic(&self) -> f64 {
        -2.0 * self.loglik + self.n_params as f64 * (self.n_obs as f64).ln()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&FitFile::from(self)).expect("fit serializes")
    }

    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let raw: FitFile = serde_json::from_str(json)?;
        raw.try_into()
    }
}

/// On-disk layout of a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitFile {
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    pub loglik: f64,
    pub n: usize,
    pub d: usize,
}

impl From<&FittedModel> for FitFile {
    fn from(m: &FittedModel) -> Self {
        Self {
            names: m.coef_names.clone(),
            estimates: m.estimates.iter().copied().collect(),
            covariance: linalg::to_rows(&m.covariance),
            loglik: m.loglik,
            n: m.n_obs,
            d: m.n_params,
        }
    }
}

impl TryFrom<FitFile> for FittedModel {
    type Error = ModelError;

    fn try_from(f: FitFile) -> Result<Self, ModelError> {
        let cov = linalg::from_rows(&f.covariance)
            .ok_or_else(|| ModelError::DimensionMismatch("covariance rows have different lengths".into()))?;
        FittedModel::new(f.names, DVector::from_vec(f.estimates), cov, f.loglik, f.n, f.d)
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ModelError + '_ {
    move |source| ModelError::Io { path: path.display().to_string(), source }
}

pub fn load_fit(path: impl AsRef<Path>) -> Result<FittedModel, ModelError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    FittedModel::from_json(&text)
}

pub fn save_fit(model: &FittedModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    fs::write(path, model.to_json() + "\n").map_err(io_err(path))
}

/// Numeric columns for one outcome and its predictors, with no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    outcome: String,
    predictors: Vec<String>,
    y: Vec<f64>,
    /// Column-major predictor values.
    x: Vec<Vec<f64>>,
    dropped_rows: usize,
}

impl Dataset {
    pub fn new(outcome: impl Into<String>, y: Vec<f64>, predictors: Vec<(String, Vec<f64>)>) -> Result<Self, ModelError> {
        let n = y.len();
        if n == 0 {
            return Err(ModelError::NoRows);
        }
        if predictors.iter().any(|(_, c)| c.len() != n) {
            return Err(ModelError::DimensionMismatch("predictor columns differ in length from the outcome".into()));
        }
        if y.iter().chain(predictors.iter().flat_map(|(_, c)| c.iter())).any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite("data"));
        }
        let (names, x) = predictors.into_iter().unzip();
        Ok(Self { outcome: outcome.into(), predictors: names, y, x, dropped_rows: 0 })
    }

    pub fn outcome(&self) -> &str {
        &self.outcome
    }

    pub fn predictors(&self) -> &[String] {
        &self.predictors
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        if name == self.outcome {
            return Some(&self.y);
        }
        self.predictors.iter().position(|p| p == name).map(|j| self.x[j].as_slice())
    }

    /// Rows removed during ingestion because a designated cell was missing.
    pub fn dropped_rows(&self) -> usize {
        self.dropped_rows
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Read the outcome and predictor columns of a CSV file with a header row.
///
/// Rows with an empty or `NA` cell in a designated column are dropped and
/// counted; any other non-numeric cell is an error.
pub fn load_csv(path: impl AsRef<Path>, outcome: &str, predictors: &[String]) -> Result<Dataset, ModelError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(io_err(path))?;
    read_csv(file, outcome, predictors)
}

pub fn read_csv(reader: impl std::io::Read, outcome: &str, predictors: &[String]) -> Result<Dataset, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let index = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| ModelError::MissingColumn(name.to_string()))
    };
    let wanted: Vec<(String, usize)> = std::iter::once(outcome)
        .chain(predictors.iter().map(String::as_str))
        .map(|n| index(n).map(|i| (n.to_string(), i)))
        .collect::<Result<_, _>>()?;

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); wanted.len()];
    let mut dropped = 0;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let mut row = Vec::with_capacity(wanted.len());
        let mut missing = false;
        for (name, i) in &wanted {
            let cell = record.get(*i).unwrap_or("");
            if is_missing(cell) {
                missing = true;
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| ModelError::NonNumeric {
                column: name.clone(),
                line,
                value: cell.to_string(),
            })?;
            row.push(v);
        }
        if missing {
            dropped += 1;
            continue;
        }
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let mut cols = cols.into_iter();
    let y = cols.next().unwrap_or_default();
    let x = predictors.iter().cloned().zip(cols).collect();
    let mut data = Dataset::new(outcome, y, x)?;
    data.dropped_rows = dropped;
    Ok(data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_coef() -> FittedModel {
        FittedModel::new(
            vec!["a".into(), "b".into()],
            DVector::from_vec(vec![0.1, -0.2]),
            DMatrix::from_row_slice(2, 2, &[0.04, 0.01, 0.01, 0.09]),
            -123.456,
            50,
            3,
        )
        .unwrap()
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = two_coef();
        let back = FittedModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        let awkward = FittedModel::new(
            vec!["x".into()],
            DVector::from_vec(vec![0.1 + 0.2]),
            DMatrix::from_element(1, 1, 1.0 / 3.0),
            -1e-300,
            10,
            1,
        )
        .unwrap();
        assert_eq!(FittedModel::from_json(&awkward.to_json()).unwrap(), awkward);
    }

    #[test]
    fn validation_errors() {
        let bad_cov = FitFile {
            names: vec!["a".into(), "b".into()],
            estimates: vec![0.0, 0.0],
            covariance: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
            loglik: -1.0,
            n: 10,
            d: 2,
        };
        assert!(matches!(FittedModel::try_from(bad_cov.clone()), Err(ModelError::NotPositiveDefinite)));
        let small_d = FitFile { covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]], d: 1, ..bad_cov.clone() };
        assert!(matches!(FittedModel::try_from(small_d), Err(ModelError::ParamCount(_))));
        let dup = FitFile { names: vec!["a".into(), "a".into()], covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]], ..bad_cov.clone() };
        assert!(matches!(FittedModel::try_from(dup), Err(ModelError::DuplicateName(_))));
        let few = FitFile { covariance: vec![vec![1.0, 0.0], vec![0.0, 1.0]], n: 1, ..bad_cov.clone() };
        assert!(matches!(FittedModel::try_from(few), Err(ModelError::TooFewObservations { .. })));
        let ragged = FitFile { covariance: vec![vec![1.0], vec![0.0, 1.0]], ..bad_cov };
        assert!(matches!(FittedModel::try_from(ragged), Err(ModelError::DimensionMismatch(_))));
    }

    #[test]
    fn slight_asymmetry_is_averaged() {
        let m = FittedModel::new(
            vec!["a".into(), "b".into()],
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3 + 1e-14, 0.3, 1.0]),
            0.0,
            5,
            2,
        )
        .unwrap();
        assert_eq!(m.covariance()[(0, 1)], m.covariance()[(1, 0)]);
    }

    #[test]
    fn csv_ingestion() {
        let text = "y,x1,x2\n1,2,3\n4,,6\n7,8,NA\n10,11,12\n";
        let d = read_csv(text.as_bytes(), "y", &["x1".into()]).unwrap();
        assert_eq!(d.n_rows(), 3);
        assert_eq!(d.dropped_rows(), 1);
        assert_eq!(d.column("x1").unwrap(), &[2.0, 8.0, 11.0]);
        let both = read_csv(text.as_bytes(), "y", &["x1".into(), "x2".into()]).unwrap();
        assert_eq!(both.n_rows(), 2);
        assert_eq!(both.dropped_rows(), 2);
        assert!(matches!(read_csv(text.as_bytes(), "z", &[]), Err(ModelError::MissingColumn(_))));
        let bad = "y,x\n1,abc\n";
        assert!(matches!(
            read_csv(bad.as_bytes(), "y", &["x".into()]),
            Err(ModelError::NonNumeric { line: 2, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fit.json");
        let m = two_coef();
        save_fit(&m, &path).unwrap();
        assert_eq!(load_fit(&path).unwrap(), m);
        assert!(matches!(load_fit(dir.path().join("missing.json")), Err(ModelError::Io { .. })));
    }
}
