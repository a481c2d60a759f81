//! Maximum-likelihood linear and logistic regression.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::model::{Dataset, FittedModel, ModelError};

pub const INTERCEPT: &str = "(Intercept)";

const RANK_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const MAX_HALVINGS: usize = 20;
const DIVERGENCE_NORM: f64 = 1e3;

#[derive(Debug, Error)]
pub enum GlmError {
    #[error("design has no columns: add a predictor or the intercept")]
    EmptyDesign,
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("{n} observations is too few for {p} coefficients")]
    TooFewObservations { n: usize, p: usize },
    #[error("design matrix is rank deficient; dependent columns: {}", .0.join(", "))]
    RankDeficient(Vec<String>),
    #[error("predictor {0:?} is constant and cannot be standardized")]
    ConstantPredictor(String),
    #[error("degenerate zero residual variance")]
    DegenerateVariance,
    #[error("outcome must be 0 or 1 for a binomial fit, found {0}")]
    NonBinaryOutcome(f64),
    #[error("complete or quasi-complete separation: estimates diverge")]
    Separation,
    #[error("IRLS did not converge in {0} iterations")]
    NotConverged(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Gaussian,
    Binomial,
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" | "linear" => Ok(Family::Gaussian),
            "binomial" | "logistic" | "logit" => Ok(Family::Binomial),
            other => Err(format!("unknown family {other:?} (expected gaussian or binomial)")),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Binomial => "binomial",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub outcome: String,
    pub predictors: Vec<String>,
    pub intercept: bool,
    pub family: Family,
    /// z-score predictors with the population standard deviation.
    pub standardize: bool,
}

impl DesignSpec {
    pub fn new(outcome: impl Into<String>, predictors: &[&str]) -> Self {
        Self {
            outcome: outcome.into(),
            predictors: predictors.iter().map(|s| s.to_string()).collect(),
            intercept: true,
            family: Family::Gaussian,
            standardize: false,
        }
    }

    pub fn family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn standardized(mut self, yes: bool) -> Self {
        self.standardize = yes;
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }
}

/// Mean and population standard deviation.
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn design(data: &Dataset, spec: &DesignSpec) -> Result<(DMatrix<f64>, DVector<f64>, Vec<String>), GlmError> {
    let p = spec.predictors.len() + usize::from(spec.intercept);
    if p == 0 {
        return Err(GlmError::EmptyDesign);
    }
    let y = data.column(&spec.outcome).ok_or_else(|| GlmError::MissingColumn(spec.outcome.clone()))?;
    let n = y.len();
    let mut names = Vec::with_capacity(p);
    let mut x = DMatrix::zeros(n, p);
    let mut j = 0;
    if spec.intercept {
        names.push(INTERCEPT.to_string());
        x.column_mut(0).fill(1.0);
        j = 1;
    }
    for pred in &spec.predictors {
        let col = data.column(pred).ok_or_else(|| GlmError::MissingColumn(pred.clone()))?;
        let (mean, sd) = if spec.standardize {
            let (m, s) = mean_sd(col);
            if s == 0.0 {
                return Err(GlmError::ConstantPredictor(pred.clone()));
            }
            (m, s)
        } else {
            (0.0, 1.0)
        };
        for (i, v) in col.iter().enumerate() {
            x[(i, j)] = (v - mean) / sd;
        }
        names.push(pred.clone());
        j += 1;
    }
    Ok((x, DVector::from_column_slice(y), names))
}

fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<(), GlmError> {
    // Scale columns to unit norm so the tolerance is meaningful.
    let mut scaled = x.clone();
    for mut c in scaled.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    let dependent = linalg::dependent_rows(&scaled.transpose(), RANK_TOL);
    if dependent.is_empty() {
        Ok(())
    } else {
        Err(GlmError::RankDeficient(dependent.into_iter().map(|j| names[j].clone()).collect()))
    }
}

/// Ordinary least squares with the ML variance `RSS / n`.
pub fn fit_linear(data: &Dataset, spec: &DesignSpec) -> Result<FittedModel, GlmError> {
    let (x, y, names) = design(data, spec)?;
    fit_linear_design(&x, &y, names)
}

/// [`fit_linear`] on an explicit design matrix.
pub fn fit_linear_design(x: &DMatrix<f64>, y: &DVector<f64>, names: Vec<String>) -> Result<FittedModel, GlmError> {
    let (n, p) = x.shape();
    if n <= p {
        return Err(GlmError::TooFewObservations { n, p });
    }
    check_rank(x, &names)?;
    let xtx = linalg::symmetrize(&(x.transpose() * x));
    let chol = Cholesky::new(xtx.clone()).ok_or_else(|| GlmError::RankDeficient(names.clone()))?;
    let theta = chol.solve(&(x.transpose() * y));
    let resid = y - x * &theta;
    let rss = resid.norm_squared();
    let sigma2 = rss / n as f64;
    let scale = y.norm_squared() / n as f64;
    if !(sigma2 > 1e-20 * scale.max(f64::MIN_POSITIVE)) {
        return Err(GlmError::DegenerateVariance);
    }
    let loglik = -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0);
    let cov = linalg::symmetrize(&chol.inverse()) * sigma2;
    Ok(FittedModel::new(names, theta, cov, loglik, n, p + 1)?)
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logistic_loglik(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> f64 {
    let eta = x * theta;
    eta.iter().zip(y.iter()).map(|(e, yi)| yi * e - softplus(*e)).sum()
}

/// Gradient and information matrix of the logistic log-likelihood.
fn logistic_derivatives(x: &DMatrix<f64>, y: &DVector<f64>, theta: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
    let mu = (x * theta).map(logistic);
    let grad = x.transpose() * (y - &mu);
    let w = mu.map(|m| m * (1.0 - m));
    let mut xw = x.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    let info = linalg::symmetrize(&(x.transpose() * xw));
    (grad, info, mu)
}

/// Logistic regression by Newton-Raphson with step halving.
pub fn fit_logistic(data: &Dataset, spec: &DesignSpec) -> Result<FittedModel, GlmError> {
    let (x, y, names) = design(data, spec)?;
    fit_logistic_design(&x, &y, names)
}

/// [`fit_logistic`] on an explicit design matrix.
pub fn fit_logistic_design(x: &DMatrix<f64>, y: &DVector<f64>, names: Vec<String>) -> Result<FittedModel, GlmError> {
    let (n, p) = x.shape();
    if let Some(&bad) = y.iter().find(|&&v| v != 0.0 && v != 1.0) {
        return Err(GlmError::NonBinaryOutcome(bad));
    }
    if n < p {
        return Err(GlmError::TooFewObservations { n, p });
    }
    check_rank(x, &names)?;
    let base_info = linalg::symmetrize(&(x.transpose() * x)) * 0.25;
    let base_min = base_info.symmetric_eigenvalues().min();

    let mut theta = DVector::zeros(p);
    let mut ll = logistic_loglik(x, y, &theta);
    for iter in 0..MAX_ITER {
        let (grad, info, mu) = logistic_derivatives(x, y, &theta);
        if grad.amax() <= GRAD_TOL {
            // Every observation fitted perfectly means the likelihood has no maximum.
            if y.iter().zip(mu.iter()).all(|(yi, m)| (yi - m).abs() < 1e-6) {
                return Err(GlmError::Separation);
            }
            let min_eig = info.symmetric_eigenvalues().min();
            if min_eig <= 1e-10 * base_min {
                return Err(GlmError::Separation);
            }
            let cov = linalg::spd_inverse(&info).ok_or(GlmError::Separation)?;
            return Ok(FittedModel::new(names, theta, cov, ll, n, p)?);
        }
        let chol = Cholesky::new(info).ok_or(GlmError::Separation)?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        let mut candidate = &theta + &step;
        let mut cand_ll = logistic_loglik(x, y, &candidate);
        // Near the optimum the log-likelihood is flat to rounding error.
        let floor = ll - 1e-12 * (1.0 + ll.abs());
        let mut halvings = 0;
        while !(cand_ll >= floor) && halvings < MAX_HALVINGS {
            t *= 0.5;
            candidate = &theta + &step * t;
            cand_ll = logistic_loglik(x, y, &candidate);
            halvings += 1;
        }
        if !(cand_ll >= floor) {
            return Err(GlmError::NotConverged(iter + 1));
        }
        theta = candidate;
        ll = cand_ll;
        if theta.norm() > DIVERGENCE_NORM {
            return Err(GlmError::Separation);
        }
    }
    Err(GlmError::NotConverged(MAX_ITER))
}

pub fn fit(data: &Dataset, spec: &DesignSpec) -> Result<FittedModel, GlmError> {
    match spec.family {
        Family::Gaussian => fit_linear(data, spec),
        Family::Binomial => fit_logistic(data, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(y: &[f64], cols: &[(&str, &[f64])]) -> Dataset {
        Dataset::new("y", y.to_vec(), cols.iter().map(|(n, c)| (n.to_string(), c.to_vec())).collect()).unwrap()
    }

    #[test]
    fn exact_line_has_degenerate_variance() {
        let d = data(&[0.0, 2.0, 4.0, 6.0], &[("x", &[0.0, 1.0, 2.0, 3.0])]);
        assert!(matches!(fit_linear(&d, &DesignSpec::new("y", &["x"])), Err(GlmError::DegenerateVariance)));
    }

    #[test]
    fn four_point_line_matches_two_by_two_solve() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [0.0, 1.0, 2.5, 3.0];
        let m = fit_linear(&data(&ys, &[("x", &xs)]), &DesignSpec::new("y", &["x"])).unwrap();
        // normal equations [[n, sx], [sx, sxx]] b = [sy, sxy] by Cramer's rule
        let n = 4.0;
        let sx: f64 = xs.iter().sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sy: f64 = ys.iter().sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let det = n * sxx - sx * sx;
        let b0 = (sy * sxx - sx * sxy) / det;
        let b1 = (n * sxy - sx * sy) / det;
        assert!((m.estimates()[0] - b0).abs() < 1e-12);
        assert!((m.estimates()[1] - b1).abs() < 1e-12);
        assert_eq!(m.n_params(), 3);
        assert_eq!(m.coef_names(), &[INTERCEPT.to_string(), "x".to_string()]);
    }

    #[test]
    fn rank_deficiency_names_the_column() {
        let d = data(&[1.0, 0.0, 2.0, 5.0, 3.0], &[("a", &[1.0, 2.0, 3.0, 4.0, 6.0]), ("b", &[2.0, 4.0, 6.0, 8.0, 12.0])]);
        match fit_linear(&d, &DesignSpec::new("y", &["a", "b"])) {
            Err(GlmError::RankDeficient(cols)) => assert_eq!(cols, vec!["b".to_string()]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_rows() {
        let d = data(&[1.0, 2.0], &[("a", &[1.0, 3.0])]);
        assert!(matches!(fit_linear(&d, &DesignSpec::new("y", &["a"])), Err(GlmError::TooFewObservations { .. })));
    }

    #[test]
    fn intercept_only_logistic_is_log_odds() {
        let y: Vec<f64> = (0..50).map(|i| f64::from(u8::from(i < 17))).collect();
        let d = data(&y, &[]);
        let m = fit_logistic(&d, &DesignSpec::new("y", &[]).family(Family::Binomial)).unwrap();
        assert!((m.estimates()[0] - (17.0f64 / 33.0).ln()).abs() < 1e-10);
        assert_eq!(m.n_params(), 1);
        // variance of the log odds is 1 / (n p (1 - p))
        let p = 17.0 / 50.0;
        assert!((m.covariance()[(0, 0)] - 1.0 / (50.0 * p * (1.0 - p))).abs() < 1e-10);
    }

    #[test]
    fn separated_data_is_reported() {
        let d = data(&[0.0, 0.0, 0.0, 1.0, 1.0, 1.0], &[("x", &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0])]);
        let spec = DesignSpec::new("y", &["x"]).family(Family::Binomial);
        assert!(matches!(fit_logistic(&d, &spec), Err(GlmError::Separation)));
    }

    #[test]
    fn non_binary_outcome() {
        let d = data(&[0.0, 2.0, 1.0], &[]);
        let spec = DesignSpec::new("y", &[]).family(Family::Binomial);
        assert!(matches!(fit_logistic(&d, &spec), Err(GlmError::NonBinaryOutcome(v)) if v == 2.0));
    }

    #[test]
    fn family_parsing() {
        assert_eq!("Gaussian".parse::<Family>(), Ok(Family::Gaussian));
        assert_eq!("logistic".parse::<Family>(), Ok(Family::Binomial));
        assert!("poisson".parse::<Family>().is_err());
    }

    #[test]
    fn standardization_uses_population_sd() {
        let xs = [1.0, 2.0, 3.0, 4.0, 10.0];
        let ys = [0.5, 1.0, 0.2, 3.0, 2.0];
        let spec = DesignSpec::new("y", &["x"]).standardized(true);
        let m = fit_linear(&data(&ys, &[("x", &xs)]), &spec).unwrap();
        let raw = fit_linear(&data(&ys, &[("x", &xs)]), &DesignSpec::new("y", &["x"])).unwrap();
        let (_, sd) = mean_sd(&xs);
        assert!((m.estimates()[1] - raw.estimates()[1] * sd).abs() < 1e-12);
        assert!((m.loglik() - raw.loglik()).abs() < 1e-9);
    }
}
