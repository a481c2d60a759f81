//! Multivariate normal region probabilities `Pr(z > 0)`, `z ~ N(mu, Omega)`.
//!
//! The main engine is Genz's sequential conditioning with a randomly shifted
//! rank-1 (Kronecker) lattice. A plain Monte Carlo engine is provided as an
//! independent reference.
//!
//! Semidefinite covariances are supported through an ordered Cholesky that
//! skips linearly dependent rows: such a row does not get its own latent
//! variable but instead bounds the latent variable of its last nonzero
//! loading. This is what lets linearly redundant constraint sets such as
//! `b > (a, c) > 0` (four rows, three parameters) be evaluated exactly.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg;
use crate::normal;
use crate::seed;

/// Residual variance (relative to the diagonal) below which a row is treated
/// as a linear combination of earlier rows.
const DEPENDENT_TOL: f64 = 1e-10;
/// Residual variance below `-INDEFINITE_TOL * diag` signals an indefinite matrix.
const INDEFINITE_TOL: f64 = 1e-8;
/// Loadings smaller than this (relative to the row's standard deviation) are zero.
const LOADING_TOL: f64 = 1e-8;
/// Relative tolerance for rank checks on constraint matrices.
pub const RANK_TOL: f64 = 1e-10;
/// Relative asymmetry tolerated before a covariance is rejected.
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MvnError {
    #[error("region problem has dimension zero")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("covariance is not symmetric (relative asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("covariance has non-finite entries or non-positive variances")]
    InvalidCovariance,
    #[error("covariance is not positive definite, even after jitter")]
    NotPositiveDefinite,
    #[error("covariance is not positive semidefinite")]
    NotPositiveSemidefinite,
    #[error("constraint row {row} is linearly dependent on earlier rows; remove it")]
    RedundantConstraint { row: usize },
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
}

/// How a [`RegionProbability`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ClosedForm,
    Qmc,
    Mc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::ClosedForm => "closed-form",
            Method::Qmc => "qmc",
            Method::Mc => "mc",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionProbability {
    pub estimate: f64,
    /// Natural log of the estimate. When the estimate is exactly zero this is
    /// the floor `ln(std_error) - 2` and `underflow` is set.
    pub log_estimate: f64,
    pub std_error: f64,
    pub method: Method,
    pub n_samples: usize,
    pub underflow: bool,
}

impl RegionProbability {
    pub fn exact(log_p: f64) -> Self {
        Self::from_log(log_p, 0.0, Method::ClosedForm, 0)
    }

    /// Build from a log estimate, applying the zero-probability floor.
    pub fn from_log(log_p: f64, std_error: f64, method: Method, n_samples: usize) -> Self {
        let log_p = log_p.min(0.0);
        if log_p == f64::NEG_INFINITY || log_p.is_nan() {
            return Self {
                estimate: 0.0,
                log_estimate: underflow_floor(std_error),
                std_error,
                method,
                n_samples,
                underflow: true,
            };
        }
        Self { estimate: log_p.exp(), log_estimate: log_p, std_error, method, n_samples, underflow: false }
    }

    /// Build from a plain estimate, applying the zero-probability floor.
    pub fn from_estimate(p: f64, std_error: f64, method: Method, n_samples: usize) -> Self {
        let p = p.clamp(0.0, 1.0);
        let log_p = if p > 0.0 { p.ln() } else { f64::NEG_INFINITY };
        Self { estimate: p, ..Self::from_log(log_p, std_error, method, n_samples) }
    }

    /// Standard error of `log_estimate` by the delta method.
    pub fn log_std_error(&self) -> f64 {
        if self.estimate > 0.0 {
            self.std_error / self.estimate
        } else {
            f64::INFINITY
        }
    }
}

fn underflow_floor(std_error: f64) -> f64 {
    std_error.max(f64::MIN_POSITIVE).ln() - 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct QmcConfig {
    pub points: usize,
    pub randomizations: usize,
    pub seed: u64,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self { points: 1 << 14, randomizations: 12, seed: 20_190_101 }
    }
}

impl QmcConfig {
    pub fn validate(&self) -> Result<(), MvnError> {
        if self.points < 256 {
            return Err(MvnError::InvalidConfig(format!("points must be at least 256, got {}", self.points)));
        }
        if self.randomizations < 8 {
            return Err(MvnError::InvalidConfig(format!(
                "randomizations must be at least 8, got {}",
                self.randomizations
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct McConfig {
    pub n_samples: usize,
    pub seed: u64,
}

impl McConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed }
    }
}

/// `Pr(z > 0)` for `z ~ N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MvnRegionProblem {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    semidefinite: bool,
    jittered: bool,
}

impl MvnRegionProblem {
    /// Positive definite problem. The covariance is symmetrized; if its
    /// Cholesky factorization fails, a small diagonal jitter is tried once.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, MvnError> {
        let cov = check_shape(&mean, &cov)?;
        let (_, jittered) = linalg::cholesky_with_jitter(&cov).ok_or(MvnError::NotPositiveDefinite)?;
        let cov = if jittered {
            let j = linalg::jitter_amount(&cov);
            let mut c = cov;
            for i in 0..c.nrows() {
                c[(i, i)] += j;
            }
            c
        } else {
            cov
        };
        Ok(Self { mean, cov, semidefinite: false, jittered })
    }

    /// Positive semidefinite problem, e.g. `R Sigma R^T` for a rank-deficient `R`.
    pub fn new_semidefinite(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, MvnError> {
        let cov = check_shape(&mean, &cov)?;
        OrderedFactor::build(&mean, &cov)?;
        Ok(Self { mean, cov, semidefinite: true, jittered: false })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_semidefinite(&self) -> bool {
        self.semidefinite
    }

    pub fn jittered(&self) -> bool {
        self.jittered
    }

    /// The same covariance with the mean moved to zero.
    pub fn centered(&self) -> Self {
        Self { mean: DVector::zeros(self.dim()), ..self.clone() }
    }

    /// Closed form when one exists: a single coordinate or independent coordinates.
    fn closed_form(&self) -> Option<RegionProbability> {
        let m = self.dim();
        let sd = |i: usize| self.cov[(i, i)].sqrt();
        let diagonal = (0..m).all(|i| {
            (0..m).all(|j| i == j || self.cov[(i, j)].abs() <= 1e-14 * sd(i) * sd(j))
        });
        if m == 1 || diagonal {
            let log_p = (0..m).map(|i| normal::log_cdf(self.mean[i] / sd(i))).sum();
            return Some(RegionProbability::exact(log_p));
        }
        None
    }
}

fn check_shape(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DMatrix<f64>, MvnError> {
    let m = mean.len();
    if m == 0 {
        return Err(MvnError::Empty);
    }
    if cov.nrows() != m || cov.ncols() != m {
        return Err(MvnError::DimensionMismatch(format!(
            "mean has length {m}, covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) || (0..m).any(|i| cov[(i, i)] <= 0.0) {
        return Err(MvnError::InvalidCovariance);
    }
    let asym = linalg::relative_asymmetry(cov);
    if asym > SYMMETRY_TOL {
        return Err(MvnError::NotSymmetric(asym));
    }
    Ok(linalg::symmetrize(cov))
}

/// Build `mu = R center - r`, `Omega = R cov R^T`, refusing redundant rows.
pub fn reduce_constraints(
    coeff: &DMatrix<f64>,
    bounds: &DVector<f64>,
    center: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<MvnRegionProblem, MvnError> {
    let (mean, omega) = transform(coeff, bounds, center, cov)?;
    if let Some(&row) = linalg::dependent_rows(coeff, RANK_TOL).first() {
        return Err(MvnError::RedundantConstraint { row });
    }
    MvnRegionProblem::new(mean, omega)
}

/// As [`reduce_constraints`], but linearly dependent rows are kept and the
/// resulting semidefinite problem is handled exactly.
pub fn reduce_constraints_allowing_redundancy(
    coeff: &DMatrix<f64>,
    bounds: &DVector<f64>,
    center: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<MvnRegionProblem, MvnError> {
    let (mean, omega) = transform(coeff, bounds, center, cov)?;
    if linalg::dependent_rows(coeff, RANK_TOL).is_empty() {
        MvnRegionProblem::new(mean, omega)
    } else {
        MvnRegionProblem::new_semidefinite(mean, omega)
    }
}

fn transform(
    coeff: &DMatrix<f64>,
    bounds: &DVector<f64>,
    center: &DVector<f64>,
    cov: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>), MvnError> {
    let (m, d) = coeff.shape();
    if bounds.len() != m || center.len() != d || cov.shape() != (d, d) {
        return Err(MvnError::DimensionMismatch(format!(
            "R is {m}x{d}, r has {}, center has {}, covariance is {}x{}",
            bounds.len(),
            center.len(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    if m == 0 {
        return Err(MvnError::Empty);
    }
    let mean = coeff * center - bounds;
    let omega = linalg::symmetrize(&(coeff * cov * coeff.transpose()));
    Ok((mean, omega))
}

// ---------------------------------------------------------------------------
// Ordered factorization

/// One constraint `mean + coeffs . e[..k] + pivot * e[k] > 0` on latent `e[k]`.
#[derive(Debug, Clone)]
struct BoundRow {
    mean: f64,
    coeffs: Vec<f64>,
    pivot: f64,
}

/// `z = mu + L e` with `e` standard normal, rows grouped by the latent
/// variable they constrain.
#[derive(Debug, Clone)]
struct OrderedFactor {
    columns: Vec<Vec<BoundRow>>,
    /// Means of rows with no stochastic part.
    constants: Vec<f64>,
    /// Loadings in the original row order (m x number of latent variables).
    loadings: DMatrix<f64>,
}

impl OrderedFactor {
    fn build(mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<Self, MvnError> {
        let m = mean.len();
        // Least likely coordinates first.
        let mut order: Vec<usize> = (0..m).collect();
        let marginal = |i: usize| normal::cdf(mean[i] / cov[(i, i)].sqrt());
        order.sort_by(|&a, &b| marginal(a).total_cmp(&marginal(b)));

        let mut l = DMatrix::<f64>::zeros(m, m);
        let mut n_cols = 0;
        for i in 0..m {
            let pi = order[i];
            let diag = cov[(pi, pi)];
            let c = n_cols;
            let v = diag - (0..c).map(|k| l[(i, k)] * l[(i, k)]).sum::<f64>();
            if v > DEPENDENT_TOL * diag {
                let piv = v.sqrt();
                l[(i, c)] = piv;
                for j in (i + 1)..m {
                    let pj = order[j];
                    let s: f64 = (0..c).map(|k| l[(j, k)] * l[(i, k)]).sum();
                    l[(j, c)] = (cov[(pj, pi)] - s) / piv;
                }
                n_cols += 1;
            } else if v < -INDEFINITE_TOL * diag {
                return Err(MvnError::NotPositiveSemidefinite);
            }
        }

        let mut columns = vec![Vec::new(); n_cols];
        let mut constants = Vec::new();
        let mut loadings = DMatrix::zeros(m, n_cols);
        for i in 0..m {
            let pi = order[i];
            let scale = cov[(pi, pi)].sqrt();
            for k in 0..n_cols {
                loadings[(pi, k)] = l[(i, k)];
            }
            match (0..n_cols).rev().find(|&k| l[(i, k)].abs() > LOADING_TOL * scale) {
                Some(k) => columns[k].push(BoundRow {
                    mean: mean[pi],
                    coeffs: (0..k).map(|j| l[(i, j)]).collect(),
                    pivot: l[(i, k)],
                }),
                None => constants.push(mean[pi]),
            }
        }
        Ok(Self { columns, constants, loadings })
    }

    fn n_latent(&self) -> usize {
        self.columns.len()
    }

    fn infeasible(&self) -> bool {
        self.constants.iter().any(|&c| c <= 0.0)
    }

    /// Integrand at `u`; returns `(p, log_scale)` with value `p * exp(log_scale)`.
    fn integrand(&self, u: &[f64], e: &mut [f64]) -> (f64, f64) {
        let q = self.n_latent();
        let mut prob = 1.0;
        let mut log_scale = 0.0;
        for (c, rows) in self.columns.iter().enumerate() {
            let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
            for r in rows {
                let s = r.mean + r.coeffs.iter().zip(&e[..c]).map(|(a, b)| a * b).sum::<f64>();
                let b = -s / r.pivot;
                if r.pivot > 0.0 {
                    lo = lo.max(b);
                } else {
                    hi = hi.min(b);
                }
            }
            if hi <= lo {
                return (0.0, 0.0);
            }
            let last = c + 1 == q;
            let mass = if last {
                normal::interval_mass(lo, hi)
            } else {
                let (mass, x) = normal::truncated_inverse(lo, hi, u[c]);
                e[c] = x;
                mass
            };
            if mass > 0.0 {
                prob *= mass;
                if prob < 1e-280 {
                    log_scale += prob.ln();
                    prob = 1.0;
                }
            } else {
                let lm = normal::log_interval_mass(lo, hi);
                if lm == f64::NEG_INFINITY {
                    return (0.0, 0.0);
                }
                log_scale += lm;
            }
        }
        (prob, log_scale)
    }
}

/// Running `ln(sum_i p_i)` that stays in linear arithmetic while it can.
#[derive(Default)]
struct LogSum {
    linear: f64,
    tail_max: f64,
    tail_sum: f64,
    has_tail: bool,
}

impl LogSum {
    fn push(&mut self, p: f64, log_scale: f64) {
        if p == 0.0 {
            return;
        }
        if log_scale == 0.0 {
            self.linear += p;
            return;
        }
        let v = log_scale + p.ln();
        if !self.has_tail {
            self.tail_max = v;
            self.tail_sum = 1.0;
            self.has_tail = true;
        } else if v > self.tail_max {
            self.tail_sum = self.tail_sum * (self.tail_max - v).exp() + 1.0;
            self.tail_max = v;
        } else {
            self.tail_sum += (v - self.tail_max).exp();
        }
    }

    fn ln(&self) -> f64 {
        let tail = if self.has_tail { self.tail_max + self.tail_sum.ln() } else { f64::NEG_INFINITY };
        if self.linear > 0.0 {
            let lin = self.linear.ln();
            let (a, b) = if lin >= tail { (lin, tail) } else { (tail, lin) };
            a + (b - a).exp().ln_1p()
        } else {
            tail
        }
    }
}

fn first_primes(count: usize) -> Vec<u64> {
    let mut primes: Vec<u64> = Vec::with_capacity(count);
    let mut c = 2u64;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= c).all(|&p| !c.is_multiple_of(p)) {
            primes.push(c);
        }
        c += 1;
    }
    primes
}

/// `Pr(z > 0)` by Genz's method with a randomized Kronecker lattice.
///
/// `std_error` is the standard deviation across randomizations divided by
/// the square root of their number.
pub fn region_prob_qmc(problem: &MvnRegionProblem, config: &QmcConfig) -> Result<RegionProbability, MvnError> {
    config.validate()?;
    if let Some(p) = problem.closed_form() {
        return Ok(p);
    }
    let factor = OrderedFactor::build(&problem.mean, &problem.cov)?;
    if factor.infeasible() {
        return Ok(RegionProbability::exact(f64::NEG_INFINITY));
    }
    let q = factor.n_latent();
    // The last latent variable is integrated exactly.
    let dims = q.saturating_sub(1);
    if dims == 0 {
        let (p, s) = factor.integrand(&[], &mut [0.0; 1]);
        let log_p = if p > 0.0 { s + p.ln() } else { f64::NEG_INFINITY };
        return Ok(RegionProbability::exact(log_p));
    }
    let alphas: Vec<f64> = first_primes(dims).iter().map(|&p| (p as f64).sqrt().fract()).collect();
    let n = config.points;

    let log_means: Vec<f64> = (0..config.randomizations)
        .into_par_iter()
        .map(|r| {
            let mut rng = seed::sub_rng(config.seed, r as u64);
            let shift: Vec<f64> = (0..dims).map(|_| rng.random::<f64>()).collect();
            let mut u = vec![0.0; dims];
            let mut e = vec![0.0; q];
            let mut acc = LogSum::default();
            for j in 0..n {
                let jf = j as f64;
                for k in 0..dims {
                    let t = (jf * alphas[k] + shift[k]).fract();
                    // baker's transform
                    u[k] = 1.0 - (2.0 * t - 1.0).abs();
                }
                let (p, s) = factor.integrand(&u, &mut e);
                acc.push(p, s);
            }
            acc.ln() - (n as f64).ln()
        })
        .collect();

    let n_samples = n * config.randomizations;
    let top = log_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return Ok(RegionProbability::from_log(f64::NEG_INFINITY, 0.0, Method::Qmc, n_samples));
    }
    let scaled: Vec<f64> = log_means.iter().map(|l| (l - top).exp()).collect();
    let rn = scaled.len() as f64;
    let mean = scaled.iter().sum::<f64>() / rn;
    let var = scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (rn - 1.0);
    let log_p = top + mean.ln();
    let std_error = top.exp() * (var / rn).sqrt();
    Ok(RegionProbability::from_log(log_p, std_error, Method::Qmc, n_samples))
}

const MC_BATCH: usize = 1 << 16;

/// `Pr(z > 0)` by plain Monte Carlo; `std_error = sqrt(p (1 - p) / n)`.
pub fn region_prob_mc(problem: &MvnRegionProblem, config: &McConfig) -> Result<RegionProbability, MvnError> {
    if config.n_samples < 1000 {
        return Err(MvnError::InvalidConfig(format!("n_samples must be at least 1000, got {}", config.n_samples)));
    }
    let factor = OrderedFactor::build(&problem.mean, &problem.cov)?;
    let (m, q) = factor.loadings.shape();
    let n_batches = config.n_samples.div_ceil(MC_BATCH);
    let hits: usize = (0..n_batches)
        .into_par_iter()
        .map(|b| {
            let size = MC_BATCH.min(config.n_samples - b * MC_BATCH);
            let mut rng = seed::sub_rng(config.seed, b as u64);
            let mut e = vec![0.0; q];
            let mut count = 0;
            for _ in 0..size {
                for v in e.iter_mut() {
                    *v = rng.sample(StandardNormal);
                }
                let inside = (0..m).all(|i| {
                    problem.mean[i] + (0..q).map(|k| factor.loadings[(i, k)] * e[k]).sum::<f64>() > 0.0
                });
                count += usize::from(inside);
            }
            count
        })
        .sum();
    let n = config.n_samples as f64;
    let p = hits as f64 / n;
    let se = (p * (1.0 - p) / n).sqrt();
    Ok(RegionProbability::from_estimate(p, se, Method::Mc, config.n_samples))
}
