//! Scripted experiments on the three-coefficient regression
//! `y = theta0 + theta1 x1 + theta2 x2 + e` with `corr(x1, x2) = 0.5`.
//!
//! * `fig2`: log Bayes factors along `theta_hat = (0, a, 2a)` at fixed `n`,
//!   from sufficient statistics alone.
//! * `fig3`: error rates of BIC and OC-BIC model selection on simulated data.
//! * `fig4`: criterion-based log Bayes factors against direct integration.
//!
//! The hypotheses are `M1: theta2 > theta1 > 0`, its complement `M2`,
//! `M0: theta1 = theta2 = 0` and the unconstrained `Mu`.

use std::fmt::Write as _;
use std::io;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bic::{self, BicError, OcBicOptions, OcBicResult, Variant};
use crate::constraints::{parse_constraints, ConstraintError, ConstraintSet};
use crate::glm::{self, GlmError, INTERCEPT};
use crate::model::{FittedModel, ModelError};
use crate::mvn::QmcConfig;
use crate::oracle::{self, BruteForceConfig, MarginalLikelihoodEstimate, OracleError, Proposal, Region};
use crate::seed;

pub const M1_CONSTRAINT: &str = "x2 > x1 > 0";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bic(#[from] BicError),
    #[error(transparent)]
    Glm(#[from] GlmError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error("writing results: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig2,
    Fig3,
    Fig4,
}

impl std::str::FromStr for Experiment {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "fig2" => Ok(Self::Fig2),
            "fig3" => Ok(Self::Fig3),
            "fig4" => Ok(Self::Fig4),
            other => Err(SimError::InvalidConfig(format!("unknown experiment '{other}' (expected fig2, fig3 or fig4)"))),
        }
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig4 => "fig4",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimConfig {
    pub experiment: Experiment,
    pub n_grid: Vec<usize>,
    pub a_grid: Vec<f64>,
    /// Data sets per `(a, n)` cell; fig3 only.
    pub replications: usize,
    pub seed: u64,
    pub qmc: QmcConfig,
    /// Draws per marginal likelihood; fig4 only.
    pub oracle_draws: usize,
    pub output: Option<PathBuf>,
}

impl SimConfig {
    pub fn fig2() -> Self {
        Self {
            experiment: Experiment::Fig2,
            n_grid: vec![20],
            a_grid: (-30..=30).map(|i| i as f64 * 0.05).collect(),
            replications: 1,
            seed: 20190101,
            qmc: QmcConfig::default(),
            oracle_draws: 0,
            output: None,
        }
    }

    pub fn fig3() -> Self {
        Self {
            experiment: Experiment::Fig3,
            n_grid: vec![20, 50, 100, 200, 400, 800, 1600],
            a_grid: vec![0.0, 0.1, 0.2, 0.4],
            replications: 1000,
            seed: 20190101,
            qmc: QmcConfig { points: 1 << 11, randomizations: 8, seed: 20190101 },
            oracle_draws: 0,
            output: None,
        }
    }

    pub fn fig4() -> Self {
        Self {
            experiment: Experiment::Fig4,
            n_grid: vec![100, 200, 400, 800, 1600],
            a_grid: vec![0.5, -0.5],
            replications: 1,
            seed: 20190101,
            qmc: QmcConfig::default(),
            oracle_draws: 1_000_000,
            output: None,
        }
    }

    pub fn for_experiment(experiment: Experiment) -> Self {
        match experiment {
            Experiment::Fig2 => Self::fig2(),
            Experiment::Fig3 => Self::fig3(),
            Experiment::Fig4 => Self::fig4(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.n_grid.is_empty() || self.a_grid.is_empty() {
            return bad("n and a grids must be nonempty".into());
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 10) {
            return bad(format!("sample size {n} is too small; use at least 10"));
        }
        if let Some(a) = self.a_grid.iter().find(|a| !a.is_finite()) {
            return bad(format!("effect multiplier {a} is not finite"));
        }
        if self.experiment == Experiment::Fig3 && self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.experiment == Experiment::Fig4 && self.oracle_draws < 1000 {
            return bad("oracle draws must be at least 1000".into());
        }
        self.qmc.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))
    }

    fn header(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        format!(
            "# experiment={} n={} a={} replications={} seed={} qmc_points={} qmc_randomizations={} oracle_draws={}\n",
            self.experiment,
            join(self.n_grid.iter().map(|n| n.to_string()).collect()),
            join(self.a_grid.iter().map(|a| a.to_string()).collect()),
            self.replications,
            self.seed,
            self.qmc.points,
            self.qmc.randomizations,
            self.oracle_draws,
        )
    }
}

fn coef_names() -> Vec<String> {
    vec![INTERCEPT.to_string(), "x1".to_string(), "x2".to_string()]
}

fn m1_constraint() -> ConstraintSet {
    parse_constraints(&[M1_CONSTRAINT], &coef_names()).expect("built-in constraint parses")
}

/// `X'X` of the standardized design: `[n 0 0; 0 n n/2; 0 n/2 n]`.
pub fn design_gram(n: usize) -> DMatrix<f64> {
    let n = n as f64;
    DMatrix::from_row_slice(3, 3, &[n, 0.0, 0.0, 0.0, n, n / 2.0, 0.0, n / 2.0, n])
}

/// Linear model fit implied by `theta_hat`, ML variance `sigma2` and [`design_gram`].
pub fn analytic_fit(n: usize, theta_hat: [f64; 3], sigma2: f64) -> Result<FittedModel, SimError> {
    let cov = design_gram(n).try_inverse().expect("gram matrix is invertible") * sigma2;
    let loglik = gaussian_loglik(n, sigma2);
    Ok(FittedModel::new(coef_names(), DVector::from_row_slice(&theta_hat), cov, loglik, n, 4)?)
}

/// Intercept-only refit for the same sufficient statistics.
pub fn analytic_null_fit(n: usize, theta_hat: [f64; 3], sigma2: f64) -> Result<FittedModel, SimError> {
    let slopes = DVector::from_row_slice(&theta_hat[1..]);
    let block = design_gram(n).view((1, 1), (2, 2)).into_owned();
    let sigma2_null = sigma2 + slopes.dot(&(block * &slopes)) / n as f64;
    let loglik = gaussian_loglik(n, sigma2_null);
    Ok(FittedModel::new(
        vec![INTERCEPT.to_string()],
        DVector::from_element(1, theta_hat[0]),
        DMatrix::from_element(1, 1, sigma2_null / n as f64),
        loglik,
        n,
        2,
    )?)
}

fn gaussian_loglik(n: usize, sigma2: f64) -> f64 {
    -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0)
}

fn log_bf(a: &OcBicResult, b: &OcBicResult) -> f64 {
    -0.5 * (a.ocbic - b.ocbic)
}

/// Standard error of `log_post - log_prior` from the two estimates.
fn log_ratio_se(r: &OcBicResult) -> f64 {
    let se = |p: &Option<crate::mvn::RegionProbability>| p.as_ref().map_or(0.0, |p| p.log_std_error());
    se(&r.post_prob).hypot(se(&r.prior_prob))
}

// ---------------------------------------------------------------------------
// fig2

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig2Row {
    pub a: f64,
    pub log_b_ui_1u: f64,
    pub log_b_lui_1u: f64,
    pub log_b_ui_12: f64,
    pub log_b_lui_12: f64,
    pub log_b_ui_10: f64,
    pub log_b_lui_10: f64,
    pub se_ui_1u: f64,
    pub se_lui_1u: f64,
    /// `ln Pr(M1 region)` under the local prior.
    pub log_prior_lui: f64,
}

pub fn run_fig2(config: &SimConfig) -> Result<Vec<Fig2Row>, SimError> {
    config.validate()?;
    let n = config.n_grid[0];
    let cs = m1_constraint();
    let opts = OcBicOptions { qmc: config.qmc, ..OcBicOptions::default() };
    config
        .a_grid
        .iter()
        .map(|&a| {
            let theta = [0.0, a, 2.0 * a];
            let fit = analytic_fit(n, theta, 1.0)?;
            let bic_u = bic::ocbic_plain(&fit)?;
            let bic_0 = bic::ocbic_plain(&analytic_null_fit(n, theta, 1.0)?)?;
            let (ui1, ui2) = bic::ocbic_with_complement(&fit, &cs, Variant::Ui, &opts)?;
            let (lui1, lui2) = bic::ocbic_with_complement(&fit, &cs, Variant::Lui, &opts)?;
            Ok(Fig2Row {
                a,
                log_b_ui_1u: log_bf(&ui1, &bic_u),
                log_b_lui_1u: log_bf(&lui1, &bic_u),
                log_b_ui_12: log_bf(&ui1, &ui2),
                log_b_lui_12: log_bf(&lui1, &lui2),
                log_b_ui_10: log_bf(&ui1, &bic_0),
                log_b_lui_10: log_bf(&lui1, &bic_0),
                se_ui_1u: log_ratio_se(&ui1),
                se_lui_1u: log_ratio_se(&lui1),
                log_prior_lui: lui1.log_prior_prob,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// fig3

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMethod {
    /// BIC choosing between `M0` and `Mu`.
    Bic,
    /// `M0`, `M1`, `M2` with the criterion centered at the estimate.
    Ui,
    /// `M0`, `M1`, `M2` with the criterion centered on the boundary.
    Lui,
}

impl SelectionMethod {
    pub const ALL: [SelectionMethod; 3] = [Self::Bic, Self::Ui, Self::Lui];

    fn as_str(self) -> &'static str {
        match self {
            Self::Bic => "bic",
            Self::Ui => "ui",
            Self::Lui => "lui",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3Row {
    pub a: f64,
    pub n: usize,
    pub method: SelectionMethod,
    pub errors: usize,
    pub replications: usize,
    pub error_rate: f64,
    /// Binomial standard error of `error_rate`.
    pub std_error: f64,
}

/// Which hypothesis each method picked on one data set: 0 for `M0`, 1 for
/// `Mu` or `M1`, 2 for `M2`.
#[derive(Debug, Clone, Copy)]
struct Picks {
    bic: usize,
    ui: usize,
    lui: usize,
}

fn argmin(values: &[f64]) -> usize {
    values.iter().enumerate().fold(0, |best, (i, v)| if *v < values[best] { i } else { best })
}

/// Standardized predictors with population correlation 0.5.
fn simulate_design<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let c = 0.75f64.sqrt();
    let mut x1 = Vec::with_capacity(n);
    let mut x2 = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        x1.push(z1);
        x2.push(0.5 * z1 + c * z2);
    }
    let standardize = |v: &mut Vec<f64>| {
        let (m, s) = glm::mean_sd(v);
        v.iter_mut().for_each(|x| *x = (*x - m) / s);
    };
    standardize(&mut x1);
    standardize(&mut x2);
    (x1, x2)
}

fn fig3_replication(n: usize, a: f64, rep_seed: u64, cs: &ConstraintSet, qmc: QmcConfig) -> Result<Picks, SimError> {
    let mut rng = seed::rng(rep_seed);
    let (x1, x2) = simulate_design(n, &mut rng);
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        a * x1[i] + 2.0 * a * x2[i] + e
    });
    let x = DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => x1[i],
        _ => x2[i],
    });
    let fit = glm::fit_linear_design(&x, &y, coef_names())?;
    let null = glm::fit_linear_design(&DMatrix::from_element(n, 1, 1.0), &y, vec![INTERCEPT.to_string()])?;
    let bic_0 = null.bic();
    let opts = OcBicOptions { qmc: qmc.with_seed(rep_seed), ..OcBicOptions::default() };
    let (ui1, ui2) = bic::ocbic_with_complement(&fit, cs, Variant::Ui, &opts)?;
    let (lui1, lui2) = bic::ocbic_with_complement(&fit, cs, Variant::Lui, &opts)?;
    Ok(Picks {
        bic: argmin(&[bic_0, fit.bic()]),
        ui: argmin(&[bic_0, ui1.ocbic, ui2.ocbic]),
        lui: argmin(&[bic_0, lui1.ocbic, lui2.ocbic]),
    })
}

pub fn run_fig3(config: &SimConfig) -> Result<Vec<Fig3Row>, SimError> {
    config.validate()?;
    let cs = m1_constraint();
    let mut rows = Vec::new();
    for (ai, &a) in config.a_grid.iter().enumerate() {
        // data generated under M0 when a = 0, otherwise inside (a > 0) or outside M1
        let truth = if a == 0.0 { 0 } else if a > 0.0 { 1 } else { 2 };
        for (ni, &n) in config.n_grid.iter().enumerate() {
            let cell_seed = seed::derive(seed::derive(config.seed, ai as u64), ni as u64);
            let picks: Vec<Picks> = (0..config.replications)
                .into_par_iter()
                .map(|rep| fig3_replication(n, a, seed::derive(cell_seed, rep as u64), &cs, config.qmc))
                .collect::<Result<_, _>>()?;
            for method in SelectionMethod::ALL {
                let errors = picks
                    .iter()
                    .filter(|p| match method {
                        SelectionMethod::Bic => p.bic != truth.min(1),
                        SelectionMethod::Ui => p.ui != truth,
                        SelectionMethod::Lui => p.lui != truth,
                    })
                    .count();
                let reps = config.replications;
                let rate = errors as f64 / reps as f64;
                rows.push(Fig3Row {
                    a,
                    n,
                    method,
                    errors,
                    replications: reps,
                    error_rate: rate,
                    std_error: (rate * (1.0 - rate) / reps as f64).sqrt(),
                });
            }
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// fig4

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Row {
    /// `a` of `theta_hat = (0, a, 2a)`.
    pub a: f64,
    pub n: usize,
    /// `B10` when the estimate satisfies `M1`, otherwise `B21`.
    pub comparison: &'static str,
    pub log_b_oracle: f64,
    pub oracle_std_error: f64,
    pub log_b_approx: f64,
    /// `(log B - log B_approx) / log B`.
    pub relative_error: f64,
    pub relative_error_se: f64,
    /// Smallest effective sample size among the integrals involved.
    pub min_ess: f64,
}

/// `-(n/2) ln RSS(theta)`: the regression likelihood with `sigma^2` integrated
/// out under `1/sigma^2`, up to a constant shared by all models at that `n`.
fn profile_loglik(n: usize, rss_min: f64, gram: &DMatrix<f64>, center: &DVector<f64>, theta: &[f64]) -> f64 {
    let diff = DVector::from_column_slice(theta) - center;
    -0.5 * n as f64 * (rss_min + diff.dot(&(gram * &diff))).ln()
}

fn oracle_integral(
    fit: &FittedModel,
    prior_mean: &DVector<f64>,
    region: &Region,
    gram: &DMatrix<f64>,
    rss_min: f64,
    draws: usize,
    seed: u64,
) -> Result<MarginalLikelihoodEstimate, SimError> {
    let n = fit.n_obs();
    let center = fit.estimates().clone();
    let proposal = Proposal::toward_region(&center, &(fit.covariance() * 2.0), region)?;
    let config = BruteForceConfig::new(draws, seed).with_proposal(proposal);
    let ll = |t: &[f64]| profile_loglik(n, rss_min, gram, &center, t);
    Ok(oracle::marginal_likelihood_bruteforce(ll, prior_mean, &fit.unit_info_covariance(), region, &config)?)
}

fn fig4_cell(a: f64, n: usize, cell_seed: u64, config: &SimConfig, cs: &ConstraintSet) -> Result<Fig4Row, SimError> {
    let theta = [0.0, a, 2.0 * a];
    let fit = analytic_fit(n, theta, 1.0)?;
    let null = analytic_null_fit(n, theta, 1.0)?;
    let opts = OcBicOptions { qmc: config.qmc.with_seed(cell_seed), ..OcBicOptions::default() };
    let (m1, m2) = bic::ocbic_with_complement(&fit, cs, Variant::Lui, &opts)?;

    let gram = design_gram(n);
    let rss = n as f64;
    let lui_mean = bic::boundary_projection(&fit, cs)?;
    let ml1 = oracle_integral(&fit, &lui_mean, &Region::Inside(cs.clone()), &gram, rss, config.oracle_draws, seed::derive(cell_seed, 1))?;
    let supported = cs.contains(fit.estimates().as_slice());
    let (comparison, log_b_approx, ml_other) = if supported {
        let gram0 = DMatrix::from_element(1, 1, n as f64);
        let rss0 = (n * n) as f64 * null.covariance()[(0, 0)];
        let ml0 = oracle_integral(&null, null.estimates(), &Region::Unconstrained, &gram0, rss0, config.oracle_draws, seed::derive(cell_seed, 0))?;
        ("B10", -0.5 * (m1.ocbic - null.bic()), ml0)
    } else {
        let outside = Region::Outside(vec![cs.clone()]);
        let ml2 = oracle_integral(&fit, &lui_mean, &outside, &gram, rss, config.oracle_draws, seed::derive(cell_seed, 2))?;
        ("B21", -0.5 * (m2.ocbic - m1.ocbic), ml2)
    };
    let (log_b_oracle, oracle_std_error) = if supported {
        (ml1.log_ml - ml_other.log_ml, ml1.std_error.hypot(ml_other.std_error))
    } else {
        (ml_other.log_ml - ml1.log_ml, ml1.std_error.hypot(ml_other.std_error))
    };
    let relative_error = (log_b_oracle - log_b_approx) / log_b_oracle;
    Ok(Fig4Row {
        a,
        n,
        comparison,
        log_b_oracle,
        oracle_std_error,
        log_b_approx,
        relative_error,
        relative_error_se: oracle_std_error * log_b_approx.abs() / (log_b_oracle * log_b_oracle),
        min_ess: ml1.ess.min(ml_other.ess),
    })
}

pub fn run_fig4(config: &SimConfig) -> Result<Vec<Fig4Row>, SimError> {
    config.validate()?;
    let cs = m1_constraint();
    let mut rows = Vec::new();
    for (ai, &a) in config.a_grid.iter().enumerate() {
        if a == 0.0 {
            return Err(SimError::InvalidConfig("fig4 needs a nonzero effect multiplier".into()));
        }
        for (ni, &n) in config.n_grid.iter().enumerate() {
            let cell_seed = seed::derive(seed::derive(config.seed, ai as u64), ni as u64);
            rows.push(fig4_cell(a, n, cell_seed, config, &cs)?);
        }
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// output

/// Rows of any experiment, ready for writing.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SimTable {
    Fig2(Vec<Fig2Row>),
    Fig3(Vec<Fig3Row>),
    Fig4(Vec<Fig4Row>),
}

pub fn run(config: &SimConfig) -> Result<SimTable, SimError> {
    Ok(match config.experiment {
        Experiment::Fig2 => SimTable::Fig2(run_fig2(config)?),
        Experiment::Fig3 => SimTable::Fig3(run_fig3(config)?),
        Experiment::Fig4 => SimTable::Fig4(run_fig4(config)?),
    })
}

impl SimTable {
    /// Tab-separated table preceded by a `#` line recording the config.
    pub fn to_tsv(&self, config: &SimConfig) -> String {
        let mut out = config.header();
        match self {
            SimTable::Fig2(rows) => {
                out.push_str("a\tlogB_UI_1u\tlogB_LUI_1u\tlogB_UI_12\tlogB_LUI_12\tlogB_UI_10\tlogB_LUI_10\tse_UI_1u\tse_LUI_1u\tlog_prior_LUI\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        r.a,
                        r.log_b_ui_1u,
                        r.log_b_lui_1u,
                        r.log_b_ui_12,
                        r.log_b_lui_12,
                        r.log_b_ui_10,
                        r.log_b_lui_10,
                        r.se_ui_1u,
                        r.se_lui_1u,
                        r.log_prior_lui
                    );
                }
            }
            SimTable::Fig3(rows) => {
                out.push_str("a\tn\tmethod\terrors\treplications\terror_rate\tstd_error\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        r.a,
                        r.n,
                        r.method.as_str(),
                        r.errors,
                        r.replications,
                        r.error_rate,
                        r.std_error
                    );
                }
            }
            SimTable::Fig4(rows) => {
                out.push_str("a\tn\tcomparison\tlogB_oracle\toracle_se\tlogB_approx\trelative_error\trelative_error_se\tmin_ess\n");
                for r in rows {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                        r.a,
                        r.n,
                        r.comparison,
                        r.log_b_oracle,
                        r.oracle_std_error,
                        r.log_b_approx,
                        r.relative_error,
                        r.relative_error_se,
                        r.min_ess
                    );
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("rows serialize")
    }
}
