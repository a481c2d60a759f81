//! Order-constrained BICs, Bayes factors and posterior model probabilities.
//!
//! For a model whose parameters satisfy `R theta > r` the criterion is
//!
//! ```text
//! -2 loglik + d ln n - 2 ln Pr(R theta > r | data) + 2 ln Pr_prior(R theta > r)
//! ```
//!
//! where the posterior probability uses `N(theta_hat, Sigma_hat)` and the prior
//! probability uses a normal prior with covariance `n Sigma_hat`: centered at
//! the estimate (unit information, [`Variant::Ui`]) or on the constraint
//! boundary (local unit information, [`Variant::Lui`]).

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use thiserror::Error;

use crate::constraints::ConstraintSet;
use crate::linalg;
use crate::model::FittedModel;
use crate::mvn::{self, Method, MvnError, MvnRegionProblem, QmcConfig, RegionProbability};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BicError {
    #[error("constraint set is over {found:?} but the fit has coefficients {expected:?}")]
    NameMismatch { expected: Vec<String>, found: Vec<String> },
    #[error("a complement needs at least one constraint set")]
    ComplementWithoutConstraints,
    #[error("constraint regions overlap: {fraction:.4} of posterior draws fall in more than one region")]
    Overlap { fraction: f64 },
    #[error("constraint regions overlap: complement {which} probability is {value:.3e} (std. error {std_error:.1e})")]
    NegativeComplement { which: &'static str, value: f64, std_error: f64 },
    #[error("{0} probability underflowed; the Bayes factor is not finite")]
    Underflow(&'static str),
    #[error("at least two models are needed, got {0}")]
    TooFewModels(usize),
    #[error("invalid prior model probabilities: {0}")]
    InvalidPriorProbs(String),
    #[error("non-finite criterion value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Mvn(#[from] MvnError),
}

impl BicError {
    /// Errors caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            BicError::Overlap { .. }
                | BicError::NegativeComplement { .. }
                | BicError::Underflow(_)
                | BicError::NonFinite(_)
                | BicError::Mvn(MvnError::NotPositiveDefinite | MvnError::NotPositiveSemidefinite)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Prior centered at the estimate.
    Ui,
    /// Prior centered on the constraint boundary, prior-fit term dropped.
    Lui,
    /// Prior centered on the constraint boundary, prior-fit term kept.
    LuiFull,
    /// No constraints: the ordinary BIC.
    Plain,
    /// A criterion value supplied directly rather than computed.
    Override,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Ui => "ui",
            Variant::Lui => "lui",
            Variant::LuiFull => "lui-full",
            Variant::Plain => "plain",
            Variant::Override => "override",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ui" => Ok(Variant::Ui),
            "lui" => Ok(Variant::Lui),
            "lui-full" => Ok(Variant::LuiFull),
            other => Err(format!("unknown variant {other:?} (expected lui or ui)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OcBicOptions {
    pub qmc: QmcConfig,
    /// Posterior draws used to check that complemented regions are disjoint.
    pub overlap_draws: usize,
}

impl Default for OcBicOptions {
    fn default() -> Self {
        Self { qmc: QmcConfig::default(), overlap_draws: 100_000 }
    }
}

impl OcBicOptions {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { qmc: self.qmc.with_seed(seed), ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OcBicResult {
    pub label: String,
    pub variant: Variant,
    pub ocbic: f64,
    pub minus2_loglik: f64,
    pub penalty: f64,
    pub log_post_prob: f64,
    pub log_prior_prob: f64,
    /// Quadratic prior-fit term added by [`Variant::LuiFull`]; zero otherwise.
    pub prior_fit_term: f64,
    pub post_prob: Option<RegionProbability>,
    pub prior_prob: Option<RegionProbability>,
    pub complement: bool,
    pub n_obs: usize,
    pub n_params: usize,
    pub qmc: Option<QmcConfig>,
    pub warnings: Vec<String>,
}

impl OcBicResult {
    /// A criterion value taken as given, for replaying published tables.
    pub fn from_value(label: impl Into<String>, value: f64) -> Self {
        Self {
            label: label.into(),
            variant: Variant::Override,
            ocbic: value,
            minus2_loglik: value,
            penalty: 0.0,
            log_post_prob: 0.0,
            log_prior_prob: 0.0,
            prior_fit_term: 0.0,
            post_prob: None,
            prior_prob: None,
            complement: false,
            n_obs: 0,
            n_params: 0,
            qmc: None,
            warnings: Vec::new(),
        }
    }

    /// The criterion rebuilt from its parts.
    pub fn recomposed(&self) -> f64 {
        self.minus2_loglik + self.penalty - 2.0 * self.log_post_prob + 2.0 * self.log_prior_prob + self.prior_fit_term
    }

    /// `ln(Pr_post / Pr_prior)`, the log Bayes factor against the unconstrained model.
    pub fn log_bayes_factor_vs_unconstrained(&self) -> f64 {
        self.log_post_prob - self.log_prior_prob
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }
}

fn check_names(fit: &FittedModel, sets: &[ConstraintSet]) -> Result<(), BicError> {
    for cs in sets {
        if cs.param_names() != fit.coef_names() {
            return Err(BicError::NameMismatch {
                expected: fit.coef_names().to_vec(),
                found: cs.param_names().to_vec(),
            });
        }
    }
    Ok(())
}

fn intersect_all(sets: &[ConstraintSet]) -> Result<ConstraintSet, BicError> {
    let mut acc = sets[0].clone();
    for cs in &sets[1..] {
        acc = acc.intersect(cs).map_err(|e| BicError::NonFinite(e.to_string()))?;
    }
    Ok(acc)
}

fn label_for(sets: &[ConstraintSet], complement: bool) -> String {
    if sets.is_empty() {
        return "unconstrained".to_string();
    }
    let inner = sets.iter().map(|s| s.label()).collect::<Vec<_>>().join(" | ");
    if complement {
        format!("not ({inner})")
    } else {
        inner
    }
}

/// Posterior and prior region problems for one constraint set.
fn region_problems(
    fit: &FittedModel,
    cs: &ConstraintSet,
    variant: Variant,
) -> Result<(MvnRegionProblem, MvnRegionProblem), BicError> {
    let post = mvn::reduce_constraints_allowing_redundancy(
        cs.coeff_matrix(),
        cs.bounds(),
        fit.estimates(),
        fit.covariance(),
    )?;
    let prior_mean = match variant {
        Variant::Ui => post.mean().clone(),
        _ => DVector::zeros(post.dim()),
    };
    let prior_cov = post.cov() * fit.n_obs() as f64;
    let prior = if post.is_semidefinite() {
        MvnRegionProblem::new_semidefinite(prior_mean, prior_cov)?
    } else {
        MvnRegionProblem::new(prior_mean, prior_cov)?
    };
    Ok((post, prior))
}

/// Posterior and prior probabilities of each set, with derived seeds.
fn region_terms(
    fit: &FittedModel,
    sets: &[ConstraintSet],
    variant: Variant,
    opts: &OcBicOptions,
) -> Result<Vec<(RegionProbability, RegionProbability)>, BicError> {
    sets.iter()
        .enumerate()
        .map(|(t, cs)| {
            let (post, prior) = region_problems(fit, cs, variant)?;
            let cfg = |stream: u64| opts.qmc.with_seed(seed::derive(opts.qmc.seed, stream));
            let p = mvn::region_prob_qmc(&post, &cfg(2 * t as u64))?;
            let q = mvn::region_prob_qmc(&prior, &cfg(2 * t as u64 + 1))?;
            Ok((p, q))
        })
        .collect()
}

/// `1 - sum(parts)`, with a hard error if clearly negative.
fn complement_prob(parts: &[&RegionProbability], which: &'static str) -> Result<RegionProbability, BicError> {
    let total: f64 = parts.iter().map(|p| p.estimate).sum();
    let se = parts.iter().map(|p| p.std_error.powi(2)).sum::<f64>().sqrt();
    let value = 1.0 - total;
    if value < -3.0 * se {
        return Err(BicError::NegativeComplement { which, value, std_error: se });
    }
    let method = if parts.iter().all(|p| p.method == Method::ClosedForm) { Method::ClosedForm } else { Method::Qmc };
    let n = parts.iter().map(|p| p.n_samples).sum();
    Ok(RegionProbability::from_estimate(value.max(0.0), se, method, n))
}

/// Complement probability for a single set, exact in the tails when the set has one row.
fn single_complement(
    fit: &FittedModel,
    cs: &ConstraintSet,
    variant: Variant,
    (post, prior): (&RegionProbability, &RegionProbability),
) -> Result<(RegionProbability, RegionProbability), BicError> {
    if cs.n_constraints() == 1 {
        let (p, q) = region_problems(fit, cs, variant)?;
        let flip = |prob: &MvnRegionProblem| -> Result<RegionProbability, BicError> {
            let neg = MvnRegionProblem::new(-prob.mean(), prob.cov().clone())?;
            Ok(mvn::region_prob_qmc(&neg, &QmcConfig::default())?)
        };
        return Ok((flip(&p)?, flip(&q)?));
    }
    Ok((complement_prob(&[post], "posterior")?, complement_prob(&[prior], "prior")?))
}

/// Fraction of posterior draws that satisfy two or more of the sets.
fn overlap_fraction(fit: &FittedModel, sets: &[ConstraintSet], opts: &OcBicOptions) -> f64 {
    let l = fit.covariance().clone().cholesky().expect("validated covariance").l();
    let d = fit.estimates().len();
    let mut rng = seed::sub_rng(opts.qmc.seed, u64::MAX);
    let mut shared = 0usize;
    let mut theta = DVector::zeros(d);
    for _ in 0..opts.overlap_draws {
        let e = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
        theta.copy_from(fit.estimates());
        theta.gemv(1.0, &l, &e, 1.0);
        let inside = sets.iter().filter(|cs| cs.contains(theta.as_slice())).count();
        shared += usize::from(inside >= 2);
    }
    shared as f64 / opts.overlap_draws.max(1) as f64
}

fn check_overlap(fit: &FittedModel, sets: &[ConstraintSet], opts: &OcBicOptions) -> Result<(), BicError> {
    if sets.len() < 2 || opts.overlap_draws == 0 {
        return Ok(());
    }
    let f = overlap_fraction(fit, sets, opts);
    let mc_se = (f * (1.0 - f) / opts.overlap_draws as f64).sqrt();
    if f > 0.001_f64.max(3.0 * mc_se) {
        return Err(BicError::Overlap { fraction: f });
    }
    Ok(())
}

fn assemble(
    fit: &FittedModel,
    label: String,
    variant: Variant,
    complement: bool,
    terms: Option<(RegionProbability, RegionProbability)>,
    prior_fit_term: f64,
    opts: &OcBicOptions,
) -> Result<OcBicResult, BicError> {
    let minus2_loglik = -2.0 * fit.loglik();
    let penalty = fit.n_params() as f64 * (fit.n_obs() as f64).ln();
    let mut warnings = Vec::new();
    let (log_post_prob, log_prior_prob, post_prob, prior_prob, qmc) = match terms {
        None => (0.0, 0.0, None, None, None),
        Some((p, q)) => {
            if p.underflow {
                warnings.push(format!(
                    "posterior probability is zero to working precision; floor ln = {:.2} used",
                    p.log_estimate
                ));
            }
            if q.underflow {
                warnings.push(format!(
                    "prior probability is zero to working precision; floor ln = {:.2} used",
                    q.log_estimate
                ));
            }
            (p.log_estimate, q.log_estimate, Some(p), Some(q), Some(opts.qmc))
        }
    };
    let result = OcBicResult {
        label,
        variant,
        ocbic: 0.0,
        minus2_loglik,
        penalty,
        log_post_prob,
        log_prior_prob,
        prior_fit_term,
        post_prob,
        prior_prob,
        complement,
        n_obs: fit.n_obs(),
        n_params: fit.n_params(),
        qmc,
        warnings,
    };
    let ocbic = result.recomposed();
    if !ocbic.is_finite() {
        return Err(BicError::NonFinite(format!("{} for {}", ocbic, result.label)));
    }
    Ok(OcBicResult { ocbic, ..result })
}

/// Ordinary BIC of the unconstrained model.
pub fn ocbic_plain(fit: &FittedModel) -> Result<OcBicResult, BicError> {
    assemble(fit, label_for(&[], false), Variant::Plain, false, None, 0.0, &OcBicOptions::default())
}

/// Criterion for the region given by `sets` (jointly), or for the complement
/// of their union when `complement` is set.
///
/// With no sets this is the ordinary BIC.
pub fn ocbic(
    fit: &FittedModel,
    sets: &[ConstraintSet],
    complement: bool,
    variant: Variant,
    opts: &OcBicOptions,
) -> Result<OcBicResult, BicError> {
    if sets.is_empty() {
        if complement {
            return Err(BicError::ComplementWithoutConstraints);
        }
        return ocbic_plain(fit);
    }
    check_names(fit, sets)?;
    let variant = match variant {
        Variant::Ui => Variant::Ui,
        _ => Variant::Lui,
    };
    let label = label_for(sets, complement);
    if !complement {
        let joint = intersect_all(sets)?;
        let terms = region_terms(fit, std::slice::from_ref(&joint), variant, opts)?.remove(0);
        return assemble(fit, label, variant, false, Some(terms), 0.0, opts);
    }
    check_overlap(fit, sets, opts)?;
    let terms = region_terms(fit, sets, variant, opts)?;
    let pair = if sets.len() == 1 {
        single_complement(fit, &sets[0], variant, (&terms[0].0, &terms[0].1))?
    } else {
        let posts: Vec<&RegionProbability> = terms.iter().map(|t| &t.0).collect();
        let priors: Vec<&RegionProbability> = terms.iter().map(|t| &t.1).collect();
        (complement_prob(&posts, "posterior")?, complement_prob(&priors, "prior")?)
    };
    assemble(fit, label, variant, true, Some(pair), 0.0, opts)
}

/// Criterion with the prior centered on the constraint boundary.
pub fn ocbic_lui(fit: &FittedModel, sets: &[ConstraintSet], complement: bool, opts: &OcBicOptions) -> Result<OcBicResult, BicError> {
    ocbic(fit, sets, complement, Variant::Lui, opts)
}

/// Criterion with the prior centered at the estimate.
pub fn ocbic_ui(fit: &FittedModel, sets: &[ConstraintSet], complement: bool, opts: &OcBicOptions) -> Result<OcBicResult, BicError> {
    ocbic(fit, sets, complement, Variant::Ui, opts)
}

/// Criteria for a constraint set and for its complement, sharing one
/// evaluation of the probability terms.
pub fn ocbic_with_complement(
    fit: &FittedModel,
    cs: &ConstraintSet,
    variant: Variant,
    opts: &OcBicOptions,
) -> Result<(OcBicResult, OcBicResult), BicError> {
    check_names(fit, std::slice::from_ref(cs))?;
    let variant = if variant == Variant::Ui { Variant::Ui } else { Variant::Lui };
    let terms = region_terms(fit, std::slice::from_ref(cs), variant, opts)?.remove(0);
    let flipped = single_complement(fit, cs, variant, (&terms.0, &terms.1))?;
    let sets = std::slice::from_ref(cs);
    let inside = assemble(fit, label_for(sets, false), variant, false, Some(terms), 0.0, opts)?;
    let outside = assemble(fit, label_for(sets, true), variant, true, Some(flipped), 0.0, opts)?;
    Ok((inside, outside))
}

/// `ln(Pr_post / Pr_prior)` for the constrained model against the unconstrained one.
pub fn log_bayes_factor_constrained_vs_unconstrained(
    fit: &FittedModel,
    cs: &ConstraintSet,
    variant: Variant,
    opts: &OcBicOptions,
) -> Result<f64, BicError> {
    let r = ocbic(fit, std::slice::from_ref(cs), false, variant, opts)?;
    if r.post_prob.as_ref().is_some_and(|p| p.underflow) {
        return Err(BicError::Underflow("posterior"));
    }
    if r.prior_prob.as_ref().is_some_and(|p| p.underflow) {
        return Err(BicError::Underflow("prior"));
    }
    Ok(r.log_bayes_factor_vs_unconstrained())
}

/// `Pr_post / Pr_prior` for the constrained model against the unconstrained one.
pub fn bayes_factor_constrained_vs_unconstrained(
    fit: &FittedModel,
    cs: &ConstraintSet,
    variant: Variant,
    opts: &OcBicOptions,
) -> Result<f64, BicError> {
    log_bayes_factor_constrained_vs_unconstrained(fit, cs, variant, opts).map(f64::exp)
}

/// Information-metric projection of the estimate onto `{R theta = r}`:
/// `theta - Sigma R^T (R Sigma R^T)^-1 (R theta - r)`.
pub fn boundary_projection(fit: &FittedModel, cs: &ConstraintSet) -> Result<DVector<f64>, BicError> {
    let (gap, omega, sr) = boundary_parts(fit, cs)?;
    let chol = omega.cholesky().ok_or(MvnError::NotPositiveDefinite)?;
    Ok(fit.estimates() - sr * chol.solve(&gap))
}

fn boundary_parts(fit: &FittedModel, cs: &ConstraintSet) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>), BicError> {
    check_names(fit, std::slice::from_ref(cs))?;
    let r = cs.coeff_matrix();
    if let Some(&row) = linalg::dependent_rows(r, mvn::RANK_TOL).first() {
        return Err(MvnError::RedundantConstraint { row }.into());
    }
    let gap = r * fit.estimates() - cs.bounds();
    let sr = fit.covariance() * r.transpose();
    let omega = linalg::symmetrize(&(r * &sr));
    Ok((gap, omega, sr))
}

/// Local unit-information criterion keeping the prior-fit term
/// `(theta_hat - theta_0)' (n Sigma)^-1 (theta_hat - theta_0)`.
///
/// `theta_0` comes from `null_fit` when given (coefficients it lacks are taken
/// as zero); otherwise it is the [`boundary_projection`] of the estimate.
pub fn ocbic_lui_full(
    fit: &FittedModel,
    cs: &ConstraintSet,
    null_fit: Option<&FittedModel>,
    opts: &OcBicOptions,
) -> Result<OcBicResult, BicError> {
    let (gap, omega, _) = boundary_parts(fit, cs)?;
    let n = fit.n_obs() as f64;
    let prior_fit_term = match null_fit {
        None => {
            let chol = omega.cholesky().ok_or(MvnError::NotPositiveDefinite)?;
            gap.dot(&chol.solve(&gap)) / n
        }
        Some(null) => {
            let theta0 = DVector::from_fn(fit.coef_names().len(), |i, _| {
                null.coef_names()
                    .iter()
                    .position(|c| c == &fit.coef_names()[i])
                    .map_or(0.0, |j| null.estimates()[j])
            });
            let diff = fit.estimates() - theta0;
            let chol = fit.covariance().clone().cholesky().ok_or(MvnError::NotPositiveDefinite)?;
            diff.dot(&chol.solve(&diff)) / n
        }
    };
    let sets = std::slice::from_ref(cs);
    let base = ocbic(fit, sets, false, Variant::Lui, opts)?;
    let terms = (base.post_prob.clone().expect("constrained"), base.prior_prob.clone().expect("constrained"));
    assemble(fit, base.label.clone(), Variant::LuiFull, false, Some(terms), prior_fit_term, opts)
}

/// Posterior model probabilities `pi_t exp(-(BIC_t - min) / 2)`, normalized.
///
/// `prior_probs` defaults to uniform.
pub fn postprob(ocbics: &[f64], prior_probs: Option<&[f64]>) -> Result<Vec<f64>, BicError> {
    let k = ocbics.len();
    if k < 2 {
        return Err(BicError::TooFewModels(k));
    }
    if let Some(v) = ocbics.iter().find(|v| !v.is_finite()) {
        return Err(BicError::NonFinite(v.to_string()));
    }
    let prior: Vec<f64> = match prior_probs {
        None => vec![1.0 / k as f64; k],
        Some(p) => {
            if p.len() != k {
                return Err(BicError::InvalidPriorProbs(format!("{} probabilities for {k} models", p.len())));
            }
            if p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
                return Err(BicError::InvalidPriorProbs("probabilities must be positive".into()));
            }
            let s: f64 = p.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(BicError::InvalidPriorProbs(format!("probabilities sum to {s}, not 1")));
            }
            p.to_vec()
        }
    };
    let min = ocbics.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = ocbics.iter().zip(&prior).map(|(b, p)| p * (-(b - min) / 2.0).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// `a - b` in criterion units.
pub fn bic_difference(a: &OcBicResult, b: &OcBicResult) -> f64 {
    a.ocbic - b.ocbic
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonEntry {
    pub result: OcBicResult,
    pub prior_model_prob: f64,
    pub post_model_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonTable {
    pub entries: Vec<ComparisonEntry>,
}

impl ComparisonTable {
    pub fn new(results: Vec<OcBicResult>, prior_probs: Option<&[f64]>) -> Result<Self, BicError> {
        let values: Vec<f64> = results.iter().map(|r| r.ocbic).collect();
        let post = postprob(&values, prior_probs)?;
        let k = results.len();
        let prior: Vec<f64> = prior_probs.map_or_else(|| vec![1.0 / k as f64; k], <[f64]>::to_vec);
        let entries = results
            .into_iter()
            .zip(prior)
            .zip(post)
            .map(|((result, prior_model_prob), post_model_prob)| ComparisonEntry { result, prior_model_prob, post_model_prob })
            .collect();
        Ok(Self { entries })
    }

    pub fn post_model_probs(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.post_model_prob).collect()
    }

    pub fn prior_model_probs(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.prior_model_prob).collect()
    }

    /// Index of the entry with the smallest criterion.
    pub fn best(&self) -> usize {
        self.entries
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.result.ocbic.total_cmp(&b.1.result.ocbic))
            .map(|(i, _)| i)
            .expect("table has entries")
    }
}

/// Relabel a result, e.g. with a model name from a comparison file.
pub fn relabel(result: OcBicResult, label: impl Into<String>) -> OcBicResult {
    result.with_label(label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::parse_constraints;
    use crate::normal;

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn fit_1d(theta: f64, var: f64, n: usize) -> FittedModel {
        FittedModel::new(names(&["b"]), DVector::from_element(1, theta), DMatrix::from_element(1, 1, var), -100.0, n, 2)
            .unwrap()
    }

    #[test]
    fn table_one_probabilities() {
        let p = postprob(&[3918.46, 3921.98, 3917.84, 3926.13], None).unwrap();
        for (got, want) in p.iter().zip([0.391, 0.067, 0.533, 0.008]) {
            assert!((got - want).abs() <= 0.001, "{p:?}");
        }
    }

    #[test]
    fn table_two_probabilities_and_differences() {
        let p = postprob(&[3177.69, 3154.82, 3170.15], None).unwrap();
        for (got, want) in p.iter().zip([0.0, 1.0, 0.0]) {
            assert!((got - want).abs() <= 0.001, "{p:?}");
        }
        let m0 = OcBicResult::from_value("M0", 3177.69);
        let m1 = OcBicResult::from_value("M1", 3154.82);
        let m3 = OcBicResult::from_value("M3", 3158.18);
        assert!((bic_difference(&m1, &m0) + 22.87).abs() < 1e-9);
        assert!((bic_difference(&m3, &m0) + 19.51).abs() < 1e-9);
        assert_eq!(bic_difference(&m0, &m0), 0.0);
    }

    #[test]
    fn postprob_edge_cases() {
        assert_eq!(postprob(&[5.0, 5.0], None).unwrap(), vec![0.5, 0.5]);
        assert!(matches!(postprob(&[], None), Err(BicError::TooFewModels(0))));
        assert!(postprob(&[1.0, 2.0], Some(&[0.5, 0.6])).is_err());
        let p = postprob(&[1.0, 1.0], Some(&[0.25, 0.75])).unwrap();
        assert!((p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn no_constraints_is_ordinary_bic() {
        let fit = fit_1d(0.3, 0.01, 100);
        let r = ocbic_lui(&fit, &[], false, &OcBicOptions::default()).unwrap();
        assert_eq!(r.ocbic, 200.0 + 2.0 * 100f64.ln());
        assert_eq!(r.variant, Variant::Plain);
        assert_eq!((r.log_post_prob, r.log_prior_prob), (0.0, 0.0));
        assert!(matches!(ocbic_lui(&fit, &[], true, &OcBicOptions::default()), Err(BicError::ComplementWithoutConstraints)));
    }

    #[test]
    fn estimate_on_boundary_gives_ordinary_bic() {
        for var in [0.01, 1.0, 7.0] {
            let fit = fit_1d(0.0, var, 50);
            let cs = parse_constraints(&["b > 0"], fit.coef_names()).unwrap();
            for variant in [Variant::Lui, Variant::Ui] {
                let r = ocbic(&fit, std::slice::from_ref(&cs), false, variant, &OcBicOptions::default()).unwrap();
                assert!((r.post_prob.as_ref().unwrap().estimate - 0.5).abs() < 1e-15);
                assert!((r.prior_prob.as_ref().unwrap().estimate - 0.5).abs() < 1e-15);
                assert!((r.ocbic - fit.bic()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_dimensional_terms_match_closed_form() {
        // estimate two standard errors above zero, n = 100
        let n = 100;
        let fit = fit_1d(0.2, 0.01, n);
        let cs = parse_constraints(&["b > 0"], fit.coef_names()).unwrap();
        let ui = ocbic_ui(&fit, std::slice::from_ref(&cs), false, &OcBicOptions::default()).unwrap();
        let lui = ocbic_lui(&fit, std::slice::from_ref(&cs), false, &OcBicOptions::default()).unwrap();
        assert!((ui.log_post_prob - normal::log_cdf(2.0)).abs() < 1e-14);
        assert!((ui.log_prior_prob - normal::log_cdf(2.0 / (n as f64).sqrt())).abs() < 1e-14);
        assert!((lui.log_prior_prob - 0.5f64.ln()).abs() < 1e-14);
        for r in [&ui, &lui] {
            assert!((r.ocbic - r.recomposed()).abs() < 1e-9);
        }
    }

    #[test]
    fn complement_of_one_row_is_exact() {
        let fit = fit_1d(-12.0, 0.01, 30);
        let cs = parse_constraints(&["b > 0"], fit.coef_names()).unwrap();
        let (inside, outside) = ocbic_with_complement(&fit, &cs, Variant::Lui, &OcBicOptions::default()).unwrap();
        assert!((inside.log_post_prob - normal::log_cdf(-120.0)).abs() < 1e-9);
        assert!(outside.log_post_prob.abs() < 1e-15);
        assert!(inside.post_prob.unwrap().estimate + outside.post_prob.unwrap().estimate - 1.0 < 1e-12);
    }

    #[test]
    fn overlapping_sets_are_rejected() {
        let fit = FittedModel::new(names(&["a", "b"]), DVector::from_vec(vec![0.5, 0.5]), DMatrix::identity(2, 2) * 0.1, -10.0, 40, 3)
            .unwrap();
        let a = parse_constraints(&["a > 0"], fit.coef_names()).unwrap();
        let b = parse_constraints(&["b > 0"], fit.coef_names()).unwrap();
        let err = ocbic_lui(&fit, &[a, b], true, &OcBicOptions::default()).unwrap_err();
        assert!(matches!(err, BicError::Overlap { .. }), "{err:?}");
        assert!(err.is_numerical());
    }

    #[test]
    fn disjoint_sets_complement() {
        let fit = FittedModel::new(names(&["a", "b"]), DVector::from_vec(vec![0.1, 0.3]), DMatrix::identity(2, 2) * 0.05, -10.0, 40, 3)
            .unwrap();
        let s1 = parse_constraints(&["a > b > 0"], fit.coef_names()).unwrap();
        let s2 = parse_constraints(&["b > a > 0"], fit.coef_names()).unwrap();
        let both = ocbic_lui(&fit, &[s1.clone(), s2.clone()], true, &OcBicOptions::default()).unwrap();
        // complement of the positive quadrant
        let expected = 1.0 - normal::cdf(0.1 / 0.05f64.sqrt()) * normal::cdf(0.3 / 0.05f64.sqrt());
        let p = both.post_prob.as_ref().unwrap();
        assert!((p.estimate - expected).abs() < 3.0 * p.std_error + 1e-9, "{p:?} vs {expected}");
        assert!((both.prior_prob.as_ref().unwrap().estimate - 0.75).abs() < 1e-3);
    }

    #[test]
    fn redundant_rows_handled_but_full_form_refuses() {
        let fit = FittedModel::new(
            names(&["class", "education", "income"]),
            DVector::from_vec(vec![0.312, 0.250, 0.041]),
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.067f64.powi(2), 0.075f64.powi(2), 0.072f64.powi(2)])),
            -1950.0,
            1000,
            6,
        )
        .unwrap();
        let cs = parse_constraints(&["education > (class, income) > 0"], fit.coef_names()).unwrap();
        let r = ocbic_lui(&fit, std::slice::from_ref(&cs), false, &OcBicOptions::default()).unwrap();
        assert!(r.post_prob.unwrap().estimate > 0.0);
        assert!(matches!(
            ocbic_lui_full(&fit, &cs, None, &OcBicOptions::default()),
            Err(BicError::Mvn(MvnError::RedundantConstraint { .. }))
        ));
    }

    #[test]
    fn full_form_scalar_term() {
        let (c, var, n) = (0.4, 0.02, 60);
        let fit = fit_1d(c, var, n);
        let cs = parse_constraints(&["b > 0"], fit.coef_names()).unwrap();
        let full = ocbic_lui_full(&fit, &cs, None, &OcBicOptions::default()).unwrap();
        let lui = ocbic_lui(&fit, std::slice::from_ref(&cs), false, &OcBicOptions::default()).unwrap();
        let q = c * c / (n as f64 * var);
        assert!((full.prior_fit_term - q).abs() < 1e-14);
        assert!((full.ocbic - lui.ocbic - q).abs() < 1e-9);
        let boundary = fit_1d(0.0, var, n);
        let on = ocbic_lui_full(&boundary, &cs, None, &OcBicOptions::default()).unwrap();
        let base = ocbic_lui(&boundary, &[cs], false, &OcBicOptions::default()).unwrap();
        assert_eq!(on.ocbic, base.ocbic);
    }

    #[test]
    fn mismatched_names_rejected() {
        let fit = fit_1d(0.1, 0.1, 10);
        let cs = parse_constraints(&["c > 0"], &names(&["c"])).unwrap();
        assert!(matches!(ocbic_lui(&fit, &[cs], false, &OcBicOptions::default()), Err(BicError::NameMismatch { .. })));
    }
}
