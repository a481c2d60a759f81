//! Reference marginal likelihoods by direct integration, and the one-dimensional
//! boundary Taylor diagnostic.
//!
//! [`marginal_likelihood_bruteforce`] estimates
//!
//! ```text
//! ln ∫_region L(theta) p(theta) / P(region) dtheta
//! ```
//!
//! for a normal prior `p` truncated to a region. Without a proposal it is
//! rejection sampling from the prior (log-mean-exp over accepted draws). With
//! a proposal the integral is importance sampled from a defensive mixture of
//! the prior and a Gaussian proposal, and the prior mass of the region comes
//! from an equal number of separate prior draws.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constraints::ConstraintSet;
use crate::linalg;
use crate::normal;
use crate::seed;

const MAX_DIM: usize = 6;
const MIN_ACCEPTANCE: f64 = 1e-4;
const BATCH: usize = 1 << 15;
const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("dimension {0} is outside the supported range 1..=6")]
    Dimension(usize),
    #[error("acceptance rate {rate:.2e} is below 1e-4; the region is too small for rejection sampling")]
    AcceptanceTooLow { rate: f64 },
    #[error("covariance is not positive definite")]
    NotPositiveDefinite,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("log-likelihood is not finite at {0:?}")]
    NonFinite(Vec<f64>),
    #[error("slope at the boundary is {slope}; the first-order expansion needs a negative slope")]
    FirstOrderInvalid { slope: f64 },
    #[error("curvature at the mode is {0}; the function is not concave there")]
    NotConcave(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// Normal density with cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct Gaussian {
    mean: DVector<f64>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl Gaussian {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, OracleError> {
        let d = mean.len();
        if cov.shape() != (d, d) {
            return Err(OracleError::DimensionMismatch(format!("mean {d}, covariance {}x{}", cov.nrows(), cov.ncols())));
        }
        let chol = linalg::symmetrize(&cov).cholesky().ok_or(OracleError::NotPositiveDefinite)?;
        let chol_l = chol.l();
        let log_det: f64 = 2.0 * chol_l.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Self { mean, chol_l, log_norm: -0.5 * (d as f64 * LN_2PI + log_det) })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let z = self
            .chol_l
            .solve_lower_triangular(&(x - &self.mean))
            .expect("triangular factor is nonsingular");
        self.log_norm - 0.5 * z.norm_squared()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut DVector<f64>) {
        let e = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(rng));
        out.copy_from(&self.mean);
        out.gemv(1.0, &self.chol_l, &e, 1.0);
    }
}

/// Where the truncated prior lives.
#[derive(Debug, Clone)]
pub enum Region {
    Unconstrained,
    Inside(ConstraintSet),
    /// Outside every listed set.
    Outside(Vec<ConstraintSet>),
}

impl Region {
    pub fn contains(&self, theta: &[f64]) -> bool {
        match self {
            Region::Unconstrained => true,
            Region::Inside(cs) => cs.contains(theta),
            Region::Outside(sets) => sets.iter().all(|cs| !cs.contains(theta)),
        }
    }

    fn check_dim(&self, d: usize) -> Result<(), OracleError> {
        let sets: Vec<&ConstraintSet> = match self {
            Region::Unconstrained => vec![],
            Region::Inside(cs) => vec![cs],
            Region::Outside(v) => v.iter().collect(),
        };
        if sets.iter().any(|cs| cs.n_params() != d) {
            return Err(OracleError::DimensionMismatch("constraint set and prior differ in dimension".into()));
        }
        Ok(())
    }
}

/// Gaussian importance proposal, mixed with the prior for robustness.
#[derive(Debug, Clone)]
pub struct Proposal {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Share of draws taken from the prior itself.
    pub prior_weight: f64,
}

impl Proposal {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Self {
        Self { mean, cov, prior_weight: 0.1 }
    }

    /// Proposal with covariance `cov` centered at the point of the closed
    /// region nearest to `center` in the `cov` metric. For [`Region::Outside`]
    /// and unconstrained regions the center is used as is.
    pub fn toward_region(center: &DVector<f64>, cov: &DMatrix<f64>, region: &Region) -> Result<Self, OracleError> {
        let mean = match region {
            Region::Inside(cs) if !cs.contains(center.as_slice()) => nearest_point(center, cov, cs)?,
            _ => center.clone(),
        };
        Ok(Self::new(mean, cov.clone()))
    }
}

/// Point of `{R theta >= r}` closest to `center` in the `cov^-1` metric, by
/// enumerating active sets (fine for the handful of rows used here).
fn nearest_point(center: &DVector<f64>, cov: &DMatrix<f64>, cs: &ConstraintSet) -> Result<DVector<f64>, OracleError> {
    let m = cs.n_constraints();
    if m > 12 {
        return Err(OracleError::InvalidConfig("too many constraint rows for active-set enumeration".into()));
    }
    let inv = linalg::spd_inverse(cov).ok_or(OracleError::NotPositiveDefinite)?;
    let (r, b) = (cs.coeff_matrix(), cs.bounds());
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let rows: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let ra = r.select_rows(&rows);
        let ba = DVector::from_iterator(rows.len(), rows.iter().map(|&i| b[i]));
        let sr = cov * ra.transpose();
        let Some(chol) = linalg::symmetrize(&(&ra * &sr)).cholesky() else { continue };
        let theta = center - sr * chol.solve(&(&ra * center - ba));
        let feasible = (r * &theta - b).iter().all(|&v| v >= -1e-10);
        if feasible {
            let diff = &theta - center;
            let dist = diff.dot(&(&inv * &diff));
            if best.as_ref().is_none_or(|(d, _)| dist < *d) {
                best = Some((dist, theta));
            }
        }
    }
    best.map(|(_, t)| t).ok_or_else(|| OracleError::InvalidConfig("constraint region appears empty".into()))
}

#[derive(Debug, Clone)]
pub struct BruteForceConfig {
    pub n_draws: usize,
    pub seed: u64,
    pub proposal: Option<Proposal>,
}

impl BruteForceConfig {
    pub fn new(n_draws: usize, seed: u64) -> Self {
        Self { n_draws, seed, proposal: None }
    }

    pub fn with_proposal(mut self, proposal: Proposal) -> Self {
        self.proposal = Some(proposal);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalLikelihoodEstimate {
    pub log_ml: f64,
    /// Standard error of `log_ml` (delta method).
    pub std_error: f64,
    pub n_draws: usize,
    /// Fraction of draws that landed in the region.
    pub acceptance_rate: f64,
    /// Effective sample size of the final weights.
    pub ess: f64,
}

/// Sums of importance terms `a = w L` over in-region draws, scaled by `exp(-ma)`.
#[derive(Debug, Clone, Copy)]
struct Sums {
    accepted: usize,
    ma: f64,
    sa: f64,
    saa: f64,
}

impl Sums {
    fn empty() -> Self {
        Self { accepted: 0, ma: f64::NEG_INFINITY, sa: 0.0, saa: 0.0 }
    }

    fn from_terms(terms: &[f64]) -> Self {
        if terms.is_empty() {
            return Self::empty();
        }
        let ma = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = Self { accepted: terms.len(), ma, ..Self::empty() };
        for &la in terms {
            let a = (la - ma).exp();
            s.sa += a;
            s.saa += a * a;
        }
        s
    }

    fn merge(self, o: Self) -> Self {
        if o.accepted == 0 {
            return self;
        }
        if self.accepted == 0 {
            return o;
        }
        let ma = self.ma.max(o.ma);
        let (f1, f2) = ((self.ma - ma).exp(), (o.ma - ma).exp());
        Self {
            accepted: self.accepted + o.accepted,
            ma,
            sa: self.sa * f1 + o.sa * f2,
            saa: self.saa * f1 * f1 + o.saa * f2 * f2,
        }
    }
}

/// Marginal likelihood under a normal prior truncated to `region`.
pub fn marginal_likelihood_bruteforce<F>(
    loglik: F,
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    region: &Region,
    config: &BruteForceConfig,
) -> Result<MarginalLikelihoodEstimate, OracleError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = prior_mean.len();
    if d == 0 || d > MAX_DIM {
        return Err(OracleError::Dimension(d));
    }
    if config.n_draws < 1000 {
        return Err(OracleError::InvalidConfig(format!("n_draws must be at least 1000, got {}", config.n_draws)));
    }
    region.check_dim(d)?;
    let prior = Gaussian::new(prior_mean.clone(), prior_cov.clone())?;
    let proposal = match &config.proposal {
        None => None,
        Some(p) => {
            if !(0.0..1.0).contains(&p.prior_weight) {
                return Err(OracleError::InvalidConfig("prior_weight must be in [0, 1)".into()));
            }
            Some((Gaussian::new(p.mean.clone(), p.cov.clone())?, p.prior_weight))
        }
    };

    let n_batches = config.n_draws.div_ceil(BATCH);
    let need_mass = proposal.is_some() && !matches!(region, Region::Unconstrained);
    let batches: Vec<Result<(Sums, usize), OracleError>> = (0..n_batches)
        .into_par_iter()
        .map(|bi| {
            let size = BATCH.min(config.n_draws - bi * BATCH);
            let mut rng = seed::sub_rng(config.seed, bi as u64);
            let mut theta = DVector::zeros(d);
            let mut terms = Vec::with_capacity(size);
            let mut prior_hits = 0;
            for _ in 0..size {
                // log of prior / sampling density
                let log_w = match &proposal {
                    None => {
                        prior.sample(&mut rng, &mut theta);
                        0.0
                    }
                    Some((q, alpha)) => {
                        if need_mass {
                            prior.sample(&mut rng, &mut theta);
                            prior_hits += usize::from(region.contains(theta.as_slice()));
                        }
                        if rng.random::<f64>() < *alpha {
                            prior.sample(&mut rng, &mut theta);
                        } else {
                            q.sample(&mut rng, &mut theta);
                        }
                        let lp = prior.log_pdf(&theta);
                        let a = alpha.ln() + lp;
                        let b = (1.0 - alpha).ln() + q.log_pdf(&theta);
                        let hi = a.max(b);
                        lp - (hi + ((a - hi).exp() + (b - hi).exp()).ln())
                    }
                };
                if !region.contains(theta.as_slice()) {
                    continue;
                }
                let ll = loglik(theta.as_slice());
                if !ll.is_finite() {
                    return Err(OracleError::NonFinite(theta.iter().copied().collect()));
                }
                terms.push(log_w + ll);
            }
            Ok((Sums::from_terms(&terms), prior_hits))
        })
        .collect();
    let mut total = Sums::empty();
    let mut prior_hits = 0;
    for b in batches {
        let (s, h) = b?;
        total = total.merge(s);
        prior_hits += h;
    }

    let n = config.n_draws as f64;
    let (log_ml, std_error, acceptance_rate) = if proposal.is_none() {
        let rate = total.accepted as f64 / n;
        if rate < MIN_ACCEPTANCE {
            return Err(OracleError::AcceptanceTooLow { rate });
        }
        let k = total.accepted as f64;
        let var = (total.saa / k - (total.sa / k).powi(2)).max(0.0);
        (total.sa.ln() + total.ma - k.ln(), (var / k).sqrt() / (total.sa / k), rate)
    } else {
        // Importance-sampled integral over the region, divided by the prior
        // mass of the region estimated from separate prior draws.
        let rate = if need_mass { prior_hits as f64 / n } else { 1.0 };
        if rate < MIN_ACCEPTANCE {
            return Err(OracleError::AcceptanceTooLow { rate });
        }
        if total.accepted == 0 {
            return Err(OracleError::InvalidConfig("no proposal draw landed in the region".into()));
        }
        let mean_a = total.sa / n;
        let var_a = (total.saa / n - mean_a * mean_a).max(0.0);
        let rel_a = (var_a / n).sqrt() / mean_a;
        let rel_mass = if need_mass { ((1.0 - rate) / (rate * n)).sqrt() } else { 0.0 };
        (mean_a.ln() + total.ma - rate.ln(), rel_a.hypot(rel_mass), rate)
    };
    let ess = total.sa * total.sa / total.saa;
    Ok(MarginalLikelihoodEstimate { log_ml, std_error, n_draws: config.n_draws, acceptance_rate, ess })
}

// ---------------------------------------------------------------------------
// One-dimensional boundary diagnostic

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TaylorDiagnostic {
    /// Laplace expansion at the unconstrained mode, integrated over `theta >= 0`.
    pub second_order_logml: f64,
    /// Linear expansion at the boundary: `g(0) - ln(-g'(0))`.
    pub first_order_logml: f64,
}

fn curvature<G1: Fn(f64) -> f64>(g1: &G1, at: f64) -> f64 {
    let h = 1e-4 * at.abs().max(1.0);
    (g1(at + h) - g1(at - h)) / (2.0 * h)
}

/// `ln ∫_0^∞ exp(g)` from the quadratic expansion of `g` at `mode`.
pub fn second_order_logml<G, G1>(g: G, g1: G1, mode: f64) -> Result<f64, OracleError>
where
    G: Fn(f64) -> f64,
    G1: Fn(f64) -> f64,
{
    let c = -curvature(&g1, mode);
    if !(c > 0.0) {
        return Err(OracleError::NotConcave(-c));
    }
    Ok(g(mode) + 0.5 * (LN_2PI - c.ln()) + normal::log_cdf(mode * c.sqrt()))
}

/// `ln ∫_0^∞ exp(g)` from the linear expansion of `g` at zero.
pub fn first_order_logml<G, G1>(g: G, g1: G1) -> Result<f64, OracleError>
where
    G: Fn(f64) -> f64,
    G1: Fn(f64) -> f64,
{
    let slope = g1(0.0);
    if !(slope < 0.0) {
        return Err(OracleError::FirstOrderInvalid { slope });
    }
    Ok(g(0.0) - (-slope).ln())
}

/// Both expansions; fails when the first-order branch does not apply.
pub fn taylor_diag_1d<G, G1>(g: G, g1: G1, mode_unconstrained: f64) -> Result<TaylorDiagnostic, OracleError>
where
    G: Fn(f64) -> f64,
    G1: Fn(f64) -> f64,
{
    let first_order_logml = first_order_logml(&g, &g1)?;
    let second_order_logml = second_order_logml(&g, &g1, mode_unconstrained)?;
    Ok(TaylorDiagnostic { second_order_logml, first_order_logml })
}

/// `ln ∫_0^∞ exp(g(x)) dx` by double-exponential quadrature.
///
/// `center` and `scale` locate the bulk of the integrand; the half-line is
/// split there so that narrow peaks are not missed.
pub fn half_line_log_integral<G: Fn(f64) -> f64>(g: G, center: f64, scale: f64) -> f64 {
    let a = center.max(0.0);
    let b = a + 40.0 * scale;
    let reference = g(a).max(g(0.0));
    let f = |x: f64| (g(x) - reference).exp();
    let tol = 1e-14;
    let mut total = 0.0;
    if a > 0.0 {
        total += quadrature::integrate(f, 0.0, a, tol).integral;
    }
    total += quadrature::integrate(f, a, b, tol).integral;
    // tail beyond b via x = b + t / (1 - t)
    total += quadrature::integrate(|t: f64| f(b + t / (1.0 - t)) / ((1.0 - t) * (1.0 - t)), 0.0, 1.0, tol).integral;
    reference + total.ln()
}
