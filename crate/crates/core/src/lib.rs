//! Order-constrained BIC: information criteria for models whose parameters
//! satisfy linear inequality constraints `R theta > r`.
//!
//! The criterion adds two region probabilities to the ordinary BIC: the
//! posterior probability that the constraints hold under the unconstrained
//! model and the matching prior probability under a unit-information prior.
//! Both are multivariate normal region probabilities computed by [`mvn`].

pub mod bic;
pub mod constraints;
pub mod glm;
pub mod linalg;
pub mod model;
pub mod mvn;
pub mod normal;
pub mod oracle;
pub mod seed;
pub mod sim;

pub use bic::{
    bic_difference, ocbic, ocbic_lui, ocbic_lui_full, ocbic_plain, ocbic_ui, ocbic_with_complement, postprob, BicError,
    ComparisonEntry, ComparisonTable, OcBicOptions, OcBicResult, Variant,
};
pub use constraints::{parse_constraints, ConstraintError, ConstraintSet};
pub use glm::{DesignSpec, Family, GlmError};
pub use model::{load_csv, load_fit, save_fit, Dataset, FittedModel, ModelError};
pub use mvn::{region_prob_mc, region_prob_qmc, McConfig, Method, MvnError, MvnRegionProblem, QmcConfig, RegionProbability};
pub use oracle::{marginal_likelihood_bruteforce, taylor_diag_1d, MarginalLikelihoodEstimate, OracleError};
pub use sim::{Experiment, SimConfig, SimError, SimTable};
