use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use ocbic::bic::{self, ComparisonTable, OcBicOptions, OcBicResult, Variant};
use ocbic::glm::{self, DesignSpec, Family};
use ocbic::model::{load_csv, load_fit, FittedModel};
use ocbic::mvn::{self, McConfig, MvnRegionProblem, QmcConfig, RegionProbability};
use ocbic::{parse_constraints, seed, ConstraintSet, SimConfig};
use serde::Deserialize;

use crate::error::CliError;
use crate::{EngineArg, EngineArgs, Format, VariantArg};

/// BIC gap conventionally read as very strong evidence.
const STRONG_EVIDENCE_GAP: f64 = 10.0;

fn write_output(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn options(engine: &EngineArgs) -> Result<OcBicOptions, CliError> {
    let qmc = QmcConfig { points: engine.points, randomizations: engine.randomizations, seed: engine.seed };
    qmc.validate()?;
    Ok(OcBicOptions { qmc, ..OcBicOptions::default() })
}

pub fn fit(
    data: &Path,
    outcome: &str,
    predictors: &[String],
    family: &str,
    standardize: bool,
    intercept: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let family: Family = family.parse().map_err(CliError::Usage)?;
    let dataset = load_csv(data, outcome, predictors)?;
    if dataset.dropped_rows() > 0 {
        eprintln!("dropped {} rows with missing values", dataset.dropped_rows());
    }
    let names: Vec<&str> = predictors.iter().map(String::as_str).collect();
    let mut spec = DesignSpec::new(outcome, &names).family(family).standardized(standardize);
    if !intercept {
        spec = spec.without_intercept();
    }
    let model = glm::fit(&dataset, &spec)?;
    write_output(&(model.to_json() + "\n"), out)
}

/// Without `complement` all strings form one joint set; with it each string
/// is its own set.
fn constraint_sets(texts: &[String], complement: bool, names: &[String]) -> Result<Vec<ConstraintSet>, CliError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    if complement {
        texts.iter().map(|t| Ok(parse_constraints(std::slice::from_ref(t), names)?)).collect()
    } else {
        Ok(vec![parse_constraints(texts, names)?])
    }
}

fn evaluate(
    fit: &FittedModel,
    texts: &[String],
    complement: bool,
    variant: VariantArg,
    null_fit: Option<&FittedModel>,
    opts: &OcBicOptions,
) -> Result<OcBicResult, CliError> {
    let sets = constraint_sets(texts, complement, fit.coef_names())?;
    match variant {
        VariantArg::LuiFull => {
            if complement {
                return Err(CliError::Usage("--variant lui-full does not support --complement".into()));
            }
            match sets.first() {
                Some(cs) => Ok(bic::ocbic_lui_full(fit, cs, null_fit, opts)?),
                None => Ok(bic::ocbic_plain(fit)?),
            }
        }
        VariantArg::Lui => Ok(bic::ocbic(fit, &sets, complement, Variant::Lui, opts)?),
        VariantArg::Ui => Ok(bic::ocbic(fit, &sets, complement, Variant::Ui, opts)?),
    }
}

fn prob_cells(p: &Option<RegionProbability>) -> (String, String) {
    match p {
        Some(p) => (p.estimate.to_string(), p.std_error.to_string()),
        None => ("1".into(), "0".into()),
    }
}

fn result_tsv(r: &OcBicResult) -> String {
    let mut out = String::from(
        "label\tvariant\tocbic\tminus2_loglik\tpenalty\tlog_post_prob\tpost_prob\tpost_se\tlog_prior_prob\tprior_prob\tprior_se\tprior_fit_term\tn\td\n",
    );
    let (post, post_se) = prob_cells(&r.post_prob);
    let (prior, prior_se) = prob_cells(&r.prior_prob);
    let _ = writeln!(
        out,
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
        r.label,
        r.variant,
        r.ocbic,
        r.minus2_loglik,
        r.penalty,
        r.log_post_prob,
        post,
        post_se,
        r.log_prior_prob,
        prior,
        prior_se,
        r.prior_fit_term,
        r.n_obs,
        r.n_params
    );
    if let Some(p) = &r.post_prob {
        let _ = writeln!(out, "# posterior probability that the constraints hold: {:.4} (std. error {:.1e})", p.estimate, p.std_error);
    }
    out
}

pub fn eval(
    fit_path: &Path,
    texts: &[String],
    complement: bool,
    variant: VariantArg,
    null_fit: Option<&Path>,
    engine: &EngineArgs,
    format: Format,
) -> Result<(), CliError> {
    let fit = load_fit(fit_path)?;
    let null = null_fit.map(load_fit).transpose()?;
    if null.is_some() && variant != VariantArg::LuiFull {
        return Err(CliError::Usage("--null-fit only applies to --variant lui-full".into()));
    }
    let result = evaluate(&fit, texts, complement, variant, null.as_ref(), &options(engine)?)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let text = match format {
        Format::Tsv => result_tsv(&result),
        Format::Json => result.to_json() + "\n",
    };
    write_output(&text, None)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecEntry {
    label: String,
    #[serde(default)]
    fit_path: Option<PathBuf>,
    /// Criterion value taken as given instead of computed from a fit.
    #[serde(default)]
    bic_override: Option<f64>,
    #[serde(default)]
    constraints: Vec<String>,
    #[serde(default)]
    complement: bool,
}

fn advisory(table: &ComparisonTable) -> String {
    let best = table.best();
    let best_value = table.entries[best].result.ocbic;
    let runner_up = table
        .entries
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != best)
        .map(|(_, e)| e.result.ocbic - best_value)
        .fold(f64::INFINITY, f64::min);
    let reading = if runner_up >= STRONG_EVIDENCE_GAP { "at least" } else { "below" };
    format!(
        "lowest criterion: {}; next model is {runner_up:.2} higher, {reading} the {STRONG_EVIDENCE_GAP}-point difference conventionally read as very strong evidence",
        table.entries[best].result.label
    )
}

pub fn compare(
    spec_path: &Path,
    prior_probs: Option<&[f64]>,
    variant: VariantArg,
    engine: &EngineArgs,
    format: Format,
) -> Result<(), CliError> {
    let text = fs::read_to_string(spec_path).map_err(|source| CliError::Io { path: spec_path.display().to_string(), source })?;
    let entries: Vec<SpecEntry> = serde_json::from_str(&text)?;
    if entries.len() < 2 {
        return Err(CliError::Usage(format!("compare needs at least two models, the model list has {}", entries.len())));
    }
    let base = spec_path.parent().unwrap_or(Path::new("."));
    let opts = options(engine)?;
    let mut results = Vec::with_capacity(entries.len());
    for (i, entry) in entries.iter().enumerate() {
        let result = match (&entry.fit_path, entry.bic_override) {
            (Some(path), None) => {
                let fit = load_fit(base.join(path))?;
                let opts = opts.with_seed(seed::derive(engine.seed, i as u64));
                evaluate(&fit, &entry.constraints, entry.complement, variant, None, &opts)?
            }
            (None, Some(value)) => {
                if !entry.constraints.is_empty() || entry.complement {
                    return Err(CliError::Usage(format!("entry '{}': bic_override cannot be combined with constraints", entry.label)));
                }
                OcBicResult::from_value(entry.label.clone(), value)
            }
            _ => {
                return Err(CliError::Usage(format!("entry '{}' needs exactly one of fit_path and bic_override", entry.label)));
            }
        };
        for w in &result.warnings {
            eprintln!("warning: {}: {w}", entry.label);
        }
        results.push(bic::relabel(result, entry.label.clone()));
    }
    let table = ComparisonTable::new(results, prior_probs)?;
    let note = advisory(&table);
    let text = match format {
        Format::Tsv => {
            let mut out = String::from("label\tocbic\tlog_post_prob\tlog_prior_prob\tprior_model_prob\tpost_model_prob\n");
            for e in &table.entries {
                let r = &e.result;
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    r.label, r.ocbic, r.log_post_prob, r.log_prior_prob, e.prior_model_prob, e.post_model_prob
                );
            }
            let _ = writeln!(out, "# {note}");
            out
        }
        Format::Json => {
            let value = serde_json::json!({ "entries": table.entries, "advisory": note });
            serde_json::to_string_pretty(&value).expect("table serializes") + "\n"
        }
    };
    write_output(&text, None)
}

fn parse_matrix(text: &str) -> Result<DMatrix<f64>, CliError> {
    let rows = text
        .split(';')
        .map(|row| {
            row.split(',')
                .map(|v| v.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("bad covariance entry {v:?}"))))
                .collect::<Result<Vec<f64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    ocbic::linalg::from_rows(&rows).ok_or_else(|| CliError::Usage("covariance rows have different lengths".into()))
}

pub fn orthant(mean: &[f64], cov: &str, method: EngineArg, samples: usize, engine: &EngineArgs, format: Format) -> Result<(), CliError> {
    let cov = parse_matrix(cov)?;
    let problem = MvnRegionProblem::new(DVector::from_column_slice(mean), cov)?;
    let p = match method {
        EngineArg::Qmc => {
            let config = QmcConfig { points: engine.points, randomizations: engine.randomizations, seed: engine.seed };
            mvn::region_prob_qmc(&problem, &config)?
        }
        EngineArg::Mc => mvn::region_prob_mc(&problem, &McConfig::new(samples, engine.seed))?,
    };
    let text = match format {
        Format::Tsv => format!(
            "method\testimate\tlog_estimate\tstd_error\tn_samples\tunderflow\n{}\t{}\t{}\t{}\t{}\t{}\n",
            p.method, p.estimate, p.log_estimate, p.std_error, p.n_samples, p.underflow
        ),
        Format::Json => serde_json::to_string_pretty(&p).expect("probability serializes") + "\n",
    };
    write_output(&text, None)
}

pub fn simulate(config: &SimConfig, format: Format) -> Result<(), CliError> {
    let table = ocbic::sim::run(config)?;
    let text = match format {
        Format::Tsv => table.to_tsv(config),
        Format::Json => table.to_json() + "\n",
    };
    write_output(&text, config.output.as_deref())
}
