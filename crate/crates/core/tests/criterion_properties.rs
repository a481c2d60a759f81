use nalgebra::{DMatrix, DVector};
use ocbic::bic::{ocbic, ocbic_with_complement, postprob, OcBicOptions, Variant};
use ocbic::mvn::QmcConfig;
use ocbic::{parse_constraints, seed, FittedModel};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

const NAMES: [&str; 3] = ["b1", "b2", "b3"];
const SETS: [&str; 4] = ["b1 > 0", "b2 > b1", "b3 > b2 > b1", "b1 > 0 < b2"];

fn names() -> Vec<String> {
    NAMES.iter().map(|s| s.to_string()).collect()
}

fn random_fit(s: u64, n: usize) -> FittedModel {
    let mut rng = seed::rng(s);
    let a = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = (&a * a.transpose() + DMatrix::identity(3, 3) * 0.2) / n as f64;
    let est = DVector::from_fn(3, |_, _| rng.random_range(-0.6..0.6));
    let loglik = -(n as f64) * rng.random_range(0.5..2.0);
    FittedModel::new(names(), est, cov, loglik, n, 4).unwrap()
}

fn opts(s: u64) -> OcBicOptions {
    OcBicOptions { qmc: QmcConfig { points: 2048, randomizations: 8, seed: s }, ..OcBicOptions::default() }
}

fn variant(ui: bool) -> Variant {
    if ui {
        Variant::Ui
    } else {
        Variant::Lui
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn parts_recompose_the_criterion(s in any::<u64>(), n in 20usize..2000, which in 0..SETS.len(), ui in any::<bool>(), complement in any::<bool>()) {
        let fit = random_fit(s, n);
        let cs = parse_constraints(&[SETS[which]], &names()).unwrap();
        let r = ocbic(&fit, &[cs], complement, variant(ui), &opts(s)).unwrap();
        prop_assert!((r.recomposed() - r.ocbic).abs() <= 1e-9 * r.ocbic.abs().max(1.0), "{} vs {}", r.recomposed(), r.ocbic);
    }

    /// Against the unconstrained model the sign of the criterion gap is the
    /// sign of `ln Pr_post - ln Pr_prior`.
    #[test]
    fn beats_unconstrained_iff_posterior_exceeds_prior(s in any::<u64>(), n in 20usize..2000, which in 0..SETS.len(), ui in any::<bool>()) {
        let fit = random_fit(s, n);
        let cs = parse_constraints(&[SETS[which]], &names()).unwrap();
        let r = ocbic(&fit, &[cs], false, variant(ui), &opts(s)).unwrap();
        let gap = r.ocbic - fit.bic();
        let lbf = r.log_post_prob - r.log_prior_prob;
        prop_assume!(gap.abs() > 1e-9 && lbf.abs() > 1e-9);
        prop_assert_eq!(gap <= 0.0, lbf >= 0.0);
    }

    #[test]
    fn set_and_complement_posteriors_sum_to_one(s in any::<u64>(), n in 20usize..2000, which in 0..SETS.len(), ui in any::<bool>()) {
        let fit = random_fit(s, n);
        let cs = parse_constraints(&[SETS[which]], &names()).unwrap();
        let (inside, outside) = ocbic_with_complement(&fit, &cs, variant(ui), &opts(s)).unwrap();
        let (a, b) = (inside.post_prob.unwrap(), outside.post_prob.unwrap());
        let tol = 3.0 * a.std_error.hypot(b.std_error) + 1e-12;
        prop_assert!((a.estimate + b.estimate - 1.0).abs() <= tol, "{} + {} (tol {tol})", a.estimate, b.estimate);
    }

    #[test]
    fn model_probabilities_are_normalized(values in prop::collection::vec(-500.0f64..500.0, 2..8), weights in prop::collection::vec(0.01f64..1.0, 8)) {
        let k = values.len();
        let total: f64 = weights[..k].iter().sum();
        let prior: Vec<f64> = weights[..k].iter().map(|w| w / total).collect();
        for p in [None, Some(prior.as_slice())] {
            let post = postprob(&values, p).unwrap();
            prop_assert!((post.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let pi = |i: usize| p.map_or(1.0 / k as f64, |p| p[i]);
            // ratios follow pi_i exp(-v_i / 2)
            let best = (0..k).max_by(|&i, &j| post[i].total_cmp(&post[j])).unwrap();
            for i in 0..k {
                let expect = (pi(i) / pi(best)).ln() - (values[i] - values[best]) / 2.0;
                if post[i] > 1e-300 {
                    prop_assert!((post[i].ln() - post[best].ln() - expect).abs() <= 1e-9 * expect.abs().max(1.0));
                }
            }
        }
    }
}

/// One parameter constrained positive, estimate at `t` standard errors.
#[test]
fn boundary_prior_rewards_supported_constraints() {
    let n = 4;
    let se = 0.5;
    let log_b = |t: f64, v: Variant| {
        let fit = FittedModel::new(vec!["b".into()], DVector::from_element(1, t * se), DMatrix::from_element(1, 1, se * se), -10.0, n, 1).unwrap();
        let cs = parse_constraints(&["b > 0"], &["b".to_string()]).unwrap();
        let r = ocbic(&fit, &[cs], false, v, &OcBicOptions::default()).unwrap();
        r.log_post_prob - r.log_prior_prob
    };
    let grid = [0.0, 1.0, 2.0, 4.0, 8.0];
    let lui: Vec<f64> = grid.iter().map(|&t| log_b(t, Variant::Lui)).collect();
    let ui: Vec<f64> = grid.iter().map(|&t| log_b(t, Variant::Ui)).collect();
    for w in lui.windows(2) {
        assert!(w[1] >= w[0], "{lui:?}");
    }
    assert!((lui[4] - 2f64.ln()).abs() < 1e-12, "{lui:?}");
    assert!(lui[0].abs() < 1e-12, "{lui:?}");
    // equal to the boundary prior at t = 0, then decaying to zero
    for w in ui[1..].windows(2) {
        assert!(w[1].abs() <= w[0].abs(), "{ui:?}");
    }
    assert!(ui[4].abs() < 1e-4, "{ui:?}");
    assert!((ui[0] - lui[0]).abs() < 1e-12);
}
