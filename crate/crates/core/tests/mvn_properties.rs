use nalgebra::{DMatrix, DVector};
use ocbic::mvn::{reduce_constraints, region_prob_qmc, MvnRegionProblem, QmcConfig};
use ocbic::seed;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

/// Random SPD matrix `A A^T + 0.3 I`.
fn spd(m: usize, rng: &mut impl Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(m, m) * 0.3
}

fn qmc(points: usize, seed: u64) -> QmcConfig {
    QmcConfig { points, randomizations: 10, seed }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn single_coordinate_complementarity(mu in -40.0f64..40.0, var in 1e-3f64..1e3) {
        let cov = DMatrix::from_element(1, 1, var);
        let up = region_prob_qmc(&MvnRegionProblem::new(DVector::from_element(1, mu), cov.clone()).unwrap(), &QmcConfig::default()).unwrap();
        let down = region_prob_qmc(&MvnRegionProblem::new(DVector::from_element(1, -mu), cov).unwrap(), &QmcConfig::default()).unwrap();
        prop_assert!((up.estimate + down.estimate - 1.0).abs() <= 1e-12, "{} + {}", up.estimate, down.estimate);
    }

    #[test]
    fn diagonal_rescaling_leaves_probability_unchanged(s in any::<u64>(), m in 2usize..=4) {
        let mut rng = seed::rng(s);
        let cov = spd(m, &mut rng);
        let mean = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.5));
        let d = DVector::from_fn(m, |_, _| rng.random_range(0.05..20.0));
        let dm = DMatrix::from_diagonal(&d);
        let scaled_mean = mean.component_mul(&d);
        let scaled_cov = &dm * &cov * &dm;
        let a = region_prob_qmc(&MvnRegionProblem::new(mean, cov).unwrap(), &qmc(4096, s)).unwrap();
        let b = region_prob_qmc(&MvnRegionProblem::new(scaled_mean, scaled_cov).unwrap(), &qmc(4096, s ^ 1)).unwrap();
        let tol = 3.0 * a.std_error.hypot(b.std_error) + 1e-12;
        prop_assert!((a.estimate - b.estimate).abs() <= tol, "{} vs {} (tol {tol})", a.estimate, b.estimate);
    }

    /// `theta1 < theta2 < theta3` as an order matrix on theta, or as two
    /// one-sided constraints on the increments `xi = T theta`.
    #[test]
    fn order_constraints_survive_reparameterization(s in any::<u64>()) {
        let mut rng = seed::rng(s);
        let sigma = spd(3, &mut rng);
        let center = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let order = DMatrix::from_row_slice(2, 3, &[-1.0, 1.0, 0.0, 0.0, -1.0, 1.0]);
        let zeros = DVector::zeros(2);
        let t = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0]);
        let one_sided = DMatrix::from_row_slice(2, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let direct = reduce_constraints(&order, &zeros, &center, &sigma).unwrap();
        let xi = reduce_constraints(&one_sided, &zeros, &(&t * &center), &(&t * &sigma * t.transpose())).unwrap();
        let a = region_prob_qmc(&direct, &qmc(4096, s)).unwrap();
        let b = region_prob_qmc(&xi, &qmc(4096, s.wrapping_add(7))).unwrap();
        let tol = 3.0 * a.std_error.hypot(b.std_error) + 1e-12;
        prop_assert!((a.estimate - b.estimate).abs() <= tol, "{} vs {} (tol {tol})", a.estimate, b.estimate);
    }

    #[test]
    fn estimates_are_probabilities(s in any::<u64>(), m in 1usize..=5) {
        let mut rng = seed::rng(s);
        let cov = spd(m, &mut rng);
        let mean = DVector::from_fn(m, |_, _| rng.random_range(-3.0..3.0));
        let p = region_prob_qmc(&MvnRegionProblem::new(mean, cov).unwrap(), &qmc(1024, s)).unwrap();
        prop_assert!((0.0..=1.0).contains(&p.estimate));
        prop_assert!(p.std_error.is_finite());
        if p.estimate > 0.0 {
            prop_assert!((p.log_estimate - p.estimate.ln()).abs() <= 1e-12 * p.log_estimate.abs().max(1.0));
        }
    }
}

#[test]
fn doubling_points_does_not_increase_error() {
    let mut rng = seed::rng(4242);
    let problems: Vec<MvnRegionProblem> = (0..20)
        .map(|_| {
            let m = rng.random_range(2..=5);
            let cov = spd(m, &mut rng);
            let mean = DVector::from_fn(m, |_, _| rng.random_range(-0.5..1.0));
            MvnRegionProblem::new(mean, cov).unwrap()
        })
        .collect();
    let mean_se = |points: usize| -> f64 {
        problems.iter().map(|p| region_prob_qmc(p, &qmc(points, 99)).unwrap().std_error).sum::<f64>() / problems.len() as f64
    };
    for points in [512, 2048, 8192] {
        let (coarse, fine) = (mean_se(points), mean_se(2 * points));
        assert!(fine <= coarse, "{points} points: {coarse:e} -> {fine:e}");
    }
}
