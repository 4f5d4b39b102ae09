mod support;

use entail_guard::stats::{ols_regress, spearman, student_t_cdf, PValueMethod, StatsError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use support::*;

#[test]
fn spearman_matches_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut done = 0;
    while done < 100 {
        let n = rng.random_range(3..=7);
        let (x, y) = (tied_vector(&mut rng, n), tied_vector(&mut rng, n));
        if !has_variance(&x) || !has_variance(&y) {
            continue;
        }
        done += 1;
        let r = spearman(&x, &y).unwrap();
        assert!((r.rho - oracle_rho(&x, &y)).abs() < 1e-12);
        assert_eq!(r.p_value, oracle_exact_p(&x, &y));
    }
}

#[test]
fn monte_carlo_is_deterministic_and_bounded() {
    let x: Vec<f64> = (0..12).map(f64::from).collect();
    let y = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0, 6.0, 5.0, 3.0, 5.0, 8.0];
    let a = spearman(&x, &y).unwrap();
    let b = spearman(&x, &y).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.method, PValueMethod::MonteCarlo);
    assert!(a.p_value >= 1.0 / 10_001.0 && a.p_value <= 1.0);
}

#[test]
fn perfectly_monotone_fixture_gives_rho_one() {
    let rd = [0.0, 0.1, 0.2, 0.5, 0.9];
    let ent = [0.05, 0.2, 0.3, 0.6, 0.95];
    let r = spearman(&rd, &ent).unwrap();
    assert_eq!(r.rho, 1.0);
    // only the identity and its reverse are as extreme among 5! orderings
    assert_eq!(r.p_value, 2.0 / 120.0);
}

#[test]
fn constant_input_is_undefined() {
    assert_eq!(spearman(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(StatsError::ZeroVariance));
}

#[test]
fn t_cdf_matches_reference() {
    for df in [1.0, 2.5, 4.0, 10.0, 30.0] {
        let reference = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [-4.0, -1.3, 0.0, 0.7, 2.2, 6.0] {
            assert!((student_t_cdf(t, df) - reference.cdf(t)).abs() < 1e-12, "t={t} df={df}");
        }
    }
}

#[test]
fn ols_matches_normal_equations_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for _ in 0..40 {
        let (y, labels) = random_dataset(&mut rng);
        let fit = ols_regress("y", &y, &labels, "CONTROL").unwrap();
        let oracle = oracle_ols(&y, &labels, "CONTROL");
        for c in &fit.coefficients {
            let o = &oracle[&c.name];
            assert!((c.beta - o.beta).abs() < 1e-9);
            assert!((c.std_error - o.se).abs() < 1e-9);
            assert!((c.t_stat.unwrap() - o.t).abs() < 1e-9);
            assert!((c.p_value.unwrap() - o.p).abs() < 1e-9);
        }
    }
}

#[test]
fn ols_requires_baseline_and_residual_df() {
    assert!(matches!(
        ols_regress("y", &[1.0, 2.0], &["A", "B"], "CONTROL"),
        Err(StatsError::MissingBaseline(_))
    ));
    assert!(ols_regress("y", &[1.0, 2.0], &["CONTROL", "NEU"], "CONTROL").is_err());
}
