mod common;

use common::{brute_holm, closed_form_simple, planted_rows};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};
use synprobe::probes::Family;
use synprobe::stats::{build_regression_table, design, holm_bonferroni, ols_fit, Aggregation, Granularity};

#[test]
fn simple_regression_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let x: Vec<f64> = (0..32).map(|_| rng.random_range(0.0..1.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| rng.random_range(-1.0..1.0) + rng.random_range(-2.0..2.0) * v).collect();
        let f = ols_fit(&y, &design(&[&x])).unwrap();
        let (b0, b1, se0, se1, t1, df) = closed_form_simple(&x, &y);
        let p1 = 2.0 * StudentsT::new(0.0, 1.0, df).unwrap().sf(t1.abs());
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * (1.0 + b.abs());
        assert!(close(f.coefficients[0], b0) && close(f.coefficients[1], b1));
        assert!(close(f.standard_errors[0], se0) && close(f.standard_errors[1], se1));
        assert!(close(f.t_stats[1], t1));
        assert!((f.p_values[1] - p1).abs() < 1e-10);
    }
}

#[test]
fn holm_matches_definition_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let m = rng.random_range(1..=20);
        let p: Vec<f64> = (0..m)
            .map(|_| if rng.random_bool(0.2) { 0.01 * rng.random_range(0..5) as f64 } else { rng.random_range(0.0..1.0) })
            .collect();
        let out = holm_bonferroni(&p).unwrap();
        assert_eq!(out, brute_holm(&p));
    }
}

#[test]
fn planted_linear_relation_is_recovered() {
    let rows = planted_rows(1, Some(0.3));
    let t = build_regression_table(&rows, &[Family::Structural], Granularity::Full, Aggregation::default());
    let s = t.rows[0].simple.as_ref().unwrap();
    assert!((s.fit.beta1() - 0.3).abs() < 0.05);
    assert!(s.p_beta1_corrected < 1e-6);
}

#[test]
fn independent_accuracy_rarely_significant() {
    let quiet = (0..100)
        .filter(|&seed| {
            let t = build_regression_table(&planted_rows(seed, None), &[Family::Structural], Granularity::Full, Aggregation::default());
            t.rows[0].simple.as_ref().unwrap().p_beta1_corrected > 0.05
        })
        .count();
    assert!(quiet >= 90, "{quiet}/100");
}
