use arena_core::stats::{average_ranks, spearman, PValueMethod};
use itertools::Itertools;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    sxy / (sxx * syy).sqrt()
}

/// Brute force over every permutation of the y ranks.
fn permutation_oracle(x: &[f64], y: &[f64]) -> f64 {
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let rho = pearson_oracle(&rx, &ry);
    let mut hits = 0usize;
    let mut total = 0usize;
    for perm in ry.iter().copied().permutations(ry.len()) {
        total += 1;
        if pearson_oracle(&rx, &perm).abs() >= rho.abs() - 1e-12 {
            hits += 1;
        }
    }
    hits as f64 / total as f64
}

#[test]
fn exact_p_matches_brute_force() {
    let x = [3.1, 1.2, 5.5, 4.0, 2.2, 6.7, 0.3];
    let y = [2.0, 1.0, 4.5, 4.5, 3.0, 7.0, 1.5];
    let c = spearman(&x, &y).unwrap();
    assert_eq!(c.method, PValueMethod::ExactPermutation);
    assert!((c.p_value - permutation_oracle(&x, &y)).abs() < 1e-12);
}

#[test]
fn rho_for_distinct_values_matches_textbook_formula() {
    let x = [10.0, 20.0, 30.0, 40.0, 50.0, 60.0];
    let y = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
    // 1 - 6 Σd² / (n(n²-1)) with Σd² = 6
    let expected = 1.0 - 6.0 * 6.0 / (6.0 * 35.0);
    assert!((spearman(&x, &y).unwrap().rho - expected).abs() < 1e-12);
}

#[test]
fn large_n_uses_student_t() {
    let x: Vec<f64> = (0..18).map(|i| i as f64).collect();
    let y: Vec<f64> = (0..18).map(|i| ((i * 7) % 18) as f64 + 0.5 * i as f64).collect();
    let c = spearman(&x, &y).unwrap();
    assert_eq!(c.method, PValueMethod::StudentT);
    let df = 16.0;
    let t = c.rho * (df / (1.0 - c.rho * c.rho)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).unwrap();
    let oracle = 2.0 * (1.0 - dist.cdf(t.abs()));
    assert!((c.p_value - oracle).abs() < 1e-10, "{} vs {oracle}", c.p_value);
}

#[test]
fn perfect_correlation_p_is_positive() {
    let x: Vec<f64> = (0..15).map(f64::from).collect();
    let c = spearman(&x, &x).unwrap();
    assert_eq!(c.rho, 1.0);
    assert!(c.p_value > 0.0 && c.p_value < 1e-12);
}

proptest! {
    #[test]
    fn rho_is_invariant_under_monotone_maps(
        x in prop::collection::vec(-100.0f64..100.0, 4..16),
        seed in 0u64..1000,
    ) {
        let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| v * 0.3 + ((i as u64 * 31 + seed) % 17) as f64).collect();
        if let Ok(base) = spearman(&x, &y) {
            let mapped_x: Vec<f64> = x.iter().map(|v| v.exp()).collect();
            let mapped_y: Vec<f64> = y.iter().map(|v| v.powi(3)).collect();
            let again = spearman(&mapped_x, &mapped_y).unwrap();
            prop_assert!((base.rho - again.rho).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&base.rho));
            prop_assert!((0.0..=1.0).contains(&base.p_value));
        }
    }

    #[test]
    fn spearman_is_pearson_on_ranks(x in prop::collection::vec(0u8..20, 5..12), y in prop::collection::vec(0u8..20, 5..12)) {
        let n = x.len().min(y.len());
        let x: Vec<f64> = x[..n].iter().map(|v| f64::from(*v)).collect();
        let y: Vec<f64> = y[..n].iter().map(|v| f64::from(*v)).collect();
        if let Ok(c) = spearman(&x, &y) {
            let oracle = pearson_oracle(&average_ranks(&x), &average_ranks(&y));
            prop_assert!((c.rho - oracle).abs() < 1e-12);
        }
    }
}
