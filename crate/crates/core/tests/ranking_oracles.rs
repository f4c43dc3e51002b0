use arena_core::domain::{Dimension, ModelId, Outcome};
use arena_core::ranking::{
    assign_ranks, build_leaderboard, fit_bradley_terry, log_likelihood, BattleOutcomeSet,
    FitConfig, RankingError, Tally,
};
use proptest::prelude::*;

fn m(s: &str) -> ModelId {
    ModelId::from(s)
}

fn two_model(wins: usize, losses: usize, ties: usize) -> BattleOutcomeSet {
    let mut out = Vec::new();
    out.extend((0..wins).map(|_| (m("a"), m("b"), Outcome::WinA)));
    out.extend((0..losses).map(|_| (m("a"), m("b"), Outcome::WinB)));
    out.extend((0..ties).map(|_| (m("a"), m("b"), Outcome::Tie)));
    BattleOutcomeSet::new(Dimension::Global, out)
}

/// Maximises the two-model likelihood over d = θa − θb by scanning a grid,
/// then shrinking the window around the best point.
fn grid_scan_difference(credit_a: f64, n: f64) -> f64 {
    let ll = |d: f64| {
        let p = 1.0 / (1.0 + (-d).exp());
        credit_a * p.ln() + (n - credit_a) * (1.0 - p).ln()
    };
    let (mut lo, mut hi) = (-10.0, 10.0);
    for _ in 0..8 {
        let steps = 2000;
        let h = (hi - lo) / steps as f64;
        let best = (0..=steps)
            .map(|s| lo + s as f64 * h)
            .max_by(|a, b| ll(*a).total_cmp(&ll(*b)))
            .unwrap();
        lo = best - 2.0 * h;
        hi = best + 2.0 * h;
    }
    (lo + hi) / 2.0
}

#[test]
fn seven_of_ten_matches_closed_form_and_grid_scan() {
    let fit = fit_bradley_terry(&two_model(7, 3, 0), &FitConfig::default()).unwrap();
    let d = fit.theta[0] - fit.theta[1];
    assert!((d - (7.0f64 / 3.0).ln()).abs() < 1e-6, "{d}");
    assert!((d - grid_scan_difference(7.0, 10.0)).abs() < 1e-6);
    assert!(fit.theta.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn ties_count_half_each_way() {
    // 5 wins, 3 losses, 4 ties is 7 credits of 12
    let fit = fit_bradley_terry(&two_model(5, 3, 4), &FitConfig::default()).unwrap();
    let d = fit.theta[0] - fit.theta[1];
    assert!((d - (7.0f64 / 5.0).ln()).abs() < 1e-6);
    assert!((d - grid_scan_difference(7.0, 12.0)).abs() < 1e-6);
    assert_eq!(fit.ties, 4);
}

#[test]
fn all_ties_give_equal_strengths() {
    let fit = fit_bradley_terry(&two_model(0, 0, 6), &FitConfig::default()).unwrap();
    assert!(fit.theta.iter().all(|t| t.abs() < 1e-9));
}

#[test]
fn undefeated_model_is_unbounded() {
    let err = fit_bradley_terry(&two_model(5, 0, 0), &FitConfig::default()).unwrap_err();
    assert_eq!(err, RankingError::Unbounded);
}

#[test]
fn disconnected_pairs_are_rejected() {
    let data = BattleOutcomeSet::new(
        Dimension::Global,
        vec![
            (m("a"), m("b"), Outcome::WinA),
            (m("a"), m("b"), Outcome::WinB),
            (m("c"), m("d"), Outcome::WinA),
            (m("c"), m("d"), Outcome::WinB),
        ],
    );
    assert_eq!(
        fit_bradley_terry(&data, &FitConfig::default()).unwrap_err(),
        RankingError::DisconnectedGraph { components: 2 }
    );
}

#[test]
fn published_board_tie_ranks() {
    let scores = [1188.0, 1153.0, 1141.0, 1050.0, 1050.0, 1038.0];
    assert_eq!(assign_ranks(&scores), [1, 2, 3, 5, 5, 6]);
}

#[test]
fn gradient_is_zero_at_the_optimum() {
    // three-model cycle with uneven counts; compare against finite differences
    let data = BattleOutcomeSet::new(
        Dimension::Content,
        [
            ("a", "b", Outcome::WinA, 6),
            ("a", "b", Outcome::WinB, 2),
            ("b", "c", Outcome::WinA, 5),
            ("b", "c", Outcome::WinB, 4),
            ("c", "a", Outcome::WinA, 3),
            ("c", "a", Outcome::WinB, 5),
            ("a", "c", Outcome::Tie, 2),
        ]
        .iter()
        .flat_map(|&(x, y, o, n)| std::iter::repeat((m(x), m(y), o)).take(n))
        .collect(),
    );
    let fit = fit_bradley_terry(&data, &FitConfig::default()).unwrap();
    let tally = Tally::from_indexed(3, &data.indexed());
    let h = 1e-5;
    for i in 0..3 {
        let mut up = fit.theta.clone();
        let mut down = fit.theta.clone();
        up[i] += h;
        down[i] -= h;
        let g = (log_likelihood(&tally, &up) - log_likelihood(&tally, &down)) / (2.0 * h);
        assert!(g.abs() < 1e-6, "component {i}: {g}");
    }
}

fn outcome_strategy() -> impl Strategy<Value = Outcome> {
    prop_oneof![Just(Outcome::WinA), Just(Outcome::WinB), Just(Outcome::Tie)]
}

/// A round robin of `k` models, each pair once with a win and a loss so the
/// fit is always finite, plus random extra outcomes.
fn dataset(k: usize) -> impl Strategy<Value = Vec<(usize, usize, Outcome)>> {
    prop::collection::vec((0..k, 0..k, outcome_strategy()), 0..60).prop_map(move |extra| {
        let mut out = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                out.push((i, j, Outcome::WinA));
                out.push((i, j, Outcome::WinB));
            }
        }
        out.extend(extra.into_iter().filter(|(i, j, _)| i != j));
        out
    })
}

fn named(raw: &[(usize, usize, Outcome)], name: impl Fn(usize) -> String) -> BattleOutcomeSet {
    BattleOutcomeSet::new(
        Dimension::Global,
        raw.iter()
            .map(|&(i, j, o)| (ModelId(name(i)), ModelId(name(j)), o))
            .collect(),
    )
}

fn theta_of(data: &BattleOutcomeSet, model: &str) -> f64 {
    let fit = fit_bradley_terry(data, &FitConfig::default()).unwrap();
    let pos = data.model_index.iter().position(|x| x.as_str() == model).unwrap();
    fit.theta[pos]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn two_model_closed_form(w in 1usize..40, l in 1usize..40, t in 0usize..10) {
        let fit = fit_bradley_terry(&two_model(w, l, t), &FitConfig::default()).unwrap();
        let credit = w as f64 + t as f64 / 2.0;
        let expected = (credit / (l as f64 + t as f64 / 2.0)).ln();
        prop_assert!((fit.theta[0] - fit.theta[1] - expected).abs() < 1e-6);
    }

    #[test]
    fn relabelling_permutes_strengths(raw in dataset(4), perm in Just([2usize, 0, 3, 1]).prop_shuffle()) {
        let base = named(&raw, |i| format!("m{i}"));
        let relabelled = named(&raw, |i| format!("m{}", perm[i]));
        for i in 0..4 {
            let a = theta_of(&base, &format!("m{i}"));
            let b = theta_of(&relabelled, &format!("m{}", perm[i]));
            prop_assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn duplicating_every_battle_keeps_the_estimate(raw in dataset(4)) {
        let once = named(&raw, |i| format!("m{i}"));
        let doubled: Vec<_> = raw.iter().chain(raw.iter()).copied().collect();
        let twice = named(&doubled, |i| format!("m{i}"));
        let a = fit_bradley_terry(&once, &FitConfig::default()).unwrap();
        let b = fit_bradley_terry(&twice, &FitConfig::default()).unwrap();
        for (x, y) in a.theta.iter().zip(&b.theta) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn swapping_sides_changes_nothing(raw in dataset(3)) {
        let swapped: Vec<_> = raw.iter().map(|&(i, j, o)| (j, i, o.swapped())).collect();
        let a = fit_bradley_terry(&named(&raw, |i| format!("m{i}")), &FitConfig::default()).unwrap();
        let b = fit_bradley_terry(&named(&swapped, |i| format!("m{i}")), &FitConfig::default()).unwrap();
        for (x, y) in a.theta.iter().zip(&b.theta) {
            prop_assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn extra_win_never_lowers_the_winner(raw in dataset(4), opp in 1usize..4) {
        let before = named(&raw, |i| format!("m{i}"));
        let mut more = raw.clone();
        more.push((0, opp, Outcome::WinA));
        let after = named(&more, |i| format!("m{i}"));
        prop_assert!(theta_of(&after, "m0") >= theta_of(&before, "m0") - 1e-9);
    }

    #[test]
    fn strengths_are_centred(raw in dataset(5)) {
        let fit = fit_bradley_terry(&named(&raw, |i| format!("m{i}")), &FitConfig::default()).unwrap();
        prop_assert!(fit.theta.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn leaderboard_scores_average_one_thousand(raw in dataset(4)) {
        let cfg = FitConfig { resamples: 20, ..FitConfig::default() };
        let data = named(&raw, |i| format!("m{i}"));
        if let Ok(board) = build_leaderboard(&data, &cfg, None) {
            prop_assert!((board.mean_score() - 1000.0).abs() < 1e-6);
            for e in &board.estimates {
                prop_assert!((e.score - (400.0 * e.theta + 1000.0)).abs() < 1e-9);
                prop_assert!(e.ci_low_delta <= 0.0 && e.ci_high_delta >= 0.0);
            }
        }
    }
}
