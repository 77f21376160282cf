//! Strong self-convergence ladders and the sign-flip study.

use cirsim::experiments::non_increasing_within;
use cirsim::{
    sd_mean_recursion, sign_flip_study, strong_self_convergence, CirError, CirParams, GridSpec,
    SchemeKind, SchemeSpec,
};

#[test]
fn deterministic_ladder_has_first_order() {
    let p = CirParams::new(2.0, 1.0, 0.0, 4.0).unwrap();
    let g = GridSpec::new(1.0, 8).unwrap();
    let spec = SchemeSpec::semi_discrete(0.0).unwrap();
    let r = strong_self_convergence(&p, &g, 4, &spec, 2, 1).unwrap();
    let order = r.fitted_order.unwrap();
    assert!((order - 1.0).abs() <= 0.15, "order {order}");

    // Without noise the errors are differences of the deterministic recursion.
    let reference = *sd_mean_recursion(&p, &g.refined(6), 0.0).last().unwrap();
    for (m, level) in r.ladder.iter().enumerate() {
        let coarse = *sd_mean_recursion(&p, &g.refined(m as u32), 0.0)
            .last()
            .unwrap();
        let err = level.strong_error_l2.unwrap();
        assert!(
            (err - (coarse - reference).abs()).abs() <= 1e-12,
            "level {m}: {err}"
        );
        assert_eq!(level.std_error, Some(0.0));
    }
}

#[test]
fn polynomial_regime_reaches_half_order() {
    let p = CirParams::new(2.0, 1.0, 0.5, 1.0).unwrap();
    let g = GridSpec::new(1.0, 16).unwrap();
    let r = strong_self_convergence(
        &p,
        &g,
        4,
        &SchemeSpec::semi_discrete(0.0).unwrap(),
        10_000,
        2,
    )
    .unwrap();
    assert!(r.fitted_order.unwrap() >= 0.4, "{r:?}");
    assert_eq!(r.ladder.len(), 4);
    assert!(r.ladder.windows(2).all(|w| w[0].delta > w[1].delta));
}

#[test]
fn logarithmic_regime_order_is_recorded() {
    let p = CirParams::new(2.0, 1.0, 1.9, 1.0).unwrap();
    let g = GridSpec::new(1.0, 16).unwrap();
    let r = strong_self_convergence(
        &p,
        &g,
        4,
        &SchemeSpec::semi_discrete(1.0).unwrap(),
        2_000,
        3,
    )
    .unwrap();
    assert!(r.fitted_order.unwrap().is_finite());
    assert!(r.ladder.iter().all(|l| l.strong_error_l2.unwrap() >= 0.0));
}

#[test]
fn euler_comparator_runs_on_the_same_ladder() {
    let p = CirParams::new(2.0, 1.0, 0.5, 1.0).unwrap();
    let g = GridSpec::new(1.0, 16).unwrap();
    let r = strong_self_convergence(
        &p,
        &g,
        3,
        &SchemeSpec::of(SchemeKind::TruncatedEuler),
        1_000,
        4,
    )
    .unwrap();
    assert!(r.fitted_order.unwrap() > 0.0);
}

#[test]
fn exact_schemes_are_refused() {
    let p = CirParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
    let g = GridSpec::new(1.0, 16).unwrap();
    for kind in [SchemeKind::ExactSim, SchemeKind::SplitExact] {
        let r = strong_self_convergence(&p, &g, 3, &SchemeSpec::of(kind), 100, 5);
        assert!(matches!(r, Err(CirError::Usage(_))), "{kind}");
    }
}

fn dyadic(from: u32, to: u32) -> Vec<GridSpec> {
    (from..=to)
        .map(|m| GridSpec::new(1.0, 1 << m).unwrap())
        .collect()
}

#[test]
fn deterministic_scheme_never_flips() {
    let p = CirParams::new(2.0, 1.0, 0.0, 4.0).unwrap();
    let r = sign_flip_study(&p, &dyadic(3, 8), 0.0, 100, 6).unwrap();
    assert!(r
        .ladder
        .iter()
        .all(|l| l.flip_fraction == 0.0 && l.weighted_statistic == 0.0));
}

#[test]
fn flips_decay_when_they_occur() {
    // Below the Feller threshold the path visits zero and flips are frequent.
    let p = CirParams::new(1.0, 0.5, 1.2, 0.5).unwrap();
    let r = sign_flip_study(&p, &dyadic(3, 8), 1.0, 10_000, 7).unwrap();
    assert!(r.ladder[0].flip_fraction > 0.0, "{r:?}");
    assert!(r.flip_non_increasing, "{r:?}");
    assert!(r.weighted_non_increasing, "{r:?}");
    // Weighted statistic at Δ against Δ/4: ratio at least 1 within 2 standard errors.
    for w in r.ladder.windows(3) {
        let (coarse, fine) = (&w[0], &w[2]);
        let slack =
            2.0 * (coarse.weighted_std_error.powi(2) + fine.weighted_std_error.powi(2)).sqrt();
        assert!(
            coarse.weighted_statistic + slack >= fine.weighted_statistic,
            "{coarse:?} {fine:?}"
        );
    }
}

#[test]
fn sign_flip_preconditions() {
    let p = CirParams::new(2.0, 1.0, 1.0, 0.0).unwrap();
    assert!(matches!(
        sign_flip_study(&p, &dyadic(3, 4), 1.0, 10, 8),
        Err(CirError::Usage(_))
    ));
    let bad = CirParams::new(2.0, 1.0, 3.0, 1.0).unwrap();
    assert!(matches!(
        sign_flip_study(&bad, &dyadic(3, 4), 0.0, 10, 8),
        Err(CirError::Domain(_))
    ));
}

#[test]
fn slack_rule() {
    assert!(non_increasing_within(&[(1.0, 0.1), (1.2, 0.1)], 2.0));
    assert!(!non_increasing_within(&[(1.0, 0.1), (1.3, 0.1)], 2.0));
}
