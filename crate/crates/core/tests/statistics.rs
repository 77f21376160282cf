//! Monte Carlo checks of the schemes against the independent oracles.

use cirsim::experiments::positivity_audit;
use cirsim::oracles::two_factor_mean_at;
use cirsim::{
    cir_moments, exact_cir_step, sd_mean_recursion, simulate_pair_path, simulate_path,
    two_factor_split_step, weak_moment_error, CirParams, GridSpec, Model, Noise, PairState,
    SchemeKind, SchemeSpec, SeedSpec, TwoFactorInput, TwoFactorParams,
};
use rayon::prelude::*;

#[derive(Default, Clone, Copy)]
struct Moments {
    n: f64,
    s1: f64,
    s2: f64,
}

impl Moments {
    fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let mut m = Self::default();
        for x in xs {
            m.n += 1.0;
            m.s1 += x;
            m.s2 += x * x;
        }
        m
    }
    fn mean(&self) -> f64 {
        self.s1 / self.n
    }
    fn var(&self) -> f64 {
        (self.s2 - self.n * self.mean().powi(2)) / (self.n - 1.0)
    }
    fn se(&self) -> f64 {
        (self.var() / self.n).sqrt()
    }
}

fn exact_draws(k: f64, l: f64, sigma: f64, x0: f64, t: f64, n: usize, seed: u64) -> Vec<f64> {
    let d = (4.0 * k * l / (sigma * sigma)).round() as usize;
    let mut stream = SeedSpec::new(seed, 0, 0).gaussians();
    let mut z = vec![0.0; d];
    (0..n)
        .map(|_| {
            stream.fill(&mut z);
            exact_cir_step(k * l, k, sigma, x0, t, &z).unwrap()
        })
        .collect()
}

#[test]
fn moment_oracle_agrees_with_ten_million_exact_draws() {
    let xs = exact_draws(2.0, 1.0, 1.0, 4.0, 1.0, 10_000_000, 101);
    let m = Moments::of(xs.iter().copied());
    let oracle = cir_moments(&CirParams::new(2.0, 1.0, 1.0, 4.0).unwrap(), 1.0);
    assert!((oracle.mean - 1.40601).abs() < 1e-5);
    assert!((oracle.variance - 0.42095).abs() < 1e-5);
    assert!(
        (m.mean() - oracle.mean).abs() <= 3.0 * m.se(),
        "{} vs {}",
        m.mean(),
        oracle.mean
    );
    let mean = m.mean();
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / xs.len() as f64;
    let var_se = ((m4 - m.var().powi(2)) / xs.len() as f64).sqrt();
    assert!(
        (m.var() - oracle.variance).abs() <= 3.0 * var_se,
        "{} vs {}",
        m.var(),
        oracle.variance
    );
}

#[test]
fn exact_step_mean_over_a_million_draws() {
    let m = Moments::of(exact_draws(2.0, 1.0, 1.0, 4.0, 1.0, 1_000_000, 102));
    let expected = 4.0 * (-2.0f64).exp() + 1.0 - (-2.0f64).exp();
    assert!((m.mean() - expected).abs() <= 3.0 * m.se());
}

#[test]
fn semidiscrete_means_follow_the_recursion() {
    let p = CirParams::new(2.0, 1.0, 1.0, 4.0).unwrap();
    let g = GridSpec::new(1.0, 10).unwrap();
    let a = 0.5;
    let spec = SchemeSpec::semi_discrete(a).unwrap();
    let paths: Vec<Vec<f64>> = (0..1_000_000u64)
        .into_par_iter()
        .map(|i| {
            simulate_path(&p, &g, &spec, Noise::Seed(SeedSpec::new(103, i, 0)))
                .unwrap()
                .values
        })
        .collect();
    let oracle = sd_mean_recursion(&p, &g, a);
    for node in 1..=10 {
        let m = Moments::of(paths.iter().map(|v| v[node]));
        assert!(
            (m.mean() - oracle[node]).abs() <= 3.0 * m.se(),
            "node {node}: {} vs {}",
            m.mean(),
            oracle[node]
        );
    }
}

fn unit_pair() -> TwoFactorParams {
    TwoFactorParams::new(TwoFactorInput {
        k: 2.0,
        l: 1.0,
        lambda11: 1.0,
        lambda12: 1.0,
        lambda21: 1.0,
        lambda22: 1.0,
        sigma1: 1.0,
        sigma2: 1.0,
        x10: 1.0,
        x20: 1.0,
    })
    .unwrap()
}

#[test]
fn two_factor_split_step_conditional_mean() {
    // Mean of one step from (1, 1): 1.1·e^{−0.1} + 2(1 − e^{−0.1}) ≈ 1.1857.
    let p = unit_pair();
    let s = PairState {
        t_index: 0,
        y1: 1.0,
        y2: 1.0,
    };
    let mut g1 = SeedSpec::new(104, 0, 0).gaussians();
    let mut g2 = SeedSpec::new(104, 0, 1).gaussians();
    let (mut z1, mut z2) = (vec![0.0; 8], vec![0.0; 4]);
    let ys: Vec<f64> = (0..1_000_000)
        .map(|_| {
            g1.fill(&mut z1);
            g2.fill(&mut z2);
            two_factor_split_step(&p, 0.1, &s, &z1, &z2).unwrap().y1
        })
        .collect();
    let m = Moments::of(ys);
    let expected = 1.1 * (-0.1f64).exp() + 2.0 * (1.0 - (-0.1f64).exp());
    assert!((expected - 1.1857).abs() < 1e-4);
    assert!(
        (m.mean() - expected).abs() <= 3.0 * m.se(),
        "{} vs {expected}",
        m.mean()
    );
}

fn reference_pair() -> TwoFactorParams {
    TwoFactorParams::new(TwoFactorInput {
        k: 2.0,
        l: 1.0,
        lambda11: 2.0,
        lambda12: 0.5,
        lambda21: 1.0,
        lambda22: 0.3,
        sigma1: 1.0,
        sigma2: 1.0,
        x10: 4.0,
        x20: 1.0,
    })
    .unwrap()
}

#[test]
fn two_factor_squared_means_match_the_mean_ode() {
    let p = reference_pair();
    let g = GridSpec::new(1.0, 1000).unwrap();
    let spec = SchemeSpec::of(SchemeKind::TwoFactorSquared);
    let terminals: Vec<(f64, f64)> = (0..100_000u64)
        .into_par_iter()
        .map(|i| {
            simulate_pair_path(&p, &g, &spec, Noise::Seed(SeedSpec::new(105, i, 0)))
                .unwrap()
                .terminal()
        })
        .collect();
    let (m1, m2) = two_factor_mean_at(&p, 1.0);
    let a = Moments::of(terminals.iter().map(|t| t.0));
    let b = Moments::of(terminals.iter().map(|t| t.1));
    assert!(
        (a.mean() - m1).abs() <= 3.0 * a.se(),
        "{} vs {m1}",
        a.mean()
    );
    assert!(
        (b.mean() - m2).abs() <= 3.0 * b.se(),
        "{} vs {m2}",
        b.mean()
    );
}

fn decoupled_pair() -> TwoFactorParams {
    TwoFactorParams::new(TwoFactorInput {
        k: 2.0,
        l: 1.0,
        lambda11: 2.0,
        lambda21: 1.0,
        sigma1: 1.0,
        sigma2: 1.0,
        x10: 4.0,
        x20: 0.5,
        ..Default::default()
    })
    .unwrap()
}

#[test]
fn decoupled_coordinates_are_uncorrelated() {
    let p = decoupled_pair();
    let g = GridSpec::new(1.0, 20).unwrap();
    for kind in [
        SchemeKind::TwoFactorSquared,
        SchemeKind::TwoFactorSplitExact,
    ] {
        let spec = SchemeSpec::of(kind);
        let terminals: Vec<(f64, f64)> = (0..100_000u64)
            .into_par_iter()
            .map(|i| {
                simulate_pair_path(&p, &g, &spec, Noise::Seed(SeedSpec::new(106, i, 0)))
                    .unwrap()
                    .terminal()
            })
            .collect();
        let a = Moments::of(terminals.iter().map(|t| t.0));
        let b = Moments::of(terminals.iter().map(|t| t.1));
        let n = terminals.len() as f64;
        let cov = terminals
            .iter()
            .map(|t| (t.0 - a.mean()) * (t.1 - b.mean()))
            .sum::<f64>()
            / (n - 1.0);
        let rho = cov / (a.var() * b.var()).sqrt();
        // Under independence the sample correlation has standard error ≈ 1/√n.
        assert!(rho.abs() <= 3.0 / n.sqrt(), "{kind}: correlation {rho}");
    }
}

#[test]
fn decoupled_squared_scheme_delegates_to_the_one_factor_scheme() {
    // With λ12 = 0 the first coordinate is the a = 0 scheme with reversion λ11 and level k/λ11.
    let p = decoupled_pair();
    let one = CirParams::new(2.0, 1.0, 1.0, 4.0).unwrap();
    let g = GridSpec::new(1.0, 100).unwrap();
    for i in 0..20 {
        let seed = SeedSpec::new(107, i, 0);
        let pair = simulate_pair_path(
            &p,
            &g,
            &SchemeSpec::of(SchemeKind::TwoFactorSquared),
            Noise::Seed(seed),
        )
        .unwrap();
        let single = simulate_path(
            &one,
            &g,
            &SchemeSpec::semi_discrete(0.0).unwrap(),
            Noise::Seed(seed),
        )
        .unwrap();
        assert_eq!(pair.y1, single.values);
    }
}

#[test]
fn decoupled_split_scheme_delegates_to_exact_sampling() {
    // d1 = 8 is an integer, so nothing is frozen and coordinate 1 is the exact chain.
    let p = decoupled_pair();
    let one = CirParams::new(2.0, 1.0, 1.0, 4.0).unwrap();
    let g = GridSpec::new(1.0, 100).unwrap();
    for i in 0..20 {
        let seed = SeedSpec::new(108, i, 0);
        let pair = simulate_pair_path(
            &p,
            &g,
            &SchemeSpec::of(SchemeKind::TwoFactorSplitExact),
            Noise::Seed(seed),
        )
        .unwrap();
        let single = simulate_path(
            &one,
            &g,
            &SchemeSpec::of(SchemeKind::ExactSim),
            Noise::Seed(seed),
        )
        .unwrap();
        assert_eq!(pair.y1, single.values);
    }
}

#[test]
fn exact_scheme_has_no_weak_bias() {
    let p = CirParams::new(1.5, 1.2, 0.6, 2.0).unwrap();
    let g = GridSpec::new(1.0, 4).unwrap();
    let r = weak_moment_error(
        &Model::OneFactor(p),
        &g,
        &SchemeSpec::of(SchemeKind::ExactSim),
        100_000,
        109,
        None,
    )
    .unwrap();
    let c = &r.ladder[0].coordinates[0];
    assert!(c.mean_error <= 3.0 * c.mean_std_error, "{c:?}");
}

#[test]
fn semidiscrete_weak_error_on_the_reference_configuration() {
    let p = CirParams::new(2.0, 1.0, 1.0, 4.0).unwrap();
    let g = GridSpec::new(1.0, 1000).unwrap();
    let r = weak_moment_error(
        &Model::OneFactor(p),
        &g,
        &SchemeSpec::semi_discrete(1.0).unwrap(),
        100_000,
        110,
        None,
    )
    .unwrap();
    let c = &r.ladder[0].coordinates[0];
    assert!(c.mean_error < (3.0 * c.mean_std_error).max(5e-3), "{c:?}");
    assert!(!r.moment_explosion);
}

#[test]
fn truncated_euler_goes_negative_and_is_reported() {
    let p = CirParams::new(2.0, 1.0, 1.9, 1.0).unwrap();
    let g = GridSpec::new(1.0, 10).unwrap();
    let audit = positivity_audit(
        &SchemeSpec::of(SchemeKind::TruncatedEuler),
        &Model::OneFactor(p),
        &g,
        10_000,
        111,
    )
    .unwrap();
    assert!(audit.negative_nodes > 0, "{audit:?}");
    assert_eq!(audit.domain_errors, 0);
}

#[test]
fn cross_diffusion_aborts_are_counted_not_fatal() {
    let p = TwoFactorParams::new(TwoFactorInput {
        k: 0.2,
        l: 1.0,
        lambda11: 1.0,
        lambda21: 0.2,
        sigma1: 2.0,
        sigma2: 0.5,
        x10: 0.0,
        x20: 8.0,
        ..Default::default()
    })
    .unwrap();
    let g = GridSpec::new(1.0, 20).unwrap();
    let spec = SchemeSpec::of(SchemeKind::TwoFactorCrossDiffusion);
    let audit = positivity_audit(&spec, &Model::TwoFactor(p), &g, 1_000, 112).unwrap();
    assert!(audit.domain_errors > 0, "{audit:?}");
    let weak = weak_moment_error(&Model::TwoFactor(p), &g, &spec, 1_000, 112, None).unwrap();
    assert_eq!(weak.aborted_paths as u64, audit.domain_errors);
}
