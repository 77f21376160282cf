//! Monte Carlo harness: strong self-convergence ladders, weak moment errors,
//! positivity audits, and the sign-flip study.
//!
//! Paths are spread over the ambient rayon pool. Each path draws from its own
//! substream and per-path results are reduced in path order, so reports are
//! bit-identical for any number of workers.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CirError, Result};
use crate::one_factor::{check_gates, run_path, Noise};
use crate::oracles::{cir_moments, two_factor_mean_at};
use crate::params::{
    validate_semidiscrete, validate_two_factor, CirParams, GridSpec, SchemeKind, SchemeSpec,
    TwoFactorParams,
};
use crate::randomness::{BrownianPath, SeedSpec};
use crate::two_factor::run_pair_path;

/// Default moment-explosion guard, as a multiple of the largest level or initial value.
pub const EXPLOSION_GUARD_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    OneFactor(CirParams),
    TwoFactor(TwoFactorParams),
}

fn map_paths<T, F>(n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n_paths as u64).into_par_iter().map(f).collect()
}

/// Running sums for mean / variance estimates, filled in path order.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Sums {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    fn mean(&self) -> f64 {
        self.sum / self.n
    }

    /// Unbiased sample variance.
    fn variance(&self) -> f64 {
        if self.n < 2.0 {
            return 0.0;
        }
        let m = self.mean();
        ((self.sum_sq - self.n * m * m) / (self.n - 1.0)).max(0.0)
    }

    fn std_error(&self) -> f64 {
        (self.variance() / self.n).sqrt()
    }
}

/// Sample moments of one coordinate at the horizon against the oracle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoordinateMoments {
    pub mc_mean: f64,
    pub mean_std_error: f64,
    pub oracle_mean: f64,
    pub mean_error: f64,
    pub mc_variance: f64,
    pub oracle_variance: Option<f64>,
    pub variance_error: Option<f64>,
}

impl CoordinateMoments {
    fn new(sums: &Sums, oracle_mean: f64, oracle_variance: Option<f64>) -> Self {
        let mc_variance = sums.variance();
        Self {
            mc_mean: sums.mean(),
            mean_std_error: sums.std_error(),
            oracle_mean,
            mean_error: (sums.mean() - oracle_mean).abs(),
            mc_variance,
            oracle_variance,
            variance_error: oracle_variance.map(|v| (mc_variance - v).abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LadderLevel {
    pub delta: f64,
    pub n_steps: usize,
    /// `√(mean |y_T − y_T^ref|²)`, strong ladders only.
    pub strong_error_l2: Option<f64>,
    pub std_error: Option<f64>,
    /// Largest absolute mean error over the coordinates.
    pub weak_mean_error: f64,
    pub weak_var_error: Option<f64>,
    pub coordinates: Vec<CoordinateMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedLevel {
    pub delta: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorReport {
    pub scheme: SchemeSpec,
    /// Sorted by decreasing step size.
    pub ladder: Vec<LadderLevel>,
    pub skipped: Vec<SkippedLevel>,
    pub reference_delta: Option<f64>,
    pub fitted_order: Option<f64>,
    pub fit_residual: Option<f64>,
    pub n_paths: usize,
    pub seed: u64,
    /// Paths aborted by a domain error (cross-diffusion scheme only).
    pub aborted_paths: usize,
    /// Whether any node of any path exceeded the explosion guard.
    pub moment_explosion: bool,
    pub runtime_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderFit {
    pub slope: f64,
    pub intercept: f64,
    /// Sum of squared residuals in log2 space.
    pub residual: f64,
    /// Step sizes of the levels left out because their error was not positive.
    pub excluded: Vec<f64>,
}

/// Least-squares slope of `log2(error)` against `log2(delta)`.
///
/// Levels with a non-positive (or non-finite) error are excluded and listed.
pub fn fit_order(ladder: &[(f64, f64)]) -> Result<OrderFit> {
    let mut excluded = Vec::new();
    let mut pts = Vec::with_capacity(ladder.len());
    for &(delta, err) in ladder {
        if err > 0.0 && err.is_finite() && delta > 0.0 {
            pts.push((delta.log2(), err.log2()));
        } else {
            excluded.push(delta);
        }
    }
    if pts.len() < 2 {
        return Err(CirError::Usage(format!(
            "order fit needs at least 2 levels with positive error, got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(CirError::Usage(
            "order fit needs distinct step sizes".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    Ok(OrderFit {
        slope,
        intercept,
        residual,
        excluded,
    })
}

fn one_factor_gate(p: &CirParams, g: &GridSpec, spec: &SchemeSpec) -> Result<()> {
    match spec.kind() {
        SchemeKind::SemiDiscreteSquared => {
            validate_semidiscrete(p, g, spec.a().unwrap_or(0.0)).into_result()
        }
        SchemeKind::TruncatedEuler => Ok(()),
        other => Err(CirError::Usage(format!(
            "strong self-convergence needs a Brownian-driven one-factor scheme, got `{other}`"
        ))),
    }
}

/// Terminal values of one path at several refinement levels of `g_coarse`,
/// all driven by the same Brownian motion.
///
/// The path is generated at the coarse level, refined up to the deepest
/// requested level, and aggregated back down for the others.
pub fn coupled_terminals(
    p: &CirParams,
    g_coarse: &GridSpec,
    spec: &SchemeSpec,
    seed: u64,
    path_index: u64,
    levels: &[u32],
) -> Result<Vec<f64>> {
    let deepest = levels.iter().copied().max().unwrap_or(0);
    let mut path = BrownianPath::new(seed, path_index, 1, g_coarse).refined(deepest);
    let mut order: Vec<usize> = (0..levels.len()).collect();
    order.sort_by(|&a, &b| levels[b].cmp(&levels[a]));
    let mut out = vec![0.0; levels.len()];
    for idx in order {
        if path.level() != levels[idx] {
            path = path
                .at_level(levels[idx])
                .expect("levels visited in decreasing order");
        }
        let g = g_coarse.refined(levels[idx]);
        let mut terminal = 0.0;
        run_path(p, &g, spec, Noise::Path(&path), |_, y| terminal = y)?;
        out[idx] = terminal;
    }
    Ok(out)
}

/// Strong self-convergence ladder: level `m` uses step `Δ/2^m` for
/// `m = 0..levels`, and the reference uses `Δ/2^(levels+2)` on the same
/// refined Brownian path.
pub fn strong_self_convergence(
    p: &CirParams,
    g_coarse: &GridSpec,
    levels: u32,
    spec: &SchemeSpec,
    n_paths: usize,
    seed: u64,
) -> Result<ErrorReport> {
    let start = Instant::now();
    if spec.kind().is_two_factor() || !spec.kind().is_brownian_driven() {
        return Err(CirError::Usage(format!(
            "strong self-convergence needs a Brownian-driven one-factor scheme, got `{}`",
            spec.kind()
        )));
    }
    if levels < 3 {
        return Err(CirError::Usage(format!(
            "strong self-convergence needs at least 3 levels, got {levels}"
        )));
    }
    if n_paths < 2 {
        return Err(CirError::Usage(
            "strong self-convergence needs at least 2 paths".into(),
        ));
    }
    let reference = levels + 2;
    let g_ref = g_coarse.refined(reference);
    one_factor_gate(p, &g_ref, spec)?;

    let mut active = Vec::new();
    let mut skipped = Vec::new();
    for m in 0..levels {
        let g = g_coarse.refined(m);
        match one_factor_gate(p, &g, spec) {
            Ok(()) => active.push(m),
            Err(e) => skipped.push(SkippedLevel {
                delta: g.delta(),
                reason: e.to_string(),
            }),
        }
    }
    let mut requested = active.clone();
    requested.push(reference);

    let guard = EXPLOSION_GUARD_FACTOR * p.l().max(p.x0());
    let per_path = map_paths(n_paths, |i| {
        coupled_terminals(p, g_coarse, spec, seed, i, &requested)
    });

    let oracle = cir_moments(p, g_coarse.t_max());
    let mut sq_diff = vec![Sums::default(); active.len()];
    let mut values = vec![Sums::default(); active.len()];
    let mut moment_explosion = false;
    for result in per_path {
        let terminals = result?;
        let y_ref = terminals[active.len()];
        for (j, &y) in terminals[..active.len()].iter().enumerate() {
            sq_diff[j].push((y - y_ref).powi(2));
            values[j].push(y);
            moment_explosion |= y.abs() > guard;
        }
    }

    let ladder: Vec<LadderLevel> = active
        .iter()
        .enumerate()
        .map(|(j, &m)| {
            let g = g_coarse.refined(m);
            let ms = sq_diff[j].mean();
            let strong = ms.sqrt();
            let se = if strong > 0.0 {
                sq_diff[j].std_error() / (2.0 * strong)
            } else {
                0.0
            };
            let coord = CoordinateMoments::new(&values[j], oracle.mean, Some(oracle.variance));
            LadderLevel {
                delta: g.delta(),
                n_steps: g.n_steps(),
                strong_error_l2: Some(strong),
                std_error: Some(se),
                weak_mean_error: coord.mean_error,
                weak_var_error: coord.variance_error,
                coordinates: vec![coord],
            }
        })
        .collect();

    let points: Vec<(f64, f64)> = ladder
        .iter()
        .map(|l| (l.delta, l.strong_error_l2.unwrap_or(0.0)))
        .collect();
    let fit = if points.len() >= 2 {
        fit_order(&points).ok()
    } else {
        None
    };

    Ok(ErrorReport {
        scheme: *spec,
        ladder,
        skipped,
        reference_delta: Some(g_ref.delta()),
        fitted_order: fit.as_ref().map(|f| f.slope),
        fit_residual: fit.as_ref().map(|f| f.residual),
        n_paths,
        seed,
        aborted_paths: 0,
        moment_explosion,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

fn check_model_scheme(model: &Model, spec: &SchemeSpec) -> Result<()> {
    match (model, spec.kind().is_two_factor()) {
        (Model::OneFactor(_), true) => Err(CirError::Usage(format!(
            "`{}` needs two-factor parameters",
            spec.kind()
        ))),
        (Model::TwoFactor(_), false) => Err(CirError::Usage(format!(
            "`{}` needs one-factor parameters",
            spec.kind()
        ))),
        _ => Ok(()),
    }
}

fn validate_model(model: &Model, g: &GridSpec, spec: &SchemeSpec) -> Result<()> {
    check_model_scheme(model, spec)?;
    match model {
        Model::OneFactor(p) => check_gates(p, g, spec),
        Model::TwoFactor(p) => validate_two_factor(p, g, spec.kind())?
            .verdict
            .into_result(),
    }
}

/// Terminal mean (and, for one factor, variance) against the oracles on a single grid.
///
/// `explosion_guard` defaults to `10⁶ × max(l, x0)` (one factor) or
/// `10⁶ × max(k, l, x10, x20)` (two factor).
pub fn weak_moment_error(
    model: &Model,
    g: &GridSpec,
    spec: &SchemeSpec,
    n_paths: usize,
    seed: u64,
    explosion_guard: Option<f64>,
) -> Result<ErrorReport> {
    let start = Instant::now();
    validate_model(model, g, spec)?;
    let mut aborted_paths = 0;
    let mut moment_explosion = false;
    let coordinates = match model {
        Model::OneFactor(p) => {
            let guard = explosion_guard.unwrap_or(EXPLOSION_GUARD_FACTOR * p.l().max(p.x0()));
            let per_path = map_paths(n_paths, |i| {
                let mut terminal = 0.0;
                let mut peak = 0.0f64;
                run_path(
                    p,
                    g,
                    spec,
                    Noise::Seed(SeedSpec::new(seed, i, 0)),
                    |_, y| {
                        terminal = y;
                        peak = peak.max(y.abs());
                    },
                )
                .map(|_| (terminal, peak))
            });
            let mut sums = Sums::default();
            for r in per_path {
                let (y, peak) = r?;
                sums.push(y);
                moment_explosion |= peak > guard;
            }
            let oracle = cir_moments(p, g.t_max());
            vec![CoordinateMoments::new(
                &sums,
                oracle.mean,
                Some(oracle.variance),
            )]
        }
        Model::TwoFactor(p) => {
            let scale = p.k().max(p.l()).max(p.x10()).max(p.x20());
            let guard = explosion_guard.unwrap_or(EXPLOSION_GUARD_FACTOR * scale);
            let per_path = map_paths(n_paths, |i| {
                let mut terminal = (0.0, 0.0);
                let mut peak = 0.0f64;
                run_pair_path(
                    p,
                    g,
                    spec,
                    Noise::Seed(SeedSpec::new(seed, i, 0)),
                    |_, a, b| {
                        terminal = (a, b);
                        peak = peak.max(a.abs()).max(b.abs());
                    },
                )
                .map(|_| (terminal, peak))
            });
            let (mut s1, mut s2) = (Sums::default(), Sums::default());
            for r in per_path {
                match r {
                    Ok(((a, b), peak)) => {
                        s1.push(a);
                        s2.push(b);
                        moment_explosion |= peak > guard;
                    }
                    Err(CirError::Domain(_))
                        if spec.kind() == SchemeKind::TwoFactorCrossDiffusion =>
                    {
                        aborted_paths += 1;
                    }
                    Err(e) => return Err(e),
                }
            }
            let (m1, m2) = two_factor_mean_at(p, g.t_max());
            vec![
                CoordinateMoments::new(&s1, m1, None),
                CoordinateMoments::new(&s2, m2, None),
            ]
        }
    };
    let weak_mean_error = coordinates.iter().map(|c| c.mean_error).fold(0.0, f64::max);
    let weak_var_error = coordinates
        .iter()
        .filter_map(|c| c.variance_error)
        .reduce(f64::max);
    Ok(ErrorReport {
        scheme: *spec,
        ladder: vec![LadderLevel {
            delta: g.delta(),
            n_steps: g.n_steps(),
            strong_error_l2: None,
            std_error: None,
            weak_mean_error,
            weak_var_error,
            coordinates,
        }],
        skipped: Vec::new(),
        reference_delta: None,
        fitted_order: None,
        fit_residual: None,
        n_paths,
        seed,
        aborted_paths,
        moment_explosion,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityAudit {
    pub scheme: SchemeSpec,
    pub n_paths: usize,
    pub nodes: u64,
    pub negative_nodes: u64,
    /// Paths aborted by a domain error (negative radicand).
    pub domain_errors: u64,
}

/// Counts negative nodes and aborted paths over `n_paths` seeded paths.
pub fn positivity_audit(
    spec: &SchemeSpec,
    model: &Model,
    g: &GridSpec,
    n_paths: usize,
    seed: u64,
) -> Result<PositivityAudit> {
    validate_model(model, g, spec)?;
    let per_path = map_paths(n_paths, |i| {
        let noise = Noise::Seed(SeedSpec::new(seed, i, 0));
        let mut negatives = 0u64;
        let mut nodes = 0u64;
        let result = match model {
            Model::OneFactor(p) => run_path(p, g, spec, noise, |_, y| {
                nodes += 1;
                negatives += u64::from(y < 0.0);
            })
            .map(|_| ()),
            Model::TwoFactor(p) => run_pair_path(p, g, spec, noise, |_, a, b| {
                nodes += 1;
                negatives += u64::from(a < 0.0 || b < 0.0);
            })
            .map(|_| ()),
        };
        (result, nodes, negatives)
    });
    let mut audit = PositivityAudit {
        scheme: *spec,
        n_paths,
        nodes: 0,
        negative_nodes: 0,
        domain_errors: 0,
    };
    for (result, nodes, negatives) in per_path {
        audit.nodes += nodes;
        audit.negative_nodes += negatives;
        match result {
            Ok(()) => {}
            Err(CirError::Domain(_)) => audit.domain_errors += 1,
            Err(e) => return Err(e),
        }
    }
    Ok(audit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignFlipLevel {
    pub delta: f64,
    pub n_steps: usize,
    /// Fraction of steps with `z < 0`, averaged over paths.
    pub flip_fraction: f64,
    pub flip_std_error: f64,
    /// Mean over steps and paths of `y·(sgn z − 1)²`.
    pub weighted_statistic: f64,
    pub weighted_std_error: f64,
    pub n_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignFlipReport {
    pub a: f64,
    /// Sorted by decreasing step size.
    pub ladder: Vec<SignFlipLevel>,
    pub seed: u64,
    pub flip_non_increasing: bool,
    pub weighted_non_increasing: bool,
}

/// Whether `values` never rises by more than `slack` combined standard errors
/// between consecutive entries.
pub fn non_increasing_within(values: &[(f64, f64)], slack: f64) -> bool {
    values
        .windows(2)
        .all(|w| w[1].0 <= w[0].0 + slack * (w[0].1.powi(2) + w[1].1.powi(2)).sqrt())
}

/// Sign-flip frequency of the semi-discrete scheme on each grid of `ladder`.
pub fn sign_flip_study(
    p: &CirParams,
    ladder: &[GridSpec],
    a: f64,
    n_paths: usize,
    seed: u64,
) -> Result<SignFlipReport> {
    if p.x0() <= 0.0 {
        return Err(CirError::Usage("sign-flip study needs x0 > 0".into()));
    }
    if n_paths == 0 {
        return Err(CirError::Usage(
            "sign-flip study needs at least one path".into(),
        ));
    }
    let spec = SchemeSpec::semi_discrete(a)?;
    let mut grids = ladder.to_vec();
    grids.sort_by(|x, y| y.delta().total_cmp(&x.delta()));
    for g in &grids {
        validate_semidiscrete(p, g, a).into_result()?;
    }
    let mut levels = Vec::with_capacity(grids.len());
    for g in &grids {
        let per_path = map_paths(n_paths, |i| {
            run_path(
                p,
                g,
                &spec,
                Noise::Seed(SeedSpec::new(seed, i, 0)),
                |_, _| {},
            )
        });
        let (mut flips, mut weighted) = (Sums::default(), Sums::default());
        for r in per_path {
            let d = r?;
            flips.push(d.sign_flips as f64 / d.steps as f64);
            weighted.push(d.weighted_flip_sum / d.steps as f64);
        }
        levels.push(SignFlipLevel {
            delta: g.delta(),
            n_steps: g.n_steps(),
            flip_fraction: flips.mean(),
            flip_std_error: flips.std_error(),
            weighted_statistic: weighted.mean(),
            weighted_std_error: weighted.std_error(),
            n_paths,
        });
    }
    let flips: Vec<_> = levels
        .iter()
        .map(|l| (l.flip_fraction, l.flip_std_error))
        .collect();
    let weighted: Vec<_> = levels
        .iter()
        .map(|l| (l.weighted_statistic, l.weighted_std_error))
        .collect();
    Ok(SignFlipReport {
        a,
        flip_non_increasing: non_increasing_within(&flips, 2.0),
        weighted_non_increasing: non_increasing_within(&weighted, 2.0),
        ladder: levels,
        seed,
    })
}
