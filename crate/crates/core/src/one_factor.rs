//! One-factor schemes: the semi-discrete squared scheme, exact transition
//! sampling, the split-exact scheme, and a full-truncation Euler comparator.

use crate::error::{CirError, Result};
use crate::params::{
    snap_degree, validate_semidiscrete, validate_split, CirParams, DriftSplit, GridSpec,
    SchemeKind, SchemeSpec,
};
use crate::randomness::{BrownianPath, SeedSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepState {
    pub t_index: usize,
    pub value: f64,
}

/// What happened inside one squared-scheme step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    /// Value under the square root, before the noise is added.
    pub radicand: f64,
    /// Pre-squaring quantity; the next value is `z_value²`.
    pub z_value: f64,
    /// `z_value < 0`.
    pub sign_flip: bool,
}

impl StepDiagnostics {
    fn new(radicand: f64, z_value: f64) -> Self {
        Self {
            radicand,
            z_value,
            sign_flip: z_value < 0.0,
        }
    }

    /// `y'·(sgn z − 1)²` with `y' = z²`.
    pub fn weighted_flip(&self) -> f64 {
        let y = self.z_value * self.z_value;
        let sgn = if self.z_value > 0.0 {
            1.0
        } else if self.z_value < 0.0 {
            -1.0
        } else {
            0.0
        };
        y * (sgn - 1.0) * (sgn - 1.0)
    }
}

/// Accepts a radicand that is negative only through cancellation in its terms.
///
/// `scale` is the sum of the magnitudes of the terms that produced `value`.
pub(crate) fn settle_radicand(value: f64, scale: f64) -> Option<f64> {
    if value >= 0.0 {
        Some(value)
    } else if value >= -8.0 * f64::EPSILON * scale {
        Some(0.0)
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy)]
struct SemiDiscreteStep {
    coef: f64,
    shift: f64,
    shift_scale: f64,
    noise: f64,
}

impl SemiDiscreteStep {
    fn new(p: &CirParams, delta: f64, a: f64) -> Self {
        let (k, l, sigma) = (p.k(), p.l(), p.sigma());
        let c = 1.0 + k * a * delta;
        let drift = delta / c * (k * l);
        let ito = delta / c * (sigma * sigma / (4.0 * c));
        Self {
            coef: 1.0 - k * delta / c,
            shift: drift - ito,
            shift_scale: drift + ito,
            noise: sigma / (2.0 * c),
        }
    }

    fn radicand(&self, y: f64) -> Result<f64> {
        let raw = y * self.coef + self.shift;
        settle_radicand(raw, (y * self.coef).abs() + self.shift_scale).ok_or_else(|| {
            CirError::Domain(format!("negative radicand {raw} in semi-discrete step"))
        })
    }

    #[inline]
    fn apply(&self, y: f64, dw: f64) -> Result<(f64, StepDiagnostics)> {
        let radicand = self.radicand(y)?;
        let z = self.noise * dw + radicand.sqrt();
        Ok((z * z, StepDiagnostics::new(radicand, z)))
    }
}

/// One step of the semi-discrete squared scheme with weight `a`:
///
/// ```text
/// c  = 1 + k·a·Δ
/// y' = ( σ/(2c)·dW + √( y(1 − kΔ/c) + (Δ/c)(kl − σ²/(4c)) ) )²
/// ```
pub fn sd_squared_step(
    p: &CirParams,
    delta: f64,
    a: f64,
    y: f64,
    dw: f64,
) -> Result<(f64, StepDiagnostics)> {
    SemiDiscreteStep::new(p, delta, a).apply(y, dw)
}

/// Exact transition of `dx = (θ − κx)dt + σ√x dW` over `delta`, for integer degree `d = 4θ/σ²`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ExactStep {
    degree: usize,
    half_decay: f64,
    noise: f64,
}

impl ExactStep {
    pub(crate) fn new(theta: f64, kappa: f64, sigma: f64, delta: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(CirError::Usage(
                "exact transition needs a positive volatility".into(),
            ));
        }
        let d = snap_degree(4.0 * theta / (sigma * sigma));
        if !(d >= 1.0 && d.fract() == 0.0) {
            return Err(CirError::Usage(format!(
                "exact transition needs a positive integer degree 4θ/σ², got {d}"
            )));
        }
        let variance_factor = if kappa == 0.0 {
            delta
        } else {
            -(-kappa * delta).exp_m1() / kappa
        };
        Ok(Self {
            degree: d as usize,
            half_decay: (-0.5 * kappa * delta).exp(),
            noise: 0.5 * sigma * variance_factor.sqrt(),
        })
    }

    pub(crate) fn degree(&self) -> usize {
        self.degree
    }

    #[inline]
    pub(crate) fn apply(&self, x: f64, z: &[f64]) -> f64 {
        let centre = self.half_decay * (x / self.degree as f64).sqrt();
        z.iter()
            .map(|&zj| {
                let term = centre + self.noise * zj;
                term * term
            })
            .sum()
    }
}

/// Exact draw from the CIR transition law as a sum of `d` squared shifted Gaussians:
///
/// ```text
/// x' = Σ_j ( e^{−κΔ/2}·√(x/d) + (σ/2)·√((1 − e^{−κΔ})/κ)·z_j )²
/// ```
///
/// `z` must hold exactly `d = 4θ/σ²` draws. `κ = 0` uses the limit `Δ` for the variance factor.
pub fn exact_cir_step(
    theta: f64,
    kappa: f64,
    sigma: f64,
    x: f64,
    delta: f64,
    z: &[f64],
) -> Result<f64> {
    let step = ExactStep::new(theta, kappa, sigma, delta)?;
    if z.len() != step.degree {
        return Err(CirError::Usage(format!(
            "exact transition of degree {} got {} Gaussians",
            step.degree,
            z.len()
        )));
    }
    if x < 0.0 {
        return Err(CirError::Domain(format!(
            "negative state {x} in exact step"
        )));
    }
    Ok(step.apply(x, z))
}

#[derive(Debug, Clone, Copy)]
struct SplitStep {
    keep: f64,
    add: f64,
    exact: ExactStep,
}

impl SplitStep {
    fn new(p: &CirParams, delta: f64) -> Result<Self> {
        let split = DriftSplit::one_factor(p)?;
        let exact = ExactStep::new(split.exact * p.l(), split.exact, p.sigma(), delta)?;
        Ok(Self {
            keep: 1.0 - split.frozen * delta,
            add: delta * split.frozen * p.l(),
            exact,
        })
    }

    #[inline]
    fn apply(&self, y: f64, z: &[f64]) -> Result<f64> {
        let v = y * self.keep + self.add;
        if v < 0.0 {
            return Err(CirError::Domain(format!(
                "negative intermediate {v} in split step"
            )));
        }
        Ok(self.exact.apply(v, z))
    }
}

/// Split-exact step: freeze `k1` for one explicit increment, then sample the
/// `k2` part exactly.
///
/// ```text
/// v  = y(1 − k1Δ) + Δ·k1·l
/// y' = exact transition with θ = k2·l, κ = k2 started from v
/// ```
pub fn split_exact_step(p: &CirParams, delta: f64, y: f64, z: &[f64]) -> Result<f64> {
    let step = SplitStep::new(p, delta)?;
    if z.len() != step.exact.degree {
        return Err(CirError::Usage(format!(
            "split step of degree {} got {} Gaussians",
            step.exact.degree,
            z.len()
        )));
    }
    step.apply(y, z)
}

/// Full-truncation Euler: `y + Δ(kl − k·y⁺) + σ√(y⁺)·dW`. The result may be negative.
pub fn truncated_euler_step(p: &CirParams, delta: f64, y: f64, dw: f64) -> f64 {
    let y_plus = y.max(0.0);
    y + delta * (p.k() * p.l() - p.k() * y_plus) + p.sigma() * y_plus.sqrt() * dw
}

/// Source of randomness for a path.
#[derive(Debug, Clone, Copy)]
pub enum Noise<'a> {
    /// Pre-generated Brownian increments (Brownian-driven schemes only).
    Path(&'a BrownianPath),
    /// A seed; Brownian schemes build the level-0 path from it, exact schemes
    /// draw their Gaussians from its base substream.
    Seed(SeedSpec),
}

/// Per-path summary of step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PathDiagnostics {
    pub steps: usize,
    pub sign_flips: usize,
    /// Sum over steps of `y'·(sgn z − 1)²`.
    pub weighted_flip_sum: f64,
    pub negative_nodes: usize,
    pub min_radicand: Option<f64>,
}

impl PathDiagnostics {
    fn record(&mut self, d: &StepDiagnostics) {
        if d.sign_flip {
            self.sign_flips += 1;
        }
        self.weighted_flip_sum += d.weighted_flip();
        self.min_radicand = Some(match self.min_radicand {
            Some(m) => m.min(d.radicand),
            None => d.radicand,
        });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CirPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub diagnostics: PathDiagnostics,
}

impl CirPath {
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths have at least one node")
    }
}

/// Resolves `noise` to a Brownian path on `g` with at least `count` noises,
/// returning the path and the index of its first noise to use.
pub(crate) fn brownian_source<'a>(
    noise: Noise<'a>,
    g: &GridSpec,
    count: usize,
    owned: &'a mut Option<BrownianPath>,
) -> Result<(&'a BrownianPath, usize)> {
    let (path, offset): (&BrownianPath, usize) = match noise {
        Noise::Path(path) => (path, 0),
        Noise::Seed(seed) => {
            let first = seed.stream.noise_index;
            let path = owned.insert(BrownianPath::new(
                seed.master_seed,
                seed.stream.path_index,
                first + count as u32,
                g,
            ));
            (path, first as usize)
        }
    };
    if path.n_steps() != g.n_steps() || (path.delta() - g.delta()).abs() > 1e-12 * g.delta() {
        return Err(CirError::Usage(format!(
            "Brownian path has {} steps of {}, grid has {} steps of {}",
            path.n_steps(),
            path.delta(),
            g.n_steps(),
            g.delta()
        )));
    }
    if offset + count > path.noises() {
        return Err(CirError::Usage(format!(
            "Brownian path has {} noises, need {}",
            path.noises(),
            offset + count
        )));
    }
    Ok((path, offset))
}

/// Checks the gates `spec` needs on `(p, g)`; a failure is a [`CirError::Domain`].
pub fn check_gates(p: &CirParams, g: &GridSpec, spec: &SchemeSpec) -> Result<()> {
    match spec.kind() {
        SchemeKind::SemiDiscreteSquared => {
            let a = spec.a().expect("semi-discrete spec carries a");
            validate_semidiscrete(p, g, a).into_result()
        }
        SchemeKind::TruncatedEuler => Ok(()),
        SchemeKind::SplitExact => validate_split(p, g)?.verdict.into_result(),
        SchemeKind::ExactSim => {
            if p.sigma() == 0.0 || !p.degree().is_positive_integer() {
                return Err(CirError::Domain(format!(
                    "exact simulation needs a positive integer degree 4kl/σ², got {}",
                    p.degree().value()
                )));
            }
            Ok(())
        }
        other => Err(CirError::Usage(format!("`{other}` is a two-factor scheme"))),
    }
}

/// Runs a one-factor scheme over `g`, reporting each node `(index, value)` to `observe`.
///
/// Gates for `spec` are checked first; an invalid configuration is a [`CirError::Domain`].
pub fn run_path<F: FnMut(usize, f64)>(
    p: &CirParams,
    g: &GridSpec,
    spec: &SchemeSpec,
    noise: Noise<'_>,
    mut observe: F,
) -> Result<PathDiagnostics> {
    let delta = g.delta();
    let n = g.n_steps();
    let mut diag = PathDiagnostics {
        steps: n,
        ..Default::default()
    };
    let mut y = p.x0();
    observe(0, y);
    check_gates(p, g, spec)?;
    let mut owned = None;
    match spec.kind() {
        SchemeKind::SemiDiscreteSquared => {
            let a = spec.a().expect("semi-discrete spec carries a");
            let step = SemiDiscreteStep::new(p, delta, a);
            let (path, offset) = brownian_source(noise, g, 1, &mut owned)?;
            let dw = path.increments(offset);
            for (i, &w) in dw.iter().enumerate() {
                let (next, d) = step.apply(y, w)?;
                diag.record(&d);
                y = next;
                observe(i + 1, y);
            }
        }
        SchemeKind::TruncatedEuler => {
            let (path, offset) = brownian_source(noise, g, 1, &mut owned)?;
            let dw = path.increments(offset);
            for (i, &w) in dw.iter().enumerate() {
                y = truncated_euler_step(p, delta, y, w);
                if y < 0.0 {
                    diag.negative_nodes += 1;
                }
                observe(i + 1, y);
            }
        }
        SchemeKind::SplitExact | SchemeKind::ExactSim => {
            let Noise::Seed(seed) = noise else {
                return Err(CirError::Usage(format!(
                    "`{}` draws its own Gaussians and needs a seed, not a Brownian path",
                    spec.kind()
                )));
            };
            let mut stream = seed.gaussians();
            if spec.kind() == SchemeKind::SplitExact {
                let step = SplitStep::new(p, delta)?;
                let mut z = vec![0.0; step.exact.degree()];
                for i in 0..n {
                    stream.fill(&mut z);
                    y = step.apply(y, &z)?;
                    observe(i + 1, y);
                }
            } else {
                let step = ExactStep::new(p.k() * p.l(), p.k(), p.sigma(), delta)?;
                let mut z = vec![0.0; step.degree()];
                for i in 0..n {
                    stream.fill(&mut z);
                    y = step.apply(y, &z);
                    observe(i + 1, y);
                }
            }
        }
        other => return Err(CirError::Usage(format!("`{other}` is a two-factor scheme"))),
    }
    Ok(diag)
}

/// Simulates one path and returns all `n + 1` nodes.
///
/// Gaussian consumption: one increment per step for Brownian schemes; for exact
/// and split schemes, `d` (or `⌊d⌋`) draws per step in index order.
pub fn simulate_path(
    p: &CirParams,
    g: &GridSpec,
    spec: &SchemeSpec,
    noise: Noise<'_>,
) -> Result<CirPath> {
    let mut values = Vec::with_capacity(g.n_steps() + 1);
    let diagnostics = run_path(p, g, spec, noise, |_, y| values.push(y))?;
    let times = (0..=g.n_steps()).map(|i| g.node(i)).collect();
    Ok(CirPath {
        times,
        values,
        diagnostics,
    })
}
