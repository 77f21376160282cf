//! Two-factor schemes. Both coordinates always advance from the values at
//! `t_k`; neither update reads the other's new value.

use crate::error::{CirError, Result};
use crate::one_factor::{brownian_source, settle_radicand, ExactStep, Noise, StepDiagnostics};
use crate::params::{
    validate_two_factor, DriftSplit, GridSpec, SchemeKind, SchemeSpec, TwoFactorParams,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub t_index: usize,
    pub y1: f64,
    pub y2: f64,
}

impl PairState {
    fn advance(&self, y1: f64, y2: f64) -> Self {
        Self {
            t_index: self.t_index + 1,
            y1,
            y2,
        }
    }
}

/// The exact sub-steps and frozen increments of the split scheme.
#[derive(Debug, Clone, Copy)]
struct PairSplitStep {
    delta: f64,
    frozen1: f64,
    frozen2: f64,
    exact1: ExactStep,
    exact2: ExactStep,
}

impl PairSplitStep {
    fn new(p: &TwoFactorParams, delta: f64) -> Result<Self> {
        let (s1, s2) = DriftSplit::two_factor(p)?;
        Ok(Self {
            delta,
            frozen1: s1.frozen,
            frozen2: s2.frozen,
            exact1: ExactStep::new(s1.exact, p.lambda11, p.sigma1, delta)?,
            exact2: ExactStep::new(s2.exact, p.lambda21, p.sigma2, delta)?,
        })
    }

    #[inline]
    fn apply(&self, p: &TwoFactorParams, s: &PairState, z1: &[f64], z2: &[f64]) -> PairState {
        let v1 = s.y1 + self.delta * p.lambda12 * s.y2 + self.delta * self.frozen1;
        let v2 = s.y2 + self.delta * p.lambda22 * s.y1 + self.delta * self.frozen2;
        s.advance(self.exact1.apply(v1, z1), self.exact2.apply(v2, z2))
    }
}

/// Split step: the cross terms and `k1`, `l1` are frozen as explicit increments,
/// then each coordinate takes an exact CIR step.
///
/// ```text
/// v1 = y1 + Δλ12·y2 + Δk1,   y1' = exact(θ = k2, κ = λ11, σ1) from v1
/// v2 = y2 + Δλ22·y1 + Δl1,   y2' = exact(θ = l2, κ = λ21, σ2) from v2
/// ```
///
/// `z1` and `z2` hold `⌊4k/σ1²⌋` and `⌊4l/σ2²⌋` Gaussians.
pub fn two_factor_split_step(
    p: &TwoFactorParams,
    delta: f64,
    s: &PairState,
    z1: &[f64],
    z2: &[f64],
) -> Result<PairState> {
    let step = PairSplitStep::new(p, delta)?;
    if z1.len() != step.exact1.degree() || z2.len() != step.exact2.degree() {
        return Err(CirError::Usage(format!(
            "split step needs ({}, {}) Gaussians, got ({}, {})",
            step.exact1.degree(),
            step.exact2.degree(),
            z1.len(),
            z2.len()
        )));
    }
    if s.y1 < 0.0 || s.y2 < 0.0 {
        return Err(CirError::Domain(format!(
            "negative state ({}, {}) in split step",
            s.y1, s.y2
        )));
    }
    Ok(step.apply(p, s, z1, z2))
}

#[derive(Debug, Clone, Copy)]
struct SquaredTerms {
    keep: f64,
    cross: f64,
    drift: f64,
    ito: f64,
    noise: f64,
}

impl SquaredTerms {
    #[inline]
    fn step(&self, own: f64, other: f64, dw: f64, which: &str) -> Result<(f64, StepDiagnostics)> {
        let a = own * self.keep;
        let b = self.cross * other;
        let raw = a + b + (self.drift - self.ito);
        let radicand =
            settle_radicand(raw, a.abs() + b + self.drift + self.ito).ok_or_else(|| {
                CirError::Domain(format!("negative radicand {raw} in coordinate {which}"))
            })?;
        let z = self.noise * dw + radicand.sqrt();
        Ok((
            z * z,
            StepDiagnostics {
                radicand,
                z_value: z,
                sign_flip: z < 0.0,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy)]
struct PairSquaredStep {
    first: SquaredTerms,
    second: SquaredTerms,
}

impl PairSquaredStep {
    fn new(p: &TwoFactorParams, delta: f64) -> Self {
        Self {
            first: SquaredTerms {
                keep: 1.0 - p.lambda11 * delta,
                cross: delta * p.lambda12,
                drift: delta * p.k,
                ito: delta * p.sigma1 * p.sigma1 / 4.0,
                noise: p.sigma1 / 2.0,
            },
            second: SquaredTerms {
                keep: 1.0 - p.lambda21 * delta,
                cross: delta * p.lambda22,
                drift: delta * p.l,
                ito: delta * p.sigma2 * p.sigma2 / 4.0,
                noise: p.sigma2 / 2.0,
            },
        }
    }

    #[inline]
    fn apply(
        &self,
        s: &PairState,
        dw1: f64,
        dw2: f64,
    ) -> Result<(PairState, [StepDiagnostics; 2])> {
        let (y1, d1) = self.first.step(s.y1, s.y2, dw1, "1")?;
        let (y2, d2) = self.second.step(s.y2, s.y1, dw2, "2")?;
        Ok((s.advance(y1, y2), [d1, d2]))
    }
}

/// Squared two-factor step:
///
/// ```text
/// y1' = ( σ1/2·dW1 + √( y1(1 − λ11Δ) + Δλ12·y2 + Δ(k − σ1²/4) ) )²
/// y2' = ( σ2/2·dW2 + √( y2(1 − λ21Δ) + Δλ22·y1 + Δ(l − σ2²/4) ) )²
/// ```
pub fn two_factor_squared_step(
    p: &TwoFactorParams,
    delta: f64,
    s: &PairState,
    dw1: f64,
    dw2: f64,
) -> Result<(PairState, [StepDiagnostics; 2])> {
    PairSquaredStep::new(p, delta).apply(s, dw1, dw2)
}

/// EXPERIMENTAL step for the model with `√(x1·x2)` diffusion in both coordinates:
///
/// ```text
/// y1' = ( σ1√y2/2·dW1 + √( y1(1 − λ11Δ) + Δλ12·y2 + Δ(k − σ1²·y2/4) ) )²
/// y2' = ( σ2√y1/2·dW2 + √( y2(1 − λ21Δ) + Δλ22·y1 + Δ(l − σ2²·y1/4) ) )²
/// ```
///
/// No validity gate is known. A negative radicand is returned as an error, never clamped.
pub fn two_factor_cross_step(
    p: &TwoFactorParams,
    delta: f64,
    s: &PairState,
    dw1: f64,
    dw2: f64,
) -> Result<PairState> {
    let coordinate = |own: f64,
                      other: f64,
                      lambda_own: f64,
                      lambda_cross: f64,
                      drift: f64,
                      sigma: f64,
                      dw: f64,
                      which: &str| {
        let radicand = own * (1.0 - lambda_own * delta)
            + delta * lambda_cross * other
            + delta * (drift - sigma * sigma * other / 4.0);
        if radicand < 0.0 {
            return Err(CirError::Domain(format!(
                "negative radicand {radicand} in coordinate {which} of the cross-diffusion step"
            )));
        }
        let z = sigma * other.sqrt() / 2.0 * dw + radicand.sqrt();
        Ok(z * z)
    };
    let y1 = coordinate(s.y1, s.y2, p.lambda11, p.lambda12, p.k, p.sigma1, dw1, "1")?;
    let y2 = coordinate(s.y2, s.y1, p.lambda21, p.lambda22, p.l, p.sigma2, dw2, "2")?;
    Ok(s.advance(y1, y2))
}

/// Per-path summary for the two-factor schemes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairDiagnostics {
    pub steps: usize,
    /// Sign flips per coordinate (squared scheme only).
    pub sign_flips: [usize; 2],
    pub negative_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairPath {
    pub times: Vec<f64>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub diagnostics: PairDiagnostics,
}

impl PairPath {
    pub fn terminal(&self) -> (f64, f64) {
        (*self.y1.last().unwrap(), *self.y2.last().unwrap())
    }
}

/// Runs a two-factor scheme, reporting each node `(index, y1, y2)` to `observe`.
///
/// Noise 0 drives the first coordinate and noise 1 the second. Split schemes
/// need a seed and draw `⌊d1⌋` Gaussians per step from noise 0 and `⌊d2⌋` from noise 1.
/// For the cross-diffusion scheme a negative radicand aborts the path with
/// [`CirError::Domain`].
pub fn run_pair_path<F: FnMut(usize, f64, f64)>(
    p: &TwoFactorParams,
    g: &GridSpec,
    spec: &SchemeSpec,
    noise: Noise<'_>,
    mut observe: F,
) -> Result<PairDiagnostics> {
    let kind = spec.kind();
    validate_two_factor(p, g, kind)?.verdict.into_result()?;
    let delta = g.delta();
    let n = g.n_steps();
    let mut diag = PairDiagnostics {
        steps: n,
        ..Default::default()
    };
    let mut s = PairState {
        t_index: 0,
        y1: p.x10,
        y2: p.x20,
    };
    observe(0, s.y1, s.y2);
    match kind {
        SchemeKind::TwoFactorSplitExact => {
            let Noise::Seed(seed) = noise else {
                return Err(CirError::Usage(
                    "the two-factor split scheme needs a seed, not a Brownian path".into(),
                ));
            };
            let step = PairSplitStep::new(p, delta)?;
            let mut g1 = seed.gaussians();
            let mut g2 = seed.with_noise(seed.stream.noise_index + 1).gaussians();
            let mut z1 = vec![0.0; step.exact1.degree()];
            let mut z2 = vec![0.0; step.exact2.degree()];
            for i in 0..n {
                g1.fill(&mut z1);
                g2.fill(&mut z2);
                s = step.apply(p, &s, &z1, &z2);
                observe(i + 1, s.y1, s.y2);
            }
        }
        SchemeKind::TwoFactorSquared => {
            let step = PairSquaredStep::new(p, delta);
            let mut owned = None;
            let (path, offset) = brownian_source(noise, g, 2, &mut owned)?;
            let (w1, w2) = (path.increments(offset), path.increments(offset + 1));
            for i in 0..n {
                let (next, [d1, d2]) = step.apply(&s, w1[i], w2[i])?;
                diag.sign_flips[0] += usize::from(d1.sign_flip);
                diag.sign_flips[1] += usize::from(d2.sign_flip);
                s = next;
                observe(i + 1, s.y1, s.y2);
            }
        }
        SchemeKind::TwoFactorCrossDiffusion => {
            let mut owned = None;
            let (path, offset) = brownian_source(noise, g, 2, &mut owned)?;
            let (w1, w2) = (path.increments(offset), path.increments(offset + 1));
            for i in 0..n {
                s = two_factor_cross_step(p, delta, &s, w1[i], w2[i])?;
                if s.y1 < 0.0 || s.y2 < 0.0 {
                    diag.negative_nodes += 1;
                }
                observe(i + 1, s.y1, s.y2);
            }
        }
        other => {
            return Err(CirError::Usage(format!("`{other}` is a one-factor scheme")));
        }
    }
    Ok(diag)
}

/// Simulates one two-factor path and returns all `n + 1` nodes.
pub fn simulate_pair_path(
    p: &TwoFactorParams,
    g: &GridSpec,
    spec: &SchemeSpec,
    noise: Noise<'_>,
) -> Result<PairPath> {
    let mut y1 = Vec::with_capacity(g.n_steps() + 1);
    let mut y2 = Vec::with_capacity(g.n_steps() + 1);
    let diagnostics = run_pair_path(p, g, spec, noise, |_, a, b| {
        y1.push(a);
        y2.push(b);
    })?;
    Ok(PairPath {
        times: (0..=g.n_steps()).map(|i| g.node(i)).collect(),
        y1,
        y2,
        diagnostics,
    })
}
