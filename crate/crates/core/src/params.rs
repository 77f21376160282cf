//! Model and scheme parameters, and the validity gates each scheme needs.
//!
//! Every scheme in this crate is only defined on part of the parameter space.
//! The `validate_*` functions are pure and never fail on gate violations: they
//! return a [`ValidityVerdict`] that names each violated inequality with both
//! of its sides evaluated.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{check_nonneg, CirError, Result};

/// Relative tolerance under which a degree `4kl/σ²` is treated as an integer.
pub const DEGREE_SNAP_TOL: f64 = 1e-9;

/// Rounds `d` to the nearest integer when it is within [`DEGREE_SNAP_TOL`] of it.
///
/// Keeps `⌊8 − ε⌋` from collapsing to 7 when `4kl/σ²` is computed in floating point.
pub fn snap_degree(d: f64) -> f64 {
    if !d.is_finite() {
        return d;
    }
    let r = d.round();
    if (d - r).abs() <= DEGREE_SNAP_TOL * r.abs().max(1.0) {
        r
    } else {
        d
    }
}

/// Number of squared Gaussians in an exact transition. Infinite when the diffusion vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Degree {
    Finite(f64),
    Infinite,
}

impl Degree {
    fn from_ratio(numerator: f64, sigma: f64) -> Self {
        if sigma == 0.0 {
            Degree::Infinite
        } else {
            Degree::Finite(snap_degree(numerator / (sigma * sigma)))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Degree::Finite(d) => d,
            Degree::Infinite => f64::INFINITY,
        }
    }

    /// Whether the (snapped) degree is a positive integer.
    pub fn is_positive_integer(self) -> bool {
        matches!(self, Degree::Finite(d) if d >= 1.0 && d.fract() == 0.0)
    }
}

/// One-factor CIR parameters for `dx = k(l − x)dt + σ√x dW`, `x(0) = x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CirParams {
    k: f64,
    l: f64,
    sigma: f64,
    x0: f64,
}

impl CirParams {
    pub fn new(k: f64, l: f64, sigma: f64, x0: f64) -> Result<Self> {
        Ok(Self {
            k: check_nonneg("k", k)?,
            l: check_nonneg("l", l)?,
            sigma: check_nonneg("sigma", sigma)?,
            x0: check_nonneg("x0", x0)?,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    /// `d = 4kl/σ²`, snapped to an integer when within rounding of one.
    pub fn degree(&self) -> Degree {
        Degree::from_ratio(4.0 * self.k * self.l, self.sigma)
    }

    pub fn with_x0(self, x0: f64) -> Result<Self> {
        Self::new(self.k, self.l, self.sigma, x0)
    }
}

/// Two-factor CIR parameters:
///
/// ```text
/// dx1 = (k − λ11·x1 + λ12·x2)dt + σ1√x1 dW1
/// dx2 = (l − λ21·x2 + λ22·x1)dt + σ2√x2 dW2
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoFactorParams {
    pub(crate) k: f64,
    pub(crate) l: f64,
    pub(crate) lambda11: f64,
    pub(crate) lambda12: f64,
    pub(crate) lambda21: f64,
    pub(crate) lambda22: f64,
    pub(crate) sigma1: f64,
    pub(crate) sigma2: f64,
    pub(crate) x10: f64,
    pub(crate) x20: f64,
}

/// Builder-style input for [`TwoFactorParams::new`].
#[derive(Debug, Clone, Copy, Default)]
pub struct TwoFactorInput {
    pub k: f64,
    pub l: f64,
    pub lambda11: f64,
    pub lambda12: f64,
    pub lambda21: f64,
    pub lambda22: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub x10: f64,
    pub x20: f64,
}

impl TwoFactorParams {
    pub fn new(input: TwoFactorInput) -> Result<Self> {
        Ok(Self {
            k: check_nonneg("k", input.k)?,
            l: check_nonneg("l", input.l)?,
            lambda11: check_nonneg("lambda11", input.lambda11)?,
            lambda12: check_nonneg("lambda12", input.lambda12)?,
            lambda21: check_nonneg("lambda21", input.lambda21)?,
            lambda22: check_nonneg("lambda22", input.lambda22)?,
            sigma1: check_nonneg("sigma1", input.sigma1)?,
            sigma2: check_nonneg("sigma2", input.sigma2)?,
            x10: check_nonneg("x10", input.x10)?,
            x20: check_nonneg("x20", input.x20)?,
        })
    }

    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn lambda11(&self) -> f64 {
        self.lambda11
    }
    pub fn lambda12(&self) -> f64 {
        self.lambda12
    }
    pub fn lambda21(&self) -> f64 {
        self.lambda21
    }
    pub fn lambda22(&self) -> f64 {
        self.lambda22
    }
    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    pub fn x10(&self) -> f64 {
        self.x10
    }
    pub fn x20(&self) -> f64 {
        self.x20
    }

    /// `d1 = 4k/σ1²`.
    pub fn degree1(&self) -> Degree {
        Degree::from_ratio(4.0 * self.k, self.sigma1)
    }

    /// `d2 = 4l/σ2²`.
    pub fn degree2(&self) -> Degree {
        Degree::from_ratio(4.0 * self.l, self.sigma2)
    }
}

/// Uniform grid `0 = t_0 < … < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    t_max: f64,
    n_steps: usize,
}

impl GridSpec {
    pub fn new(t_max: f64, n_steps: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(CirError::InvalidParameter {
                name: "t_max",
                reason: format!("must be finite and positive, got {t_max}"),
            });
        }
        if n_steps == 0 {
            return Err(CirError::InvalidParameter {
                name: "n_steps",
                reason: "must be at least 1".into(),
            });
        }
        Ok(Self { t_max, n_steps })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn delta(&self) -> f64 {
        self.t_max / self.n_steps as f64
    }

    /// Time of node `i`; the last node is exactly `t_max`.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t_max
        } else {
            i as f64 * self.delta()
        }
    }

    /// Same horizon with `2^levels` times as many steps.
    pub fn refined(&self, levels: u32) -> Self {
        Self {
            t_max: self.t_max,
            n_steps: self.n_steps << levels,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SchemeKind {
    SemiDiscreteSquared,
    SplitExact,
    ExactSim,
    TruncatedEuler,
    TwoFactorSplitExact,
    TwoFactorSquared,
    TwoFactorCrossDiffusion,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 7] = [
        SchemeKind::SemiDiscreteSquared,
        SchemeKind::SplitExact,
        SchemeKind::ExactSim,
        SchemeKind::TruncatedEuler,
        SchemeKind::TwoFactorSplitExact,
        SchemeKind::TwoFactorSquared,
        SchemeKind::TwoFactorCrossDiffusion,
    ];

    pub fn is_two_factor(self) -> bool {
        matches!(
            self,
            SchemeKind::TwoFactorSplitExact
                | SchemeKind::TwoFactorSquared
                | SchemeKind::TwoFactorCrossDiffusion
        )
    }

    /// Schemes that consume Brownian increments (as opposed to blocks of exact-step Gaussians).
    pub fn is_brownian_driven(self) -> bool {
        matches!(
            self,
            SchemeKind::SemiDiscreteSquared
                | SchemeKind::TruncatedEuler
                | SchemeKind::TwoFactorSquared
                | SchemeKind::TwoFactorCrossDiffusion
        )
    }

    /// Schemes whose iterates are nonnegative by construction.
    pub fn preserves_positivity(self) -> bool {
        !matches!(
            self,
            SchemeKind::TruncatedEuler | SchemeKind::TwoFactorCrossDiffusion
        )
    }

    /// Short name used on the command line.
    pub fn cli_name(self) -> &'static str {
        match self {
            SchemeKind::SemiDiscreteSquared => "sd",
            SchemeKind::SplitExact => "split",
            SchemeKind::ExactSim => "exact",
            SchemeKind::TruncatedEuler => "euler",
            SchemeKind::TwoFactorSplitExact => "2f-split",
            SchemeKind::TwoFactorSquared => "2f-sq",
            SchemeKind::TwoFactorCrossDiffusion => "2f-cross",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for SchemeKind {
    type Err = CirError;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.cli_name() == s)
            .ok_or_else(|| CirError::Usage(format!("unknown scheme `{s}`")))
    }
}

/// A scheme plus its knobs. `a` is present exactly for [`SchemeKind::SemiDiscreteSquared`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    kind: SchemeKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    a: Option<f64>,
}

impl SchemeSpec {
    pub fn new(kind: SchemeKind, a: Option<f64>) -> Result<Self> {
        match (kind, a) {
            (SchemeKind::SemiDiscreteSquared, Some(a)) => {
                if !(0.0..=1.0).contains(&a) {
                    return Err(CirError::InvalidParameter {
                        name: "a",
                        reason: format!("must lie in [0, 1], got {a}"),
                    });
                }
                Ok(Self { kind, a: Some(a) })
            }
            (SchemeKind::SemiDiscreteSquared, None) => Err(CirError::Usage(
                "the semi-discrete squared scheme needs a weight `a`".into(),
            )),
            (_, Some(_)) => Err(CirError::Usage(format!(
                "scheme `{kind}` takes no weight `a`"
            ))),
            (_, None) => Ok(Self { kind, a: None }),
        }
    }

    pub fn semi_discrete(a: f64) -> Result<Self> {
        Self::new(SchemeKind::SemiDiscreteSquared, Some(a))
    }

    /// Spec for a scheme without knobs. Panics for the semi-discrete scheme.
    pub fn of(kind: SchemeKind) -> Self {
        Self::new(kind, None).expect("scheme takes no weight")
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn a(&self) -> Option<f64> {
        self.a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Gate {
    /// `aΔ ≥ (σ² − 4kl)/(4k²l)`, needed when `σ² > 4kl`.
    ImplicitWeight,
    /// `Δ(1 − a) ≤ 1/k`.
    FrozenDrift,
    /// `4kl/σ² ≥ 1`.
    Degree,
    /// `Δ < 1/k1` for the frozen part of the drift split.
    SplitStep,
    /// `4k/σ1² ≥ 1`.
    Degree1,
    /// `4l/σ2² ≥ 1`.
    Degree2,
    /// `Δ < 1/k1` in the first coordinate.
    SplitStep1,
    /// `Δ < 1/l1` in the second coordinate.
    SplitStep2,
    /// `Δ ≤ 1/max(λ11, λ21)`.
    ReversionStep,
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Gate::ImplicitWeight => "gate i: a·Δ ≥ (σ²−4kl)/(4k²l)",
            Gate::FrozenDrift => "gate ii: Δ(1−a) ≤ 1/k",
            Gate::Degree => "degree: 4kl/σ² ≥ 1",
            Gate::SplitStep => "split step: Δ < 1/k1",
            Gate::Degree1 => "degree 1: 4k/σ1² ≥ 1",
            Gate::Degree2 => "degree 2: 4l/σ2² ≥ 1",
            Gate::SplitStep1 => "split step 1: Δ < 1/k1",
            Gate::SplitStep2 => "split step 2: Δ < 1/l1",
            Gate::ReversionStep => "reversion step: Δ ≤ 1/max(λ11, λ21)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    AtLeast,
    AtMost,
    Below,
}

impl Relation {
    fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Relation::AtLeast => lhs >= rhs,
            Relation::AtMost => lhs <= rhs,
            Relation::Below => lhs < rhs,
        }
    }

    /// Symbol of the relation that actually holds when the gate fails.
    fn negated_symbol(self) -> &'static str {
        match self {
            Relation::AtLeast => "<",
            Relation::AtMost => ">",
            Relation::Below => "≥",
        }
    }
}

/// A failed gate with both sides of its inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub gate: Gate,
    pub lhs: f64,
    pub relation: Relation,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} violated: {} {} {}",
            self.gate,
            self.lhs,
            self.relation.negated_symbol(),
            self.rhs
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ValidityVerdict {
    Valid,
    Invalid(Vec<Violation>),
}

impl ValidityVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ValidityVerdict::Valid)
    }

    pub fn violations(&self) -> &[Violation] {
        match self {
            ValidityVerdict::Valid => &[],
            ValidityVerdict::Invalid(v) => v,
        }
    }

    /// Turns an invalid verdict into a [`CirError::Domain`].
    pub fn into_result(self) -> Result<()> {
        match self {
            ValidityVerdict::Valid => Ok(()),
            ValidityVerdict::Invalid(v) => Err(CirError::Domain(
                v.iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            )),
        }
    }
}

impl fmt::Display for ValidityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidityVerdict::Valid => f.write_str("valid"),
            ValidityVerdict::Invalid(v) => {
                f.write_str("invalid")?;
                for violation in v {
                    write!(f, "\n  {violation}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Default)]
struct GateCheck(Vec<Violation>);

impl GateCheck {
    fn require(&mut self, gate: Gate, lhs: f64, relation: Relation, rhs: f64) {
        if !relation.holds(lhs, rhs) {
            self.0.push(Violation {
                gate,
                lhs,
                relation,
                rhs,
            });
        }
    }

    fn finish(self) -> ValidityVerdict {
        if self.0.is_empty() {
            ValidityVerdict::Valid
        } else {
            ValidityVerdict::Invalid(self.0)
        }
    }
}

/// Split of a drift rate `rate = frozen + exact` such that `4·exact·scale/σ² = ⌊4·rate·scale/σ²⌋`.
///
/// The `exact` part is simulated exactly; the `frozen` part is applied as an explicit increment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftSplit {
    /// Snapped degree `4·rate·scale/σ²`.
    pub degree: f64,
    /// Frozen part (`k1`).
    pub frozen: f64,
    /// Exactly simulated part (`k2`).
    pub exact: f64,
}

impl DriftSplit {
    /// Needs `sigma > 0`.
    fn new(rate: f64, scale: f64, sigma: f64) -> Self {
        let degree = snap_degree(4.0 * rate * scale / (sigma * sigma));
        let whole = degree.floor();
        if whole < 1.0 {
            return Self {
                degree,
                frozen: rate,
                exact: 0.0,
            };
        }
        if whole == degree {
            return Self {
                degree,
                frozen: 0.0,
                exact: rate,
            };
        }
        let exact_raw = whole * sigma * sigma / (4.0 * scale);
        // Re-deriving `exact` from `frozen` makes `frozen + exact == rate` hold exactly.
        let frozen = (rate - exact_raw).max(0.0);
        let exact = rate - frozen;
        Self {
            degree,
            frozen,
            exact,
        }
    }

    /// Split of `k` for the one-factor model (`scale = l`).
    pub fn one_factor(p: &CirParams) -> Result<Self> {
        if p.sigma() == 0.0 {
            return Err(CirError::Domain(
                "splitting undefined for deterministic diffusion (sigma = 0)".into(),
            ));
        }
        Ok(Self::new(p.k(), p.l(), p.sigma()))
    }

    /// Splits of `k` (with σ1) and `l` (with σ2) for the two-factor model.
    pub fn two_factor(p: &TwoFactorParams) -> Result<(Self, Self)> {
        if p.sigma1 == 0.0 || p.sigma2 == 0.0 {
            return Err(CirError::Domain(
                "splitting undefined for deterministic diffusion (sigma1 or sigma2 = 0)".into(),
            ));
        }
        Ok((Self::new(p.k, 1.0, p.sigma1), Self::new(p.l, 1.0, p.sigma2)))
    }

    /// Number of Gaussians one exact sub-step consumes.
    pub fn gaussians_per_step(&self) -> usize {
        self.degree.floor() as usize
    }
}

/// Gates of the semi-discrete squared scheme with weight `a`.
pub fn validate_semidiscrete(p: &CirParams, g: &GridSpec, a: f64) -> ValidityVerdict {
    let (k, l, sigma) = (p.k(), p.l(), p.sigma());
    let delta = g.delta();
    let mut check = GateCheck::default();
    let excess = sigma * sigma - 4.0 * k * l;
    if excess > 0.0 {
        // k = 0 or l = 0 makes the right side +inf: no step size helps.
        check.require(
            Gate::ImplicitWeight,
            a * delta,
            Relation::AtLeast,
            excess / (4.0 * k * k * l),
        );
    }
    if k > 0.0 && a < 1.0 {
        check.require(
            Gate::FrozenDrift,
            delta * (1.0 - a),
            Relation::AtMost,
            1.0 / k,
        );
    }
    check.finish()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitVerdict {
    pub split: DriftSplit,
    pub verdict: ValidityVerdict,
}

/// Gates of the one-factor split-exact scheme.
pub fn validate_split(p: &CirParams, g: &GridSpec) -> Result<SplitVerdict> {
    let split = DriftSplit::one_factor(p)?;
    let mut check = GateCheck::default();
    check.require(Gate::Degree, split.degree, Relation::AtLeast, 1.0);
    check.require(
        Gate::SplitStep,
        g.delta(),
        Relation::Below,
        1.0 / split.frozen,
    );
    Ok(SplitVerdict {
        split,
        verdict: check.finish(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoFactorVerdict {
    /// Drift splits for the split-exact scheme, `None` for the others.
    pub splits: Option<(DriftSplit, DriftSplit)>,
    pub verdict: ValidityVerdict,
}

/// Gates of the two-factor schemes. The cross-diffusion scheme has none.
pub fn validate_two_factor(
    p: &TwoFactorParams,
    g: &GridSpec,
    kind: SchemeKind,
) -> Result<TwoFactorVerdict> {
    let delta = g.delta();
    let mut check = GateCheck::default();
    match kind {
        SchemeKind::TwoFactorSplitExact => {
            let (s1, s2) = DriftSplit::two_factor(p)?;
            check.require(Gate::Degree1, s1.degree, Relation::AtLeast, 1.0);
            check.require(Gate::Degree2, s2.degree, Relation::AtLeast, 1.0);
            check.require(Gate::SplitStep1, delta, Relation::Below, 1.0 / s1.frozen);
            check.require(Gate::SplitStep2, delta, Relation::Below, 1.0 / s2.frozen);
            Ok(TwoFactorVerdict {
                splits: Some((s1, s2)),
                verdict: check.finish(),
            })
        }
        SchemeKind::TwoFactorSquared => {
            check.require(Gate::Degree1, p.degree1().value(), Relation::AtLeast, 1.0);
            check.require(Gate::Degree2, p.degree2().value(), Relation::AtLeast, 1.0);
            let reversion = p.lambda11.max(p.lambda21);
            check.require(
                Gate::ReversionStep,
                delta,
                Relation::AtMost,
                1.0 / reversion,
            );
            Ok(TwoFactorVerdict {
                splits: None,
                verdict: check.finish(),
            })
        }
        SchemeKind::TwoFactorCrossDiffusion => Ok(TwoFactorVerdict {
            splits: None,
            verdict: ValidityVerdict::Valid,
        }),
        other => Err(CirError::Usage(format!(
            "`{other}` is not a two-factor scheme"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cir(k: f64, l: f64, sigma: f64) -> CirParams {
        CirParams::new(k, l, sigma, 1.0).unwrap()
    }

    fn grid(delta: f64) -> GridSpec {
        GridSpec::new(delta, 1).unwrap()
    }

    fn two(k: f64, l: f64, s1: f64, s2: f64, l11: f64, l21: f64) -> TwoFactorParams {
        TwoFactorParams::new(TwoFactorInput {
            k,
            l,
            lambda11: l11,
            lambda12: 1.0,
            lambda21: l21,
            lambda22: 1.0,
            sigma1: s1,
            sigma2: s2,
            x10: 1.0,
            x20: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn semidiscrete_gate_examples() {
        assert!(validate_semidiscrete(&cir(2.0, 1.0, 3.0), &grid(0.1), 1.0).is_valid());

        let verdict = validate_semidiscrete(&cir(2.0, 1.0, 3.0), &grid(0.1), 0.0);
        let v = verdict.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].gate, Gate::ImplicitWeight);
        assert_eq!(v[0].lhs, 0.0);
        assert_eq!(v[0].rhs, 0.0625);

        assert!(validate_semidiscrete(&cir(2.0, 1.0, 1.0), &grid(0.4), 0.0).is_valid());
    }

    #[test]
    fn frozen_drift_gate_fails_for_large_steps() {
        let verdict = validate_semidiscrete(&cir(2.0, 1.0, 1.0), &grid(0.6), 0.0);
        assert_eq!(verdict.violations()[0].gate, Gate::FrozenDrift);
        // a = 1 makes the gate vacuous.
        assert!(validate_semidiscrete(&cir(2.0, 1.0, 1.0), &grid(10.0), 1.0).is_valid());
    }

    #[test]
    fn zero_level_with_noise_is_never_valid() {
        let verdict = validate_semidiscrete(&cir(2.0, 0.0, 1.0), &grid(0.1), 1.0);
        assert_eq!(verdict.violations()[0].gate, Gate::ImplicitWeight);
        assert!(verdict.violations()[0].rhs.is_infinite());
    }

    #[test]
    fn split_gate_examples() {
        let sv = validate_split(&cir(2.0, 1.0, 1.1), &grid(0.1)).unwrap();
        assert!(sv.verdict.is_valid());
        assert!((sv.split.degree - 8.0 / 1.21).abs() < 1e-12);
        assert!((sv.split.exact - 1.815).abs() < 1e-12);
        assert!((sv.split.frozen - 0.185).abs() < 1e-12);
        assert!(validate_split(&cir(2.0, 1.0, 1.1), &grid(5.4))
            .unwrap()
            .verdict
            .is_valid());
        assert!(!validate_split(&cir(2.0, 1.0, 1.1), &grid(5.41))
            .unwrap()
            .verdict
            .is_valid());

        let sv = validate_split(&cir(2.0, 1.0, 1.0), &grid(1e6)).unwrap();
        assert!(sv.verdict.is_valid());
        assert_eq!(sv.split.degree, 8.0);
        assert_eq!(sv.split.exact, 2.0);
        assert_eq!(sv.split.frozen, 0.0);

        let sv = validate_split(&cir(1.0, 0.1, 2.0), &grid(0.1)).unwrap();
        assert!((sv.split.degree - 0.1).abs() < 1e-15);
        assert_eq!(sv.verdict.violations()[0].gate, Gate::Degree);
    }

    #[test]
    fn split_rejects_zero_sigma() {
        let err = validate_split(&cir(2.0, 1.0, 0.0), &grid(0.1)).unwrap_err();
        assert!(matches!(err, CirError::Domain(_)));
    }

    #[test]
    fn near_integer_degree_is_snapped() {
        // 4·0.3·(10/3)/2 computes to 1.9999999999999998 without snapping.
        let p = cir(0.3, 10.0 / 3.0, 2.0_f64.sqrt());
        assert_eq!(p.degree(), Degree::Finite(2.0));
        let split = DriftSplit::one_factor(&p).unwrap();
        assert_eq!(split.frozen, 0.0);
        assert_eq!(split.exact, 0.3);
    }

    #[test]
    fn two_factor_gate_examples() {
        let p = two(2.0, 1.0, 1.0, 1.0, 2.0, 1.0);
        let v = validate_two_factor(&p, &grid(0.4), SchemeKind::TwoFactorSquared).unwrap();
        assert!(v.verdict.is_valid());
        assert_eq!(p.degree1(), Degree::Finite(8.0));
        assert_eq!(p.degree2(), Degree::Finite(4.0));

        let v = validate_two_factor(&p, &grid(0.6), SchemeKind::TwoFactorSquared).unwrap();
        let viol = v.verdict.violations();
        assert_eq!(viol.len(), 1);
        assert_eq!(viol[0].gate, Gate::ReversionStep);
        assert_eq!((viol[0].lhs, viol[0].rhs), (0.6, 0.5));

        let p = two(2.0, 1.0, 1.1, 1.0, 1.0, 1.0);
        let v = validate_two_factor(&p, &grid(5.4), SchemeKind::TwoFactorSplitExact).unwrap();
        assert!(v.verdict.is_valid());
        let (s1, s2) = v.splits.unwrap();
        assert!((s1.degree - 6.6115702479).abs() < 1e-9);
        assert!((s1.exact - 1.815).abs() < 1e-12);
        assert!((s1.frozen - 0.185).abs() < 1e-12);
        assert_eq!((s2.exact, s2.frozen), (1.0, 0.0));
        let v = validate_two_factor(&p, &grid(5.41), SchemeKind::TwoFactorSplitExact).unwrap();
        assert_eq!(v.verdict.violations()[0].gate, Gate::SplitStep1);
    }

    #[test]
    fn two_factor_rejects_one_factor_kinds() {
        let p = two(2.0, 1.0, 1.0, 1.0, 1.0, 1.0);
        let err = validate_two_factor(&p, &grid(0.1), SchemeKind::ExactSim).unwrap_err();
        assert!(matches!(err, CirError::Usage(_)));
        let v = validate_two_factor(&p, &grid(100.0), SchemeKind::TwoFactorCrossDiffusion);
        assert!(v.unwrap().verdict.is_valid());
    }

    #[test]
    fn structural_rejections() {
        assert!(CirParams::new(2.0, 1.0, -1.0, 1.0).is_err());
        assert!(CirParams::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
        assert!(GridSpec::new(1.0, 0).is_err());
        assert!(GridSpec::new(0.0, 1).is_err());
        assert!(SchemeSpec::semi_discrete(1.5).is_err());
        assert!(SchemeSpec::new(SchemeKind::ExactSim, Some(0.5)).is_err());
        assert!(SchemeSpec::new(SchemeKind::SemiDiscreteSquared, None).is_err());
    }

    #[test]
    fn zero_sigma_degree_is_infinite() {
        assert_eq!(cir(2.0, 1.0, 0.0).degree(), Degree::Infinite);
    }

    #[test]
    fn grid_last_node_is_horizon() {
        let g = GridSpec::new(1.0, 3).unwrap();
        assert_eq!(g.node(3), 1.0);
        assert_eq!(g.refined(2).n_steps(), 12);
    }

    #[test]
    fn scheme_names_round_trip() {
        for kind in SchemeKind::ALL {
            assert_eq!(kind.cli_name().parse::<SchemeKind>().unwrap(), kind);
        }
        assert!("bogus".parse::<SchemeKind>().is_err());
    }
}
