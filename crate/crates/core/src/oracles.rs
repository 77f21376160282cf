//! Reference values derived independently of the scheme code: closed-form CIR
//! moments, the expected-value recursion of the semi-discrete scheme, and an
//! RK4 solution of the two-factor mean system.

use serde::Serialize;

use crate::params::{CirParams, GridSpec, TwoFactorParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentPair {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of the CIR process at time `t` started from `x0`.
///
/// ```text
/// mean = x0·e^{−kt} + l(1 − e^{−kt})
/// var  = x0(σ²/k)(e^{−kt} − e^{−2kt}) + l(σ²/(2k))(1 − e^{−kt})²
/// ```
///
/// With `k = 0` the limits are `mean = x0`, `var = x0·σ²·t`.
pub fn cir_moments(p: &CirParams, t: f64) -> MomentPair {
    let (k, l, s2, x0) = (p.k(), p.l(), p.sigma() * p.sigma(), p.x0());
    if k == 0.0 {
        return MomentPair {
            mean: x0,
            variance: x0 * s2 * t,
        };
    }
    let decay = (-k * t).exp();
    // 1 − e^{−kt} without cancellation for small kt.
    let growth = -(-k * t).exp_m1();
    MomentPair {
        mean: x0 * decay + l * growth,
        variance: x0 * (s2 / k) * decay * growth + l * (s2 / (2.0 * k)) * growth * growth,
    }
}

/// Expected node values of the semi-discrete squared scheme, `E_0 = x0`:
///
/// ```text
/// c       = 1 + k·a·Δ
/// E_{i+1} = σ²Δ/(4c²) + E_i(1 − kΔ/c) + (Δ/c)(kl − σ²/(4c))
/// ```
///
/// The first term is `E[(σ/(2c)·dW)²]`; the cross term has zero mean because
/// `dW` is independent of the radicand.
pub fn sd_mean_recursion(p: &CirParams, g: &GridSpec, a: f64) -> Vec<f64> {
    let (k, l, sigma) = (p.k(), p.l(), p.sigma());
    let delta = g.delta();
    let c = 1.0 + k * a * delta;
    let mut out = Vec::with_capacity(g.n_steps() + 1);
    let mut e = p.x0();
    out.push(e);
    for _ in 0..g.n_steps() {
        e = sigma * sigma * delta / (4.0 * c * c)
            + e * (1.0 - k * delta / c)
            + delta / c * (k * l - sigma * sigma / (4.0 * c));
        out.push(e);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanNode {
    pub t: f64,
    pub m1: f64,
    pub m2: f64,
}

/// Classical RK4 on the linear mean system of the two-factor model,
///
/// ```text
/// m1' = k − λ11·m1 + λ12·m2
/// m2' = l − λ21·m2 + λ22·m1
/// ```
///
/// with `substeps` uniform steps on `[0, t_max]`. Returns `substeps + 1` nodes.
pub fn two_factor_mean_ode(p: &TwoFactorParams, t_max: f64, substeps: usize) -> Vec<MeanNode> {
    let rhs = |m1: f64, m2: f64| {
        (
            p.k() - p.lambda11() * m1 + p.lambda12() * m2,
            p.l() - p.lambda21() * m2 + p.lambda22() * m1,
        )
    };
    let substeps = substeps.max(1);
    let h = t_max / substeps as f64;
    let (mut m1, mut m2) = (p.x10(), p.x20());
    let mut out = Vec::with_capacity(substeps + 1);
    out.push(MeanNode { t: 0.0, m1, m2 });
    for i in 0..substeps {
        let (a1, a2) = rhs(m1, m2);
        let (b1, b2) = rhs(m1 + 0.5 * h * a1, m2 + 0.5 * h * a2);
        let (c1, c2) = rhs(m1 + 0.5 * h * b1, m2 + 0.5 * h * b2);
        let (d1, d2) = rhs(m1 + h * c1, m2 + h * c2);
        m1 += h / 6.0 * (a1 + 2.0 * b1 + 2.0 * c1 + d1);
        m2 += h / 6.0 * (a2 + 2.0 * b2 + 2.0 * c2 + d2);
        let t = if i + 1 == substeps {
            t_max
        } else {
            (i + 1) as f64 * h
        };
        out.push(MeanNode { t, m1, m2 });
    }
    out
}

/// Mean pair at `t`, doubling the RK4 substeps until halving the step changes
/// both components by less than `1e-10` relative.
pub fn two_factor_mean_at(p: &TwoFactorParams, t: f64) -> (f64, f64) {
    let terminal = |n: usize| {
        let last = *two_factor_mean_ode(p, t, n).last().unwrap();
        (last.m1, last.m2)
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300);
    let mut n = 64;
    let mut previous = terminal(n);
    loop {
        n *= 2;
        let current = terminal(n);
        if (close(previous.0, current.0) && close(previous.1, current.1)) || n >= 1 << 24 {
            return current;
        }
        previous = current;
    }
}
