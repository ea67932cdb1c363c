//! Infinite-depth limits.
//!
//! Under uniform scaling the layer index becomes time `t = l/L` and the recursions
//! converge to
//!
//! ```text
//! q̇_t = σ_b² + (σ_w²/2)·f̂(c_t)·√(q_t(x,x)·q_t(x′,x′))
//! θ̇_t = q̇_t + (σ_w²/2)·(1 + f′(c_t))·θ_t
//! ```
//!
//! with diagonal solution `q_t = e^{σ_w²t/2}·q_0 + (2σ_b²/σ_w²)(e^{σ_w²t/2} − 1)`.
//! Under decreasing scaling the kernel converges to a limit `Q_∞` as `L → ∞`.

use crate::dual::{relu_fhat, relu_fprime};
use crate::error::{Error, Result};
use crate::kernels::{geo_mean, nngp_step, q0, KernelHyper, PairState};
use crate::scaling::{decreasing_lambda, decreasing_tail_sq, decreasing_total_sq};

/// Continuum kernel values at time `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuumState {
    pub t: f64,
    pub q_ab: f64,
    pub q_aa: f64,
    pub q_bb: f64,
    pub theta_ab: Option<f64>,
}

impl ContinuumState {
    pub fn correlation(&self) -> f64 {
        (self.q_ab / geo_mean(self.q_aa, self.q_bb)).clamp(-1.0, 1.0)
    }
}

fn correlation(y: &[f64]) -> Result<f64> {
    let d = geo_mean(y[1], y[2]);
    if !(d > 0.0) {
        return Err(Error::InvalidState("zero diagonal in continuum state".into()));
    }
    let c = y[0] / d;
    if c.abs() > 1.0 + 1e-9 {
        return Err(Error::InvalidState(format!("|c| = {} exceeds 1", c.abs())));
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// `(q̇_ab, q̇_aa, q̇_bb)`.
fn q_rate(y: &[f64], h: &KernelHyper) -> Result<[f64; 3]> {
    let half = h.sigma_w_sq / 2.0;
    let c = correlation(y)?;
    Ok([
        h.sigma_b_sq + half * relu_fhat(c)? * geo_mean(y[1], y[2]),
        h.sigma_b_sq + half * y[1],
        h.sigma_b_sq + half * y[2],
    ])
}

/// Right-hand side on `[q_ab, q_aa, q_bb, θ]`.
fn rhs_ntk(y: &[f64; 4], h: &KernelHyper) -> Result<[f64; 4]> {
    let q = q_rate(y, h)?;
    let c = correlation(y)?;
    let theta = q[0] + h.sigma_w_sq / 2.0 * (1.0 + relu_fprime(c)?) * y[3];
    Ok([q[0], q[1], q[2], theta])
}

/// Right-hand side on `[q_ab, q_aa, q_bb, G, I]` for the explicit NTK solution
/// `θ_t = e^{G_t}(q_0 + I_t)`, `Ġ = (σ_w²/2)(1 + f′(c))`, `İ = q̇_ab·e^{−G}`.
fn rhs_explicit(y: &[f64; 5], h: &KernelHyper) -> Result<[f64; 5]> {
    let q = q_rate(y, h)?;
    let c = correlation(y)?;
    Ok([q[0], q[1], q[2], h.sigma_w_sq / 2.0 * (1.0 + relu_fprime(c)?), q[0] * (-y[3]).exp()])
}

fn rk4_step<const N: usize>(
    y: &[f64; N],
    dt: f64,
    f: &impl Fn(&[f64; N]) -> Result<[f64; N]>,
) -> Result<[f64; N]> {
    let shifted = |base: &[f64; N], k: &[f64; N], s: f64| -> [f64; N] {
        let mut out = *base;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(y)?;
    let k2 = f(&shifted(y, &k1, dt / 2.0))?;
    let k3 = f(&shifted(y, &k2, dt / 2.0))?;
    let k4 = f(&shifted(y, &k3, dt))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

fn check_time(t_end: f64, steps: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&t_end) {
        return Err(Error::Contract(format!("t_end = {t_end} outside [0, 1]")));
    }
    if steps == 0 {
        return Err(Error::Contract("steps must be at least 1".into()));
    }
    Ok(())
}

/// RK4 trajectory from a layer-0 state, sampled at `t_i = i·t_end/steps`.
///
/// `θ` is integrated alongside `q` and reported when `with_ntk` is set.
pub fn ode_trajectory(
    s0: &PairState,
    h: &KernelHyper,
    t_end: f64,
    steps: usize,
    with_ntk: bool,
) -> Result<Vec<ContinuumState>> {
    check_time(t_end, steps)?;
    let dt = t_end / steps as f64;
    let mut y = [s0.q_ab, s0.q_aa, s0.q_bb, s0.theta_ab.unwrap_or(s0.q_ab)];
    let rhs = |y: &[f64; 4]| rhs_ntk(y, h);
    let state = |i: usize, y: &[f64; 4]| ContinuumState {
        t: i as f64 * dt,
        q_ab: y[0],
        q_aa: y[1],
        q_bb: y[2],
        theta_ab: with_ntk.then_some(y[3]),
    };
    let mut out = Vec::with_capacity(steps + 1);
    out.push(state(0, &y));
    for i in 1..=steps {
        y = rk4_step(&y, dt, &rhs)?;
        out.push(state(i, &y));
    }
    Ok(out)
}

/// Covariance ODE solution at `t_end` by fixed-step RK4.
pub fn ode_uniform(x: &[f64], xp: &[f64], h: &KernelHyper, t_end: f64, steps: usize) -> Result<ContinuumState> {
    let traj = ode_trajectory(&q0(x, xp, h)?, h, t_end, steps, false)?;
    Ok(*traj.last().expect("non-empty"))
}

/// Covariance and NTK ODE solution at `t_end` by fixed-step RK4.
pub fn ntk_ode(x: &[f64], xp: &[f64], h: &KernelHyper, t_end: f64, steps: usize) -> Result<ContinuumState> {
    let traj = ode_trajectory(&q0(x, xp, h)?, h, t_end, steps, true)?;
    Ok(*traj.last().expect("non-empty"))
}

/// `θ_t = e^{G_t}(q_0 + ∫_0^t q̇_s e^{−G_s} ds)` with `G_t = (σ_w²/2)∫_0^t (1 + f′(c_s)) ds`,
/// the integrals accumulated by RK4 quadrature along the covariance trajectory.
pub fn ntk_explicit(x: &[f64], xp: &[f64], h: &KernelHyper, t_end: f64, steps: usize) -> Result<f64> {
    check_time(t_end, steps)?;
    let s0 = q0(x, xp, h)?;
    let dt = t_end / steps as f64;
    let mut y = [s0.q_ab, s0.q_aa, s0.q_bb, 0.0, 0.0];
    let rhs = |y: &[f64; 5]| rhs_explicit(y, h);
    for _ in 0..steps {
        y = rk4_step(&y, dt, &rhs)?;
    }
    Ok(y[3].exp() * (s0.q_ab + y[4]))
}

/// `q_t(x,x) = e^{σ_w²t/2}·q_0 + (2σ_b²/σ_w²)(e^{σ_w²t/2} − 1)`.
pub fn continuum_diag(q0_diag: f64, h: &KernelHyper, t: f64) -> f64 {
    let g = (h.sigma_w_sq * t / 2.0).exp();
    g * q0_diag + 2.0 * h.sigma_b_sq / h.sigma_w_sq * (g - 1.0)
}

/// `sup_l |Q_{l|L}(x,x′) − q_{l/L}(x,x′)|` for a uniform-scaled network of depth `L`.
///
/// `reference` is an ODE trajectory on `[0, 1]` whose step count is a multiple of `L`.
pub fn discrete_ode_gap(s0: &PairState, h: &KernelHyper, depth: usize, reference: &[ContinuumState]) -> Result<f64> {
    let ref_steps = reference.len() - 1;
    if depth == 0 || !ref_steps.is_multiple_of(depth) {
        return Err(Error::Contract(format!("reference steps {ref_steps} not a multiple of depth {depth}")));
    }
    let stride = ref_steps / depth;
    let lam = 1.0 / (depth as f64).sqrt();
    let mut s = PairState { theta_ab: None, ..*s0 };
    let mut gap = (s.q_ab - reference[0].q_ab).abs();
    for l in 1..=depth {
        s = nngp_step(&s, lam, h)?;
        gap = gap.max((s.q_ab - reference[l * stride].q_ab).abs());
    }
    Ok(gap)
}

/// Limit kernel of the decreasing-scaled network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QInfinity {
    /// `Q_∞(x,x′)`.
    pub q_ab: f64,
    pub q_aa: f64,
    pub q_bb: f64,
    /// The recursion truncated at `depth_used`.
    pub truncated: PairState,
    pub depth_used: usize,
    /// `Σ_{k>depth_used} λ_k²`.
    pub tail_sum: f64,
}

impl QInfinity {
    pub fn correlation(&self) -> f64 {
        (self.q_ab / geo_mean(self.q_aa, self.q_bb)).clamp(-1.0, 1.0)
    }
}

/// `κ = σ_b² + σ_w²·D_∞`, where `D_∞` bounds every diagonal of the decreasing network.
fn diag_growth_constant(s0: &PairState, h: &KernelHyper) -> f64 {
    let shift = 2.0 * h.sigma_b_sq / h.sigma_w_sq;
    let d_inf = (s0.q_aa.max(s0.q_bb) + shift) * (h.sigma_w_sq / 2.0 * decreasing_total_sq()).exp() - shift;
    h.sigma_b_sq + h.sigma_w_sq * d_inf
}

/// `Q_∞` for the decreasing scheme.
///
/// Beyond depth `L` the remaining blocks move the kernel by `Σ_{k>L}λ_k² · O(1)`, a
/// tail that decays only like `1/ln L`. The recursion is therefore run until the
/// per-block departure from the covariance ODE, `κ·σ_w²·λ_{L+1}²·Σ_{k>L}λ_k²`, is
/// below `tol`; the rest of the depth is then integrated exactly as that ODE over
/// the time `Σ_{k>L}λ_k²`.
pub fn q_infinity_decreasing(x: &[f64], xp: &[f64], h: &KernelHyper, tol: f64) -> Result<QInfinity> {
    if !(tol > 0.0) {
        return Err(Error::Contract(format!("tolerance must be positive, got {tol}")));
    }
    let s0 = PairState { theta_ab: None, ..q0(x, xp, h)? };
    let kappa = diag_growth_constant(&s0, h) * h.sigma_w_sq;
    let mut s = s0;
    let mut l = 0usize;
    let tail = loop {
        if l.is_multiple_of(256) {
            let lam = decreasing_lambda(l + 1);
            let tail = decreasing_tail_sq(l);
            if kappa * lam * lam * tail < tol {
                break tail;
            }
        }
        l += 1;
        s = nngp_step(&s, decreasing_lambda(l), h)?;
    };
    let steps = 2000;
    let dt = tail / steps as f64;
    let rhs = |y: &[f64; 3]| q_rate(y, h);
    let mut y = [s.q_ab, s.q_aa, s.q_bb];
    for _ in 0..steps {
        y = rk4_step(&y, dt, &rhs)?;
    }
    Ok(QInfinity { q_ab: y[0], q_aa: y[1], q_bb: y[2], truncated: s, depth_used: l, tail_sum: tail })
}
