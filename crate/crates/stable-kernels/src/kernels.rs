//! Depth recursions for the NNGP covariance `Q_l`, correlation `C_l` and NTK `Θ_l`.
//!
//! With `α_l = λ_l²σ_w²/2` and `D_l = √(Q_l(x,x)·Q_l(x′,x′))`,
//!
//! ```text
//! Q_0     = σ_b² + σ_w²·(x·x′)/d,          Θ_0 = Q_0
//! Q_{l+1} = Q_l + λ²[σ_b² + (σ_w²/2)·f̂(C_l)·D_l]
//! Θ_{l+1} = Θ_l + λ²[σ_b² + (σ_w²/2)·f̂(C_l)·D_l + (σ_w²/2)·(1 + f′(C_l))·Θ_l]
//! ```
//!
//! Writing the covariance increment through `f̂(C)·D` removes the `f(C)/C` quotient,
//! which is singular at `C = 0`.

use crate::dual::{relu_fhat, relu_fhat_prime, relu_fprime};
use crate::error::{Error, Result};
use crate::scaling::ScalingScheme;
use std::f64::consts::PI;

/// Relative Cauchy–Schwarz slack tolerated before a state is rejected.
const CS_TOL: f64 = 1e-9;

/// Prior variances and input dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelHyper {
    pub sigma_w_sq: f64,
    pub sigma_b_sq: f64,
    pub input_dim: usize,
}

impl KernelHyper {
    pub fn new(sigma_w_sq: f64, sigma_b_sq: f64, input_dim: usize) -> Result<Self> {
        if !(sigma_w_sq > 0.0 && sigma_w_sq.is_finite()) {
            return Err(Error::Contract(format!("σ_w² must be positive, got {sigma_w_sq}")));
        }
        if !(sigma_b_sq >= 0.0 && sigma_b_sq.is_finite()) {
            return Err(Error::Contract(format!("σ_b² must be non-negative, got {sigma_b_sq}")));
        }
        if input_dim == 0 {
            return Err(Error::Contract("input dimension must be positive".into()));
        }
        Ok(Self { sigma_w_sq, sigma_b_sq, input_dim })
    }

    /// `α = λ²σ_w²/2`.
    pub fn alpha(&self, lambda: f64) -> f64 {
        lambda * lambda * self.sigma_w_sq / 2.0
    }

    fn require_zero_bias(&self, op: &str) -> Result<()> {
        if self.sigma_b_sq != 0.0 {
            return Err(Error::Contract(format!("{op} requires σ_b² = 0, got {}", self.sigma_b_sq)));
        }
        Ok(())
    }
}

/// Kernel values for one input pair at one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairState {
    pub q_ab: f64,
    pub q_aa: f64,
    pub q_bb: f64,
    pub theta_ab: Option<f64>,
    pub layer: usize,
}

impl PairState {
    /// `C = Q(x,x′)/√(Q(x,x)Q(x′,x′))`.
    pub fn correlation(&self) -> Result<f64> {
        correlation_of(self.q_ab, self.q_aa, self.q_bb)
    }
}

/// `√(a·b)` without overflow in the product, exact when `a == b`.
pub(crate) fn geo_mean(a: f64, b: f64) -> f64 {
    if a == b {
        a
    } else {
        a.sqrt() * b.sqrt()
    }
}

fn correlation_of(q_ab: f64, q_aa: f64, q_bb: f64) -> Result<f64> {
    let d = geo_mean(q_aa, q_bb);
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidState(format!(
            "correlation undefined for diagonals {q_aa} and {q_bb}"
        )));
    }
    let c = q_ab / d;
    if c.abs() > 1.0 + CS_TOL || c.is_nan() {
        return Err(Error::InvalidState(format!("|C| = {} exceeds 1", c.abs())));
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// Layer-0 kernel from inner products `x·x`, `x·x′`, `x′·x′`.
pub fn q0_from_dots(xx: f64, xy: f64, yy: f64, h: &KernelHyper) -> PairState {
    let d = h.input_dim as f64;
    let q = |dot: f64| h.sigma_b_sq + h.sigma_w_sq * dot / d;
    let q_ab = q(xy);
    PairState { q_ab, q_aa: q(xx), q_bb: q(yy), theta_ab: Some(q_ab), layer: 0 }
}

/// Layer-0 kernel `Q_0 = σ_b² + σ_w²(x·x′)/d`, with `Θ_0 = Q_0`.
pub fn q0(x: &[f64], xp: &[f64], h: &KernelHyper) -> Result<PairState> {
    for v in [x, xp] {
        if v.len() != h.input_dim {
            return Err(Error::DimensionMismatch { expected: h.input_dim, found: v.len() });
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>();
    Ok(q0_from_dots(dot(x, x), dot(x, xp), dot(xp, xp), h))
}

fn finite_or_overflow(s: PairState) -> Result<PairState> {
    let theta_ok = s.theta_ab.is_none_or(f64::is_finite);
    if s.q_ab.is_finite() && s.q_aa.is_finite() && s.q_bb.is_finite() && theta_ok {
        Ok(s)
    } else {
        Err(Error::Overflow { layer: s.layer })
    }
}

/// One NNGP layer; the NTK entry, if any, is dropped.
pub fn nngp_step(s: &PairState, lambda: f64, h: &KernelHyper) -> Result<PairState> {
    let c = s.correlation()?;
    let l2 = lambda * lambda;
    let half = h.sigma_w_sq / 2.0;
    let d = geo_mean(s.q_aa, s.q_bb);
    finite_or_overflow(PairState {
        q_ab: s.q_ab + l2 * (h.sigma_b_sq + half * relu_fhat(c)? * d),
        q_aa: s.q_aa + l2 * (h.sigma_b_sq + half * s.q_aa),
        q_bb: s.q_bb + l2 * (h.sigma_b_sq + half * s.q_bb),
        theta_ab: None,
        layer: s.layer + 1,
    })
}

/// One NNGP and NTK layer. A missing `theta_ab` starts from `Θ = Q`.
pub fn ntk_step(s: &PairState, lambda: f64, h: &KernelHyper) -> Result<PairState> {
    let c = s.correlation()?;
    let theta = s.theta_ab.unwrap_or(s.q_ab);
    let l2 = lambda * lambda;
    let half = h.sigma_w_sq / 2.0;
    let psi = h.sigma_b_sq + half * relu_fhat(c)? * geo_mean(s.q_aa, s.q_bb);
    let next = nngp_step(s, lambda, h)?;
    finite_or_overflow(PairState {
        theta_ab: Some(theta + l2 * (psi + half * (1.0 + relu_fprime(c)?) * theta)),
        ..next
    })
}

fn forward(
    s0: PairState,
    h: &KernelHyper,
    scheme: &ScalingScheme,
    depth: usize,
    step: fn(&PairState, f64, &KernelHyper) -> Result<PairState>,
) -> Result<Vec<PairState>> {
    let lambdas = scheme.lambdas(depth)?;
    let mut out = Vec::with_capacity(depth + 1);
    out.push(s0);
    for &lam in &lambdas {
        let next = step(out.last().expect("non-empty"), lam, h)?;
        out.push(next);
    }
    Ok(out)
}

/// NNGP states for layers `0..=L`.
///
/// Raw covariances grow geometrically for unscaled networks; once they leave the
/// finite range an [`Error::Overflow`] is returned.
pub fn nngp_forward(
    x: &[f64],
    xp: &[f64],
    h: &KernelHyper,
    scheme: &ScalingScheme,
    depth: usize,
) -> Result<Vec<PairState>> {
    let mut s0 = q0(x, xp, h)?;
    s0.theta_ab = None;
    forward(s0, h, scheme, depth, nngp_step)
}

/// NNGP and NTK states for layers `0..=L`.
pub fn ntk_forward(
    x: &[f64],
    xp: &[f64],
    h: &KernelHyper,
    scheme: &ScalingScheme,
    depth: usize,
) -> Result<Vec<PairState>> {
    forward(q0(x, xp, h)?, h, scheme, depth, ntk_step)
}

/// NNGP and NTK states starting from a given layer-0 state.
pub fn ntk_forward_from(s0: PairState, h: &KernelHyper, scheme: &ScalingScheme, depth: usize) -> Result<Vec<PairState>> {
    forward(s0, h, scheme, depth, ntk_step)
}

/// `Q_l(x,x) = −2σ_b²/σ_w² + ∏_{k≤l}(1+α_k)·(Q_0(x,x) + 2σ_b²/σ_w²)`.
pub fn diag_closed_form(q0_diag: f64, h: &KernelHyper, scheme: &ScalingScheme, layer: usize, depth: usize) -> Result<f64> {
    let shift = 2.0 * h.sigma_b_sq / h.sigma_w_sq;
    let mut prod = 1.0;
    for l in 1..=layer {
        prod *= 1.0 + h.alpha(scheme.lambda_at(l, depth)?);
    }
    Ok(prod * (q0_diag + shift) - shift)
}

/// Correlation trajectory `C_0..C_L` for zero bias:
/// `C_l = (C_{l−1} + α_l·f̂(C_{l−1}))/(1 + α_l)`.
pub fn corr_forward(c0: f64, h: &KernelHyper, scheme: &ScalingScheme, depth: usize) -> Result<Vec<f64>> {
    h.require_zero_bias("corr_forward")?;
    relu_fhat(c0)?;
    let mut out = Vec::with_capacity(depth + 1);
    out.push(c0.clamp(-1.0, 1.0));
    for lam in scheme.lambdas(depth)? {
        let a = h.alpha(lam);
        let c = *out.last().expect("non-empty");
        out.push(((c + a * relu_fhat(c)?) / (1.0 + a)).min(1.0));
    }
    Ok(out)
}

/// Correlation of the mixed layer `y_l = √(1−β)·y_{l−1} + √β·(W φ(y_{l−1}) + B)`
/// with `β = α/(1+α)` and weight variance 2.
///
/// Propagates the covariance triple with the arc-cosine expectation
/// `E[φ(u)φ(v)] = √(v_aa v_bb)·(sin θ + (π−θ) cos θ)/(2π)` and returns the correlation
/// at every layer.
pub fn corr_as_modified_nngp(c0: f64, h: &KernelHyper, scheme: &ScalingScheme, depth: usize) -> Result<Vec<f64>> {
    h.require_zero_bias("corr_as_modified_nngp")?;
    if !(c0.abs() <= 1.0 + crate::dual::CLAMP_TOL) {
        return Err(Error::Domain { value: c0 });
    }
    let (mut v_aa, mut v_bb, mut v_ab) = (1.0f64, 1.0f64, c0.clamp(-1.0, 1.0));
    let mut out = Vec::with_capacity(depth + 1);
    out.push(v_ab);
    for lam in scheme.lambdas(depth)? {
        let a = h.alpha(lam);
        let beta = a / (1.0 + a);
        let scale = geo_mean(v_aa, v_bb);
        let theta = (v_ab / scale).clamp(-1.0, 1.0).acos();
        let relu_cov = scale * (theta.sin() + (PI - theta) * theta.cos()) / (2.0 * PI);
        v_ab = (1.0 - beta) * v_ab + beta * 2.0 * relu_cov;
        v_aa = (1.0 - beta) * v_aa + beta * v_aa;
        v_bb = (1.0 - beta) * v_bb + beta * v_bb;
        out.push((v_ab / geo_mean(v_aa, v_bb)).min(1.0));
    }
    Ok(out)
}

/// Normalized NTK `κ_l = Θ_l/(1+α)^{l−1}` of an unscaled zero-bias network.
///
/// `q0_scale` is `√(Q_0(x,x)·Q_0(x′,x′))`. Returns `κ_0..κ_L` with
/// `κ_0 = (1+α)·Θ_0` and
/// `κ_l = ((1 + α f̂′(C_{l−1}))/(1+α))·κ_{l−1} + α·f̂(C_{l−1})·q0_scale`.
pub fn ntk_normalized_forward(
    c0: f64,
    q0_scale: f64,
    h: &KernelHyper,
    scheme: &ScalingScheme,
    depth: usize,
) -> Result<Vec<f64>> {
    if *scheme != ScalingScheme::Unscaled {
        return Err(Error::Contract(format!("normalized NTK recursion holds for unscaled networks, got {scheme}")));
    }
    h.require_zero_bias("ntk_normalized_forward")?;
    let a = h.alpha(1.0);
    let corr = corr_forward(c0, h, scheme, depth)?;
    let mut out = Vec::with_capacity(depth + 1);
    out.push((1.0 + a) * corr[0] * q0_scale);
    for c in &corr[..depth] {
        let prev = *out.last().expect("non-empty");
        out.push((1.0 + a * relu_fhat_prime(*c)?) / (1.0 + a) * prev + a * relu_fhat(*c)? * q0_scale);
    }
    Ok(out)
}

/// Kernel values at the last layer, divided by the NNGP diagonal scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedPair {
    /// `Q(x,x′)/√(Q(x,x)Q(x′,x′))`.
    pub correlation: f64,
    /// `Θ(x,x′)/√(Q(x,x)Q(x′,x′))`, or NaN when the NTK was not requested.
    pub ntk: f64,
    /// Natural log of `√(Q(x,x)Q(x′,x′))`.
    pub log_scale: f64,
}

/// Run the recursions with periodic rescaling so that depth never overflows.
///
/// The updates are homogeneous of degree one in `(Q, Θ)` apart from the additive
/// `σ_b²`, which is divided by the accumulated scale.
pub fn normalized_pair(s0: PairState, h: &KernelHyper, lambdas: &[f64], with_ntk: bool) -> Result<NormalizedPair> {
    let half = h.sigma_w_sq / 2.0;
    let (mut q_ab, mut q_aa, mut q_bb) = (s0.q_ab, s0.q_aa, s0.q_bb);
    let (mut t_ab, mut t_aa, mut t_bb) = (s0.theta_ab.unwrap_or(q_ab), q_aa, q_bb);
    let mut log_s = 0.0f64;
    for &lam in lambdas {
        let c = correlation_of(q_ab, q_aa, q_bb)?;
        let l2 = lambda_sq(lam);
        let bias = h.sigma_b_sq * (-log_s).exp();
        let d = geo_mean(q_aa, q_bb);
        let psi_ab = bias + half * relu_fhat(c)? * d;
        let psi_aa = bias + half * q_aa;
        let psi_bb = bias + half * q_bb;
        if with_ntk {
            t_ab += l2 * (psi_ab + half * (1.0 + relu_fprime(c)?) * t_ab);
            t_aa += l2 * (psi_aa + half * t_aa);
            t_bb += l2 * (psi_bb + half * t_bb);
        }
        q_ab += l2 * psi_ab;
        q_aa += l2 * psi_aa;
        q_bb += l2 * psi_bb;
        let m = q_aa.max(q_bb);
        if m > 1e100 {
            for v in [&mut q_ab, &mut q_aa, &mut q_bb, &mut t_ab, &mut t_aa, &mut t_bb] {
                *v /= m;
            }
            log_s += m.ln();
        }
    }
    let d = geo_mean(q_aa, q_bb);
    let correlation = correlation_of(q_ab, q_aa, q_bb)?;
    let ntk = if with_ntk { t_ab / d } else { f64::NAN };
    if with_ntk && !ntk.is_finite() {
        return Err(Error::NonFinite("normalized NTK".into()));
    }
    Ok(NormalizedPair { correlation, ntk, log_scale: log_s + d.ln() })
}

fn lambda_sq(lam: f64) -> f64 {
    lam * lam
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_1_PI;

    fn hyper(sw: f64, sb: f64, d: usize) -> KernelHyper {
        KernelHyper::new(sw, sb, d).unwrap()
    }

    #[test]
    fn hyper_validation() {
        assert!(KernelHyper::new(0.0, 0.0, 3).is_err());
        assert!(KernelHyper::new(1.0, -0.1, 3).is_err());
        assert!(KernelHyper::new(1.0, 0.0, 0).is_err());
    }

    #[test]
    fn q0_examples() {
        let h = hyper(2.0, 1.0, 4);
        let x = [1.0, 1.0, 1.0, 1.0];
        assert_relative_eq!(q0(&x, &x, &h).unwrap().q_aa, 3.0, max_relative = 1e-15);
        let h = hyper(2.0, 0.0, 2);
        let s = q0(&[1.0, 0.0], &[0.0, 1.0], &h).unwrap();
        assert_eq!(s.q_ab, 0.0);
        assert_eq!(s.theta_ab, Some(0.0));
        let h = hyper(1.0, 0.1, 2);
        // x·x′/d = 0.5
        assert_relative_eq!(q0(&[1.0, 0.0], &[1.0, 0.0], &h).unwrap().q_ab, 0.6, max_relative = 1e-15);
        assert!(matches!(q0(&[1.0], &[1.0, 0.0], &h), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn unscaled_diagonal_doubles() {
        let h = hyper(2.0, 0.0, 3);
        let x = [1.0, 1.0, 1.0];
        let states = nngp_forward(&x, &x, &h, &ScalingScheme::Unscaled, 30).unwrap();
        assert_relative_eq!(states[0].q_aa, 2.0, max_relative = 1e-15);
        for w in states.windows(2) {
            assert_relative_eq!(w[1].q_aa / w[0].q_aa, 2.0, max_relative = 1e-12);
            assert_relative_eq!(w[1].correlation().unwrap(), 1.0, max_relative = 1e-15);
        }
    }

    #[test]
    fn first_correlation_step_from_orthogonal() {
        let h = hyper(2.0, 0.0, 2);
        let states = nngp_forward(&[1.0, 0.0], &[0.0, 1.0], &h, &ScalingScheme::Unscaled, 1).unwrap();
        // α = 1: C_1 = (0 + f̂(0))/2
        assert_relative_eq!(states[1].correlation().unwrap(), 0.5 * FRAC_1_PI, max_relative = 1e-14);
        let c = corr_forward(0.0, &h, &ScalingScheme::Unscaled, 1).unwrap();
        assert_relative_eq!(c[1], 0.5 * FRAC_1_PI, max_relative = 1e-14);
        let m = corr_as_modified_nngp(0.0, &h, &ScalingScheme::Unscaled, 1).unwrap();
        assert_relative_eq!(m[1], 0.5 * FRAC_1_PI, max_relative = 1e-14);
    }

    #[test]
    fn depth_zero_returns_initial_state() {
        let h = hyper(1.5, 0.2, 2);
        let s = nngp_forward(&[0.3, 0.4], &[0.1, -0.2], &h, &ScalingScheme::Uniform, 0).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].layer, 0);
    }

    #[test]
    fn uniform_diagonal_product() {
        let h = hyper(1.7, 0.0, 2);
        let x = [0.6, 0.8];
        let depth = 64;
        let s = nngp_forward(&x, &x, &h, &ScalingScheme::Uniform, depth).unwrap();
        let q0d = s[0].q_aa;
        let want = (1.0 + 1.7 / (2.0 * depth as f64)).powi(depth as i32) * q0d;
        assert_relative_eq!(s[depth].q_aa, want, max_relative = 1e-12);
        assert!(s[depth].q_aa <= (1.7f64 / 2.0).exp() * q0d);
    }

    #[test]
    fn diagonal_closed_form_with_bias() {
        let h = hyper(1.3, 0.4, 3);
        let x = [0.2, -0.5, 0.9];
        for scheme in [ScalingScheme::Unscaled, ScalingScheme::Uniform, ScalingScheme::Decreasing] {
            let s = nngp_forward(&x, &x, &h, &scheme, 40).unwrap();
            for (l, st) in s.iter().enumerate() {
                let want = diag_closed_form(s[0].q_aa, &h, &scheme, l, 40).unwrap();
                assert_relative_eq!(st.q_aa, want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn zero_input_without_bias_is_invalid() {
        let h = hyper(2.0, 0.0, 2);
        let r = nngp_forward(&[0.0, 0.0], &[1.0, 0.0], &h, &ScalingScheme::Unscaled, 2);
        assert!(matches!(r, Err(Error::InvalidState(_))));
    }

    #[test]
    fn overflow_is_reported() {
        let h = hyper(2.0, 0.0, 1);
        let r = nngp_forward(&[1.0], &[1.0], &h, &ScalingScheme::Unscaled, 1100);
        assert!(matches!(r, Err(Error::Overflow { layer: 1023 })), "{r:?}");
    }

    #[test]
    fn corr_requires_zero_bias() {
        let h = hyper(2.0, 0.1, 2);
        assert!(matches!(corr_forward(0.2, &h, &ScalingScheme::Uniform, 3), Err(Error::Contract(_))));
        assert!(matches!(corr_as_modified_nngp(0.2, &h, &ScalingScheme::Uniform, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn corr_fixed_point_and_agreement_with_nngp() {
        let h = hyper(2.0, 0.0, 2);
        assert!(corr_forward(1.0, &h, &ScalingScheme::Decreasing, 50).unwrap().iter().all(|&c| c == 1.0));
        assert!(corr_as_modified_nngp(1.0, &h, &ScalingScheme::Decreasing, 50).unwrap().iter().all(|&c| c == 1.0));
        let (x, xp) = ([0.6, 0.8], [-0.28, 0.96]);
        for scheme in [ScalingScheme::Unscaled, ScalingScheme::Uniform, ScalingScheme::Decreasing] {
            let states = nngp_forward(&x, &xp, &h, &scheme, 200).unwrap();
            let c = corr_forward(states[0].correlation().unwrap(), &h, &scheme, 200).unwrap();
            for (s, c) in states.iter().zip(&c) {
                assert!((s.correlation().unwrap() - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ntk_diagonal_closed_form() {
        // unscaled, σ_w² = 2, σ_b = 0 on the diagonal: Θ_l = 2Θ_{l−1} + 2^{l−1}Q_0
        let h = hyper(2.0, 0.0, 2);
        let x = [0.6, 0.8];
        let s = ntk_forward(&x, &x, &h, &ScalingScheme::Unscaled, 60).unwrap();
        let q0d = s[0].q_aa;
        let mut brute = q0d;
        for (l, st) in s.iter().enumerate() {
            if l > 0 {
                brute = 2.0 * brute + 2f64.powi(l as i32 - 1) * q0d;
            }
            let closed = (l as f64 + 2.0) * 2f64.powi(l as i32 - 1) * q0d;
            assert_relative_eq!(st.theta_ab.unwrap(), closed, max_relative = 1e-12);
            assert_relative_eq!(brute, closed, max_relative = 1e-12);
        }
    }

    #[test]
    fn normalized_ntk_matches_raw() {
        let h = hyper(2.0, 0.0, 2);
        let (x, xp) = ([0.6, 0.8], [0.8, -0.6]);
        let raw = ntk_forward(&x, &xp, &h, &ScalingScheme::Unscaled, 40).unwrap();
        let q0s = (raw[0].q_aa * raw[0].q_bb).sqrt();
        let kappa = ntk_normalized_forward(raw[0].correlation().unwrap(), q0s, &h, &ScalingScheme::Unscaled, 40).unwrap();
        for l in 1..=40 {
            let want = raw[l].theta_ab.unwrap() / 2f64.powi(l as i32 - 1);
            assert_relative_eq!(kappa[l], want, max_relative = 1e-9);
        }
        // first step at C_0 = 0, α = 1, Q_0 = 1: κ_0 = 0, κ_1 = f̂(0)
        let k = ntk_normalized_forward(0.0, 1.0, &h, &ScalingScheme::Unscaled, 1).unwrap();
        assert_eq!(k[0], 0.0);
        assert_relative_eq!(k[1], FRAC_1_PI, max_relative = 1e-15);
        let deep = ntk_normalized_forward(0.3, 1.0, &h, &ScalingScheme::Unscaled, 10_000).unwrap();
        assert!(deep.iter().all(|v| v.is_finite()));
        assert!(ntk_normalized_forward(0.3, 1.0, &h, &ScalingScheme::Uniform, 3).is_err());
    }

    #[test]
    fn normalized_pair_matches_raw_and_survives_depth() {
        let h = hyper(1.4, 0.3, 2);
        let (x, xp) = ([0.6, 0.8], [0.1, -0.9]);
        let raw = ntk_forward(&x, &xp, &h, &ScalingScheme::Unscaled, 300).unwrap();
        let last = raw[300];
        let lambdas = vec![1.0; 300];
        let n = normalized_pair(raw[0], &h, &lambdas, true).unwrap();
        let d = geo_mean(last.q_aa, last.q_bb);
        assert_relative_eq!(n.correlation, last.q_ab / d, max_relative = 1e-12);
        assert_relative_eq!(n.ntk, last.theta_ab.unwrap() / d, max_relative = 1e-11);
        assert_relative_eq!(n.log_scale, d.ln(), max_relative = 1e-12);
        let h = hyper(2.0, 0.5, 2);
        let deep = normalized_pair(q0(&x, &xp, &h).unwrap(), &h, &vec![1.0; 5000], true).unwrap();
        assert!(deep.ntk.is_finite() && deep.correlation <= 1.0);
    }
}
