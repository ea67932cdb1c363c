//! Second moments of the loss gradient through depth.
//!
//! In the infinite-width limit `q̄_l = (1 + σ_w²λ_{l+1}²/2)·q̄_{l+1}`, so backpropagation
//! amplifies the terminal moment by `∏_{k>l}(1 + σ_w²λ_k²/2)`.

use crate::error::{Error, Result};
use crate::kernels::KernelHyper;
use crate::scaling::ScalingScheme;

/// Per-layer gradient second moments `q̄_0..q̄_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientProfile {
    pub qbar: Vec<f64>,
    pub scheme: ScalingScheme,
}

impl GradientProfile {
    pub fn terminal(&self) -> f64 {
        *self.qbar.last().expect("non-empty profile")
    }

    /// `q̄_0 / q̄_L`.
    pub fn amplification(&self) -> f64 {
        self.qbar[0] / self.terminal()
    }
}

/// Backward recursion from `q̄_L = q_terminal`.
pub fn grad_profile(scheme: &ScalingScheme, h: &KernelHyper, depth: usize, q_terminal: f64) -> Result<GradientProfile> {
    if !(q_terminal > 0.0) {
        return Err(Error::Contract(format!("terminal moment must be positive, got {q_terminal}")));
    }
    let lambdas = scheme.lambdas(depth)?;
    let mut qbar = vec![0.0; depth + 1];
    qbar[depth] = q_terminal;
    for l in (0..depth).rev() {
        qbar[l] = (1.0 + h.alpha(lambdas[l])) * qbar[l + 1];
    }
    Ok(GradientProfile { qbar, scheme: scheme.clone() })
}

/// Envelopes `exp((σ_w²/2)Σλ²)` and `(1 + λ_min²σ_w²/2)^L`, normalized to unit constants.
///
/// The lower envelope needs `λ_min` bounded away from zero, so it is refused for the
/// decreasing scheme.
pub fn weight_grad_bound(scheme: &ScalingScheme, h: &KernelHyper, depth: usize) -> Result<(f64, f64)> {
    if *scheme == ScalingScheme::Decreasing {
        return Err(Error::Contract("lower envelope undefined for the decreasing scheme (λ_min → 0)".into()));
    }
    let lambdas = scheme.lambdas(depth)?;
    let upper = (h.sigma_w_sq / 2.0 * lambdas.iter().map(|l| l * l).sum::<f64>()).exp();
    let lambda_min = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let lower = (1.0 + h.alpha(lambda_min)).powi(depth as i32);
    Ok((upper, lower))
}
