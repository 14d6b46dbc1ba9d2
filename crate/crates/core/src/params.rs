//! Parameter solver: picks the schedule window `(delta, gamma)` from the
//! target failure exponent and the adversarial fraction.
//!
//! `gamma` is fixed first because the bound on `delta` references it. With
//! `L = log_{1/beta}`:
//!
//! - `gamma = ceil((c + 5) / (1 - alpha) * L(n))`
//! - `delta = ceil(max(2, K / (alpha^2 ln^2(1/beta)), 2 L(2 e gamma d) / alpha + 1,
//!   ((c + kappa) / 2) * L(ln n)))`
//!
//! where `(K, kappa)` come from the chosen constant profile. The analysis
//! and the headline-theorem proof fix slightly different constants; both are
//! available, plus a strict profile combining the larger of each, which is
//! the default.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),
}

/// Constant profile for the `delta` lower bounds: `K` scales the
/// `1/ln^2(1/beta)` term and `kappa` the `log log n` term. The analysis
/// admits two self-consistent constant choices that differ by constant
/// factors; both are kept, plus a strict profile taking the larger of each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstantProfile {
    /// `(K, kappa) = (4, 2)`.
    Lemma,
    /// `(K, kappa) = (8e, 1)`.
    Theorem,
    /// `(K, kappa) = (8e, 2)`: the larger of each; the default.
    #[default]
    Strict,
}

impl ConstantProfile {
    pub fn constants(self) -> (f64, f64) {
        match self {
            ConstantProfile::Lemma => (4.0, 2.0),
            ConstantProfile::Theorem => (8.0 * std::f64::consts::E, 1.0),
            ConstantProfile::Strict => (8.0 * std::f64::consts::E, 2.0),
        }
    }
}

/// Full parameter set of one protocol configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub beta: f64,
    pub alpha: f64,
    /// Failure exponent `c`: the failure probability target is `n^-c`.
    pub hp_exponent: f64,
    pub delta: u32,
    pub gamma: u32,
    pub seed: u64,
    pub profile: ConstantProfile,
}

fn check_common(beta: f64, alpha: f64, c: f64) -> Result<(), ParamError> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(ParamError::ParamOutOfRange(format!(
            "beta = {beta} not in (0, 1)"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ParamError::ParamOutOfRange(format!(
            "alpha = {alpha} not in (0, 1)"
        )));
    }
    if c <= 0.0 {
        return Err(ParamError::ParamOutOfRange(format!(
            "hp exponent c = {c} must be positive"
        )));
    }
    Ok(())
}

/// Computes `(delta, gamma)` for an `n`-task graph with degree bound `d`.
pub fn compute_params(
    n: usize,
    d: usize,
    beta: f64,
    alpha: f64,
    c: f64,
    profile: ConstantProfile,
) -> Result<(u32, u32), ParamError> {
    check_common(beta, alpha, c)?;
    if n < 2 {
        return Err(ParamError::ParamOutOfRange(format!(
            "n = {n} must be at least 2"
        )));
    }
    if d < 1 {
        return Err(ParamError::ParamOutOfRange(
            "degree bound d must be at least 1".into(),
        ));
    }
    let ln_inv_beta = (1.0 / beta).ln();
    let log_b = |x: f64| x.ln() / ln_inv_beta;

    let gamma = ((c + 5.0) / (1.0 - alpha) * log_b(n as f64)).ceil();
    if !(gamma.is_finite() && gamma >= 1.0 && gamma < u32::MAX as f64) {
        return Err(ParamError::ParamOutOfRange(format!(
            "gamma overflows: {gamma}"
        )));
    }

    let (k, kappa) = profile.constants();
    let term_quad = k / (alpha * alpha * ln_inv_beta * ln_inv_beta);
    let term_degree = 2.0 * log_b(2.0 * std::f64::consts::E * gamma * d as f64) / alpha + 1.0;
    let term_loglog = (c + kappa) / 2.0 * log_b((n as f64).ln());
    let delta = 2.0f64
        .max(term_quad)
        .max(term_degree)
        .max(term_loglog)
        .ceil();
    if !(delta.is_finite() && delta < u32::MAX as f64) {
        return Err(ParamError::ParamOutOfRange(format!(
            "delta overflows: {delta}"
        )));
    }
    Ok((delta as u32, gamma as u32))
}
