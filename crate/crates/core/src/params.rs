//! Protocol constants.
//!
//! Every derived quantity the protocols rely on is computed here from the
//! handful of physical inputs (drift, delay, uncertainty, fault budget) and
//! the two tuning knobs `c2` and `epsilon`. All arithmetic is `f64`; callers
//! should treat results as accurate to roughly `1e-9` relative.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance promised for every floating-point constant below.
pub const PARAM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamsError {
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("infeasible parameters: {0}")]
    Infeasible(String),
}

fn default_c2() -> f64 {
    32.0
}

fn default_epsilon() -> f64 {
    1.0 / 16.0
}

fn default_k_stab() -> u32 {
    4
}

/// Physical inputs and tuning knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolParams {
    pub rho: f64,
    pub d: f64,
    #[serde(rename = "U", alias = "u")]
    pub u: f64,
    pub f: usize,
    pub k: usize,
    #[serde(default = "default_c2")]
    pub c2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_k_stab", rename = "k_stab")]
    pub k_stab: u32,
    /// Bound on the round-1 pulse diameter. Zero under simultaneous start.
    #[serde(default)]
    pub initial_skew: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            rho: 1e-4,
            d: 1.0,
            u: 0.01,
            f: 1,
            k: 4,
            c2: default_c2(),
            epsilon: default_epsilon(),
            k_stab: default_k_stab(),
            initial_skew: 0.0,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), ParamsError> {
        let finite = [self.rho, self.d, self.u, self.c2, self.epsilon, self.initial_skew];
        if finite.iter().any(|x| !x.is_finite()) {
            return Err(ParamsError::Invalid("all parameters must be finite".into()));
        }
        if self.k < 3 * self.f + 1 {
            return Err(ParamsError::Invalid(format!(
                "cluster size k={} must be at least 3f+1={}",
                self.k,
                3 * self.f + 1
            )));
        }
        if self.d <= 0.0 {
            return Err(ParamsError::Invalid(format!("d={} must be positive", self.d)));
        }
        if self.u < 0.0 || self.u > self.d {
            return Err(ParamsError::Invalid(format!(
                "U={} must lie in [0, d={}]",
                self.u, self.d
            )));
        }
        if self.rho < 0.0 {
            return Err(ParamsError::Invalid(format!("rho={} must be >= 0", self.rho)));
        }
        if self.c2 < 32.0 {
            return Err(ParamsError::Invalid(format!("c2={} must be >= 32", self.c2)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.25) {
            return Err(ParamsError::Invalid(format!(
                "epsilon={} must lie in (0, 1/4]",
                self.epsilon
            )));
        }
        if self.initial_skew < 0.0 {
            return Err(ParamsError::Invalid("initial_skew must be >= 0".into()));
        }
        Ok(())
    }
}

/// Constants derived from [`ProtocolParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub rho: f64,
    pub mu: f64,
    pub c1: f64,
    pub phi: f64,
    pub theta_g: f64,
    pub theta_max: f64,
    pub zeta_max: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub err_bound: f64,
    pub delta: f64,
    pub kappa: f64,
}

/// Flat view printed by `check-params`. Field order is the output order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamsReport {
    pub rho: f64,
    pub mu: f64,
    pub phi: f64,
    pub c1: f64,
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub delta: f64,
    pub kappa: f64,
    pub theta_g: f64,
    pub theta_max: f64,
}

impl From<&DerivedParams> for ParamsReport {
    fn from(dp: &DerivedParams) -> Self {
        Self {
            rho: dp.rho,
            mu: dp.mu,
            phi: dp.phi,
            c1: dp.c1,
            alpha: dp.alpha,
            beta: dp.beta,
            e: dp.e,
            tau1: dp.tau1,
            tau2: dp.tau2,
            tau3: dp.tau3,
            t: dp.t,
            delta: dp.delta,
            kappa: dp.kappa,
            theta_g: dp.theta_g,
            theta_max: dp.theta_max,
        }
    }
}

/// Contraction factor and additive term of the pulse-diameter recursion
/// `e(r+1) <= alpha * e(r) + beta` when nominal rates are bounded by
/// `theta_g` and phase lengths are fixed.
pub fn error_recursion(theta_g: f64, phi: f64, d: f64, u: f64) -> (f64, f64) {
    let th = theta_g;
    let alpha = (6.0 * th * th * phi + 5.0 * th * phi - 9.0 * phi + 2.0 * th * th - 2.0)
        / (2.0 * phi * (th + 1.0));
    let beta = (3.0 * th - 1.0 + (th - 1.0) / phi) * u + (th - 1.0) * d;
    (alpha, beta)
}

/// Recursion coefficients for a cluster whose members all run in one mode.
///
/// `theta` bounds the hardware-level rate spread of the regime, `zeta` its
/// nominal-rate floor. Returns `(alpha, beta, gamma)`.
#[allow(clippy::too_many_arguments)]
pub fn regime_recursion(
    theta: f64,
    zeta: f64,
    zeta_max: f64,
    theta_g: f64,
    c1: f64,
    d: f64,
    u: f64,
) -> (f64, f64, f64) {
    let gamma = (zeta_max / zeta) * (theta_g / theta) * (theta - 1.0);
    let alpha = (2.0 * theta * theta + 5.0 * theta - 5.0) / (2.0 * (theta + 1.0) * (1.0 - gamma))
        + gamma * (1.0 + c1) / (1.0 - gamma);
    let beta = gamma * d / (1.0 - gamma) + ((3.0 * theta - 1.0) + gamma * c1) * u / (1.0 - gamma);
    (alpha, beta, gamma)
}

/// Evaluate every derived constant for explicit `(rho, mu, phi)`.
///
/// [`derive_parameters`] calls this with the standard choice of `mu` and
/// `phi`; it is public so degenerate settings such as `rho = mu = 0` can be
/// evaluated directly.
pub fn derive_with(
    p: &ProtocolParams,
    rho: f64,
    mu: f64,
    phi: f64,
) -> Result<DerivedParams, ParamsError> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(ParamsError::Infeasible(format!(
            "phi={phi} must lie in (0, 1); rho is too large"
        )));
    }
    let theta_g = (1.0 + rho) * (1.0 + mu);
    let (alpha, beta) = error_recursion(theta_g, phi, p.d, p.u);
    if !(alpha < 1.0) {
        return Err(ParamsError::Infeasible(format!(
            "contraction factor alpha={alpha} >= 1 (rho={rho}, epsilon={})",
            p.epsilon
        )));
    }
    let e = (beta / (1.0 - alpha)).max(p.initial_skew);
    let tau1 = theta_g * e;
    let tau2 = theta_g * (e + p.d);
    let tau3 = theta_g * (e + p.u) / phi;
    let delta = f64::from(p.k_stab + 5) * e;
    Ok(DerivedParams {
        rho,
        mu,
        c1: 1.0 / phi,
        phi,
        theta_g,
        theta_max: (1.0 + 2.0 * phi / (1.0 - phi)) * (1.0 + mu) * (1.0 + rho),
        zeta_max: (1.0 + phi) * (1.0 + mu),
        alpha,
        beta,
        e,
        tau1,
        tau2,
        tau3,
        t: tau1 + tau2 + tau3,
        err_bound: 2.0 * theta_g * e,
        delta,
        kappa: 3.0 * delta,
    })
}

pub fn derive_parameters(p: &ProtocolParams) -> Result<DerivedParams, ParamsError> {
    p.validate()?;
    if p.rho <= 0.0 {
        return Err(ParamsError::Invalid("rho must be > 0".into()));
    }
    let mu = p.c2 * p.rho;
    let c1 = (0.5 - p.epsilon) / (1.0 + p.c2) / p.rho;
    derive_with(p, p.rho, mu, 1.0 / c1)
}

/// Recursion coefficients and steady-state errors per mode regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnanimousParams {
    pub alpha_g: f64,
    pub beta_g: f64,
    pub gamma_g: f64,
    pub alpha_f: f64,
    pub beta_f: f64,
    pub gamma_f: f64,
    pub alpha_s: f64,
    pub beta_s: f64,
    pub gamma_s: f64,
    pub ess_g: f64,
    pub ess_f: f64,
    pub ess_s: f64,
}

pub fn unanimous_parameters(
    p: &ProtocolParams,
    dp: &DerivedParams,
) -> Result<UnanimousParams, ParamsError> {
    let regime = |theta: f64, zeta: f64| {
        regime_recursion(theta, zeta, dp.zeta_max, dp.theta_g, dp.c1, p.d, p.u)
    };
    let (alpha_g, beta_g, gamma_g) = regime(dp.theta_g, 1.0);
    let (alpha_f, beta_f, gamma_f) = regime(1.0 + dp.rho, dp.zeta_max);
    let (alpha_s, beta_s, gamma_s) = regime(1.0 + dp.rho, 1.0 + dp.phi);
    for (name, a, g) in [
        ("general", alpha_g, gamma_g),
        ("fast", alpha_f, gamma_f),
        ("slow", alpha_s, gamma_s),
    ] {
        if !(a < 1.0) || !(g < 1.0) {
            return Err(ParamsError::Infeasible(format!(
                "{name} regime contraction factor {a} >= 1"
            )));
        }
    }
    Ok(UnanimousParams {
        alpha_g,
        beta_g,
        gamma_g,
        alpha_f,
        beta_f,
        gamma_f,
        alpha_s,
        beta_s,
        gamma_s,
        ess_g: beta_g / (1.0 - alpha_g),
        ess_f: beta_f / (1.0 - alpha_f),
        ess_s: beta_s / (1.0 - alpha_s),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FailureProbability {
    pub exact: f64,
    pub bound: f64,
}

/// Probability that a cluster of `3f+1` nodes, each faulty independently
/// with probability `p`, holds more than `f` faulty nodes.
pub fn cluster_failure_probability(f: u32, p: f64) -> FailureProbability {
    let n = 3 * f + 1;
    let q = 1.0 - p;
    let mut binom = 1.0_f64;
    let mut exact = 0.0;
    for i in 0..=n {
        if i > f {
            exact += binom * p.powi(i as i32) * q.powi((n - i) as i32);
        }
        binom = binom * f64::from(n - i) / f64::from(i + 1);
    }
    FailureProbability {
        exact,
        bound: (3.0 * std::f64::consts::E * p).powi(f as i32 + 1),
    }
}

/// Largest `s` the trigger search considers for a given global skew bound.
pub fn s_max_for(global_skew_bound: f64, kappa: f64) -> u32 {
    (global_skew_bound / (2.0 * kappa)).ceil() as u32 + 2
}
