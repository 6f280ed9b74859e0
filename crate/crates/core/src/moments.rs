//! Approximations of the filtered conditional moments `m` and `m2`.
//!
//! Four interchangeable variants are provided:
//!
//! * [`Variant::Euler`] — `m = x + (b - lambda*gamma*mu_J) * delta`,
//!   `m2 = a^2 * delta`;
//! * [`Variant::SecondOrder`] — Euler plus the jump-correction integrals
//!   `J1` and `J2`, which capture the small-jump mass that survives the
//!   threshold filter;
//! * [`Variant::GeneratorOrder2`] — two iterations of the continuous
//!   generator on `h1(y) = y - x` and `h2(y) = y^2` (assembled in the
//!   numerically stable centered form);
//! * [`Variant::ExactOu`] — the exact Gaussian transition moments of the
//!   compensated linear model, available when the model is linear.
//!
//! Jump integrals are memoized per (step, threshold, jump-law) key behind a
//! lock that supports concurrent readers.

use crate::kernels::TruncationKernel;
use crate::model::{apply_generator_c, ModelError, ModelSpec, Polynomial, SmoothFn};
use crate::quad::{integrate_refined, GaussLegendre};
use crate::simulate::ou_transition_coeffs;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::RwLock;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MomentError {
    #[error("exact-OU moments require a linear model")]
    NotLinearOu,
    #[error("exact-OU moments require theta1 < 0, got {0}")]
    Theta1NotNegative(f64),
    #[error("jump integrals require a constant jump coefficient")]
    NonConstantGamma,
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("jump-integral quadrature did not converge")]
    QuadratureNotConverged,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Threshold configuration of the jump filter: weights are
/// `phi(increment / (c * delta^beta))` and states are kept while
/// `|x| <= delta^(-k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub beta: f64,
    pub c_thr: f64,
    pub k_trunc: f64,
}

impl FilterConfig {
    /// `beta` must lie in `(1/4, 1/2)`; `c_thr` may be `+inf`, which disables
    /// the filter entirely (every weight is 1).
    pub fn new(beta: f64, c_thr: f64, k_trunc: f64) -> Result<Self, MomentError> {
        if !(beta > 0.25 && beta < 0.5) {
            return Err(MomentError::InvalidFilter(format!(
                "threshold exponent must be in (1/4, 1/2), got {beta}"
            )));
        }
        if !(c_thr > 0.0) {
            return Err(MomentError::InvalidFilter(format!(
                "threshold multiplier must be > 0, got {c_thr}"
            )));
        }
        if !(k_trunc > 0.0) {
            return Err(MomentError::InvalidFilter(format!(
                "state-truncation exponent must be > 0, got {k_trunc}"
            )));
        }
        Ok(Self {
            beta,
            c_thr,
            k_trunc,
        })
    }

    /// Unfiltered configuration: infinite threshold.
    pub fn unfiltered() -> Self {
        Self {
            beta: 0.49,
            c_thr: f64::INFINITY,
            k_trunc: 1.0,
        }
    }

    pub fn threshold(&self, delta: f64) -> f64 {
        self.c_thr * delta.powf(self.beta)
    }

    pub fn state_bound(&self, delta: f64) -> f64 {
        delta.powf(-self.k_trunc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "euler")]
    Euler,
    #[serde(rename = "second-order")]
    SecondOrder,
    #[serde(rename = "generator2")]
    GeneratorOrder2,
    #[serde(rename = "exact-ou")]
    ExactOu,
}

impl Variant {
    /// Declared accuracy orders `(rho1, rho2)` of the `m`/`m2` approximation
    /// error as powers of the step size, given the threshold exponent.
    /// `None` marks variants whose moments are exact for linear models.
    pub fn accuracy_orders(&self, beta: f64) -> Option<(f64, f64)> {
        match self {
            // the Euler variance misses the delta^(1+3*beta) jump term
            Variant::Euler => Some((2.0 - 2.0 * beta, (1.0 + 3.0 * beta).min(2.0))),
            Variant::SecondOrder => Some((2.0 - 2.0 * beta, 2.0)),
            Variant::GeneratorOrder2 | Variant::ExactOu => None,
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "euler" => Ok(Self::Euler),
            "second-order" => Ok(Self::SecondOrder),
            "generator2" => Ok(Self::GeneratorOrder2),
            "exact-ou" => Ok(Self::ExactOu),
            other => Err(format!(
                "unknown variant `{other}` (expected euler | second-order | generator2 | exact-ou)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub panels: usize,
    pub tol: f64,
    pub max_doublings: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            panels: 64,
            tol: 1e-10,
            max_doublings: 7,
        }
    }
}

type JKey = [u64; 7];
type JCache = RwLock<HashMap<JKey, (f64, f64)>>;
type OuCache = RwLock<HashMap<(u64, u64), (f64, f64, f64)>>;

/// Strategy object producing `m(theta, x, delta)` and `m2(theta, x, delta)`.
/// Immutable and thread-safe; the jump-integral and transition-coefficient
/// caches allow concurrent reads with single-writer insertion.
pub struct MomentApproximator {
    pub variant: Variant,
    pub kernel: TruncationKernel,
    quad: QuadConfig,
    rule: GaussLegendre,
    j_cache: JCache,
    ou_cache: OuCache,
}

impl MomentApproximator {
    pub fn new(variant: Variant, kernel: TruncationKernel, quad: QuadConfig) -> Self {
        Self {
            variant,
            kernel,
            quad,
            rule: GaussLegendre::new(16),
            j_cache: RwLock::new(HashMap::new()),
            ou_cache: RwLock::new(HashMap::new()),
        }
    }

    /// Conditional-mean approximation at `(mu, sigma, x, delta)`.
    pub fn m(
        &self,
        model: &ModelSpec,
        filter: &FilterConfig,
        mu: f64,
        sigma: f64,
        x: f64,
        delta: f64,
    ) -> Result<f64, MomentError> {
        Ok(self.prepare(model, filter, mu, sigma, delta)?.moments_at(x)?.0)
    }

    /// Conditional-variance approximation at `(mu, sigma, x, delta)`.
    pub fn m2(
        &self,
        model: &ModelSpec,
        filter: &FilterConfig,
        mu: f64,
        sigma: f64,
        x: f64,
        delta: f64,
    ) -> Result<f64, MomentError> {
        Ok(self.prepare(model, filter, mu, sigma, delta)?.moments_at(x)?.1)
    }

    /// Hoist the parts of the moment formulas that do not depend on the
    /// conditioning state. On uniform grids this makes a contrast evaluation
    /// a single pass of cheap arithmetic.
    pub fn prepare<'a>(
        &'a self,
        model: &'a ModelSpec,
        filter: &FilterConfig,
        mu: f64,
        sigma: f64,
        delta: f64,
    ) -> Result<Prepared<'a>, MomentError> {
        let kind = match self.variant {
            Variant::Euler => PreparedKind::Euler,
            Variant::SecondOrder => match model.constant_jump_coef() {
                Some(gamma) => {
                    let (j1, j2) = self.jump_integrals(model, filter, gamma, delta)?;
                    PreparedKind::SecondOrder { j1, j2 }
                }
                None => PreparedKind::SecondOrderVarGamma,
            },
            Variant::GeneratorOrder2 => PreparedKind::Generator2,
            Variant::ExactOu => {
                let lin = model.linear_ou_coeffs().ok_or(MomentError::NotLinearOu)?;
                if !(lin.theta1 < 0.0) {
                    return Err(MomentError::Theta1NotNegative(lin.theta1));
                }
                let (u, q, g2) = self.ou_coeffs(lin.theta1, delta);
                let cbar = mu - lin.gamma * model.jumps().compensator_mean();
                PreparedKind::ExactOu { u, q, g2, cbar }
            }
        };
        Ok(Prepared {
            approx: self,
            model,
            filter: *filter,
            mu,
            sigma,
            delta,
            kind,
        })
    }

    fn ou_coeffs(&self, theta1: f64, delta: f64) -> (f64, f64, f64) {
        let key = (theta1.to_bits(), delta.to_bits());
        if let Some(v) = self.ou_cache.read().unwrap().get(&key) {
            return *v;
        }
        let v = ou_transition_coeffs(theta1, delta);
        self.ou_cache.write().unwrap().insert(key, v);
        v
    }

    /// Memoized `(J1, J2)` for a given jump coefficient and step.
    pub fn jump_integrals(
        &self,
        model: &ModelSpec,
        filter: &FilterConfig,
        gamma: f64,
        delta: f64,
    ) -> Result<(f64, f64), MomentError> {
        let law = model.jumps();
        if law.lambda == 0.0 || gamma == 0.0 {
            return Ok((0.0, 0.0));
        }
        let key: JKey = [
            delta.to_bits(),
            filter.c_thr.to_bits(),
            filter.beta.to_bits(),
            gamma.to_bits(),
            law.lambda.to_bits(),
            law.mu_j.to_bits(),
            law.sigma_j.to_bits(),
        ];
        if let Some(v) = self.j_cache.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = compute_jump_integrals(
            &self.kernel,
            filter,
            model,
            gamma,
            delta,
            &self.rule,
            &self.quad,
        )?;
        self.j_cache.write().unwrap().insert(key, v);
        Ok(v)
    }
}

pub struct Prepared<'a> {
    approx: &'a MomentApproximator,
    model: &'a ModelSpec,
    filter: FilterConfig,
    mu: f64,
    sigma: f64,
    delta: f64,
    kind: PreparedKind,
}

enum PreparedKind {
    Euler,
    SecondOrder { j1: f64, j2: f64 },
    SecondOrderVarGamma,
    Generator2,
    ExactOu { u: f64, q: f64, g2: f64, cbar: f64 },
}

impl Prepared<'_> {
    /// `(m, m2)` at conditioning state `x`.
    pub fn moments_at(&self, x: f64) -> Result<(f64, f64), MomentError> {
        let (model, mu, sigma, delta) = (self.model, self.mu, self.sigma, self.delta);
        match self.kind {
            PreparedKind::Euler => Ok((
                m_euler(model, mu, x, delta),
                m2_euler(model, sigma, x, delta),
            )),
            PreparedKind::SecondOrder { j1, j2 } => {
                let a = model.diffusion(sigma, x);
                Ok((
                    x + delta * model.compensated_drift(mu, x) + j1,
                    delta * a * a + j2,
                ))
            }
            PreparedKind::SecondOrderVarGamma => {
                let gamma = model.jump_coef(x);
                let (j1, j2) = self
                    .approx
                    .jump_integrals(model, &self.filter, gamma, delta)?;
                let a = model.diffusion(sigma, x);
                Ok((
                    x + delta * model.compensated_drift(mu, x) + j1,
                    delta * a * a + j2,
                ))
            }
            PreparedKind::Generator2 => Ok((
                m_generator2(model, mu, sigma, x, delta)?,
                m2_generator2(model, mu, sigma, x, delta)?,
            )),
            PreparedKind::ExactOu { u, q, g2, cbar } => {
                Ok((u * x + cbar * q, sigma * sigma * g2))
            }
        }
    }
}

/// Euler conditional mean `x + (b - lambda*gamma*mu_J) * delta`.
pub fn m_euler(model: &ModelSpec, mu: f64, x: f64, delta: f64) -> f64 {
    x + model.compensated_drift(mu, x) * delta
}

/// Euler conditional variance `a(sigma, x)^2 * delta`.
pub fn m2_euler(model: &ModelSpec, sigma: f64, x: f64, delta: f64) -> f64 {
    let a = model.diffusion(sigma, x);
    a * a * delta
}

fn compute_jump_integrals(
    kernel: &TruncationKernel,
    filter: &FilterConfig,
    model: &ModelSpec,
    gamma: f64,
    delta: f64,
    rule: &GaussLegendre,
    quad: &QuadConfig,
) -> Result<(f64, f64), MomentError> {
    if !filter.c_thr.is_finite() {
        return Err(MomentError::InvalidFilter(
            "jump integrals need a finite threshold".into(),
        ));
    }
    let law = *model.jumps();
    let c = filter.c_thr;
    let scale = c * delta.powf(filter.beta) / gamma;
    let r = kernel.support_radius();
    let f1 = |u: f64| u * kernel.eval(u) * law.levy_density(u * scale);
    let f2 = |u: f64| u * u * kernel.eval(u) * law.levy_density(u * scale);
    let (i1, ok1) = integrate_refined(rule, -r, r, quad.panels, quad.tol, quad.max_doublings, &f1);
    let (i2, ok2) = integrate_refined(rule, -r, r, quad.panels, quad.tol, quad.max_doublings, &f2);
    if !ok1 || !ok2 {
        return Err(MomentError::QuadratureNotConverged);
    }
    let j1 = c * c * delta.powf(1.0 + 2.0 * filter.beta) / gamma * i1;
    let j2 = c * c * c * delta.powf(1.0 + 3.0 * filter.beta) / gamma * i2;
    Ok((j1, j2))
}

/// Jump-correction integral
/// `J1 = c^2 delta^(1+2beta) / gamma * ∫ u phi(u) F(u c delta^beta / gamma) du`.
/// Requires a constant jump coefficient.
pub fn jump_integral_j1(
    model: &ModelSpec,
    kernel: &TruncationKernel,
    filter: &FilterConfig,
    delta: f64,
) -> Result<f64, MomentError> {
    let gamma = model
        .constant_jump_coef()
        .ok_or(MomentError::NonConstantGamma)?;
    if model.jumps().lambda == 0.0 || gamma == 0.0 {
        return Ok(0.0);
    }
    let rule = GaussLegendre::new(16);
    compute_jump_integrals(kernel, filter, model, gamma, delta, &rule, &QuadConfig::default())
        .map(|(j1, _)| j1)
}

/// Jump-correction integral
/// `J2 = c^3 delta^(1+3beta) / gamma * ∫ u^2 phi(u) F(u c delta^beta / gamma) du`.
pub fn jump_integral_j2(
    model: &ModelSpec,
    kernel: &TruncationKernel,
    filter: &FilterConfig,
    delta: f64,
) -> Result<f64, MomentError> {
    let gamma = model
        .constant_jump_coef()
        .ok_or(MomentError::NonConstantGamma)?;
    if model.jumps().lambda == 0.0 || gamma == 0.0 {
        return Ok(0.0);
    }
    let rule = GaussLegendre::new(16);
    compute_jump_integrals(kernel, filter, model, gamma, delta, &rule, &QuadConfig::default())
        .map(|(_, j2)| j2)
}

/// Second-order mean `x + delta * bbar(mu, x) + J1`.
pub fn m_second_order(
    model: &ModelSpec,
    kernel: &TruncationKernel,
    filter: &FilterConfig,
    mu: f64,
    x: f64,
    delta: f64,
) -> Result<f64, MomentError> {
    let j1 = jump_integral_j1(model, kernel, filter, delta)?;
    Ok(x + delta * model.compensated_drift(mu, x) + j1)
}

/// Second-order variance `delta * a(sigma, x)^2 + J2`.
pub fn m2_second_order(
    model: &ModelSpec,
    kernel: &TruncationKernel,
    filter: &FilterConfig,
    sigma: f64,
    x: f64,
    delta: f64,
) -> Result<f64, MomentError> {
    let j2 = jump_integral_j2(model, kernel, filter, delta)?;
    let a = model.diffusion(sigma, x);
    Ok(delta * a * a + j2)
}

/// Iterated-generator coefficients at `x`:
/// `a1k = A_c^k(h1)(x)` for `h1(y) = y - x` and `a2k = A_c^k(h2c)(x)` for the
/// centered square `h2c(y) = (y - x)^2`, `k = 1, 2`.
fn generator_coeffs(
    model: &ModelSpec,
    mu: f64,
    sigma: f64,
    x: f64,
) -> Result<(f64, f64, f64, f64), MomentError> {
    let theta = (mu, sigma);
    let h1 = Polynomial::new(vec![-x, 1.0]);
    let g1 = apply_generator_c(model, theta, &h1)?;
    let a11 = g1.deriv(x, 0);
    let g1g = apply_generator_c(model, theta, &g1)?;
    let a12 = g1g.deriv(x, 0);
    let h2c = Polynomial::new(vec![x * x, -2.0 * x, 1.0]);
    let g2 = apply_generator_c(model, theta, &h2c)?;
    let a21 = g2.deriv(x, 0);
    let g2g = apply_generator_c(model, theta, &g2)?;
    let a22 = g2g.deriv(x, 0);
    Ok((a11, a12, a21, a22))
}

/// Order-2 generator expansion of the conditional mean:
/// `x + delta*A_c(h1)(x) + delta^2/2 * A_c^2(h1)(x)`.
pub fn m_generator2(
    model: &ModelSpec,
    mu: f64,
    sigma: f64,
    x: f64,
    delta: f64,
) -> Result<f64, MomentError> {
    let (a11, a12, _, _) = generator_coeffs(model, mu, sigma, x)?;
    Ok(x + delta * a11 + 0.5 * delta * delta * a12)
}

/// Order-2 generator expansion of the conditional variance. Assembled in the
/// centered form `sum_k A_c^k((y-x)^2) delta^k/k! - (m - x)^2`, which is
/// algebraically identical to expanding `E[y^2] - m^2` at the same order but
/// avoids the `x^2 - m^2` cancellation.
pub fn m2_generator2(
    model: &ModelSpec,
    mu: f64,
    sigma: f64,
    x: f64,
    delta: f64,
) -> Result<f64, MomentError> {
    let (a11, a12, a21, a22) = generator_coeffs(model, mu, sigma, x)?;
    let dm = delta * a11 + 0.5 * delta * delta * a12;
    Ok(delta * a21 + 0.5 * delta * delta * a22 - dm * dm)
}

/// Exact conditional mean of the compensated linear model:
/// `(x + (mu - gamma*lambda*mu_J)/theta1) e^(theta1*delta) - (mu - gamma*lambda*mu_J)/theta1`.
pub fn m_exact_ou(model: &ModelSpec, mu: f64, x: f64, delta: f64) -> Result<f64, MomentError> {
    let lin = model.linear_ou_coeffs().ok_or(MomentError::NotLinearOu)?;
    if !(lin.theta1 < 0.0) {
        return Err(MomentError::Theta1NotNegative(lin.theta1));
    }
    let (u, q, _) = ou_transition_coeffs(lin.theta1, delta);
    let cbar = mu - lin.gamma * model.jumps().compensator_mean();
    Ok(u * x + cbar * q)
}

/// Exact conditional variance `sigma^2 (e^(2 theta1 delta) - 1) / (2 theta1)`.
pub fn m2_exact_ou(model: &ModelSpec, sigma: f64, delta: f64) -> Result<f64, MomentError> {
    let lin = model.linear_ou_coeffs().ok_or(MomentError::NotLinearOu)?;
    if !(lin.theta1 < 0.0) {
        return Err(MomentError::Theta1NotNegative(lin.theta1));
    }
    let (_, _, g2) = ou_transition_coeffs(lin.theta1, delta);
    Ok(sigma * sigma * g2)
}
