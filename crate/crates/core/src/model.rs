//! Parametric jump-diffusion model declaration.
//!
//! A [`ModelSpec`] bundles the drift `b(mu, x)`, diffusion `a(sigma, x)` and
//! jump coefficient `gamma(x)` together with their spatial/parameter
//! derivatives and the jump law `F = lambda * F0`. Derivatives are explicit
//! callbacks rather than automatic differentiation: the coefficient families
//! used in practice are polynomial or constant, so the callbacks are exact and
//! keep the core dependency-free.
//!
//! The compensated drift is `bbar(mu, x) = b(mu, x) - gamma(x) * lambda * mu_J`
//! and the continuous part of the generator acts as
//! `A_c(f) = bbar * f' + a^2/2 * f''`; iterating it on test functions yields
//! the conditional-moment expansions in [`crate::moments`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameter box: {0}")]
    InvalidParameterBox(String),
    #[error("invalid jump law: {0}")]
    InvalidJumpLaw(String),
    #[error("model lacks derivative callback `{0}`")]
    MissingDerivative(&'static str),
    #[error("non-degeneracy probe failed: {0}")]
    NonDegeneracyViolated(String),
    #[error("mean-reversion probe failed: {0}")]
    ErgodicityProbeFailed(String),
    #[error("jump coefficient below declared minimum: {0}")]
    GammaBelowMinimum(String),
}

/// Compact rectangle `[mu_lo, mu_hi] x [sigma_lo, sigma_hi]` over which the
/// contrast is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    pub mu_lo: f64,
    pub mu_hi: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl ParameterBox {
    pub fn new(mu_lo: f64, mu_hi: f64, sigma_lo: f64, sigma_hi: f64) -> Result<Self, ModelError> {
        if !(mu_lo < mu_hi) {
            return Err(ModelError::InvalidParameterBox(format!(
                "mu_lo {mu_lo} must be < mu_hi {mu_hi}"
            )));
        }
        if !(0.0 < sigma_lo && sigma_lo < sigma_hi) {
            return Err(ModelError::InvalidParameterBox(format!(
                "need 0 < sigma_lo < sigma_hi, got [{sigma_lo}, {sigma_hi}]"
            )));
        }
        Ok(Self {
            mu_lo,
            mu_hi,
            sigma_lo,
            sigma_hi,
        })
    }

    pub fn contains(&self, mu: f64, sigma: f64) -> bool {
        mu >= self.mu_lo && mu <= self.mu_hi && sigma >= self.sigma_lo && sigma <= self.sigma_hi
    }

    pub fn clamp(&self, mu: f64, sigma: f64) -> (f64, f64) {
        (
            mu.clamp(self.mu_lo, self.mu_hi),
            sigma.clamp(self.sigma_lo, self.sigma_hi),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpFamily {
    Gaussian,
}

/// Finite-activity jump law `F(dz) = lambda * F0(z) dz` with `F0` a probability
/// density. `lambda = 0` encodes the pure-diffusion model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JumpLaw {
    pub lambda: f64,
    pub mu_j: f64,
    pub sigma_j: f64,
    pub family: JumpFamily,
}

impl JumpLaw {
    pub fn gaussian(lambda: f64, mu_j: f64, sigma_j: f64) -> Result<Self, ModelError> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(ModelError::InvalidJumpLaw(format!(
                "intensity must be finite and >= 0, got {lambda}"
            )));
        }
        if !(sigma_j > 0.0) {
            return Err(ModelError::InvalidJumpLaw(format!(
                "jump-size std must be > 0, got {sigma_j}"
            )));
        }
        Ok(Self {
            lambda,
            mu_j,
            sigma_j,
            family: JumpFamily::Gaussian,
        })
    }

    /// Density of `F0`.
    pub fn f0_density(&self, z: f64) -> f64 {
        let u = (z - self.mu_j) / self.sigma_j;
        (-0.5 * u * u).exp() / (self.sigma_j * (2.0 * std::f64::consts::PI).sqrt())
    }

    /// Density of the Lévy measure `F = lambda * F0`.
    pub fn levy_density(&self, z: f64) -> f64 {
        self.lambda * self.f0_density(z)
    }

    /// `∫ z F(dz) = lambda * mu_J`, the drift compensation per unit jump
    /// coefficient (closed form for the Gaussian family).
    pub fn compensator_mean(&self) -> f64 {
        self.lambda * self.mu_j
    }
}

type CoefFn = Box<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type SpaceFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// Structural description of the linear family `b = theta1*x + mu`,
/// `a = sigma`, constant jump coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearOu {
    pub theta1: f64,
    pub gamma: f64,
}

/// Coefficient functions of the SDE plus the jump law. Immutable after
/// construction; safe to share across threads.
pub struct ModelSpec {
    drift: CoefFn,
    drift_x: Option<CoefFn>,
    drift_xx: Option<CoefFn>,
    drift_mu: Option<CoefFn>,
    diffusion: CoefFn,
    diffusion_x: Option<CoefFn>,
    diffusion_xx: Option<CoefFn>,
    diffusion_sigma: Option<CoefFn>,
    jump_coef: SpaceFn,
    jump_coef_x: Option<SpaceFn>,
    jump_coef_xx: Option<SpaceFn>,
    constant_jump_coef: Option<f64>,
    jumps: JumpLaw,
    linear_ou: Option<LinearOu>,
    gamma_min: f64,
}

impl std::fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelSpec")
            .field("jumps", &self.jumps)
            .field("linear_ou", &self.linear_ou)
            .field("constant_jump_coef", &self.constant_jump_coef)
            .field("gamma_min", &self.gamma_min)
            .finish_non_exhaustive()
    }
}

impl ModelSpec {
    /// The built-in linear family `dX = (theta1*X + mu) dt + sigma dW + jumps`,
    /// with constant jump coefficient `gamma`. The free drift parameter `mu`
    /// plays the role of the affine coefficient; `theta1` is structural.
    pub fn linear_ou(theta1: f64, gamma: f64, jumps: JumpLaw) -> Self {
        Self {
            drift: Box::new(move |mu, x| theta1 * x + mu),
            drift_x: Some(Box::new(move |_, _| theta1)),
            drift_xx: Some(Box::new(|_, _| 0.0)),
            drift_mu: Some(Box::new(|_, _| 1.0)),
            diffusion: Box::new(|sigma, _| sigma),
            diffusion_x: Some(Box::new(|_, _| 0.0)),
            diffusion_xx: Some(Box::new(|_, _| 0.0)),
            diffusion_sigma: Some(Box::new(|_, _| 1.0)),
            jump_coef: Box::new(move |_| gamma),
            jump_coef_x: Some(Box::new(|_| 0.0)),
            jump_coef_xx: Some(Box::new(|_| 0.0)),
            constant_jump_coef: Some(gamma),
            jumps,
            linear_ou: Some(LinearOu { theta1, gamma }),
            gamma_min: gamma.abs(),
        }
    }

    /// General model from explicit callbacks. `gamma_min` is the declared
    /// lower bound on `|gamma(x)|`, checked at the probe points by
    /// [`ModelSpec::validate`] when the intensity is positive.
    #[allow(clippy::too_many_arguments)]
    pub fn from_callbacks(
        drift: CoefFn,
        drift_x: Option<CoefFn>,
        drift_xx: Option<CoefFn>,
        drift_mu: Option<CoefFn>,
        diffusion: CoefFn,
        diffusion_x: Option<CoefFn>,
        diffusion_xx: Option<CoefFn>,
        diffusion_sigma: Option<CoefFn>,
        jump_coef: SpaceFn,
        jump_coef_x: Option<SpaceFn>,
        constant_jump_coef: Option<f64>,
        jumps: JumpLaw,
        gamma_min: f64,
    ) -> Self {
        let jump_coef_xx = constant_jump_coef.map(|_| -> SpaceFn { Box::new(|_| 0.0) });
        Self {
            drift,
            drift_x,
            drift_xx,
            drift_mu,
            diffusion,
            diffusion_x,
            diffusion_xx,
            diffusion_sigma,
            jump_coef,
            jump_coef_x,
            jump_coef_xx,
            constant_jump_coef,
            jumps,
            linear_ou: None,
            gamma_min,
        }
    }

    pub fn jumps(&self) -> &JumpLaw {
        &self.jumps
    }

    pub fn linear_ou_coeffs(&self) -> Option<LinearOu> {
        self.linear_ou
    }

    pub fn is_linear_ou(&self) -> bool {
        self.linear_ou.is_some()
    }

    pub fn constant_jump_coef(&self) -> Option<f64> {
        self.constant_jump_coef
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    pub fn drift(&self, mu: f64, x: f64) -> f64 {
        (self.drift)(mu, x)
    }

    pub fn diffusion(&self, sigma: f64, x: f64) -> f64 {
        (self.diffusion)(sigma, x)
    }

    pub fn jump_coef(&self, x: f64) -> f64 {
        (self.jump_coef)(x)
    }

    pub fn drift_x(&self, mu: f64, x: f64) -> Result<f64, ModelError> {
        self.drift_x
            .as_ref()
            .map(|f| f(mu, x))
            .ok_or(ModelError::MissingDerivative("drift_x"))
    }

    pub fn drift_xx(&self, mu: f64, x: f64) -> Result<f64, ModelError> {
        self.drift_xx
            .as_ref()
            .map(|f| f(mu, x))
            .ok_or(ModelError::MissingDerivative("drift_xx"))
    }

    pub fn drift_mu(&self, mu: f64, x: f64) -> Result<f64, ModelError> {
        self.drift_mu
            .as_ref()
            .map(|f| f(mu, x))
            .ok_or(ModelError::MissingDerivative("drift_mu"))
    }

    pub fn diffusion_x(&self, sigma: f64, x: f64) -> Result<f64, ModelError> {
        self.diffusion_x
            .as_ref()
            .map(|f| f(sigma, x))
            .ok_or(ModelError::MissingDerivative("diffusion_x"))
    }

    pub fn diffusion_xx(&self, sigma: f64, x: f64) -> Result<f64, ModelError> {
        self.diffusion_xx
            .as_ref()
            .map(|f| f(sigma, x))
            .ok_or(ModelError::MissingDerivative("diffusion_xx"))
    }

    pub fn diffusion_sigma(&self, sigma: f64, x: f64) -> Result<f64, ModelError> {
        self.diffusion_sigma
            .as_ref()
            .map(|f| f(sigma, x))
            .ok_or(ModelError::MissingDerivative("diffusion_sigma"))
    }

    pub fn jump_coef_x(&self, x: f64) -> Result<f64, ModelError> {
        self.jump_coef_x
            .as_ref()
            .map(|f| f(x))
            .ok_or(ModelError::MissingDerivative("jump_coef_x"))
    }

    pub fn jump_coef_xx(&self, x: f64) -> Result<f64, ModelError> {
        self.jump_coef_xx
            .as_ref()
            .map(|f| f(x))
            .ok_or(ModelError::MissingDerivative("jump_coef_xx"))
    }

    /// Compensated drift `bbar(mu, x) = b(mu, x) - gamma(x) * lambda * mu_J`.
    pub fn compensated_drift(&self, mu: f64, x: f64) -> f64 {
        self.drift(mu, x) - self.jump_coef(x) * self.jumps.compensator_mean()
    }

    pub(crate) fn compensated_drift_x(&self, mu: f64, x: f64) -> Result<f64, ModelError> {
        let comp = self.jumps.compensator_mean();
        let g = if comp == 0.0 {
            0.0
        } else {
            self.jump_coef_x(x)?
        };
        Ok(self.drift_x(mu, x)? - g * comp)
    }

    pub(crate) fn compensated_drift_xx(&self, mu: f64, x: f64) -> Result<f64, ModelError> {
        let comp = self.jumps.compensator_mean();
        let g = if comp == 0.0 {
            0.0
        } else {
            self.jump_coef_xx(x)?
        };
        Ok(self.drift_xx(mu, x)? - g * comp)
    }

    /// Sampled sanity checks of the standing assumptions: non-degenerate
    /// diffusion, jump coefficient above the declared minimum (when jumps are
    /// active), and drift mean-reversion at large `|x|`. These are probes,
    /// not proofs.
    pub fn validate(&self, pbox: &ParameterBox) -> Result<(), ModelError> {
        let xs = [
            0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 5.0, -5.0, 10.0, -10.0, 100.0, -100.0, 1000.0,
            -1000.0,
        ];
        let sigmas = [
            pbox.sigma_lo,
            0.5 * (pbox.sigma_lo + pbox.sigma_hi),
            pbox.sigma_hi,
        ];
        for &s in &sigmas {
            for &x in &xs {
                let a2 = self.diffusion(s, x).powi(2);
                if !(a2 > 0.0) || !a2.is_finite() {
                    return Err(ModelError::NonDegeneracyViolated(format!(
                        "a({s}, {x})^2 = {a2}"
                    )));
                }
            }
        }
        if self.jumps.lambda > 0.0 {
            for &x in &xs {
                let g = self.jump_coef(x).abs();
                if g < self.gamma_min {
                    return Err(ModelError::GammaBelowMinimum(format!(
                        "|gamma({x})| = {g} < {}",
                        self.gamma_min
                    )));
                }
            }
        }
        let mus = [pbox.mu_lo, 0.5 * (pbox.mu_lo + pbox.mu_hi), pbox.mu_hi];
        for &mu in &mus {
            for &x in &[10.0, -10.0, 100.0, -100.0, 1000.0, -1000.0] {
                let xb = x * self.drift(mu, x);
                if !(xb < 0.0) {
                    return Err(ModelError::ErgodicityProbeFailed(format!(
                        "x*b(mu={mu}, x={x}) = {xb} >= 0"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A function with derivatives available up to a stated order, the currency
/// of the generator machinery.
pub trait SmoothFn {
    /// `order`-th derivative at `x`; valid for `order <= self.orders()`.
    fn deriv(&self, x: f64, order: u32) -> f64;
    /// Highest derivative order this function can supply.
    fn orders(&self) -> u32;
}

/// Polynomial in the monomial basis, supplying derivatives of every order.
#[derive(Debug, Clone)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        Self { coeffs }
    }
}

impl SmoothFn for Polynomial {
    fn deriv(&self, x: f64, order: u32) -> f64 {
        let k = order as usize;
        if k >= self.coeffs.len() {
            return 0.0;
        }
        // Horner evaluation of the k-th derivative
        let mut acc = 0.0;
        for j in (k..self.coeffs.len()).rev() {
            let mut fall = 1.0;
            for i in 0..k {
                fall *= (j - i) as f64;
            }
            acc = acc * x + self.coeffs[j] * fall;
        }
        acc
    }

    fn orders(&self) -> u32 {
        u32::MAX
    }
}

/// Image of `f` under the continuous generator
/// `A_c(f) = bbar f' + a^2/2 f''` at a fixed parameter point. Supplies its own
/// derivatives up to `f.orders() - 2`, which is what permits one further
/// generator application.
pub struct GeneratorImage<'a, F: SmoothFn + ?Sized> {
    model: &'a ModelSpec,
    mu: f64,
    sigma: f64,
    inner: &'a F,
}

impl<F: SmoothFn + ?Sized> SmoothFn for GeneratorImage<'_, F> {
    fn deriv(&self, x: f64, order: u32) -> f64 {
        let m = self.model;
        let (mu, s) = (self.mu, self.sigma);
        let f = |k: u32| self.inner.deriv(x, k);
        let bb = m.compensated_drift(mu, x);
        let a = m.diffusion(s, x);
        match order {
            0 => bb * f(1) + 0.5 * a * a * f(2),
            1 => {
                let bb1 = m.compensated_drift_x(mu, x).expect("checked at apply");
                let a1 = m.diffusion_x(s, x).expect("checked at apply");
                bb1 * f(1) + bb * f(2) + a * a1 * f(2) + 0.5 * a * a * f(3)
            }
            2 => {
                let bb1 = m.compensated_drift_x(mu, x).expect("checked at apply");
                let bb2 = m.compensated_drift_xx(mu, x).expect("checked at apply");
                let a1 = m.diffusion_x(s, x).expect("checked at apply");
                let a2 = m.diffusion_xx(s, x).expect("checked at apply");
                bb2 * f(1)
                    + 2.0 * bb1 * f(2)
                    + bb * f(3)
                    + (a1 * a1 + a * a2) * f(2)
                    + 2.0 * a * a1 * f(3)
                    + 0.5 * a * a * f(4)
            }
            _ => panic!("GeneratorImage supplies derivatives up to order 2"),
        }
    }

    fn orders(&self) -> u32 {
        self.inner.orders().saturating_sub(2).min(2)
    }
}

/// Apply the continuous generator to `f` at parameters `theta = (mu, sigma)`.
///
/// Fails if the model lacks the derivative callbacks required to assemble the
/// image's own derivatives (needed for a second application).
pub fn apply_generator_c<'a, F: SmoothFn + ?Sized>(
    model: &'a ModelSpec,
    theta: (f64, f64),
    f: &'a F,
) -> Result<GeneratorImage<'a, F>, ModelError> {
    let (mu, sigma) = theta;
    // probe once so missing callbacks surface here instead of mid-evaluation
    model.drift_x(mu, 0.0)?;
    model.drift_xx(mu, 0.0)?;
    model.diffusion_x(sigma, 0.0)?;
    model.diffusion_xx(sigma, 0.0)?;
    if model.jumps.compensator_mean() != 0.0 {
        model.jump_coef_x(0.0)?;
        model.jump_coef_xx(0.0)?;
    }
    Ok(GeneratorImage {
        model,
        mu,
        sigma,
        inner: f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ou_with_jumps() -> ModelSpec {
        // theta1 = -1, gamma = 1, lambda = 1, jump law N(4, 4^2 is not used; std)
        ModelSpec::linear_ou(-1.0, 1.0, JumpLaw::gaussian(1.0, 4.0, 0.5).unwrap())
    }

    #[test]
    fn compensated_drift_linear_example() {
        let m = ou_with_jumps();
        // b(2, 0) = 2, compensator = 1 * 1 * 4
        assert_eq!(m.compensated_drift(2.0, 0.0), -2.0);
    }

    #[test]
    fn compensated_drift_no_jumps() {
        let m = ModelSpec::linear_ou(-1.0, 1.0, JumpLaw::gaussian(0.0, 4.0, 0.5).unwrap());
        for x in [-3.0, 0.0, 1.7] {
            assert_eq!(m.compensated_drift(2.0, x), m.drift(2.0, x));
        }
    }

    #[test]
    fn compensated_drift_centered_jumps() {
        let m = ModelSpec::linear_ou(-1.0, 0.0, JumpLaw::gaussian(1.0, 0.0, 1.0).unwrap());
        // theta2 = 0, x = 3: b = -3, centered jumps leave it unchanged
        assert_eq!(m.compensated_drift(0.0, 3.0), -3.0);
    }

    #[test]
    fn generator_on_h1_gives_compensated_drift() {
        let m = ou_with_jumps();
        let x0 = 0.7;
        let h1 = Polynomial::new(vec![-x0, 1.0]);
        let img = apply_generator_c(&m, (2.0, 0.5), &h1).unwrap();
        assert!((img.deriv(x0, 0) - m.compensated_drift(2.0, x0)).abs() < 1e-15);
    }

    #[test]
    fn generator_on_square() {
        let m = ou_with_jumps();
        let h2 = Polynomial::new(vec![0.0, 0.0, 1.0]);
        let (mu, sigma) = (2.0, 0.5);
        let img = apply_generator_c(&m, (mu, sigma), &h2).unwrap();
        for x in [-1.0, 0.0, 2.5] {
            let expected = 2.0 * x * m.compensated_drift(mu, x) + sigma * sigma;
            assert!((img.deriv(x, 0) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_on_constant_is_zero() {
        let m = ou_with_jumps();
        let c = Polynomial::new(vec![3.5]);
        let img = apply_generator_c(&m, (2.0, 0.5), &c).unwrap();
        for x in [-2.0, 0.0, 1.0] {
            assert_eq!(img.deriv(x, 0), 0.0);
        }
    }

    #[test]
    fn double_application_on_h1_matches_analytic() {
        // for the linear model bbar' = theta1 and bbar'' = 0, so
        // A_c^2(h1)(x) = bbar(x) * theta1 exactly
        let m = ou_with_jumps();
        let (mu, sigma) = (2.0, 0.5);
        let x0 = -0.3;
        let h1 = Polynomial::new(vec![-x0, 1.0]);
        let img1 = apply_generator_c(&m, (mu, sigma), &h1).unwrap();
        let img2 = apply_generator_c(&m, (mu, sigma), &img1).unwrap();
        let expected = m.compensated_drift(mu, x0) * (-1.0);
        assert!((img2.deriv(x0, 0) - expected).abs() < 1e-14);
    }

    #[test]
    fn missing_derivatives_rejected() {
        let m = ModelSpec::from_callbacks(
            Box::new(|mu, x| -mu * x),
            None,
            None,
            None,
            Box::new(|s, _| s),
            None,
            None,
            None,
            Box::new(|_| 1.0),
            None,
            Some(1.0),
            JumpLaw::gaussian(0.0, 0.0, 1.0).unwrap(),
            1.0,
        );
        let h1 = Polynomial::new(vec![0.0, 1.0]);
        assert!(matches!(
            apply_generator_c(&m, (1.0, 0.5), &h1),
            Err(ModelError::MissingDerivative(_))
        ));
    }

    #[test]
    fn validate_accepts_ou_and_rejects_degenerate() {
        let pbox = ParameterBox::new(0.0, 4.0, 0.1, 2.0).unwrap();
        assert!(ou_with_jumps().validate(&pbox).is_ok());

        // zero diffusion fails non-degeneracy
        let bad = ModelSpec::from_callbacks(
            Box::new(|mu, x| -x + mu - mu),
            Some(Box::new(|_, _| -1.0)),
            Some(Box::new(|_, _| 0.0)),
            Some(Box::new(|_, _| 0.0)),
            Box::new(|_, _| 0.0),
            None,
            None,
            None,
            Box::new(|_| 1.0),
            None,
            Some(1.0),
            JumpLaw::gaussian(0.0, 0.0, 1.0).unwrap(),
            1.0,
        );
        assert!(matches!(
            bad.validate(&pbox),
            Err(ModelError::NonDegeneracyViolated(_))
        ));
    }

    #[test]
    fn parameter_box_invariants() {
        assert!(ParameterBox::new(1.0, 0.0, 0.1, 1.0).is_err());
        assert!(ParameterBox::new(0.0, 1.0, 0.0, 1.0).is_err());
        assert!(ParameterBox::new(0.0, 1.0, 0.5, 0.4).is_err());
        assert!(ParameterBox::new(-1.0, 1.0, 0.1, 2.0).is_ok());
    }

    #[test]
    fn jump_law_density_normalized() {
        let law = JumpLaw::gaussian(2.0, 4.0, 0.5).unwrap();
        let rule = crate::quad::GaussLegendre::new(16);
        let mass = rule.integrate_composite(-2.0, 10.0, 64, &|z| law.f0_density(z));
        assert!((mass - 1.0).abs() < 1e-10);
        assert!(JumpLaw::gaussian(-0.5, 0.0, 1.0).is_err());
        assert!(JumpLaw::gaussian(1.0, 0.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn generator_is_linear(
            a0 in -2.0f64..2.0, a1 in -2.0f64..2.0, a2 in -2.0f64..2.0,
            b0 in -2.0f64..2.0, b1 in -2.0f64..2.0, b3 in -1.0f64..1.0,
            alpha in -3.0f64..3.0, beta in -3.0f64..3.0,
            x in -2.0f64..2.0,
        ) {
            let m = ou_with_jumps();
            let theta = (2.0, 0.5);
            let f = Polynomial::new(vec![a0, a1, a2]);
            let g = Polynomial::new(vec![b0, b1, 0.0, b3]);
            let combo = Polynomial::new(vec![
                alpha * a0 + beta * b0,
                alpha * a1 + beta * b1,
                alpha * a2,
                beta * b3,
            ]);
            let lf = apply_generator_c(&m, theta, &f).unwrap().deriv(x, 0);
            let lg = apply_generator_c(&m, theta, &g).unwrap().deriv(x, 0);
            let lc = apply_generator_c(&m, theta, &combo).unwrap().deriv(x, 0);
            prop_assert!((lc - (alpha * lf + beta * lg)).abs() < 1e-9);
        }

        #[test]
        fn zero_intensity_compensator_vanishes(x in -5.0f64..5.0, mu in -3.0f64..3.0) {
            let m = ModelSpec::linear_ou(-0.7, 2.0, JumpLaw::gaussian(0.0, 3.0, 1.0).unwrap());
            prop_assert_eq!(m.compensated_drift(mu, x), m.drift(mu, x));
        }
    }
}
