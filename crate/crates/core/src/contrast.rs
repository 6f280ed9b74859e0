//! The jump-filtered quasi-likelihood contrast and its minimizers.
//!
//! `U(mu, sigma) = sum_i [ (X_{i+1} - m_i)^2 / m2_i + log(m2_i / delta_i) ]
//!                 * phi(dX_i / (c delta_i^beta)) * 1{|X_i| <= delta_i^(-k)}`
//!
//! Two estimation routes are provided. [`estimate_generic`] minimizes the
//! contrast over the `(mu, sigma)` box with multi-start Nelder–Mead and works
//! for every model/approximator pairing. [`estimate_linear_closed_form`]
//! exploits the linear-model structure: the stationarity conditions in
//! `theta1`, `theta2` and `sigma^2` are explicit ratios for the Euler and
//! second-order approximations, and for the exact-OU moments on a uniform
//! grid the whole contrast reduces to a weighted linear regression in the
//! transition parameters, so the joint minimizer is available in one pass.

use crate::kernels::TruncationKernel;
use crate::model::{ModelError, ModelSpec, ParameterBox};
use crate::moments::{FilterConfig, MomentApproximator, MomentError, Variant};
use crate::optim::{nelder_mead_box, NmOptions};
use crate::simulate::PathSample;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EstimError {
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("closed-form estimator requires a linear model")]
    NotLinearOu,
    #[error("unsupported variant for this estimator: {0}")]
    UnsupportedVariant(String),
    #[error("drift parameter unidentifiable: all dbda/dmu vanish on the sample")]
    UnidentifiableDrift,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
}

/// Fitted parameters with filter statistics and the estimated asymptotic
/// covariance of `(sqrt(T)(mu - mu0), sqrt(n)(sigma - sigma0))`.
#[derive(Debug, Clone, Serialize)]
pub struct EstimationResult {
    pub mu_hat: f64,
    pub sigma_hat: f64,
    /// Present when the closed-form path estimated the linear slope as well.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta1_hat: Option<f64>,
    #[serde(rename = "contrast")]
    pub contrast_value: f64,
    pub n_filtered: usize,
    pub n_state_truncated: usize,
    pub iterations: usize,
    pub converged: bool,
    #[serde(rename = "K_hat")]
    pub k_hat: [[f64; 2]; 2],
    pub seed: u64,
}

/// Threshold weight `phi(increment / (c delta^beta))`. An infinite threshold
/// disables filtering (weight 1).
pub fn weight(
    increment: f64,
    filter: &FilterConfig,
    delta: f64,
    kernel: &TruncationKernel,
) -> f64 {
    let thr = filter.threshold(delta);
    if !thr.is_finite() {
        return 1.0;
    }
    kernel.eval(increment / thr)
}

/// A dataset bound to a model, approximator, filter and parameter box, with
/// the parameter-independent parts of the contrast precomputed.
pub struct ContrastProblem<'a> {
    pub data: &'a PathSample,
    pub model: &'a ModelSpec,
    pub approx: &'a MomentApproximator,
    pub filter: FilterConfig,
    pub pbox: ParameterBox,
    /// Kernel weight times state indicator, per increment.
    eff_w: Vec<f64>,
    n_filtered: usize,
    n_state_truncated: usize,
}

impl<'a> ContrastProblem<'a> {
    pub fn new(
        data: &'a PathSample,
        model: &'a ModelSpec,
        approx: &'a MomentApproximator,
        filter: FilterConfig,
        pbox: ParameterBox,
    ) -> Result<Self, EstimError> {
        let n = data.grid.n_increments();
        if n == 0 {
            return Err(EstimError::DegenerateData("no increments".into()));
        }
        let mut eff_w = Vec::with_capacity(n);
        let mut n_filtered = 0;
        let mut n_state_truncated = 0;
        let mut any_active = false;
        for i in 0..n {
            let delta = data.grid.delta(i);
            let incr = data.values[i + 1] - data.values[i];
            let w = weight(incr, &filter, delta, &approx.kernel);
            if w < 1.0 {
                n_filtered += 1;
            }
            let ok = data.values[i].abs() <= filter.state_bound(delta);
            if !ok {
                n_state_truncated += 1;
            }
            let we = if ok { w } else { 0.0 };
            if we != 0.0 {
                any_active = true;
            }
            eff_w.push(we);
        }
        if !any_active {
            return Err(EstimError::DegenerateData(
                "every increment has weight zero".into(),
            ));
        }
        // surface approximator/model mismatches (wrong variant, bad filter)
        // here rather than as +inf during optimization
        approx.prepare(model, &filter, 0.5 * (pbox.mu_lo + pbox.mu_hi), pbox.sigma_lo, data.grid.delta(0))?;
        Ok(Self {
            data,
            model,
            approx,
            filter,
            pbox,
            eff_w,
            n_filtered,
            n_state_truncated,
        })
    }

    pub fn n_filtered(&self) -> usize {
        self.n_filtered
    }

    pub fn n_state_truncated(&self) -> usize {
        self.n_state_truncated
    }

    pub fn effective_weights(&self) -> &[f64] {
        &self.eff_w
    }
}

/// Evaluate the contrast at `(mu, sigma)`. Returns `+inf` when some
/// contributing `m2` is non-positive (infeasible parameter point).
pub fn evaluate_contrast(p: &ContrastProblem<'_>, mu: f64, sigma: f64) -> f64 {
    let grid = &p.data.grid;
    let values = &p.data.values;
    let n = grid.n_increments();
    let mut acc = 0.0;
    if grid.is_uniform() {
        let delta = grid.delta(0);
        let prep = match p.approx.prepare(p.model, &p.filter, mu, sigma, delta) {
            Ok(prep) => prep,
            Err(_) => return f64::INFINITY,
        };
        for i in 0..n {
            let w = p.eff_w[i];
            if w == 0.0 {
                continue;
            }
            let (m, m2) = match prep.moments_at(values[i]) {
                Ok(v) => v,
                Err(_) => return f64::INFINITY,
            };
            if !(m2 > 0.0) {
                return f64::INFINITY;
            }
            let r = values[i + 1] - m;
            acc += (r * r / m2 + (m2 / delta).ln()) * w;
        }
    } else {
        for i in 0..n {
            let w = p.eff_w[i];
            if w == 0.0 {
                continue;
            }
            let delta = grid.delta(i);
            let prep = match p.approx.prepare(p.model, &p.filter, mu, sigma, delta) {
                Ok(prep) => prep,
                Err(_) => return f64::INFINITY,
            };
            let (m, m2) = match prep.moments_at(values[i]) {
                Ok(v) => v,
                Err(_) => return f64::INFINITY,
            };
            if !(m2 > 0.0) {
                return f64::INFINITY;
            }
            let r = values[i + 1] - m;
            acc += (r * r / m2 + (m2 / delta).ln()) * w;
        }
    }
    acc
}

#[derive(Debug, Clone, Copy, Default)]
pub struct GenericOptions {
    pub nm: NmOptions,
}

/// Minimize the contrast over the box by Nelder–Mead from a 3x3 grid of
/// starting points, keeping the best run.
pub fn estimate_generic(
    p: &ContrastProblem<'_>,
    opts: &GenericOptions,
) -> Result<EstimationResult, EstimError> {
    let lo = [p.pbox.mu_lo, p.pbox.sigma_lo];
    let hi = [p.pbox.mu_hi, p.pbox.sigma_hi];
    let mut best: Option<crate::optim::NmOutcome> = None;
    let mut total_iters = 0usize;
    for fi in 0..3 {
        for fj in 0..3 {
            let frac = |k: usize| [1.0 / 6.0, 0.5, 5.0 / 6.0][k];
            let start = [
                lo[0] + frac(fi) * (hi[0] - lo[0]),
                lo[1] + frac(fj) * (hi[1] - lo[1]),
            ];
            let out = nelder_mead_box(
                |mu, sigma| evaluate_contrast(p, mu, sigma),
                lo,
                hi,
                start,
                &opts.nm,
            );
            total_iters += out.iters;
            let better = match &best {
                None => true,
                Some(b) => out.fx < b.fx,
            };
            if better {
                best = Some(out);
            }
        }
    }
    let best = best.expect("at least one start");
    let (mu_hat, sigma_hat) = (best.x[0], best.x[1]);
    if !best.fx.is_finite() {
        return Err(EstimError::DegenerateData(
            "contrast not finite anywhere in the box".into(),
        ));
    }
    let k_hat = estimate_asymptotic_covariance(p, mu_hat, sigma_hat)?;
    Ok(EstimationResult {
        mu_hat,
        sigma_hat,
        theta1_hat: None,
        contrast_value: best.fx,
        n_filtered: p.n_filtered,
        n_state_truncated: p.n_state_truncated,
        iterations: total_iters,
        converged: best.converged,
        k_hat,
        seed: p.data.seed,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct ClosedFormOptions {
    /// Hold the linear slope fixed at this value instead of estimating it.
    pub fix_theta1: Option<f64>,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for ClosedFormOptions {
    fn default() -> Self {
        Self {
            fix_theta1: None,
            max_sweeps: 100,
            tol: 1e-10,
        }
    }
}

const SIGMA_SQ_FLOOR: f64 = 1e-12;

/// Closed-form estimation for linear models.
///
/// Euler / second-order approximations: cyclic updates of the explicit
/// stationarity ratios for `theta1 | theta2`, `theta2 | theta1` and
/// `sigma^2 | (theta1, theta2)`, initialized at the joint weighted regression
/// of the jump-corrected increments, iterated until the largest parameter
/// change drops below `tol`.
///
/// Exact-OU approximation (uniform grids): the contrast is exactly a weighted
/// Gaussian regression in `(e^(theta1 delta), intercept, variance)`, so the
/// minimizer is computed by weighted least squares and mapped back.
pub fn estimate_linear_closed_form(
    p: &ContrastProblem<'_>,
    opts: &ClosedFormOptions,
) -> Result<EstimationResult, EstimError> {
    let lin = p.model.linear_ou_coeffs().ok_or(EstimError::NotLinearOu)?;
    let kappa = lin.gamma * p.model.jumps().compensator_mean();
    match p.approx.variant {
        Variant::Euler | Variant::SecondOrder => closed_form_polynomial(p, opts, kappa),
        Variant::ExactOu => closed_form_exact_ou(p, opts, kappa),
        Variant::GeneratorOrder2 => Err(EstimError::UnsupportedVariant(
            "generator2 has no closed-form stationarity ratios; use the generic estimator".into(),
        )),
    }
}

fn closed_form_polynomial(
    p: &ContrastProblem<'_>,
    opts: &ClosedFormOptions,
    kappa: f64,
) -> Result<EstimationResult, EstimError> {
    let grid = &p.data.grid;
    let x = &p.data.values;
    let n = grid.n_increments();
    let second_order = p.approx.variant == Variant::SecondOrder;
    let gamma = p
        .model
        .constant_jump_coef()
        .ok_or(MomentError::NonConstantGamma)?;

    // per-increment jump corrections (zero for the Euler variant)
    let mut j1 = vec![0.0; n];
    let mut j2 = vec![0.0; n];
    if second_order && p.model.jumps().lambda > 0.0 && gamma != 0.0 {
        for i in 0..n {
            let (a, b) = p
                .approx
                .jump_integrals(p.model, &p.filter, gamma, grid.delta(i))?;
            j1[i] = a;
            j2[i] = b;
        }
    }

    // z_i = dX_i + delta_i * kappa - J1_i, so the model reads
    // z_i ~ theta1 * delta_i * x_i + theta2 * delta_i + noise
    let mut s_zx = 0.0;
    let mut s_z = 0.0;
    let mut s_dxx = 0.0;
    let mut s_dx = 0.0;
    let mut s_d = 0.0;
    for i in 0..n {
        let w = p.eff_w[i];
        if w == 0.0 {
            continue;
        }
        let d = grid.delta(i);
        let z = x[i + 1] - x[i] + d * kappa - j1[i];
        s_zx += w * z * x[i];
        s_z += w * z;
        s_dxx += w * d * x[i] * x[i];
        s_dx += w * d * x[i];
        s_d += w * d;
    }
    if s_d.abs() < f64::MIN_POSITIVE {
        return Err(EstimError::DegenerateData(
            "zero denominator: sum of delta * weights".into(),
        ));
    }

    let (mut theta1, mut theta2);
    match opts.fix_theta1 {
        Some(t1) => {
            theta1 = t1;
            theta2 = (s_z - t1 * s_dx) / s_d;
        }
        None => {
            let det = s_dxx * s_d - s_dx * s_dx;
            if det.abs() <= 1e-14 * (s_dxx * s_d).abs().max(f64::MIN_POSITIVE) {
                return Err(EstimError::DegenerateData(
                    "singular regression system for (theta1, theta2)".into(),
                ));
            }
            theta1 = (s_zx * s_d - s_z * s_dx) / det;
            theta2 = (s_dxx * s_z - s_dx * s_zx) / det;
        }
    }

    let sigma_sq_update = |t1: f64, t2: f64| -> Result<f64, EstimError> {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..n {
            let w = p.eff_w[i];
            if w == 0.0 {
                continue;
            }
            let d = grid.delta(i);
            let m = x[i] + d * (t1 * x[i] + t2 - kappa) + j1[i];
            let r = x[i + 1] - m;
            num += w * (r * r * d - d * j2[i]);
            den += w * d * d;
        }
        if den.abs() < f64::MIN_POSITIVE {
            return Err(EstimError::DegenerateData(
                "zero denominator: sum of delta^2 * weights".into(),
            ));
        }
        Ok(num / den)
    };
    let mut sigma_sq = sigma_sq_update(theta1, theta2)?;

    let mut sweeps = 0usize;
    let mut converged = false;
    while sweeps < opts.max_sweeps {
        sweeps += 1;
        let (t1_old, t2_old, ss_old) = (theta1, theta2, sigma_sq);
        if opts.fix_theta1.is_none() {
            if s_dxx.abs() < f64::MIN_POSITIVE {
                return Err(EstimError::DegenerateData(
                    "zero denominator: sum of delta * x^2 * weights".into(),
                ));
            }
            theta1 = (s_zx - theta2 * s_dx) / s_dxx;
        }
        theta2 = (s_z - theta1 * s_dx) / s_d;
        sigma_sq = sigma_sq_update(theta1, theta2)?;
        let change = (theta1 - t1_old)
            .abs()
            .max((theta2 - t2_old).abs())
            .max((sigma_sq - ss_old).abs());
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let sigma_hat = sigma_sq.max(SIGMA_SQ_FLOOR).sqrt();
    finish_closed_form(
        p,
        opts,
        kappa,
        theta1,
        theta2,
        sigma_hat,
        &j1,
        &j2,
        sweeps,
        converged,
    )
}

fn closed_form_exact_ou(
    p: &ContrastProblem<'_>,
    opts: &ClosedFormOptions,
    kappa: f64,
) -> Result<EstimationResult, EstimError> {
    let grid = &p.data.grid;
    if !grid.is_uniform() {
        return Err(EstimError::UnsupportedVariant(
            "exact-ou closed form is implemented for uniform grids; use the generic estimator"
                .into(),
        ));
    }
    let delta = grid.delta(0);
    let x = &p.data.values;
    let n = grid.n_increments();

    let mut s_w = 0.0;
    let mut s_x = 0.0;
    let mut s_y = 0.0;
    let mut s_xx = 0.0;
    let mut s_xy = 0.0;
    for i in 0..n {
        let w = p.eff_w[i];
        if w == 0.0 {
            continue;
        }
        s_w += w;
        s_x += w * x[i];
        s_y += w * x[i + 1];
        s_xx += w * x[i] * x[i];
        s_xy += w * x[i] * x[i + 1];
    }
    if s_w <= 0.0 {
        return Err(EstimError::DegenerateData(
            "non-positive total weight".into(),
        ));
    }

    let (theta1, u, intercept) = match opts.fix_theta1 {
        Some(t1) => {
            if !(t1 < 0.0) {
                return Err(EstimError::DegenerateData(format!(
                    "fixed theta1 must be negative, got {t1}"
                )));
            }
            let u = (t1 * delta).exp();
            // regress (y - u x) on the constant q = (u - 1)/theta1
            let q = (u - 1.0) / t1;
            let c = (s_y - u * s_x) / s_w;
            let theta2 = kappa + c / q;
            (t1, u, (theta2 - kappa) * q)
        }
        None => {
            let det = s_w * s_xx - s_x * s_x;
            if det.abs() <= 1e-14 * (s_w * s_xx).abs().max(f64::MIN_POSITIVE) {
                return Err(EstimError::DegenerateData(
                    "singular regression system for the transition slope".into(),
                ));
            }
            let u = (s_w * s_xy - s_x * s_y) / det;
            if !(u > 0.0 && u < 1.0) {
                return Err(EstimError::DegenerateData(format!(
                    "fitted transition slope {u} outside (0, 1); no ergodic theta1 matches"
                )));
            }
            let intercept = (s_y - u * s_x) / s_w;
            (u.ln() / delta, u, intercept)
        }
    };

    let theta2 = match opts.fix_theta1 {
        Some(_) => kappa + intercept * theta1 / (u - 1.0),
        None => kappa - theta1 * intercept / (1.0 - u),
    };

    let mut rss = 0.0;
    for i in 0..n {
        let w = p.eff_w[i];
        if w == 0.0 {
            continue;
        }
        let r = x[i + 1] - u * x[i] - intercept;
        rss += w * r * r;
    }
    let v = rss / s_w;
    let g2 = (u * u - 1.0) / (2.0 * theta1);
    if !(g2 > 0.0) {
        return Err(EstimError::DegenerateData(
            "non-positive variance scale in the exact transition".into(),
        ));
    }
    let sigma_hat = (v / g2).max(SIGMA_SQ_FLOOR).sqrt();

    finish_closed_form(
        p,
        opts,
        kappa,
        theta1,
        theta2,
        sigma_hat,
        &[],
        &[],
        1,
        true,
    )
}

#[allow(clippy::too_many_arguments)]
fn finish_closed_form(
    p: &ContrastProblem<'_>,
    opts: &ClosedFormOptions,
    kappa: f64,
    theta1: f64,
    theta2: f64,
    sigma_hat: f64,
    j1: &[f64],
    j2: &[f64],
    iterations: usize,
    converged: bool,
) -> Result<EstimationResult, EstimError> {
    let grid = &p.data.grid;
    let x = &p.data.values;
    let n = grid.n_increments();

    // contrast value at the fitted point, with the fitted slope
    let exact = p.approx.variant == Variant::ExactOu;
    let mut contrast = 0.0;
    let (u, q, g2) = crate::simulate::ou_transition_coeffs(theta1, grid.delta(0));
    for i in 0..n {
        let w = p.eff_w[i];
        if w == 0.0 {
            continue;
        }
        let d = grid.delta(i);
        let (m, m2) = if exact {
            (
                u * x[i] + (theta2 - kappa) * q,
                sigma_hat * sigma_hat * g2,
            )
        } else {
            (
                x[i] + d * (theta1 * x[i] + theta2 - kappa) + j1.get(i).copied().unwrap_or(0.0),
                sigma_hat * sigma_hat * d + j2.get(i).copied().unwrap_or(0.0),
            )
        };
        if m2 > 0.0 {
            let r = x[i + 1] - m;
            contrast += (r * r / m2 + (m2 / d).ln()) * w;
        }
    }

    let inside = p.pbox.contains(theta2, sigma_hat);
    let (mu_hat, sigma_hat) = p.pbox.clamp(theta2, sigma_hat);
    let k_hat = estimate_asymptotic_covariance(p, mu_hat, sigma_hat)?;
    Ok(EstimationResult {
        mu_hat,
        sigma_hat,
        theta1_hat: opts.fix_theta1.is_none().then_some(theta1),
        contrast_value: contrast,
        n_filtered: p.n_filtered,
        n_state_truncated: p.n_state_truncated,
        iterations,
        converged: converged && inside,
        k_hat,
        seed: p.data.seed,
    })
}

/// Estimated asymptotic covariance: the invariant-measure integrals behind
/// the limiting normal law replaced by time averages over the observed
/// states,
/// `K11 = [ (1/n) sum (d_mu b / a)^2 ]^(-1)` and
/// `K22 = [ 2 (1/n) sum (d_sigma a / a)^2 ]^(-1)`; off-diagonals vanish.
pub fn estimate_asymptotic_covariance(
    p: &ContrastProblem<'_>,
    mu_hat: f64,
    sigma_hat: f64,
) -> Result<[[f64; 2]; 2], EstimError> {
    let n = p.data.grid.n_increments();
    let mut s_mu = 0.0;
    let mut s_sigma = 0.0;
    for i in 0..n {
        let xi = p.data.values[i];
        let a = p.model.diffusion(sigma_hat, xi);
        let db = p.model.drift_mu(mu_hat, xi)?;
        let da = p.model.diffusion_sigma(sigma_hat, xi)?;
        s_mu += (db / a).powi(2);
        s_sigma += (da / a).powi(2);
    }
    s_mu /= n as f64;
    s_sigma /= n as f64;
    if s_mu <= 0.0 {
        return Err(EstimError::UnidentifiableDrift);
    }
    if s_sigma <= 0.0 {
        return Err(EstimError::DegenerateData(
            "volatility parameter unidentifiable: all da/dsigma vanish".into(),
        ));
    }
    Ok([[1.0 / s_mu, 0.0], [0.0, 1.0 / (2.0 * s_sigma)]])
}
