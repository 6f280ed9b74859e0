//! Replicated simulate→estimate experiments and empirical diagnostics.
//!
//! Replication `r` draws its randomness from stream `r` of the experiment's
//! base seed, so runs are reproducible and independent of execution order;
//! aggregation walks the outcomes in replication order with a streaming
//! mean/variance, which keeps reports bit-identical for any worker count.

use crate::contrast::{
    estimate_generic, estimate_linear_closed_form, ClosedFormOptions, ContrastProblem, EstimError,
    GenericOptions,
};
use crate::kernels::{KernelError, TruncationKernel};
use crate::model::{ModelError, ModelSpec, ParameterBox};
use crate::moments::{FilterConfig, MomentApproximator, MomentError, QuadConfig, Variant};
use crate::simulate::{simulate_path, SamplingGrid, SimError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McError {
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("{failed} of {total} replications failed (> 10%); first failure: {first}")]
    TooManyFailures {
        failed: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Estim(#[from] EstimError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// The built-in linear model family as it appears in config files.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OuModelConfig {
    pub theta1: f64,
    pub theta2: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub lambda: f64,
    #[serde(rename = "mu_J")]
    pub mu_j: f64,
    #[serde(rename = "sigma_J")]
    pub sigma_j: f64,
}

impl OuModelConfig {
    pub fn build(&self) -> Result<ModelSpec, ModelError> {
        let law = crate::model::JumpLaw::gaussian(self.lambda, self.mu_j, self.sigma_j)?;
        Ok(ModelSpec::linear_ou(self.theta1, self.gamma, law))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum GridKind {
    #[default]
    Uniform,
    Irregular { ratio: f64 },
}

/// Truncation-kernel selection: `level = 0` is the plain cutoff, higher
/// levels need a dilation `scale > 1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub level: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
}

impl KernelSpec {
    pub fn build(&self) -> Result<TruncationKernel, McError> {
        if self.level == 0 {
            Ok(TruncationKernel::plain())
        } else {
            let scale = self.scale.ok_or_else(|| {
                McError::InvalidConfig("oscillating kernel needs a `scale` > 1".into())
            })?;
            Ok(TruncationKernel::oscillating(self.level, scale)?)
        }
    }
}

/// Filter in config form; omitting `c` disables the threshold entirely.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    #[serde(default = "default_k")]
    pub k: f64,
}

fn default_k() -> f64 {
    1.0
}

impl FilterSpec {
    pub fn build(&self) -> Result<FilterConfig, MomentError> {
        FilterConfig::new(self.beta, self.c.unwrap_or(f64::INFINITY), self.k)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorMode {
    /// Closed-form estimation for the linear family (optionally with the
    /// slope held fixed).
    ClosedForm {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        fix_theta1: Option<f64>,
    },
    /// Multi-start Nelder–Mead over the `(mu, sigma)` box.
    Generic,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: OuModelConfig,
    pub t_horizon: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub grid: GridKind,
    #[serde(default)]
    pub x0: f64,
    #[serde(default = "default_substeps")]
    pub substeps: u32,
    pub filter: FilterSpec,
    pub kernel: KernelSpec,
    pub variant: Variant,
    pub replications: usize,
    pub base_seed: u64,
    pub estimator: EstimatorMode,
    /// Parameter box; defaults to a generous window around the true values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pbox: Option<ParameterBox>,
}

fn default_substeps() -> u32 {
    10
}

impl ExperimentConfig {
    pub fn effective_box(&self) -> Result<ParameterBox, ModelError> {
        match self.pbox {
            Some(b) => Ok(b),
            None => ParameterBox::new(
                self.model.theta2 - 5.0,
                self.model.theta2 + 5.0,
                (self.model.sigma / 5.0).max(0.01),
                self.model.sigma * 4.0,
            ),
        }
    }

    pub fn build_grid(&self) -> Result<SamplingGrid, SimError> {
        match self.grid {
            GridKind::Uniform => SamplingGrid::uniform(self.t_horizon, self.n_steps),
            GridKind::Irregular { ratio } => {
                SamplingGrid::irregular(self.t_horizon, self.n_steps, ratio, self.base_seed)
            }
        }
    }
}

/// One replication's fitted values.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RepOutcome {
    pub replication: usize,
    pub theta1_hat: Option<f64>,
    pub theta2_hat: f64,
    pub sigma_hat: f64,
    pub sigma_sq_hat: f64,
    pub k11: f64,
    pub k22: f64,
    pub n_filtered: usize,
    pub n_state_truncated: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ParamStats {
    pub param: String,
    pub true_value: f64,
    pub mean: f64,
    pub std: f64,
    pub bias: f64,
    pub se_mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MCReport {
    pub params: Vec<ParamStats>,
    pub replications: usize,
    pub failures: usize,
    pub single_replication: bool,
    pub wall_secs: f64,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub reps: Vec<Option<RepOutcome>>,
}

/// Streaming mean/variance, accumulated in replication order.
#[derive(Debug, Clone, Copy, Default)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    fn std(&self) -> f64 {
        if self.count > 1 {
            (self.m2 / (self.count - 1) as f64).sqrt()
        } else {
            0.0
        }
    }
}

fn aggregate(
    name: &str,
    true_value: f64,
    values: impl Iterator<Item = f64>,
) -> Option<ParamStats> {
    let mut w = Welford::default();
    for v in values {
        w.push(v);
    }
    if w.count == 0 {
        return None;
    }
    let std = w.std();
    Some(ParamStats {
        param: name.to_string(),
        true_value,
        mean: w.mean,
        std,
        bias: w.mean - true_value,
        se_mean: std / (w.count as f64).sqrt(),
        count: w.count as usize,
    })
}

struct Arm<'a> {
    approx: &'a MomentApproximator,
    filter: FilterConfig,
    estimator: EstimatorMode,
    pbox: ParameterBox,
}

fn estimate_one(
    arm: &Arm<'_>,
    model: &ModelSpec,
    sample: &crate::simulate::PathSample,
    replication: usize,
) -> Result<RepOutcome, EstimError> {
    let problem = ContrastProblem::new(sample, model, arm.approx, arm.filter, arm.pbox)?;
    let res = match arm.estimator {
        EstimatorMode::ClosedForm { fix_theta1 } => {
            let opts = ClosedFormOptions {
                fix_theta1,
                ..Default::default()
            };
            estimate_linear_closed_form(&problem, &opts)?
        }
        EstimatorMode::Generic => estimate_generic(&problem, &GenericOptions::default())?,
    };
    Ok(RepOutcome {
        replication,
        theta1_hat: res.theta1_hat,
        theta2_hat: res.mu_hat,
        sigma_hat: res.sigma_hat,
        sigma_sq_hat: res.sigma_hat * res.sigma_hat,
        k11: res.k_hat[0][0],
        k22: res.k_hat[1][1],
        n_filtered: res.n_filtered,
        n_state_truncated: res.n_state_truncated,
        converged: res.converged,
    })
}

fn summarize(
    cfg: &ExperimentConfig,
    outcomes: Vec<(Option<RepOutcome>, Option<String>)>,
    wall_secs: f64,
) -> Result<MCReport, McError> {
    let total = outcomes.len();
    let mut reps: Vec<Option<RepOutcome>> = Vec::with_capacity(total);
    let mut failures = 0usize;
    let mut first_failure = None;
    for (out, err) in outcomes {
        match out {
            Some(o) if o.converged => reps.push(Some(o)),
            Some(_) => {
                failures += 1;
                first_failure.get_or_insert_with(|| "did not converge".to_string());
                reps.push(None);
            }
            None => {
                failures += 1;
                if let Some(e) = err {
                    first_failure.get_or_insert(e);
                }
                reps.push(None);
            }
        }
    }
    if failures * 10 > total {
        return Err(McError::TooManyFailures {
            failed: failures,
            total,
            first: first_failure.unwrap_or_default(),
        });
    }
    let ok = || reps.iter().flatten();
    let mut params = Vec::new();
    if ok().any(|o| o.theta1_hat.is_some()) {
        if let Some(s) = aggregate(
            "theta1",
            cfg.model.theta1,
            ok().filter_map(|o| o.theta1_hat),
        ) {
            params.push(s);
        }
    }
    for (name, truth, get) in [
        (
            "theta2",
            cfg.model.theta2,
            (|o: &RepOutcome| o.theta2_hat) as fn(&RepOutcome) -> f64,
        ),
        ("sigma", cfg.model.sigma, |o| o.sigma_hat),
        ("sigma_sq", cfg.model.sigma * cfg.model.sigma, |o| {
            o.sigma_sq_hat
        }),
    ] {
        if let Some(s) = aggregate(name, truth, ok().map(get)) {
            params.push(s);
        }
    }
    Ok(MCReport {
        params,
        replications: total,
        failures,
        single_replication: total == 1,
        wall_secs,
        config: cfg.clone(),
        reps,
    })
}

/// Run `replications` independent simulate→estimate cycles and aggregate
/// bias/std statistics. Aborts if more than 10% of the replications fail.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MCReport, McError> {
    if cfg.replications < 1 {
        return Err(McError::InvalidConfig("need at least 1 replication".into()));
    }
    let start = std::time::Instant::now();
    let model = cfg.model.build()?;
    let grid = cfg.build_grid()?;
    let kernel = cfg.kernel.build()?;
    let filter = cfg.filter.build()?;
    let pbox = cfg.effective_box()?;
    let approx = MomentApproximator::new(cfg.variant, kernel, QuadConfig::default());
    let arm = Arm {
        approx: &approx,
        filter,
        estimator: cfg.estimator,
        pbox,
    };
    let theta0 = (cfg.model.theta2, cfg.model.sigma);
    let outcomes: Vec<(Option<RepOutcome>, Option<String>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let sample = match simulate_path(
                &model,
                theta0,
                cfg.x0,
                &grid,
                cfg.substeps,
                cfg.base_seed,
                r as u64,
            ) {
                Ok(s) => s,
                Err(e) => return (None, Some(e.to_string())),
            };
            match estimate_one(&arm, &model, &sample, r) {
                Ok(o) => (Some(o), None),
                Err(e) => (None, Some(e.to_string())),
            }
        })
        .collect();
    summarize(cfg, outcomes, start.elapsed().as_secs_f64())
}

/// One estimator configuration inside a paired comparison.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EstimatorArm {
    pub label: String,
    pub variant: Variant,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterSpec>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PairedDiff {
    pub param: String,
    pub arm: String,
    pub baseline: String,
    pub mean_diff: f64,
    pub std_diff: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub arms: Vec<(String, MCReport)>,
    /// Per-parameter differences `arm - first arm` over shared paths.
    pub paired: Vec<PairedDiff>,
}

/// Estimate every arm on the same simulated paths (shared seeds), so arm
/// differences are paired and free of simulation noise.
pub fn compare_estimators(
    cfg: &ExperimentConfig,
    arms: &[EstimatorArm],
) -> Result<Comparison, McError> {
    if arms.len() < 2 {
        return Err(McError::InvalidConfig(
            "comparison needs at least two arms".into(),
        ));
    }
    let start = std::time::Instant::now();
    let model = cfg.model.build()?;
    let grid = cfg.build_grid()?;
    let pbox = cfg.effective_box()?;
    let theta0 = (cfg.model.theta2, cfg.model.sigma);

    let mut approxes = Vec::with_capacity(arms.len());
    let mut filters = Vec::with_capacity(arms.len());
    for arm in arms {
        let kernel = arm.kernel.unwrap_or(cfg.kernel).build()?;
        approxes.push(MomentApproximator::new(
            arm.variant,
            kernel,
            QuadConfig::default(),
        ));
        filters.push(arm.filter.unwrap_or(cfg.filter).build()?);
    }
    let arm_views: Vec<Arm<'_>> = approxes
        .iter()
        .zip(&filters)
        .map(|(approx, &filter)| Arm {
            approx,
            filter,
            estimator: cfg.estimator,
            pbox,
        })
        .collect();

    let per_rep: Vec<Vec<(Option<RepOutcome>, Option<String>)>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let sample = match simulate_path(
                &model,
                theta0,
                cfg.x0,
                &grid,
                cfg.substeps,
                cfg.base_seed,
                r as u64,
            ) {
                Ok(s) => s,
                Err(e) => {
                    return vec![(None, Some(e.to_string())); arms.len()];
                }
            };
            arm_views
                .iter()
                .map(|arm| match estimate_one(arm, &model, &sample, r) {
                    Ok(o) => (Some(o), None),
                    Err(e) => (None, Some(e.to_string())),
                })
                .collect()
        })
        .collect();

    let wall = start.elapsed().as_secs_f64();
    let mut out_arms = Vec::with_capacity(arms.len());
    for (ai, arm) in arms.iter().enumerate() {
        let outcomes: Vec<(Option<RepOutcome>, Option<String>)> =
            per_rep.iter().map(|row| row[ai].clone()).collect();
        let report = summarize(cfg, outcomes, wall)?;
        out_arms.push((arm.label.clone(), report));
    }

    // paired differences against the first arm, only on replications where
    // both arms succeeded
    let mut paired = Vec::new();
    let baseline = &out_arms[0].1;
    for (ai, arm) in arms.iter().enumerate().skip(1) {
        let report = &out_arms[ai].1;
        for (name, get) in [
            (
                "theta2",
                (|o: &RepOutcome| o.theta2_hat) as fn(&RepOutcome) -> f64,
            ),
            ("sigma", |o| o.sigma_hat),
            ("sigma_sq", |o| o.sigma_sq_hat),
        ] {
            let mut w = Welford::default();
            for (a, b) in report.reps.iter().zip(&baseline.reps) {
                if let (Some(a), Some(b)) = (a, b) {
                    w.push(get(a) - get(b));
                }
            }
            if w.count > 0 {
                paired.push(PairedDiff {
                    param: name.to_string(),
                    arm: arm.label.clone(),
                    baseline: arms[0].label.clone(),
                    mean_diff: w.mean,
                    std_diff: w.std(),
                    count: w.count as usize,
                });
            }
        }
    }
    Ok(Comparison {
        arms: out_arms,
        paired,
    })
}

/// Empirical check of the filtered one-step second moment: for each step
/// size, Monte Carlo estimate of `E[(X_d - m(theta0, x, d))^2 * phi^2]` from
/// `m_reps` one-step simulations started at `x`, then a log-log fit of the
/// level against the step.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSlopeReport {
    pub per_delta: Vec<(f64, f64)>,
    pub slope: f64,
    /// Geometric mean of `E / delta`, the fitted leading coefficient.
    pub coefficient: f64,
    pub ratio_to_a_squared: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn check_conditional_moment(
    model: &ModelSpec,
    theta0: (f64, f64),
    x: f64,
    filter: &FilterConfig,
    kernel: &TruncationKernel,
    deltas: &[f64],
    m_reps: usize,
    base_seed: u64,
) -> Result<MomentSlopeReport, McError> {
    if deltas.is_empty() || m_reps == 0 {
        return Err(McError::InvalidConfig(
            "need at least one delta and one replication".into(),
        ));
    }
    let (mu0, sigma0) = theta0;
    let use_exact = model
        .linear_ou_coeffs()
        .map(|l| l.theta1 < 0.0)
        .unwrap_or(false);
    let mut per_delta = Vec::with_capacity(deltas.len());
    for (di, &delta) in deltas.iter().enumerate() {
        let grid = SamplingGrid::uniform(delta, 1)?;
        let m_ref = if use_exact {
            crate::moments::m_exact_ou(model, mu0, x, delta)?
        } else {
            crate::moments::m_generator2(model, mu0, sigma0, x, delta)?
        };
        let thr = filter.threshold(delta);
        let acc: f64 = (0..m_reps)
            .into_par_iter()
            .map(|r| {
                let stream = (di * m_reps + r) as u64;
                let s = simulate_path(model, theta0, x, &grid, 10, base_seed, stream)
                    .expect("one-step simulation");
                let xd = s.values[1];
                let w = if thr.is_finite() {
                    kernel.eval((xd - x) / thr)
                } else {
                    1.0
                };
                (xd - m_ref).powi(2) * w * w
            })
            .sum();
        per_delta.push((delta, acc / m_reps as f64));
    }
    let n = per_delta.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy, mut slog) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(d, e) in &per_delta {
        let (lx, ly) = (d.ln(), e.ln());
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        slog += (e / d).ln();
    }
    let slope = if per_delta.len() > 1 {
        (n * sxy - sx * sy) / (n * sxx - sx * sx)
    } else {
        f64::NAN
    };
    let coefficient = (slog / n).exp();
    let a0 = model.diffusion(sigma0, x);
    Ok(MomentSlopeReport {
        per_delta,
        slope,
        coefficient,
        ratio_to_a_squared: coefficient / (a0 * a0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterRateArm {
    /// Fraction of weights below one on jump-free paths.
    FalsePositive,
    /// Fraction of increments containing a recorded jump larger than four
    /// thresholds whose weight is exactly zero.
    Detection,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub arm: FilterRateArm,
    pub fraction: f64,
    pub events: usize,
    pub total: usize,
}

#[allow(clippy::too_many_arguments)]
pub fn check_filter_rate(
    model: &ModelSpec,
    theta0: (f64, f64),
    t_horizon: f64,
    n_steps: usize,
    filter: &FilterConfig,
    kernel: &TruncationKernel,
    n_paths: usize,
    base_seed: u64,
    arm: FilterRateArm,
) -> Result<RateReport, McError> {
    let grid = SamplingGrid::uniform(t_horizon, n_steps)?;
    let lambda = model.jumps().lambda;
    match arm {
        FilterRateArm::FalsePositive if lambda > 0.0 => {
            return Err(McError::InvalidConfig(
                "false-positive arm needs lambda = 0".into(),
            ));
        }
        FilterRateArm::Detection if lambda == 0.0 => {
            return Err(McError::InvalidConfig(
                "detection arm needs lambda > 0".into(),
            ));
        }
        _ => {}
    }
    let results: Vec<(usize, usize)> = (0..n_paths)
        .into_par_iter()
        .map(|r| {
            let s = simulate_path(model, theta0, 0.0, &grid, 10, base_seed, r as u64)
                .expect("diagnostic simulation");
            let times = s.grid.times();
            match arm {
                FilterRateArm::FalsePositive => {
                    let mut hits = 0;
                    for i in 0..s.grid.n_increments() {
                        let incr = s.values[i + 1] - s.values[i];
                        if crate::contrast::weight(incr, filter, s.grid.delta(i), kernel) < 1.0 {
                            hits += 1;
                        }
                    }
                    (hits, s.grid.n_increments())
                }
                FilterRateArm::Detection => {
                    let mut detected = 0;
                    let mut big = 0;
                    for (&tj, &sz) in s.jump_times.iter().zip(&s.jump_sizes) {
                        let i = match times
                            .binary_search_by(|t| t.partial_cmp(&tj).unwrap())
                        {
                            Ok(i) => i,
                            Err(i) => i - 1,
                        };
                        if i >= s.grid.n_increments() {
                            continue;
                        }
                        let d = s.grid.delta(i);
                        if sz.abs() > 4.0 * filter.threshold(d) {
                            big += 1;
                            let incr = s.values[i + 1] - s.values[i];
                            if crate::contrast::weight(incr, filter, d, kernel) == 0.0 {
                                detected += 1;
                            }
                        }
                    }
                    (detected, big)
                }
            }
        })
        .collect();
    let events: usize = results.iter().map(|r| r.0).sum();
    let total: usize = results.iter().map(|r| r.1).sum();
    Ok(RateReport {
        arm,
        fraction: if total > 0 {
            events as f64 / total as f64
        } else {
            0.0
        },
        events,
        total,
    })
}

/// CSV form of one or more labelled reports:
/// `variant,param,true_value,mean,std,bias,se_mean,M,failures`.
pub fn reports_to_csv(reports: &[(String, &MCReport)]) -> String {
    let mut out = String::from("variant,param,true_value,mean,std,bias,se_mean,M,failures\n");
    for (label, rep) in reports {
        for p in &rep.params {
            out.push_str(&format!(
                "{label},{},{},{},{},{},{},{},{}\n",
                p.param, p.true_value, p.mean, p.std, p.bias, p.se_mean, rep.replications,
                rep.failures
            ));
        }
    }
    out
}

/// Aligned text table in `Mean (std)` layout, one row per estimator.
pub fn reports_to_text(reports: &[(String, &MCReport)]) -> String {
    let mut params: Vec<String> = Vec::new();
    for (_, rep) in reports {
        for p in &rep.params {
            if !params.contains(&p.param) {
                params.push(p.param.clone());
            }
        }
    }
    let mut out = String::new();
    out.push_str(&format!("{:<24}", ""));
    if let Some((_, first)) = reports.first() {
        for name in &params {
            let truth = first
                .params
                .iter()
                .find(|p| &p.param == name)
                .map(|p| p.true_value)
                .unwrap_or(f64::NAN);
            out.push_str(&format!("{:>24}", format!("{name} = {truth}")));
        }
    }
    out.push('\n');
    for (label, rep) in reports {
        out.push_str(&format!("{label:<24}"));
        for name in &params {
            match rep.params.iter().find(|p| &p.param == name) {
                Some(p) => out.push_str(&format!(
                    "{:>24}",
                    format!("{:.5} ({:.5})", p.mean, p.std)
                )),
                None => out.push_str(&format!("{:>24}", "-")),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            model: OuModelConfig {
                theta1: -1.0,
                theta2: 2.0,
                sigma: 0.5,
                gamma: 1.0,
                lambda: 0.0,
                mu_j: 0.0,
                sigma_j: 1.0,
            },
            t_horizon: 50.0,
            n_steps: 1000,
            grid: GridKind::Uniform,
            x0: 2.0,
            substeps: 1,
            filter: FilterSpec {
                beta: 0.49,
                c: None,
                k: 1.0,
            },
            kernel: KernelSpec {
                level: 0,
                scale: None,
            },
            variant: Variant::ExactOu,
            replications: 8,
            base_seed: 4242,
            estimator: EstimatorMode::ClosedForm { fix_theta1: None },
            pbox: None,
        }
    }

    #[test]
    fn deterministic_reports() {
        let cfg = small_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.failures, b.failures);
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let cfg = small_config();
        let pool1 = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let pool2 = rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap();
        let a = pool1.install(|| run_experiment(&cfg)).unwrap();
        let b = pool2.install(|| run_experiment(&cfg)).unwrap();
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn identical_arms_have_zero_paired_diffs() {
        let cfg = small_config();
        let arms = vec![
            EstimatorArm {
                label: "a".into(),
                variant: Variant::ExactOu,
                kernel: None,
                filter: None,
            },
            EstimatorArm {
                label: "b".into(),
                variant: Variant::ExactOu,
                kernel: None,
                filter: None,
            },
        ];
        let cmp = compare_estimators(&cfg, &arms).unwrap();
        assert_eq!(cmp.arms[0].1.params, cmp.arms[1].1.params);
        for d in &cmp.paired {
            assert_eq!(d.mean_diff, 0.0);
            assert_eq!(d.std_diff, 0.0);
        }
    }

    #[test]
    fn single_replication_flagged() {
        let mut cfg = small_config();
        cfg.replications = 1;
        let rep = run_experiment(&cfg).unwrap();
        assert!(rep.single_replication);
        for p in &rep.params {
            assert_eq!(p.std, 0.0);
        }
    }

    #[test]
    fn pervasive_failures_abort() {
        let mut cfg = small_config();
        // exact-OU closed form rejects a non-negative slope in every
        // replication, tripping the 10% failure guard
        cfg.model.theta1 = 0.5;
        cfg.model.theta2 = 0.0;
        cfg.x0 = 0.0;
        cfg.t_horizon = 2.0;
        cfg.n_steps = 50;
        assert!(matches!(
            run_experiment(&cfg),
            Err(McError::TooManyFailures { .. })
        ));
    }

    #[test]
    fn csv_has_expected_shape() {
        let cfg = small_config();
        let rep = run_experiment(&cfg).unwrap();
        let csv = reports_to_csv(&[("exact-ou".to_string(), &rep)]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "variant,param,true_value,mean,std,bias,se_mean,M,failures"
        );
        // theta1, theta2, sigma, sigma_sq
        assert_eq!(csv.lines().count(), 5);
        let text = reports_to_text(&[("exact-ou".to_string(), &rep)]);
        assert!(text.contains("exact-ou"));
        assert!(text.contains('('));
    }

    #[test]
    fn conditional_moment_zero_for_deterministic_path() {
        // a = 0 and lambda = 0: the one-step law is a point mass
        let model = ModelSpec::linear_ou(
            -1.0,
            0.0,
            crate::model::JumpLaw::gaussian(0.0, 0.0, 1.0).unwrap(),
        );
        let filter = FilterConfig::unfiltered();
        let kernel = TruncationKernel::plain();
        let report = check_conditional_moment(
            &model,
            (2.0, 0.0),
            0.5,
            &filter,
            &kernel,
            &[0.25, 0.125],
            200,
            7,
        )
        .unwrap();
        for &(_, e) in &report.per_delta {
            assert!(e < 1e-25, "deterministic path should have ~0 moment, got {e}");
        }
    }

    #[test]
    fn unfiltered_moment_inflated_by_jumps() {
        // lambda large and no filter: the one-step second moment picks up the
        // jump variance lambda * E[z^2] * delta on top of a^2 delta
        let model = ModelSpec::linear_ou(
            -1.0,
            1.0,
            crate::model::JumpLaw::gaussian(10.0, 0.0, 1.0).unwrap(),
        );
        let kernel = TruncationKernel::plain();
        let deltas = [1.0 / 64.0, 1.0 / 128.0];
        let unfiltered = check_conditional_moment(
            &model,
            (2.0, 0.5),
            0.0,
            &FilterConfig::unfiltered(),
            &kernel,
            &deltas,
            20_000,
            11,
        )
        .unwrap();
        assert!(
            unfiltered.ratio_to_a_squared > 10.0,
            "expected inflation, ratio = {}",
            unfiltered.ratio_to_a_squared
        );
        let filtered = check_conditional_moment(
            &model,
            (2.0, 0.5),
            0.0,
            &FilterConfig::new(0.49, 2.0, 1.0).unwrap(),
            &kernel,
            &deltas,
            20_000,
            11,
        )
        .unwrap();
        assert!(
            filtered.ratio_to_a_squared < 1.5,
            "filtered ratio = {}",
            filtered.ratio_to_a_squared
        );
    }

    #[test]
    fn filter_rates() {
        let no_jumps = ModelSpec::linear_ou(
            -1.0,
            1.0,
            crate::model::JumpLaw::gaussian(0.0, 0.0, 1.0).unwrap(),
        );
        let filter = FilterConfig::new(0.49, 2.0, 1.0).unwrap();
        let kernel = TruncationKernel::plain();
        let fp = check_filter_rate(
            &no_jumps,
            (2.0, 0.5),
            10.0,
            5000,
            &filter,
            &kernel,
            4,
            3,
            FilterRateArm::FalsePositive,
        )
        .unwrap();
        assert!(fp.fraction < 1e-3, "false-positive rate {}", fp.fraction);

        // infinite threshold: no weight ever drops below one
        let fp_inf = check_filter_rate(
            &no_jumps,
            (2.0, 0.5),
            10.0,
            1000,
            &FilterConfig::unfiltered(),
            &kernel,
            2,
            3,
            FilterRateArm::FalsePositive,
        )
        .unwrap();
        assert_eq!(fp_inf.fraction, 0.0);

        let jumpy = ModelSpec::linear_ou(
            -1.0,
            1.0,
            crate::model::JumpLaw::gaussian(10.0, 0.0, 1.0).unwrap(),
        );
        let det = check_filter_rate(
            &jumpy,
            (2.0, 0.5),
            20.0,
            100_000,
            &filter,
            &kernel,
            2,
            3,
            FilterRateArm::Detection,
        )
        .unwrap();
        assert!(det.total > 100);
        assert!(det.fraction >= 0.99, "detection rate {}", det.fraction);
    }

    #[test]
    fn arm_mismatch_rejected() {
        let cfg = small_config();
        assert!(matches!(
            compare_estimators(&cfg, &[]),
            Err(McError::InvalidConfig(_))
        ));
    }
}
