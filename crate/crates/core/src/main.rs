//! Command-line entry point. All numerics live in the library; this binary
//! only binds JSON configs to library calls and maps errors to exit codes:
//! 0 success, 1 failed check, 2 config error, 3 simulation failure,
//! 4 estimation degeneracy.

use clap::{Parser, Subcommand};
use jdcontrast::config::{
    self, CompareConfig, ConfigError, DiagnoseConfig, DiagnoseMode, EstimateConfig, EstimateMode,
    KernelCheckConfig, McConfig, SimulateConfig,
};
use jdcontrast::contrast::{
    estimate_generic, estimate_linear_closed_form, evaluate_contrast, ClosedFormOptions,
    ContrastProblem, EstimError, GenericOptions,
};
use jdcontrast::mc::{self, McError};
use jdcontrast::model::ModelError;
use jdcontrast::moments::{MomentApproximator, MomentError, QuadConfig};
use jdcontrast::simulate::{simulate_path, PathSample, SamplingGrid, SimError};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "jdcontrast", version, about = "Simulate jump-diffusion paths and estimate drift/volatility by a jump-filtered quasi-likelihood contrast")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Override the seed in the config file (echoed in all outputs).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the Monte Carlo harness (output is independent of
    /// this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate one path and write `path.csv`, `jumps.csv`, `metadata.json`.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate parameters from a path CSV (or evaluate the contrast).
    Estimate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Replicated simulate→estimate experiment with a bias/std table.
    Mc {
        #[arg(long)]
        config: PathBuf,
    },
    /// Paired comparison of several estimator arms on shared paths.
    Compare {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the kernel moment table and certify vanishing moments.
    KernelCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Conditional-moment and filter-rate diagnostics.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Check(String),
    Config(String),
    Simulation(String),
    Estimation(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Check(m)
            | CliError::Config(m)
            | CliError::Simulation(m)
            | CliError::Estimation(m) => m,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Explosion { .. } => CliError::Simulation(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<MomentError> for CliError {
    fn from(e: MomentError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EstimError> for CliError {
    fn from(e: EstimError) -> Self {
        match e {
            EstimError::DegenerateData(_) | EstimError::UnidentifiableDrift => {
                CliError::Estimation(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<McError> for CliError {
    fn from(e: McError) -> Self {
        match e {
            McError::TooManyFailures { .. } => CliError::Estimation(e.to_string()),
            McError::Sim(s) => s.into(),
            McError::Estim(s) => s.into(),
            _ => CliError::Config(e.to_string()),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)
                .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::Config(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(cli_dir: &Option<PathBuf>, cfg_dir: &Option<PathBuf>) -> PathBuf {
    cli_dir
        .clone()
        .or_else(|| cfg_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

fn cmd_simulate(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let model = cfg.model.build()?;
    let grid = match cfg.grid {
        mc::GridKind::Uniform => SamplingGrid::uniform(cfg.t_horizon, cfg.n_steps)?,
        mc::GridKind::Irregular { ratio } => {
            SamplingGrid::irregular(cfg.t_horizon, cfg.n_steps, ratio, cfg.seed)?
        }
    };
    let sample = simulate_path(
        &model,
        (cfg.model.theta2, cfg.model.sigma),
        cfg.x0,
        &grid,
        cfg.substeps,
        cfg.seed,
        0,
    )?;
    let dir = out_dir(&cli.output_dir, &cfg.output_dir);

    let mut path_csv = String::from("t,x\n");
    for (t, x) in grid.times().iter().zip(&sample.values) {
        path_csv.push_str(&format!("{t},{x}\n"));
    }
    write_file(&dir.join("path.csv"), &path_csv)?;

    let mut jumps_csv = String::from("jump_time,jump_size\n");
    for (t, s) in sample.jump_times.iter().zip(&sample.jump_sizes) {
        jumps_csv.push_str(&format!("{t},{s}\n"));
    }
    write_file(&dir.join("jumps.csv"), &jumps_csv)?;

    let meta = serde_json::json!({
        "schema": config::SCHEMA_VERSION,
        "model": cfg.model,
        "t_horizon": cfg.t_horizon,
        "n_steps": cfg.n_steps,
        "x0": cfg.x0,
        "substeps": cfg.substeps,
        "seed": cfg.seed,
        "delta_max": grid.delta_max(),
        "delta_min": grid.delta_min(),
        "n_jumps": sample.jump_times.len(),
    });
    write_file(
        &dir.join("metadata.json"),
        &serde_json::to_string_pretty(&meta).expect("serializable"),
    )?;
    println!(
        "wrote path.csv ({} points), jumps.csv ({} jumps) to {}",
        sample.values.len(),
        sample.jump_times.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_estimate(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let mut cfg: EstimateConfig = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let model = cfg.model.build()?;
    let (times, values) = config::read_path_csv(&cfg.input_csv)?;
    if times.len() < 2 {
        return Err(CliError::Estimation(format!(
            "input `{}` holds {} observations; need at least two",
            cfg.input_csv.display(),
            times.len()
        )));
    }
    let grid = SamplingGrid::from_times(times)?;
    let sample = PathSample {
        grid,
        values,
        jump_times: Vec::new(),
        jump_sizes: Vec::new(),
        seed: cfg.seed,
        stream: 0,
    };
    let kernel = cfg.kernel.build()?;
    let filter = cfg.filter.build()?;
    let approx = MomentApproximator::new(cfg.variant, kernel, QuadConfig::default());
    let problem = ContrastProblem::new(&sample, &model, &approx, filter, cfg.pbox)?;

    let result_json = match cfg.estimator {
        EstimateMode::Eval { theta } => {
            let (mu, sigma) = (theta[0], theta[1]);
            if !cfg.pbox.contains(mu, sigma) {
                return Err(CliError::Config(format!(
                    "evaluation point ({mu}, {sigma}) lies outside the parameter box"
                )));
            }
            let value = evaluate_contrast(&problem, mu, sigma);
            serde_json::json!({ "mu": mu, "sigma": sigma, "contrast": value, "seed": cfg.seed })
        }
        EstimateMode::Generic => {
            let res = estimate_generic(&problem, &GenericOptions::default())?;
            serde_json::to_value(&res).expect("serializable")
        }
        EstimateMode::ClosedForm { fix_theta1 } => {
            let opts = ClosedFormOptions {
                fix_theta1,
                ..Default::default()
            };
            let res = estimate_linear_closed_form(&problem, &opts)?;
            serde_json::to_value(&res).expect("serializable")
        }
    };
    let text = serde_json::to_string_pretty(&result_json).expect("serializable");
    match &cfg.output {
        Some(out) => write_file(out, &text)?,
        None => println!("{text}"),
    }
    Ok(())
}

fn cmd_mc(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let mut cfg: McConfig = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.base_seed = seed;
    }
    if let Some(pbox) = cfg.experiment.pbox {
        cfg.experiment.model.build()?.validate(&pbox)?;
    }
    let report = mc::run_experiment(&cfg.experiment)?;
    let dir = out_dir(&cli.output_dir, &cfg.output_dir);
    let label = format!("{:?}", cfg.experiment.variant).to_lowercase();
    let labelled = [(label, &report)];
    write_file(&dir.join("mc_report.csv"), &mc::reports_to_csv(&labelled))?;
    let text = mc::reports_to_text(&labelled);
    write_file(&dir.join("mc_report.txt"), &text)?;
    write_file(
        &dir.join("mc_report.json"),
        &serde_json::to_string_pretty(&report).expect("serializable"),
    )?;
    print!("{text}");
    println!(
        "{} replications, {} failures, {:.1}s",
        report.replications, report.failures, report.wall_secs
    );
    Ok(())
}

fn cmd_compare(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let mut cfg: CompareConfig = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.experiment.base_seed = seed;
    }
    let cmp = mc::compare_estimators(&cfg.experiment, &cfg.arms)?;
    let dir = out_dir(&cli.output_dir, &cfg.output_dir);
    let labelled: Vec<(String, &mc::MCReport)> = cmp
        .arms
        .iter()
        .map(|(label, rep)| (label.clone(), rep))
        .collect();
    write_file(&dir.join("compare.csv"), &mc::reports_to_csv(&labelled))?;
    let text = mc::reports_to_text(&labelled);
    write_file(&dir.join("compare.txt"), &text)?;
    write_file(
        &dir.join("compare_paired.json"),
        &serde_json::to_string_pretty(&cmp.paired).expect("serializable"),
    )?;
    print!("{text}");
    Ok(())
}

fn cmd_kernel_check(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let cfg: KernelCheckConfig = config::load(path)?;
    let kernel = cfg.kernel.build()?;
    let orders: Vec<u32> = match &cfg.moments {
        Some(m) => m.clone(),
        None => (0..=kernel.level()).skip(if kernel.level() == 0 { 1 } else { 0 }).collect(),
    };
    let r = kernel.support_radius();
    println!("kernel level {} scale {} support [{:.3}, {:.3}]", kernel.level(), kernel.scale(), -r, r);
    println!("{:>3} {:>24} {:>12} {:>6}", "k", "moment", "tolerance", "pass");
    let mut all_ok = true;
    for &k in &orders {
        let m = kernel.moment(k, cfg.panels);
        let tol = cfg.tolerance_scale * r.powi(k as i32 + 1);
        let ok = m.abs() <= tol;
        all_ok &= ok;
        println!("{k:>3} {m:>24.16e} {tol:>12.3e} {:>6}", if ok { "yes" } else { "NO" });
    }
    if let Some(plot) = &cfg.plot {
        let mut csv = String::from("x,phi\n");
        for (x, y) in kernel.plot_data(plot.n_points) {
            csv.push_str(&format!("{x},{y}\n"));
        }
        let out = match &cli.output_dir {
            Some(dir) => dir.join(&plot.output),
            None => plot.output.clone(),
        };
        write_file(&out, &csv)?;
        println!("wrote plot data to {}", out.display());
    }
    if !all_ok {
        return Err(CliError::Check(
            "one or more required kernel moments exceed tolerance".into(),
        ));
    }
    Ok(())
}

fn cmd_diagnose(cli: &Cli, path: &Path) -> Result<(), CliError> {
    let mut cfg: DiagnoseConfig = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let model = cfg.model.build()?;
    let kernel = cfg.kernel.build()?;
    let filter = cfg.filter.build()?;
    let theta0 = (cfg.model.theta2, cfg.model.sigma);
    let json = match &cfg.diagnostic {
        DiagnoseMode::ConditionalMoment {
            x,
            deltas,
            replications,
        } => {
            let rep = mc::check_conditional_moment(
                &model,
                theta0,
                *x,
                &filter,
                &kernel,
                deltas,
                *replications,
                cfg.seed,
            )?;
            serde_json::to_value(&rep).expect("serializable")
        }
        DiagnoseMode::FilterRate {
            t_horizon,
            n_steps,
            paths,
            arm,
        } => {
            let rep = mc::check_filter_rate(
                &model,
                theta0,
                *t_horizon,
                *n_steps,
                &filter,
                &kernel,
                *paths,
                cfg.seed,
                *arm,
            )?;
            serde_json::to_value(&rep).expect("serializable")
        }
    };
    println!("{}", serde_json::to_string_pretty(&json).expect("serializable"));
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size worker pool: {e}")))?;
    }
    match &cli.cmd {
        Cmd::Simulate { config } => cmd_simulate(cli, config),
        Cmd::Estimate { config } => cmd_estimate(cli, config),
        Cmd::Mc { config } => cmd_mc(cli, config),
        Cmd::Compare { config } => cmd_compare(cli, config),
        Cmd::KernelCheck { config } => cmd_kernel_check(cli, config),
        Cmd::Diagnose { config } => cmd_diagnose(cli, config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
