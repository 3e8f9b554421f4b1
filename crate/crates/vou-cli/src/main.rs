//! Command-line front end for the vou toolkit.
//!
//! Every run writes its files under one output directory together with a
//! `manifest.json` listing each file and its SHA-256, so identical inputs
//! are checkable byte for byte. Exit codes: 0 success, 1 invalid input or
//! configuration, 2 numerical or data failure, 3 failed acceptance
//! criterion.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};
use vou::acceptance::{expected_failures, run_suite, Suite};
use vou::drift_estimators::{
    method_of_moments, DiscreteObservation, DriftEstimate, EstimatorMethod, PartitionPlan,
};
use vou::experiment_harness::{
    preset, preset_names, run_estimator_convergence, run_lln, run_mixing_decay, run_normality,
    run_strong_consistency_demo, ExperimentConfig, ExperimentReport, HorizonSequence,
};
use vou::kernel_bank::{
    first_kind_resolvent, first_kind_resolvent_sampled, identity_residual, KernelSpec,
};
use vou::path_simulator::{
    decode_path_batch, encode_path_batch, simulate_batch, SamplePath, VouParams,
};
use vou::report_store::{
    config_json_bytes, estimates_csv_bytes, fmt_f64, load_config, paths_csv_bytes,
    report_csv_bytes, report_json_bytes, write_output_bundle,
};
use vou::stats::{mean, variance};
use vou::volterra_calculus::{e_beta_tail_integrals, solve_second_kind};
use vou::{Result, VouError};

#[derive(Parser)]
#[command(name = "vou", version, about = "Simulation and drift estimation for Volterra Ornstein-Uhlenbeck processes")]
struct Cli {
    /// Directory for output files; one run per directory, the manifest
    /// describes the latest run.
    #[arg(long, global = true, default_value = "vou-out")]
    output_dir: PathBuf,

    /// Override the configuration's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Cap the worker thread pool (default: all cores). Affects speed only,
    /// never results.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Print per-check and per-row detail.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a kernel's analytic metadata.
    KernelInfo(KernelArgs),
    /// Tabulate both resolvents of the configured kernel.
    Resolvent(ResolventArgs),
    /// Simulate a Monte Carlo batch and export the paths.
    Simulate(SimulateArgs),
    /// Run the configured estimators path by path on a batch.
    Estimate(EstimateArgs),
    /// Run a named Monte Carlo study end to end.
    Experiment(ExperimentArgs),
    /// Run the acceptance suite and write its pass/fail report.
    Acceptance(AcceptanceArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KernelKindArg {
    Fractional,
    Log,
    ExpSum,
    DampedFractional,
    ConstantOne,
}

#[derive(Args)]
struct KernelArgs {
    /// Kernel family.
    #[arg(long, value_enum)]
    kind: KernelKindArg,
    /// Exponent for fractional and damped fractional kernels; optional for
    /// the log kernel.
    #[arg(long)]
    alpha: Option<f64>,
    /// Roughness index for the log kernel (default 0.49).
    #[arg(long)]
    gamma: Option<f64>,
    /// Comma-separated weights for the exponential-sum kernel.
    #[arg(long, value_delimiter = ',')]
    weights: Vec<f64>,
    /// Comma-separated rates for the exponential-sum kernel.
    #[arg(long, value_delimiter = ',')]
    rates: Vec<f64>,
    /// Decay rate for the damped fractional kernel.
    #[arg(long)]
    decay: Option<f64>,
}

#[derive(Args)]
struct ConfigSource {
    /// Path to a JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Name of a built-in configuration.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Args)]
struct ResolventArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Grid step (default: the configuration's first step).
    #[arg(long)]
    grid_step: Option<f64>,
    /// Horizon (default: the configuration's first horizon).
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PathFormat {
    Csv,
    Binary,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Keep the standard normal increments in the binary export.
    #[arg(long)]
    retain_noise: bool,
    /// Path export format.
    #[arg(long, value_enum, default_value_t = PathFormat::Csv)]
    format: PathFormat,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Estimate on a previously exported binary batch instead of
    /// simulating; the batch header supplies kernel and parameters and the
    /// joint likelihood estimator runs alone.
    #[arg(long, conflicts_with_all = ["config", "preset"])]
    paths: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Study {
    /// Ergodic time averages against the stationary moments.
    Lln,
    /// Estimator error curves over the (horizon, step) grid.
    Estimators,
    /// Standardized estimator deviations against the Gaussian limit.
    Normality,
    /// Stationary covariance decay across lags.
    Mixing,
    /// Single-path estimate trajectory along a growing horizon sequence.
    Consistency,
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    source: ConfigSource,
    /// Which study to run.
    #[arg(long, value_enum)]
    study: Study,
    /// Horizon growth exponent T_n = n^kappa for the consistency study.
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SuiteArg {
    /// Criteria with sub-minute runtimes.
    Fast,
    /// All criteria.
    Full,
}

#[derive(Args)]
struct AcceptanceArgs {
    #[arg(long, value_enum, default_value_t = SuiteArg::Full)]
    suite: SuiteArg,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| VouError::Usage(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::KernelInfo(args) => kernel_info(args),
        Command::Resolvent(args) => resolvent(&cli, args),
        Command::Simulate(args) => simulate(&cli, args),
        Command::Estimate(args) => estimate(&cli, args),
        Command::Experiment(args) => experiment(&cli, args),
        Command::Acceptance(args) => acceptance(&cli, args),
    }
}

impl ConfigSource {
    fn load(&self, seed_override: Option<u64>) -> Result<ExperimentConfig> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), None) => load_config(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => {
                return Err(VouError::Usage(format!(
                    "supply --config FILE or --preset NAME (presets: {})",
                    preset_names().join(", ")
                )))
            }
            (Some(_), Some(_)) => unreachable!("clap rejects the combination"),
        };
        if let Some(seed) = seed_override {
            config.seed = seed;
        }
        Ok(config)
    }
}

/// Displayed value of a possibly infinite nonnegative quantity.
fn fin_or_inf(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        "inf".into()
    }
}

fn kernel_info(args: &KernelArgs) -> Result<ExitCode> {
    let need = |opt: Option<f64>, flag: &str| {
        opt.ok_or_else(|| VouError::Usage(format!("this kernel kind requires --{flag}")))
    };
    let spec = match args.kind {
        KernelKindArg::Fractional => KernelSpec::fractional(need(args.alpha, "alpha")?)?,
        KernelKindArg::Log => match (args.alpha, args.gamma) {
            (None, None) => KernelSpec::log_default(),
            (a, g) => KernelSpec::log(a.unwrap_or(0.99), g.unwrap_or(0.49))?,
        },
        KernelKindArg::ExpSum => {
            if args.weights.is_empty() || args.rates.is_empty() {
                return Err(VouError::Usage(
                    "the exponential-sum kernel requires --weights and --rates".into(),
                ));
            }
            KernelSpec::exp_sum(args.weights.clone(), args.rates.clone())?
        }
        KernelKindArg::DampedFractional => {
            KernelSpec::damped_fractional(need(args.alpha, "alpha")?, need(args.decay, "decay")?)?
        }
        KernelKindArg::ConstantOne => KernelSpec::constant_one(),
    };
    println!("kind      {}", serde_json::to_string(&spec).map_err(|e| VouError::Usage(e.to_string()))?);
    println!("alpha     {}", spec.alpha());
    println!("gamma     {}", spec.gamma());
    println!("K(0+)     {}", fin_or_inf(spec.k_zero_plus()));
    println!("L1 norm   {}", fin_or_inf(spec.l1_norm()));
    Ok(ExitCode::SUCCESS)
}

/// Columns of pre-rendered cells, CRLF-terminated; all cells are plain
/// numbers so no quoting is needed.
fn numeric_csv(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Vec<u8> {
    let mut text = header.join(",");
    text.push_str("\r\n");
    for row in rows {
        text.push_str(&row.join(","));
        text.push_str("\r\n");
    }
    text.into_bytes()
}

fn json_bytes(value: &serde_json::Value) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)
        .map_err(|e| VouError::Usage(format!("serializing summary: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn finish_bundle(cli: &Cli, files: Vec<(String, Vec<u8>)>) -> Result<()> {
    let manifest = write_output_bundle(&cli.output_dir, &files)?;
    if cli.verbose > 0 {
        for entry in &manifest.files {
            println!("wrote {} ({} bytes)", cli.output_dir.join(&entry.name).display(), entry.bytes);
        }
    }
    println!(
        "outputs in {} (manifest.json lists {} files)",
        cli.output_dir.display(),
        manifest.files.len()
    );
    Ok(())
}

fn resolvent(cli: &Cli, args: &ResolventArgs) -> Result<ExitCode> {
    let config = args.source.load(cli.seed)?;
    let dt = args.grid_step.unwrap_or(config.dts[0]);
    let horizon = args.horizon.unwrap_or(config.horizons[0]);
    let kernel = &config.kernel;

    let l = first_kind_resolvent(kernel, dt, horizon)?;
    let residual = identity_residual(&l);
    let first_kind = {
        let cumulative = l.cumulative();
        numeric_csv(
            &["t", "interval_mass", "cumulative_mass"],
            l.interval_masses.iter().enumerate().map(|(i, m)| {
                vec![
                    fmt_f64((i + 1) as f64 * dt),
                    fmt_f64(*m),
                    fmt_f64(cumulative[i]),
                ]
            }),
        )
    };

    let e = solve_second_kind(kernel, config.params.beta(), dt, horizon)?;
    let tails = e_beta_tail_integrals(&e);
    let second_kind = {
        let prefix = e.integral_prefix();
        numeric_csv(
            &["t", "e_beta", "integral_prefix"],
            e.values().iter().enumerate().map(|(i, v)| {
                vec![
                    fmt_f64((i + 1) as f64 * dt),
                    fmt_f64(*v),
                    fmt_f64(prefix[i]),
                ]
            }),
        )
    };

    let summary = serde_json::json!({
        "kernel": kernel,
        "beta": config.params.beta(),
        "grid_step": dt,
        "horizon": horizon,
        "cells": l.len(),
        "first_kind": {
            "atom": l.atom,
            "total_mass": l.total_mass(),
            "identity_residual": residual,
        },
        "second_kind": {
            "integral": tails.int_e,
            "square_integral": tails.int_e2,
            "integral_with_tail": tails.total_e(),
            "square_integral_with_tail": tails.total_e2(),
        },
    });
    println!(
        "first-kind resolvent: atom {:.6e}, total mass {:.6e}, identity residual {:.3e}",
        l.atom,
        l.total_mass(),
        residual
    );
    println!(
        "second-kind resolvent: integral {:.6e} (with tail {:.6e}), square integral {:.6e} (with tail {:.6e})",
        tails.int_e,
        tails.total_e(),
        tails.int_e2,
        tails.total_e2()
    );
    finish_bundle(
        cli,
        vec![
            ("first_kind.csv".into(), first_kind),
            ("second_kind.csv".into(), second_kind),
            ("resolvent_summary.json".into(), json_bytes(&summary)?),
            ("config.json".into(), config_json_bytes(&config)?),
        ],
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Simulate the batch a configuration describes on its first
/// (horizon, step) pair.
fn batch_from_config(
    config: &ExperimentConfig,
    retain_noise: bool,
) -> Result<Vec<SamplePath>> {
    let horizon = config.horizons[0];
    let dt = config.dts[0];
    let n = config.cells(horizon, dt)?;
    simulate_batch(
        &config.kernel,
        &config.params,
        config.scheme,
        n,
        horizon,
        config.n_paths,
        config.seed,
        config.burn_in,
        retain_noise,
    )
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<ExitCode> {
    let config = args.source.load(cli.seed)?;
    let paths = batch_from_config(&config, args.retain_noise)?;
    let first = &paths[0];
    println!(
        "simulated {} paths of {} cells (dt = {}, horizon = {}, scheme = {:?}, master seed = {})",
        paths.len(),
        first.len(),
        first.grid_step(),
        first.horizon(),
        first.scheme(),
        config.seed
    );
    let mut files = vec![("config.json".into(), config_json_bytes(&config)?)];
    if matches!(args.format, PathFormat::Csv | PathFormat::Both) {
        files.push(("paths.csv".into(), paths_csv_bytes(&paths)?));
    }
    if matches!(args.format, PathFormat::Binary | PathFormat::Both) {
        files.push((
            "paths.bin".into(),
            encode_path_batch(&config.kernel, &config.params, &paths)?,
        ));
    }
    finish_bundle(cli, files)?;
    Ok(ExitCode::SUCCESS)
}

/// Per-path estimates for a homogeneous batch; estimator failures
/// (degenerate paths included) propagate to the caller.
fn estimate_paths(
    kernel: &KernelSpec,
    params: &VouParams,
    estimators: &[EstimatorMethod],
    paths: &[SamplePath],
) -> Result<Vec<(usize, u64, DriftEstimate)>> {
    let first = paths
        .first()
        .ok_or_else(|| VouError::Usage("the batch holds no paths".into()))?;
    let n = first.len();
    let horizon = first.horizon();
    let plan = PartitionPlan::new(kernel, horizon, n, n)?;
    let l = first_kind_resolvent_sampled(kernel, first.grid_step(), horizon)?;
    let mut rows = Vec::with_capacity(estimators.len() * paths.len());
    for &method in estimators {
        for (i, path) in paths.iter().enumerate() {
            let grid = path.to_path_on_grid()?;
            let est = match method {
                EstimatorMethod::MethodOfMoments => {
                    method_of_moments(&grid, kernel.alpha(), params.sigma())?
                }
                _ => {
                    let obs = DiscreteObservation::with_tables(&grid, &l, None, &plan)?;
                    match method {
                        EstimatorMethod::Mle => obs.mle(&plan)?,
                        EstimatorMethod::MleKnownBeta => obs.mle_known_beta(&plan, params.beta())?,
                        EstimatorMethod::MleKnownB => obs.mle_known_b(&plan, params.b())?,
                        EstimatorMethod::MethodOfMoments => unreachable!("handled above"),
                    }
                }
            };
            rows.push((i, path.seed(), est));
        }
    }
    Ok(rows)
}

fn estimate(cli: &Cli, args: &EstimateArgs) -> Result<ExitCode> {
    let (kernel, params, estimators, paths, config) = match &args.paths {
        Some(file) => {
            let bytes = std::fs::read(file)?;
            let batch = decode_path_batch(&bytes)?;
            (
                batch.kernel,
                batch.params,
                vec![EstimatorMethod::Mle],
                batch.paths,
                None,
            )
        }
        None => {
            let config = args.source.load(cli.seed)?;
            if config.estimators.is_empty() {
                return Err(VouError::Usage(
                    "the configuration lists no estimators".into(),
                ));
            }
            let paths = batch_from_config(&config, false)?;
            (
                config.kernel.clone(),
                config.params,
                config.estimators.clone(),
                paths,
                Some(config),
            )
        }
    };
    let rows = estimate_paths(&kernel, &params, &estimators, &paths)?;

    let mut methods = serde_json::Map::new();
    for &method in &estimators {
        let of = |f: fn(&DriftEstimate) -> f64| -> Vec<f64> {
            rows.iter()
                .filter(|(_, _, e)| e.method == method)
                .map(|(_, _, e)| f(e))
                .collect()
        };
        let (b, beta) = (of(|e| e.b_hat), of(|e| e.beta_hat));
        println!(
            "{method}: b_hat {:.6} +- {:.6}, beta_hat {:.6} +- {:.6} ({} paths)",
            mean(&b),
            variance(&b).sqrt(),
            mean(&beta),
            variance(&beta).sqrt(),
            b.len()
        );
        methods.insert(
            method.to_string(),
            serde_json::json!({
                "n_paths": b.len(),
                "b_hat_mean": mean(&b),
                "b_hat_sd": variance(&b).sqrt(),
                "beta_hat_mean": mean(&beta),
                "beta_hat_sd": variance(&beta).sqrt(),
            }),
        );
    }
    let first = &paths[0];
    let summary = serde_json::json!({
        "kernel": kernel,
        "params": params,
        "horizon": first.horizon(),
        "grid_step": first.grid_step(),
        "cells": first.len(),
        "n_paths": paths.len(),
        "methods": methods,
    });

    let mut files = vec![
        ("estimates.csv".into(), estimates_csv_bytes(&rows)?),
        ("estimate_summary.json".into(), json_bytes(&summary)?),
    ];
    if let Some(config) = &config {
        files.push(("config.json".into(), config_json_bytes(config)?));
    }
    finish_bundle(cli, files)?;
    Ok(ExitCode::SUCCESS)
}

fn experiment(cli: &Cli, args: &ExperimentArgs) -> Result<ExitCode> {
    let config = args.source.load(cli.seed)?;
    let report: ExperimentReport = match args.study {
        Study::Lln => run_lln(&config)?,
        Study::Estimators => run_estimator_convergence(&config)?,
        Study::Normality => run_normality(&config)?,
        Study::Mixing => run_mixing_decay(&config)?,
        Study::Consistency => {
            run_strong_consistency_demo(&config, HorizonSequence::Power { kappa: args.kappa })?
        }
    };
    println!(
        "study {}: {} rows, {} skipped degenerate paths, {:.1}s",
        report.study,
        report.rows.len(),
        report.failures,
        report.runtime.as_secs_f64()
    );
    for note in &report.notes {
        println!("note: {note}");
    }
    if cli.verbose > 0 {
        for row in &report.rows {
            println!(
                "  {} T={} dt={} estimate={:.6e} target={:.6e} rel_error={:.3e}",
                row.label, row.horizon, row.dt, row.estimate, row.target, row.rel_error
            );
        }
    }
    finish_bundle(
        cli,
        vec![
            ("report.json".into(), report_json_bytes(&report)?),
            ("report.csv".into(), report_csv_bytes(&report)?),
            ("config.json".into(), config_json_bytes(&config)?),
        ],
    )?;
    Ok(ExitCode::SUCCESS)
}

fn acceptance(cli: &Cli, args: &AcceptanceArgs) -> Result<ExitCode> {
    let suite = match args.suite {
        SuiteArg::Fast => Suite::Fast,
        SuiteArg::Full => Suite::Full,
    };
    let results = run_suite(suite)?;
    for r in &results {
        println!("{}", r.line());
        if cli.verbose > 0 {
            for check in &r.checks {
                println!("  {check}");
            }
        }
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let all_passed = passed == results.len();
    println!(
        "{passed}/{} criteria passed{}",
        results.len(),
        if all_passed {
            String::new()
        } else {
            format!(
                " (documented expected failures: {:?})",
                expected_failures()
            )
        }
    );
    let json = serde_json::json!({
        "suite": match suite { Suite::Fast => "fast", Suite::Full => "full" },
        "all_passed": all_passed,
        "expected_failures": expected_failures(),
        "results": results,
    });
    finish_bundle(cli, vec![("acceptance.json".into(), json_bytes(&json)?)])?;
    Ok(if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(3)
    })
}
