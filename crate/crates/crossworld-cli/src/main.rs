//! Command-line surface for the cross-world ITE interval pipeline:
//! dataset generation, grid experiments, rho diagnostics, and
//! single-query interval construction.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crossworld::cate::bootstrap_cate_ci_around;
use crossworld::conformal::{fit_arm_models, calibrate_band, naive_from_bands, sqrt_level, BandAt, BandSide};
use crossworld::core::Rho;
use crossworld::cw::{cmc_interval, cw_ci_interval, cw_interval, CRule};
use crossworld::datagen::{
    estimate_conditional_correlation, gen_synthetic, load_csv, rho_from_variance_decomposition,
    split_dataset, write_csv, Copula, Marginal, NoiseSpec,
};
use crossworld::eval::{run_experiment, write_results_csv, ExperimentConfig};
use crossworld::learners::{LearnerChoice, LearnerParams};
use crossworld::{Error, Result};

#[derive(Parser)]
#[command(name = "crossworld", version, about = "Prediction intervals for individual treatment effects under a cross-world correlation assumption")]
struct Cli {
    /// Worker threads (falls back to CROSSWORLD_THREADS, then all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset CSV with known counterfactuals.
    Generate(GenerateArgs),
    /// Run a full experiment grid from a TOML config.
    Run(RunArgs),
    /// Estimate the cross-world correlation diagnostics.
    RhoDiagnose(DiagnoseArgs),
    /// Build one ITE interval at a query point.
    Interval(IntervalArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Cross-world noise correlation in [-1, 1].
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value = "gaussian")]
    marginal: Marginal,
    #[arg(long, default_value = "gaussian")]
    copula: Copula,
    #[arg(long, default_value_t = 1.0)]
    sigma0: f64,
    #[arg(long, default_value_t = 2.0)]
    sigma1: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Results CSV path; a JSON manifest is written alongside.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Dataset CSV with counterfactual columns.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Conditioning columns, 1-based (e.g. "1,2" for x1 and x2).
    #[arg(long, value_delimiter = ',')]
    cond_cols: Vec<usize>,
    /// Window centers, one per conditioning column.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    centers: Vec<f64>,
    /// Window half-width.
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Shared-hidden-covariate variance component var(H).
    #[arg(long)]
    var_h: Option<f64>,
    /// Idiosyncratic variance component var(eps).
    #[arg(long)]
    var_eps: Option<f64>,
    /// Optional machine-readable CSV report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct IntervalArgs {
    /// Dataset CSV to fit the pipeline on.
    #[arg(long)]
    data: PathBuf,
    /// Query covariates, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    x: Vec<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rho: f64,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// cw | cw+ci | naive | sqrt_naive | cmc
    #[arg(long, default_value = "cw")]
    method: String,
    /// Fixed c for cw+ci (defaults to the auto rule ((1+rho)/2)^2).
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value_t = 200)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    #[arg(long, default_value_t = 2000)]
    cmc_samples: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long, default_value_t = 40)]
    min_leaf: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.threads) {
        eprintln!("{e}");
        return ExitCode::from(2);
    }
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            let code = match e {
                Error::Input(_) | Error::Config(_) => 2,
                Error::Data(_) => 3,
                Error::Runtime(_) => 4,
            };
            ExitCode::from(code)
        }
    }
}

fn init_threads(flag: Option<usize>) -> Result<()> {
    let threads = match flag {
        Some(t) => Some(t),
        None => match std::env::var("CROSSWORLD_THREADS") {
            Ok(v) => Some(v.parse().map_err(|_| {
                Error::config(format!("CROSSWORLD_THREADS must be a positive integer, got {v:?}"))
            })?),
            Err(_) => None,
        },
    };
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::config("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::runtime(format!("cannot configure thread pool: {e}")))?;
    }
    Ok(())
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Generate(args) => cmd_generate(args),
        Cmd::Run(args) => cmd_run(args),
        Cmd::RhoDiagnose(args) => cmd_rho_diagnose(args),
        Cmd::Interval(args) => cmd_interval(args),
    }
}

#[derive(Serialize)]
struct Manifest<T: Serialize> {
    command: &'static str,
    version: &'static str,
    wall_time_s: f64,
    params: T,
}

fn write_manifest<T: Serialize>(out: &Path, manifest: &Manifest<T>) -> Result<()> {
    let path = out.with_extension("manifest.json");
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| Error::runtime(format!("manifest serialization failed: {e}")))?;
    std::fs::write(&path, text)
        .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let started = Instant::now();
    let rho = Rho::new(args.rho)?;
    let spec = NoiseSpec {
        marginal: args.marginal,
        copula: args.copula,
        rho,
        sigma0: args.sigma0,
        sigma1: args.sigma1,
    };
    let data = gen_synthetic(args.n, args.d, rho, &spec, args.seed)?;
    write_csv(&data, &args.out)?;
    write_manifest(
        &args.out,
        &Manifest {
            command: "generate",
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: started.elapsed().as_secs_f64(),
            params: data.meta.clone(),
        },
    )?;
    println!("wrote {} rows to {}", data.len(), args.out.display());
    Ok(())
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let started = Instant::now();
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", args.config.display())))?;
    let config: ExperimentConfig = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", args.config.display())))?;
    let results = run_experiment(&config)?;
    write_results_csv(&results, &config.methods, &args.out)?;
    write_manifest(
        &args.out,
        &Manifest {
            command: "run",
            version: env!("CARGO_PKG_VERSION"),
            wall_time_s: started.elapsed().as_secs_f64(),
            params: &config,
        },
    )?;
    let failed = results.iter().filter(|r| r.error.is_some()).count();
    println!(
        "wrote {} cells ({} failed) to {}",
        results.len(),
        failed,
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct DiagnosticRow {
    estimator: &'static str,
    rho_hat: f64,
    window_count: Option<usize>,
}

fn cmd_rho_diagnose(args: DiagnoseArgs) -> Result<()> {
    let mut rows = Vec::new();

    if let (Some(var_h), Some(var_eps)) = (args.var_h, args.var_eps) {
        let rho = rho_from_variance_decomposition(var_h, var_eps)?;
        println!(
            "variance decomposition: rho = var(H)/(var(H)+var(eps)) = {:.6}",
            rho.value()
        );
        rows.push(DiagnosticRow {
            estimator: "variance_decomposition",
            rho_hat: rho.value(),
            window_count: None,
        });
    }

    if let Some(path) = &args.data {
        let data = load_csv(path)?;
        if !data.has_counterfactuals() {
            return Err(Error::data(
                "this dataset has only factual outcomes; cor(Y(1), Y(0) | X) is \
                 unidentifiable from factual data alone, so the conditional-correlation \
                 estimator needs y0/y1 columns (oracle or semi-synthetic data)",
            ));
        }
        if args.cond_cols.is_empty() {
            return Err(Error::input("provide --cond-cols (1-based) and --centers"));
        }
        if args.cond_cols.iter().any(|&c| c == 0) {
            return Err(Error::input("--cond-cols are 1-based; 0 is not a column"));
        }
        let cols: Vec<usize> = args.cond_cols.iter().map(|&c| c - 1).collect();
        let (est, count) =
            estimate_conditional_correlation(&data, &cols, &args.centers, args.delta)?;
        println!(
            "windowed conditional correlation: rho_hat = {est:.6} ({count} rows in window)"
        );
        rows.push(DiagnosticRow {
            estimator: "conditional_correlation",
            rho_hat: est,
            window_count: Some(count),
        });
    }

    if rows.is_empty() {
        return Err(Error::input(
            "nothing to diagnose: provide --data or both --var-h and --var-eps",
        ));
    }
    if let Some(out) = &args.out {
        let mut w = csv::Writer::from_path(out)
            .map_err(|e| Error::data(format!("cannot open {}: {e}", out.display())))?;
        w.write_record(["estimator", "rho_hat", "window_count"])
            .map_err(|e| Error::data(e.to_string()))?;
        for r in &rows {
            w.write_record([
                r.estimator.to_string(),
                format!("{:.6}", r.rho_hat),
                r.window_count.map(|c| c.to_string()).unwrap_or_default(),
            ])
            .map_err(|e| Error::data(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::data(e.to_string()))?;
    }
    Ok(())
}

fn cmd_interval(args: IntervalArgs) -> Result<()> {
    let rho = Rho::new(args.rho)?;
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(Error::input(format!("alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let data = load_csv(&args.data)?;
    if args.x.is_empty() {
        return Err(Error::input("provide --x query covariates"));
    }
    if args.x.len() != data.dim() {
        return Err(Error::input(format!(
            "query has {} covariates, dataset has {}",
            args.x.len(),
            data.dim()
        )));
    }
    let learner = LearnerChoice::Forest(LearnerParams {
        trees: args.trees,
        min_leaf: args.min_leaf,
        seed: args.seed,
        ..Default::default()
    });
    let split = split_dataset(&data, 0.5, args.seed, true)?;

    // Band calibration level per method, then the quantile levels the
    // arm models must expose.
    let arm_alpha = match args.method.as_str() {
        "cw" | "cw+ci" => args.alpha,
        "naive" => args.alpha / 2.0,
        "sqrt_naive" => sqrt_level(args.alpha)?,
        "cmc" => args.alpha, // band unused; kept for the printout
        other => {
            return Err(Error::input(format!(
                "unknown method {other:?}; expected cw, cw+ci, naive, sqrt_naive or cmc"
            )))
        }
    };
    let mut levels = vec![arm_alpha / 2.0, 1.0 - arm_alpha / 2.0];
    if args.method == "cmc" {
        levels.extend((1..=39).map(|i| i as f64 / 40.0));
        levels.sort_by(f64::total_cmp);
        levels.dedup();
    }
    let models1 = fit_arm_models(&data, 1, &split, &levels, &learner.with_seed(args.seed ^ 1))?;
    let models0 = fit_arm_models(&data, 0, &split, &levels, &learner.with_seed(args.seed ^ 2))?;
    let band1 = calibrate_band(&data, 1, arm_alpha, &split, &models1, BandSide::Both)?;
    let band0 = calibrate_band(&data, 0, arm_alpha, &split, &models0, BandSide::Both)?;
    let at1 = band1.at(&args.x)?;
    let at0 = band0.at(&args.x)?;
    let tau_hat = at1.mu - at0.mu;

    let interval = match args.method.as_str() {
        "cw" => cw_interval(tau_hat, &at1, &at0, rho)?,
        "cw+ci" => {
            let c = match args.c {
                Some(c) => c,
                None => CRule::Auto.effective_c(rho)?,
            };
            let est = bootstrap_cate_ci_around(
                &data,
                &[args.x.clone()],
                &[tau_hat],
                args.bootstrap,
                args.beta,
                &learner,
                args.seed,
            )?;
            cw_ci_interval(tau_hat, est.r_l[0], est.r_u[0], &at1, &at0, rho, c)?
        }
        "naive" | "sqrt_naive" => naive_from_bands(&at1, &at0)?,
        "cmc" => cmc_interval(
            &models1.quantiles,
            &models0.quantiles,
            &args.x,
            args.alpha,
            args.cmc_samples,
            rho,
            args.seed,
        )?,
        _ => unreachable!(),
    };

    print_band("arm 1 band", &at1);
    print_band("arm 0 band", &at0);
    println!("tau_hat = {tau_hat:.6}");
    println!("interval = [{:.6}, {:.6}]", interval.lo(), interval.hi());
    Ok(())
}

fn print_band(label: &str, b: &BandAt) {
    println!(
        "{label}: mu = {:.6}, [{:.6}, {:.6}]",
        b.mu,
        b.lo(),
        b.hi()
    );
}
