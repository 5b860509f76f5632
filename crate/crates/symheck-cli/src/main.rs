//! Batch front end: fit, simulate, and diagnose workflows with
//! reproducible, machine-readable outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;

use symheck::diagnose::{compare_models, comparison_text, mt_residuals, qq_data};
use symheck::simulate::derived_seed;
use symheck::{
    fit, ModelSpec, ScenarioConfig, SelectionDataset, SimKind, Threshold, TrueParams,
};

use symheck_cli::artifacts::{
    estimates_table, write_comparison_csv, write_dataset_csv, write_json, write_mc_summary_csv,
    write_qq_csv, write_residuals_csv, FitReport, McMeta, Meta, OutputLock,
};
use symheck_cli::config::{GeneratorConfig, LabeledGenerator, RunConfig, SimulateConfig};
use symheck_cli::ingest::ingest_csv;
use symheck_cli::CliError;

#[derive(Parser)]
#[command(
    name = "symheck",
    version,
    about = "Sample-selection models with symmetric bivariate errors: \
             maximum-likelihood fitting, simulation studies, and residual diagnostics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// JSON configuration file (see README for the schema).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Generator family: normal | t.
    #[arg(long)]
    generator: Option<String>,
    /// Degrees of freedom (starting value, or fixed with generator "t_fixed").
    #[arg(long)]
    nu: Option<f64>,
    /// Scenario preset (1, 2, or 3) for simulate.
    #[arg(long)]
    scenario: Option<u8>,
    /// Sample size for simulate.
    #[arg(long)]
    n: Option<usize>,
    /// Replicate count for simulate.
    #[arg(long)]
    nrep: Option<usize>,
    /// Output directory (default "out").
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit 0 even when the fit did not converge.
    #[arg(long)]
    allow_nonconverged: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model to a CSV dataset.
    Fit(CommonArgs),
    /// Generate datasets from a scenario; with --nrep > 1 run the full
    /// bias/MSE study.
    Simulate(CommonArgs),
    /// Fit several models to the same dataset, compare them, and emit
    /// QQ data for the best one.
    Diagnose(CommonArgs),
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Fit(args) => run_fit(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Diagnose(args) => run_diagnose(args),
    }
}

/// Load the config (if any) and fold the command-line overrides in.
fn resolve_config(args: &CommonArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = Some(seed);
    }
    if let Some(out) = &args.out {
        config.output_dir = Some(out.display().to_string());
    }
    if let Some(kind) = &args.generator {
        let mut gen = GeneratorConfig {
            kind: kind.clone(),
            nu: args.nu,
            fixed: false,
        };
        if kind == "t_fixed" {
            gen.kind = "t".into();
            gen.fixed = true;
        }
        config.generator = Some(gen);
    } else if let Some(nu) = args.nu {
        let mut gen = config.generator.take().unwrap_or_else(GeneratorConfig::student);
        gen.nu = Some(nu);
        config.generator = Some(gen);
    }
    if args.scenario.is_some() || args.n.is_some() || args.nrep.is_some() {
        let mut sim = config.simulate.take().unwrap_or_default();
        if args.scenario.is_some() {
            sim.scenario = args.scenario;
        }
        if args.n.is_some() {
            sim.n = args.n;
        }
        if args.nrep.is_some() {
            sim.nrep = args.nrep;
        }
        config.simulate = Some(sim);
    }
    if args.allow_nonconverged {
        config.options.allow_nonconverged = true;
    }
    Ok(config)
}

fn output_dir(config: &RunConfig) -> PathBuf {
    PathBuf::from(config.output_dir.as_deref().unwrap_or("out"))
}

fn echo_resolved(config: &RunConfig, meta: &Meta) {
    println!(
        "{} {} | command={} seed={} config_hash={}",
        meta.tool, meta.version, meta.command, meta.seed, meta.config_hash
    );
    println!("resolved config: {}", config.canonical_json());
}

fn load_data(
    config: &RunConfig,
) -> Result<(SelectionDataset, symheck::ParamNames, Vec<String>), CliError> {
    let data_path = config
        .data
        .as_deref()
        .ok_or_else(|| CliError::Config("config is missing `data` (CSV path)".into()))?;
    let model = config
        .model
        .as_ref()
        .ok_or_else(|| CliError::Config("config is missing the `model` block".into()))?;
    let ingested = ingest_csv(Path::new(data_path), model)?;
    Ok((ingested.dataset, ingested.names, ingested.warnings))
}

fn build_spec(
    data: &SelectionDataset,
    names: &symheck::ParamNames,
    generator: &GeneratorConfig,
) -> Result<ModelSpec, CliError> {
    let family = generator.family()?;
    let spec = ModelSpec::new(data, symheck::Links::default(), family)?;
    Ok(spec.with_names(names.clone())?)
}

fn run_fit(args: CommonArgs) -> Result<i32, CliError> {
    if args.config.is_none() {
        return Err(CliError::Config("fit requires --config".into()));
    }
    let config = resolve_config(&args)?;
    let seed = config.seed.unwrap_or(0);
    let meta = Meta::new("fit", seed, config.hash());
    let out_dir = output_dir(&config);
    let _lock = OutputLock::acquire(&out_dir)?;

    let (data, names, warnings) = load_data(&config)?;
    let generator = config.generator.clone().unwrap_or_else(GeneratorConfig::student);
    let spec = build_spec(&data, &names, &generator)?;
    let result = fit(&spec, &data, &config.fit_options())?;

    let report = FitReport::from_fit(&result, generator.label(), &meta, warnings, &config);
    write_json(&out_dir.join("fit_report.json"), &report)?;

    if result.converged {
        let residuals = mt_residuals(&result, &spec, &data)?;
        write_residuals_csv(&out_dir.join("residuals.csv"), &residuals, &meta)?;
    } else {
        eprintln!("warning: fit did not converge; residuals.csv skipped");
    }

    echo_resolved(&config, &meta);
    println!(
        "n={} observed={} loglik={:.6} AIC={:.4} BIC={:.4} converged={} iterations={}",
        result.n,
        result.n_observed,
        result.loglik,
        result.aic,
        result.bic,
        result.converged,
        result.iterations
    );
    print!("{}", estimates_table(&result));
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }

    if !result.converged && !config.options.allow_nonconverged {
        return Err(CliError::NotConverged(format!(
            "fit stopped without convergence after {} iterations (gradient norm {:.3e}); \
             rerun with --allow-nonconverged to accept",
            result.iterations, result.gradient_norm
        )));
    }
    Ok(0)
}

/// Assemble the scenario from config + flags.
fn scenario_from_config(sim: &SimulateConfig, seed: u64) -> Result<ScenarioConfig, CliError> {
    let mut scenario = match (&sim.custom, sim.scenario) {
        (Some(custom), _) => {
            let distribution = match custom.nu {
                Some(nu) => SimKind::StudentT { nu },
                None => SimKind::Gaussian,
            };
            ScenarioConfig {
                n: 1000,
                params: TrueParams {
                    beta: custom.beta.clone(),
                    gamma: custom.gamma.clone(),
                    lambda: custom.lambda.clone(),
                    kappa: custom.kappa.clone(),
                },
                distribution,
                threshold: Threshold::Fixed(0.0),
                nrep: 1,
                seed,
            }
        }
        (None, Some(idx)) => {
            let mut s = ScenarioConfig::preset_variant(idx, sim.variant)?;
            s.seed = seed;
            s.nrep = 1;
            s
        }
        (None, None) => {
            return Err(CliError::Config(
                "simulate needs either --scenario or a `simulate.custom` block".into(),
            ))
        }
    };
    if let Some(n) = sim.n {
        scenario.n = n;
    }
    if let Some(nrep) = sim.nrep {
        scenario.nrep = nrep;
    }
    scenario.threshold = match (sim.censoring_target, sim.threshold) {
        (Some(target), None) => Threshold::Calibrated { target },
        (None, Some(a)) => Threshold::Fixed(a),
        (None, None) => Threshold::Fixed(0.0),
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "simulate.threshold and simulate.censoring_target are mutually exclusive".into(),
            ))
        }
    };
    Ok(scenario)
}

fn run_simulate(args: CommonArgs) -> Result<i32, CliError> {
    let config = resolve_config(&args)?;
    let sim = config
        .simulate
        .clone()
        .ok_or_else(|| CliError::Config("simulate needs --scenario or a `simulate` block".into()))?;
    let seed = config.seed.unwrap_or(1);
    let scenario = scenario_from_config(&sim, seed)?;
    let meta = Meta::new("simulate", seed, config.hash());
    let out_dir = output_dir(&config);
    let _lock = OutputLock::acquire(&out_dir)?;

    // The written dataset is replicate 0 of the study stream.
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(derived_seed(scenario.seed, 0));
    let dataset = symheck::generate_dataset(&scenario, &mut rng)?;
    write_dataset_csv(&out_dir.join("dataset.csv"), &dataset, &meta)?;
    echo_resolved(&config, &meta);
    println!(
        "dataset.csv: n={} observed={} censoring={:.2}%",
        dataset.n(),
        dataset.n_observed(),
        100.0 * dataset.censoring_fraction()
    );

    if scenario.nrep > 1 {
        let summary = symheck::run_study(&scenario)?;
        write_mc_summary_csv(&out_dir.join("mc_summary.csv"), &summary, &meta)?;
        write_json(
            &out_dir.join("mc_meta.json"),
            &McMeta {
                meta: &meta,
                n: summary.n,
                nrep: summary.nrep,
                threshold: summary.threshold,
                mean_censoring_pct: summary.mean_censoring_pct,
                failures: summary.failures,
                resolved_config: &config,
            },
        )?;
        println!(
            "mc_summary.csv: nrep={} failures={} mean censoring={:.2}%",
            summary.nrep, summary.failures, summary.mean_censoring_pct
        );
        for row in &summary.rows {
            println!(
                "  {:<10} true={:>8.4} bias={:>9.5} mse={:>10.6}",
                row.name, row.true_value, row.bias, row.mse
            );
        }
    }
    Ok(0)
}

fn run_diagnose(args: CommonArgs) -> Result<i32, CliError> {
    if args.config.is_none() {
        return Err(CliError::Config("diagnose requires --config".into()));
    }
    let config = resolve_config(&args)?;
    let seed = config.seed.unwrap_or(0);
    let meta = Meta::new("diagnose", seed, config.hash());
    let out_dir = output_dir(&config);
    let _lock = OutputLock::acquire(&out_dir)?;

    let (data, names, warnings) = load_data(&config)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let models: Vec<LabeledGenerator> = config.models.clone().unwrap_or_else(|| {
        vec![
            LabeledGenerator {
                label: "normal".into(),
                generator: GeneratorConfig::normal(),
            },
            LabeledGenerator {
                label: "t".into(),
                generator: GeneratorConfig::student(),
            },
        ]
    });
    if models.is_empty() {
        return Err(CliError::Config("`models` must not be empty".into()));
    }

    let mut fits = Vec::with_capacity(models.len());
    for m in &models {
        let spec = build_spec(&data, &names, &m.generator)?;
        let result = fit(&spec, &data, &config.fit_options())?;
        if !result.converged && !config.options.allow_nonconverged {
            return Err(CliError::NotConverged(format!(
                "model `{}` did not converge; rerun with --allow-nonconverged",
                m.label
            )));
        }
        fits.push((m.label.clone(), spec, result));
    }

    let fit_refs: Vec<&symheck::FitResult> = fits.iter().map(|(_, _, f)| f).collect();
    let labels: Vec<&str> = fits.iter().map(|(l, _, _)| l.as_str()).collect();
    let comparison = compare_models(&fit_refs, &labels)?;
    write_comparison_csv(&out_dir.join("comparison.csv"), &comparison, &meta)?;

    // QQ data for the best model by AIC.
    let best_label = &comparison[0].label;
    let (_, best_spec, best_fit) = fits
        .iter()
        .find(|(l, _, _)| l == best_label)
        .expect("winner is one of the fits");
    let residuals = mt_residuals(best_fit, best_spec, &data)?;
    let qq = qq_data(&residuals)?;
    write_qq_csv(&out_dir.join("qq.csv"), &qq, &meta)?;

    echo_resolved(&config, &meta);
    print!("{}", comparison_text(&comparison));
    println!("qq.csv: residual QQ data for model `{best_label}`");
    Ok(0)
}
