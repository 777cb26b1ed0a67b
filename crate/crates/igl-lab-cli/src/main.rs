//! Command-line front end: simulate environments, train and evaluate
//! policies, run seeded experiment sweeps, compute dataset meta-features,
//! and verify the exact oracle identities.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numerical failure, 4 oracle-identity violation.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use igl_lab::cb::{evaluate_policy, CbConfig};
use igl_lab::contrastive::{run_ai_igl, AiIglConfig, FitConfig, SymmetryConfig};
use igl_lab::data::{load_csv, standardize, CsvOptions, LabelColumn, Standardization};
use igl_lab::env::{simulate_log, IglEnvironment, RewardRule};
use igl_lab::error::IglError;
use igl_lab::experiment::{
    emit_report, run_experiment, DatasetSpec, EncoderSpec, ExperimentConfig, ReportFormats,
};
use igl_lab::metafeatures::compute_meta_features;
use igl_lab::oracle::{
    eval_old_objective, identity_suite, random_scorer, worked_example_env,
    worked_example_optimal_policy,
};
use igl_lab::policy::Policy;
use igl_lab::records::SimulatedLog;
use igl_lab::synth::generate;

#[derive(Parser)]
#[command(
    name = "igl-lab",
    about = "Interaction-grounded learning with action-inclusive feedback",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an interaction log from a dataset-backed environment.
    Simulate(SimulateArgs),
    /// Recover reward decoders from a log and train the output policy.
    Train(TrainArgs),
    /// Evaluate a trained policy's argmax accuracy on a labeled CSV.
    Evaluate(EvaluateArgs),
    /// Run a seeded multi-trial algorithm comparison and emit reports.
    Experiment(ExperimentArgs),
    /// Compute dataset meta-features from a CSV.
    Metafeatures(MetafeaturesArgs),
    /// Verify the exact analytic identities; exits 4 on any violation.
    OracleCheck(OracleCheckArgs),
    /// Print the exactly enumerated objective values of the worked
    /// 10-context environment.
    WorkedExample,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON simulation config (dataset, encoder, steps, seed).
    #[arg(long)]
    config: PathBuf,
    /// Dotted-path config overrides, e.g. --set steps=5000.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output log file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Log file produced by `simulate`.
    #[arg(long)]
    log: PathBuf,
    /// Optional JSON training config (fit, cb, eta).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output policy file.
    #[arg(long)]
    out_policy: PathBuf,
    /// Output decoder file.
    #[arg(long)]
    out_decoders: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Policy file produced by `train`.
    #[arg(long)]
    policy: PathBuf,
    /// Labeled CSV to evaluate on.
    #[arg(long)]
    data: PathBuf,
    /// Label column name (with header) or zero-based index.
    #[arg(long)]
    label_column: String,
    /// Single-character field delimiter.
    #[arg(long, default_value = ",")]
    delimiter: char,
    /// The CSV has no header row.
    #[arg(long)]
    no_header: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Directory for report.json, summary.csv, and trials.csv.
    #[arg(long)]
    out_dir: PathBuf,
    /// Zero the wall-clock field so identical configs emit identical bytes.
    #[arg(long)]
    normalized: bool,
}

#[derive(Args)]
struct MetafeaturesArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    label_column: String,
    #[arg(long, default_value = ",")]
    delimiter: char,
    #[arg(long)]
    no_header: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON record here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleCheckArgs {
    /// Number of random environments per identity.
    #[arg(long, default_value_t = 100)]
    cases: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct SimulateConfig {
    dataset: DatasetSpec,
    encoder: EncoderSpec,
    #[serde(default)]
    steps: Option<usize>,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_true")]
    standardize: bool,
    #[serde(default)]
    label_flip_probability: f64,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Serialize, Deserialize)]
struct TrainConfig {
    #[serde(default)]
    fit: FitConfig,
    /// `num_actions` is replaced by the log's action count.
    #[serde(default)]
    cb: CbConfig,
    #[serde(default = "default_eta")]
    eta: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            fit: FitConfig::default(),
            cb: CbConfig::default(),
            eta: default_eta(),
        }
    }
}

fn default_eta() -> f64 {
    0.2
}

/// Everything `evaluate` and `train` need alongside the raw log.
#[derive(Debug, Serialize, Deserialize)]
struct SimulationArtifact {
    num_actions: usize,
    standardization: Option<Standardization>,
    log: SimulatedLog,
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyArtifact {
    num_actions: usize,
    standardization: Option<Standardization>,
    policy: Policy,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &IglError) -> u8 {
    match e {
        IglError::Config(_) => 1,
        IglError::OptimizationDiverged { .. }
        | IglError::DegenerateConditioning { .. }
        | IglError::BudgetExceeded { .. } => 3,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<ExitCode, IglError> {
    match cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Metafeatures(args) => cmd_metafeatures(args),
        Command::OracleCheck(args) => cmd_oracle_check(args),
        Command::WorkedExample => cmd_worked_example(),
    }
}

/// Parse a config file and apply `--set key.path=value` overrides.
fn load_config<T: serde::de::DeserializeOwned>(
    path: &PathBuf,
    sets: &[String],
) -> Result<T, IglError> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| IglError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value =
        serde_json::from_str(&raw).map_err(|e| IglError::Config(format!("bad JSON: {e}")))?;
    for set in sets {
        let (key, val) = set
            .split_once('=')
            .ok_or_else(|| IglError::Config(format!("--set '{set}' is not KEY=VALUE")))?;
        let parsed: serde_json::Value = serde_json::from_str(val)
            .unwrap_or_else(|_| serde_json::Value::String(val.to_string()));
        let mut node = &mut value;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            if i + 1 == parts.len() {
                node[part] = parsed.clone();
            } else {
                if node.get(*part).is_none() {
                    node[part] = serde_json::Value::Object(Default::default());
                }
                node = &mut node[*part];
            }
        }
    }
    serde_json::from_value(value).map_err(|e| IglError::Config(format!("bad config: {e}")))
}

fn csv_options(delimiter: char, no_header: bool) -> Result<CsvOptions, IglError> {
    if !delimiter.is_ascii() {
        return Err(IglError::Config(format!(
            "delimiter '{delimiter}' is not a single ASCII character"
        )));
    }
    Ok(CsvOptions {
        delimiter: delimiter as u8,
        has_header: !no_header,
    })
}

fn parse_label_column(raw: &str) -> LabelColumn {
    match raw.parse::<usize>() {
        Ok(i) => LabelColumn::Index(i),
        Err(_) => LabelColumn::Name(raw.to_string()),
    }
}

fn cmd_simulate(args: SimulateArgs) -> Result<ExitCode, IglError> {
    let config: SimulateConfig = load_config(&args.config, &args.sets)?;
    let dataset = match &config.dataset {
        DatasetSpec::Csv {
            path,
            label_column,
            options,
        } => load_csv(path, label_column, options)?,
        DatasetSpec::Synthetic(spec) => generate(spec)?,
    };
    let (dataset, standardization) = if config.standardize {
        let (ds, t) = standardize(&dataset)?;
        (ds, Some(t))
    } else {
        (dataset, None)
    };
    let reward_rule = if config.label_flip_probability > 0.0 {
        RewardRule::Noisy {
            p_flip: config.label_flip_probability,
        }
    } else {
        RewardRule::Deterministic
    };
    let num_actions = dataset.num_classes;
    let steps = config.steps.unwrap_or(dataset.num_rows());
    let encoder = match config.encoder {
        EncoderSpec::PairVector => igl_lab::env::FeedbackEncoder::PairVector,
        EncoderSpec::DigitOneHot { base, shift0, shift1 } => {
            igl_lab::env::FeedbackEncoder::DigitOneHot { base, shift0, shift1 }
        }
        EncoderSpec::DigitExemplar { base, shift0, shift1 } => {
            igl_lab::env::FeedbackEncoder::DigitExemplar {
                base,
                shift0,
                shift1,
                pool: dataset.clone(),
            }
        }
        EncoderSpec::RewardOneHot => igl_lab::env::FeedbackEncoder::RewardOneHot,
        EncoderSpec::RewardExemplar => igl_lab::env::FeedbackEncoder::RewardExemplar {
            pool: dataset.clone(),
        },
    };
    let env = IglEnvironment::new(dataset, encoder, reward_rule)?;
    let log = simulate_log(&env, steps, config.seed)?;
    let artifact = SimulationArtifact {
        num_actions,
        standardization,
        log,
    };
    std::fs::write(&args.out, serde_json::to_string(&artifact)?)?;
    println!(
        "wrote {} interactions over {} actions to {}",
        artifact.log.interactions.len(),
        num_actions,
        args.out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_train(args: TrainArgs) -> Result<ExitCode, IglError> {
    let config: TrainConfig = match &args.config {
        Some(path) => load_config(path, &args.sets)?,
        None if args.sets.is_empty() => TrainConfig::default(),
        None => {
            return Err(IglError::Config(
                "--set requires --config".into(),
            ))
        }
    };
    let artifact: SimulationArtifact =
        serde_json::from_str(&std::fs::read_to_string(&args.log)?)?;
    let k = artifact.num_actions;
    let ai_config = AiIglConfig {
        fit: config.fit,
        cb: CbConfig {
            num_actions: k,
            ..config.cb
        },
    };
    let symmetry = SymmetryConfig::uniform(k, config.eta);
    let result = run_ai_igl(&artifact.log.interactions, &ai_config, &symmetry)?;

    let policy = PolicyArtifact {
        num_actions: k,
        standardization: artifact.standardization,
        policy: result.policy,
    };
    std::fs::write(&args.out_policy, serde_json::to_string_pretty(&policy)?)?;
    std::fs::write(&args.out_decoders, result.decoders.to_json()?)?;
    for w in &result.diagnostics.warnings {
        eprintln!("warning: {w}");
    }
    for d in &result.diagnostics.per_action {
        println!(
            "action {}: bucket {}, objective {:+.6}, rho_hat {:.4}, flipped {}",
            d.action, d.bucket_size, d.objective, d.rho_hat, d.flipped
        );
    }
    println!(
        "wrote policy to {} and decoders to {}",
        args.out_policy.display(),
        args.out_decoders.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<ExitCode, IglError> {
    let artifact: PolicyArtifact =
        serde_json::from_str(&std::fs::read_to_string(&args.policy)?)?;
    let options = csv_options(args.delimiter, args.no_header)?;
    let dataset = load_csv(&args.data, &parse_label_column(&args.label_column), &options)?;
    let dataset = match &artifact.standardization {
        Some(t) => t.apply(&dataset)?,
        None => dataset,
    };
    let accuracy = evaluate_policy(&artifact.policy, &dataset)?;
    println!("{}", serde_json::json!({ "accuracy": accuracy }));
    Ok(ExitCode::SUCCESS)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<ExitCode, IglError> {
    let config: ExperimentConfig = load_config(&args.config, &args.sets)?;
    let report = run_experiment(&config)?;
    let files = emit_report(&report, &args.out_dir, ReportFormats::default(), args.normalized)?;
    println!(
        "constant action baseline: {:.4}",
        report.constant_action_baseline
    );
    for a in &report.algorithms {
        match (a.mean_accuracy, a.std_error) {
            (Some(mean), Some(se)) => println!(
                "{:<12} accuracy {:.4} +/- {:.4}{}  ({} failures)",
                a.algorithm.name(),
                mean,
                se,
                a.relative_to_cb
                    .map_or(String::new(), |r| format!(", {r:.3} of skyline")),
                a.failures
            ),
            _ => println!("{:<12} all trials failed", a.algorithm.name()),
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_metafeatures(args: MetafeaturesArgs) -> Result<ExitCode, IglError> {
    let options = csv_options(args.delimiter, args.no_header)?;
    let dataset = load_csv(&args.data, &parse_label_column(&args.label_column), &options)?;
    let record = compute_meta_features(&dataset, args.seed)?;
    let json = serde_json::to_string_pretty(&record)?;
    match &args.out {
        Some(path) => {
            std::fs::write(path, json)?;
            println!("wrote {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_oracle_check(args: OracleCheckArgs) -> Result<ExitCode, IglError> {
    let checks = identity_suite(args.cases);
    let mut all_passed = true;
    for c in &checks {
        println!(
            "{} {} - {}",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail
        );
        all_passed &= c.passed;
    }
    if all_passed {
        println!("all {} identity checks passed", checks.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("oracle identity violation");
        Ok(ExitCode::from(4))
    }
}

fn cmd_worked_example() -> Result<ExitCode, IglError> {
    let env = worked_example_env();
    let pi_star = worked_example_optimal_policy();
    let pi_bad = Policy::Uniform { num_actions: 10 };

    let mut worst: f64 = 0.0;
    for seed in 0..100 {
        let psi: Vec<f64> = random_scorer(seed, 10, 1)
            .table
            .iter()
            .map(|row| row[0])
            .collect();
        worst = worst.max(eval_old_objective(&env, &pi_star, &psi, &pi_bad)?.abs());
    }

    let pi_one = Policy::Constant {
        num_actions: 10,
        action: 1,
    };
    let mut psi_two = vec![0.0; 10];
    psi_two[2] = 1.0;
    let aligned = eval_old_objective(&env, &pi_one, &psi_two, &pi_bad)?;

    let mut best_trap = f64::NEG_INFINITY;
    for c in 0..10 {
        let pi = Policy::Constant {
            num_actions: 10,
            action: c,
        };
        let mut psi = vec![0.0; 10];
        psi[c] = 1.0;
        best_trap = best_trap.max(eval_old_objective(&env, &pi, &psi, &pi_bad)?);
    }

    println!("decoded-return objective on the 10-context worked environment (exact enumeration)");
    println!("  max |L(optimal policy, psi)| over 100 random decoders: {worst:.15}");
    println!("  L(constant action 1, indicator decoder on feedback 2): {aligned:.15}");
    println!("  max over constant policies decoding their own feedback: {best_trap:.15}");
    println!("  the objective prefers a reward-blind constant policy by {best_trap:.2}");
    Ok(ExitCode::SUCCESS)
}
