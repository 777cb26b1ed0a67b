//! Seeded multi-trial experiment orchestration.
//!
//! One experiment compares a set of algorithms on one environment over many
//! trials. Trial `t` derives its seed from `(master_seed, t)`, splits the
//! dataset, standardizes on the train statistics, simulates a log, trains
//! every requested algorithm, and evaluates each on the held-out rows.
//! Trials run in parallel (capped by `IGL_LAB_THREADS`); aggregation folds
//! over trial index, so reports are identical however trials are scheduled.
//! A failing trial is recorded per algorithm rather than aborting the sweep.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{run_cb_skyline, run_full_ci_igl, FullCiConfig};
use crate::cb::{evaluate_policy, CbConfig};
use crate::contrastive::{run_ai_igl, AiIglConfig, AiIglDiagnostics, FitConfig, SymmetryConfig};
use crate::data::{
    check_balanced, load_csv, standardize, train_eval_split, CsvOptions, LabelColumn,
    SupervisedDataset,
};
use crate::env::{simulate_log, FeedbackEncoder, IglEnvironment, RewardRule};
use crate::error::IglError;
use crate::policy::Policy;
use crate::rng::derive_seed;
use crate::synth::{generate, SyntheticSpec};
use crate::Result;

/// Where the dataset comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Csv {
        path: String,
        label_column: LabelColumn,
        #[serde(default)]
        options: CsvOptions,
    },
    Synthetic(SyntheticSpec),
}

/// Feedback encoder selection; exemplar variants draw from the trial's
/// training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderSpec {
    PairVector,
    DigitOneHot {
        base: usize,
        #[serde(default = "crate::env::default_shift0")]
        shift0: i64,
        #[serde(default = "crate::env::default_shift1")]
        shift1: i64,
    },
    DigitExemplar {
        base: usize,
        #[serde(default = "crate::env::default_shift0")]
        shift0: i64,
        #[serde(default = "crate::env::default_shift1")]
        shift1: i64,
    },
    RewardOneHot,
    RewardExemplar,
}

impl EncoderSpec {
    fn build(&self, train: &SupervisedDataset) -> FeedbackEncoder {
        match *self {
            EncoderSpec::PairVector => FeedbackEncoder::PairVector,
            EncoderSpec::DigitOneHot { base, shift0, shift1 } => {
                FeedbackEncoder::DigitOneHot { base, shift0, shift1 }
            }
            EncoderSpec::DigitExemplar { base, shift0, shift1 } => {
                FeedbackEncoder::DigitExemplar {
                    base,
                    shift0,
                    shift1,
                    pool: train.clone(),
                }
            }
            EncoderSpec::RewardOneHot => FeedbackEncoder::RewardOneHot,
            EncoderSpec::RewardExemplar => FeedbackEncoder::RewardExemplar {
                pool: train.clone(),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    CbSkyline,
    FullCiIgl,
    AiIgl,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::CbSkyline => "cb_skyline",
            Algorithm::FullCiIgl => "full_ci_igl",
            Algorithm::AiIgl => "ai_igl",
        }
    }
}

fn default_trials() -> usize {
    20
}

fn default_train_fraction() -> f64 {
    0.9
}

fn default_true() -> bool {
    true
}

/// The complete, serializable experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub encoder: EncoderSpec,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Refuse datasets where one class holds half the rows or more, which
    /// would break the uniform baseline's known-bad property.
    #[serde(default = "default_true")]
    pub require_balanced: bool,
    #[serde(default = "default_true")]
    pub standardize_features: bool,
    /// Log length per trial; defaults to the training-split size.
    #[serde(default)]
    pub steps_per_trial: Option<usize>,
    #[serde(default)]
    pub label_flip_probability: f64,
    /// Known-bad margin for the uniform baseline policies.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub cb: CbConfig,
    #[serde(default)]
    pub full_ci: FullCiConfig,
}

fn default_eta() -> f64 {
    0.2
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(IglError::Config("trials must be >= 1".into()));
        }
        if self.algorithms.is_empty() {
            return Err(IglError::Config("no algorithms requested".into()));
        }
        if let DatasetSpec::Csv { path, .. } = &self.dataset {
            if !Path::new(path).exists() {
                return Err(IglError::Config(format!("dataset file {path} not found")));
            }
        }
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// One algorithm's aggregate over the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmResult {
    pub algorithm: Algorithm,
    pub mean_accuracy: Option<f64>,
    pub std_error: Option<f64>,
    /// Accuracy per trial; a failed trial records the error text instead.
    pub per_trial: Vec<TrialOutcome>,
    pub relative_to_cb: Option<f64>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrialOutcome {
    Ok { accuracy: f64 },
    Failed { error: String },
}

/// Full report of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub algorithms: Vec<AlgorithmResult>,
    /// Mean over trials of the best constant action's eval accuracy.
    pub constant_action_baseline: f64,
    pub diagnostics: Vec<Option<AiIglDiagnostics>>,
    pub warnings: Vec<String>,
    /// Zeroed in normalized reports; the only nondeterministic field.
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    /// The report with its timing removed, byte-stable across identical runs.
    pub fn normalized(&self) -> Self {
        Self {
            wall_clock_seconds: 0.0,
            ..self.clone()
        }
    }
}

struct TrialResult {
    outcomes: Vec<std::result::Result<f64, String>>,
    constant_baseline: f64,
    diagnostics: Option<AiIglDiagnostics>,
}

fn load_dataset(spec: &DatasetSpec) -> Result<SupervisedDataset> {
    match spec {
        DatasetSpec::Csv {
            path,
            label_column,
            options,
        } => load_csv(path, label_column, options),
        DatasetSpec::Synthetic(spec) => generate(spec),
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("IGL_LAB_THREADS") {
        let threads: usize = v
            .parse()
            .map_err(|_| IglError::Config(format!("IGL_LAB_THREADS='{v}' is not a number")))?;
        builder = builder.num_threads(threads.max(1));
    }
    builder
        .build()
        .map_err(|e| IglError::Config(format!("thread pool: {e}")))
}

/// Run every trial of every requested algorithm and aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let started = Instant::now();
    let dataset = load_dataset(&config.dataset)?;
    let balance = check_balanced(&dataset, 0.5);
    let mut warnings = Vec::new();
    if !balance.balanced {
        let msg = format!(
            "action distribution is unbalanced: one class holds {:.1}% of rows",
            balance.max_class_fraction * 100.0
        );
        if config.require_balanced {
            return Err(IglError::Dataset(msg));
        }
        warnings.push(msg);
    }
    if config.trials == 1 {
        warnings.push("single trial: standard errors are reported as 0".into());
    }

    let pool = thread_pool()?;
    let trials: Vec<Result<TrialResult>> = pool.install(|| {
        (0..config.trials)
            .into_par_iter()
            .map(|t| run_trial(config, &dataset, t))
            .collect()
    });

    // Environment construction problems (not per-algorithm ones) abort.
    let trials: Vec<TrialResult> = trials.into_iter().collect::<Result<_>>()?;

    let mut algorithms = Vec::with_capacity(config.algorithms.len());
    for (ai, &algorithm) in config.algorithms.iter().enumerate() {
        let per_trial: Vec<TrialOutcome> = trials
            .iter()
            .map(|tr| match &tr.outcomes[ai] {
                Ok(acc) => TrialOutcome::Ok { accuracy: *acc },
                Err(e) => TrialOutcome::Failed { error: e.clone() },
            })
            .collect();
        let accs: Vec<f64> = per_trial
            .iter()
            .filter_map(|o| match o {
                TrialOutcome::Ok { accuracy } => Some(*accuracy),
                TrialOutcome::Failed { .. } => None,
            })
            .collect();
        let failures = per_trial.len() - accs.len();
        let mean = if accs.is_empty() {
            None
        } else {
            Some(accs.iter().sum::<f64>() / accs.len() as f64)
        };
        let std_error = mean.map(|m| {
            if accs.len() < 2 {
                0.0
            } else {
                let var =
                    accs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (accs.len() - 1) as f64;
                (var / accs.len() as f64).sqrt()
            }
        });
        algorithms.push(AlgorithmResult {
            algorithm,
            mean_accuracy: mean,
            std_error,
            per_trial,
            relative_to_cb: None,
            failures,
        });
    }

    let cb_mean = algorithms
        .iter()
        .find(|a| a.algorithm == Algorithm::CbSkyline)
        .and_then(|a| a.mean_accuracy);
    if let Some(cb) = cb_mean {
        if cb > 0.0 {
            for a in &mut algorithms {
                a.relative_to_cb = a.mean_accuracy.map(|m| m / cb);
            }
        }
    }

    let constant_action_baseline =
        trials.iter().map(|t| t.constant_baseline).sum::<f64>() / trials.len() as f64;
    let diagnostics = trials.into_iter().map(|t| t.diagnostics).collect();

    Ok(ExperimentReport {
        config: config.clone(),
        algorithms,
        constant_action_baseline,
        diagnostics,
        warnings,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

fn run_trial(
    config: &ExperimentConfig,
    dataset: &SupervisedDataset,
    trial: usize,
) -> Result<TrialResult> {
    let seed = derive_seed(config.master_seed, trial as u64);
    let (train, eval) = train_eval_split(dataset, config.train_fraction, seed)?;
    let (train, eval) = if config.standardize_features {
        let (train_std, transform) = standardize(&train)?;
        (train_std, transform.apply(&eval)?)
    } else {
        (train, eval)
    };
    let k = train.num_classes;

    let reward_rule = if config.label_flip_probability > 0.0 {
        RewardRule::Noisy {
            p_flip: config.label_flip_probability,
        }
    } else {
        RewardRule::Deterministic
    };
    let env = IglEnvironment::new(train.clone(), config.encoder.build(&train), reward_rule)?;
    let steps = config.steps_per_trial.unwrap_or(train.num_rows());
    let log = simulate_log(&env, steps, derive_seed(seed, 1))?;

    let mut class_counts = vec![0usize; k];
    for &l in &eval.labels {
        class_counts[l] += 1;
    }
    let constant_baseline =
        class_counts.into_iter().max().unwrap_or(0) as f64 / eval.num_rows() as f64;

    let pi_bad = Policy::Uniform { num_actions: k };
    let mut outcomes = Vec::with_capacity(config.algorithms.len());
    let mut diagnostics = None;
    for &algorithm in &config.algorithms {
        let result: std::result::Result<f64, String> = match algorithm {
            Algorithm::CbSkyline => {
                let cb = CbConfig {
                    num_actions: k,
                    seed: derive_seed(seed, 2),
                    ..config.cb
                };
                run_cb_skyline(&log, &cb)
                    .and_then(|p| evaluate_policy(&p, &eval))
                    .map_err(|e| e.to_string())
            }
            Algorithm::FullCiIgl => {
                let fc = FullCiConfig {
                    num_actions: k,
                    seed: derive_seed(seed, 3),
                    ..config.full_ci
                };
                run_full_ci_igl(&log.interactions, &pi_bad, &fc)
                    .and_then(|p| evaluate_policy(&p, &eval))
                    .map_err(|e| e.to_string())
            }
            Algorithm::AiIgl => {
                let ai_config = AiIglConfig {
                    fit: FitConfig {
                        seed: derive_seed(seed, 4),
                        ..config.fit
                    },
                    cb: CbConfig {
                        num_actions: k,
                        seed: derive_seed(seed, 5),
                        ..config.cb
                    },
                };
                let symmetry = SymmetryConfig::uniform(k, config.eta);
                run_ai_igl(&log.interactions, &ai_config, &symmetry)
                    .and_then(|out| {
                        let acc = evaluate_policy(&out.policy, &eval)?;
                        diagnostics = Some(out.diagnostics);
                        Ok(acc)
                    })
                    .map_err(|e| e.to_string())
            }
        };
        outcomes.push(result);
    }

    Ok(TrialResult {
        outcomes,
        constant_baseline,
        diagnostics,
    })
}

/// Which files [`emit_report`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportFormats {
    pub json: bool,
    pub csv: bool,
}

impl Default for ReportFormats {
    fn default() -> Self {
        Self {
            json: true,
            csv: true,
        }
    }
}

/// Write the report under `dir`: `report.json` (complete), `summary.csv`
/// (algorithm, mean, stderr, relative), and `trials.csv` (plot-ready
/// per-trial accuracies). With `normalize`, timing is zeroed so identical
/// configs produce byte-identical files.
pub fn emit_report(
    report: &ExperimentReport,
    dir: impl AsRef<Path>,
    formats: ReportFormats,
    normalize: bool,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)
        .map_err(|e| IglError::Config(format!("cannot create {}: {e}", dir.display())))?;
    let report = if normalize {
        report.normalized()
    } else {
        report.clone()
    };
    let mut written = Vec::new();

    if formats.json {
        let path = dir.join("report.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        written.push(path);
    }
    if formats.csv {
        let path = dir.join("summary.csv");
        let mut out = String::from("algorithm,mean_accuracy,std_error,relative_to_cb\n");
        for a in &report.algorithms {
            out.push_str(&format!(
                "{},{},{},{}\n",
                a.algorithm.name(),
                a.mean_accuracy.map_or(String::new(), |v| v.to_string()),
                a.std_error.map_or(String::new(), |v| v.to_string()),
                a.relative_to_cb.map_or(String::new(), |v| v.to_string()),
            ));
        }
        std::fs::write(&path, out)?;
        written.push(path);

        let path = dir.join("trials.csv");
        let mut out = String::from("algorithm,trial,accuracy,error\n");
        for a in &report.algorithms {
            for (t, outcome) in a.per_trial.iter().enumerate() {
                match outcome {
                    TrialOutcome::Ok { accuracy } => {
                        out.push_str(&format!("{},{t},{accuracy},\n", a.algorithm.name()))
                    }
                    TrialOutcome::Failed { error } => out.push_str(&format!(
                        "{},{t},,{}\n",
                        a.algorithm.name(),
                        error.replace([',', '\n'], ";")
                    )),
                }
            }
        }
        std::fs::write(&path, out)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSpec::Synthetic(SyntheticSpec {
                num_classes: 3,
                num_features: 4,
                num_rows: 600,
                separation: 4.0,
                label_noise: 0.0,
                seed: 1,
            }),
            encoder: EncoderSpec::PairVector,
            algorithms: vec![Algorithm::CbSkyline, Algorithm::AiIgl],
            trials: 2,
            master_seed: 7,
            train_fraction: 0.9,
            require_balanced: true,
            standardize_features: true,
            steps_per_trial: None,
            label_flip_probability: 0.0,
            eta: 0.2,
            fit: FitConfig {
                epochs: 20,
                ..Default::default()
            },
            cb: CbConfig::default(),
            full_ci: FullCiConfig::default(),
        }
    }

    #[test]
    fn report_is_config_deterministic() {
        let config = small_config();
        let a = run_experiment(&config).unwrap().normalized();
        let b = run_experiment(&config).unwrap().normalized();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn report_has_means_and_relatives() {
        let report = run_experiment(&small_config()).unwrap();
        assert_eq!(report.algorithms.len(), 2);
        let cb = &report.algorithms[0];
        assert_eq!(cb.algorithm, Algorithm::CbSkyline);
        assert!(cb.mean_accuracy.unwrap() > 0.5);
        assert!((cb.relative_to_cb.unwrap() - 1.0).abs() < 1e-12);
        assert!(report.algorithms[1].relative_to_cb.is_some());
        assert!(report.constant_action_baseline > 0.2);
        assert_eq!(report.diagnostics.len(), 2);
        assert!(report.diagnostics[0].is_some());
    }

    #[test]
    fn single_trial_warns_and_zeroes_stderr() {
        let config = ExperimentConfig {
            trials: 1,
            algorithms: vec![Algorithm::CbSkyline],
            ..small_config()
        };
        let report = run_experiment(&config).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("single trial")));
        assert_eq!(report.algorithms[0].std_error, Some(0.0));
    }

    #[test]
    fn unbalanced_dataset_is_refused_when_required() {
        let mut config = small_config();
        config.dataset = DatasetSpec::Synthetic(SyntheticSpec {
            num_classes: 2,
            num_features: 3,
            num_rows: 100,
            separation: 3.0,
            label_noise: 0.4, // heavy asymmetric noise cannot unbalance round-robin labels
            seed: 2,
        });
        // Round-robin synthetic data stays balanced; force imbalance via CSV.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unbalanced.csv");
        let mut content = String::from("f,label\n");
        for i in 0..100 {
            content.push_str(&format!("{i},{}\n", if i < 80 { "a" } else { "b" }));
        }
        std::fs::write(&path, content).unwrap();
        config.dataset = DatasetSpec::Csv {
            path: path.to_string_lossy().into_owned(),
            label_column: LabelColumn::Name("label".into()),
            options: CsvOptions::default(),
        };
        assert!(run_experiment(&config).is_err());
        config.require_balanced = false;
        config.trials = 1;
        config.algorithms = vec![Algorithm::CbSkyline];
        let report = run_experiment(&config).unwrap();
        assert!(report.warnings.iter().any(|w| w.contains("unbalanced")));
    }

    #[test]
    fn emitted_files_are_consistent() {
        let report = run_experiment(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let written = emit_report(&report, dir.path(), ReportFormats::default(), true).unwrap();
        assert_eq!(written.len(), 3);

        let json: ExperimentReport =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
                .unwrap();
        assert_eq!(json, report.normalized());

        let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let lines: Vec<&str> = summary.lines().collect();
        assert_eq!(lines.len(), 3); // header + 2 algorithms
        assert_eq!(lines[0], "algorithm,mean_accuracy,std_error,relative_to_cb");

        // CSV relative column agrees with the JSON report.
        let cb_mean = json.algorithms[0].mean_accuracy.unwrap();
        for (line, algo) in lines[1..].iter().zip(&json.algorithms) {
            let fields: Vec<&str> = line.split(',').collect();
            let mean: f64 = fields[1].parse().unwrap();
            let relative: f64 = fields[3].parse().unwrap();
            assert!((mean - algo.mean_accuracy.unwrap()).abs() < 1e-9);
            assert!((relative - mean / cb_mean).abs() < 1e-9);
        }
    }

    #[test]
    fn config_json_roundtrip_with_defaults() {
        let json = r#"{
            "dataset": {"kind": "synthetic", "num_classes": 3, "num_features": 4,
                        "num_rows": 200, "separation": 3.0, "label_noise": 0.0, "seed": 5},
            "encoder": {"kind": "pair_vector"},
            "algorithms": ["cb_skyline", "ai_igl"]
        }"#;
        let config = ExperimentConfig::from_json(json).unwrap();
        assert_eq!(config.trials, 20);
        assert_eq!(config.train_fraction, 0.9);
        assert!(config.require_balanced);
        assert_eq!(config.fit, FitConfig::default());
    }
}
