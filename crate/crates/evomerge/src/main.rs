//! `evomerge` command-line front end: evolutionary merge searches from
//! YAML configs, an interactive config wizard, one-shot merges, one-off
//! checkpoint evaluation, and 2PL item-bank calibration.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure. Nothing is
//! written before the relevant config/arguments validate.

use std::error::Error;
use std::fs;
use std::io::{self, Cursor};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use sha2::{Digest, Sha256};

use evomerge::checkpoint::{read_checkpoint, CheckpointError, TensorMap};
use evomerge::config::{parse_config, ConfigError};
use evomerge::eval::{evaluate_checkpoint, read_jsonl_dataset, EvalError, EvaluatorConfig, ModelRef};
use evomerge::irt::{calibrate_item_bank, save_item_bank, IrtError, ResponseMatrix};
use evomerge::merge::{apply_recipe, MergeError, MergeRecipe};
use evomerge::search::{search, MergingProblem, SearchError};
use evomerge::wizard::{run_wizard, EvalMethod, MergeType, WizardError, WizardPreset};

#[derive(Parser)]
#[command(
    name = "evomerge",
    version,
    about = "Evolutionary model merging: search merge recipes with GA, DE, or NSGA-II",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an evolutionary merge search from a YAML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a config interactively; writes the YAML so the run is
    /// replayable with `run --config`.
    Wizard {
        /// Scripted answers file, one answer per line (blank = default),
        /// instead of prompting on stdin.
        #[arg(long)]
        answers: Option<PathBuf>,
        /// Preselect the evaluation mode: external or custom ("lm-eval"
        /// is a deprecated alias for external).
        #[arg(long)]
        eval_method: Option<String>,
        /// Preselect single- or multi-task merging.
        #[arg(long)]
        merge_type: Option<String>,
    },
    /// Merge once with explicit weights — no evolution.
    Merge {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated merge weights, e.g. --weights 0.6,0.4
        /// (slerp takes a single interpolation value).
        #[arg(long)]
        weights: String,
        /// Output checkpoint path
        /// (default: <work_dir>/merged_<hash>.safetensors).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate one checkpoint on a JSONL dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Evaluator spec: toy_mlp, constant, or a YAML mapping like
        /// '{kind: external, cmd: [python3, eval.py]}'.
        #[arg(long)]
        evaluator: String,
    },
    /// Fit a 2PL item bank from a models × items response matrix.
    CalibrateIrt {
        /// CSV whose header row lists item ids, followed by one 0/1 row
        /// per model.
        #[arg(long)]
        responses: PathBuf,
        /// Where to write the calibrated bank (JSON).
        #[arg(long)]
        out: PathBuf,
        /// Anchor items to select by Fisher information
        /// (default 10, capped at the item count).
        #[arg(long)]
        anchors: Option<usize>,
    },
}

enum CliError {
    /// Bad arguments: exit 1.
    Usage(String),
    /// The command itself failed: exit 2.
    Runtime(Box<dyn Error>),
}

macro_rules! runtime_from {
    ($($t:ty),* $(,)?) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(Box::new(e))
            }
        })*
    };
}

runtime_from!(
    ConfigError,
    SearchError,
    WizardError,
    EvalError,
    IrtError,
    MergeError,
    CheckpointError,
    io::Error,
    serde_json::Error,
    csv::Error,
);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            let mut source = e.source();
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { config, seed } => cmd_run(&config, seed),
        Command::Wizard {
            answers,
            eval_method,
            merge_type,
        } => cmd_wizard(answers, eval_method, merge_type),
        Command::Merge { config, weights, out } => cmd_merge(&config, &weights, out),
        Command::Evaluate {
            model,
            dataset,
            evaluator,
        } => cmd_evaluate(&model, &dataset, &evaluator),
        Command::CalibrateIrt { responses, out, anchors } => cmd_calibrate(&responses, &out, anchors),
    }
}

fn cmd_run(config_path: &std::path::Path, seed: Option<u64>) -> Result<(), CliError> {
    let mut config = parse_config(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let algorithm = config.algorithm_name();
    let mut problem = MergingProblem::new(config.problem_spec())?;
    let report = search(&mut problem, algorithm, &config.evo_params())?;

    let report_path = problem.run_dir().join("report.json");
    fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;

    println!(
        "run {} ({algorithm}, seed {}): {} evaluations in {} ms",
        report.run_id, report.seed, report.evaluations, report.wall_ms
    );
    for (i, best) in report.best.iter().enumerate() {
        let objectives: Vec<String> = report
            .objective_names
            .iter()
            .zip(&best.objectives)
            .map(|(name, value)| format!("{name}={value:.4}"))
            .collect();
        let marker = if best.is_equal_weight_best { "  *best" } else { "" };
        println!("best[{i}] {}{marker}", objectives.join(" "));
        if let Some(path) = &best.checkpoint_path {
            println!("        checkpoint {}", path.display());
        }
    }
    println!("report {}", report_path.display());
    println!("logs   {} {}", report.csv_path.display(), report.jsonl_path.display());
    Ok(())
}

fn cmd_wizard(
    answers: Option<PathBuf>,
    eval_method: Option<String>,
    merge_type: Option<String>,
) -> Result<(), CliError> {
    let eval_method = match eval_method {
        None => None,
        Some(s) => {
            if EvalMethod::is_deprecated_alias(&s) {
                eprintln!("warning: --eval-method lm-eval is deprecated; use --eval-method external");
            }
            Some(EvalMethod::from_str(&s).map_err(CliError::Usage)?)
        }
    };
    let merge_type = merge_type
        .map(|s| MergeType::from_str(&s).map_err(CliError::Usage))
        .transpose()?;
    let mut stdout = io::stdout();
    let outcome = match answers {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::Usage(format!("--answers {}: {e}", path.display())))?;
            let mut input = Cursor::new(text);
            let preset = WizardPreset {
                eval_method,
                merge_type,
                interactive: false,
            };
            run_wizard(&mut input, &mut stdout, preset)?
        }
        None => {
            let stdin = io::stdin();
            let mut input = stdin.lock();
            let preset = WizardPreset {
                eval_method,
                merge_type,
                interactive: true,
            };
            run_wizard(&mut input, &mut stdout, preset)?
        }
    };
    drop(outcome);
    Ok(())
}

fn cmd_merge(
    config_path: &std::path::Path,
    weights: &str,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let config = parse_config(config_path)?;
    let weights: Vec<f64> = weights
        .split(',')
        .map(|w| {
            w.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("--weights: '{}' is not a number", w.trim())))
        })
        .collect::<Result<_, _>>()?;
    let spec = config.genotype_spec();
    if weights.len() != spec.weight_count() {
        return Err(CliError::Usage(format!(
            "--weights: {} merges take {} weight(s), {} given",
            config.merge.method,
            spec.weight_count(),
            weights.len()
        )));
    }

    let recipe = MergeRecipe {
        method: config.merge.method,
        weights,
        density: config.merge.density,
        drop_rate: config.merge.drop_rate,
        seed: config.seed,
    };
    let base = config.models.base.as_ref().map(read_checkpoint).transpose()?;
    let endpoints: Vec<TensorMap> = config
        .models
        .endpoints
        .iter()
        .map(read_checkpoint)
        .collect::<Result<_, _>>()?;
    let endpoint_refs: Vec<&TensorMap> = endpoints.iter().collect();
    let merged = apply_recipe(&recipe, base.as_ref(), &endpoint_refs)?;

    let bytes = merged.to_bytes();
    let hash = sha256_hex(&bytes);
    let out = out.unwrap_or_else(|| {
        config
            .output
            .work_dir
            .join(format!("merged_{}.safetensors", &hash[..12]))
    });
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&out, &bytes)?;
    println!("sha256 {hash}");
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_evaluate(
    model: &std::path::Path,
    dataset: &std::path::Path,
    evaluator: &str,
) -> Result<(), CliError> {
    let evaluator = parse_evaluator_spec(evaluator).map_err(CliError::Usage)?;
    let items = read_jsonl_dataset(dataset)?;
    if items.is_empty() {
        return Err(CliError::Usage(format!("dataset {} is empty", dataset.display())));
    }
    let record = evaluate_checkpoint(ModelRef::Path(model), &items, &evaluator)?;
    let n_correct = record.correct.iter().filter(|c| **c).count();
    println!("accuracy {:.4}", record.accuracy);
    println!("correct {n_correct}/{}", record.correct.len());
    if !record.missing_ids.is_empty() {
        println!("missing responses for {} item(s)", record.missing_ids.len());
    }
    Ok(())
}

fn parse_evaluator_spec(s: &str) -> Result<EvaluatorConfig, String> {
    match s.trim() {
        "toy_mlp" => Ok(EvaluatorConfig::ToyMlp),
        "constant" => Ok(EvaluatorConfig::Constant {
            reply: None,
            grader: Default::default(),
        }),
        other => serde_yaml::from_str(other)
            .map_err(|e| format!("--evaluator: not toy_mlp/constant or a YAML mapping ({e})")),
    }
}

fn cmd_calibrate(
    responses: &std::path::Path,
    out: &std::path::Path,
    anchors: Option<usize>,
) -> Result<(), CliError> {
    let mut reader = csv::Reader::from_path(responses)
        .map_err(|e| CliError::Usage(format!("--responses {}: {e}", responses.display())))?;
    let item_ids: Vec<String> = reader
        .headers()
        .map_err(CliError::from)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, result) in reader.records().enumerate() {
        let record = result?;
        let mut row = Vec::with_capacity(record.len());
        for (j, field) in record.iter().enumerate() {
            let bit = match field.trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(CliError::Usage(format!(
                        "--responses row {} column {} ({}): '{other}' is not 0/1",
                        i + 1,
                        j + 1,
                        item_ids.get(j).map_or("?", String::as_str),
                    )))
                }
            };
            row.push(bit);
        }
        rows.push(row);
    }
    let n_items = item_ids.len();
    let matrix = ResponseMatrix::new(item_ids, rows)?;
    let n_anchors = anchors.unwrap_or_else(|| 10.min(n_items));
    let report = calibrate_item_bank(&matrix, n_anchors)?;
    save_item_bank(out, &report.bank)?;
    println!(
        "calibrated {} items ({} anchors) from {} models in {} round(s), log-likelihood {:.3}",
        report.bank.len(),
        report.bank.anchor_ids().len(),
        report.thetas.len(),
        report.rounds,
        report.log_likelihood
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
