//! Interactive configuration wizard: walks through models, tasks,
//! algorithm, merge method, and evaluator, then writes the equivalent
//! YAML so every wizard run is replayable via `evomerge run --config`.
//!
//! The wizard reads answers from any `BufRead`, so it runs against a
//! terminal or a scripted answers file (one answer per line, blank lines
//! meaning "take the default"). Interactive sessions reprompt on invalid
//! answers; scripted sessions fail on the first one. End of input aborts
//! cleanly — the YAML file is only written after the final answer, so an
//! aborted run leaves nothing behind.

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::config::{
    parse_config, AlgorithmConfig, ConfigError, MergeConfig, ModelsConfig, OutputConfig, RunConfig,
};
use crate::eval::{EvaluatorConfig, GraderConfig, SubsampleSpec, SubsampleStrategy};
use crate::merge::MergeMethod;
use crate::search::{Algorithm, Direction, EstimatorSpec, ObjectiveSpec};

#[derive(Debug, Error)]
pub enum WizardError {
    #[error("wizard aborted: end of input")]
    Aborted,
    #[error("invalid answer to '{prompt}': {answer:?} — {message}")]
    InvalidAnswer {
        prompt: String,
        answer: String,
        message: String,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// The paper's two evaluation modes; `lm-eval` is accepted as a
/// deprecated alias for `external`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMethod {
    External,
    Custom,
}

impl EvalMethod {
    /// True when `s` is the deprecated `lm-eval` spelling.
    pub fn is_deprecated_alias(s: &str) -> bool {
        s.eq_ignore_ascii_case("lm-eval")
    }
}

impl FromStr for EvalMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "external" | "lm-eval" => Ok(EvalMethod::External),
            "custom" => Ok(EvalMethod::Custom),
            other => Err(format!("unknown eval method '{other}' (expected external or custom)")),
        }
    }
}

impl fmt::Display for EvalMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMethod::External => "external",
            EvalMethod::Custom => "custom",
        })
    }
}

/// Single-task or multi-task merge, the other half of the four CLI modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeType {
    Single,
    Multi,
}

impl FromStr for MergeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "single" => Ok(MergeType::Single),
            "multi" => Ok(MergeType::Multi),
            other => Err(format!("unknown merge type '{other}' (expected single or multi)")),
        }
    }
}

impl fmt::Display for MergeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MergeType::Single => "single",
            MergeType::Multi => "multi",
        })
    }
}

/// Mode preselection (from `--eval-method` / `--merge-type`) and prompt
/// behavior. Scripted runs (`interactive: false`) fail on invalid input
/// instead of reprompting.
#[derive(Debug, Clone, Copy, Default)]
pub struct WizardPreset {
    pub eval_method: Option<EvalMethod>,
    pub merge_type: Option<MergeType>,
    pub interactive: bool,
}

/// What a completed wizard run produced: the parsed config and the YAML
/// file it was read back from.
#[derive(Debug, Clone)]
pub struct WizardOutcome {
    pub config: RunConfig,
    pub yaml_path: PathBuf,
}

struct Prompter<'a> {
    input: &'a mut dyn BufRead,
    output: &'a mut dyn Write,
    interactive: bool,
}

impl Prompter<'_> {
    /// One prompt round: returns the trimmed answer, or the default on a
    /// blank line. EOF aborts; a blank answer with no default is invalid.
    fn ask(&mut self, prompt: &str, default: Option<&str>) -> Result<String, WizardError> {
        loop {
            match default {
                Some(d) => write!(self.output, "{prompt} [{d}]: ")?,
                None => write!(self.output, "{prompt}: ")?,
            }
            self.output.flush()?;
            let mut line = String::new();
            if self.input.read_line(&mut line)? == 0 {
                return Err(WizardError::Aborted);
            }
            let answer = line.trim();
            if answer.is_empty() {
                match default {
                    Some(d) => return Ok(d.to_string()),
                    None => {
                        self.invalid(prompt, answer, "an answer is required")?;
                        continue;
                    }
                }
            }
            return Ok(answer.to_string());
        }
    }

    /// Prompts until `parse` accepts the answer (interactive) or fails on
    /// the first rejection (scripted).
    fn ask_parsed<T>(
        &mut self,
        prompt: &str,
        default: Option<&str>,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, WizardError> {
        loop {
            let answer = self.ask(prompt, default)?;
            match parse(&answer) {
                Ok(value) => return Ok(value),
                Err(message) => self.invalid(prompt, &answer, &message)?,
            }
        }
    }

    fn ask_yes_no(&mut self, prompt: &str, default: bool) -> Result<bool, WizardError> {
        let d = if default { "y" } else { "n" };
        self.ask_parsed(prompt, Some(d), |s| match s.to_ascii_lowercase().as_str() {
            "y" | "yes" => Ok(true),
            "n" | "no" => Ok(false),
            _ => Err("answer y or n".into()),
        })
    }

    /// Reports a bad answer: prints and lets the caller loop when
    /// interactive, errors out when scripted.
    fn invalid(&mut self, prompt: &str, answer: &str, message: &str) -> Result<(), WizardError> {
        if self.interactive {
            writeln!(self.output, "  ! {message}")?;
            Ok(())
        } else {
            Err(WizardError::InvalidAnswer {
                prompt: prompt.to_string(),
                answer: answer.to_string(),
                message: message.to_string(),
            })
        }
    }

    fn note(&mut self, text: &str) -> Result<(), WizardError> {
        writeln!(self.output, "{text}")?;
        Ok(())
    }
}

fn parse_count(min: usize) -> impl Fn(&str) -> Result<usize, String> {
    move |s| match s.parse::<usize>() {
        Ok(n) if n >= min => Ok(n),
        Ok(n) => Err(format!("{n} is too small (need at least {min})")),
        Err(_) => Err(format!("'{s}' is not a whole number")),
    }
}

fn parse_bounds(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err("write bounds as lo,hi (e.g. 0,1)".into());
    }
    let lo: f64 = parts[0].parse().map_err(|_| format!("'{}' is not a number", parts[0]))?;
    let hi: f64 = parts[1].parse().map_err(|_| format!("'{}' is not a number", parts[1]))?;
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(format!("lower bound {lo} must be below upper bound {hi}"));
    }
    Ok([lo, hi])
}

/// Runs the full prompt sequence (models → tasks/datasets → algorithm →
/// merge method → evaluator → output), writes the YAML, and returns the
/// config exactly as `parse_config` reads it back.
pub fn run_wizard(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    preset: WizardPreset,
) -> Result<WizardOutcome, WizardError> {
    let mut p = Prompter {
        input,
        output,
        interactive: preset.interactive,
    };
    p.note("evomerge wizard — answer the prompts, blank takes the [default].")?;

    // Mode selection, unless preselected by CLI flags.
    let merge_type = match preset.merge_type {
        Some(mode) => {
            p.note(&format!("Merge type: {mode} (from --merge-type)"))?;
            mode
        }
        None => p.ask_parsed("Merge type (single task or multi task)", Some("single"), |s| {
            MergeType::from_str(s)
        })?,
    };
    let eval_method = match preset.eval_method {
        Some(method) => {
            p.note(&format!("Evaluation method: {method} (from --eval-method)"))?;
            method
        }
        None => {
            let (method, deprecated) = p.ask_parsed(
                "Evaluation method (external command or custom built-in)",
                Some("external"),
                |s| EvalMethod::from_str(s).map(|m| (m, EvalMethod::is_deprecated_alias(s))),
            )?;
            if deprecated {
                p.note("note: 'lm-eval' is deprecated; use 'external'.")?;
            }
            method
        }
    };

    // Models.
    let n_endpoints = p.ask_parsed("Number of endpoint models to merge", Some("2"), parse_count(1))?;
    let mut endpoints = Vec::with_capacity(n_endpoints);
    for i in 1..=n_endpoints {
        let path = p.ask(&format!("Endpoint model {i} path (.safetensors)"), None)?;
        endpoints.push(PathBuf::from(path));
    }
    let base_answer = p.ask(
        "Base model path (blank if the merge method takes none)",
        Some(""),
    )?;
    let mut base = (!base_answer.is_empty()).then(|| PathBuf::from(base_answer));

    // Tasks / datasets.
    let n_tasks = match merge_type {
        MergeType::Single => 1,
        MergeType::Multi => p.ask_parsed("Number of tasks to optimize", Some("2"), parse_count(2))?,
    };
    let mut objectives: Vec<ObjectiveSpec> = Vec::with_capacity(n_tasks);
    for i in 1..=n_tasks {
        let default_name = format!("task{i}");
        let taken: Vec<String> = objectives.iter().map(|o| o.name.clone()).collect();
        let name = p.ask_parsed(&format!("Task {i} name"), Some(&default_name), |s| {
            if taken.iter().any(|t| t == s) {
                Err(format!("task name '{s}' is already used"))
            } else {
                Ok(s.to_string())
            }
        })?;
        let dataset = PathBuf::from(p.ask(&format!("Task {i} dataset path (JSONL)"), None)?);
        let subsample_n = p.ask_parsed(
            &format!("Task {i} fitness subsample size (blank = full dataset)"),
            Some(""),
            |s| {
                if s.is_empty() {
                    Ok(None)
                } else {
                    parse_count(1)(s).map(Some)
                }
            },
        )?;
        let subsample = match subsample_n {
            None => None,
            Some(n) => {
                let seed = p.ask_parsed(&format!("Task {i} subsample seed"), Some("0"), |s| {
                    s.parse::<u64>().map_err(|_| format!("'{s}' is not a whole number"))
                })?;
                Some(SubsampleSpec {
                    n,
                    seed,
                    strategy: SubsampleStrategy::Random,
                })
            }
        };
        let has_subsample = subsample.is_some();
        let estimator = p.ask_parsed(
            &format!("Task {i} estimator (full/random/pirt/gpirt/mpirt/gmpirt)"),
            Some("full"),
            |s| match s.to_ascii_lowercase().as_str() {
                "full" => Ok(EstimatorSpec::Full),
                "random" if has_subsample => Ok(EstimatorSpec::Random),
                "random" => Err("the random estimator needs a subsample size; set one above".into()),
                "pirt" | "gpirt" | "mpirt" | "gmpirt" => Ok(match s {
                    "pirt" => EstimatorSpec::Pirt { bank: PathBuf::new() },
                    "gpirt" => EstimatorSpec::Gpirt {
                        bank: PathBuf::new(),
                        lambda: crate::irt::GPIRT_DEFAULT_LAMBDA,
                    },
                    "mpirt" => EstimatorSpec::Mpirt { bank: PathBuf::new() },
                    _ => EstimatorSpec::Gmpirt { bank: PathBuf::new() },
                }),
                other => Err(format!("unknown estimator '{other}'")),
            },
        )?;
        let estimator = match estimator {
            EstimatorSpec::Full => EstimatorSpec::Full,
            EstimatorSpec::Random => EstimatorSpec::Random,
            irt => {
                let bank = PathBuf::from(p.ask(&format!("Task {i} item bank path (JSON)"), None)?);
                match irt {
                    EstimatorSpec::Pirt { .. } => EstimatorSpec::Pirt { bank },
                    EstimatorSpec::Gpirt { .. } => {
                        let lambda = p.ask_parsed(&format!("Task {i} GP-IRT lambda"), Some("0.5"), |s| {
                            match s.parse::<f64>() {
                                Ok(l) if (0.0..=1.0).contains(&l) => Ok(l),
                                Ok(l) => Err(format!("{l} outside [0, 1]")),
                                Err(_) => Err(format!("'{s}' is not a number")),
                            }
                        })?;
                        EstimatorSpec::Gpirt { bank, lambda }
                    }
                    EstimatorSpec::Mpirt { .. } => EstimatorSpec::Mpirt { bank },
                    _ => EstimatorSpec::Gmpirt { bank },
                }
            }
        };
        objectives.push(ObjectiveSpec {
            name,
            dataset,
            subsample,
            // The evaluator is shared across tasks and filled in below.
            evaluator: EvaluatorConfig::ToyMlp,
            estimator,
            direction: Direction::Maximize,
        });
    }

    // Algorithm.
    let default_algorithm = if n_tasks >= 2 { "nsga2" } else { "ga" };
    let algorithm = p.ask_parsed(
        "Algorithm (ga/de/nsga2)",
        Some(default_algorithm),
        |s| match Algorithm::from_str(s) {
            Ok(Algorithm::Nsga2) if n_tasks < 2 => {
                Err("nsga2 is multi-objective; this is a single-task merge — pick ga or de".into())
            }
            Ok(a @ (Algorithm::Ga | Algorithm::De)) if n_tasks != 1 => {
                Err(format!("{a} is single-objective; this merge has {n_tasks} tasks — pick nsga2"))
            }
            other => other,
        },
    )?;
    let pop_size = p.ask_parsed("Population size", Some("25"), parse_count(4))?;
    let generations = p.ask_parsed("Generations", Some("7"), parse_count(0))?;

    // Merge method.
    let method = p.ask_parsed(
        "Merge method (linear/slerp/task_arithmetic/ties/dare_linear/dare_ties)",
        Some("task_arithmetic"),
        |s| {
            let method: MergeMethod =
                serde_yaml::from_str(s).map_err(|_| format!("unknown merge method '{s}'"))?;
            if method == MergeMethod::Slerp && n_endpoints != 2 {
                return Err(format!("slerp merges exactly 2 models (you gave {n_endpoints})"));
            }
            Ok(method)
        },
    )?;
    base = match (method.needs_base(), base) {
        (true, Some(b)) => Some(b),
        (true, None) => {
            let path = p.ask(
                &format!("Merge method {method} needs a base model. Base model path"),
                None,
            )?;
            Some(PathBuf::from(path))
        }
        (false, Some(_)) => {
            p.note(&format!("note: {method} takes no base model; ignoring the base path."))?;
            None
        }
        (false, None) => None,
    };
    let bounds = p.ask_parsed("Weight gene bounds as lo,hi", Some("0,1"), parse_bounds)?;
    let evolve_density = if matches!(method, MergeMethod::Ties | MergeMethod::DareTies) {
        p.ask_yes_no("Evolve the density gene?", false)?
    } else {
        false
    };
    let evolve_drop_rate = if matches!(method, MergeMethod::DareLinear | MergeMethod::DareTies) {
        p.ask_yes_no("Evolve the drop-rate gene?", false)?
    } else {
        false
    };

    // Evaluator, shared by every task.
    let grader_for = |p: &mut Prompter| -> Result<GraderConfig, WizardError> {
        let kind = p.ask_parsed("Grader (multiple_choice/math)", Some("multiple_choice"), |s| {
            match s.to_ascii_lowercase().as_str() {
                "multiple_choice" => Ok("multiple_choice"),
                "math" => Ok("math"),
                other => Err(format!("unknown grader '{other}'")),
            }
        })?;
        if kind == "math" {
            let check_language = p.ask_yes_no("Require responses to match each item's language?", false)?;
            Ok(GraderConfig::Math { check_language })
        } else {
            Ok(GraderConfig::MultipleChoice)
        }
    };
    let evaluator = match eval_method {
        EvalMethod::External => {
            let cmd = p.ask_parsed(
                "External evaluator command (checkpoint path is appended)",
                None,
                |s| {
                    let parts: Vec<String> = s.split_whitespace().map(str::to_string).collect();
                    if parts.is_empty() {
                        Err("the command must not be empty".into())
                    } else {
                        Ok(parts)
                    }
                },
            )?;
            EvaluatorConfig::External {
                cmd,
                grader: grader_for(&mut p)?,
            }
        }
        EvalMethod::Custom => {
            let kind = p.ask_parsed("Built-in evaluator (toy_mlp/constant)", Some("toy_mlp"), |s| {
                match s.to_ascii_lowercase().as_str() {
                    "toy_mlp" => Ok("toy_mlp"),
                    "constant" => Ok("constant"),
                    other => Err(format!("unknown evaluator '{other}'")),
                }
            })?;
            if kind == "constant" {
                let reply = p.ask("Constant reply (blank = echo the gold answer)", Some(""))?;
                EvaluatorConfig::Constant {
                    reply: (!reply.is_empty()).then_some(reply),
                    grader: grader_for(&mut p)?,
                }
            } else {
                EvaluatorConfig::ToyMlp
            }
        }
    };
    for objective in &mut objectives {
        objective.evaluator = evaluator.clone();
    }

    // Output and seed.
    let work_dir = PathBuf::from(p.ask("Work directory for run artifacts", Some("runs"))?);
    let keep_best = p.ask_parsed("Merged checkpoints to keep on disk", Some("3"), parse_count(0))?;
    let seed = p.ask_parsed("Run seed", Some("0"), |s| {
        s.parse::<u64>().map_err(|_| format!("'{s}' is not a whole number"))
    })?;
    let yaml_path = PathBuf::from(p.ask("Write config to", Some("evomerge.yaml"))?);

    let config = RunConfig {
        seed,
        models: ModelsConfig { base, endpoints },
        merge: MergeConfig {
            method,
            bounds,
            density: 0.5,
            drop_rate: 0.5,
            evolve_density,
            evolve_drop_rate,
        },
        objectives,
        algorithm: AlgorithmConfig {
            name: Some(algorithm),
            pop_size,
            generations,
            ..AlgorithmConfig::default()
        },
        output: OutputConfig {
            work_dir,
            keep_best,
            ..OutputConfig::default()
        },
    };

    // The single side effect, after the last answer: abort leaves nothing.
    fs::write(&yaml_path, config.to_yaml())?;
    // Read it back the same way `run --config` will, so the returned
    // config and the file can never drift apart.
    let config = parse_config(&yaml_path)?;
    p.note(&format!(
        "Wrote {}. Replay this run with: evomerge run --config {}",
        yaml_path.display(),
        yaml_path.display()
    ))?;
    Ok(WizardOutcome { config, yaml_path })
}
