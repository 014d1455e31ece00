//! YAML run configuration: the schema behind `evomerge run --config`,
//! documented field-by-field in `docs/config.md`.
//!
//! Parsing is strict and side-effect free: unknown keys are rejected with
//! the offending YAML path (and a spelling suggestion), type errors cite
//! the path they occurred at, and semantic rules (bounds ordering, merge
//! method ↔ base-model pairing, algorithm arity) are all checked before
//! the caller touches the filesystem. Relative paths are resolved against
//! the config file's directory; `EVOMERGE_WORK_DIR` overrides
//! `output.work_dir`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_yaml::Value;
use thiserror::Error;

use crate::eval::EvaluatorConfig;
use crate::evo::EvoParams;
use crate::merge::{GenotypeSpec, MergeMethod};
use crate::search::{Algorithm, EstimatorSpec, MergingProblemSpec, ObjectiveSpec};

/// Bounds for the density gene when `merge.evolve_density` is set. The
/// recipe contract wants density in (0, 1]; a closed searchable interval
/// keeps every engine-clipped gene valid.
pub const DENSITY_GENE_BOUNDS: (f64, f64) = (0.05, 1.0);
/// Bounds for the drop-rate gene when `merge.evolve_drop_rate` is set
/// (drop_rate lives in [0, 1); 1 would rescale by 1/0).
pub const DROP_RATE_GENE_BOUNDS: (f64, f64) = (0.0, 0.95);

#[derive(Debug, Error)]
pub enum ConfigError {
    /// Message always leads with the YAML path it refers to.
    #[error("{0}")]
    Invalid(String),
    #[error("read {0}: {1}")]
    Io(PathBuf, #[source] std::io::Error),
    #[error("yaml: {0}")]
    Yaml(#[from] serde_yaml::Error),
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(message.into())
}

/// Top-level run configuration. Field groups mirror the YAML sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub models: ModelsConfig,
    pub merge: MergeConfig,
    pub objectives: Vec<ObjectiveSpec>,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsConfig {
    /// Base model for task-vector methods; must be absent otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<PathBuf>,
    pub endpoints: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MergeConfig {
    pub method: MergeMethod,
    /// Uniform [lo, hi] bounds for every weight gene.
    #[serde(default = "default_bounds")]
    pub bounds: [f64; 2],
    /// TIES trim density when the density gene is not evolved.
    #[serde(default = "default_half")]
    pub density: f64,
    /// DARE drop rate when the drop-rate gene is not evolved.
    #[serde(default = "default_half")]
    pub drop_rate: f64,
    #[serde(default)]
    pub evolve_density: bool,
    #[serde(default)]
    pub evolve_drop_rate: bool,
}

fn default_bounds() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    /// `None` picks ga for one objective and nsga2 for several.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<Algorithm>,
    #[serde(default = "default_pop_size")]
    pub pop_size: usize,
    #[serde(default = "default_generations")]
    pub generations: usize,
    #[serde(default = "default_eta_c")]
    pub eta_c: f64,
    #[serde(default = "default_eta_m")]
    pub eta_m: f64,
    /// Per-gene mutation probability; `None` means 1/n_genes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_mut: Option<f64>,
    #[serde(default = "default_tournament_size")]
    pub tournament_size: usize,
    #[serde(default = "default_de_f")]
    pub de_f: f64,
    #[serde(default = "default_de_cr")]
    pub de_cr: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            name: None,
            pop_size: default_pop_size(),
            generations: default_generations(),
            eta_c: default_eta_c(),
            eta_m: default_eta_m(),
            p_mut: None,
            tournament_size: default_tournament_size(),
            de_f: default_de_f(),
            de_cr: default_de_cr(),
        }
    }
}

// Defaults delegate to EvoParams so the two never drift apart.
fn default_pop_size() -> usize {
    EvoParams::default().pop_size
}

fn default_generations() -> usize {
    EvoParams::default().generations
}

fn default_eta_c() -> f64 {
    EvoParams::default().eta_c
}

fn default_eta_m() -> f64 {
    EvoParams::default().eta_m
}

fn default_tournament_size() -> usize {
    EvoParams::default().tournament_size
}

fn default_de_f() -> f64 {
    EvoParams::default().de_f
}

fn default_de_cr() -> f64 {
    EvoParams::default().de_cr
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    /// Evaluation-log overrides; defaults live inside the run directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_log: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jsonl_log: Option<PathBuf>,
    #[serde(default = "default_keep_best")]
    pub keep_best: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            work_dir: default_work_dir(),
            csv_log: None,
            jsonl_log: None,
            keep_best: default_keep_best(),
        }
    }
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn default_keep_best() -> usize {
    3
}

/// Reads, validates, and resolves a config file. Relative paths become
/// absolute against the file's directory; `EVOMERGE_WORK_DIR` (if set)
/// replaces `output.work_dir` verbatim.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(path.to_path_buf(), e))?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let work_dir_override = std::env::var_os("EVOMERGE_WORK_DIR").map(PathBuf::from);
    parse_config_str(&text, &dir, work_dir_override.as_deref())
}

/// The pure core of [`parse_config`]: YAML text in, validated config out.
pub fn parse_config_str(
    yaml: &str,
    base_dir: &Path,
    work_dir_override: Option<&Path>,
) -> Result<RunConfig, ConfigError> {
    let value: Value = serde_yaml::from_str(yaml)?;
    check_unknown_keys(&value)?;
    // Deserialize from the text, not the Value: serde_yaml's Value round
    // trip rejects the `{variant: …}` enum shorthand the text path allows.
    let deserializer = serde_yaml::Deserializer::from_str(yaml);
    let mut config: RunConfig = serde_path_to_error::deserialize(deserializer).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        if path == "." {
            invalid(format!("config: {message}"))
        } else if message.starts_with(&path) {
            invalid(message)
        } else {
            invalid(format!("{path}: {message}"))
        }
    })?;
    config.validate()?;
    config.resolve_paths(base_dir);
    if let Some(dir) = work_dir_override {
        config.output.work_dir = dir.to_path_buf();
    }
    Ok(config)
}

impl RunConfig {
    /// Explicit algorithm, or the arity-matching default: ga for one
    /// objective, nsga2 for several.
    pub fn algorithm_name(&self) -> Algorithm {
        self.name_or_default()
    }

    fn name_or_default(&self) -> Algorithm {
        self.algorithm.name.unwrap_or(if self.objectives.len() >= 2 {
            Algorithm::Nsga2
        } else {
            Algorithm::Ga
        })
    }

    /// Genotype layout implied by the merge section: one weight gene per
    /// endpoint (a single interpolation gene for slerp) within
    /// `merge.bounds`, plus evolved hyperparameter genes on their fixed
    /// valid ranges.
    pub fn genotype_spec(&self) -> GenotypeSpec {
        let [lo, hi] = self.merge.bounds;
        let mut spec = GenotypeSpec::new(self.merge.method, self.models.endpoints.len(), lo, hi);
        spec.default_density = self.merge.density;
        spec.default_drop_rate = self.merge.drop_rate;
        spec.evolve_density = self.merge.evolve_density;
        spec.evolve_drop_rate = self.merge.evolve_drop_rate;
        spec.bounds = vec![(lo, hi); spec.weight_count()];
        if spec.evolve_density {
            spec.bounds.push(DENSITY_GENE_BOUNDS);
        }
        if spec.evolve_drop_rate {
            spec.bounds.push(DROP_RATE_GENE_BOUNDS);
        }
        spec
    }

    pub fn problem_spec(&self) -> MergingProblemSpec {
        MergingProblemSpec {
            genotype_spec: self.genotype_spec(),
            base: self.models.base.clone(),
            endpoints: self.models.endpoints.clone(),
            objectives: self.objectives.clone(),
            work_dir: self.output.work_dir.clone(),
            csv_log: self.output.csv_log.clone(),
            jsonl_log: self.output.jsonl_log.clone(),
            keep_best: self.output.keep_best,
            seed: self.seed,
        }
    }

    pub fn evo_params(&self) -> EvoParams {
        EvoParams {
            pop_size: self.algorithm.pop_size,
            generations: self.algorithm.generations,
            eta_c: self.algorithm.eta_c,
            eta_m: self.algorithm.eta_m,
            p_mut: self.algorithm.p_mut,
            tournament_size: self.algorithm.tournament_size,
            de_f: self.algorithm.de_f,
            de_cr: self.algorithm.de_cr,
            seed: self.seed,
        }
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("RunConfig serializes to YAML")
    }

    /// Semantic validation; every message leads with the YAML path.
    fn validate(&self) -> Result<(), ConfigError> {
        if self.models.endpoints.is_empty() {
            return Err(invalid("models.endpoints: at least one endpoint model is required"));
        }
        let [lo, hi] = self.merge.bounds;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(invalid(format!(
                "merge.bounds: lower bound {lo} is not below upper bound {hi}"
            )));
        }
        if !(self.merge.density > 0.0 && self.merge.density <= 1.0) {
            return Err(invalid(format!(
                "merge.density: {} outside (0, 1]",
                self.merge.density
            )));
        }
        if !(0.0..1.0).contains(&self.merge.drop_rate) {
            return Err(invalid(format!(
                "merge.drop_rate: {} outside [0, 1)",
                self.merge.drop_rate
            )));
        }
        let method = self.merge.method;
        if method.needs_base() && self.models.base.is_none() {
            return Err(invalid(format!(
                "models.base: merge method {method} requires a base model"
            )));
        }
        if !method.needs_base() && self.models.base.is_some() {
            return Err(invalid(format!(
                "models.base: merge method {method} takes no base model"
            )));
        }
        if method == MergeMethod::Slerp && self.models.endpoints.len() != 2 {
            return Err(invalid(format!(
                "models.endpoints: slerp merges exactly 2 models (got {})",
                self.models.endpoints.len()
            )));
        }

        if self.objectives.is_empty() {
            return Err(invalid("objectives: at least one objective is required"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, objective) in self.objectives.iter().enumerate() {
            if objective.name.is_empty() {
                return Err(invalid(format!("objectives[{i}].name: must not be empty")));
            }
            if !seen.insert(objective.name.as_str()) {
                return Err(invalid(format!(
                    "objectives[{i}].name: duplicate name '{}'",
                    objective.name
                )));
            }
            if let Some(sub) = &objective.subsample {
                if sub.n == 0 {
                    return Err(invalid(format!("objectives[{i}].subsample.n: must be at least 1")));
                }
            }
            if let EvaluatorConfig::External { cmd, .. } = &objective.evaluator {
                if cmd.is_empty() {
                    return Err(invalid(format!(
                        "objectives[{i}].evaluator.cmd: external command must not be empty"
                    )));
                }
            }
            if let EstimatorSpec::Gpirt { lambda, .. } = &objective.estimator {
                if !(0.0..=1.0).contains(lambda) {
                    return Err(invalid(format!(
                        "objectives[{i}].estimator.lambda: {lambda} outside [0, 1]"
                    )));
                }
            }
        }

        let name = self.name_or_default();
        let n = self.objectives.len();
        match name {
            Algorithm::Nsga2 if n < 2 => {
                return Err(invalid(format!(
                    "algorithm.name: nsga2 is multi-objective; configure at least 2 objectives \
                     (got {n}) or pick ga/de"
                )))
            }
            Algorithm::Ga | Algorithm::De if n != 1 => {
                return Err(invalid(format!(
                    "algorithm.name: {name} is single-objective; this config has {n} objectives \
                     — use nsga2"
                )))
            }
            _ => {}
        }
        self.evo_params()
            .validate()
            .map_err(|e| invalid(format!("algorithm: {e}")))?;
        Ok(())
    }

    /// Makes every relative path absolute against `base_dir`.
    fn resolve_paths(&mut self, base_dir: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        if let Some(base) = &mut self.models.base {
            resolve(base);
        }
        for endpoint in &mut self.models.endpoints {
            resolve(endpoint);
        }
        for objective in &mut self.objectives {
            resolve(&mut objective.dataset);
            match &mut objective.estimator {
                EstimatorSpec::Pirt { bank }
                | EstimatorSpec::Gpirt { bank, .. }
                | EstimatorSpec::Mpirt { bank }
                | EstimatorSpec::Gmpirt { bank } => resolve(bank),
                EstimatorSpec::Full | EstimatorSpec::Random => {}
            }
        }
        resolve(&mut self.output.work_dir);
        if let Some(log) = &mut self.output.csv_log {
            resolve(log);
        }
        if let Some(log) = &mut self.output.jsonl_log {
            resolve(log);
        }
    }
}

/// Allowed keys per schema location; `objectives[3]` normalizes to
/// `objectives[]`. Mapping-valued locations not listed here (e.g. a
/// subsample strategy given as a plain string) are left to serde.
fn allowed_keys(normalized_path: &str, node: &serde_yaml::Mapping) -> Option<&'static [&'static str]> {
    let kind = node.get("kind").and_then(Value::as_str);
    match normalized_path {
        "" => Some(&["seed", "models", "merge", "objectives", "algorithm", "output"]),
        "models" => Some(&["base", "endpoints"]),
        "merge" => Some(&[
            "method",
            "bounds",
            "density",
            "drop_rate",
            "evolve_density",
            "evolve_drop_rate",
        ]),
        "objectives[]" => Some(&["name", "dataset", "subsample", "evaluator", "estimator", "direction"]),
        "objectives[].subsample" => Some(&["n", "seed", "strategy"]),
        "objectives[].subsample.strategy" => Some(&["anchors"]),
        "objectives[].evaluator" => Some(match kind {
            Some("external") => &["kind", "cmd", "grader"],
            Some("toy_mlp") => &["kind"],
            Some("constant") => &["kind", "reply", "grader"],
            // Unknown/missing kind: accept the union; serde reports the
            // bad tag itself.
            _ => &["kind", "cmd", "reply", "grader"],
        }),
        "objectives[].evaluator.grader" => Some(match kind {
            Some("multiple_choice") => &["kind"],
            Some("math") => &["kind", "check_language"],
            _ => &["kind", "check_language"],
        }),
        "objectives[].estimator" => Some(match kind {
            Some("full") | Some("random") => &["kind"],
            Some("pirt") | Some("mpirt") | Some("gmpirt") => &["kind", "bank"],
            Some("gpirt") => &["kind", "bank", "lambda"],
            _ => &["kind", "bank", "lambda"],
        }),
        "algorithm" => Some(&[
            "name",
            "pop_size",
            "generations",
            "eta_c",
            "eta_m",
            "p_mut",
            "tournament_size",
            "de_f",
            "de_cr",
        ]),
        "output" => Some(&["work_dir", "csv_log", "jsonl_log", "keep_best"]),
        _ => None,
    }
}

fn check_unknown_keys(root: &Value) -> Result<(), ConfigError> {
    let mut errors = Vec::new();
    walk(root, String::new(), &mut errors);
    match errors.into_iter().next() {
        None => Ok(()),
        Some(first) => Err(invalid(first)),
    }
}

fn walk(value: &Value, path: String, errors: &mut Vec<String>) {
    match value {
        Value::Mapping(map) => {
            let normalized = normalize_path(&path);
            let allowed = allowed_keys(&normalized, map);
            for (key, child) in map {
                let Some(key) = key.as_str() else {
                    errors.push(format!(
                        "{}: mapping keys must be strings",
                        display_path(&path)
                    ));
                    continue;
                };
                let child_path = if path.is_empty() {
                    key.to_string()
                } else {
                    format!("{path}.{key}")
                };
                match allowed {
                    Some(allowed) if !allowed.contains(&key) => {
                        errors.push(unknown_key_message(&child_path, key, allowed));
                    }
                    _ => walk(child, child_path, errors),
                }
            }
        }
        Value::Sequence(seq) => {
            for (i, child) in seq.iter().enumerate() {
                walk(child, format!("{path}[{i}]"), errors);
            }
        }
        // Enum variants with payloads arrive as `!tag value`.
        Value::Tagged(tagged) => walk(&tagged.value, path, errors),
        _ => {}
    }
}

/// `objectives[3].evaluator` → `objectives[].evaluator`.
fn normalize_path(path: &str) -> String {
    let mut out = String::with_capacity(path.len());
    let mut in_index = false;
    for c in path.chars() {
        match c {
            '[' => {
                in_index = true;
                out.push('[');
            }
            ']' => {
                in_index = false;
                out.push(']');
            }
            _ if in_index => {}
            _ => out.push(c),
        }
    }
    out
}

fn display_path(path: &str) -> &str {
    if path.is_empty() {
        "config"
    } else {
        path
    }
}

fn unknown_key_message(child_path: &str, key: &str, allowed: &[&str]) -> String {
    let suggestion = allowed
        .iter()
        .map(|candidate| (strsim::levenshtein(key, candidate), *candidate))
        .min()
        .filter(|(distance, _)| *distance <= 3 && *distance < key.len())
        .map(|(_, candidate)| candidate);
    match suggestion {
        Some(s) => format!("{child_path}: unknown key (did you mean '{s}'?)"),
        None => format!(
            "{child_path}: unknown key (expected one of: {})",
            allowed.join(", ")
        ),
    }
}
