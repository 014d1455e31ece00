//! The searcher: wires checkpoints, merge recipes, evaluators, and
//! estimators into the evolutionary loop.
//!
//! A [`MergingProblem`] loads every model once at construction (rejecting
//! incompatible checkpoints up front), prepares a fixed per-run fitness
//! subset for each objective, and implements [`Problem`] so any engine in
//! [`crate::evo`] can drive it. Each genotype is decoded to a recipe,
//! merged, written into the run's work directory, scored per objective,
//! and logged as one CSV row (mirrored to JSONL, flushed per row).
//! Engines minimize, so maximized objectives are negated internally;
//! logs and reports always carry the user-facing sign.
//!
//! One candidate failing (undecodable recipe, evaluator crash) is data,
//! not a crash: the row is logged as `failed` and the individual scores
//! +inf so long runs survive flaky backends. Log I/O failures abort.
//! Results are cached by exact genotype within a run, and only the
//! `keep_best` checkpoints with the highest equal-weight scores stay on
//! disk.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::{self, File};
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::checkpoint::{read_checkpoint, validate_compat, CheckpointError, CompatReport, TensorMap};
use crate::eval::{
    evaluate_checkpoint, read_jsonl_dataset, subsample, EvalError, EvalItem, EvaluatorConfig,
    ModelRef, SubsampleSpec, SubsampleStrategy,
};
use crate::evo::{
    run_de, run_ga, run_nsga2, EvalContext, EvoError, EvoParams, GenerationStats, Problem,
    ProblemError,
};
use crate::irt::{
    estimate_gmpirt, estimate_gpirt, estimate_mpirt, estimate_pirt, fit_gmpirt_alpha, fit_theta,
    load_item_bank, responses_from_record, IrtError, ItemBank, GPIRT_DEFAULT_LAMBDA,
};
use crate::merge::{
    apply_recipe, decode_genotype, GenotypeSpec, MergeError, MergeMethod, MergeRecipe,
};
use crate::rng::StreamKey;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("config: {0}")]
    Config(String),
    /// One candidate's merge-evaluate pipeline failed. The engine logs the
    /// row as `failed`, scores it +inf, and keeps running.
    #[error("pipeline stage {stage} failed for genotype [{genotype}]: {source}")]
    Pipeline {
        stage: String,
        genotype: String,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    /// Evaluation-log write failure; this aborts the run.
    #[error("evaluation log failure (aborting run): {0}")]
    Log(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Irt(#[from] IrtError),
    #[error(transparent)]
    Evo(#[from] EvoError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

fn pipeline_error(
    stage: &str,
    genotype: &[f64],
    source: impl Into<Box<dyn std::error::Error + Send + Sync>>,
) -> SearchError {
    SearchError::Pipeline {
        stage: stage.to_string(),
        genotype: sig9_join(genotype),
        source: source.into(),
    }
}

/// Whether an objective is maximized (accuracies) or minimized. Engines
/// always minimize; the searcher owns the sign flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    #[default]
    Maximize,
    Minimize,
}

impl Direction {
    /// User-facing value → engine-internal (minimized) value.
    pub fn to_internal(self, value: f64) -> f64 {
        match self {
            Direction::Maximize => -value,
            Direction::Minimize => value,
        }
    }

    /// Engine-internal value → user-facing value (negation is an
    /// involution, but the two names keep call sites readable).
    pub fn to_user(self, value: f64) -> f64 {
        self.to_internal(value)
    }
}

/// Equal-weight scalarization of user-facing values, higher is better:
/// maximized objectives add, minimized objectives subtract.
pub fn equal_weight_score(user_values: &[f64], directions: &[Direction]) -> f64 {
    user_values
        .iter()
        .zip(directions)
        .map(|(v, d)| match d {
            Direction::Maximize => *v,
            Direction::Minimize => -*v,
        })
        .sum()
}

/// How an objective turns a fitness-subset evaluation into its estimate of
/// full-dataset accuracy. `full` and `random` read the observed accuracy;
/// the IRT family extrapolates through a calibrated item bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimatorSpec {
    #[default]
    Full,
    Random,
    Pirt {
        bank: PathBuf,
    },
    Gpirt {
        bank: PathBuf,
        #[serde(default = "default_gpirt_lambda")]
        lambda: f64,
    },
    Mpirt {
        bank: PathBuf,
    },
    Gmpirt {
        bank: PathBuf,
    },
}

fn default_gpirt_lambda() -> f64 {
    GPIRT_DEFAULT_LAMBDA
}

impl EstimatorSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            EstimatorSpec::Full => "full",
            EstimatorSpec::Random => "random",
            EstimatorSpec::Pirt { .. } => "pirt",
            EstimatorSpec::Gpirt { .. } => "gpirt",
            EstimatorSpec::Mpirt { .. } => "mpirt",
            EstimatorSpec::Gmpirt { .. } => "gmpirt",
        }
    }

}

/// One fitness criterion: a dataset, how to evaluate a checkpoint on it,
/// how to estimate full accuracy from the fitness subset, and whether the
/// result is maximized or minimized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub name: String,
    pub dataset: PathBuf,
    /// Fitness subset; `None` evaluates the whole dataset. IRT estimators
    /// derive the subset from their bank's anchors, so any subsample given
    /// here must list exactly those anchors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<SubsampleSpec>,
    pub evaluator: EvaluatorConfig,
    #[serde(default)]
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub direction: Direction,
}

/// Everything needed to stand up a [`MergingProblem`]: which models to
/// merge, how genotypes decode, what to optimize, and where run artifacts
/// live.
#[derive(Debug, Clone)]
pub struct MergingProblemSpec {
    pub genotype_spec: GenotypeSpec,
    /// Base checkpoint for task-vector methods; `None` otherwise.
    pub base: Option<PathBuf>,
    pub endpoints: Vec<PathBuf>,
    pub objectives: Vec<ObjectiveSpec>,
    pub work_dir: PathBuf,
    /// Evaluation-log locations; `None` puts `evaluations.csv` /
    /// `evaluations.jsonl` in the run directory.
    pub csv_log: Option<PathBuf>,
    pub jsonl_log: Option<PathBuf>,
    /// How many merged checkpoints stay on disk (the best equal-weight
    /// scorers); 0 deletes every candidate right after scoring.
    pub keep_best: usize,
    pub seed: u64,
}

/// An objective with its dataset loaded and fitness subset frozen. The
/// subset is fixed for the whole run so every generation is measured on
/// the same items.
struct PreparedObjective {
    spec: ObjectiveSpec,
    /// Items every candidate is evaluated on.
    fitness_items: Vec<EvalItem>,
    bank: Option<ItemBank>,
    /// θ̂ per endpoint, fitted once from anchor responses (MP-/GMP-IRT).
    endpoint_thetas: Vec<f64>,
    /// GMP-IRT blend weight; refit at every generation boundary.
    alpha: f64,
    /// Accumulated (mpirt, anchor mean, audited accuracy) triples.
    gmpirt_history: Vec<(f64, f64, f64)>,
    /// Random audit subset whose measured accuracy trains `alpha`.
    audit_items: Vec<EvalItem>,
}

#[derive(Clone)]
struct CacheEntry {
    internal: Vec<f64>,
    user: Vec<f64>,
    hash: String,
}

struct KeptCheckpoint {
    score: f64,
    hash: String,
    path: PathBuf,
}

struct PipelineOutcome {
    internal: Vec<f64>,
    user: Vec<f64>,
    hash: String,
    path: PathBuf,
}

/// The merging search problem: owns the loaded models, the per-objective
/// evaluation machinery, the run's work directory, and the evaluation
/// logs.
pub struct MergingProblem {
    genotype_spec: GenotypeSpec,
    base: Option<TensorMap>,
    endpoints: Vec<TensorMap>,
    objectives: Vec<PreparedObjective>,
    run_id: String,
    run_dir: PathBuf,
    checkpoints_dir: PathBuf,
    keep_best: usize,
    seed: u64,
    csv: csv::Writer<File>,
    jsonl: File,
    csv_path: PathBuf,
    jsonl_path: PathBuf,
    cache: HashMap<Vec<u64>, CacheEntry>,
    kept: Vec<KeptCheckpoint>,
    current_generation: usize,
    rows_logged: usize,
    initial_genotypes: Vec<Vec<f64>>,
}

impl MergingProblem {
    /// Validates the spec, loads and compatibility-checks every model,
    /// freezes each objective's fitness subset, fits endpoint abilities
    /// for the merge-aware estimators, and opens the evaluation logs
    /// (CSV header written immediately).
    pub fn new(spec: MergingProblemSpec) -> Result<MergingProblem, SearchError> {
        spec.genotype_spec.validate()?;
        if spec.objectives.is_empty() {
            return Err(SearchError::Config("at least one objective is required".into()));
        }
        let mut names = BTreeSet::new();
        for objective in &spec.objectives {
            if objective.name.is_empty() {
                return Err(SearchError::Config("objective names must be non-empty".into()));
            }
            if !names.insert(objective.name.as_str()) {
                return Err(SearchError::Config(format!(
                    "duplicate objective name '{}'",
                    objective.name
                )));
            }
        }
        if spec.endpoints.len() != spec.genotype_spec.n_endpoints {
            return Err(SearchError::Config(format!(
                "genotype spec expects {} endpoint models, {} given",
                spec.genotype_spec.n_endpoints,
                spec.endpoints.len()
            )));
        }
        let method = spec.genotype_spec.method;
        if method.needs_base() && spec.base.is_none() {
            return Err(SearchError::Config(format!(
                "merge method {method} requires a base model"
            )));
        }
        if !method.needs_base() && spec.base.is_some() {
            return Err(SearchError::Config(format!(
                "merge method {method} takes no base model"
            )));
        }

        let base = spec.base.as_ref().map(read_checkpoint).transpose()?;
        let endpoints: Vec<TensorMap> = spec
            .endpoints
            .iter()
            .map(read_checkpoint)
            .collect::<Result<_, _>>()?;
        let mut refs: Vec<&TensorMap> = Vec::with_capacity(endpoints.len() + 1);
        if let Some(b) = &base {
            refs.push(b);
        }
        refs.extend(endpoints.iter());
        let compat = validate_compat(&refs)?;
        if !compat.compatible {
            return Err(SearchError::Config(format!(
                "models are not mergeable: {}",
                compat_message(&compat)
            )));
        }

        let run_id = derive_run_id(&spec);
        let run_dir = spec.work_dir.join(&run_id);
        let checkpoints_dir = run_dir.join("checkpoints");
        fs::create_dir_all(&checkpoints_dir)?;
        let csv_path = spec.csv_log.clone().unwrap_or_else(|| run_dir.join("evaluations.csv"));
        let jsonl_path = spec
            .jsonl_log
            .clone()
            .unwrap_or_else(|| run_dir.join("evaluations.jsonl"));
        for log in [&csv_path, &jsonl_path] {
            if let Some(parent) = log.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)?;
            }
        }
        let file = File::create(&csv_path)
            .map_err(|e| SearchError::Log(format!("create {}: {e}", csv_path.display())))?;
        let mut csv = csv::Writer::from_writer(file);
        let mut header: Vec<String> = vec![
            "run_id".into(),
            "generation".into(),
            "individual_index".into(),
            "genotype".into(),
        ];
        for objective in &spec.objectives {
            header.push(format!("objective_{}", objective.name));
        }
        for objective in &spec.objectives {
            header.push(format!("estimator_{}", objective.name));
        }
        header.extend(["checkpoint_hash".into(), "wall_ms".into(), "status".into()]);
        csv.write_record(&header)
            .and_then(|()| csv.flush().map_err(csv::Error::from))
            .map_err(|e| SearchError::Log(format!("write csv header: {e}")))?;
        let jsonl = File::create(&jsonl_path)
            .map_err(|e| SearchError::Log(format!("create {}: {e}", jsonl_path.display())))?;

        let mut objectives = Vec::with_capacity(spec.objectives.len());
        for objective in &spec.objectives {
            objectives.push(prepare_objective(
                objective.clone(),
                &endpoints,
                &spec.endpoints,
                spec.seed,
            )?);
        }

        Ok(MergingProblem {
            genotype_spec: spec.genotype_spec,
            base,
            endpoints,
            objectives,
            run_id,
            run_dir,
            checkpoints_dir,
            keep_best: spec.keep_best,
            seed: spec.seed,
            csv,
            jsonl,
            csv_path,
            jsonl_path,
            cache: HashMap::new(),
            kept: Vec::new(),
            current_generation: 0,
            rows_logged: 0,
            initial_genotypes: Vec::new(),
        })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn csv_path(&self) -> &Path {
        &self.csv_path
    }

    pub fn jsonl_path(&self) -> &Path {
        &self.jsonl_path
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn genotype_spec(&self) -> &GenotypeSpec {
        &self.genotype_spec
    }

    pub fn objective_names(&self) -> Vec<String> {
        self.objectives.iter().map(|o| o.spec.name.clone()).collect()
    }

    pub fn directions(&self) -> Vec<Direction> {
        self.objectives.iter().map(|o| o.spec.direction).collect()
    }

    /// Fixed starting genotypes handed to the engine slot-by-slot through
    /// [`Problem::initial_genotype`] (e.g. to seed the unmerged endpoints).
    pub fn set_initial_genotypes(&mut self, genotypes: Vec<Vec<f64>>) {
        self.initial_genotypes = genotypes;
    }

    /// Decode → merge → write checkpoint → evaluate every objective,
    /// logging exactly one row. Returns the engine-internal (minimized)
    /// objective vector; pipeline failures are logged as `failed` and
    /// returned as [`SearchError::Pipeline`] carrying the stage and
    /// genotype.
    pub fn evaluate_genotype(&mut self, genotype: &[f64]) -> Result<Vec<f64>, SearchError> {
        let ctx = EvalContext {
            generation: self.current_generation,
            index: self.rows_logged,
        };
        self.evaluate_logged(ctx, genotype)
    }

    fn evaluate_logged(&mut self, ctx: EvalContext, g: &[f64]) -> Result<Vec<f64>, SearchError> {
        if ctx.generation != self.current_generation {
            self.current_generation = ctx.generation;
            self.refit_alphas();
        }
        let started = Instant::now();
        let key: Vec<u64> = g.iter().map(|x| x.to_bits()).collect();
        if let Some(entry) = self.cache.get(&key).cloned() {
            let wall = started.elapsed().as_millis() as u64;
            self.log_row(ctx, g, Some(&entry.user), Some(&entry.hash), wall, "cached")?;
            return Ok(entry.internal);
        }
        let mut written: Option<PathBuf> = None;
        let mut hash_hint: Option<String> = None;
        match self.pipeline(ctx, g, &mut written, &mut hash_hint) {
            Ok(outcome) => {
                let wall = started.elapsed().as_millis() as u64;
                self.log_row(ctx, g, Some(&outcome.user), Some(&outcome.hash), wall, "ok")?;
                let directions = self.directions();
                let score = equal_weight_score(&outcome.user, &directions);
                self.retain_best(score, &outcome.hash, &outcome.path)?;
                self.cache.insert(
                    key,
                    CacheEntry {
                        internal: outcome.internal.clone(),
                        user: outcome.user,
                        hash: outcome.hash,
                    },
                );
                Ok(outcome.internal)
            }
            Err(err) => {
                // Drop any half-written candidate, record the failure,
                // surface the error.
                if let Some(path) = written {
                    let _ = fs::remove_file(path);
                }
                let wall = started.elapsed().as_millis() as u64;
                self.log_row(ctx, g, None, hash_hint.as_deref(), wall, "failed")?;
                Err(err)
            }
        }
    }

    fn pipeline(
        &mut self,
        ctx: EvalContext,
        g: &[f64],
        written: &mut Option<PathBuf>,
        hash_hint: &mut Option<String>,
    ) -> Result<PipelineOutcome, SearchError> {
        for (i, (gene, &(lo, hi))) in g.iter().zip(&self.genotype_spec.bounds).enumerate() {
            if !gene.is_finite() || *gene < lo || *gene > hi {
                return Err(pipeline_error(
                    "bounds",
                    g,
                    format!("gene {i} = {gene} outside [{lo}, {hi}]"),
                ));
            }
        }
        let recipe = decode_genotype(g, &self.genotype_spec, self.seed)
            .map_err(|e| pipeline_error("decode", g, e))?;
        let endpoint_refs: Vec<&TensorMap> = self.endpoints.iter().collect();
        let merged = apply_recipe(&recipe, self.base.as_ref(), &endpoint_refs)
            .map_err(|e| pipeline_error("merge", g, e))?;
        drop(endpoint_refs);
        let bytes = merged.to_bytes();
        let hash = sha256_hex(&bytes);
        *hash_hint = Some(hash.clone());
        let path = self.checkpoints_dir.join(format!(
            "gen{:04}_ind{:04}_{}.safetensors",
            ctx.generation,
            ctx.index,
            &hash[..12]
        ));
        fs::write(&path, &bytes).map_err(|e| pipeline_error("write-checkpoint", g, e))?;
        *written = Some(path.clone());
        drop(bytes);

        let mut user = Vec::with_capacity(self.objectives.len());
        let mut internal = Vec::with_capacity(self.objectives.len());
        for j in 0..self.objectives.len() {
            let name = self.objectives[j].spec.name.clone();
            let value = self
                .score_objective(j, &merged, &path, &recipe)
                .map_err(|e| pipeline_error(&format!("objective '{name}'"), g, e))?;
            user.push(value);
            internal.push(self.objectives[j].spec.direction.to_internal(value));
        }
        Ok(PipelineOutcome {
            internal,
            user,
            hash,
            path,
        })
    }

    /// Evaluate one objective's fitness subset and run its estimator.
    fn score_objective(
        &mut self,
        j: usize,
        merged: &TensorMap,
        checkpoint_path: &Path,
        recipe: &MergeRecipe,
    ) -> Result<f64, SearchError> {
        let n_endpoints = self.endpoints.len();
        let objective = &mut self.objectives[j];
        let model = match objective.spec.evaluator {
            EvaluatorConfig::External { .. } => ModelRef::Path(checkpoint_path),
            _ => ModelRef::Map(merged),
        };
        let record = evaluate_checkpoint(model, &objective.fitness_items, &objective.spec.evaluator)?;
        let estimate = match &objective.spec.estimator {
            EstimatorSpec::Full | EstimatorSpec::Random => record.accuracy,
            EstimatorSpec::Pirt { .. } => estimate_pirt(&record, objective.bank())?,
            EstimatorSpec::Gpirt { lambda, .. } => {
                estimate_gpirt(&record, objective.bank(), *lambda)?
            }
            EstimatorSpec::Mpirt { .. } => estimate_mpirt(
                &objective.endpoint_thetas,
                &mpirt_weights(recipe, n_endpoints),
                &record,
                objective.bank(),
            )?,
            EstimatorSpec::Gmpirt { .. } => {
                let mpirt = estimate_mpirt(
                    &objective.endpoint_thetas,
                    &mpirt_weights(recipe, n_endpoints),
                    &record,
                    objective.bank(),
                )?;
                let anchor_mean = record.accuracy;
                let estimate = estimate_gmpirt(mpirt, anchor_mean, objective.alpha)?;
                // Audit the estimate on the held-out random subset; the
                // triple trains alpha at the next generation boundary.
                let audit =
                    evaluate_checkpoint(model, &objective.audit_items, &objective.spec.evaluator)?;
                objective.gmpirt_history.push((mpirt, anchor_mean, audit.accuracy));
                estimate
            }
        };
        Ok(estimate)
    }

    fn refit_alphas(&mut self) {
        for objective in &mut self.objectives {
            if matches!(objective.spec.estimator, EstimatorSpec::Gmpirt { .. }) {
                objective.alpha = fit_gmpirt_alpha(&objective.gmpirt_history);
            }
        }
    }

    /// Keep the checkpoint if it ranks among the `keep_best` highest
    /// equal-weight scores, evicting (and deleting) the worst otherwise.
    fn retain_best(&mut self, score: f64, hash: &str, path: &Path) -> Result<(), SearchError> {
        if self.keep_best == 0 {
            fs::remove_file(path)?;
            return Ok(());
        }
        self.kept.push(KeptCheckpoint {
            score,
            hash: hash.to_string(),
            path: path.to_path_buf(),
        });
        // Stable sort: on ties the earlier candidate stays ahead, so the
        // newest duplicate is the one evicted.
        self.kept.sort_by(|a, b| b.score.total_cmp(&a.score));
        while self.kept.len() > self.keep_best {
            let evicted = self.kept.pop().expect("len checked");
            fs::remove_file(&evicted.path)?;
        }
        Ok(())
    }

    /// Append one evaluation row to the CSV log and its JSONL mirror,
    /// flushing both (the flush contract: a crash loses at most the row in
    /// flight).
    fn log_row(
        &mut self,
        ctx: EvalContext,
        g: &[f64],
        user: Option<&[f64]>,
        hash: Option<&str>,
        wall_ms: u64,
        status: &str,
    ) -> Result<(), SearchError> {
        let genotype = sig9_join(g);
        let mut record: Vec<String> = Vec::with_capacity(7 + 2 * self.objectives.len());
        record.push(self.run_id.clone());
        record.push(ctx.generation.to_string());
        record.push(ctx.index.to_string());
        record.push(genotype.clone());
        for j in 0..self.objectives.len() {
            record.push(user.map_or_else(String::new, |u| u[j].to_string()));
        }
        for objective in &self.objectives {
            record.push(objective.spec.estimator.kind().to_string());
        }
        record.push(hash.unwrap_or_default().to_string());
        record.push(wall_ms.to_string());
        record.push(status.to_string());
        self.csv
            .write_record(&record)
            .and_then(|()| self.csv.flush().map_err(csv::Error::from))
            .map_err(|e| SearchError::Log(format!("append to {}: {e}", self.csv_path.display())))?;

        let mut row = serde_json::Map::new();
        row.insert("run_id".into(), self.run_id.clone().into());
        row.insert("generation".into(), (ctx.generation as u64).into());
        row.insert("individual_index".into(), (ctx.index as u64).into());
        row.insert("genotype".into(), genotype.into());
        for (j, objective) in self.objectives.iter().enumerate() {
            let value = user
                .and_then(|u| serde_json::Number::from_f64(u[j]))
                .map_or(Value::Null, Value::Number);
            row.insert(format!("objective_{}", objective.spec.name), value);
            row.insert(
                format!("estimator_{}", objective.spec.name),
                objective.spec.estimator.kind().into(),
            );
        }
        row.insert(
            "checkpoint_hash".into(),
            hash.map_or(Value::Null, |h| h.into()),
        );
        row.insert("wall_ms".into(), wall_ms.into());
        row.insert("status".into(), status.into());
        writeln!(self.jsonl, "{}", Value::Object(row))
            .and_then(|()| self.jsonl.flush())
            .map_err(|e| SearchError::Log(format!("append to {}: {e}", self.jsonl_path.display())))?;
        self.rows_logged += 1;
        Ok(())
    }

    #[cfg(test)]
    fn fitness_ids(&self, j: usize) -> Vec<String> {
        self.objectives[j].fitness_items.iter().map(|it| it.id.clone()).collect()
    }

    #[cfg(test)]
    fn gmpirt_alpha(&self, j: usize) -> f64 {
        self.objectives[j].alpha
    }

    #[cfg(test)]
    fn gmpirt_history_len(&self, j: usize) -> usize {
        self.objectives[j].gmpirt_history.len()
    }
}

impl fmt::Debug for MergingProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MergingProblem")
            .field("run_id", &self.run_id)
            .field("method", &self.genotype_spec.method)
            .field("n_endpoints", &self.endpoints.len())
            .field("objectives", &self.objective_names())
            .field("run_dir", &self.run_dir)
            .finish_non_exhaustive()
    }
}

impl PreparedObjective {
    fn bank(&self) -> &ItemBank {
        self.bank.as_ref().expect("IRT estimator banks are loaded at construction")
    }
}

impl Problem for MergingProblem {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.genotype_spec.bounds
    }

    fn n_objectives(&self) -> usize {
        self.objectives.len()
    }

    fn evaluate(&mut self, ctx: &EvalContext, genotype: &[f64]) -> Result<Vec<f64>, ProblemError> {
        match self.evaluate_logged(*ctx, genotype) {
            Ok(internal) => Ok(internal),
            // A failing candidate is data, not a crash: worst score, run on.
            Err(SearchError::Pipeline { .. }) => Ok(vec![f64::INFINITY; self.objectives.len()]),
            Err(fatal) => Err(Box::new(fatal)),
        }
    }

    fn initial_genotype(&self, index: usize) -> Option<Vec<f64>> {
        self.initial_genotypes.get(index).cloned()
    }
}

/// Loads the dataset and freezes the fitness subset. IRT estimators take
/// the bank's anchors as the subset; `full`/`random` honor the user's
/// subsample spec.
fn prepare_objective(
    spec: ObjectiveSpec,
    endpoints: &[TensorMap],
    endpoint_paths: &[PathBuf],
    run_seed: u64,
) -> Result<PreparedObjective, SearchError> {
    let full_items = read_jsonl_dataset(&spec.dataset)?;
    if full_items.is_empty() {
        return Err(SearchError::Config(format!(
            "objective '{}': dataset {} is empty",
            spec.name,
            spec.dataset.display()
        )));
    }

    let mut bank = None;
    let fitness_items = match &spec.estimator {
        EstimatorSpec::Full => match &spec.subsample {
            Some(sub) => subsample(&full_items, sub)?,
            None => full_items.clone(),
        },
        EstimatorSpec::Random => {
            let sub = spec.subsample.as_ref().ok_or_else(|| {
                SearchError::Config(format!(
                    "objective '{}': the random estimator needs a subsample spec (n, seed)",
                    spec.name
                ))
            })?;
            if !matches!(sub.strategy, SubsampleStrategy::Random) {
                return Err(SearchError::Config(format!(
                    "objective '{}': the random estimator draws its own uniform sample; \
                     subsample.strategy must be random",
                    spec.name
                )));
            }
            subsample(&full_items, sub)?
        }
        EstimatorSpec::Pirt { bank: path }
        | EstimatorSpec::Gpirt { bank: path, .. }
        | EstimatorSpec::Mpirt { bank: path }
        | EstimatorSpec::Gmpirt { bank: path } => {
            let loaded = load_item_bank(path)?;
            if loaded.anchor_ids().is_empty() {
                return Err(SearchError::Config(format!(
                    "objective '{}': item bank {} declares no anchors",
                    spec.name,
                    path.display()
                )));
            }
            let anchors = loaded.anchor_ids().to_vec();
            let picked = match &spec.subsample {
                None => subsample(
                    &full_items,
                    &SubsampleSpec {
                        n: anchors.len(),
                        seed: 0,
                        strategy: SubsampleStrategy::Anchors(anchors),
                    },
                )?,
                Some(sub) => {
                    let listed = match &sub.strategy {
                        SubsampleStrategy::Anchors(ids) => ids,
                        _ => {
                            return Err(SearchError::Config(format!(
                                "objective '{}': IRT estimators evaluate the bank's anchors; \
                                 drop the subsample or list exactly those anchor ids",
                                spec.name
                            )))
                        }
                    };
                    let want: BTreeSet<&str> = anchors.iter().map(String::as_str).collect();
                    let got: BTreeSet<&str> = listed.iter().map(String::as_str).collect();
                    if want != got {
                        return Err(SearchError::Config(format!(
                            "objective '{}': subsample anchors must equal the item bank's anchors",
                            spec.name
                        )));
                    }
                    subsample(&full_items, sub)?
                }
            };
            bank = Some(loaded);
            picked
        }
    };

    if let EstimatorSpec::Gpirt { lambda, .. } = spec.estimator {
        if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
            return Err(SearchError::Config(format!(
                "objective '{}': gpirt lambda {lambda} outside [0, 1]",
                spec.name
            )));
        }
    }

    // Merge-aware estimators need each endpoint's ability, fitted once
    // from its own anchor responses.
    let mut endpoint_thetas = Vec::new();
    if matches!(spec.estimator, EstimatorSpec::Mpirt { .. } | EstimatorSpec::Gmpirt { .. }) {
        let fitted_bank = bank.as_ref().expect("IRT branch sets the bank");
        for (endpoint, path) in endpoints.iter().zip(endpoint_paths) {
            let model = match spec.evaluator {
                EvaluatorConfig::External { .. } => ModelRef::Path(path),
                _ => ModelRef::Map(endpoint),
            };
            let record = evaluate_checkpoint(model, &fitness_items, &spec.evaluator)?;
            let ability = fit_theta(&responses_from_record(&record), fitted_bank)?;
            endpoint_thetas.push(ability.theta);
        }
    }

    let mut audit_items = Vec::new();
    if matches!(spec.estimator, EstimatorSpec::Gmpirt { .. }) {
        let audit_seed = StreamKey::new(run_seed)
            .with_str("gmpirt-audit")
            .with_str(&spec.name)
            .value();
        audit_items = subsample(
            &full_items,
            &SubsampleSpec {
                n: fitness_items.len().min(full_items.len()),
                seed: audit_seed,
                strategy: SubsampleStrategy::Random,
            },
        )?;
    }

    Ok(PreparedObjective {
        spec,
        fitness_items,
        bank,
        endpoint_thetas,
        alpha: 0.5,
        gmpirt_history: Vec::new(),
        audit_items,
    })
}

/// Merge weights as MP-IRT mixing weights: slerp's single `t` becomes
/// `[1−t, t]`; other methods use the raw weights clamped to ≥ 0 (negative
/// task-arithmetic weights carry no ability mass), falling back to equal
/// weights when everything clamps away.
fn mpirt_weights(recipe: &MergeRecipe, n_endpoints: usize) -> Vec<f64> {
    if recipe.method == MergeMethod::Slerp {
        let t = recipe.weights[0];
        return vec![1.0 - t, t];
    }
    let clamped: Vec<f64> = recipe.weights.iter().map(|w| w.max(0.0)).collect();
    if clamped.iter().sum::<f64>() <= 0.0 {
        vec![1.0; n_endpoints]
    } else {
        clamped
    }
}

fn compat_message(report: &CompatReport) -> String {
    let mut parts = Vec::new();
    for (i, missing) in report.missing_keys.iter().enumerate() {
        if !missing.is_empty() {
            parts.push(format!("model {i} is missing tensors {missing:?}"));
        }
    }
    for (name, shapes) in &report.shape_mismatches {
        parts.push(format!("tensor '{name}' shapes differ: {shapes:?}"));
    }
    for (name, dtypes) in &report.dtype_mismatches {
        parts.push(format!("tensor '{name}' dtypes differ: {dtypes:?}"));
    }
    parts.join("; ")
}

/// Deterministic run identity from seed, merge method, model paths, and
/// objective names/estimators. The work dir is deliberately excluded so
/// re-running one config in a fresh directory reproduces the id.
fn derive_run_id(spec: &MergingProblemSpec) -> String {
    let mut key = StreamKey::new(spec.seed)
        .with_str("run-id")
        .with_str(spec.genotype_spec.method.name());
    if let Some(base) = &spec.base {
        key = key.with_str(&base.to_string_lossy());
    }
    for path in &spec.endpoints {
        key = key.with_str(&path.to_string_lossy());
    }
    for objective in &spec.objectives {
        key = key.with_str(&objective.name).with_str(objective.estimator.kind());
    }
    format!("run-{:016x}", key.value())
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Plain-decimal formatting with 9 significant digits, the log contract
/// for genotype columns.
fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    let decimals = (8 - x.abs().log10().floor() as i64).clamp(0, 40) as usize;
    format!("{x:.decimals$}")
}

fn sig9_join(genotype: &[f64]) -> String {
    genotype.iter().map(|&x| sig9(x)).collect::<Vec<_>>().join(";")
}

/// Which engine drives the search. `ga`/`de` are single-objective;
/// `nsga2` requires at least two objectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Ga,
    De,
    Nsga2,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Ga => "ga",
            Algorithm::De => "de",
            Algorithm::Nsga2 => "nsga2",
        })
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ga" => Ok(Algorithm::Ga),
            "de" => Ok(Algorithm::De),
            "nsga2" => Ok(Algorithm::Nsga2),
            other => Err(format!("unknown algorithm '{other}' (expected ga, de, or nsga2)")),
        }
    }
}

/// One solution of the returned front, with its decoded recipe and
/// user-facing objective values. `recipe`/`checkpoint_hash` are `None`
/// only for failed individuals (possible when every candidate failed).
#[derive(Debug, Clone, Serialize)]
pub struct BestSolution {
    pub genotype: Vec<f64>,
    pub recipe: Option<MergeRecipe>,
    /// User-facing sign: accuracies are accuracies.
    pub objectives: Vec<f64>,
    pub checkpoint_hash: Option<String>,
    /// On-disk location if the checkpoint survived `keep_best` pruning.
    pub checkpoint_path: Option<PathBuf>,
    /// Marks the front member maximizing the equal-weight sum — the
    /// single winner reports refer to.
    pub is_equal_weight_best: bool,
}

/// Outcome of [`search`]: the best solutions (one for ga/de, the whole
/// rank-0 front for nsga2), per-generation history in user-facing sign,
/// and where the logs were written.
#[derive(Debug, Clone, Serialize)]
pub struct SearchReport {
    pub run_id: String,
    pub algorithm: Algorithm,
    pub seed: u64,
    pub objective_names: Vec<String>,
    pub directions: Vec<Direction>,
    pub best: Vec<BestSolution>,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
    pub wall_ms: u64,
    pub csv_path: PathBuf,
    pub jsonl_path: PathBuf,
}

/// Runs the evolutionary loop. The algorithm/objective arity is checked
/// before anything is evaluated.
pub fn search(
    problem: &mut MergingProblem,
    algorithm: Algorithm,
    params: &EvoParams,
) -> Result<SearchReport, SearchError> {
    let n = problem.objectives.len();
    match algorithm {
        Algorithm::Nsga2 if n < 2 => {
            return Err(SearchError::Config(format!(
                "nsga2 is multi-objective; configure at least 2 objectives (got {n}) or pick ga/de"
            )))
        }
        Algorithm::Ga | Algorithm::De if n != 1 => {
            return Err(SearchError::Config(format!(
                "{algorithm} is single-objective; this problem has {n} objectives — use nsga2"
            )))
        }
        _ => {}
    }
    let started = Instant::now();
    let result = match algorithm {
        Algorithm::Ga => run_ga(problem, params),
        Algorithm::De => run_de(problem, params),
        Algorithm::Nsga2 => run_nsga2(problem, params),
    }?;
    let wall_ms = started.elapsed().as_millis() as u64;

    let directions = problem.directions();
    let mut best = Vec::with_capacity(result.front.len());
    for individual in &result.front {
        let key: Vec<u64> = individual.genotype.iter().map(|x| x.to_bits()).collect();
        let entry = problem.cache.get(&key);
        let objectives: Vec<f64> = match entry {
            Some(e) => e.user.clone(),
            // Never cached means the candidate failed; show the worst
            // user-facing value rather than hiding it.
            None => individual
                .objectives
                .iter()
                .zip(&directions)
                .map(|(v, d)| d.to_user(*v))
                .collect(),
        };
        let checkpoint_hash = entry.map(|e| e.hash.clone());
        let checkpoint_path = checkpoint_hash.as_deref().and_then(|h| {
            problem
                .kept
                .iter()
                .find(|k| k.hash == h && k.path.exists())
                .map(|k| k.path.clone())
        });
        let recipe = decode_genotype(&individual.genotype, &problem.genotype_spec, problem.seed).ok();
        best.push(BestSolution {
            genotype: individual.genotype.clone(),
            recipe,
            objectives,
            checkpoint_hash,
            checkpoint_path,
            is_equal_weight_best: false,
        });
    }
    if !best.is_empty() {
        let mut top = 0;
        let mut top_score = f64::NEG_INFINITY;
        for (i, solution) in best.iter().enumerate() {
            let score = equal_weight_score(&solution.objectives, &directions);
            if score > top_score {
                top = i;
                top_score = score;
            }
        }
        best[top].is_equal_weight_best = true;
    }
    let history = result
        .history
        .iter()
        .map(|stats| GenerationStats {
            generation: stats.generation,
            best: stats.best.iter().zip(&directions).map(|(v, d)| d.to_user(*v)).collect(),
            mean: stats.mean.iter().zip(&directions).map(|(v, d)| d.to_user(*v)).collect(),
        })
        .collect();

    Ok(SearchReport {
        run_id: problem.run_id.clone(),
        algorithm,
        seed: problem.seed,
        objective_names: problem.objective_names(),
        directions,
        best,
        history,
        evaluations: result.evaluations,
        wall_ms,
        csv_path: problem.csv_path.clone(),
        jsonl_path: problem.jsonl_path.clone(),
    })
}

/// One re-merged best solution scored on the full test datasets.
#[derive(Debug, Clone, Serialize)]
pub struct TestSolution {
    pub genotype: Vec<f64>,
    pub recipe: MergeRecipe,
    /// Fitness-time estimates (user-facing sign), for comparison.
    pub search_objectives: Vec<f64>,
    /// Observed accuracy per objective on the full test dataset.
    pub test_accuracies: Vec<f64>,
    pub search_hash: Option<String>,
    /// Hash of the re-merged checkpoint; equals `search_hash` by the
    /// determinism contract.
    pub remerge_hash: String,
    pub is_equal_weight_best: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReport {
    pub run_id: String,
    pub objective_names: Vec<String>,
    pub solutions: Vec<TestSolution>,
}

/// Re-merges every best solution from scratch and evaluates it on the
/// full per-objective test datasets (no subsampling, no estimator). The
/// re-merge must reproduce the search-time checkpoint bit-exactly.
pub fn test_best(
    problem: &MergingProblem,
    report: &SearchReport,
    test_datasets: &[PathBuf],
) -> Result<TestReport, SearchError> {
    if report.best.is_empty() {
        return Err(SearchError::Config("report has no best solutions to test".into()));
    }
    if test_datasets.len() != problem.objectives.len() {
        return Err(SearchError::Config(format!(
            "{} test datasets given for {} objectives",
            test_datasets.len(),
            problem.objectives.len()
        )));
    }
    let mut datasets = Vec::with_capacity(test_datasets.len());
    for path in test_datasets {
        let items = read_jsonl_dataset(path)?;
        if items.is_empty() {
            return Err(SearchError::Config(format!(
                "test dataset {} is empty",
                path.display()
            )));
        }
        datasets.push(items);
    }

    let needs_path = problem
        .objectives
        .iter()
        .any(|o| matches!(o.spec.evaluator, EvaluatorConfig::External { .. }));
    let test_dir = problem.run_dir.join("test");
    if needs_path {
        fs::create_dir_all(&test_dir)?;
    }
    let endpoint_refs: Vec<&TensorMap> = problem.endpoints.iter().collect();
    let mut solutions = Vec::with_capacity(report.best.len());
    for (index, best) in report.best.iter().enumerate() {
        let recipe = decode_genotype(&best.genotype, &problem.genotype_spec, problem.seed)?;
        let merged = apply_recipe(&recipe, problem.base.as_ref(), &endpoint_refs)?;
        let bytes = merged.to_bytes();
        let remerge_hash = sha256_hex(&bytes);
        let path = test_dir.join(format!("best{index:02}_{}.safetensors", &remerge_hash[..12]));
        if needs_path {
            fs::write(&path, &bytes)?;
        }
        let mut test_accuracies = Vec::with_capacity(problem.objectives.len());
        let mut eval_result = Ok(());
        for (objective, items) in problem.objectives.iter().zip(&datasets) {
            let model = match objective.spec.evaluator {
                EvaluatorConfig::External { .. } => ModelRef::Path(&path),
                _ => ModelRef::Map(&merged),
            };
            match evaluate_checkpoint(model, items, &objective.spec.evaluator) {
                Ok(record) => test_accuracies.push(record.accuracy),
                Err(e) => {
                    eval_result = Err(SearchError::Eval(e));
                    break;
                }
            }
        }
        if needs_path {
            let _ = fs::remove_file(&path);
        }
        eval_result?;
        solutions.push(TestSolution {
            genotype: best.genotype.clone(),
            recipe,
            search_objectives: best.objectives.clone(),
            test_accuracies,
            search_hash: best.checkpoint_hash.clone(),
            remerge_hash,
            is_equal_weight_best: best.is_equal_weight_best,
        });
    }
    Ok(TestReport {
        run_id: report.run_id.clone(),
        objective_names: report.objective_names.clone(),
        solutions,
    })
}
