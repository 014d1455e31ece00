//! Deterministic desk-scale fixtures: the disjoint-expert world.
//!
//! The world is a 4-way multiple-choice problem over 8 features. Task A
//! items carry their class as a one-hot in features 0–3, task B items in
//! features 4–7, both plus Gaussian noise. The base model has zero
//! weights and a fixed bias, so it always predicts "A" — exactly chance
//! (0.25) on balanced datasets. Expert A adds an identity block reading
//! features 0–3 (near-perfect on task A, near-chance on task B); expert B
//! mirrors it on features 4–7. Because the expert task vectors touch
//! disjoint weights, task arithmetic with λ = [1, 1] reconstructs the
//! perfect combined model — the merge-gain everything downstream is
//! measured against.

use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::checkpoint::{write_checkpoint, CheckpointError, Dtype, Tensor, TensorMap};
use crate::eval::{
    evaluate_checkpoint, write_jsonl_dataset, EvalError, EvalItem, EvaluatorConfig, ModelRef,
};
use crate::irt::{IrtError, ResponseMatrix};
use crate::merge::{task_arithmetic_merge, MergeError};
use crate::rng::StreamKey;

pub const FIXTURE_FEATURES: usize = 8;
pub const FIXTURE_CLASSES: usize = 4;
/// Per-class feature gain of the expert weight blocks.
const EXPERT_GAIN: f64 = 2.0;
/// Feature noise level.
const NOISE_SIGMA: f64 = 0.05;
/// Base model bias: breaks argmax ties deterministically toward "A".
const BASE_BIAS: [f64; 4] = [0.5, 0.2, 0.0, -0.2];

const CHOICE_LETTERS: [&str; 4] = ["A", "B", "C", "D"];

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Merge(#[from] MergeError),
    #[error(transparent)]
    Irt(#[from] IrtError),
}

/// Which expert task an item (or expert) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureTask {
    A,
    B,
}

impl FixtureTask {
    fn feature_offset(self) -> usize {
        match self {
            FixtureTask::A => 0,
            FixtureTask::B => FIXTURE_CLASSES,
        }
    }

    fn name(self) -> &'static str {
        match self {
            FixtureTask::A => "task_a",
            FixtureTask::B => "task_b",
        }
    }

    /// Language tag carried by the task's items (gives subsampling and
    /// multi-objective demos two natural strata).
    pub fn language(self) -> &'static str {
        match self {
            FixtureTask::A => "en",
            FixtureTask::B => "ja",
        }
    }
}

fn linear_model(weights: &[f64]) -> TensorMap {
    let mut map = TensorMap::new();
    map.insert(
        "layers.0.weight".to_string(),
        Tensor::from_f64(Dtype::F32, vec![FIXTURE_CLASSES, FIXTURE_FEATURES], weights)
            .expect("fixture weight tensor"),
    )
    .expect("fresh map");
    map.insert(
        "layers.0.bias".to_string(),
        Tensor::from_f64(Dtype::F32, vec![FIXTURE_CLASSES], &BASE_BIAS).expect("fixture bias"),
    )
    .expect("fresh map");
    map
}

/// The base checkpoint: zero weights, fixed bias → always answers "A".
pub fn fixture_base() -> TensorMap {
    linear_model(&vec![0.0; FIXTURE_CLASSES * FIXTURE_FEATURES])
}

/// An expert checkpoint: the base plus an identity block mapping its
/// task's features onto the class logits.
pub fn fixture_expert(task: FixtureTask) -> TensorMap {
    let mut weights = vec![0.0; FIXTURE_CLASSES * FIXTURE_FEATURES];
    for class in 0..FIXTURE_CLASSES {
        weights[class * FIXTURE_FEATURES + task.feature_offset() + class] = EXPERT_GAIN;
    }
    linear_model(&weights)
}

/// Standard-normal draw (Box–Muller); the fixture is the only gaussian
/// consumer, so no distribution dependency is pulled in.
fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-12);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Balanced items for one task: `n_per_class` per class, one-hot features
/// in the task's block plus N(0, 0.05²) noise everywhere.
pub fn fixture_items(task: FixtureTask, n_per_class: usize, seed: u64) -> Vec<EvalItem> {
    let mut rng = StreamKey::new(seed).with_str("fixture").with_str(task.name()).rng();
    let mut items = Vec::with_capacity(n_per_class * FIXTURE_CLASSES);
    for index in 0..n_per_class * FIXTURE_CLASSES {
        let class = index % FIXTURE_CLASSES;
        let mut features = vec![0.0; FIXTURE_FEATURES];
        features[task.feature_offset() + class] = 1.0;
        for f in features.iter_mut() {
            *f += NOISE_SIGMA * gauss(&mut rng);
        }
        items.push(EvalItem {
            id: format!("{}_{index:04}", task.name()),
            prompt: format!("{} question {index} — pick A, B, C or D", task.name()),
            gold: CHOICE_LETTERS[class].to_string(),
            language: Some(task.language().to_string()),
            features: Some(features),
        });
    }
    items
}

/// Task A and task B items concatenated (the "combined task").
pub fn fixture_combined_items(n_per_class: usize, seed: u64) -> Vec<EvalItem> {
    let mut items = fixture_items(FixtureTask::A, n_per_class, seed);
    items.extend(fixture_items(FixtureTask::B, n_per_class, seed));
    items
}

/// Accuracy of a model on items via the toy MLP evaluator.
pub fn fixture_accuracy(model: &TensorMap, items: &[EvalItem]) -> Result<f64, FixtureError> {
    let record = evaluate_checkpoint(ModelRef::Map(model), items, &EvaluatorConfig::ToyMlp)?;
    Ok(record.accuracy)
}

/// The perfect combined model: base + τ_A + τ_B.
pub fn fixture_perfect_merge() -> Result<TensorMap, FixtureError> {
    let base = fixture_base();
    let a = fixture_expert(FixtureTask::A);
    let b = fixture_expert(FixtureTask::B);
    Ok(task_arithmetic_merge(&base, &[&a, &b], &[1.0, 1.0])?)
}

/// A diverse model population: task-arithmetic merges with random
/// coefficients λ ∈ [0, 1.2]² (plus the base and both experts), for
/// calibration matrices and estimator demos.
pub fn fixture_population(n_random: usize, seed: u64) -> Result<Vec<TensorMap>, FixtureError> {
    let base = fixture_base();
    let a = fixture_expert(FixtureTask::A);
    let b = fixture_expert(FixtureTask::B);
    let mut rng = StreamKey::new(seed).with_str("fixture").with_str("population").rng();
    let mut models = vec![base.clone(), a.clone(), b.clone()];
    for _ in 0..n_random {
        let la = 1.2 * rng.gen::<f64>();
        let lb = 1.2 * rng.gen::<f64>();
        models.push(task_arithmetic_merge(&base, &[&a, &b], &[la, lb])?);
    }
    Ok(models)
}

/// Evaluates every model on the items with the toy MLP and stacks the
/// correctness bits into a calibration matrix (models × items).
pub fn response_matrix(models: &[TensorMap], items: &[EvalItem]) -> Result<ResponseMatrix, FixtureError> {
    let item_ids: Vec<String> = items.iter().map(|i| i.id.clone()).collect();
    let mut rows = Vec::with_capacity(models.len());
    for model in models {
        let record = evaluate_checkpoint(ModelRef::Map(model), items, &EvaluatorConfig::ToyMlp)?;
        rows.push(record.correct);
    }
    Ok(ResponseMatrix::new(item_ids, rows)?)
}

/// Paths of an on-disk fixture bundle.
#[derive(Debug, Clone)]
pub struct FixtureLayout {
    pub base: PathBuf,
    pub expert_a: PathBuf,
    pub expert_b: PathBuf,
    pub task_a: PathBuf,
    pub task_b: PathBuf,
    pub combined: PathBuf,
}

/// Writes checkpoints and datasets (50 items per class per task — 200 per
/// task, 400 combined) into `dir` for end-to-end runs.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<FixtureLayout, FixtureError> {
    let layout = FixtureLayout {
        base: dir.join("base.safetensors"),
        expert_a: dir.join("expert_a.safetensors"),
        expert_b: dir.join("expert_b.safetensors"),
        task_a: dir.join("task_a.jsonl"),
        task_b: dir.join("task_b.jsonl"),
        combined: dir.join("combined.jsonl"),
    };
    write_checkpoint(&fixture_base(), &layout.base)?;
    write_checkpoint(&fixture_expert(FixtureTask::A), &layout.expert_a)?;
    write_checkpoint(&fixture_expert(FixtureTask::B), &layout.expert_b)?;
    write_jsonl_dataset(&layout.task_a, &fixture_items(FixtureTask::A, 50, seed))?;
    write_jsonl_dataset(&layout.task_b, &fixture_items(FixtureTask::B, 50, seed))?;
    write_jsonl_dataset(&layout.combined, &fixture_combined_items(50, seed))?;
    Ok(layout)
}
