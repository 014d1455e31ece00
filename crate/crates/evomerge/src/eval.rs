//! Fitness evaluation for merged checkpoints.
//!
//! A dataset is JSON Lines of [`EvalItem`]s. Evaluation picks a backend
//! ([`EvaluatorConfig`]): an external subprocess speaking a line-delimited
//! JSON protocol, the built-in toy MLP that runs real forward passes on
//! desk-scale checkpoints, or a constant test double. Backend responses
//! are scored by pure graders (multiple-choice letter extraction or
//! last-number math matching with an optional language check), producing
//! an [`EvalRecord`] of per-item correctness bits that estimators can
//! extrapolate from.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::OnceLock;
use std::thread;

use rand::Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{read_checkpoint, CheckpointError, TensorMap};
use crate::rng::StreamKey;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid dataset line: {message}")]
    DatasetParse { path: String, line: usize, message: String },
    #[error("duplicate item id {0:?} in dataset")]
    DuplicateId(String),
    #[error("item {0:?} has an empty gold answer")]
    EmptyGold(String),
    #[error("subsample of {n} items requested from a dataset of {size}")]
    SubsampleTooLarge { n: usize, size: usize },
    #[error("anchor id {0:?} not present in dataset")]
    UnknownAnchor(String),
    #[error("subsample spec invalid: {0}")]
    BadSubsample(String),
    #[error("invalid gold answer {0:?}: {1}")]
    BadGold(String, String),
    #[error("item {0:?} has no feature vector (required by the toy MLP evaluator)")]
    MissingFeatures(String),
    #[error("toy MLP checkpoint invalid: {0}")]
    BadModel(String),
    #[error("external evaluator failed: {message}{}", stderr_excerpt(.stderr))]
    External { message: String, stderr: String },
    #[error("external evaluator protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

fn stderr_excerpt(stderr: &str) -> String {
    let trimmed = stderr.trim();
    if trimmed.is_empty() {
        return String::new();
    }
    let mut excerpt: String = trimmed.chars().take(500).collect();
    if trimmed.chars().count() > 500 {
        excerpt.push('…');
    }
    format!(" (stderr: {excerpt})")
}

/// One benchmark question. `features` feeds the toy MLP evaluator;
/// LLM-style backends only see `prompt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub prompt: String,
    /// Choice letter ("A".."D") or canonical number string.
    pub gold: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

/// Per-item correctness of one model on one dataset. `accuracy` is always
/// the mean of `correct`; `missing_ids` flags items the backend never
/// answered (scored incorrect).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub item_ids: Vec<String>,
    pub correct: Vec<bool>,
    pub accuracy: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_ids: Vec<String>,
}

impl EvalRecord {
    pub fn new(item_ids: Vec<String>, correct: Vec<bool>, missing_ids: Vec<String>) -> Self {
        assert_eq!(item_ids.len(), correct.len(), "ids and bits must align");
        let accuracy = if correct.is_empty() {
            0.0
        } else {
            correct.iter().filter(|&&c| c).count() as f64 / correct.len() as f64
        };
        EvalRecord { item_ids, correct, accuracy, missing_ids }
    }

    /// Correctness bit for one item id, if it was evaluated.
    pub fn get(&self, id: &str) -> Option<bool> {
        self.item_ids.iter().position(|i| i == id).map(|p| self.correct[p])
    }
}

/// How to pick the fitness subset from a full dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleStrategy {
    /// Seeded uniform sample without replacement, original order kept.
    Random,
    /// Per-language proportional allocation (largest-remainder rounding),
    /// then random within each language.
    Stratified,
    /// Exactly these item ids, in this order.
    Anchors(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsampleSpec {
    pub n: usize,
    pub seed: u64,
    #[serde(default = "default_strategy")]
    pub strategy: SubsampleStrategy,
}

fn default_strategy() -> SubsampleStrategy {
    SubsampleStrategy::Random
}

/// Seeded selection of `n` of `size` indices without replacement,
/// returned in ascending order.
pub(crate) fn sample_indices(size: usize, n: usize, key: StreamKey) -> Vec<usize> {
    let mut rng = key.rng();
    let mut indices: Vec<usize> = (0..size).collect();
    for i in 0..n {
        let j = rng.gen_range(i..size);
        indices.swap(i, j);
    }
    indices.truncate(n);
    indices.sort_unstable();
    indices
}

/// Draw the fitness subset. Random and stratified keep the original item
/// order; anchors reproduce the listed order exactly.
pub fn subsample(items: &[EvalItem], spec: &SubsampleSpec) -> Result<Vec<EvalItem>, EvalError> {
    match &spec.strategy {
        SubsampleStrategy::Random => {
            if spec.n > items.len() {
                return Err(EvalError::SubsampleTooLarge { n: spec.n, size: items.len() });
            }
            let key = StreamKey::new(spec.seed).with_str("subsample");
            Ok(sample_indices(items.len(), spec.n, key)
                .into_iter()
                .map(|i| items[i].clone())
                .collect())
        }
        SubsampleStrategy::Stratified => {
            if spec.n > items.len() {
                return Err(EvalError::SubsampleTooLarge { n: spec.n, size: items.len() });
            }
            // Group item indices per language tag (missing tag = its own
            // stratum).
            let mut strata: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, item) in items.iter().enumerate() {
                strata.entry(item.language.as_deref().unwrap_or("")).or_default().push(i);
            }
            // Largest-remainder allocation; remainder ties go to the
            // lexicographically smaller language for determinism.
            let total = items.len() as f64;
            let mut quotas: Vec<(&str, usize, f64)> = strata
                .iter()
                .map(|(lang, members)| {
                    let exact = spec.n as f64 * members.len() as f64 / total;
                    (*lang, exact.floor() as usize, exact - exact.floor())
                })
                .collect();
            let mut assigned: usize = quotas.iter().map(|q| q.1).sum();
            let mut by_remainder: Vec<usize> = (0..quotas.len()).collect();
            by_remainder.sort_by(|&i, &j| {
                quotas[j].2.total_cmp(&quotas[i].2).then(quotas[i].0.cmp(quotas[j].0))
            });
            for &q in &by_remainder {
                if assigned == spec.n {
                    break;
                }
                quotas[q].1 += 1;
                assigned += 1;
            }

            let mut picked: Vec<usize> = Vec::with_capacity(spec.n);
            for (lang, count, _) in quotas {
                let members = &strata[lang];
                let key = StreamKey::new(spec.seed).with_str("subsample").with_str(lang);
                for local in sample_indices(members.len(), count, key) {
                    picked.push(members[local]);
                }
            }
            picked.sort_unstable();
            Ok(picked.into_iter().map(|i| items[i].clone()).collect())
        }
        SubsampleStrategy::Anchors(ids) => {
            if spec.n != ids.len() {
                return Err(EvalError::BadSubsample(format!(
                    "n = {} but {} anchor ids listed",
                    spec.n,
                    ids.len()
                )));
            }
            let by_id: BTreeMap<&str, &EvalItem> =
                items.iter().map(|item| (item.id.as_str(), item)).collect();
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .map(|&item| item.clone())
                        .ok_or_else(|| EvalError::UnknownAnchor(id.clone()))
                })
                .collect()
        }
    }
}

fn choice_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b[abcd]\b").expect("static regex"))
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Thousands-separated form first so "1,050" is taken whole; plain
    // integers/decimals otherwise.
    RE.get_or_init(|| {
        Regex::new(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?|[+-]?\d+(?:\.\d+)?").expect("static regex")
    })
}

/// Grades a free-form response against a multiple-choice gold letter by
/// extracting the LAST standalone A–D (case-insensitive, word-boundary
/// delimited, so "(B)" and "B)" count). No extraction grades false.
pub fn grade_multiple_choice(response: &str, gold: &str) -> Result<bool, EvalError> {
    let gold_letter = gold.trim().to_ascii_uppercase();
    if !matches!(gold_letter.as_str(), "A" | "B" | "C" | "D") {
        return Err(EvalError::BadGold(gold.to_string(), "expected one of A, B, C, D".into()));
    }
    let last = choice_regex().find_iter(response).last();
    Ok(match last {
        Some(m) => m.as_str().to_ascii_uppercase() == gold_letter,
        None => false,
    })
}

/// Identifies the language of a text. The evaluation pipeline prefers a
/// tag supplied by the external evaluator and falls back to this
/// classifier.
pub trait LanguageId {
    fn identify(&self, text: &str) -> Option<String>;
}

/// Built-in character-script histogram classifier. Good enough to tell
/// fixture languages apart (Latin/Cyrillic/Greek/CJK/kana/Hangul/Arabic/
/// Hebrew/Devanagari); NOT a real language identifier.
#[derive(Debug, Clone, Copy, Default)]
pub struct ScriptHeuristic;

impl LanguageId for ScriptHeuristic {
    fn identify(&self, text: &str) -> Option<String> {
        let mut latin = 0usize;
        let mut cyrillic = 0usize;
        let mut greek = 0usize;
        let mut cjk = 0usize;
        let mut kana = 0usize;
        let mut hangul = 0usize;
        let mut arabic = 0usize;
        let mut hebrew = 0usize;
        let mut devanagari = 0usize;
        for c in text.chars() {
            match c as u32 {
                0x0041..=0x005A | 0x0061..=0x007A | 0x00C0..=0x024F => latin += 1,
                0x0370..=0x03FF => greek += 1,
                0x0400..=0x04FF => cyrillic += 1,
                0x0590..=0x05FF => hebrew += 1,
                0x0600..=0x06FF => arabic += 1,
                0x0900..=0x097F => devanagari += 1,
                0x3040..=0x30FF => kana += 1,
                0x4E00..=0x9FFF => cjk += 1,
                0xAC00..=0xD7AF | 0x1100..=0x11FF => hangul += 1,
                _ => {}
            }
        }
        // Any kana marks Japanese even among kanji; otherwise the dominant
        // script wins.
        if kana > 0 {
            return Some("ja".into());
        }
        let table = [
            (latin, "en"),
            (cyrillic, "ru"),
            (greek, "el"),
            (cjk, "zh"),
            (hangul, "ko"),
            (arabic, "ar"),
            (hebrew, "he"),
            (devanagari, "hi"),
        ];
        table
            .iter()
            .filter(|(count, _)| *count > 0)
            .max_by_key(|(count, _)| *count)
            .map(|(_, tag)| (*tag).to_string())
    }
}

fn approx_eq(x: f64, y: f64) -> bool {
    let diff = (x - y).abs();
    diff <= 1e-9 || diff <= 1e-6 * x.abs().max(y.abs())
}

/// Last number in a response (optional sign, optional thousands
/// separators, optional decimal part), parsed with separators stripped.
pub fn extract_last_number(response: &str) -> Option<f64> {
    number_regex()
        .find_iter(response)
        .last()
        .and_then(|m| m.as_str().replace(',', "").parse::<f64>().ok())
}

/// Grades a math response: the LAST extracted number must equal the gold
/// number within 1e−6 relative or 1e−9 absolute tolerance, and when
/// `expected_lang` is set the response's identified language must match
/// ("both mathematically and linguistically correct").
pub fn grade_math(
    response: &str,
    gold_number: &str,
    expected_lang: Option<&str>,
    lang_id: &dyn LanguageId,
) -> Result<bool, EvalError> {
    let gold: f64 = gold_number
        .trim()
        .replace(',', "")
        .parse()
        .map_err(|e| EvalError::BadGold(gold_number.to_string(), format!("not a decimal: {e}")))?;
    let math_ok = extract_last_number(response).is_some_and(|got| approx_eq(got, gold));
    let lang_ok = match expected_lang {
        None => true,
        Some(want) => lang_id.identify(response).as_deref() == Some(want),
    };
    Ok(math_ok && lang_ok)
}

/// How backend responses are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraderConfig {
    MultipleChoice,
    Math {
        /// Require the response language to match each item's `language`
        /// tag (items without a tag skip the check).
        #[serde(default)]
        check_language: bool,
    },
}

impl Default for GraderConfig {
    fn default() -> Self {
        GraderConfig::MultipleChoice
    }
}

/// Evaluation backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EvaluatorConfig {
    /// Spawn `cmd` with the checkpoint path appended as the final
    /// argument and speak the JSONL prompt/response protocol.
    External {
        cmd: Vec<String>,
        #[serde(default)]
        grader: GraderConfig,
    },
    /// Forward passes through the checkpoint's `layers.{i}.weight/bias`
    /// MLP; predictions are choice letters.
    ToyMlp,
    /// Test double: every response is `reply`, or the item's gold answer
    /// when `reply` is null.
    Constant {
        #[serde(default)]
        reply: Option<String>,
        #[serde(default)]
        grader: GraderConfig,
    },
}

/// A model to evaluate: in memory, or on disk (required by external
/// evaluators, which receive the path).
#[derive(Debug, Clone, Copy)]
pub enum ModelRef<'a> {
    Path(&'a Path),
    Map(&'a TensorMap),
}

#[derive(Serialize)]
struct PromptLine<'a> {
    id: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct ResponseLine {
    id: String,
    response: String,
    #[serde(default)]
    language: Option<String>,
}

/// Runs the backend and grades every item, with the built-in language
/// classifier as fallback.
pub fn evaluate_checkpoint(
    model: ModelRef<'_>,
    items: &[EvalItem],
    evaluator: &EvaluatorConfig,
) -> Result<EvalRecord, EvalError> {
    evaluate_checkpoint_with(model, items, evaluator, &ScriptHeuristic)
}

/// As [`evaluate_checkpoint`], with a pluggable language identifier.
pub fn evaluate_checkpoint_with(
    model: ModelRef<'_>,
    items: &[EvalItem],
    evaluator: &EvaluatorConfig,
    lang_id: &dyn LanguageId,
) -> Result<EvalRecord, EvalError> {
    // Responses per item id: (text, optional language tag supplied by the
    // backend).
    let mut responses: BTreeMap<String, (String, Option<String>)> = BTreeMap::new();
    let grader = match evaluator {
        EvaluatorConfig::External { cmd, grader } => {
            let path = match model {
                ModelRef::Path(p) => p,
                ModelRef::Map(_) => {
                    return Err(EvalError::Protocol(
                        "external evaluators need an on-disk checkpoint path".into(),
                    ))
                }
            };
            responses = run_external(cmd, path, items)?;
            grader.clone()
        }
        EvaluatorConfig::ToyMlp => {
            let loaded;
            let map = match model {
                ModelRef::Map(m) => m,
                ModelRef::Path(p) => {
                    loaded = read_checkpoint(p)?;
                    &loaded
                }
            };
            for item in items {
                let features = item
                    .features
                    .as_ref()
                    .ok_or_else(|| EvalError::MissingFeatures(item.id.clone()))?;
                let letter = mlp_forward(map, features)?;
                responses.insert(item.id.clone(), (letter, None));
            }
            GraderConfig::MultipleChoice
        }
        EvaluatorConfig::Constant { reply, grader } => {
            for item in items {
                let text = reply.clone().unwrap_or_else(|| item.gold.clone());
                responses.insert(item.id.clone(), (text, None));
            }
            grader.clone()
        }
    };

    let mut correct = Vec::with_capacity(items.len());
    let mut missing = Vec::new();
    for item in items {
        match responses.get(&item.id) {
            None => {
                missing.push(item.id.clone());
                correct.push(false);
            }
            Some((text, supplied_lang)) => {
                let bit = match &grader {
                    GraderConfig::MultipleChoice => grade_multiple_choice(text, &item.gold)?,
                    GraderConfig::Math { check_language } => {
                        let expected = if *check_language { item.language.as_deref() } else { None };
                        let tagged = SuppliedTag { tag: supplied_lang.as_deref(), fallback: lang_id };
                        grade_math(text, &item.gold, expected, &tagged)?
                    }
                };
                correct.push(bit);
            }
        }
    }
    Ok(EvalRecord::new(
        items.iter().map(|i| i.id.clone()).collect(),
        correct,
        missing,
    ))
}

/// Prefers the backend-supplied language tag over the classifier.
struct SuppliedTag<'a> {
    tag: Option<&'a str>,
    fallback: &'a dyn LanguageId,
}

impl LanguageId for SuppliedTag<'_> {
    fn identify(&self, text: &str) -> Option<String> {
        match self.tag {
            Some(tag) => Some(tag.to_string()),
            None => self.fallback.identify(text),
        }
    }
}

/// Spawns the external evaluator and exchanges JSONL over its pipes:
/// {"id", "prompt"} per line in, {"id", "response"} per line out, ids
/// matched order-free, stream ended by closing stdin.
fn run_external(
    cmd: &[String],
    checkpoint: &Path,
    items: &[EvalItem],
) -> Result<BTreeMap<String, (String, Option<String>)>, EvalError> {
    if cmd.is_empty() {
        return Err(EvalError::Protocol("external evaluator command is empty".into()));
    }
    let mut child = Command::new(&cmd[0])
        .args(&cmd[1..])
        .arg(checkpoint)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EvalError::External {
            message: format!("failed to spawn {:?}: {e}", cmd[0]),
            stderr: String::new(),
        })?;

    let mut payload = String::new();
    for item in items {
        let line = serde_json::to_string(&PromptLine { id: &item.id, prompt: &item.prompt })
            .expect("prompt serialization cannot fail");
        let _ = writeln!(payload, "{line}");
    }

    // Writer and stderr-drain threads prevent pipe deadlock while we read
    // stdout. A write failure (child exited early) surfaces as missing
    // responses or a nonzero exit below.
    let mut stdin = child.stdin.take().expect("stdin piped");
    let writer = thread::spawn(move || {
        let _ = stdin.write_all(payload.as_bytes());
    });
    let mut stderr_pipe = child.stderr.take().expect("stderr piped");
    let stderr_thread = thread::spawn(move || {
        let mut buf = String::new();
        let _ = stderr_pipe.read_to_string(&mut buf);
        buf
    });

    let stdout = child.stdout.take().expect("stdout piped");
    let mut responses = BTreeMap::new();
    let mut parse_error: Option<EvalError> = None;
    for line in BufReader::new(stdout).lines() {
        let line = line.map_err(|e| EvalError::External {
            message: format!("reading evaluator stdout: {e}"),
            stderr: String::new(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ResponseLine>(&line) {
            Ok(resp) => {
                // Later lines for the same id win; partial answers may be
                // superseded.
                responses.insert(resp.id, (resp.response, resp.language));
            }
            Err(e) => {
                parse_error.get_or_insert(EvalError::Protocol(format!(
                    "unparsable response line {line:?}: {e}"
                )));
            }
        }
    }

    let status = child.wait().map_err(|e| EvalError::External {
        message: format!("waiting for evaluator: {e}"),
        stderr: String::new(),
    })?;
    let _ = writer.join();
    let stderr_text = stderr_thread.join().unwrap_or_default();

    if !status.success() {
        return Err(EvalError::External {
            message: format!("evaluator exited with {status}"),
            stderr: stderr_text,
        });
    }
    if let Some(err) = parse_error {
        return Err(err);
    }
    let known: BTreeSet<&str> = items.iter().map(|i| i.id.as_str()).collect();
    if let Some(unknown) = responses.keys().find(|id| !known.contains(id.as_str())) {
        return Err(EvalError::Protocol(format!(
            "response for unknown item id {unknown:?}"
        )));
    }
    Ok(responses)
}

const CHOICE_LETTERS: [&str; 4] = ["A", "B", "C", "D"];

/// Forward pass through the toy MLP layout: `layers.{i}.weight` [out, in]
/// and `layers.{i}.bias` [out] for i = 0..L−1, ReLU between layers, none
/// after the last. Returns the argmax class as a choice letter (ties take
/// the lowest index).
pub fn mlp_forward(model: &TensorMap, features: &[f64]) -> Result<String, EvalError> {
    let mut layer = 0usize;
    let mut x: Vec<f64> = features.to_vec();
    loop {
        let weight = match model.get(&format!("layers.{layer}.weight")) {
            Some(t) => t,
            None if layer > 0 => break,
            None => return Err(EvalError::BadModel("no layers.0.weight tensor".into())),
        };
        let bias = model
            .get(&format!("layers.{layer}.bias"))
            .ok_or_else(|| EvalError::BadModel(format!("layers.{layer}.bias missing")))?;
        let (out_dim, in_dim) = match weight.shape() {
            [o, i] => (*o, *i),
            other => {
                return Err(EvalError::BadModel(format!(
                    "layers.{layer}.weight has shape {other:?}, expected [out, in]"
                )))
            }
        };
        if bias.shape() != [out_dim] {
            return Err(EvalError::BadModel(format!(
                "layers.{layer}.bias has shape {:?}, expected [{out_dim}]",
                bias.shape()
            )));
        }
        if x.len() != in_dim {
            return Err(EvalError::BadModel(format!(
                "layers.{layer} expects {in_dim} inputs, got {}",
                x.len()
            )));
        }
        let w = weight.to_f64_vec();
        let b = bias.to_f64_vec();
        let mut y = vec![0.0f64; out_dim];
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            *yo = row.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>() + b[o];
        }
        layer += 1;
        let is_last = model.get(&format!("layers.{layer}.weight")).is_none();
        if !is_last {
            for v in &mut y {
                *v = v.max(0.0);
            }
        }
        x = y;
        if is_last {
            break;
        }
    }
    if x.len() > CHOICE_LETTERS.len() {
        return Err(EvalError::BadModel(format!(
            "{} output classes exceed the {} choice letters",
            x.len(),
            CHOICE_LETTERS.len()
        )));
    }
    if x.is_empty() {
        return Err(EvalError::BadModel("model produced no logits".into()));
    }
    let mut best = 0usize;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    Ok(CHOICE_LETTERS[best].to_string())
}

/// Reads a JSONL dataset, validating id uniqueness and non-empty golds.
pub fn read_jsonl_dataset(path: impl AsRef<Path>) -> Result<Vec<EvalItem>, EvalError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut items = Vec::new();
    let mut seen = BTreeSet::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let item: EvalItem = serde_json::from_str(line).map_err(|e| EvalError::DatasetParse {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if item.gold.is_empty() {
            return Err(EvalError::EmptyGold(item.id));
        }
        if !seen.insert(item.id.clone()) {
            return Err(EvalError::DuplicateId(item.id));
        }
        items.push(item);
    }
    Ok(items)
}

/// Writes a JSONL dataset (one item per line).
pub fn write_jsonl_dataset(path: impl AsRef<Path>, items: &[EvalItem]) -> Result<(), EvalError> {
    let path = path.as_ref();
    let mut out = String::new();
    for item in items {
        let line = serde_json::to_string(item).expect("item serialization cannot fail");
        let _ = writeln!(out, "{line}");
    }
    fs::write(path, out).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}
