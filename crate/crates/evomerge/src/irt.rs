//! Performance estimators: extrapolate full-dataset accuracy from a small
//! anchor subsample.
//!
//! The model is two-parameter logistic (2PL) item response theory: item j
//! has discrimination `a` and difficulty `b`, and a model with ability θ
//! answers it correctly with probability σ(a(θ−b)). On top of one fitted
//! ability the module builds the estimator family compared in the paper's
//! appendix — Random (subsample mean), P-IRT (ability extrapolation),
//! GP-IRT (blend with the anchor mean), MP-IRT (abilities of the merge's
//! endpoints combined by the merge weights), and GMP-IRT (MP-IRT blended
//! with observations under a learned weight). The paper names these
//! estimators but gives no equations; the formulas below are this
//! artifact's documented contract.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{sample_indices, EvalRecord};
use crate::rng::StreamKey;

/// Ability/difficulty search box.
pub const THETA_MIN: f64 = -6.0;
pub const THETA_MAX: f64 = 6.0;
/// Discrimination cap.
pub const A_MAX: f64 = 10.0;
const A_MIN: f64 = 1e-3;
/// Default blend weight for GP-IRT.
pub const GPIRT_DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum IrtError {
    #[error("invalid item parameters a={a}, b={b}: {reason}")]
    BadItem { a: f64, b: f64, reason: String },
    #[error("item bank is empty")]
    EmptyBank,
    #[error("anchor id {0:?} not in the item bank")]
    UnknownAnchor(String),
    #[error("item id {0:?} not in the item bank")]
    UnknownItem(String),
    #[error("no responses to fit an ability from")]
    NoResponses,
    #[error("item bank has no anchors")]
    EmptyAnchors,
    #[error("observed items do not match the bank's anchors: {0}")]
    AnchorMismatch(String),
    #[error("lambda {0} outside [0, 1]")]
    BadLambda(f64),
    #[error("alpha {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("estimator input {name} = {value} outside [0, 1]")]
    BadInput { name: &'static str, value: f64 },
    #[error("invalid merge weights: {0}")]
    BadWeights(String),
    #[error("{thetas} endpoint abilities but {weights} merge weights")]
    LengthMismatch { thetas: usize, weights: usize },
    #[error("subsample of {n} requested from {size} observations")]
    BadSample { n: usize, size: usize },
    #[error("calibration needs ≥ 3 models, got {0}")]
    TooFewModels(usize),
    #[error("calibration needs ≥ 10 items, got {0}")]
    TooFewItems(usize),
    #[error("response matrix is ragged or has duplicate item ids: {0}")]
    BadMatrix(String),
    #[error("degenerate response matrix: all model rows are identical")]
    DegenerateMatrix,
    #[error("{n} anchors requested from a bank of {items} items")]
    BadAnchorCount { n: usize, items: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid item bank file {path}: {message}")]
    BankParse { path: String, message: String },
}

/// One calibrated 2PL item.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IrtItem {
    /// Discrimination, in (0, 10].
    pub a: f64,
    /// Difficulty, in [−6, 6].
    pub b: f64,
}

impl IrtItem {
    pub fn new(a: f64, b: f64) -> Result<Self, IrtError> {
        let item = IrtItem { a, b };
        item.validate()?;
        Ok(item)
    }

    fn validate(&self) -> Result<(), IrtError> {
        let bad = |reason: &str| IrtError::BadItem { a: self.a, b: self.b, reason: reason.into() };
        if !self.a.is_finite() || self.a <= 0.0 || self.a > A_MAX {
            return Err(bad("a must lie in (0, 10]"));
        }
        if !self.b.is_finite() || !(THETA_MIN..=THETA_MAX).contains(&self.b) {
            return Err(bad("b must lie in [−6, 6]"));
        }
        Ok(())
    }
}

/// Calibrated items plus the ordered anchor subset used for subsampled
/// evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemBank {
    items: BTreeMap<String, IrtItem>,
    anchor_ids: Vec<String>,
}

impl ItemBank {
    pub fn new(items: BTreeMap<String, IrtItem>, anchor_ids: Vec<String>) -> Result<Self, IrtError> {
        if items.is_empty() {
            return Err(IrtError::EmptyBank);
        }
        for item in items.values() {
            item.validate()?;
        }
        let mut seen = BTreeSet::new();
        for id in &anchor_ids {
            if !items.contains_key(id) {
                return Err(IrtError::UnknownAnchor(id.clone()));
            }
            if !seen.insert(id) {
                return Err(IrtError::BadMatrix(format!("duplicate anchor id {id:?}")));
            }
        }
        Ok(ItemBank { items, anchor_ids })
    }

    pub fn items(&self) -> &BTreeMap<String, IrtItem> {
        &self.items
    }

    pub fn anchor_ids(&self) -> &[String] {
        &self.anchor_ids
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&IrtItem> {
        self.items.get(id)
    }
}

/// On-disk form: {"items": {id: {"a", "b"}}, "anchors": [ids]}.
#[derive(Serialize, Deserialize)]
struct BankFile {
    items: BTreeMap<String, IrtItem>,
    anchors: Vec<String>,
}

pub fn load_item_bank(path: impl AsRef<Path>) -> Result<ItemBank, IrtError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| IrtError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: BankFile = serde_json::from_str(&text).map_err(|e| IrtError::BankParse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ItemBank::new(file.items, file.anchors)
}

pub fn save_item_bank(path: impl AsRef<Path>, bank: &ItemBank) -> Result<(), IrtError> {
    let path = path.as_ref();
    let file = BankFile { items: bank.items.clone(), anchors: bank.anchor_ids.clone() };
    let text = serde_json::to_string_pretty(&file).expect("bank serialization cannot fail");
    fs::write(path, text).map_err(|source| IrtError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Fitted ability for one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbilityEstimate {
    /// Maximum-likelihood ability in [−6, 6].
    pub theta: f64,
    pub log_likelihood: f64,
    pub n_observed: usize,
}

/// Numerically stable ln σ(z) (avoids 1 − σ cancellation for |z| ≫ 0).
fn log_sigmoid(z: f64) -> f64 {
    -((-z).max(0.0) + (-z.abs()).exp().ln_1p())
}

/// 2PL response probability σ(a(θ−b)).
pub fn irt_prob(theta: f64, item: &IrtItem) -> f64 {
    1.0 / (1.0 + (-item.a * (theta - item.b)).exp())
}

/// Bernoulli log-likelihood of a response set at ability θ.
fn response_ll(theta: f64, observed: &[(bool, IrtItem)]) -> f64 {
    observed
        .iter()
        .map(|(y, item)| {
            let z = item.a * (theta - item.b);
            if *y {
                log_sigmoid(z)
            } else {
                log_sigmoid(-z)
            }
        })
        .sum()
}

/// Maximizes a concave 1-D function by ternary search.
fn ternary_max(mut lo: f64, mut hi: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > tol {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    (lo + hi) / 2.0
}

fn fit_theta_from(observed: &[(bool, IrtItem)]) -> AbilityEstimate {
    // Coarse grid (step 0.1), then local ternary refinement. The
    // likelihood is concave in θ, so the refinement is exact; all-correct
    // or all-wrong response sets ride the monotone likelihood to a box
    // edge.
    let mut best_theta = THETA_MIN;
    let mut best_ll = f64::NEG_INFINITY;
    for i in 0..=120 {
        let theta = (THETA_MIN + 0.1 * i as f64).clamp(THETA_MIN, THETA_MAX);
        let ll = response_ll(theta, observed);
        if ll > best_ll {
            best_ll = ll;
            best_theta = theta;
        }
    }
    let lo = (best_theta - 0.1).max(THETA_MIN);
    let hi = (best_theta + 0.1).min(THETA_MAX);
    let theta = ternary_max(lo, hi, 1e-5, |t| response_ll(t, observed));
    AbilityEstimate {
        theta,
        log_likelihood: response_ll(theta, observed),
        n_observed: observed.len(),
    }
}

/// Maximum-likelihood ability from observed correctness bits.
pub fn fit_theta(
    responses: &BTreeMap<String, bool>,
    bank: &ItemBank,
) -> Result<AbilityEstimate, IrtError> {
    if responses.is_empty() {
        return Err(IrtError::NoResponses);
    }
    let observed: Vec<(bool, IrtItem)> = responses
        .iter()
        .map(|(id, y)| {
            bank.get(id)
                .map(|item| (*y, *item))
                .ok_or_else(|| IrtError::UnknownItem(id.clone()))
        })
        .collect::<Result<_, _>>()?;
    Ok(fit_theta_from(&observed))
}

/// Correctness bits of a record as the response map `fit_theta` takes.
pub fn responses_from_record(record: &EvalRecord) -> BTreeMap<String, bool> {
    record
        .item_ids
        .iter()
        .cloned()
        .zip(record.correct.iter().copied())
        .collect()
}

/// Checks that the observed items are exactly the bank's anchors, and
/// returns the anchor correctness sum.
fn check_anchor_obs(obs: &EvalRecord, bank: &ItemBank) -> Result<f64, IrtError> {
    if bank.anchor_ids.is_empty() {
        return Err(IrtError::EmptyAnchors);
    }
    let observed: BTreeSet<&str> = obs.item_ids.iter().map(String::as_str).collect();
    let anchors: BTreeSet<&str> = bank.anchor_ids.iter().map(String::as_str).collect();
    if observed != anchors {
        let missing: Vec<&&str> = anchors.difference(&observed).collect();
        let extra: Vec<&&str> = observed.difference(&anchors).collect();
        return Err(IrtError::AnchorMismatch(format!(
            "missing {missing:?}, unexpected {extra:?}"
        )));
    }
    Ok(obs.correct.iter().filter(|&&y| y).count() as f64)
}

/// Extrapolates non-anchor items from one ability θ: anchors contribute
/// their observed bits, everything else contributes σ(a(θ−b)).
fn extrapolate(theta: f64, anchor_correct_sum: f64, bank: &ItemBank) -> f64 {
    let anchors: BTreeSet<&str> = bank.anchor_ids.iter().map(String::as_str).collect();
    let predicted: f64 = bank
        .items
        .iter()
        .filter(|(id, _)| !anchors.contains(id.as_str()))
        .map(|(_, item)| irt_prob(theta, item))
        .sum();
    (anchor_correct_sum + predicted) / bank.items.len() as f64
}

/// P-IRT: fit the merged model's ability on its anchor bits, then
/// extrapolate the rest of the bank. Anchors = full bank degenerates to
/// the observed accuracy exactly.
pub fn estimate_pirt(obs: &EvalRecord, bank: &ItemBank) -> Result<f64, IrtError> {
    let correct_sum = check_anchor_obs(obs, bank)?;
    let ability = fit_theta(&responses_from_record(obs), bank)?;
    Ok(extrapolate(ability.theta, correct_sum, bank))
}

/// GP-IRT: convex blend λ·anchor_mean + (1−λ)·P-IRT. The paper motivates
/// the smoothing but gives no formula; the blend is this artifact's
/// contract.
pub fn estimate_gpirt(obs: &EvalRecord, bank: &ItemBank, lambda: f64) -> Result<f64, IrtError> {
    if !(0.0..=1.0).contains(&lambda) || lambda.is_nan() {
        return Err(IrtError::BadLambda(lambda));
    }
    let pirt = estimate_pirt(obs, bank)?;
    Ok(lambda * obs.accuracy + (1.0 - lambda) * pirt)
}

/// Merge-weighted ability combination θ_m = Σ w̄ᵢθᵢ (weights normalized).
pub fn combine_thetas(endpoint_thetas: &[f64], merge_weights: &[f64]) -> Result<f64, IrtError> {
    if endpoint_thetas.len() != merge_weights.len() {
        return Err(IrtError::LengthMismatch {
            thetas: endpoint_thetas.len(),
            weights: merge_weights.len(),
        });
    }
    if endpoint_thetas.is_empty() {
        return Err(IrtError::BadWeights("no endpoints".into()));
    }
    if merge_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(IrtError::BadWeights("weights must be finite and ≥ 0".into()));
    }
    let total: f64 = merge_weights.iter().sum();
    if total <= 0.0 {
        return Err(IrtError::BadWeights("weights sum to 0".into()));
    }
    Ok(endpoint_thetas
        .iter()
        .zip(merge_weights)
        .map(|(theta, w)| theta * w / total)
        .sum())
}

/// MP-IRT: assume the merged model's ability is the weight-normalized
/// combination of the endpoints' abilities, then extrapolate non-anchors
/// from θ_m while anchors keep the merged model's observed bits.
pub fn estimate_mpirt(
    endpoint_thetas: &[f64],
    merge_weights: &[f64],
    obs: &EvalRecord,
    bank: &ItemBank,
) -> Result<f64, IrtError> {
    let correct_sum = check_anchor_obs(obs, bank)?;
    let theta_m = combine_thetas(endpoint_thetas, merge_weights)?;
    Ok(extrapolate(theta_m, correct_sum, bank))
}

/// GMP-IRT: α·mpirt + (1−α)·observed anchor mean.
pub fn estimate_gmpirt(mpirt: f64, observed_anchor_mean: f64, alpha: f64) -> Result<f64, IrtError> {
    if !(0.0..=1.0).contains(&mpirt) {
        return Err(IrtError::BadInput { name: "mpirt", value: mpirt });
    }
    if !(0.0..=1.0).contains(&observed_anchor_mean) {
        return Err(IrtError::BadInput { name: "observed_anchor_mean", value: observed_anchor_mean });
    }
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(IrtError::BadAlpha(alpha));
    }
    Ok(alpha * mpirt + (1.0 - alpha) * observed_anchor_mean)
}

/// Refits GMP-IRT's blend weight by least squares over accumulated
/// (mpirt, anchor_mean, later-measured accuracy) triples. Under 5 triples
/// — or a degenerate design — the neutral 0.5 is used; the fit is clipped
/// to [0, 1].
pub fn fit_gmpirt_alpha(history: &[(f64, f64, f64)]) -> f64 {
    if history.len() < 5 {
        return 0.5;
    }
    // estimate(α) = α·m + (1−α)·o; minimizing Σ(estimate − y)² gives
    // α = Σ(y−o)(m−o) / Σ(m−o)².
    let mut num = 0.0;
    let mut den = 0.0;
    for (m, o, y) in history {
        num += (y - o) * (m - o);
        den += (m - o) * (m - o);
    }
    if den <= 1e-12 {
        return 0.5;
    }
    (num / den).clamp(0.0, 1.0)
}

/// Random baseline: accuracy on a seeded subsample of the full per-item
/// correctness vector. Uses the same stream as the random subsampling
/// strategy, so this equals evaluating on `subsample(items, {n, seed,
/// random})`.
pub fn estimate_random(full_correct: &[bool], n: usize, seed: u64) -> Result<f64, IrtError> {
    if n == 0 || n > full_correct.len() {
        return Err(IrtError::BadSample { n, size: full_correct.len() });
    }
    let key = StreamKey::new(seed).with_str("subsample");
    let picked = sample_indices(full_correct.len(), n, key);
    Ok(picked.iter().filter(|&&i| full_correct[i]).count() as f64 / n as f64)
}

/// models × items correctness matrix for calibration.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    item_ids: Vec<String>,
    rows: Vec<Vec<bool>>,
}

impl ResponseMatrix {
    pub fn new(item_ids: Vec<String>, rows: Vec<Vec<bool>>) -> Result<Self, IrtError> {
        let unique: BTreeSet<&String> = item_ids.iter().collect();
        if unique.len() != item_ids.len() {
            return Err(IrtError::BadMatrix("duplicate item ids".into()));
        }
        if let Some(row) = rows.iter().find(|r| r.len() != item_ids.len()) {
            return Err(IrtError::BadMatrix(format!(
                "row of length {} in a matrix of {} items",
                row.len(),
                item_ids.len()
            )));
        }
        Ok(ResponseMatrix { item_ids, rows })
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.rows
    }

    pub fn n_models(&self) -> usize {
        self.rows.len()
    }
}

/// The calibrated bank plus the per-model abilities recovered on the way
/// (useful as MP-IRT endpoint abilities).
#[derive(Debug, Clone)]
pub struct CalibrationReport {
    pub bank: ItemBank,
    /// Standardized ability per matrix row, same order.
    pub thetas: Vec<f64>,
    pub rounds: usize,
    pub log_likelihood: f64,
}

fn item_ll(a: f64, b: f64, col: &[bool], thetas: &[f64]) -> f64 {
    col.iter()
        .zip(thetas)
        .map(|(y, theta)| {
            let z = a * (theta - b);
            if *y {
                log_sigmoid(z)
            } else {
                log_sigmoid(-z)
            }
        })
        .sum()
}

/// Fits one item's (a, b) to fixed abilities by a coarse 2-D grid and
/// coordinate-wise ternary refinement (the likelihood is concave in each
/// coordinate). Parameters are clipped to the item boxes, which also
/// absorbs all-constant columns (they drive b to a box edge).
fn fit_item(col: &[bool], thetas: &[f64]) -> IrtItem {
    let mut best = (1.0, 0.0);
    let mut best_ll = f64::NEG_INFINITY;
    for ai in 0..10 {
        // Log-spaced discriminations 0.2 .. 8.
        let a = 0.2 * (8.0f64 / 0.2).powf(ai as f64 / 9.0);
        for bi in 0..=24 {
            let b = THETA_MIN + 0.5 * bi as f64;
            let ll = item_ll(a, b, col, thetas);
            if ll > best_ll {
                best_ll = ll;
                best = (a, b);
            }
        }
    }
    let (mut a, mut b) = best;
    for _ in 0..2 {
        b = ternary_max(THETA_MIN, THETA_MAX, 1e-3, |bb| item_ll(a, bb, col, thetas));
        a = ternary_max(A_MIN, A_MAX, 1e-3, |aa| item_ll(aa, b, col, thetas));
    }
    IrtItem { a: a.clamp(A_MIN, A_MAX), b: b.clamp(THETA_MIN, THETA_MAX) }
}

fn matrix_ll(items: &[IrtItem], thetas: &[f64], rows: &[Vec<bool>]) -> f64 {
    let mut total = 0.0;
    for (row, theta) in rows.iter().zip(thetas) {
        for (y, item) in row.iter().zip(items) {
            let z = item.a * (theta - item.b);
            total += if *y { log_sigmoid(z) } else { log_sigmoid(-z) };
        }
    }
    total
}

/// Anchor selection: the n items with the highest Fisher information
/// a²p(1−p) at θ = 0 (ties to the earlier item), in bank id order.
pub fn select_anchors(item_ids: &[String], items: &[IrtItem], n: usize) -> Vec<String> {
    let mut scored: Vec<(usize, f64)> = items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let p = irt_prob(0.0, item);
            (i, item.a * item.a * p * (1.0 - p))
        })
        .collect();
    scored.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let mut chosen: Vec<usize> = scored.into_iter().take(n).map(|(i, _)| i).collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| item_ids[i].clone()).collect()
}

/// Calibrates a 2PL bank from a models × items correctness matrix by
/// alternating maximization: fit items to abilities, abilities to items,
/// standardize abilities for identifiability; stop after 10 rounds or
/// when the log-likelihood moves < 1e−5. The calibration procedure is not
/// given in the paper; this is artifact plumbing for the IRT estimators.
pub fn calibrate_item_bank(
    matrix: &ResponseMatrix,
    n_anchors: usize,
) -> Result<CalibrationReport, IrtError> {
    let n_models = matrix.rows.len();
    let n_items = matrix.item_ids.len();
    if n_models < 3 {
        return Err(IrtError::TooFewModels(n_models));
    }
    if n_items < 10 {
        return Err(IrtError::TooFewItems(n_items));
    }
    if n_anchors == 0 || n_anchors > n_items {
        return Err(IrtError::BadAnchorCount { n: n_anchors, items: n_items });
    }
    if matrix.rows.iter().all(|r| r == &matrix.rows[0]) {
        return Err(IrtError::DegenerateMatrix);
    }

    // Initialize abilities as z-scored row accuracies.
    let accs: Vec<f64> = matrix
        .rows
        .iter()
        .map(|r| r.iter().filter(|&&y| y).count() as f64 / n_items as f64)
        .collect();
    let mut thetas = standardize(&accs);

    let columns: Vec<Vec<bool>> = (0..n_items)
        .map(|j| matrix.rows.iter().map(|r| r[j]).collect())
        .collect();

    let mut items: Vec<IrtItem> = vec![IrtItem { a: 1.0, b: 0.0 }; n_items];
    let mut prev_ll = f64::NEG_INFINITY;
    let mut rounds = 0;
    for round in 1..=10 {
        rounds = round;
        for (j, col) in columns.iter().enumerate() {
            items[j] = fit_item(col, &thetas);
        }
        for (m, row) in matrix.rows.iter().enumerate() {
            let observed: Vec<(bool, IrtItem)> =
                row.iter().copied().zip(items.iter().copied()).collect();
            thetas[m] = fit_theta_from(&observed).theta;
        }
        let ll = matrix_ll(&items, &thetas, &matrix.rows);
        let done = (ll - prev_ll).abs() < 1e-5;
        prev_ll = ll;
        thetas = standardize(&thetas);
        if done {
            break;
        }
    }
    // One final item pass so the returned bank matches the standardized
    // abilities.
    for (j, col) in columns.iter().enumerate() {
        items[j] = fit_item(col, &thetas);
    }
    let log_likelihood = matrix_ll(&items, &thetas, &matrix.rows);

    let anchors = select_anchors(&matrix.item_ids, &items, n_anchors);
    let bank_items: BTreeMap<String, IrtItem> =
        matrix.item_ids.iter().cloned().zip(items.iter().copied()).collect();
    Ok(CalibrationReport {
        bank: ItemBank::new(bank_items, anchors)?,
        thetas,
        rounds,
        log_likelihood,
    })
}

/// Z-scores values (population std), clamped to the ability box; a
/// zero-variance vector is only centered.
fn standardize(values: &[f64]) -> Vec<f64> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    values
        .iter()
        .map(|v| {
            let z = if std > 1e-9 { (v - mean) / std } else { v - mean };
            z.clamp(THETA_MIN, THETA_MAX)
        })
        .collect()
}

/// Simulates one model's correctness bits in a 2PL world (test/fixture
/// support; the sampling stream is independent of merge and search
/// streams).
pub fn sample_responses(
    theta: f64,
    item_ids: &[String],
    bank_items: &BTreeMap<String, IrtItem>,
    key: StreamKey,
) -> Vec<bool> {
    let mut rng = key.rng();
    item_ids
        .iter()
        .map(|id| {
            let p = irt_prob(theta, &bank_items[id]);
            rng.gen::<f64>() < p
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Random bank: a ∈ [a_lo, a_hi], b ∈ [b_lo, b_hi].
    fn random_bank_items(
        n: usize,
        (a_lo, a_hi): (f64, f64),
        (b_lo, b_hi): (f64, f64),
        seed: u64,
    ) -> (Vec<String>, BTreeMap<String, IrtItem>) {
        let mut rng = StreamKey::new(seed).with_str("bank").rng();
        let ids: Vec<String> = (0..n).map(|i| format!("item{i:04}")).collect();
        let items = ids
            .iter()
            .map(|id| {
                let a = a_lo + (a_hi - a_lo) * rng.gen::<f64>();
                let b = b_lo + (b_hi - b_lo) * rng.gen::<f64>();
                (id.clone(), IrtItem { a, b })
            })
            .collect();
        (ids, items)
    }

    fn record_from_bits(ids: &[String], bits: &[bool]) -> EvalRecord {
        EvalRecord::new(ids.to_vec(), bits.to_vec(), vec![])
    }

    #[test]
    fn prob_is_half_at_difficulty() {
        let item = IrtItem { a: 1.7, b: 0.3 };
        assert!((irt_prob(0.3, &item) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn prob_flat_item_is_half_everywhere() {
        let item = IrtItem { a: 1e-9, b: 1.0 };
        for theta in [-6.0, -1.0, 0.0, 4.0] {
            assert!((irt_prob(theta, &item) - 0.5).abs() < 1e-6);
        }
    }

    #[test]
    fn prob_closed_form_point() {
        // a=2, θ−b=1 → σ(2) ≈ 0.880797.
        let item = IrtItem { a: 2.0, b: 0.5 };
        assert!((irt_prob(1.5, &item) - 0.8807970779778823).abs() < 1e-9);
    }

    #[test]
    fn log_sigmoid_is_stable_in_the_tails() {
        assert!((log_sigmoid(120.0)).abs() < 1e-12);
        assert!((log_sigmoid(-120.0) + 120.0).abs() < 1e-9);
    }

    #[test]
    fn fit_theta_single_correct_rides_to_boundary() {
        let items = BTreeMap::from([("q".to_string(), IrtItem { a: 1.0, b: 0.0 })]);
        let bank = ItemBank::new(items, vec!["q".into()]).unwrap();
        let responses = BTreeMap::from([("q".to_string(), true)]);
        let fit = fit_theta(&responses, &bank).unwrap();
        assert!((fit.theta - THETA_MAX).abs() < 1e-3, "theta = {}", fit.theta);
        assert_eq!(fit.n_observed, 1);
    }

    #[test]
    fn fit_theta_rejects_unknown_ids_and_empty() {
        let items = BTreeMap::from([("q".to_string(), IrtItem { a: 1.0, b: 0.0 })]);
        let bank = ItemBank::new(items, vec![]).unwrap();
        assert!(matches!(fit_theta(&BTreeMap::new(), &bank), Err(IrtError::NoResponses)));
        let responses = BTreeMap::from([("other".to_string(), true)]);
        assert!(matches!(fit_theta(&responses, &bank), Err(IrtError::UnknownItem(_))));
    }

    fn recover_theta(true_theta: f64, seed: u64) -> f64 {
        let (ids, items) = random_bank_items(300, (0.5, 2.0), (-2.0, 2.0), seed);
        let bits = sample_responses(true_theta, &ids, &items, StreamKey::new(seed).with_str("resp"));
        let bank = ItemBank::new(items, vec![]).unwrap();
        let responses: BTreeMap<String, bool> = ids.into_iter().zip(bits).collect();
        fit_theta(&responses, &bank).unwrap().theta
    }

    #[test]
    fn fit_theta_recovers_planted_ability() {
        // Generate-then-recover: 300 random items, responses sampled at a
        // known θ*.
        assert!((recover_theta(0.7, 42) - 0.7).abs() <= 0.15);
        assert!((recover_theta(-1.2, 42) + 1.2).abs() <= 0.15);
    }

    /// Synthetic P-IRT world: bank of `n_items`, the `n_anchors` most
    /// informative items as anchors, full bits simulated at `theta`.
    /// Discriminations are fairly steep and difficulties spread wide so
    /// the anchor fit is tight and non-anchor sensitivity moderate.
    fn pirt_world(
        n_items: usize,
        n_anchors: usize,
        theta: f64,
        seed: u64,
    ) -> (ItemBank, Vec<String>, Vec<bool>) {
        let (ids, items) = random_bank_items(n_items, (1.2, 2.6), (-3.0, 3.0), seed);
        let item_vec: Vec<IrtItem> = ids.iter().map(|id| items[id]).collect();
        let anchors = select_anchors(&ids, &item_vec, n_anchors);
        let bank = ItemBank::new(items, anchors).unwrap();
        let bits = sample_responses(theta, &ids, bank.items(), StreamKey::new(seed).with_str("full"));
        (bank, ids, bits)
    }

    /// World for ability-combination tests: same item population, but the
    /// anchors are a seeded random subset so endpoint and merged models
    /// are measured equally well (flat information over the θ range).
    fn random_anchor_world(n_items: usize, n_anchors: usize, seed: u64) -> (ItemBank, Vec<String>) {
        let (ids, items) = random_bank_items(n_items, (1.2, 2.6), (-3.0, 3.0), seed);
        let picked = sample_indices(n_items, n_anchors, StreamKey::new(seed).with_str("anchors"));
        let anchors: Vec<String> = picked.into_iter().map(|i| ids[i].clone()).collect();
        (ItemBank::new(items, anchors).unwrap(), ids)
    }

    fn anchor_record(bank: &ItemBank, ids: &[String], bits: &[bool]) -> EvalRecord {
        let index: BTreeMap<&str, usize> =
            ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        let anchor_bits: Vec<bool> =
            bank.anchor_ids().iter().map(|id| bits[index[id.as_str()]]).collect();
        record_from_bits(&bank.anchor_ids().to_vec(), &anchor_bits)
    }

    #[test]
    fn pirt_with_full_bank_anchors_is_exact() {
        let (ids, items) = random_bank_items(40, (0.5, 2.0), (-2.0, 2.0), 7);
        let bank = ItemBank::new(items, ids.clone()).unwrap();
        let bits = sample_responses(0.3, &ids, bank.items(), StreamKey::new(9).with_str("full"));
        let obs = record_from_bits(&ids, &bits);
        let estimate = estimate_pirt(&obs, &bank).unwrap();
        assert_eq!(estimate, obs.accuracy);
    }

    #[test]
    fn pirt_bounds_with_all_correct_anchors() {
        let (bank, _, _) = pirt_world(100, 10, 0.0, 3);
        let obs = record_from_bits(&bank.anchor_ids().to_vec(), &vec![true; 10]);
        let estimate = estimate_pirt(&obs, &bank).unwrap();
        assert!(estimate >= 10.0 / 100.0);
        assert!(estimate <= 1.0);
    }

    #[test]
    fn pirt_tracks_true_accuracy_in_synthetic_world() {
        let (bank, ids, bits) = pirt_world(500, 50, 0.5, 11);
        let full_accuracy = bits.iter().filter(|&&y| y).count() as f64 / bits.len() as f64;
        let obs = anchor_record(&bank, &ids, &bits);
        let estimate = estimate_pirt(&obs, &bank).unwrap();
        assert!(
            (estimate - full_accuracy).abs() <= 0.05,
            "estimate {estimate} vs full {full_accuracy}"
        );
    }

    #[test]
    fn pirt_rejects_non_anchor_observations() {
        let (bank, ids, bits) = pirt_world(50, 10, 0.0, 5);
        let obs = record_from_bits(&ids, &bits); // full set, not anchors
        assert!(matches!(estimate_pirt(&obs, &bank), Err(IrtError::AnchorMismatch(_))));
    }

    #[test]
    fn pirt_rejects_empty_anchors() {
        let (ids, items) = random_bank_items(20, (0.5, 2.0), (-2.0, 2.0), 1);
        let bank = ItemBank::new(items, vec![]).unwrap();
        let obs = record_from_bits(&ids[..1].to_vec(), &[true]);
        assert!(matches!(estimate_pirt(&obs, &bank), Err(IrtError::EmptyAnchors)));
    }

    #[test]
    fn gpirt_blends_between_mean_and_pirt() {
        let (bank, ids, bits) = pirt_world(200, 20, 0.4, 17);
        let obs = anchor_record(&bank, &ids, &bits);
        let pirt = estimate_pirt(&obs, &bank).unwrap();
        assert_eq!(estimate_gpirt(&obs, &bank, 0.0).unwrap(), pirt);
        assert_eq!(estimate_gpirt(&obs, &bank, 1.0).unwrap(), obs.accuracy);
        let mid = estimate_gpirt(&obs, &bank, 0.5).unwrap();
        assert!((mid - 0.5 * (pirt + obs.accuracy)).abs() < 1e-12);
        assert!(matches!(estimate_gpirt(&obs, &bank, 1.5), Err(IrtError::BadLambda(_))));
    }

    #[test]
    fn gpirt_arithmetic_example() {
        // anchor mean 0.8, P-IRT 0.7, λ=0.5 → 0.75 (checked through the
        // formula directly).
        assert!((0.5 * 0.8 + 0.5 * 0.7 - 0.75f64).abs() < 1e-15);
    }

    #[test]
    fn combine_thetas_degenerate_and_symmetry() {
        assert_eq!(combine_thetas(&[1.3], &[1.0]).unwrap(), 1.3);
        assert_eq!(combine_thetas(&[-1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!((combine_thetas(&[-0.5, 1.5], &[0.3, 0.7]).unwrap() - 0.9).abs() < 1e-12);
    }

    #[test]
    fn combine_thetas_validates_inputs() {
        assert!(matches!(
            combine_thetas(&[1.0], &[1.0, 2.0]),
            Err(IrtError::LengthMismatch { .. })
        ));
        assert!(matches!(combine_thetas(&[1.0], &[-0.1]), Err(IrtError::BadWeights(_))));
        assert!(matches!(combine_thetas(&[1.0, 2.0], &[0.0, 0.0]), Err(IrtError::BadWeights(_))));
    }

    #[test]
    fn mpirt_single_endpoint_equals_theta_extrapolation() {
        let (bank, ids, bits) = pirt_world(100, 10, 0.2, 23);
        let obs = anchor_record(&bank, &ids, &bits);
        let via_mpirt = estimate_mpirt(&[0.2], &[1.0], &obs, &bank).unwrap();
        let correct_sum = obs.correct.iter().filter(|&&y| y).count() as f64;
        let direct = extrapolate(0.2, correct_sum, &bank);
        assert_eq!(via_mpirt, direct);
    }

    #[test]
    fn mpirt_tracks_self_consistent_world() {
        // World built to satisfy MP-IRT's own assumption: the merged
        // model's true ability is exactly the weighted endpoint
        // combination.
        let seed = 13u64;
        let (bank, ids, _) = pirt_world(500, 50, 0.0, seed);
        // Endpoints inside the anchor-informative range so their own
        // ability fits are well conditioned.
        let (theta_a, theta_b) = (-0.5, 0.5);
        let weights = [0.3, 0.7];
        let theta_m = combine_thetas(&[theta_a, theta_b], &weights).unwrap();
        let merged_bits =
            sample_responses(theta_m, &ids, bank.items(), StreamKey::new(seed).with_str("merged"));
        let full_accuracy =
            merged_bits.iter().filter(|&&y| y).count() as f64 / merged_bits.len() as f64;

        // Endpoint abilities fitted from their own anchor responses.
        let mut endpoint_thetas = Vec::new();
        for (i, theta) in [theta_a, theta_b].iter().enumerate() {
            let bits = sample_responses(
                *theta,
                &ids,
                bank.items(),
                StreamKey::new(seed).with_str("endpoint").with(i as u64),
            );
            let obs = anchor_record(&bank, &ids, &bits);
            endpoint_thetas
                .push(fit_theta(&responses_from_record(&obs), &bank).unwrap().theta);
        }

        let obs = anchor_record(&bank, &ids, &merged_bits);
        let estimate = estimate_mpirt(&endpoint_thetas, &weights, &obs, &bank).unwrap();
        assert!(
            (estimate - full_accuracy).abs() <= 0.05,
            "estimate {estimate} vs full {full_accuracy}"
        );
    }

    #[test]
    fn gmpirt_blend_cases() {
        assert_eq!(estimate_gmpirt(0.6, 0.8, 1.0).unwrap(), 0.6);
        assert_eq!(estimate_gmpirt(0.6, 0.8, 0.0).unwrap(), 0.8);
        assert!((estimate_gmpirt(0.6, 0.8, 0.5).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(estimate_gmpirt(0.6, 0.8, 1.2), Err(IrtError::BadAlpha(_))));
        assert!(matches!(estimate_gmpirt(1.6, 0.8, 0.5), Err(IrtError::BadInput { .. })));
    }

    #[test]
    fn gmpirt_alpha_fit_recovers_planted_weight() {
        // y constructed as exactly 0.3·m + 0.7·o.
        let history: Vec<(f64, f64, f64)> = (0..8)
            .map(|i| {
                let m = 0.1 + 0.1 * i as f64 / 8.0 + 0.05 * (i % 3) as f64;
                let o = 0.8 - 0.07 * i as f64 / 8.0 - 0.04 * (i % 2) as f64;
                (m, o, 0.3 * m + 0.7 * o)
            })
            .collect();
        assert!((fit_gmpirt_alpha(&history) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn gmpirt_alpha_fit_fallbacks_and_clipping() {
        // Fewer than 5 triples → neutral 0.5.
        assert_eq!(fit_gmpirt_alpha(&[(0.5, 0.6, 0.55); 4]), 0.5);
        // Degenerate design (m == o) → 0.5.
        assert_eq!(fit_gmpirt_alpha(&[(0.5, 0.5, 0.7); 6]), 0.5);
        // Planted α = 2 (y = 2m − o) → clipped to 1.
        let wild: Vec<(f64, f64, f64)> =
            (0..6).map(|i| {
                let m = 0.3 + 0.05 * i as f64;
                let o = 0.6 - 0.03 * i as f64;
                (m, o, 2.0 * m - o)
            }).collect();
        assert_eq!(fit_gmpirt_alpha(&wild), 1.0);
    }

    #[test]
    fn random_estimator_basics() {
        let bits = vec![true, false, true, true, false, false, true, false];
        let full = estimate_random(&bits, bits.len(), 5).unwrap();
        assert_eq!(full, 0.5);
        let one = estimate_random(&bits, 1, 5).unwrap();
        assert!(one == 0.0 || one == 1.0);
        assert_eq!(estimate_random(&bits, 3, 9).unwrap(), estimate_random(&bits, 3, 9).unwrap());
        assert!(matches!(estimate_random(&bits, 9, 0), Err(IrtError::BadSample { .. })));
    }

    #[test]
    fn random_estimator_delegates_to_subsample() {
        use crate::eval::{subsample, EvalItem, SubsampleSpec, SubsampleStrategy};
        // The estimator must equal the accuracy `evaluate` would report on
        // the random subsample drawn with the same seed.
        let items: Vec<EvalItem> = (0..40)
            .map(|i| EvalItem {
                id: format!("q{i}"),
                prompt: String::new(),
                gold: "A".into(),
                language: None,
                features: None,
            })
            .collect();
        let bits: Vec<bool> = (0..40).map(|i| i % 3 == 0).collect();
        let spec = SubsampleSpec { n: 12, seed: 77, strategy: SubsampleStrategy::Random };
        let picked = subsample(&items, &spec).unwrap();
        let manual = picked
            .iter()
            .map(|it| {
                let idx: usize = it.id[1..].parse().unwrap();
                bits[idx]
            })
            .filter(|&y| y)
            .count() as f64
            / 12.0;
        assert_eq!(estimate_random(&bits, 12, 77).unwrap(), manual);
    }

    #[test]
    fn estimator_ranking_mpirt_pirt_random() {
        // Restates the appendix table's star ratings testably: in the
        // self-consistent synthetic world, mean absolute error over 50
        // seeds orders MP-IRT ≤ P-IRT ≤ Random.
        let mut err_mp = 0.0;
        let mut err_p = 0.0;
        let mut err_r = 0.0;
        let n_seeds = 50;
        for seed in 0..n_seeds {
            let (bank, ids) = random_anchor_world(500, 50, 1000 + seed);
            let mut rng = StreamKey::new(seed).with_str("world").rng();
            // Endpoints sit where the anchors are informative; two
            // independent endpoint fits then average their noise away,
            // which is MP-IRT's structural advantage over P-IRT's single
            // fit.
            let theta_a = -0.6 + 0.4 * rng.gen::<f64>();
            let theta_b = 0.2 + 0.4 * rng.gen::<f64>();
            let w = 0.3 + 0.4 * rng.gen::<f64>();
            let weights = [w, 1.0 - w];
            let theta_m = combine_thetas(&[theta_a, theta_b], &weights).unwrap();
            let merged = sample_responses(
                theta_m,
                &ids,
                bank.items(),
                StreamKey::new(seed).with_str("merged"),
            );
            let truth = merged.iter().filter(|&&y| y).count() as f64 / merged.len() as f64;

            let mut endpoint_thetas = Vec::new();
            for (i, theta) in [theta_a, theta_b].iter().enumerate() {
                let bits = sample_responses(
                    *theta,
                    &ids,
                    bank.items(),
                    StreamKey::new(seed).with_str("endpoint").with(i as u64),
                );
                let obs = anchor_record(&bank, &ids, &bits);
                endpoint_thetas
                    .push(fit_theta(&responses_from_record(&obs), &bank).unwrap().theta);
            }
            let obs = anchor_record(&bank, &ids, &merged);
            err_mp += (estimate_mpirt(&endpoint_thetas, &weights, &obs, &bank).unwrap() - truth).abs();
            err_p += (estimate_pirt(&obs, &bank).unwrap() - truth).abs();
            err_r += (estimate_random(&merged, 50, seed).unwrap() - truth).abs();
        }
        let (mae_mp, mae_p, mae_r) =
            (err_mp / n_seeds as f64, err_p / n_seeds as f64, err_r / n_seeds as f64);
        assert!(mae_mp <= mae_p, "MP-IRT {mae_mp} vs P-IRT {mae_p}");
        assert!(mae_p <= mae_r, "P-IRT {mae_p} vs Random {mae_r}");
    }

    #[test]
    fn calibration_recovers_difficulties() {
        // Generate-then-recover: 50 models × 200 items with known
        // parameters; the standardized fit should land difficulties within
        // a median 0.5 of truth.
        let seed = 99u64;
        let (ids, items) = random_bank_items(200, (0.8, 2.2), (-2.0, 2.0), seed);
        let true_b: Vec<f64> = ids.iter().map(|id| items[id].b).collect();
        let thetas: Vec<f64> = (0..50).map(|m| -2.0 + 4.0 * m as f64 / 49.0).collect();
        let rows: Vec<Vec<bool>> = thetas
            .iter()
            .enumerate()
            .map(|(m, theta)| {
                sample_responses(*theta, &ids, &items, StreamKey::new(seed).with("model".len() as u64).with(m as u64))
            })
            .collect();
        let matrix = ResponseMatrix::new(ids.clone(), rows).unwrap();
        let report = calibrate_item_bank(&matrix, 20).unwrap();
        let mut abs_err: Vec<f64> = ids
            .iter()
            .zip(&true_b)
            .map(|(id, b)| (report.bank.get(id).unwrap().b - b).abs())
            .collect();
        abs_err.sort_by(f64::total_cmp);
        let median = abs_err[abs_err.len() / 2];
        assert!(median <= 0.5, "median |b error| = {median}");
        // Standardization pins the ability scale.
        let mean: f64 = report.thetas.iter().sum::<f64>() / report.thetas.len() as f64;
        assert!(mean.abs() < 1e-6);
    }

    #[test]
    fn calibration_clips_constant_column_to_box_edge() {
        let seed = 31u64;
        let (ids, items) = random_bank_items(30, (0.8, 2.0), (-2.0, 2.0), seed);
        let thetas: Vec<f64> = (0..20).map(|m| -2.0 + 4.0 * m as f64 / 19.0).collect();
        let mut rows: Vec<Vec<bool>> = thetas
            .iter()
            .enumerate()
            .map(|(m, theta)| {
                sample_responses(*theta, &ids, &items, StreamKey::new(seed).with(m as u64))
            })
            .collect();
        for row in &mut rows {
            row[0] = true; // everyone aces item 0
        }
        let matrix = ResponseMatrix::new(ids.clone(), rows).unwrap();
        let report = calibrate_item_bank(&matrix, 5).unwrap();
        let b = report.bank.get(&ids[0]).unwrap().b;
        assert!(b <= THETA_MIN + 1e-2, "all-correct column fitted b = {b}");
    }

    #[test]
    fn calibration_preconditions() {
        let ids: Vec<String> = (0..12).map(|i| format!("i{i}")).collect();
        let row: Vec<bool> = (0..12).map(|i| i % 2 == 0).collect();
        let two = ResponseMatrix::new(ids.clone(), vec![row.clone(), row.clone()]).unwrap();
        assert!(matches!(calibrate_item_bank(&two, 3), Err(IrtError::TooFewModels(2))));

        let few_ids: Vec<String> = (0..5).map(|i| format!("i{i}")).collect();
        let few = ResponseMatrix::new(few_ids, vec![vec![true; 5], vec![false; 5], vec![true; 5]])
            .unwrap();
        assert!(matches!(calibrate_item_bank(&few, 2), Err(IrtError::TooFewItems(5))));

        let same = ResponseMatrix::new(ids.clone(), vec![row.clone(), row.clone(), row.clone()])
            .unwrap();
        assert!(matches!(calibrate_item_bank(&same, 3), Err(IrtError::DegenerateMatrix)));

        let mut row2 = row.clone();
        row2[0] = !row2[0];
        let ok = ResponseMatrix::new(ids, vec![row.clone(), row2, row]).unwrap();
        assert!(matches!(calibrate_item_bank(&ok, 0), Err(IrtError::BadAnchorCount { .. })));
    }

    #[test]
    fn bank_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        let (_, items) = random_bank_items(15, (0.5, 2.0), (-2.0, 2.0), 3);
        let anchors = vec!["item0003".to_string(), "item0001".to_string()];
        let bank = ItemBank::new(items, anchors).unwrap();
        save_item_bank(&path, &bank).unwrap();
        let loaded = load_item_bank(&path).unwrap();
        assert_eq!(loaded, bank);
        // Anchor order is part of the artifact.
        assert_eq!(loaded.anchor_ids(), ["item0003", "item0001"]);
    }

    #[test]
    fn bank_file_validation() {
        let dir = tempfile::tempdir().unwrap();
        let unknown_anchor = dir.path().join("bad_anchor.json");
        fs::write(
            &unknown_anchor,
            r#"{"items": {"x": {"a": 1.0, "b": 0.0}}, "anchors": ["y"]}"#,
        )
        .unwrap();
        assert!(matches!(load_item_bank(&unknown_anchor), Err(IrtError::UnknownAnchor(_))));

        let bad_a = dir.path().join("bad_a.json");
        fs::write(&bad_a, r#"{"items": {"x": {"a": 11.0, "b": 0.0}}, "anchors": []}"#).unwrap();
        assert!(matches!(load_item_bank(&bad_a), Err(IrtError::BadItem { .. })));
    }

    #[test]
    fn select_anchors_prefers_informative_items() {
        // High-a, b≈0 items carry the most Fisher information at θ=0.
        let ids: Vec<String> = (0..4).map(|i| format!("i{i}")).collect();
        let items = vec![
            IrtItem { a: 0.5, b: 0.0 },
            IrtItem { a: 2.5, b: 0.1 },
            IrtItem { a: 2.5, b: 4.0 }, // steep but far away → low info at 0
            IrtItem { a: 1.5, b: -0.2 },
        ];
        assert_eq!(select_anchors(&ids, &items, 2), vec!["i1".to_string(), "i3".to_string()]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn prob_monotone_in_theta(
                a in 0.01f64..10.0,
                b in -6.0f64..6.0,
                t1 in -6.0f64..6.0,
                t2 in -6.0f64..6.0,
            ) {
                let item = IrtItem { a, b };
                let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
                prop_assert!(irt_prob(lo, &item) <= irt_prob(hi, &item));
                prop_assert!((0.0..=1.0).contains(&irt_prob(lo, &item)));
                // Strictly interior away from f64 saturation (|z| ≥ ~36
                // rounds to exactly 0 or 1).
                if a * (hi - b).abs() < 30.0 && a * (lo - b).abs() < 30.0 {
                    prop_assert!(irt_prob(lo, &item) > 0.0 && irt_prob(hi, &item) < 1.0);
                }
            }

            #[test]
            fn estimates_stay_in_unit_interval(seed in 0u64..500, correct in proptest::collection::vec(any::<bool>(), 10)) {
                let (bank, ids, _) = {
                    let (ids, items) = random_bank_items(30, (0.5, 2.5), (-2.0, 2.0), seed);
                    let item_vec: Vec<IrtItem> = ids.iter().map(|id| items[id]).collect();
                    let anchors = select_anchors(&ids, &item_vec, 10);
                    (ItemBank::new(items, anchors).unwrap(), ids, ())
                };
                let _ = ids;
                let obs = record_from_bits(&bank.anchor_ids().to_vec(), &correct);
                let pirt = estimate_pirt(&obs, &bank).unwrap();
                prop_assert!((0.0..=1.0).contains(&pirt));
                let gpirt = estimate_gpirt(&obs, &bank, 0.3).unwrap();
                prop_assert!((0.0..=1.0).contains(&gpirt));
                let mpirt = estimate_mpirt(&[-1.0, 2.0], &[0.6, 0.4], &obs, &bank).unwrap();
                prop_assert!((0.0..=1.0).contains(&mpirt));
            }
        }
    }
}
