//! Merge strategies over tensor checkpoints.
//!
//! Six methods: `linear` (normalized weighted average), `slerp` (spherical
//! interpolation between two models), `task_arithmetic`
//! (base + Σ λᵢ·(θᵢ − base)), `ties` (trim / elect sign / disjoint mean
//! over task vectors), and the DARE variants `dare_ties` and `dare_linear`
//! (per-element drop-and-rescale of task vectors before combining).
//!
//! All arithmetic runs at f64 working precision regardless of storage
//! dtype; each output tensor is re-encoded in the corresponding base (or
//! first input) tensor's dtype. Every operation is a pure function of its
//! inputs and the recipe seed, so identical calls yield bitwise-identical
//! checkpoints.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{validate_compat, CompatReport, Tensor, TensorMap};
use crate::rng::StreamKey;

#[derive(Debug, Error)]
pub enum MergeError {
    #[error("checkpoints are incompatible: missing keys {missing:?}, shape mismatches {shapes:?}, dtype mismatches {dtypes:?}")]
    Incompatible {
        missing: Vec<Vec<String>>,
        shapes: Vec<String>,
        dtypes: Vec<String>,
    },
    #[error("{0}")]
    BadArgument(String),
    #[error("genotype has {got} genes but spec requires {want}")]
    GenotypeLength { got: usize, want: usize },
}

fn bad(msg: impl Into<String>) -> MergeError {
    MergeError::BadArgument(msg.into())
}

fn compat_error(report: CompatReport) -> MergeError {
    MergeError::Incompatible {
        missing: report.missing_keys,
        shapes: report
            .shape_mismatches
            .into_iter()
            .map(|(name, shapes)| format!("{name}: {shapes:?}"))
            .collect(),
        dtypes: report
            .dtype_mismatches
            .into_iter()
            .map(|(name, dtypes)| format!("{name}: {dtypes:?}"))
            .collect(),
    }
}

/// Checks structural agreement and surfaces the report as an error.
/// Shape and key-set agreement is required; dtype may differ because all
/// math happens at f64.
fn require_compat(maps: &[&TensorMap]) -> Result<(), MergeError> {
    if maps.len() < 2 {
        return Ok(());
    }
    let report = validate_compat(maps).expect("len checked above");
    if report.missing_keys.iter().any(|m| !m.is_empty()) || !report.shape_mismatches.is_empty() {
        return Err(compat_error(report));
    }
    Ok(())
}

/// One of the six supported merge strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMethod {
    Linear,
    Slerp,
    TaskArithmetic,
    Ties,
    DareLinear,
    DareTies,
}

impl MergeMethod {
    pub const ALL: [MergeMethod; 6] = [
        MergeMethod::Linear,
        MergeMethod::Slerp,
        MergeMethod::TaskArithmetic,
        MergeMethod::Ties,
        MergeMethod::DareLinear,
        MergeMethod::DareTies,
    ];

    /// Task-vector methods subtract a base model before combining.
    pub fn needs_base(self) -> bool {
        matches!(
            self,
            MergeMethod::TaskArithmetic | MergeMethod::Ties | MergeMethod::DareLinear | MergeMethod::DareTies
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            MergeMethod::Linear => "linear",
            MergeMethod::Slerp => "slerp",
            MergeMethod::TaskArithmetic => "task_arithmetic",
            MergeMethod::Ties => "ties",
            MergeMethod::DareLinear => "dare_linear",
            MergeMethod::DareTies => "dare_ties",
        }
    }
}

impl fmt::Display for MergeMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MergeMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(MergeMethod::Linear),
            "slerp" => Ok(MergeMethod::Slerp),
            "task_arithmetic" => Ok(MergeMethod::TaskArithmetic),
            "ties" => Ok(MergeMethod::Ties),
            "dare_linear" => Ok(MergeMethod::DareLinear),
            "dare_ties" => Ok(MergeMethod::DareTies),
            other => Err(format!(
                "unknown merge method {other:?} (expected one of linear, slerp, task_arithmetic, ties, dare_linear, dare_ties)"
            )),
        }
    }
}

/// Decoded phenotype: everything a merge needs besides the checkpoints
/// themselves. `weights` are λᵢ (task-vector scale) or wᵢ (averaging
/// weight) depending on the method; for slerp it is the single `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeRecipe {
    pub method: MergeMethod,
    pub weights: Vec<f64>,
    /// TIES trim fraction kept, in (0, 1].
    pub density: f64,
    /// DARE drop probability p, in [0, 1).
    pub drop_rate: f64,
    /// Root seed for DARE masks. Part of the recipe so a re-merge
    /// reproduces the checkpoint bit-exactly.
    pub seed: u64,
}

impl MergeRecipe {
    pub fn validate(&self) -> Result<(), MergeError> {
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(bad(format!("density {} outside (0, 1]", self.density)));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(bad(format!("drop_rate {} outside [0, 1)", self.drop_rate)));
        }
        if self.method == MergeMethod::Slerp {
            if self.weights.len() != 1 {
                return Err(bad(format!(
                    "slerp takes a single t parameter, got {} weights",
                    self.weights.len()
                )));
            }
            let t = self.weights[0];
            if !(0.0..=1.0).contains(&t) {
                return Err(bad(format!("slerp t {t} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Shape of the search space: how a flat genotype vector maps onto a
/// [`MergeRecipe`]. Gene order is weights first, then density (if
/// evolved), then drop_rate (if evolved).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenotypeSpec {
    pub method: MergeMethod,
    pub n_endpoints: usize,
    pub evolve_density: bool,
    pub evolve_drop_rate: bool,
    /// Per-gene [lo, hi], finite with lo < hi.
    pub bounds: Vec<(f64, f64)>,
    /// Used when the corresponding gene is not evolved.
    pub default_density: f64,
    pub default_drop_rate: f64,
}

impl GenotypeSpec {
    /// Spec with uniform bounds on every gene and the conventional 0.5
    /// defaults for non-evolved hyperparameters.
    pub fn new(method: MergeMethod, n_endpoints: usize, lo: f64, hi: f64) -> Self {
        let mut spec = GenotypeSpec {
            method,
            n_endpoints,
            evolve_density: false,
            evolve_drop_rate: false,
            bounds: Vec::new(),
            default_density: 0.5,
            default_drop_rate: 0.5,
        };
        spec.bounds = vec![(lo, hi); spec.gene_count()];
        spec
    }

    pub fn weight_count(&self) -> usize {
        if self.method == MergeMethod::Slerp {
            1
        } else {
            self.n_endpoints
        }
    }

    pub fn gene_count(&self) -> usize {
        self.weight_count() + usize::from(self.evolve_density) + usize::from(self.evolve_drop_rate)
    }

    pub fn validate(&self) -> Result<(), MergeError> {
        if self.method == MergeMethod::Slerp && self.n_endpoints != 2 {
            return Err(bad(format!(
                "slerp requires exactly 2 models, got {}",
                self.n_endpoints
            )));
        }
        if self.n_endpoints == 0 {
            return Err(bad("at least one endpoint is required"));
        }
        if self.bounds.len() != self.gene_count() {
            return Err(bad(format!(
                "{} bounds for {} genes",
                self.bounds.len(),
                self.gene_count()
            )));
        }
        for (i, &(lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(bad(format!("gene {i} bounds [{lo}, {hi}] invalid (need finite lo < hi)")));
            }
        }
        Ok(())
    }
}

/// Maps a flat genotype onto a recipe: weights, then density if evolved,
/// then drop_rate if evolved. Non-evolved hyperparameters come from the
/// spec defaults; `seed` is stamped in by the caller (the searcher uses
/// the run seed so re-merges are reproducible).
pub fn decode_genotype(g: &[f64], spec: &GenotypeSpec, seed: u64) -> Result<MergeRecipe, MergeError> {
    spec.validate()?;
    if g.len() != spec.gene_count() {
        return Err(MergeError::GenotypeLength {
            got: g.len(),
            want: spec.gene_count(),
        });
    }
    let w = spec.weight_count();
    let mut cursor = w;
    let density = if spec.evolve_density {
        cursor += 1;
        g[cursor - 1]
    } else {
        spec.default_density
    };
    let drop_rate = if spec.evolve_drop_rate {
        cursor += 1;
        g[cursor - 1]
    } else {
        spec.default_drop_rate
    };
    debug_assert_eq!(cursor, g.len());
    let recipe = MergeRecipe {
        method: spec.method,
        weights: g[..w].to_vec(),
        density,
        drop_rate,
        seed,
    };
    recipe.validate()?;
    Ok(recipe)
}

/// Dispatches a recipe to the matching merge function. `base` is required
/// for task-vector methods and rejected otherwise.
pub fn apply_recipe(
    recipe: &MergeRecipe,
    base: Option<&TensorMap>,
    endpoints: &[&TensorMap],
) -> Result<TensorMap, MergeError> {
    recipe.validate()?;
    if recipe.method.needs_base() && base.is_none() {
        return Err(bad(format!("method {} requires a base model", recipe.method)));
    }
    if !recipe.method.needs_base() && base.is_some() {
        return Err(bad(format!("method {} takes no base model", recipe.method)));
    }
    match recipe.method {
        MergeMethod::Linear => lerp_merge(endpoints, &recipe.weights),
        MergeMethod::Slerp => {
            if endpoints.len() != 2 {
                return Err(bad(format!("slerp requires exactly 2 models, got {}", endpoints.len())));
            }
            slerp_merge(endpoints[0], endpoints[1], recipe.weights[0])
        }
        MergeMethod::TaskArithmetic => task_arithmetic_merge(base.unwrap(), endpoints, &recipe.weights),
        MergeMethod::Ties => ties_merge(base.unwrap(), endpoints, &recipe.weights, recipe.density, TiesPreprocess::None),
        MergeMethod::DareTies => ties_merge(
            base.unwrap(),
            endpoints,
            &recipe.weights,
            recipe.density,
            TiesPreprocess::Dare {
                drop_rate: recipe.drop_rate,
                seed: recipe.seed,
            },
        ),
        MergeMethod::DareLinear => dare_linear_merge(
            base.unwrap(),
            endpoints,
            &recipe.weights,
            recipe.drop_rate,
            recipe.seed,
        ),
    }
}

/// Normalized weighted average: per tensor, Σ wᵢ·θᵢ / Σ wᵢ.
pub fn lerp_merge(maps: &[&TensorMap], weights: &[f64]) -> Result<TensorMap, MergeError> {
    if maps.is_empty() {
        return Err(bad("linear merge needs at least one model"));
    }
    if maps.len() != weights.len() {
        return Err(bad(format!("{} weights for {} models", weights.len(), maps.len())));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(bad(format!("weights must be finite and >= 0, got {weights:?}")));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(bad("weights sum to zero; at least one must be positive"));
    }
    require_compat(maps)?;

    let mut out = TensorMap::new();
    for (name, first) in maps[0].iter() {
        let mut acc = vec![0.0f64; first.len()];
        for (map, &w) in maps.iter().zip(weights) {
            let values = map.get(name).expect("compat checked").to_f64_vec();
            for (a, v) in acc.iter_mut().zip(&values) {
                *a += w * v;
            }
        }
        for a in &mut acc {
            *a /= total;
        }
        let tensor = Tensor::from_f64(first.dtype(), first.shape().to_vec(), &acc).expect("shape preserved");
        out.insert(name, tensor).expect("names from a valid map");
    }
    Ok(out)
}

/// Spherical interpolation. Each tensor is flattened, given its own angle
/// Ω = arccos(clamp(⟨â, b̂⟩, −1, 1)), and combined as
/// sin((1−t)Ω)/sinΩ · a + sin(tΩ)/sinΩ · b. Nearly collinear (or
/// zero-norm) tensors fall back to linear interpolation.
pub fn slerp_merge(a: &TensorMap, b: &TensorMap, t: f64) -> Result<TensorMap, MergeError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(bad(format!("slerp t {t} outside [0, 1]")));
    }
    require_compat(&[a, b])?;

    let mut out = TensorMap::new();
    for (name, ta) in a.iter() {
        let va = ta.to_f64_vec();
        let vb = b.get(name).expect("compat checked").to_f64_vec();
        let norm_a = va.iter().map(|x| x * x).sum::<f64>().sqrt();
        let norm_b = vb.iter().map(|x| x * x).sum::<f64>().sqrt();

        let (ca, cb) = if norm_a == 0.0 || norm_b == 0.0 {
            // Zero-norm tensors have no direction; interpolate linearly.
            (1.0 - t, t)
        } else {
            let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum::<f64>() / (norm_a * norm_b);
            let omega = dot.clamp(-1.0, 1.0).acos();
            let sin_omega = omega.sin();
            if sin_omega < 1e-8 {
                (1.0 - t, t)
            } else {
                (((1.0 - t) * omega).sin() / sin_omega, (t * omega).sin() / sin_omega)
            }
        };

        let merged: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| ca * x + cb * y).collect();
        let tensor = Tensor::from_f64(ta.dtype(), ta.shape().to_vec(), &merged).expect("shape preserved");
        out.insert(name, tensor).expect("names from a valid map");
    }
    Ok(out)
}

/// Task arithmetic: θ = θ_base + Σ λᵢ·(θᵢ − θ_base), per tensor,
/// elementwise. Negative λ (task negation) is allowed.
pub fn task_arithmetic_merge(
    base: &TensorMap,
    endpoints: &[&TensorMap],
    lambdas: &[f64],
) -> Result<TensorMap, MergeError> {
    if endpoints.is_empty() {
        return Err(bad("task_arithmetic needs at least one endpoint"));
    }
    if endpoints.len() != lambdas.len() {
        return Err(bad(format!(
            "{} lambdas for {} endpoints",
            lambdas.len(),
            endpoints.len()
        )));
    }
    if lambdas.iter().any(|l| !l.is_finite()) {
        return Err(bad(format!("lambdas must be finite, got {lambdas:?}")));
    }
    let mut all: Vec<&TensorMap> = vec![base];
    all.extend_from_slice(endpoints);
    require_compat(&all)?;

    let mut out = TensorMap::new();
    for (name, base_tensor) in base.iter() {
        let mut acc = base_tensor.to_f64_vec();
        for (endpoint, &lambda) in endpoints.iter().zip(lambdas) {
            let values = endpoint.get(name).expect("compat checked").to_f64_vec();
            let base_values = base_tensor.to_f64_vec();
            for ((a, v), b) in acc.iter_mut().zip(&values).zip(&base_values) {
                *a += lambda * (v - b);
            }
        }
        let tensor =
            Tensor::from_f64(base_tensor.dtype(), base_tensor.shape().to_vec(), &acc).expect("shape preserved");
        out.insert(name, tensor).expect("names from a valid map");
    }
    Ok(out)
}

/// Keep probability for one element of one DARE stream. The draw is
/// addressed purely by (seed, stream_id, tensor_name, element_index), so
/// the same recipe always produces the same mask.
fn dare_keep(key: StreamKey, index: u64, drop_rate: f64) -> bool {
    key.unit_at(index) >= drop_rate
}

fn dare_stream(seed: u64, stream_id: &str, tensor_name: &str) -> StreamKey {
    StreamKey::new(seed).with_str("dare").with_str(stream_id).with_str(tensor_name)
}

/// DARE drop-and-rescale on a task vector: each element survives with
/// probability 1−p and survivors are scaled by 1/(1−p), leaving the
/// expectation unchanged.
pub fn dare_sparsify(
    task_vector: &TensorMap,
    drop_rate: f64,
    seed: u64,
    stream_id: &str,
) -> Result<TensorMap, MergeError> {
    if !(0.0..1.0).contains(&drop_rate) {
        return Err(bad(format!("drop_rate {drop_rate} outside [0, 1)")));
    }
    let mut out = TensorMap::new();
    for (name, tensor) in task_vector.iter() {
        let key = dare_stream(seed, stream_id, name);
        let scale = 1.0 / (1.0 - drop_rate);
        let values: Vec<f64> = tensor
            .to_f64_vec()
            .into_iter()
            .enumerate()
            .map(|(i, v)| if dare_keep(key, i as u64, drop_rate) { v * scale } else { 0.0 })
            .collect();
        let sparsified =
            Tensor::from_f64(tensor.dtype(), tensor.shape().to_vec(), &values).expect("shape preserved");
        out.insert(name, sparsified).expect("names from a valid map");
    }
    Ok(out)
}

/// How task vectors are preprocessed before TIES combination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TiesPreprocess {
    None,
    Dare { drop_rate: f64, seed: u64 },
}

/// TIES: per tensor, (1) τᵢ = θᵢ − base with optional DARE, (2) trim each
/// τᵢ to its ⌈density·n⌉ largest-magnitude elements (threshold ties keep
/// the lower flat index), (3) elect a sign per element from the weighted
/// sum (exact zero elects +), (4) weighted mean over the endpoints that
/// agree with the elected sign, (5) output = base + merged τ.
pub fn ties_merge(
    base: &TensorMap,
    endpoints: &[&TensorMap],
    weights: &[f64],
    density: f64,
    preprocess: TiesPreprocess,
) -> Result<TensorMap, MergeError> {
    check_task_vector_args(endpoints, weights)?;
    if !(density > 0.0 && density <= 1.0) {
        return Err(bad(format!("density {density} outside (0, 1]")));
    }
    if let TiesPreprocess::Dare { drop_rate, .. } = preprocess {
        if !(0.0..1.0).contains(&drop_rate) {
            return Err(bad(format!("drop_rate {drop_rate} outside [0, 1)")));
        }
    }
    let mut all: Vec<&TensorMap> = vec![base];
    all.extend_from_slice(endpoints);
    require_compat(&all)?;

    let mut out = TensorMap::new();
    for (name, base_tensor) in base.iter() {
        let base_values = base_tensor.to_f64_vec();
        let taus: Vec<Vec<f64>> = endpoints
            .iter()
            .enumerate()
            .map(|(i, endpoint)| {
                let mut tau: Vec<f64> = endpoint
                    .get(name)
                    .expect("compat checked")
                    .to_f64_vec()
                    .iter()
                    .zip(&base_values)
                    .map(|(v, b)| v - b)
                    .collect();
                if let TiesPreprocess::Dare { drop_rate, seed } = preprocess {
                    apply_dare_in_place(&mut tau, drop_rate, seed, &format!("endpoint:{i}"), name);
                }
                trim_to_density(&mut tau, density);
                tau
            })
            .collect();

        let mut merged = base_values.clone();
        for p in 0..merged.len() {
            // Elect: sign of the weighted sum; exact zero elects +1.
            let weighted_sum: f64 = taus.iter().zip(weights).map(|(tau, &w)| w * tau[p]).sum();
            let elected = if weighted_sum >= 0.0 { 1.0 } else { -1.0 };
            // Disjoint mean over the endpoints whose sign agrees.
            let mut num = 0.0;
            let mut den = 0.0;
            for (tau, &w) in taus.iter().zip(weights) {
                let sign = if tau[p] > 0.0 {
                    1.0
                } else if tau[p] < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                if sign == elected {
                    num += w * tau[p];
                    den += w;
                }
            }
            if den > 0.0 {
                merged[p] += num / den;
            }
        }
        let tensor =
            Tensor::from_f64(base_tensor.dtype(), base_tensor.shape().to_vec(), &merged).expect("shape preserved");
        out.insert(name, tensor).expect("names from a valid map");
    }
    Ok(out)
}

/// DARE-linear: sparsify each task vector, then combine with a normalized
/// weighted sum (no sign election): output = base + Σ wᵢ·τ̂ᵢ / Σ wᵢ.
pub fn dare_linear_merge(
    base: &TensorMap,
    endpoints: &[&TensorMap],
    weights: &[f64],
    drop_rate: f64,
    seed: u64,
) -> Result<TensorMap, MergeError> {
    check_task_vector_args(endpoints, weights)?;
    if !(0.0..1.0).contains(&drop_rate) {
        return Err(bad(format!("drop_rate {drop_rate} outside [0, 1)")));
    }
    let mut all: Vec<&TensorMap> = vec![base];
    all.extend_from_slice(endpoints);
    require_compat(&all)?;
    let total: f64 = weights.iter().sum();

    let mut out = TensorMap::new();
    for (name, base_tensor) in base.iter() {
        let base_values = base_tensor.to_f64_vec();
        let mut merged = base_values.clone();
        for (i, (endpoint, &w)) in endpoints.iter().zip(weights).enumerate() {
            let mut tau: Vec<f64> = endpoint
                .get(name)
                .expect("compat checked")
                .to_f64_vec()
                .iter()
                .zip(&base_values)
                .map(|(v, b)| v - b)
                .collect();
            apply_dare_in_place(&mut tau, drop_rate, seed, &format!("endpoint:{i}"), name);
            for (m, t) in merged.iter_mut().zip(&tau) {
                *m += w * t / total;
            }
        }
        let tensor =
            Tensor::from_f64(base_tensor.dtype(), base_tensor.shape().to_vec(), &merged).expect("shape preserved");
        out.insert(name, tensor).expect("names from a valid map");
    }
    Ok(out)
}

fn check_task_vector_args(endpoints: &[&TensorMap], weights: &[f64]) -> Result<(), MergeError> {
    if endpoints.is_empty() {
        return Err(bad("task-vector merge needs at least one endpoint"));
    }
    if endpoints.len() != weights.len() {
        return Err(bad(format!(
            "{} weights for {} endpoints",
            weights.len(),
            endpoints.len()
        )));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(bad(format!("weights must be finite and >= 0, got {weights:?}")));
    }
    if weights.iter().sum::<f64>() <= 0.0 {
        return Err(bad("weights sum to zero; at least one must be positive"));
    }
    Ok(())
}

fn apply_dare_in_place(tau: &mut [f64], drop_rate: f64, seed: u64, stream_id: &str, tensor_name: &str) {
    let key = dare_stream(seed, stream_id, tensor_name);
    let scale = 1.0 / (1.0 - drop_rate);
    for (i, v) in tau.iter_mut().enumerate() {
        if dare_keep(key, i as u64, drop_rate) {
            *v *= scale;
        } else {
            *v = 0.0;
        }
    }
}

/// Zero everything but the ⌈density·n⌉ largest-magnitude elements.
/// Magnitude ties at the threshold keep the lower flat index.
fn trim_to_density(tau: &mut [f64], density: f64) {
    let n = tau.len();
    if n == 0 {
        return;
    }
    let keep = (density * n as f64).ceil() as usize;
    if keep >= n {
        return;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        tau[j]
            .abs()
            .partial_cmp(&tau[i].abs())
            .expect("task vectors are finite")
            .then(i.cmp(&j))
    });
    for &i in &order[keep..] {
        tau[i] = 0.0;
    }
}
