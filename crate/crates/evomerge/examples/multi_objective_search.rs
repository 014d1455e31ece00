//! Multi-objective merge search over genuinely conflicting experts. Both
//! models read the SAME four features, but expert S maps feature j to
//! class j while expert P maps it to class j+1 — and the two objectives
//! grade the same questions under those two answer keys. Every parameter
//! helping one objective hurts the other, so unlike the disjoint-expert
//! world (see `end_to_end_search`) no merge wins everything: NSGA-II
//! returns a trade-off front instead of a single champion.
//!
//! Run with: `cargo run --example multi_objective_search`

use std::error::Error;
use std::path::Path;

use evomerge::checkpoint::{write_checkpoint, Dtype, Tensor, TensorMap};
use evomerge::eval::{
    write_jsonl_dataset, EvalItem, EvaluatorConfig, SubsampleSpec, SubsampleStrategy,
};
use evomerge::evo::EvoParams;
use evomerge::merge::{GenotypeSpec, MergeMethod};
use evomerge::rng::StreamKey;
use evomerge::search::{
    search, Algorithm, Direction, EstimatorSpec, MergingProblem, MergingProblemSpec, ObjectiveSpec,
};
use rand::Rng;

const CLASSES: usize = 4;
const LETTERS: [&str; 4] = ["A", "B", "C", "D"];

/// 4→4 linear model where class `perm(j)` reads feature j with gain 2.
fn expert(perm: impl Fn(usize) -> usize) -> Result<TensorMap, Box<dyn Error>> {
    let mut weights = vec![0.0; CLASSES * CLASSES];
    for j in 0..CLASSES {
        weights[perm(j) * CLASSES + j] = 2.0;
    }
    let mut map = TensorMap::new();
    map.insert(
        "layers.0.weight",
        Tensor::from_f64(Dtype::F32, vec![CLASSES, CLASSES], &weights).map_err(|e| e.to_string())?,
    )?;
    map.insert(
        "layers.0.bias",
        Tensor::from_f64(Dtype::F32, vec![CLASSES], &[0.0; CLASSES]).map_err(|e| e.to_string())?,
    )?;
    Ok(map)
}

/// The shared questions: noisy one-hot features. `gold_shift` selects the
/// answer key — 0 grades feature j as class j, 1 as class j+1.
fn items(gold_shift: usize, n_per_class: usize) -> Vec<EvalItem> {
    let mut rng = StreamKey::new(17).with_str("contested-items").rng();
    (0..n_per_class * CLASSES)
        .map(|index| {
            let class = index % CLASSES;
            let mut features = vec![0.0; CLASSES];
            features[class] = 1.0;
            for f in features.iter_mut() {
                *f += 0.3 * (rng.gen::<f64>() - 0.5);
            }
            EvalItem {
                id: format!("q{index:03}"),
                prompt: format!("question {index}"),
                gold: LETTERS[(class + gold_shift) % CLASSES].to_string(),
                language: None,
                features: Some(features),
            }
        })
        .collect()
}

fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let write = |name: &str, map: &TensorMap| -> Result<std::path::PathBuf, Box<dyn Error>> {
        let path = dir.path().join(name);
        write_checkpoint(map, &path)?;
        Ok(path)
    };
    let straight = write("expert_s.safetensors", &expert(|j| j)?)?;
    let shifted = write("expert_p.safetensors", &expert(|j| (j + 1) % CLASSES)?)?;

    let key_s = dir.path().join("key_s.jsonl");
    let key_p = dir.path().join("key_p.jsonl");
    write_jsonl_dataset(&key_s, &items(0, 60))?;
    write_jsonl_dataset(&key_p, &items(1, 60))?;

    let objective = |name: &str, dataset: &Path| ObjectiveSpec {
        name: name.to_string(),
        dataset: dataset.to_path_buf(),
        subsample: Some(SubsampleSpec { n: 80, seed: 17, strategy: SubsampleStrategy::Random }),
        evaluator: EvaluatorConfig::ToyMlp,
        estimator: EstimatorSpec::Full,
        direction: Direction::Maximize,
    };
    let spec = MergingProblemSpec {
        // Linear merge normalizes the two weights, so the genotype picks
        // each expert's share of the contested parameters.
        genotype_spec: GenotypeSpec::new(MergeMethod::Linear, 2, 0.05, 1.0),
        base: None,
        endpoints: vec![straight, shifted],
        objectives: vec![objective("key_s", &key_s), objective("key_p", &key_p)],
        work_dir: dir.path().join("runs"),
        csv_log: None,
        jsonl_log: None,
        keep_best: 3,
        seed: 17,
    };
    let mut problem = MergingProblem::new(spec)?;

    let params = EvoParams { pop_size: 20, generations: 10, seed: 17, ..EvoParams::default() };
    let report = search(&mut problem, Algorithm::Nsga2, &params)?;
    println!(
        "NSGA-II over {} evaluations; front has {} non-dominated merges",
        report.evaluations,
        report.best.len()
    );

    // Print one representative per distinct objective pair, best-first on
    // the first objective.
    let mut front = report.best.clone();
    front.sort_by(|x, y| {
        y.objectives[0]
            .total_cmp(&x.objectives[0])
            .then(x.objectives[1].total_cmp(&y.objectives[1]))
    });
    front.dedup_by(|x, y| x.objectives == y.objectives);
    println!("({} distinct objective points)\n", front.len());
    println!("{:>9} {:>9} {:>8} {:>8}", "share_s", "share_p", "key_s", "key_p");
    let step = (front.len() / 14).max(1);
    for (i, solution) in front.iter().enumerate() {
        if i % step != 0 && !solution.is_equal_weight_best {
            continue;
        }
        let recipe = solution.recipe.as_ref().unwrap();
        let total: f64 = recipe.weights.iter().sum();
        let mark = if solution.is_equal_weight_best { "  <- equal-weight best" } else { "" };
        println!(
            "{:>9.3} {:>9.3} {:>8.3} {:>8.3}{mark}",
            recipe.weights[0] / total,
            recipe.weights[1] / total,
            solution.objectives[0],
            solution.objectives[1]
        );
    }

    println!(
        "\nThe front tracks acc_s + acc_p = 1: each question is correct under \
         exactly one answer key, so accuracy only moves between objectives \
         (and the equal-weight sum ties across the whole front — the marker \
         is just the first of the tied maxima)."
    );
    println!("\nlogs: {}", report.csv_path.display());
    println!("      {}", report.jsonl_path.display());
    Ok(())
}
