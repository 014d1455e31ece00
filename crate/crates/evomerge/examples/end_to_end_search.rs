//! A complete single-objective search: evolve task-arithmetic
//! coefficients λ = (λ_A, λ_B) over two disjoint experts so the merge
//! maximizes combined-task accuracy, then re-merge the winner from its
//! recipe and confirm the checkpoint reproduces bit-exactly.
//!
//! Run with: `cargo run --example end_to_end_search`

use std::error::Error;
use std::fs;

use evomerge::eval::{EvaluatorConfig, SubsampleSpec, SubsampleStrategy};
use evomerge::evo::EvoParams;
use evomerge::fixture::write_fixture;
use evomerge::merge::{GenotypeSpec, MergeMethod};
use evomerge::search::{
    search, test_best, Algorithm, Direction, EstimatorSpec, MergingProblem, MergingProblemSpec,
    ObjectiveSpec,
};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let layout = write_fixture(dir.path(), 5)?;
    println!("fixture: base + 2 experts, 400-item combined dataset");

    // Fitness is measured on a fixed 60-item subsample; the full dataset
    // is reserved for the final test_best pass. λ may go negative (task
    // negation), which gives the search a real landscape to climb.
    let spec = MergingProblemSpec {
        genotype_spec: GenotypeSpec::new(MergeMethod::TaskArithmetic, 2, -1.0, 1.0),
        base: Some(layout.base.clone()),
        endpoints: vec![layout.expert_a.clone(), layout.expert_b.clone()],
        objectives: vec![ObjectiveSpec {
            name: "combined".to_string(),
            dataset: layout.combined.clone(),
            subsample: Some(SubsampleSpec { n: 60, seed: 5, strategy: SubsampleStrategy::Random }),
            evaluator: EvaluatorConfig::ToyMlp,
            estimator: EstimatorSpec::Full,
            direction: Direction::Maximize,
        }],
        work_dir: dir.path().join("runs"),
        csv_log: None,
        jsonl_log: None,
        keep_best: 2,
        seed: 5,
    };
    let mut problem = MergingProblem::new(spec)?;
    println!("run id: {} (derived from models + objectives + seed)", problem.run_id());

    let params = EvoParams { pop_size: 12, generations: 6, seed: 5, ..EvoParams::default() };
    let report = search(&mut problem, Algorithm::Ga, &params)?;

    println!("\nGA, {} engine evaluations, {} ms:", report.evaluations, report.wall_ms);
    for stats in &report.history {
        println!("  gen {}: best {:.3}  mean {:.3}", stats.generation, stats.best[0], stats.mean[0]);
    }

    let best = report.best.iter().find(|b| b.is_equal_weight_best).unwrap();
    let recipe = best.recipe.as_ref().unwrap();
    println!("\nbest recipe: {} with λ = [{:.3}, {:.3}]", recipe.method, recipe.weights[0], recipe.weights[1]);
    println!("fitness-subset accuracy: {:.3}", best.objectives[0]);
    println!("checkpoint: {} ({})",
        best.checkpoint_hash.as_deref().map(|h| &h[..12]).unwrap_or("-"),
        best.checkpoint_path.as_ref().map(|p| p.display().to_string()).unwrap_or_default());

    // Every evaluation was logged as it happened (status ok/cached/failed,
    // genotype, per-objective scores, checkpoint hash, wall time).
    let csv = fs::read_to_string(problem.csv_path())?;
    let mut lines = csv.lines();
    println!("\nevaluation log ({} rows at {}):", csv.lines().count() - 1, problem.csv_path().display());
    println!("  {}", lines.next().unwrap());
    println!("  {}", lines.next().unwrap());
    println!("  ...");

    // test_best re-merges the winner from its recipe alone and scores it
    // on the FULL dataset; the hash must match the search-time artifact.
    let tested = test_best(&problem, &report, &[layout.combined.clone()])?;
    let solution = tested.solutions.iter().find(|s| s.is_equal_weight_best).unwrap();
    println!("\ntest_best on all 400 items:");
    println!("  subsample estimate {:.3} -> full-dataset accuracy {:.3}",
        solution.search_objectives[0], solution.test_accuracies[0]);
    println!("  re-merge reproduces checkpoint bit-exactly: {}",
        Some(solution.remerge_hash.as_str()) == solution.search_hash.as_deref());
    Ok(())
}
