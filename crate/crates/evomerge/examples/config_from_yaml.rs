//! The YAML config layer the CLI runs on, driven as a library: parse and
//! validate a config (with path-citing errors and typo suggestions),
//! build the search problem from it, and run. The same file works with
//! `evomerge run --config`.
//!
//! Run with: `cargo run --example config_from_yaml`

use std::error::Error;
use std::fs;

use evomerge::config::parse_config;
use evomerge::fixture::write_fixture;
use evomerge::search::{search, MergingProblem};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    write_fixture(dir.path(), 2)?;

    // Model and dataset paths are resolved relative to the config file's
    // directory, so the bundle is relocatable.
    let yaml = r#"
seed: 2
models:
  base: base.safetensors
  endpoints: [expert_a.safetensors, expert_b.safetensors]
merge:
  method: dare_ties
  bounds: [0.0, 1.0]
  density: 0.7
  evolve_drop_rate: true
objectives:
  - name: combined
    dataset: combined.jsonl
    subsample: {n: 48, seed: 2}
    evaluator: {kind: toy_mlp}
algorithm:
  pop_size: 10
  generations: 4
output:
  work_dir: runs
  keep_best: 1
"#;
    let config_path = dir.path().join("evomerge.yaml");
    fs::write(&config_path, yaml)?;

    let config = parse_config(&config_path)?;
    println!("algorithm: {} (defaulted from 1 objective)", config.algorithm_name());
    let genotype_spec = config.genotype_spec();
    println!(
        "genotype: {} genes for {} ({} weights + evolved drop_rate in [{}, {}])",
        genotype_spec.gene_count(),
        genotype_spec.method,
        genotype_spec.weight_count(),
        genotype_spec.bounds.last().unwrap().0,
        genotype_spec.bounds.last().unwrap().1,
    );

    let mut problem = MergingProblem::new(config.problem_spec())?;
    let report = search(&mut problem, config.algorithm_name(), &config.evo_params())?;
    let best = report.best.iter().find(|b| b.is_equal_weight_best).unwrap();
    let recipe = best.recipe.as_ref().unwrap();
    println!(
        "\nbest after {} evaluations: accuracy {:.3} at λ = [{:.2}, {:.2}], drop_rate {:.2}",
        report.evaluations, best.objectives[0], recipe.weights[0], recipe.weights[1], recipe.drop_rate
    );

    // Malformed configs fail with the YAML path and a suggestion, not a
    // stack of serde internals.
    for broken in [
        yaml.replace("evolve_drop_rate", "evolve_drop_rte"),
        yaml.replace("dare_ties", "dare_tles"),
        yaml.replace("density: 0.7", "density: 1.7"),
    ] {
        fs::write(&config_path, &broken)?;
        if let Err(e) = parse_config(&config_path) {
            println!("\nrejected: {e}");
        }
    }
    Ok(())
}
