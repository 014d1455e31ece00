//! The evolutionary engines on a plain black-box problem: minimize the
//! 5-D sphere function ‖x − 0.3‖². Any type implementing [`Problem`] can
//! be driven by the GA, differential evolution, or NSGA-II — model
//! merging is just one such problem.
//!
//! Run with: `cargo run --example evolve_sphere`

use std::error::Error;

use evomerge::evo::{run_de, run_ga, EvalContext, EvoParams, Problem, ProblemError};

/// f(x) = Σ (xᵢ − 0.3)², minimized at x = (0.3, …, 0.3).
struct Sphere {
    bounds: Vec<(f64, f64)>,
}

impl Problem for Sphere {
    fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    fn n_objectives(&self) -> usize {
        1
    }

    fn evaluate(&mut self, _ctx: &EvalContext, genotype: &[f64]) -> Result<Vec<f64>, ProblemError> {
        Ok(vec![genotype.iter().map(|x| (x - 0.3) * (x - 0.3)).sum()])
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let params = EvoParams {
        pop_size: 30,
        generations: 40,
        seed: 1,
        ..EvoParams::default()
    };

    let mut ga_problem = Sphere { bounds: vec![(-2.0, 2.0); 5] };
    let mut de_problem = Sphere { bounds: vec![(-2.0, 2.0); 5] };
    let runs = [
        ("genetic algorithm (SBX + polynomial mutation)", run_ga(&mut ga_problem, &params)?),
        ("differential evolution (rand/1/bin)", run_de(&mut de_problem, &params)?),
    ];

    for (label, result) in runs {
        println!("{label}");
        println!("  {} evaluations over {} generations", result.evaluations, params.generations);
        let (history, last) = result.history.split_at(result.history.len() - 1);
        for stats in history.iter().step_by(8).chain(last) {
            println!("  gen {:>2}: best {:.3e}  mean {:.3e}", stats.generation, stats.best[0], stats.mean[0]);
        }

        // Single-objective runs return a one-element front: the best
        // individual ever evaluated.
        let best = &result.front[0];
        println!("  best genotype: {:?}", best.genotype.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>());
        println!("  best objective: {:.3e}\n", best.objectives[0]);
    }

    println!("Both engines drive every gene toward 0.3. With these defaults the");
    println!("GA's polynomial mutation fine-tunes faster on a smooth separable");
    println!("bowl; DE's population-difference steps pay off on harder couplings.");
    Ok(())
}
