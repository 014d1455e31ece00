//! Evolutionary optimizers over bounded real genotypes.
//!
//! Three algorithms: a single-objective genetic algorithm (binary
//! tournament + SBX crossover + polynomial mutation + (μ+λ) elitist
//! survival), differential evolution (rand/1/bin with greedy replacement),
//! and NSGA-II (fast non-dominated sorting with crowding-distance
//! truncation) for multi-objective runs.
//!
//! Conventions: objectives are minimized (callers negate accuracy-like
//! scores), bound violations are clipped, and every stochastic operator
//! draws from its own deterministic stream keyed by (seed, generation,
//! individual, operator), so identical `(problem, params)` runs produce
//! identical evaluation sequences on every platform. Populations are
//! evaluated strictly sequentially in individual order; selection only
//! happens after a full generation is evaluated, so evaluation order never
//! affects the outcome.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::rng::StreamKey;

/// Errors surfaced by the engine itself; evaluation failures carry the
/// offending genotype and where in the run it was reached.
#[derive(Debug, Error)]
pub enum EvoError {
    #[error("{0}")]
    BadParams(String),
    #[error("objective vectors have unequal lengths")]
    RaggedObjectives,
    #[error("genotype lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("evaluation failed at generation {generation}, individual {index} (genotype {genotype:?}): {message}")]
    EvaluationFailed {
        generation: usize,
        index: usize,
        genotype: Vec<f64>,
        message: String,
    },
    #[error("evaluation at generation {generation}, individual {index} returned NaN")]
    NanObjective { generation: usize, index: usize },
    #[error("problem returned {got} objectives, expected {want}")]
    WrongObjectiveCount { got: usize, want: usize },
}

/// A black-box optimization problem over a box-bounded real genotype.
pub trait Problem {
    /// Per-gene [lo, hi]; the gene count is `bounds().len()`.
    fn bounds(&self) -> &[(f64, f64)];

    /// Number of objective components `evaluate` returns. All are
    /// minimized.
    fn n_objectives(&self) -> usize;

    /// Fitness of one genotype. `ctx` names the (generation, individual)
    /// slot being evaluated, which orchestrators use for logging and
    /// seeding.
    fn evaluate(&mut self, ctx: &EvalContext, genotype: &[f64]) -> Result<Vec<f64>, ProblemError>;

    /// Optional fixed starting genotype for slot `index`; `None` samples
    /// uniformly within bounds. Lets callers seed known-good solutions.
    fn initial_genotype(&self, index: usize) -> Option<Vec<f64>> {
        let _ = index;
        None
    }
}

pub type ProblemError = Box<dyn std::error::Error + Send + Sync>;

/// Where an evaluation sits in the run. Generation 0 is the initial
/// population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalContext {
    pub generation: usize,
    pub index: usize,
}

/// One candidate solution. `rank`/`crowding` are populated by NSGA-II.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genotype: Vec<f64>,
    pub objectives: Vec<f64>,
    pub rank: Option<usize>,
    pub crowding: Option<f64>,
}

/// Engine hyperparameters. Defaults follow the reference setup:
/// population 25 evolved for 7 generations with SBX (η_c = 15) and
/// polynomial mutation (η_m = 20) at rate 1/n_genes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvoParams {
    pub pop_size: usize,
    pub generations: usize,
    /// SBX distribution index.
    pub eta_c: f64,
    /// Polynomial-mutation distribution index.
    pub eta_m: f64,
    /// Per-gene mutation probability; `None` means 1/n_genes.
    pub p_mut: Option<f64>,
    pub tournament_size: usize,
    /// DE differential weight F.
    pub de_f: f64,
    /// DE crossover rate CR.
    pub de_cr: f64,
    pub seed: u64,
}

impl Default for EvoParams {
    fn default() -> Self {
        EvoParams {
            pop_size: 25,
            generations: 7,
            eta_c: 15.0,
            eta_m: 20.0,
            p_mut: None,
            tournament_size: 2,
            de_f: 0.8,
            de_cr: 0.9,
            seed: 0,
        }
    }
}

impl EvoParams {
    pub fn validate(&self) -> Result<(), EvoError> {
        if self.pop_size < 4 {
            return Err(EvoError::BadParams(format!(
                "pop_size {} too small (need >= 4)",
                self.pop_size
            )));
        }
        if self.eta_c < 0.0 || self.eta_m < 0.0 {
            return Err(EvoError::BadParams("distribution indices must be >= 0".into()));
        }
        if let Some(p) = self.p_mut {
            if !(0.0..=1.0).contains(&p) {
                return Err(EvoError::BadParams(format!("p_mut {p} outside [0, 1]")));
            }
        }
        if self.tournament_size == 0 {
            return Err(EvoError::BadParams("tournament_size must be >= 1".into()));
        }
        if !self.de_f.is_finite() || self.de_f < 0.0 {
            return Err(EvoError::BadParams(format!("de_f {} invalid", self.de_f)));
        }
        if !(0.0..=1.0).contains(&self.de_cr) {
            return Err(EvoError::BadParams(format!("de_cr {} outside [0, 1]", self.de_cr)));
        }
        Ok(())
    }

    fn mutation_rate(&self, n_genes: usize) -> f64 {
        self.p_mut.unwrap_or(1.0 / n_genes.max(1) as f64)
    }
}

/// Per-generation summary: componentwise best (minimum) and mean
/// objectives over the surviving population.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Outcome of a run. For single-objective algorithms `front` holds
/// exactly the best individual; for NSGA-II it is the non-dominated set
/// over every individual evaluated during the run, so no front member is
/// dominated by anything the engine saw.
#[derive(Debug, Clone, PartialEq)]
pub struct ParetoResult {
    pub front: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    pub evaluations: usize,
}

/// a dominates b: no component worse, at least one strictly better.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Deb's fast non-dominated sort. Returns index lists per front: front k
/// holds exactly the points dominated only by points in fronts < k.
pub fn fast_nondominated_sort(objectives: &[Vec<f64>]) -> Result<Vec<Vec<usize>>, EvoError> {
    let n = objectives.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = objectives[0].len();
    if objectives.iter().any(|o| o.len() != m) {
        return Err(EvoError::RaggedObjectives);
    }

    let mut dominated_by: Vec<usize> = vec![0; n]; // how many points dominate i
    let mut dominates_list: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(&objectives[i], &objectives[j]) {
                dominates_list[i].push(j);
                dominated_by[j] += 1;
            } else if dominates(&objectives[j], &objectives[i]) {
                dominates_list[j].push(i);
                dominated_by[i] += 1;
            }
        }
    }

    let mut fronts: Vec<Vec<usize>> = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| dominated_by[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominates_list[i] {
                dominated_by[j] -= 1;
                if dominated_by[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::take(&mut current));
        current = next;
    }
    Ok(fronts)
}

/// Crowding distance within one front. Fronts of one or two points are
/// all-boundary, so every distance is +∞. Objectives whose range is zero
/// contribute nothing (no boundary bonus either); otherwise the two
/// extreme points per objective get +∞ and interior points accumulate
/// (next − prev) / (max − min).
pub fn crowding_distance(front_objectives: &[Vec<f64>]) -> Vec<f64> {
    let n = front_objectives.len();
    if n == 0 {
        return Vec::new();
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let m = front_objectives[0].len();
    let mut distance = vec![0.0f64; n];
    for obj in 0..m {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&i, &j| front_objectives[i][obj].total_cmp(&front_objectives[j][obj]));
        let lo = front_objectives[order[0]][obj];
        let hi = front_objectives[order[n - 1]][obj];
        if hi == lo {
            continue;
        }
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        for w in 1..n - 1 {
            let prev = front_objectives[order[w - 1]][obj];
            let next = front_objectives[order[w + 1]][obj];
            // Infinite objectives (failed evaluations score +inf) would
            // turn this into inf/inf = NaN; skip their contribution.
            let d = (next - prev) / (hi - lo);
            if d.is_finite() {
                distance[order[w]] += d;
            }
        }
    }
    distance
}

fn clip(genotype: &mut [f64], bounds: &[(f64, f64)]) {
    for (g, &(lo, hi)) in genotype.iter_mut().zip(bounds) {
        *g = g.clamp(lo, hi);
    }
}

/// Simulated binary crossover. Per gene, with probability 0.5 the pair is
/// recombined through the SBX spread factor β; otherwise both children
/// copy the parent genes. Children are clipped to bounds.
pub fn sbx_crossover(
    p1: &[f64],
    p2: &[f64],
    eta_c: f64,
    bounds: &[(f64, f64)],
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<f64>), EvoError> {
    if p1.len() != p2.len() {
        return Err(EvoError::LengthMismatch { a: p1.len(), b: p2.len() });
    }
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        let apply: f64 = rng.gen();
        if apply > 0.5 {
            continue;
        }
        let u: f64 = rng.gen();
        let beta = if u <= 0.5 {
            (2.0 * u).powf(1.0 / (eta_c + 1.0))
        } else {
            (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta_c + 1.0))
        };
        c1[i] = 0.5 * ((1.0 + beta) * p1[i] + (1.0 - beta) * p2[i]);
        c2[i] = 0.5 * ((1.0 - beta) * p1[i] + (1.0 + beta) * p2[i]);
    }
    clip(&mut c1, bounds);
    clip(&mut c2, bounds);
    Ok((c1, c2))
}

/// Polynomial mutation: each gene moves by δ·(hi − lo) with probability
/// p_mut, where δ follows the polynomial distribution with index η_m.
pub fn polynomial_mutation(
    g: &[f64],
    eta_m: f64,
    p_mut: f64,
    bounds: &[(f64, f64)],
    rng: &mut impl Rng,
) -> Vec<f64> {
    let mut out = g.to_vec();
    for (i, &(lo, hi)) in bounds.iter().enumerate().take(g.len()) {
        let apply: f64 = rng.gen();
        if apply >= p_mut {
            continue;
        }
        let u: f64 = rng.gen();
        let delta = if u < 0.5 {
            (2.0 * u).powf(1.0 / (eta_m + 1.0)) - 1.0
        } else {
            1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta_m + 1.0))
        };
        out[i] += delta * (hi - lo);
    }
    clip(&mut out, bounds);
    out
}

/// Evaluates one genotype, validating the objective vector shape and
/// rejecting NaN. +∞ is tolerated as a worst-possible sentinel so
/// orchestrators can park failed evaluations without aborting the run.
fn evaluate_one<P: Problem>(
    problem: &mut P,
    ctx: EvalContext,
    genotype: Vec<f64>,
) -> Result<Individual, EvoError> {
    let objectives = problem
        .evaluate(&ctx, &genotype)
        .map_err(|e| EvoError::EvaluationFailed {
            generation: ctx.generation,
            index: ctx.index,
            genotype: genotype.clone(),
            message: e.to_string(),
        })?;
    if objectives.len() != problem.n_objectives() {
        return Err(EvoError::WrongObjectiveCount {
            got: objectives.len(),
            want: problem.n_objectives(),
        });
    }
    if objectives.iter().any(|v| v.is_nan()) {
        return Err(EvoError::NanObjective {
            generation: ctx.generation,
            index: ctx.index,
        });
    }
    Ok(Individual {
        genotype,
        objectives,
        rank: None,
        crowding: None,
    })
}

fn initial_population<P: Problem>(
    problem: &mut P,
    params: &EvoParams,
) -> Result<Vec<Individual>, EvoError> {
    let bounds = problem.bounds().to_vec();
    let mut pop = Vec::with_capacity(params.pop_size);
    for i in 0..params.pop_size {
        let genotype = match problem.initial_genotype(i) {
            Some(mut g) => {
                clip(&mut g, &bounds);
                g
            }
            None => {
                let mut rng = StreamKey::new(params.seed).with(0).with(i as u64).with_str("init").rng();
                bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)).collect()
            }
        };
        pop.push(evaluate_one(problem, EvalContext { generation: 0, index: i }, genotype)?);
    }
    Ok(pop)
}

fn stats_for(generation: usize, pop: &[Individual]) -> GenerationStats {
    let m = pop[0].objectives.len();
    let mut best = vec![f64::INFINITY; m];
    let mut mean = vec![0.0f64; m];
    for ind in pop {
        for (k, &v) in ind.objectives.iter().enumerate() {
            if v < best[k] {
                best[k] = v;
            }
            mean[k] += v;
        }
    }
    for v in &mut mean {
        *v /= pop.len() as f64;
    }
    GenerationStats { generation, best, mean }
}

/// k-way tournament on single-objective fitness; ties keep the earlier
/// contestant.
fn tournament_single(pop: &[Individual], k: usize, rng: &mut impl Rng) -> usize {
    let mut winner = rng.gen_range(0..pop.len());
    for _ in 1..k {
        let challenger = rng.gen_range(0..pop.len());
        if pop[challenger].objectives[0] < pop[winner].objectives[0] {
            winner = challenger;
        }
    }
    winner
}

/// Builds one generation of children by tournament selection + SBX +
/// polynomial mutation, truncated to exactly `pop_size` (odd sizes drop
/// the last pair's second child).
fn make_children<P: Problem, F>(
    problem: &mut P,
    pop: &[Individual],
    params: &EvoParams,
    generation: usize,
    mut select: F,
) -> Result<Vec<Individual>, EvoError>
where
    F: FnMut(&[Individual], usize, &mut rand_chacha::ChaCha8Rng) -> usize,
{
    let bounds = problem.bounds().to_vec();
    let p_mut = params.mutation_rate(bounds.len());
    let pairs = params.pop_size.div_ceil(2);
    let mut genotypes = Vec::with_capacity(params.pop_size);
    for pair in 0..pairs {
        let mut select_rng = StreamKey::new(params.seed)
            .with(generation as u64)
            .with(pair as u64)
            .with_str("select")
            .rng();
        let a = select(pop, params.tournament_size, &mut select_rng);
        let b = select(pop, params.tournament_size, &mut select_rng);

        let mut sbx_rng = StreamKey::new(params.seed)
            .with(generation as u64)
            .with(pair as u64)
            .with_str("sbx")
            .rng();
        let (c1, c2) = sbx_crossover(&pop[a].genotype, &pop[b].genotype, params.eta_c, &bounds, &mut sbx_rng)?;
        genotypes.push(c1);
        if genotypes.len() < params.pop_size {
            genotypes.push(c2);
        }
    }

    let mut children = Vec::with_capacity(params.pop_size);
    for (index, genotype) in genotypes.into_iter().enumerate() {
        let mut mut_rng = StreamKey::new(params.seed)
            .with(generation as u64)
            .with(index as u64)
            .with_str("mutate")
            .rng();
        let mutated = polynomial_mutation(&genotype, params.eta_m, p_mut, &bounds, &mut mut_rng);
        children.push(evaluate_one(problem, EvalContext { generation, index }, mutated)?);
    }
    Ok(children)
}

/// Single-objective genetic algorithm with (μ+λ) elitist survival. The
/// returned front holds exactly the best individual found.
pub fn run_ga<P: Problem>(problem: &mut P, params: &EvoParams) -> Result<ParetoResult, EvoError> {
    params.validate()?;
    if problem.n_objectives() != 1 {
        return Err(EvoError::BadParams(format!(
            "run_ga needs exactly 1 objective, problem has {}",
            problem.n_objectives()
        )));
    }

    let mut pop = initial_population(problem, params)?;
    let mut evaluations = params.pop_size;
    let mut history = vec![stats_for(0, &pop)];

    for generation in 1..=params.generations {
        let children = make_children(problem, &pop, params, generation, |p, k, rng| {
            tournament_single(p, k, rng)
        })?;
        evaluations += children.len();
        pop.extend(children);
        // (μ+λ): keep the best pop_size; the stable sort favors incumbents
        // on ties.
        pop.sort_by(|a, b| a.objectives[0].total_cmp(&b.objectives[0]));
        pop.truncate(params.pop_size);
        history.push(stats_for(generation, &pop));
    }

    let best = pop
        .iter()
        .min_by(|a, b| a.objectives[0].total_cmp(&b.objectives[0]))
        .expect("population is non-empty")
        .clone();
    Ok(ParetoResult {
        front: vec![best],
        history,
        evaluations,
    })
}

/// One DE rand/1/bin trial vector for target `i`: v = x_r1 + F·(x_r2 −
/// x_r3) with r1, r2, r3 distinct from each other and from i, then
/// binomial crossover at rate CR with one forced gene, then clip.
fn de_trial(
    pop: &[Vec<f64>],
    i: usize,
    f: f64,
    cr: f64,
    bounds: &[(f64, f64)],
    rng: &mut impl Rng,
) -> Vec<f64> {
    let n = pop.len();
    let mut pick_distinct = |taken: &[usize]| loop {
        let r = rng.gen_range(0..n);
        if !taken.contains(&r) {
            return r;
        }
    };
    let r1 = pick_distinct(&[i]);
    let r2 = pick_distinct(&[i, r1]);
    let r3 = pick_distinct(&[i, r1, r2]);

    let genes = pop[i].len();
    let forced = rng.gen_range(0..genes);
    let mut trial = pop[i].clone();
    for j in 0..genes {
        let donor = pop[r1][j] + f * (pop[r2][j] - pop[r3][j]);
        let cross: f64 = rng.gen();
        if cross < cr || j == forced {
            trial[j] = donor;
        }
    }
    clip(&mut trial, bounds);
    trial
}

/// Differential evolution, rand/1/bin scheme with greedy replacement
/// (a trial no worse than its target takes the slot).
pub fn run_de<P: Problem>(problem: &mut P, params: &EvoParams) -> Result<ParetoResult, EvoError> {
    params.validate()?;
    if problem.n_objectives() != 1 {
        return Err(EvoError::BadParams(format!(
            "run_de needs exactly 1 objective, problem has {}",
            problem.n_objectives()
        )));
    }

    let bounds = problem.bounds().to_vec();
    let mut pop = initial_population(problem, params)?;
    let mut evaluations = params.pop_size;
    let mut history = vec![stats_for(0, &pop)];

    for generation in 1..=params.generations {
        // Trials come from the frozen parent generation (synchronous DE).
        let parent_genotypes: Vec<Vec<f64>> = pop.iter().map(|p| p.genotype.clone()).collect();
        for index in 0..params.pop_size {
            let mut rng = StreamKey::new(params.seed)
                .with(generation as u64)
                .with(index as u64)
                .with_str("de")
                .rng();
            let trial = de_trial(&parent_genotypes, index, params.de_f, params.de_cr, &bounds, &mut rng);
            let candidate = evaluate_one(problem, EvalContext { generation, index }, trial)?;
            evaluations += 1;
            if candidate.objectives[0] <= pop[index].objectives[0] {
                pop[index] = candidate;
            }
        }
        history.push(stats_for(generation, &pop));
    }

    let best = pop
        .iter()
        .min_by(|a, b| a.objectives[0].total_cmp(&b.objectives[0]))
        .expect("population is non-empty")
        .clone();
    Ok(ParetoResult {
        front: vec![best],
        history,
        evaluations,
    })
}

/// Assigns rank and crowding to every individual, then keeps the best
/// `pop_size` by front order, truncating the overflowing front by
/// descending crowding distance.
fn nsga2_survival(combined: Vec<Individual>, pop_size: usize) -> Result<Vec<Individual>, EvoError> {
    let objectives: Vec<Vec<f64>> = combined.iter().map(|i| i.objectives.clone()).collect();
    let fronts = fast_nondominated_sort(&objectives)?;

    let mut survivors: Vec<Individual> = Vec::with_capacity(pop_size);
    for (rank, front) in fronts.iter().enumerate() {
        let front_objs: Vec<Vec<f64>> = front.iter().map(|&i| objectives[i].clone()).collect();
        let crowding = crowding_distance(&front_objs);
        let mut members: Vec<(usize, f64)> = front.iter().copied().zip(crowding).collect();
        if survivors.len() + members.len() > pop_size {
            // Truncate by crowding, preferring the less crowded; ties keep
            // the lower combined index for determinism.
            members.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            members.truncate(pop_size - survivors.len());
        }
        for (idx, crowd) in members {
            let mut ind = combined[idx].clone();
            ind.rank = Some(rank);
            ind.crowding = Some(crowd);
            survivors.push(ind);
        }
        if survivors.len() == pop_size {
            break;
        }
    }
    Ok(survivors)
}

/// Crowded-comparison binary tournament: lower rank wins, equal ranks
/// prefer larger crowding, full ties keep the earlier contestant.
fn tournament_crowded(pop: &[Individual], k: usize, rng: &mut impl Rng) -> usize {
    let better = |a: usize, b: usize| -> bool {
        let (ra, rb) = (pop[a].rank.unwrap_or(0), pop[b].rank.unwrap_or(0));
        if ra != rb {
            return ra < rb;
        }
        let (ca, cb) = (
            pop[a].crowding.unwrap_or(f64::INFINITY),
            pop[b].crowding.unwrap_or(f64::INFINITY),
        );
        ca > cb
    };
    let mut winner = rng.gen_range(0..pop.len());
    for _ in 1..k {
        let challenger = rng.gen_range(0..pop.len());
        if better(challenger, winner) {
            winner = challenger;
        }
    }
    winner
}

/// Appends an evaluated individual to the archive unless an identical
/// (genotype, objectives) pair is already present.
fn archive_push(archive: &mut Vec<Individual>, ind: &Individual) {
    if !archive
        .iter()
        .any(|a| a.genotype == ind.genotype && a.objectives == ind.objectives)
    {
        archive.push(ind.clone());
    }
}

/// Non-dominated subset of the archive, sorted by first objective then
/// insertion order, with rank 0 and crowding filled in.
fn archive_front(archive: &[Individual]) -> Vec<Individual> {
    let mut front: Vec<Individual> = archive
        .iter()
        .filter(|a| !archive.iter().any(|b| dominates(&b.objectives, &a.objectives)))
        .cloned()
        .collect();
    front.sort_by(|a, b| a.objectives[0].total_cmp(&b.objectives[0]));
    let objs: Vec<Vec<f64>> = front.iter().map(|i| i.objectives.clone()).collect();
    let crowding = crowding_distance(&objs);
    for (ind, crowd) in front.iter_mut().zip(crowding) {
        ind.rank = Some(0);
        ind.crowding = Some(crowd);
    }
    front
}

/// NSGA-II. The returned front is the non-dominated set over every
/// evaluation made during the run (a superset guard against losing
/// non-dominated points to crowding truncation).
pub fn run_nsga2<P: Problem>(problem: &mut P, params: &EvoParams) -> Result<ParetoResult, EvoError> {
    params.validate()?;
    if problem.n_objectives() < 2 {
        return Err(EvoError::BadParams(format!(
            "run_nsga2 needs >= 2 objectives, problem has {}",
            problem.n_objectives()
        )));
    }

    let mut archive: Vec<Individual> = Vec::new();
    let initial = initial_population(problem, params)?;
    for ind in &initial {
        archive_push(&mut archive, ind);
    }
    let mut evaluations = params.pop_size;
    let mut pop = nsga2_survival(initial, params.pop_size)?;
    let mut history = vec![stats_for(0, &pop)];

    for generation in 1..=params.generations {
        let children = make_children(problem, &pop, params, generation, |p, k, rng| {
            tournament_crowded(p, k, rng)
        })?;
        evaluations += children.len();
        for ind in &children {
            archive_push(&mut archive, ind);
        }
        let mut combined = pop;
        combined.extend(children);
        pop = nsga2_survival(combined, params.pop_size)?;
        history.push(stats_for(generation, &pop));
    }

    Ok(ParetoResult {
        front: archive_front(&archive),
        history,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    /// Minimize Σxᵢ² over [-1, 1]ⁿ.
    struct Sphere {
        bounds: Vec<(f64, f64)>,
    }

    impl Sphere {
        fn new(n: usize) -> Self {
            Sphere { bounds: vec![(-1.0, 1.0); n] }
        }
    }

    impl Problem for Sphere {
        fn bounds(&self) -> &[(f64, f64)] {
            &self.bounds
        }
        fn n_objectives(&self) -> usize {
            1
        }
        fn evaluate(&mut self, _ctx: &EvalContext, g: &[f64]) -> Result<Vec<f64>, ProblemError> {
            Ok(vec![g.iter().map(|x| x * x).sum()])
        }
    }

    /// min(x², (x−2)²) over x ∈ [−2, 4]; Pareto set is x ∈ [0, 2].
    struct Schaffer;

    impl Problem for Schaffer {
        fn bounds(&self) -> &[(f64, f64)] {
            &[(-2.0, 4.0)]
        }
        fn n_objectives(&self) -> usize {
            2
        }
        fn evaluate(&mut self, _ctx: &EvalContext, g: &[f64]) -> Result<Vec<f64>, ProblemError> {
            let x = g[0];
            Ok(vec![x * x, (x - 2.0) * (x - 2.0)])
        }
    }

    /// RngCore that replays a fixed sequence of f64 draws (as consumed by
    /// `gen::<f64>()`, which takes the top 53 bits of next_u64).
    struct ScriptedRng {
        draws: Vec<f64>,
        pos: usize,
    }

    impl ScriptedRng {
        fn new(draws: &[f64]) -> Self {
            ScriptedRng { draws: draws.to_vec(), pos: 0 }
        }
    }

    impl RngCore for ScriptedRng {
        fn next_u32(&mut self) -> u32 {
            (self.next_u64() >> 32) as u32
        }
        fn next_u64(&mut self) -> u64 {
            let v = self.draws[self.pos];
            self.pos += 1;
            ((v * (1u64 << 53) as f64) as u64) << 11
        }
        fn fill_bytes(&mut self, dest: &mut [u8]) {
            for chunk in dest.chunks_mut(8) {
                let bytes = self.next_u64().to_le_bytes();
                chunk.copy_from_slice(&bytes[..chunk.len()]);
            }
        }
        fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
            self.fill_bytes(dest);
            Ok(())
        }
    }

    #[test]
    fn sbx_u_half_is_identity() {
        // u = 0.5 -> β = (2·0.5)^(1/(η+1)) = 1 -> children equal parents.
        let bounds = [(0.0, 1.0)];
        let mut rng = ScriptedRng::new(&[0.0, 0.5]); // apply, u
        let (c1, c2) = sbx_crossover(&[0.25], &[0.75], 2.0, &bounds, &mut rng).unwrap();
        assert!((c1[0] - 0.25).abs() < 1e-12);
        assert!((c2[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn sbx_identical_parents_unchanged() {
        let bounds = [(0.0, 1.0); 3];
        let p = [0.2, 0.5, 0.9];
        let mut rng = StreamKey::new(11).with_str("sbx-test").rng();
        let (c1, c2) = sbx_crossover(&p, &p, 15.0, &bounds, &mut rng).unwrap();
        assert_eq!(c1, p.to_vec());
        assert_eq!(c2, p.to_vec());
    }

    #[test]
    fn sbx_hand_computed_case() {
        // p1=0, p2=1, η=2, u=0.216: β = (0.432)^(1/3) ≈ 0.755953,
        // c1 = 0.5(1−β) ≈ 0.122024, c2 = 0.5(1+β) ≈ 0.877976.
        let bounds = [(0.0, 1.0)];
        let mut rng = ScriptedRng::new(&[0.0, 0.216]);
        let (c1, c2) = sbx_crossover(&[0.0], &[1.0], 2.0, &bounds, &mut rng).unwrap();
        assert!((c1[0] - 0.122024).abs() < 1e-4, "c1 = {}", c1[0]);
        assert!((c2[0] - 0.877976).abs() < 1e-4, "c2 = {}", c2[0]);
    }

    #[test]
    fn sbx_rejects_length_mismatch() {
        let bounds = [(0.0, 1.0)];
        let mut rng = ScriptedRng::new(&[0.0, 0.5]);
        assert!(matches!(
            sbx_crossover(&[0.1, 0.2], &[0.3], 2.0, &bounds, &mut rng),
            Err(EvoError::LengthMismatch { a: 2, b: 1 })
        ));
    }

    #[test]
    fn mutation_u_half_is_identity() {
        let bounds = [(0.0, 1.0)];
        let mut rng = ScriptedRng::new(&[0.0, 0.5]); // apply, u
        let out = polynomial_mutation(&[0.3], 20.0, 1.0, &bounds, &mut rng);
        assert!((out[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn mutation_zero_rate_is_identity() {
        let bounds = [(0.0, 1.0); 4];
        let g = [0.1, 0.4, 0.6, 0.9];
        let mut rng = StreamKey::new(3).with_str("mut-test").rng();
        assert_eq!(polynomial_mutation(&g, 20.0, 0.0, &bounds, &mut rng), g.to_vec());
    }

    #[test]
    fn mutation_hand_computed_case() {
        // g=0.5, bounds [0,1], η=20, u=0.9:
        // δ = 1 − (2·0.1)^(1/21) ≈ 0.073776, g' ≈ 0.573776.
        let bounds = [(0.0, 1.0)];
        let mut rng = ScriptedRng::new(&[0.0, 0.9]);
        let out = polynomial_mutation(&[0.5], 20.0, 1.0, &bounds, &mut rng);
        assert!((out[0] - 0.573776).abs() < 1e-4, "got {}", out[0]);
    }

    #[test]
    fn sort_hand_computed_fronts() {
        // (1,1) dominates the rest; (2,2), (1,3), (3,1) are mutually
        // non-dominated.
        let objs = vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![1.0, 3.0], vec![3.0, 1.0]];
        let fronts = fast_nondominated_sort(&objs).unwrap();
        assert_eq!(fronts, vec![vec![0], vec![1, 2, 3]]);
    }

    #[test]
    fn sort_single_point() {
        let fronts = fast_nondominated_sort(&[vec![5.0, 7.0]]).unwrap();
        assert_eq!(fronts, vec![vec![0]]);
    }

    #[test]
    fn sort_duplicates_share_a_front() {
        let objs = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        let fronts = fast_nondominated_sort(&objs).unwrap();
        assert_eq!(fronts, vec![vec![0, 1]]);
    }

    #[test]
    fn sort_rejects_ragged_input() {
        let objs = vec![vec![1.0, 2.0], vec![1.0]];
        assert!(matches!(
            fast_nondominated_sort(&objs),
            Err(EvoError::RaggedObjectives)
        ));
    }

    #[test]
    fn sort_matches_brute_force_oracle() {
        // Reference: repeatedly peel the set of points not dominated by
        // any remaining point.
        fn brute_force(objs: &[Vec<f64>]) -> Vec<Vec<usize>> {
            let mut remaining: Vec<usize> = (0..objs.len()).collect();
            let mut fronts = Vec::new();
            while !remaining.is_empty() {
                let front: Vec<usize> = remaining
                    .iter()
                    .copied()
                    .filter(|&i| !remaining.iter().any(|&j| dominates(&objs[j], &objs[i])))
                    .collect();
                remaining.retain(|i| !front.contains(i));
                fronts.push(front);
            }
            fronts
        }

        for dims in 2..=4 {
            let mut rng = StreamKey::new(99).with(dims as u64).with_str("sort-oracle").rng();
            // Integer grid coordinates make duplicates and ties common.
            let objs: Vec<Vec<f64>> = (0..100)
                .map(|_| (0..dims).map(|_| f64::from(rng.gen_range(0..6))).collect())
                .collect();
            assert_eq!(fast_nondominated_sort(&objs).unwrap(), brute_force(&objs));
        }
    }

    #[test]
    fn crowding_small_fronts_all_infinite() {
        assert_eq!(crowding_distance(&[vec![1.0, 2.0]]), vec![f64::INFINITY]);
        assert_eq!(
            crowding_distance(&[vec![1.0, 2.0], vec![2.0, 1.0]]),
            vec![f64::INFINITY, f64::INFINITY]
        );
    }

    #[test]
    fn crowding_hand_computed_case() {
        // {(1,3),(2,2),(3,1)}: middle point gets (3−1)/2 per objective = 2.
        let d = crowding_distance(&[vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]]);
        assert_eq!(d[0], f64::INFINITY);
        assert!((d[1] - 2.0).abs() < 1e-12);
        assert_eq!(d[2], f64::INFINITY);
    }

    #[test]
    fn crowding_identical_points_are_zero() {
        // Degenerate ranges contribute nothing, so three identical points
        // all sit at distance 0.
        let d = crowding_distance(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(d, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn crowding_tolerates_infinite_objectives() {
        // Failed evaluations are scored +inf; the neighbours of such a
        // point must still get finite, NaN-free distances.
        let d = crowding_distance(&[
            vec![1.0, 4.0],
            vec![2.0, 3.0],
            vec![3.0, 2.0],
            vec![f64::INFINITY, 1.0],
        ]);
        assert!(d.iter().all(|x| !x.is_nan()), "{d:?}");
        assert_eq!(d[0], f64::INFINITY);
        assert_eq!(d[3], f64::INFINITY);
        assert!(d[1].is_finite() && d[2].is_finite());
    }

    #[test]
    fn ga_converges_on_sphere() {
        let mut problem = Sphere::new(5);
        let params = EvoParams {
            pop_size: 50,
            generations: 100,
            seed: 7,
            ..EvoParams::default()
        };
        let result = run_ga(&mut problem, &params).unwrap();
        assert!(
            result.front[0].objectives[0] <= 1e-2,
            "best = {}",
            result.front[0].objectives[0]
        );
    }

    #[test]
    fn ga_best_is_monotone_nonincreasing() {
        let mut problem = Sphere::new(3);
        let params = EvoParams { pop_size: 20, generations: 30, seed: 5, ..EvoParams::default() };
        let result = run_ga(&mut problem, &params).unwrap();
        for pair in result.history.windows(2) {
            assert!(pair[1].best[0] <= pair[0].best[0]);
        }
    }

    #[test]
    fn ga_paper_defaults_make_200_evaluations() {
        // pop 25 + 7 generations × 25 children = 200 fitness calls.
        let mut problem = Sphere::new(2);
        let params = EvoParams { seed: 1, ..EvoParams::default() };
        assert_eq!((params.pop_size, params.generations), (25, 7));
        let result = run_ga(&mut problem, &params).unwrap();
        assert_eq!(result.evaluations, 200);
    }

    #[test]
    fn ga_without_variation_keeps_initial_fitness() {
        // All slots start at the same genotype and p_mut = 0: SBX on
        // identical parents is the identity, so generation 1 cannot
        // improve on the initial fitness.
        struct Fixed(Vec<(f64, f64)>);
        impl Problem for Fixed {
            fn bounds(&self) -> &[(f64, f64)] {
                &self.0
            }
            fn n_objectives(&self) -> usize {
                1
            }
            fn evaluate(&mut self, _c: &EvalContext, g: &[f64]) -> Result<Vec<f64>, ProblemError> {
                Ok(vec![g.iter().map(|x| x * x).sum()])
            }
            fn initial_genotype(&self, _index: usize) -> Option<Vec<f64>> {
                Some(vec![0.5, -0.25])
            }
        }
        let mut problem = Fixed(vec![(-1.0, 1.0); 2]);
        let params = EvoParams {
            pop_size: 8,
            generations: 1,
            p_mut: Some(0.0),
            seed: 2,
            ..EvoParams::default()
        };
        let result = run_ga(&mut problem, &params).unwrap();
        let initial = 0.5 * 0.5 + 0.25 * 0.25;
        assert_eq!(result.front[0].objectives[0], initial);
        assert_eq!(result.history.last().unwrap().best[0], initial);
    }

    #[test]
    fn ga_is_deterministic() {
        let params = EvoParams { pop_size: 12, generations: 10, seed: 42, ..EvoParams::default() };
        let a = run_ga(&mut Sphere::new(4), &params).unwrap();
        let b = run_ga(&mut Sphere::new(4), &params).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ga_evaluation_failure_carries_genotype() {
        struct Failing;
        impl Problem for Failing {
            fn bounds(&self) -> &[(f64, f64)] {
                &[(0.0, 1.0)]
            }
            fn n_objectives(&self) -> usize {
                1
            }
            fn evaluate(&mut self, _c: &EvalContext, _g: &[f64]) -> Result<Vec<f64>, ProblemError> {
                Err("backend went away".into())
            }
        }
        match run_ga(&mut Failing, &EvoParams { pop_size: 4, ..EvoParams::default() }) {
            Err(EvoError::EvaluationFailed { generation: 0, index: 0, genotype, message }) => {
                assert_eq!(genotype.len(), 1);
                assert!(message.contains("backend went away"));
            }
            other => panic!("expected EvaluationFailed, got {other:?}"),
        }
    }

    #[test]
    fn de_converges_on_sphere() {
        let mut problem = Sphere::new(5);
        let params = EvoParams {
            pop_size: 50,
            generations: 100,
            seed: 7,
            ..EvoParams::default()
        };
        let result = run_de(&mut problem, &params).unwrap();
        assert!(
            result.front[0].objectives[0] <= 1e-2,
            "best = {}",
            result.front[0].objectives[0]
        );
        // Greedy replacement never loses the incumbent best.
        for pair in result.history.windows(2) {
            assert!(pair[1].best[0] <= pair[0].best[0]);
        }
    }

    #[test]
    fn de_rejects_tiny_population() {
        let params = EvoParams { pop_size: 3, ..EvoParams::default() };
        assert!(matches!(
            run_de(&mut Sphere::new(2), &params),
            Err(EvoError::BadParams(_))
        ));
    }

    #[test]
    fn de_trial_degenerate_scheme_changes_one_gene() {
        // F=0, CR=0: donor = x_r1 and only the forced gene crosses over.
        let pop = vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ];
        let bounds = [(0.0, 10.0); 3];
        let mut rng = StreamKey::new(17).with_str("de-test").rng();
        let trial = de_trial(&pop, 0, 0.0, 0.0, &bounds, &mut rng);
        let changed: Vec<usize> = (0..3).filter(|&j| trial[j] != pop[0][j]).collect();
        assert_eq!(changed.len(), 1, "trial {trial:?}");
        // The new value must come from one of the donors (r1 ≠ target).
        let j = changed[0];
        assert!(pop[1..].iter().any(|p| p[j] == trial[j]));
    }

    #[test]
    fn de_trial_identical_population_is_stationary() {
        // All rows equal: v = x + F·0 = x, so the trial equals the target.
        let pop = vec![vec![0.3, 0.7]; 5];
        let bounds = [(0.0, 1.0); 2];
        let mut rng = StreamKey::new(23).with_str("de-test").rng();
        let trial = de_trial(&pop, 2, 0.8, 0.9, &bounds, &mut rng);
        assert_eq!(trial, pop[2]);
    }

    #[test]
    fn nsga2_recovers_schaffer_front() {
        // Known Pareto set is x ∈ [0, 2].
        let params = EvoParams {
            pop_size: 24,
            generations: 30,
            seed: 3,
            ..EvoParams::default()
        };
        let result = run_nsga2(&mut Schaffer, &params).unwrap();
        assert!(result.front.len() >= 10, "front size {}", result.front.len());
        for ind in &result.front {
            let x = ind.genotype[0];
            assert!(
                (-0.05..=2.05).contains(&x),
                "front member x = {x} outside the Pareto set"
            );
        }
    }

    #[test]
    fn nsga2_front_is_pairwise_nondominated() {
        let params = EvoParams { pop_size: 16, generations: 1, seed: 9, ..EvoParams::default() };
        let result = run_nsga2(&mut Schaffer, &params).unwrap();
        for a in &result.front {
            for b in &result.front {
                assert!(!dominates(&a.objectives, &b.objectives), "{a:?} dominates {b:?}");
            }
        }
    }

    #[test]
    fn nsga2_front_members_not_dominated_by_any_evaluation() {
        // Replays every evaluation made during the run and checks none of
        // them dominates a returned front member.
        struct Recording {
            seen: Vec<(Vec<f64>, Vec<f64>)>,
        }
        impl Problem for Recording {
            fn bounds(&self) -> &[(f64, f64)] {
                &[(-2.0, 4.0)]
            }
            fn n_objectives(&self) -> usize {
                2
            }
            fn evaluate(&mut self, _c: &EvalContext, g: &[f64]) -> Result<Vec<f64>, ProblemError> {
                let x = g[0];
                let objs = vec![x * x, (x - 2.0) * (x - 2.0)];
                self.seen.push((g.to_vec(), objs.clone()));
                Ok(objs)
            }
        }
        let mut problem = Recording { seen: Vec::new() };
        let params = EvoParams { pop_size: 12, generations: 8, seed: 31, ..EvoParams::default() };
        let result = run_nsga2(&mut problem, &params).unwrap();
        assert_eq!(problem.seen.len(), result.evaluations);
        for member in &result.front {
            for (_, objs) in &problem.seen {
                assert!(!dominates(objs, &member.objectives));
            }
        }
    }

    #[test]
    fn nsga2_paper_defaults_run_to_completion() {
        let params = EvoParams { seed: 8, ..EvoParams::default() };
        let result = run_nsga2(&mut Schaffer, &params).unwrap();
        assert_eq!(result.evaluations, 200);
        assert_eq!(result.history.len(), 8); // initial + 7 generations
    }

    #[test]
    fn nsga2_rejects_single_objective() {
        let params = EvoParams::default();
        assert!(matches!(
            run_nsga2(&mut Sphere::new(2), &params),
            Err(EvoError::BadParams(_))
        ));
    }

    #[test]
    fn odd_population_sizes_are_supported() {
        // The paper's population of 25 is odd; the extra SBX child is
        // dropped so each generation still produces exactly pop_size
        // children.
        let mut problem = Sphere::new(2);
        let params = EvoParams { pop_size: 25, generations: 2, seed: 4, ..EvoParams::default() };
        let result = run_ga(&mut problem, &params).unwrap();
        assert_eq!(result.evaluations, 25 + 2 * 25);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Both operators must respect bounds for any inputs, including
            // parents already on the boundary.
            #[test]
            fn sbx_respects_bounds(
                p1 in proptest::collection::vec(-1.0f64..=1.0, 4),
                p2 in proptest::collection::vec(-1.0f64..=1.0, 4),
                seed in 0u64..1000,
            ) {
                let bounds = [(-0.5, 0.5); 4];
                let mut a = p1.clone();
                let mut b = p2.clone();
                clip(&mut a, &bounds);
                clip(&mut b, &bounds);
                let mut rng = StreamKey::new(seed).with_str("prop-sbx").rng();
                let (c1, c2) = sbx_crossover(&a, &b, 15.0, &bounds, &mut rng).unwrap();
                for c in c1.iter().chain(&c2) {
                    prop_assert!((-0.5..=0.5).contains(c));
                }
            }

            #[test]
            fn mutation_respects_bounds(
                g in proptest::collection::vec(0.0f64..=1.0, 4),
                seed in 0u64..1000,
            ) {
                let bounds = [(0.0, 1.0); 4];
                let mut rng = StreamKey::new(seed).with_str("prop-mut").rng();
                let out = polynomial_mutation(&g, 20.0, 1.0, &bounds, &mut rng);
                for v in &out {
                    prop_assert!((0.0..=1.0).contains(v));
                }
            }
        }
    }
}
