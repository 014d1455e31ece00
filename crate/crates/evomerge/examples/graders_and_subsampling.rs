//! Answer grading and fitness subsampling. Graders turn free-form model
//! responses into correctness bits; subsampling picks the small, fixed
//! item subset each merge candidate is scored on during search.
//!
//! Run with: `cargo run --example graders_and_subsampling`

use std::error::Error;

use evomerge::eval::{
    extract_last_number, grade_math, grade_multiple_choice, subsample, LanguageId,
    ScriptHeuristic, SubsampleSpec, SubsampleStrategy,
};
use evomerge::fixture::{fixture_items, FixtureTask};

fn main() -> Result<(), Box<dyn Error>> {
    // Multiple choice: the LAST standalone A–D letter counts, so models
    // may reason aloud before answering. No letter at all grades false.
    println!("multiple choice (gold = B):");
    for response in [
        "B",
        "I considered A, but the answer is (B).",
        "b) because of the second clause",
        "The answer is C",
        "no letter in sight",
    ] {
        println!("  {:<45} -> {}", format!("{response:?}"), grade_multiple_choice(response, "B")?);
    }

    // Math: the LAST number must match the gold value within tolerance;
    // thousands separators are understood.
    let heuristic = ScriptHeuristic;
    println!("\nmath (gold = 1050):");
    for response in ["1050", "First 50, then 1000, so 1,050 total.", "1050.0000001", "roughly 1049"] {
        let ok = grade_math(response, "1050", None, &heuristic)?;
        println!("  {:<45} -> {} (extracted {:?})", format!("{response:?}"), ok, extract_last_number(response));
    }

    // With check_language, an answer must also be IN the expected
    // language — the paper's "both mathematically and linguistically
    // correct". The built-in identifier is a character-script histogram.
    println!("\nmath with language check (gold = 12, expected ja):");
    for response in ["答えは 12 です", "the answer is 12"] {
        let ok = grade_math(response, "12", Some("ja"), &heuristic)?;
        let seen = heuristic.identify(response);
        println!("  {:<45} -> {} (identified {:?})", format!("{response:?}"), ok, seen);
    }

    // Subsampling on an imbalanced dataset: 200 items tagged "en" (task
    // A) and 100 tagged "ja" (task B). All strategies are seeded and
    // deterministic.
    let mut items = fixture_items(FixtureTask::A, 50, 3);
    items.extend(fixture_items(FixtureTask::B, 25, 3));
    let count = |picked: &[evomerge::eval::EvalItem], lang: &str| {
        picked.iter().filter(|i| i.language.as_deref() == Some(lang)).count()
    };

    let random = subsample(&items, &SubsampleSpec { n: 30, seed: 11, strategy: SubsampleStrategy::Random })?;
    println!("\nrandom n=30 of {}: {} en / {} ja (free to drift)", items.len(), count(&random, "en"), count(&random, "ja"));

    let stratified = subsample(&items, &SubsampleSpec { n: 30, seed: 11, strategy: SubsampleStrategy::Stratified })?;
    println!("stratified n=30:    {} en / {} ja (proportional by construction)",
        count(&stratified, "en"), count(&stratified, "ja"));

    let anchors = SubsampleStrategy::Anchors(vec![
        "task_b_0007".to_string(),
        "task_a_0000".to_string(),
        "task_a_0103".to_string(),
    ]);
    let anchored = subsample(&items, &SubsampleSpec { n: 3, seed: 0, strategy: anchors })?;
    let ids: Vec<&str> = anchored.iter().map(|i| i.id.as_str()).collect();
    println!("anchors: picked {ids:?} in listed order (what IRT estimators evaluate)");

    let again = subsample(&items, &SubsampleSpec { n: 30, seed: 11, strategy: SubsampleStrategy::Random })?;
    println!("same seed, same subset: {}", again == random);
    Ok(())
}
