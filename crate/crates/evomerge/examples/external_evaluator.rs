//! The external-evaluator protocol: fitness scoring through an arbitrary
//! subprocess. The harness appends the checkpoint path as the final
//! argument, writes one JSON object per dataset item to the child's
//! stdin ({"id", "prompt", ...}), and reads {"id", "response"} lines
//! back; responses are graded in-process. Any missing id grades false.
//!
//! The evaluator here is a shell script, standing in for a real harness
//! wrapping an inference server.
//!
//! Run with: `cargo run --example external_evaluator`

use std::error::Error;

use evomerge::eval::{evaluate_checkpoint, EvaluatorConfig, GraderConfig, ModelRef};
use evomerge::fixture::{fixture_expert, fixture_items, FixtureTask};

fn main() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let checkpoint = dir.path().join("model.safetensors");
    evomerge::write_checkpoint(&fixture_expert(FixtureTask::A), &checkpoint)?;

    // Answers "A" to every prompt mentioning "question 0", echoes the
    // checkpoint path once to stderr, and skips one item entirely to show
    // the missing-response path. $1 is the appended checkpoint path.
    let script = r#"
echo "evaluating $1" >&2
n=0
while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":"\([^"]*\)".*/\1/')
  if [ "$n" -eq 3 ]; then
    n=$((n + 1))
    continue
  fi
  case "$id" in
    *000[0-3]) printf '{"id":"%s","response":"The answer is A"}\n' "$id" ;;
    *)         printf '{"id":"%s","response":"I will guess D"}\n' "$id" ;;
  esac
  n=$((n + 1))
done
"#;
    let config = EvaluatorConfig::External {
        cmd: vec!["sh".to_string(), "-c".to_string(), script.to_string(), "eval".to_string()],
        grader: GraderConfig::MultipleChoice,
    };

    // 8 items, gold cycling A, B, C, D; the script answers "A" for the
    // first four ids and "D" for the rest, and drops item 3.
    let items = fixture_items(FixtureTask::A, 2, 5);
    println!("dataset: {} items, golds {:?}", items.len(), items.iter().map(|i| i.gold.as_str()).collect::<Vec<_>>());

    let record = evaluate_checkpoint(ModelRef::Path(&checkpoint), &items, &config)?;
    println!("\nper-item grades:");
    for (id, correct) in record.item_ids.iter().zip(&record.correct) {
        println!("  {id}: {correct}");
    }
    println!("accuracy: {:.3}", record.accuracy);
    println!("missing responses (graded false): {:?}", record.missing_ids);

    // A crashing evaluator surfaces as an error with its stderr excerpt,
    // never as a silent zero score.
    let crashing = EvaluatorConfig::External {
        cmd: vec![
            "sh".to_string(),
            "-c".to_string(),
            "cat > /dev/null; echo 'backend exploded' >&2; exit 9".to_string(),
        ],
        grader: GraderConfig::MultipleChoice,
    };
    let err = evaluate_checkpoint(ModelRef::Path(&checkpoint), &items, &crashing).unwrap_err();
    println!("\ncrashing evaluator: {err}");
    Ok(())
}
