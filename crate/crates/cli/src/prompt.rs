//! Repair-prompt rendering for downstream fix@k pipelines. The prompt
//! carries the problem statement, the failed code, and aggregated
//! execution statistics; it never exposes private test inputs, expected
//! outputs, or failing traces.

use crate::errors::CliError;
use frontier_core::verifier::{ExecStatus, Outcome, OutcomeRecord, Problem};

const TEMPLATE: &str = r#"Solve the following competitive programming question.

Question:
{problem statement}

For your reference, here is a previous solution attempt that failed some unit tests:

```python
{failed code}
```

Unit tests execution statistics:
{exec_stats}

You may use this code as reference or inspiration, but you are free to write a completely new solution. Make sure to avoid repeating the same errors. Consider:

- FAILURE or EXCEPTION cases: edge cases, boundary values, off-by-one errors, or logic flaws.
- TIMEOUT cases: algorithm complexity, better data structures, or redundant computations.

Your code should be enclosed in triple backticks like so: ```python YOUR CODE HERE```. Use the backticks for your code only.
"#;

/// Aggregate per-test statistics into the prompt's summary block.
pub fn exec_stats_summary(record: &OutcomeRecord) -> String {
    let count = |status: ExecStatus| {
        record
            .per_test
            .iter()
            .filter(|r| r.status == status)
            .count()
    };
    let mut lines = vec![format!(
        "passed: {}, wrong_answer: {}, runtime_error: {}, time_limit: {}, memory_limit: {}",
        count(ExecStatus::Pass),
        count(ExecStatus::WrongAnswer),
        count(ExecStatus::RuntimeError),
        count(ExecStatus::TimeLimit),
        count(ExecStatus::MemoryLimit),
    )];
    if let Some(s) = record.s {
        lines.push(format!("smallest failing input length: {s} bytes"));
    }
    if record.outcome == Outcome::FormatError {
        lines.push("no program could be extracted from the generation".into());
    }
    lines.join("\n")
}

/// Render the repair prompt for a failed record.
pub fn repair_prompt(
    problem: &Problem,
    record: &OutcomeRecord,
    failed_code: &str,
) -> Result<String, CliError> {
    if record.outcome == Outcome::Correct {
        return Err(CliError::Data(format!(
            "submission {} is correct; nothing to repair",
            record.submission_id
        )));
    }
    Ok(TEMPLATE
        .replace("{problem statement}", &problem.statement)
        .replace("{failed code}", failed_code)
        .replace("{exec_stats}", &exec_stats_summary(record)))
}
