//! Line-delimited JSON ingestion and emission for problems, submissions,
//! and outcome records. Byte strings are carried as plain JSON strings
//! when valid UTF-8 and as `*_b64` fields otherwise.

use super::{OutcomeRecord, Problem, RunnerTemplate, Submission, TestCase, VerifierError};
use base64::Engine;
use std::io::{BufRead, Write};

#[derive(serde::Serialize, serde::Deserialize)]
struct TestCaseLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    input_b64: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    expected_b64: Option<String>,
    #[serde(default = "default_public")]
    public: bool,
}

fn default_public() -> bool {
    false
}

#[derive(serde::Serialize, serde::Deserialize)]
struct ProblemLine {
    id: String,
    #[serde(default)]
    statement: String,
    time_limit_ms: u64,
    memory_limit_bytes: u64,
    tests: Vec<TestCaseLine>,
}

fn decode_bytes(
    line: usize,
    field: &str,
    plain: Option<String>,
    b64: Option<String>,
) -> Result<Vec<u8>, VerifierError> {
    match (plain, b64) {
        (Some(text), None) => Ok(text.into_bytes()),
        (None, Some(encoded)) => base64::engine::general_purpose::STANDARD
            .decode(encoded.as_bytes())
            .map_err(|e| VerifierError::BadRecord {
                line,
                reason: format!("bad base64 in {field}: {e}"),
            }),
        (None, None) => Err(VerifierError::BadRecord {
            line,
            reason: format!("missing {field} (or {field}_b64)"),
        }),
        (Some(_), Some(_)) => Err(VerifierError::BadRecord {
            line,
            reason: format!("both {field} and {field}_b64 present"),
        }),
    }
}

/// Parse problems from line-delimited JSON records.
pub fn read_problems(reader: impl BufRead) -> Result<Vec<Problem>, VerifierError> {
    let mut problems = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: ProblemLine =
            serde_json::from_str(&text).map_err(|e| VerifierError::BadRecord {
                line: line_no,
                reason: e.to_string(),
            })?;
        let mut tests = Vec::with_capacity(parsed.tests.len());
        for (index, t) in parsed.tests.into_iter().enumerate() {
            tests.push(TestCase {
                index,
                input: decode_bytes(line_no, "input", t.input, t.input_b64)?,
                expected: decode_bytes(line_no, "expected", t.expected, t.expected_b64)?,
                public: t.public,
            });
        }
        problems.push(Problem::new(
            parsed.id,
            parsed.statement,
            tests,
            parsed.time_limit_ms,
            parsed.memory_limit_bytes,
        )?);
    }
    Ok(problems)
}

/// A submission record before a runner is attached: id, target problem,
/// and the raw generation text.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SubmissionSpec {
    pub id: String,
    pub problem_id: String,
    pub text: String,
}

impl SubmissionSpec {
    pub fn into_submission(self, runner: RunnerTemplate) -> (String, Submission) {
        let problem_id = self.problem_id;
        (
            problem_id,
            Submission::from_generation(self.id, self.text, runner),
        )
    }
}

pub fn read_submission_specs(reader: impl BufRead) -> Result<Vec<SubmissionSpec>, VerifierError> {
    let mut specs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        specs.push(
            serde_json::from_str(&text).map_err(|e| VerifierError::BadRecord {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(specs)
}

pub fn write_outcome_records(
    mut writer: impl Write,
    records: &[OutcomeRecord],
) -> Result<(), VerifierError> {
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| VerifierError::BadRecord {
            line: 0,
            reason: e.to_string(),
        })?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

pub fn read_outcome_records(reader: impl BufRead) -> Result<Vec<OutcomeRecord>, VerifierError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let text = line?;
        if text.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&text).map_err(|e| VerifierError::BadRecord {
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(records)
}
