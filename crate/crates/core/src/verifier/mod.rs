//! Sandboxed judging of candidate programs against size-ordered tests,
//! the four-way outcome taxonomy, nested threshold rewards, and
//! extended-budget reclassification.
//!
//! A submission is classified by running its tests in ascending input
//! size and stopping at the first failure: Correct (all pass),
//! OptimizationFailure (time or memory limit after passing all smaller
//! tests), CorrectnessFailure (wrong answer or runtime error within
//! limits), or FormatError (no program could be extracted). `s` is the
//! byte length of the smallest failing test input.

mod jsonl;
mod sandbox;

pub use jsonl::{
    read_outcome_records, read_problems, read_submission_specs, write_outcome_records,
    SubmissionSpec,
};
pub use sandbox::{judge_batch, run_submission, worker_count, RunnerTemplate, SandboxConfig};

use std::collections::BTreeMap;
use std::io::Write;
use std::process::{Command, Stdio};

/// Env var for the sandbox worker-pool size.
pub const WORKERS_ENV: &str = "FRONTIER_WORKERS";
/// Env var overriding where sandbox program files are staged.
pub const SANDBOX_DIR_ENV: &str = "FRONTIER_SANDBOX_DIR";

#[derive(Debug, thiserror::Error)]
pub enum VerifierError {
    #[error("submission has no extracted program")]
    ProgramMissing,
    #[error("no execution results despite successful extraction")]
    EmptyResults,
    #[error("record outcome is {0:?}, expected OptimizationFailure")]
    NotOptimizationFailure(Outcome),
    #[error("invalid problem {id}: {reason}")]
    InvalidProblem { id: String, reason: String },
    #[error("invalid runner template: {0}")]
    BadRunner(String),
    #[error("runner spawn failure: {0}")]
    Spawn(String),
    #[error("sandbox i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
}

impl VerifierError {
    /// Infrastructure faults (spawn/i/o) are distinct from submission or
    /// data failures for exit-code mapping.
    pub fn is_infrastructure(&self) -> bool {
        matches!(self, VerifierError::Spawn(_) | VerifierError::Io(_))
    }
}

// ── Domain types ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub index: usize,
    pub input: Vec<u8>,
    pub expected: Vec<u8>,
    pub public: bool,
}

impl TestCase {
    pub fn input_len(&self) -> u64 {
        self.input.len() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub tests: Vec<TestCase>,
    pub time_limit_ms: u64,
    pub memory_limit_bytes: u64,
}

impl Problem {
    pub fn new(
        id: impl Into<String>,
        statement: impl Into<String>,
        tests: Vec<TestCase>,
        time_limit_ms: u64,
        memory_limit_bytes: u64,
    ) -> Result<Self, VerifierError> {
        let id = id.into();
        if tests.is_empty() {
            return Err(VerifierError::InvalidProblem {
                id,
                reason: "a problem needs at least one test".into(),
            });
        }
        if time_limit_ms == 0 || memory_limit_bytes == 0 {
            return Err(VerifierError::InvalidProblem {
                id,
                reason: "time and memory limits must be positive".into(),
            });
        }
        Ok(Problem {
            id,
            statement: statement.into(),
            tests,
            time_limit_ms,
            memory_limit_bytes,
        })
    }

    /// Tests in judging order: ascending input length, ties by index.
    pub fn ordered_tests(&self) -> Vec<&TestCase> {
        let mut ordered: Vec<&TestCase> = self.tests.iter().collect();
        ordered.sort_by_key(|t| (t.input_len(), t.index));
        ordered
    }
}

/// A raw model generation plus the program extracted from it (present iff
/// extraction succeeded) and the command template that runs it.
#[derive(Debug, Clone)]
pub struct Submission {
    pub id: String,
    pub raw_generation: String,
    pub program: Option<String>,
    pub runner: RunnerTemplate,
}

impl Submission {
    pub fn from_generation(
        id: impl Into<String>,
        raw_generation: impl Into<String>,
        runner: RunnerTemplate,
    ) -> Self {
        let raw_generation = raw_generation.into();
        let program = extract_code(&raw_generation).ok();
        Submission {
            id: id.into(),
            raw_generation,
            program,
            runner,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Pass,
    WrongAnswer,
    RuntimeError,
    TimeLimit,
    MemoryLimit,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ExecutionResult {
    pub test_index: usize,
    pub input_len: u64,
    pub status: ExecStatus,
    pub wall_ms: u64,
    pub peak_mem_bytes: u64,
}

/// The four mutually exclusive submission outcomes.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Correct,
    OptimizationFailure,
    CorrectnessFailure,
    FormatError,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::Correct,
        Outcome::OptimizationFailure,
        Outcome::CorrectnessFailure,
        Outcome::FormatError,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Correct => "correct",
            Outcome::OptimizationFailure => "optimization_failure",
            Outcome::CorrectnessFailure => "correctness_failure",
            Outcome::FormatError => "format_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct OutcomeRecord {
    pub submission_id: String,
    pub problem_id: String,
    pub outcome: Outcome,
    /// Byte length of the smallest failing test input; present exactly for
    /// the two failure outcomes.
    pub s: Option<u64>,
    pub per_test: Vec<ExecutionResult>,
}

/// A verifier-strictness threshold: tests with input length below `10^k`
/// count, or every test for `Infinity`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Threshold {
    Pow10(u32),
    Infinity,
}

impl Threshold {
    pub fn label(self) -> String {
        match self {
            Threshold::Pow10(k) => k.to_string(),
            Threshold::Infinity => "inf".to_string(),
        }
    }

    fn cutoff(self) -> Option<u64> {
        match self {
            Threshold::Pow10(k) => Some(10u64.checked_pow(k).unwrap_or(u64::MAX)),
            Threshold::Infinity => None,
        }
    }
}

// ── Code extraction ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum ExtractError {
    #[error("no fenced code block in generation")]
    NoCodeBlock,
    #[error("unterminated code fence (truncated generation)")]
    UnterminatedFence,
}

/// Returns the contents of the last complete triple-backtick block.
/// An unterminated final fence (token exhaustion) is a format error even
/// when earlier blocks exist: the final submission block is the one that
/// counts.
pub fn extract_code(raw: &str) -> Result<String, ExtractError> {
    let mut blocks: Vec<String> = Vec::new();
    let mut current: Option<Vec<&str>> = None;
    for line in raw.lines() {
        if line.trim_start().starts_with("```") {
            match current.take() {
                None => current = Some(Vec::new()),
                Some(lines) => blocks.push(lines.join("\n")),
            }
        } else if let Some(lines) = current.as_mut() {
            lines.push(line);
        }
    }
    if current.is_some() {
        return Err(ExtractError::UnterminatedFence);
    }
    blocks.pop().ok_or(ExtractError::NoCodeBlock)
}

// ── Output comparison ───────────────────────────────────────────────────────

/// Judge normalization: trailing whitespace stripped per line, trailing
/// blank lines stripped, otherwise exact bytes.
pub fn normalize_output(bytes: &[u8]) -> Vec<u8> {
    let mut normalized: Vec<&[u8]> = bytes
        .split(|&b| b == b'\n')
        .map(|line| {
            let mut end = line.len();
            while end > 0 && matches!(line[end - 1], b' ' | b'\t' | b'\r') {
                end -= 1;
            }
            &line[..end]
        })
        .collect();
    while normalized.last().is_some_and(|l| l.is_empty()) {
        normalized.pop();
    }
    normalized.join(&b'\n')
}

pub fn outputs_match(actual: &[u8], expected: &[u8]) -> bool {
    normalize_output(actual) == normalize_output(expected)
}

// ── Classification and rewards ──────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// Halt after the first non-passing test.
    EarlyStop,
    /// Run every test regardless of failures.
    Full,
}

/// Collapse ordered execution results into the four-way outcome.
pub fn classify(
    submission_id: impl Into<String>,
    problem_id: impl Into<String>,
    results: &[ExecutionResult],
    extraction_ok: bool,
) -> Result<OutcomeRecord, VerifierError> {
    let submission_id = submission_id.into();
    let problem_id = problem_id.into();
    if !extraction_ok {
        return Ok(OutcomeRecord {
            submission_id,
            problem_id,
            outcome: Outcome::FormatError,
            s: None,
            per_test: results.to_vec(),
        });
    }
    if results.is_empty() {
        return Err(VerifierError::EmptyResults);
    }
    let first_failure = results.iter().find(|r| r.status != ExecStatus::Pass);
    let (outcome, s) = match first_failure {
        None => (Outcome::Correct, None),
        Some(r) => {
            let outcome = match r.status {
                ExecStatus::TimeLimit | ExecStatus::MemoryLimit => Outcome::OptimizationFailure,
                ExecStatus::WrongAnswer | ExecStatus::RuntimeError => Outcome::CorrectnessFailure,
                ExecStatus::Pass => unreachable!(),
            };
            (outcome, Some(r.input_len))
        }
    };
    Ok(OutcomeRecord {
        submission_id,
        problem_id,
        outcome,
        s,
        per_test: results.to_vec(),
    })
}

/// Binary nested reward: 1 iff the submission passes every test with input
/// length strictly below `10^k` (every test for `Infinity`). A failure at
/// `s` clears threshold `k` exactly when `s >= 10^k`; format errors pass
/// nothing.
pub fn threshold_reward(record: &OutcomeRecord, k: Threshold) -> u8 {
    match record.outcome {
        Outcome::Correct => 1,
        Outcome::FormatError => 0,
        Outcome::OptimizationFailure | Outcome::CorrectnessFailure => match k.cutoff() {
            None => 0,
            Some(cutoff) => match record.s {
                Some(s) if s >= cutoff => 1,
                _ => 0,
            },
        },
    }
}

// ── Extended-budget reclassification ────────────────────────────────────────

/// Extended-budget categories for submissions originally labeled as
/// optimization failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage1Category {
    AllPass,
    WrongAnswer,
    OutOfMemory,
    StillTimeout,
    Other,
}

#[derive(Debug, Clone)]
pub struct Stage1Report {
    pub category: Stage1Category,
    pub per_test: Vec<ExecutionResult>,
}

/// Re-run an optimization failure in Full mode under `factor` times the
/// time budget. Category precedence when failures mix:
/// WrongAnswer > OutOfMemory > StillTimeout. Runtime errors surfaced by
/// the extended budget reveal correctness bugs and fold into WrongAnswer.
pub fn reclassify_extended(
    record: &OutcomeRecord,
    problem: &Problem,
    submission: &Submission,
    factor: f64,
    config: &SandboxConfig,
) -> Result<Stage1Report, VerifierError> {
    if record.outcome != Outcome::OptimizationFailure {
        return Err(VerifierError::NotOptimizationFailure(record.outcome));
    }
    let per_test = match run_submission(problem, submission, RunMode::Full, factor, config) {
        Ok(results) => results,
        Err(e) if e.is_infrastructure() => {
            return Ok(Stage1Report {
                category: Stage1Category::Other,
                per_test: Vec::new(),
            })
        }
        Err(e) => return Err(e),
    };
    let category = stage1_category(&per_test);
    Ok(Stage1Report { category, per_test })
}

pub fn stage1_category(results: &[ExecutionResult]) -> Stage1Category {
    if results.is_empty() {
        return Stage1Category::Other;
    }
    let any = |status: ExecStatus| results.iter().any(|r| r.status == status);
    if any(ExecStatus::WrongAnswer) || any(ExecStatus::RuntimeError) {
        Stage1Category::WrongAnswer
    } else if any(ExecStatus::MemoryLimit) {
        Stage1Category::OutOfMemory
    } else if any(ExecStatus::TimeLimit) {
        Stage1Category::StillTimeout
    } else {
        Stage1Category::AllPass
    }
}

/// Fold a Stage-1 category back into the record. Only WrongAnswer moves
/// the outcome (to CorrectnessFailure); reclassification never promotes a
/// record to Correct, so the Correct count is conserved.
pub fn apply_stage1(record: &OutcomeRecord, report: &Stage1Report) -> OutcomeRecord {
    let mut updated = record.clone();
    if report.category == Stage1Category::WrongAnswer {
        updated.outcome = Outcome::CorrectnessFailure;
        if let Some(first) = report
            .per_test
            .iter()
            .find(|r| r.status != ExecStatus::Pass)
        {
            updated.s = Some(first.input_len);
        }
    }
    updated
}

// ── External judge hook ─────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JudgeVerdict {
    LogicallyCorrect,
    Buggy,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JudgeHookResult {
    Applied(JudgeVerdict),
    /// Command failed or printed an unparsable verdict; record unchanged.
    Warning(String),
}

/// Pipe the problem statement and program to an external command that
/// prints `LogicallyCorrect` or `Buggy`. A Buggy verdict moves an
/// optimization failure to CorrectnessFailure, never to Correct.
pub fn judge_hook(
    record: &mut OutcomeRecord,
    statement: &str,
    program: &str,
    command: &[String],
) -> JudgeHookResult {
    if command.is_empty() {
        return JudgeHookResult::Warning("judge command is empty".into());
    }
    let spawned = Command::new(&command[0])
        .args(&command[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn();
    let mut child = match spawned {
        Ok(c) => c,
        Err(e) => return JudgeHookResult::Warning(format!("judge command failed to start: {e}")),
    };
    if let Some(mut stdin) = child.stdin.take() {
        let payload = format!("{statement}\n---\n{program}\n");
        let _ = stdin.write_all(payload.as_bytes());
    }
    let output = match child.wait_with_output() {
        Ok(o) => o,
        Err(e) => return JudgeHookResult::Warning(format!("judge command failed: {e}")),
    };
    if !output.status.success() {
        return JudgeHookResult::Warning(format!(
            "judge command exited with {:?}",
            output.status.code()
        ));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    match text.trim() {
        "LogicallyCorrect" => JudgeHookResult::Applied(JudgeVerdict::LogicallyCorrect),
        "Buggy" => {
            if record.outcome == Outcome::OptimizationFailure {
                record.outcome = Outcome::CorrectnessFailure;
            }
            JudgeHookResult::Applied(JudgeVerdict::Buggy)
        }
        other => JudgeHookResult::Warning(format!("unparsable judge verdict: {other:?}")),
    }
}

// ── Input-length histogram ──────────────────────────────────────────────────

/// Counts of test inputs per decade bin `[10^b, 10^(b+1))`. Empty inputs
/// land in bin 0.
pub fn input_length_histogram<'a>(
    problems: impl IntoIterator<Item = &'a Problem>,
) -> BTreeMap<u32, u64> {
    let mut bins = BTreeMap::new();
    for problem in problems {
        for test in &problem.tests {
            *bins.entry(decade(test.input_len())).or_insert(0) += 1;
        }
    }
    bins
}

/// Decade of a length computed in integer arithmetic, so decade
/// boundaries are exact: 999 -> 2, 1000 -> 3.
pub fn decade(len: u64) -> u32 {
    let mut d = 0;
    let mut v = len;
    while v >= 10 {
        v /= 10;
        d += 1;
    }
    d
}
