//! Child-process execution with wall-clock and memory limits.
//!
//! Each test runs in its own process group. Wall-clock time governs the
//! time limit (plus a startup grace); memory is enforced by polling peak
//! resident size against the problem's limit, with an address-space
//! rlimit as a coarse backstop. The kill reason (time vs memory) is
//! recorded so memory exhaustion is never folded into the timeout label.

use super::{
    ExecStatus, ExecutionResult, Outcome, OutcomeRecord, Problem, RunMode, Submission,
    VerifierError, SANDBOX_DIR_ENV, WORKERS_ENV,
};
use std::fs;
use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

/// Command template for running a program against a test input.
/// `{program}` is replaced by the staged program path; an optional
/// `{stdin}` placeholder receives the input as a file path instead of a
/// pipe, for runners that want file arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunnerTemplate {
    parts: Vec<String>,
}

impl RunnerTemplate {
    pub fn parse(template: &str) -> Result<Self, VerifierError> {
        let parts: Vec<String> = template.split_whitespace().map(str::to_string).collect();
        if parts.is_empty() {
            return Err(VerifierError::BadRunner("template is empty".into()));
        }
        if !parts.iter().any(|p| p.contains("{program}")) {
            return Err(VerifierError::BadRunner(
                "template needs a {program} placeholder".into(),
            ));
        }
        Ok(RunnerTemplate { parts })
    }

    pub fn wants_stdin_file(&self) -> bool {
        self.parts.iter().any(|p| p.contains("{stdin}"))
    }

    pub fn argv(&self, program_path: &Path, stdin_path: Option<&Path>) -> Vec<String> {
        let program = program_path.to_string_lossy();
        self.parts
            .iter()
            .map(|p| {
                let mut part = p.replace("{program}", &program);
                if let Some(stdin) = stdin_path {
                    part = part.replace("{stdin}", &stdin.to_string_lossy());
                }
                part
            })
            .collect()
    }

    pub fn to_template_string(&self) -> String {
        self.parts.join(" ")
    }
}

#[derive(Debug, Clone)]
pub struct SandboxConfig {
    /// Startup grace added to the scaled time limit.
    pub grace_ms: u64,
    /// Poll cadence for limit checks and peak-memory sampling.
    pub poll_interval_ms: u64,
    /// RLIMIT_AS backstop as a multiple of the memory limit. The precise
    /// limit is the polled peak RSS; the rlimit only catches runaway
    /// allocation bursts. Floored so interpreter startup is unaffected.
    pub rlimit_backstop_factor: u64,
    /// Where program files are staged; defaults to the system temp dir or
    /// `FRONTIER_SANDBOX_DIR`.
    pub workdir: Option<PathBuf>,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            grace_ms: 50,
            poll_interval_ms: 2,
            rlimit_backstop_factor: 4,
            workdir: std::env::var_os(SANDBOX_DIR_ENV).map(PathBuf::from),
        }
    }
}

const RLIMIT_FLOOR_BYTES: u64 = 256 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum KillReason {
    Time,
    Memory,
}

fn kill_group(pid: i32) {
    unsafe {
        // The child called setpgid(0,0), so its pgid is its pid.
        libc::kill(-pid, libc::SIGKILL);
        libc::kill(pid, libc::SIGKILL);
    }
}

/// Current and high-water resident size of a live process, in bytes.
fn read_memory(pid: i32) -> Option<(u64, u64)> {
    let status = fs::read_to_string(format!("/proc/{pid}/status")).ok()?;
    let mut rss = 0u64;
    let mut hwm = 0u64;
    for line in status.lines() {
        let field = if line.starts_with("VmRSS:") {
            &mut rss
        } else if line.starts_with("VmHWM:") {
            &mut hwm
        } else {
            continue;
        };
        if let Some(kb) = line
            .split_whitespace()
            .nth(1)
            .and_then(|v| v.parse::<u64>().ok())
        {
            *field = kb * 1024;
        }
    }
    Some((rss, hwm))
}

fn spawn_limited(argv: &[String], backstop_bytes: u64) -> Result<Child, VerifierError> {
    let mut cmd = Command::new(&argv[0]);
    cmd.args(&argv[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null());
    unsafe {
        cmd.pre_exec(move || {
            libc::setpgid(0, 0);
            let limit = libc::rlimit {
                rlim_cur: backstop_bytes,
                rlim_max: backstop_bytes,
            };
            libc::setrlimit(libc::RLIMIT_AS, &limit);
            Ok(())
        });
    }
    cmd.spawn()
        .map_err(|e| VerifierError::Spawn(format!("{}: {e}", argv[0])))
}

fn execute_one(
    argv: &[String],
    input: &[u8],
    expected: &[u8],
    time_limit_ms: u64,
    memory_limit_bytes: u64,
    config: &SandboxConfig,
) -> Result<(ExecStatus, u64, u64), VerifierError> {
    let backstop = memory_limit_bytes
        .saturating_mul(config.rlimit_backstop_factor)
        .max(RLIMIT_FLOOR_BYTES);
    let mut child = spawn_limited(argv, backstop)?;
    let pid = child.id() as i32;

    let mut stdin = child.stdin.take().expect("stdin piped");
    let input_owned = input.to_vec();
    let writer = std::thread::spawn(move || {
        // EPIPE just means the program never read its input.
        let _ = stdin.write_all(&input_owned);
    });
    let mut stdout = child.stdout.take().expect("stdout piped");
    let reader = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stdout.read_to_end(&mut buf);
        buf
    });

    let start = Instant::now();
    let deadline = Duration::from_millis(time_limit_ms.saturating_add(config.grace_ms));
    let poll = Duration::from_millis(config.poll_interval_ms.max(1));
    let mut peak = 0u64;
    let mut killed: Option<KillReason> = None;

    let exit_status = loop {
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {}
            Err(e) => {
                kill_group(pid);
                let _ = child.wait();
                return Err(VerifierError::Io(e));
            }
        }
        if killed.is_none() {
            if let Some((rss, hwm)) = read_memory(pid) {
                peak = peak.max(rss).max(hwm);
                if peak > memory_limit_bytes {
                    killed = Some(KillReason::Memory);
                    kill_group(pid);
                }
            }
            if killed.is_none() && start.elapsed() >= deadline {
                killed = Some(KillReason::Time);
                kill_group(pid);
            }
        }
        std::thread::sleep(poll);
    };
    let wall_ms = start.elapsed().as_millis() as u64;
    let _ = writer.join();
    let stdout_bytes = reader.join().unwrap_or_default();

    let status = match killed {
        Some(KillReason::Time) => ExecStatus::TimeLimit,
        Some(KillReason::Memory) => ExecStatus::MemoryLimit,
        None => {
            if exit_status.success() {
                if super::outputs_match(&stdout_bytes, expected) {
                    ExecStatus::Pass
                } else {
                    ExecStatus::WrongAnswer
                }
            } else if peak >= memory_limit_bytes {
                // Self-terminated after exhausting the limit (e.g. the
                // rlimit backstop fired): a memory failure, not a crash.
                ExecStatus::MemoryLimit
            } else {
                ExecStatus::RuntimeError
            }
        }
    };
    Ok((status, wall_ms, peak))
}

fn stage_program(
    program: &str,
    config: &SandboxConfig,
) -> Result<tempfile::TempDir, VerifierError> {
    let mut builder = tempfile::Builder::new();
    builder.prefix("sandbox-");
    let dir = match &config.workdir {
        Some(root) => {
            fs::create_dir_all(root)?;
            builder.tempdir_in(root)?
        }
        None => builder.tempdir()?,
    };
    fs::write(dir.path().join("program"), program)?;
    Ok(dir)
}

/// Run a submission against a problem's tests in ascending input-length
/// order, each test in an isolated process under `time_limit * budget_factor`
/// and the problem's memory limit. EarlyStop halts at the first failure.
pub fn run_submission(
    problem: &Problem,
    submission: &Submission,
    mode: RunMode,
    budget_factor: f64,
    config: &SandboxConfig,
) -> Result<Vec<ExecutionResult>, VerifierError> {
    let program = submission
        .program
        .as_deref()
        .ok_or(VerifierError::ProgramMissing)?;
    let dir = stage_program(program, config)?;
    let program_path = dir.path().join("program");
    let scaled_limit = (problem.time_limit_ms as f64 * budget_factor).ceil() as u64;

    let mut results = Vec::new();
    for test in problem.ordered_tests() {
        let (argv, piped_input) = if submission.runner.wants_stdin_file() {
            let input_path = dir.path().join(format!("input_{}", test.index));
            fs::write(&input_path, &test.input)?;
            (
                submission.runner.argv(&program_path, Some(&input_path)),
                Vec::new(),
            )
        } else {
            (
                submission.runner.argv(&program_path, None),
                test.input.clone(),
            )
        };
        let (status, wall_ms, peak) = execute_one(
            &argv,
            &piped_input,
            &test.expected,
            scaled_limit,
            problem.memory_limit_bytes,
            config,
        )?;
        results.push(ExecutionResult {
            test_index: test.index,
            input_len: test.input_len(),
            status,
            wall_ms,
            peak_mem_bytes: peak,
        });
        if mode == RunMode::EarlyStop && status != ExecStatus::Pass {
            break;
        }
    }
    Ok(results)
}

/// Worker-pool size: `FRONTIER_WORKERS` when set, otherwise the available
/// parallelism.
pub fn worker_count() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

/// Judge many (problem, submission) pairs on a bounded worker pool.
/// Results are assembled by job index, so the output is independent of
/// scheduling order.
pub fn judge_batch(
    jobs: &[(&Problem, &Submission)],
    mode: RunMode,
    budget_factor: f64,
    config: &SandboxConfig,
) -> Vec<Result<OutcomeRecord, VerifierError>> {
    let workers = worker_count().min(jobs.len()).max(1);
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<OutcomeRecord, VerifierError>>>> =
        (0..jobs.len()).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= jobs.len() {
                    break;
                }
                let (problem, submission) = jobs[i];
                let record = judge_one(problem, submission, mode, budget_factor, config);
                *slots[i].lock().unwrap() = Some(record);
            });
        }
    });

    slots
        .into_iter()
        .map(|slot| slot.into_inner().unwrap().expect("every job ran"))
        .collect()
}

/// Run and classify one submission. Format errors short-circuit without
/// touching the sandbox.
pub fn judge_one(
    problem: &Problem,
    submission: &Submission,
    mode: RunMode,
    budget_factor: f64,
    config: &SandboxConfig,
) -> Result<OutcomeRecord, VerifierError> {
    if submission.program.is_none() {
        return super::classify(&submission.id, &problem.id, &[], false);
    }
    let results = run_submission(problem, submission, mode, budget_factor, config)?;
    super::classify(&submission.id, &problem.id, &results, true)
}

// Re-exported for an outcome consistency check in integration tests.
impl OutcomeRecord {
    /// True when the record's failure fields satisfy the outcome
    /// invariants (s present exactly for failures).
    pub fn invariants_hold(&self) -> bool {
        match self.outcome {
            Outcome::Correct | Outcome::FormatError => self.s.is_none(),
            Outcome::OptimizationFailure | Outcome::CorrectnessFailure => self.s.is_some(),
        }
    }
}
