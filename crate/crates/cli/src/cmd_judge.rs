//! Judging subcommands: run submissions through the sandbox, reclassify
//! optimization failures under an extended budget, and apply the external
//! judge hook.

use crate::errors::CliError;
use crate::prompt::repair_prompt;
use crate::report::{provenance, write_csv};
use frontier_core::verifier::{
    apply_stage1, judge_batch, judge_hook, read_outcome_records, read_problems,
    read_submission_specs, reclassify_extended, write_outcome_records, JudgeHookResult, Outcome,
    Problem, RunMode, RunnerTemplate, SandboxConfig, Stage1Category, Submission, VerifierError,
};
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub fn parse_mode(mode: &str) -> Result<RunMode, CliError> {
    match mode {
        "early-stop" => Ok(RunMode::EarlyStop),
        "full" => Ok(RunMode::Full),
        other => Err(CliError::Usage(format!(
            "unknown mode {other}; use early-stop or full"
        ))),
    }
}

pub fn load_problems(path: &Path) -> Result<BTreeMap<String, Problem>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Data(format!("cannot open problems {}: {e}", path.display())))?;
    let problems = read_problems(BufReader::new(file))?;
    let mut map = BTreeMap::new();
    for p in problems {
        if map.insert(p.id.clone(), p).is_some() {
            return Err(CliError::Data("duplicate problem id".into()));
        }
    }
    Ok(map)
}

/// Submissions come either from a JSONL file of {id, problem_id, text}
/// records or from a directory of `<problem_id>__<submission_id>.txt`
/// files (with `--problem` overriding the target for plain file names).
/// Directory entries are sorted for deterministic job order.
pub fn load_submissions(
    path: &Path,
    runner: &RunnerTemplate,
    default_problem: Option<&str>,
) -> Result<Vec<(String, Submission)>, CliError> {
    if path.is_file() {
        let file = fs::File::open(path).map_err(CliError::data)?;
        let specs = read_submission_specs(BufReader::new(file))?;
        return Ok(specs
            .into_iter()
            .map(|spec| spec.into_submission(runner.clone()))
            .collect());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| {
            CliError::Data(format!(
                "cannot read submissions dir {}: {e}",
                path.display()
            ))
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    let mut out = Vec::new();
    for entry in entries {
        let stem = entry
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let text = fs::read_to_string(&entry).map_err(CliError::data)?;
        let (problem_id, submission_id) = match stem.split_once("__") {
            Some((p, s)) => (p.to_string(), s.to_string()),
            None => match default_problem {
                Some(p) => (p.to_string(), stem),
                None => {
                    return Err(CliError::Data(format!(
                        "submission file {} has no <problem>__<id> name and no --problem was given",
                        entry.display()
                    )))
                }
            },
        };
        out.push((
            problem_id,
            Submission::from_generation(submission_id, text, runner.clone()),
        ));
    }
    Ok(out)
}

#[derive(clap::Args, Debug)]
pub struct JudgeArgs {
    /// TOML run configuration supplying defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub problems: Option<PathBuf>,
    /// JSONL file or directory of submission files.
    #[arg(long)]
    pub submissions: Option<PathBuf>,
    /// Target problem for plain-named submission files.
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long)]
    pub runner: Option<String>,
    #[arg(long, default_value = "early-stop")]
    pub mode: String,
    #[arg(long = "budget-factor", default_value_t = 1.0)]
    pub budget_factor: f64,
    #[arg(long)]
    pub out: PathBuf,
    /// Emit a repair prompt per failed submission into this directory.
    #[arg(long = "repair-prompts-dir")]
    pub repair_prompts_dir: Option<PathBuf>,
}

pub fn judge(args: &JudgeArgs) -> Result<(), CliError> {
    let loaded = crate::config::load_config(args.config.as_deref())?;
    let problems_path =
        loaded.required_path(&args.problems, &loaded.config.problems, "problems")?;
    let submissions_path =
        loaded.required_path(&args.submissions, &loaded.config.submissions, "submissions")?;
    let problems = load_problems(&problems_path)?;
    let runner = RunnerTemplate::parse(&loaded.runner(&args.runner))?;
    let mode = parse_mode(&args.mode)?;
    let submissions = load_submissions(&submissions_path, &runner, args.problem.as_deref())?;

    let mut jobs = Vec::new();
    for (problem_id, submission) in &submissions {
        let problem = problems.get(problem_id).ok_or_else(|| {
            CliError::Data(format!("submission targets unknown problem {problem_id}"))
        })?;
        jobs.push((problem, submission));
    }
    let results = judge_batch(&jobs, mode, args.budget_factor, &SandboxConfig::default());

    let mut records = Vec::with_capacity(results.len());
    for result in results {
        records.push(result.map_err(CliError::from)?);
    }
    let mut out = Vec::new();
    write_outcome_records(&mut out, &records)?;
    fs::write(&args.out, out).map_err(CliError::infra)?;

    if let Some(dir) = &args.repair_prompts_dir {
        fs::create_dir_all(dir).map_err(CliError::infra)?;
        for (record, (problem_id, submission)) in records.iter().zip(&submissions) {
            if record.outcome == Outcome::Correct {
                continue;
            }
            let Some(program) = submission.program.as_deref() else {
                continue;
            };
            let problem = &problems[problem_id];
            let prompt = repair_prompt(problem, record, program)?;
            let name = format!("{}__{}.txt", record.problem_id, record.submission_id);
            fs::write(dir.join(name), prompt).map_err(CliError::infra)?;
        }
    }

    let correct = records
        .iter()
        .filter(|r| r.outcome == Outcome::Correct)
        .count();
    println!(
        "judged {} submissions: {} correct -> {}",
        records.len(),
        correct,
        args.out.display()
    );
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct ReclassifyArgs {
    #[arg(long)]
    pub problems: PathBuf,
    /// Outcome records from a previous judge run.
    #[arg(long)]
    pub outcomes: PathBuf,
    /// The submissions the records came from (programs are re-extracted).
    #[arg(long)]
    pub submissions: PathBuf,
    #[arg(long)]
    pub problem: Option<String>,
    #[arg(long, default_value = "python3 {program}")]
    pub runner: String,
    /// Extended time-budget multiplier.
    #[arg(long, default_value_t = 100.0)]
    pub factor: f64,
    /// External judge command for records still ambiguous after the
    /// extended run; must print LogicallyCorrect or Buggy.
    #[arg(long = "judge-cmd")]
    pub judge_cmd: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Optional Stage-1 category summary CSV.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

pub fn reclassify(args: &ReclassifyArgs) -> Result<(), CliError> {
    let problems = load_problems(&args.problems)?;
    let runner = RunnerTemplate::parse(&args.runner)?;
    let file = fs::File::open(&args.outcomes).map_err(CliError::data)?;
    let records = read_outcome_records(BufReader::new(file))?;
    let submissions = load_submissions(&args.submissions, &runner, args.problem.as_deref())?;
    let by_key: BTreeMap<(String, String), &Submission> = submissions
        .iter()
        .map(|(p, s)| ((p.clone(), s.id.clone()), s))
        .collect();
    let judge_cmd: Option<Vec<String>> = args
        .judge_cmd
        .as_ref()
        .map(|c| c.split_whitespace().map(str::to_string).collect());

    let config = SandboxConfig::default();
    let correct_before = records
        .iter()
        .filter(|r| r.outcome == Outcome::Correct)
        .count();
    let mut category_counts: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut updated = Vec::with_capacity(records.len());

    for record in &records {
        if record.outcome != Outcome::OptimizationFailure {
            updated.push(record.clone());
            continue;
        }
        let key = (record.problem_id.clone(), record.submission_id.clone());
        let submission = by_key.get(&key).ok_or_else(|| {
            CliError::Data(format!(
                "no submission found for record {}/{}",
                record.problem_id, record.submission_id
            ))
        })?;
        let problem = problems.get(&record.problem_id).ok_or_else(|| {
            CliError::Data(format!(
                "record references unknown problem {}",
                record.problem_id
            ))
        })?;
        let report = reclassify_extended(record, problem, submission, args.factor, &config)
            .map_err(CliError::from)?;
        let label = match report.category {
            Stage1Category::AllPass => "all_pass",
            Stage1Category::WrongAnswer => "wrong_answer",
            Stage1Category::OutOfMemory => "out_of_memory",
            Stage1Category::StillTimeout => "still_timeout",
            Stage1Category::Other => "other",
        };
        *category_counts.entry(label).or_insert(0) += 1;
        let mut record = apply_stage1(record, &report);

        // Stage 2 applies to the rows the extended run left ambiguous.
        let ambiguous = matches!(
            report.category,
            Stage1Category::StillTimeout | Stage1Category::OutOfMemory | Stage1Category::Other
        );
        if ambiguous && record.outcome == Outcome::OptimizationFailure {
            if let (Some(cmd), Some(program)) = (&judge_cmd, submission.program.as_deref()) {
                match judge_hook(&mut record, &problem.statement, program, cmd) {
                    JudgeHookResult::Applied(_) => {}
                    JudgeHookResult::Warning(w) => eprintln!("warning: {w}"),
                }
            }
        }
        updated.push(record);
    }

    let correct_after = updated
        .iter()
        .filter(|r| r.outcome == Outcome::Correct)
        .count();
    if correct_before != correct_after {
        return Err(CliError::Data(format!(
            "reclassification changed the Correct count: {correct_before} -> {correct_after}"
        )));
    }

    let mut out = Vec::new();
    write_outcome_records(&mut out, &updated)?;
    fs::write(&args.out, out).map_err(CliError::infra)?;

    if let Some(summary) = &args.summary {
        let rows: Vec<String> = category_counts
            .iter()
            .map(|(label, count)| format!("{label},{count}"))
            .collect();
        let params = format!("reclassify factor={}", args.factor);
        write_csv(
            summary,
            &provenance(&params, "", None),
            &[],
            "category,count",
            &rows,
        )?;
    }
    println!(
        "reclassified {} optimization failures (correct count conserved at {}) -> {}",
        category_counts.values().sum::<u64>(),
        correct_after,
        args.out.display()
    );
    Ok(())
}

/// Shared helper for reading outcome files into per-problem maps, used by
/// the transition-matrix command. Duplicate problems are rejected.
pub fn per_problem_outcomes(path: &Path) -> Result<BTreeMap<String, Outcome>, CliError> {
    let file = fs::File::open(path).map_err(CliError::data)?;
    let records = read_outcome_records(BufReader::new(file))?;
    let mut map = BTreeMap::new();
    for record in records {
        if map
            .insert(record.problem_id.clone(), record.outcome)
            .is_some()
        {
            return Err(CliError::from(VerifierError::BadRecord {
                line: 0,
                reason: format!("duplicate outcome for problem {}", record.problem_id),
            }));
        }
    }
    Ok(map)
}
