//! End-to-end flows: the alpha sweep (merge, judge per-alpha submission
//! pools, tabulate outcome shares) and the combined report emitter.

use crate::cmd_judge::{load_problems, load_submissions, parse_mode};
use crate::cmd_metrics::read_cells;
use crate::errors::CliError;
use crate::report::{fmt_f64, provenance, write_csv};
use frontier_core::arith;
use frontier_core::metrics::{jaccard, pass_at_k, SolveMatrix};
use frontier_core::store::{load_checkpoint, save_checkpoint};
use frontier_core::verifier::{
    input_length_histogram, judge_batch, read_outcome_records, write_outcome_records, Outcome,
    OutcomeRecord, Problem, RunnerTemplate, SandboxConfig,
};
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

/// Shares of the four outcome classes; they sum to 1 by construction.
pub fn outcome_shares(records: &[OutcomeRecord]) -> (usize, [f64; 4]) {
    let total = records.len();
    let mut counts = [0usize; 4];
    for record in records {
        let idx = Outcome::ALL
            .iter()
            .position(|&o| o == record.outcome)
            .unwrap();
        counts[idx] += 1;
    }
    let shares = if total == 0 {
        [0.0; 4]
    } else {
        [
            counts[0] as f64 / total as f64,
            counts[1] as f64 / total as f64,
            counts[2] as f64 / total as f64,
            counts[3] as f64 / total as f64,
        ]
    };
    (total, shares)
}

fn frontier_row(label: &str, records: &[OutcomeRecord]) -> String {
    let (total, shares) = outcome_shares(records);
    format!(
        "{label},{total},{},{},{},{}",
        fmt_f64(shares[0]),
        fmt_f64(shares[1]),
        fmt_f64(shares[2]),
        fmt_f64(shares[3])
    )
}

const FRONTIER_HEADER: &str =
    "alpha,total,solve_rate,optimization_failure_share,correctness_failure_share,format_error_share";

#[derive(clap::Args, Debug)]
pub struct SweepArgs {
    /// TOML run configuration supplying defaults for the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Low endpoint checkpoint; merging is skipped when absent.
    #[arg(long)]
    pub low: Option<PathBuf>,
    #[arg(long)]
    pub high: Option<PathBuf>,
    /// Comma-separated alpha labels; each needs a submissions
    /// subdirectory `alpha_<label>/`.
    #[arg(long)]
    pub alphas: String,
    #[arg(long)]
    pub problems: Option<PathBuf>,
    /// Root directory holding one `alpha_<label>` directory per point.
    #[arg(long)]
    pub submissions: Option<PathBuf>,
    #[arg(long)]
    pub runner: Option<String>,
    #[arg(long, default_value = "early-stop")]
    pub mode: String,
    #[arg(long = "budget-factor", default_value_t = 1.0)]
    pub budget_factor: f64,
    /// Command run to populate a missing alpha directory; `{alpha}` and
    /// `{out}` placeholders are substituted.
    #[arg(long)]
    pub generator: Option<String>,
    /// Save merged checkpoints under <out-dir>/checkpoints.
    #[arg(long = "save-merged", default_value_t = false)]
    pub save_merged: bool,
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let loaded = crate::config::load_config(args.config.as_deref())?;
    let problems_path =
        loaded.required_path(&args.problems, &loaded.config.problems, "problems")?;
    let submissions_root =
        loaded.required_path(&args.submissions, &loaded.config.submissions, "submissions")?;
    let out_dir = loaded.required_path(&args.out_dir, &loaded.config.out_dir, "out-dir")?;
    let problems = load_problems(&problems_path)?;
    let runner = RunnerTemplate::parse(&loaded.runner(&args.runner))?;
    let mode = parse_mode(&args.mode)?;
    let labels: Vec<String> = args
        .alphas
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();

    let endpoints = match (&args.low, &args.high) {
        (Some(low), Some(high)) => Some((load_checkpoint(low)?, load_checkpoint(high)?)),
        (None, None) => None,
        _ => {
            return Err(CliError::Usage(
                "--low and --high must be given together".into(),
            ))
        }
    };

    fs::create_dir_all(out_dir.join("outcomes")).map_err(CliError::infra)?;
    let mut rows = Vec::new();
    for label in &labels {
        let alpha: f64 = label
            .parse()
            .map_err(|_| CliError::Usage(format!("alpha label {label:?} is not a number")))?;

        if let (true, Some((low, high))) = (args.save_merged, endpoints.as_ref()) {
            let merged = arith::lerp(low, high, alpha)?;
            let dir = out_dir.join("checkpoints");
            fs::create_dir_all(&dir).map_err(CliError::infra)?;
            save_checkpoint(&merged, dir.join(format!("alpha_{label}.ckpt")))
                .map_err(CliError::infra)?;
        }

        let sub_dir = submissions_root.join(format!("alpha_{label}"));
        if !sub_dir.exists() {
            match &args.generator {
                Some(template) => {
                    run_generator(template, label, &sub_dir)?;
                }
                None => {
                    return Err(CliError::Data(format!(
                        "missing submissions directory {}",
                        sub_dir.display()
                    )))
                }
            }
        }
        let submissions = load_submissions(&sub_dir, &runner, None)?;
        if submissions.is_empty() {
            return Err(CliError::Data(format!(
                "no submissions for alpha {label} in {}",
                sub_dir.display()
            )));
        }
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
        let mut buf = Vec::new();
        write_outcome_records(&mut buf, &records)?;
        fs::write(
            out_dir
                .join("outcomes")
                .join(format!("alpha_{label}.jsonl")),
            buf,
        )
        .map_err(CliError::infra)?;
        rows.push(frontier_row(label, &records));
    }

    let params = format!(
        "sweep alphas={} problems={} mode={}",
        args.alphas,
        problems_path.display(),
        args.mode
    );
    write_csv(
        &out_dir.join("frontier.csv"),
        &provenance(&params, &loaded.hash, loaded.config.seed),
        &[],
        FRONTIER_HEADER,
        &rows,
    )?;
    println!(
        "swept {} alpha points -> {}",
        labels.len(),
        out_dir.join("frontier.csv").display()
    );
    Ok(())
}

fn run_generator(template: &str, label: &str, out_dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(CliError::infra)?;
    let argv: Vec<String> = template
        .split_whitespace()
        .map(|part| {
            part.replace("{alpha}", label)
                .replace("{out}", &out_dir.display().to_string())
        })
        .collect();
    if argv.is_empty() {
        return Err(CliError::Usage("empty generator command".into()));
    }
    let status = std::process::Command::new(&argv[0])
        .args(&argv[1..])
        .status()
        .map_err(|e| CliError::Infra(format!("generator failed to start: {e}")))?;
    if !status.success() {
        return Err(CliError::Infra(format!(
            "generator exited with {:?}",
            status.code()
        )));
    }
    Ok(())
}

#[derive(clap::Args, Debug)]
pub struct ReportArgs {
    /// Directory of per-alpha outcome files named alpha_<label>.jsonl.
    #[arg(long = "outcomes-dir")]
    pub outcomes_dir: Option<PathBuf>,
    #[arg(long)]
    pub problems: Option<PathBuf>,
    #[arg(long)]
    pub cells: Option<PathBuf>,
    #[arg(long, default_value = "1")]
    pub ks: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

/// Emit the standard report bundle from previously produced tables:
/// frontier.csv, histogram.csv, pass.csv, jaccard.csv — whichever inputs
/// are present. Rerunning on the same inputs is byte-identical.
pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let loaded = crate::config::load_config(args.config.as_deref())?;
    let seed = args.seed.or(loaded.config.seed);
    let hash = loaded.hash.as_str();
    fs::create_dir_all(&args.out_dir).map_err(CliError::infra)?;
    let mut emitted = 0usize;

    if let Some(dir) = &args.outcomes_dir {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(CliError::data)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .map(|n| n.starts_with("alpha_") && n.ends_with(".jsonl"))
                    .unwrap_or(false)
            })
            .collect();
        files.sort();
        let mut labeled: Vec<(f64, String, PathBuf)> = Vec::new();
        for file in files {
            let name = file.file_name().unwrap().to_str().unwrap();
            let label = name
                .trim_start_matches("alpha_")
                .trim_end_matches(".jsonl")
                .to_string();
            let value: f64 = label.parse().map_err(|_| {
                CliError::Data(format!("outcome file {name} has a non-numeric alpha label"))
            })?;
            labeled.push((value, label, file));
        }
        labeled.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut rows = Vec::new();
        for (_, label, file) in &labeled {
            let reader = BufReader::new(fs::File::open(file).map_err(CliError::data)?);
            let records = read_outcome_records(reader)?;
            rows.push(frontier_row(label, &records));
        }
        let params = format!("report outcomes_dir={}", dir.display());
        write_csv(
            &args.out_dir.join("frontier.csv"),
            &provenance(&params, hash, seed),
            &[],
            FRONTIER_HEADER,
            &rows,
        )?;
        emitted += 1;
    }

    if let Some(problems_path) = &args.problems {
        let problems = load_problems(problems_path)?;
        let all: Vec<&Problem> = problems.values().collect();
        let bins = input_length_histogram(all);
        let rows: Vec<String> = bins
            .iter()
            .map(|(decade, count)| format!("{decade},{count}"))
            .collect();
        let params = format!("report problems={}", problems_path.display());
        write_csv(
            &args.out_dir.join("histogram.csv"),
            &provenance(&params, hash, seed),
            &["bins are decades [10^b, 10^(b+1)) of input byte length".into()],
            "decade,count",
            &rows,
        )?;
        emitted += 1;
    }

    if let Some(cells_path) = &args.cells {
        let matrix = SolveMatrix::from_cells(read_cells(cells_path)?)?;
        let ks: Vec<u64> = args
            .ks
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<u64>()
                    .map_err(|_| CliError::Usage(format!("bad --ks entry {t:?}")))
            })
            .collect::<Result<_, _>>()?;
        let mut pass_rows = Vec::new();
        for checkpoint in &matrix.checkpoints {
            for &k in &ks {
                let mut total = 0.0;
                for problem in &matrix.problems {
                    let cell = matrix.require_cell(problem, checkpoint)?;
                    total += pass_at_k(cell.n(), cell.c(), k)?;
                }
                pass_rows.push(format!(
                    "{checkpoint},{k},{}",
                    fmt_f64(total / matrix.problems.len() as f64)
                ));
            }
        }
        let params = format!("report cells={} ks={}", cells_path.display(), args.ks);
        write_csv(
            &args.out_dir.join("pass.csv"),
            &provenance(&params, hash, seed),
            &[],
            "checkpoint,k,pass_at_k",
            &pass_rows,
        )?;

        let sets: BTreeMap<&String, _> = matrix
            .checkpoints
            .iter()
            .map(|ck| (ck, matrix.solved_set(ck)))
            .collect();
        let mut jrows = Vec::new();
        for (i, a) in matrix.checkpoints.iter().enumerate() {
            for b in matrix.checkpoints.iter().skip(i + 1) {
                jrows.push(format!("{a},{b},{}", fmt_f64(jaccard(&sets[a], &sets[b]))));
            }
        }
        write_csv(
            &args.out_dir.join("jaccard.csv"),
            &provenance(&params, hash, seed),
            &[],
            "checkpoint_a,checkpoint_b,jaccard",
            &jrows,
        )?;
        emitted += 2;
    }

    if emitted == 0 {
        return Err(CliError::Usage(
            "report needs at least one of --outcomes-dir, --problems, --cells".into(),
        ));
    }
    println!("wrote {emitted} report files to {}", args.out_dir.display());
    Ok(())
}
