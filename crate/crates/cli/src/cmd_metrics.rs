//! Reward, metrics, and ensemble subcommands.

use crate::cmd_judge::per_problem_outcomes;
use crate::errors::CliError;
use crate::report::{fmt_f64, provenance, write_csv};
use frontier_core::ensemble::{
    greedy_cover, select_pool, transfer_eval, Objective, Pool, PoolSelection, SearchMode,
};
use frontier_core::metrics::{
    bootstrap_ci, jaccard, pass_at_k, pass_n_at_k, transition_matrix, SampleCell, SolveMatrix,
};
use frontier_core::reward::{
    geometric_mean_policy, kl_optimal_policy, shaped_reward_continuous, shaped_reward_discrete,
    PolicyTable, ThresholdSet,
};
use frontier_core::verifier::{read_outcome_records, Outcome};
use rand::Rng;
use rand::SeedableRng;
use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

pub fn read_cells(path: &Path) -> Result<Vec<SampleCell>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read cells {}: {e}", path.display())))?;
    let mut cells = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cell: SampleCell = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("cells line {}: {e}", i + 1)))?;
        cells.push(cell);
    }
    Ok(cells)
}

fn parse_u64_list(text: &str, flag: &str) -> Result<Vec<u64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("bad {flag} entry {t:?}")))
        })
        .collect()
}

// ── reward ──────────────────────────────────────────────────────────────────

#[derive(clap::Subcommand, Debug)]
pub enum RewardCmd {
    /// Shaped rewards for every record in an outcomes file.
    Shape {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        records: PathBuf,
        /// discrete or continuous.
        #[arg(long)]
        mode: String,
        /// Finite threshold exponents for the discrete shaping
        /// (default 2,3,4,5,6; infinity is always appended).
        #[arg(long)]
        thresholds: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized checks of the shaping and KL-policy identities.
    PolicyCheck {
        /// Outcome-space size per random instance.
        #[arg(long, default_value_t = 8)]
        outcomes: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
    },
}

pub fn reward(cmd: &RewardCmd) -> Result<(), CliError> {
    match cmd {
        RewardCmd::Shape {
            config,
            records,
            mode,
            thresholds,
            out,
        } => {
            let loaded = crate::config::load_config(config.as_deref())?;
            reward_shape(records, mode, &loaded.thresholds(thresholds), out)
        }
        RewardCmd::PolicyCheck {
            outcomes,
            seed,
            trials,
        } => policy_check(*outcomes, *seed, *trials),
    }
}

fn reward_shape(
    records_path: &Path,
    mode: &str,
    thresholds: &str,
    out: &Path,
) -> Result<(), CliError> {
    let file = fs::File::open(records_path).map_err(CliError::data)?;
    let records = read_outcome_records(BufReader::new(file))?;
    let exponents: Vec<u32> = thresholds
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<u32>()
                .map_err(|_| CliError::Usage(format!("bad threshold {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    let set = ThresholdSet::from_exponents(&exponents)?;

    let mut rows = Vec::with_capacity(records.len());
    for record in &records {
        let value = match mode {
            "discrete" => shaped_reward_discrete(record, &set).value(),
            "continuous" => shaped_reward_continuous(record),
            other => {
                return Err(CliError::Usage(format!(
                    "unknown mode {other}; use discrete or continuous"
                )))
            }
        };
        rows.push(format!(
            "{},{},{},{},{}",
            record.submission_id,
            record.problem_id,
            record.outcome.as_str(),
            record.s.map_or(String::new(), |s| s.to_string()),
            fmt_f64(value)
        ));
    }
    let params = format!("reward-shape mode={mode} thresholds={thresholds}");
    write_csv(
        out,
        &provenance(&params, "", None),
        &[],
        "submission_id,problem_id,outcome,s,reward",
        &rows,
    )
}

/// Randomized verification of the two shaping identities: the discrete
/// shaping equals the mean of the binary rewards (exact), and the KL
/// optimum of the mean reward equals the geometric mean of the
/// single-threshold optima. Prints the max deviations observed.
fn policy_check(outcome_count: usize, seed: u64, trials: u64) -> Result<(), CliError> {
    if !(2..=64).contains(&outcome_count) {
        return Err(CliError::Usage("outcomes must be in 2..=64".into()));
    }
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut max_geo_dev = 0.0f64;
    for _ in 0..trials {
        let n = rng.gen_range(2..=outcome_count);
        let labels: Vec<String> = (0..n).map(|i| format!("y{i}")).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let pi0 = PolicyTable::normalized(labels, weights)?;
        let reward_vectors: Vec<Vec<f64>> = (0..6)
            .map(|_| (0..n).map(|_| f64::from(rng.gen_range(0..=1u32))).collect())
            .collect();
        for &beta in &[0.1, 1.0, 10.0] {
            let mean_reward: Vec<f64> = (0..n)
                .map(|i| reward_vectors.iter().map(|r| r[i]).sum::<f64>() / 6.0)
                .collect();
            let lhs = kl_optimal_policy(&pi0, &mean_reward, beta)?;
            let singles: Vec<PolicyTable> = reward_vectors
                .iter()
                .map(|r| kl_optimal_policy(&pi0, r, beta))
                .collect::<Result<_, _>>()?;
            let rhs = geometric_mean_policy(&singles)?;
            for (l, r) in lhs.probs.iter().zip(rhs.probs.iter()) {
                max_geo_dev = max_geo_dev.max((l - r).abs());
            }
        }
    }
    println!("geometric-mean identity: max deviation {max_geo_dev:.3e} over {trials} trials");
    println!("discrete mean identity: exact by integer construction");
    if max_geo_dev > 1e-12 {
        return Err(CliError::Data(format!(
            "geometric-mean identity deviation {max_geo_dev:.3e} exceeds 1e-12"
        )));
    }
    Ok(())
}

// ── metrics ─────────────────────────────────────────────────────────────────

#[derive(clap::Subcommand, Debug)]
pub enum MetricsCmd {
    /// Mean pass@k per checkpoint over problems.
    Pass {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        k: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean filtered pass n@k per checkpoint.
    Passnk {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        k: u64,
        #[arg(long, default_value_t = 1000)]
        resamples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise Jaccard similarity of solved sets.
    Jaccard {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Row-normalized outcome transition matrix between two conditions.
    Transition {
        #[arg(long = "a")]
        side_a: PathBuf,
        #[arg(long = "b")]
        side_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Percentile bootstrap CI for the mean of per-problem values.
    Bootstrap {
        /// One value per line.
        #[arg(long)]
        values: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        resamples: u64,
        #[arg(long, default_value_t = 0.95)]
        level: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn metrics(cmd: &MetricsCmd) -> Result<(), CliError> {
    match cmd {
        MetricsCmd::Pass { cells, k, out } => metrics_pass(cells, k, out),
        MetricsCmd::Passnk {
            cells,
            n,
            k,
            resamples,
            seed,
            out,
        } => metrics_passnk(cells, *n, *k, *resamples, *seed, out),
        MetricsCmd::Jaccard { cells, out } => metrics_jaccard(cells, out),
        MetricsCmd::Transition {
            side_a,
            side_b,
            out,
        } => metrics_transition(side_a, side_b, out),
        MetricsCmd::Bootstrap {
            values,
            resamples,
            level,
            seed,
            out,
        } => metrics_bootstrap(values, *resamples, *level, *seed, out.as_deref()),
    }
}

fn metrics_pass(cells_path: &Path, ks: &str, out: &Path) -> Result<(), CliError> {
    let matrix = SolveMatrix::from_cells(read_cells(cells_path)?)?;
    let ks = parse_u64_list(ks, "--k")?;
    let mut rows = Vec::new();
    for checkpoint in &matrix.checkpoints {
        for &k in &ks {
            let mut total = 0.0;
            for problem in &matrix.problems {
                let cell = matrix.require_cell(problem, checkpoint)?;
                total += pass_at_k(cell.n(), cell.c(), k)?;
            }
            let mean = total / matrix.problems.len() as f64;
            rows.push(format!("{checkpoint},{k},{}", fmt_f64(mean)));
        }
    }
    let params = format!("metrics-pass cells={} k={ks:?}", cells_path.display());
    write_csv(
        out,
        &provenance(&params, "", None),
        &[],
        "checkpoint,k,pass_at_k",
        &rows,
    )
}

fn metrics_passnk(
    cells_path: &Path,
    n: u64,
    k: u64,
    resamples: u64,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let matrix = SolveMatrix::from_cells(read_cells(cells_path)?)?;
    let mut rows = Vec::new();
    for checkpoint in &matrix.checkpoints {
        let mut total = 0.0;
        for (p_idx, problem) in matrix.problems.iter().enumerate() {
            let cell = matrix.require_cell(problem, checkpoint)?;
            total += pass_n_at_k(cell, n, k, resamples, seed.wrapping_add(p_idx as u64))?;
        }
        let mean = total / matrix.problems.len() as f64;
        rows.push(format!("{checkpoint},{n},{k},{}", fmt_f64(mean)));
    }
    let params = format!(
        "metrics-passnk cells={} n={n} k={k} resamples={resamples}",
        cells_path.display()
    );
    write_csv(
        out,
        &provenance(&params, "", Some(seed)),
        &[],
        "checkpoint,n_submit,k,pass_n_at_k",
        &rows,
    )
}

fn metrics_jaccard(cells_path: &Path, out: &Path) -> Result<(), CliError> {
    let matrix = SolveMatrix::from_cells(read_cells(cells_path)?)?;
    let sets: BTreeMap<&String, _> = matrix
        .checkpoints
        .iter()
        .map(|ck| (ck, matrix.solved_set(ck)))
        .collect();
    let mut rows = Vec::new();
    for (i, a) in matrix.checkpoints.iter().enumerate() {
        for b in matrix.checkpoints.iter().skip(i + 1) {
            let value = jaccard(&sets[a], &sets[b]);
            rows.push(format!("{a},{b},{}", fmt_f64(value)));
        }
    }
    let params = format!("metrics-jaccard cells={}", cells_path.display());
    write_csv(
        out,
        &provenance(&params, "", None),
        &[],
        "checkpoint_a,checkpoint_b,jaccard",
        &rows,
    )
}

fn metrics_transition(side_a: &Path, side_b: &Path, out: &Path) -> Result<(), CliError> {
    let a = per_problem_outcomes(side_a)?;
    let b = per_problem_outcomes(side_b)?;
    let matrix = transition_matrix(&a, &b)?;
    let mut rows = Vec::new();
    for (i, outcome) in Outcome::ALL.iter().enumerate() {
        let cells: Vec<String> = (0..4)
            .map(|j| matrix.row_percent[i][j].map_or(String::new(), fmt_f64))
            .collect();
        let row_count: u64 = matrix.counts[i].iter().sum();
        rows.push(format!(
            "{},{},{row_count}",
            outcome.as_str(),
            cells.join(",")
        ));
    }
    let params = format!(
        "metrics-transition a={} b={}",
        side_a.display(),
        side_b.display()
    );
    write_csv(
        out,
        &provenance(&params, "", None),
        &["undefined rows (no problems in the source class) are empty".into()],
        "from,correct,optimization_failure,correctness_failure,format_error,row_count",
        &rows,
    )
}

fn metrics_bootstrap(
    values_path: &Path,
    resamples: u64,
    level: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let text = fs::read_to_string(values_path).map_err(CliError::data)?;
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Data(format!("bad value line {l:?}")))
        })
        .collect::<Result<_, _>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (lo, hi) = bootstrap_ci(&values, mean, resamples, level, seed)?;
    let point = mean(&values);
    println!(
        "mean {} with {level} CI [{}, {}]",
        fmt_f64(point),
        fmt_f64(lo),
        fmt_f64(hi)
    );
    if let Some(out) = out {
        let params = format!(
            "metrics-bootstrap values={} resamples={resamples} level={level}",
            values_path.display()
        );
        write_csv(
            out,
            &provenance(&params, "", Some(seed)),
            &[],
            "statistic,point,lo,hi",
            &[format!(
                "mean,{},{},{}",
                fmt_f64(point),
                fmt_f64(lo),
                fmt_f64(hi)
            )],
        )?;
    }
    Ok(())
}

// ── ensemble ────────────────────────────────────────────────────────────────

#[derive(clap::Subcommand, Debug)]
pub enum EnsembleCmd {
    /// Greedy set-cover over solved sets with the cumulative curve.
    Cover {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select the best pool under an objective.
    Select {
        #[arg(long)]
        cells: PathBuf,
        #[arg(long = "pool-size")]
        pool_size: usize,
        /// coverage, pooled, or passnk.
        #[arg(long)]
        objective: String,
        #[arg(long, default_value_t = 10)]
        k: u64,
        #[arg(long, default_value_t = 1)]
        n: u64,
        #[arg(long, default_value_t = 1000)]
        resamples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "exhaustive")]
        search: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a frozen pool on another matrix against best singles.
    Transfer {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long = "cells-b")]
        cells_b: PathBuf,
        #[arg(long = "cells-a")]
        cells_a: Option<PathBuf>,
        #[arg(long = "n-grid", default_value = "1")]
        n_grid: String,
        #[arg(long = "k-grid", default_value = "10")]
        k_grid: String,
        #[arg(long, default_value_t = 1000)]
        resamples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn ensemble(cmd: &EnsembleCmd) -> Result<(), CliError> {
    match cmd {
        EnsembleCmd::Cover { cells, budget, out } => ensemble_cover(cells, *budget, out),
        EnsembleCmd::Select {
            cells,
            pool_size,
            objective,
            k,
            n,
            resamples,
            seed,
            search,
            out,
        } => ensemble_select(
            cells, *pool_size, objective, *k, *n, *resamples, *seed, search, out,
        ),
        EnsembleCmd::Transfer {
            pool,
            cells_b,
            cells_a,
            n_grid,
            k_grid,
            resamples,
            seed,
            out,
        } => ensemble_transfer(
            pool,
            cells_b,
            cells_a.as_deref(),
            n_grid,
            k_grid,
            *resamples,
            *seed,
            out,
        ),
    }
}

fn ensemble_cover(cells_path: &Path, budget: usize, out: &Path) -> Result<(), CliError> {
    let matrix = SolveMatrix::from_cells(read_cells(cells_path)?)?;
    let sets: BTreeMap<String, _> = matrix
        .checkpoints
        .iter()
        .map(|ck| (ck.clone(), matrix.solved_set(ck)))
        .collect();
    let cover = greedy_cover(&sets, budget)?;
    let rows: Vec<String> = cover
        .order
        .iter()
        .zip(&cover.curve)
        .enumerate()
        .map(|(step, (id, size))| format!("{},{id},{size}", step + 1))
        .collect();
    let params = format!(
        "ensemble-cover cells={} budget={budget}",
        cells_path.display()
    );
    write_csv(
        out,
        &provenance(&params, "", None),
        &[],
        "step,checkpoint,cumulative_coverage",
        &rows,
    )
}

#[allow(clippy::too_many_arguments)]
fn ensemble_select(
    cells_path: &Path,
    pool_size: usize,
    objective: &str,
    k: u64,
    n: u64,
    resamples: u64,
    seed: u64,
    search: &str,
    out: &Path,
) -> Result<(), CliError> {
    let matrix = SolveMatrix::from_cells(read_cells(cells_path)?)?;
    let objective = match objective {
        "coverage" => Objective::UnionCoverage,
        "pooled" => Objective::PooledPassAtK { total_k: k },
        "passnk" => Objective::PassNAtK {
            total_k: k,
            n_submit: n,
            resamples,
            seed,
        },
        other => {
            return Err(CliError::Usage(format!(
                "unknown objective {other}; use coverage, pooled, or passnk"
            )))
        }
    };
    let search = match search {
        "exhaustive" => SearchMode::Exhaustive,
        "greedy" => SearchMode::Greedy,
        other => {
            return Err(CliError::Usage(format!(
                "unknown search {other}; use exhaustive or greedy"
            )))
        }
    };
    let selection = select_pool(&matrix, pool_size, &objective, search)?;
    let json = serde_json::to_string_pretty(&selection).map_err(CliError::infra)?;
    fs::write(out, json + "\n").map_err(CliError::infra)?;
    println!(
        "selected pool [{}] with {} = {}",
        selection.pool.checkpoint_ids.join(", "),
        selection.objective,
        fmt_f64(selection.objective_value)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn ensemble_transfer(
    pool_path: &Path,
    cells_b: &Path,
    cells_a: Option<&Path>,
    n_grid: &str,
    k_grid: &str,
    resamples: u64,
    seed: u64,
    out: &Path,
) -> Result<(), CliError> {
    let pool_text = fs::read_to_string(pool_path).map_err(CliError::data)?;
    // Accept either a bare pool or a full selection file.
    let pool: Pool = match serde_json::from_str::<PoolSelection>(&pool_text) {
        Ok(selection) => selection.pool,
        Err(_) => serde_json::from_str(&pool_text)
            .map_err(|e| CliError::Data(format!("bad pool file {}: {e}", pool_path.display())))?,
    };
    let matrix_b = SolveMatrix::from_cells(read_cells(cells_b)?)?;
    let matrix_a = match cells_a {
        Some(path) => Some(SolveMatrix::from_cells(read_cells(path)?)?),
        None => None,
    };
    let ns = parse_u64_list(n_grid, "--n-grid")?;
    let ks = parse_u64_list(k_grid, "--k-grid")?;
    let grid: Vec<(u64, u64)> = ks
        .iter()
        .flat_map(|&k| ns.iter().map(move |&n| (n, k)))
        .collect();
    let rows = transfer_eval(&pool, &matrix_b, matrix_a.as_ref(), &grid, resamples, seed)?;
    let csv_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                r.n_submit,
                r.k,
                fmt_f64(r.pooled),
                r.best_single_on_b_id,
                fmt_f64(r.best_single_on_b),
                fmt_f64(r.delta_vs_best_on_b),
                r.best_single_from_a_id.clone().unwrap_or_default(),
                r.best_single_from_a.map_or(String::new(), fmt_f64),
                r.delta_vs_best_from_a.map_or(String::new(), fmt_f64),
            )
        })
        .collect();
    let params = format!(
        "ensemble-transfer pool={} cells_b={} resamples={resamples}",
        pool_path.display(),
        cells_b.display()
    );
    write_csv(
        out,
        &provenance(&params, "", Some(seed)),
        &[],
        "n_submit,k,pooled,best_single_b_id,best_single_b,delta_vs_b,best_single_a_id,best_single_a_on_b,delta_vs_a",
        &csv_rows,
    )
}
