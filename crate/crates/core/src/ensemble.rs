//! Checkpoint-pool construction, matched-budget pooled estimation, greedy
//! coverage, pool selection, and cross-benchmark transfer evaluation.

use crate::metrics::{pass_n_at_k, MetricsError, SampleCell, SolveMatrix};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, thiserror::Error)]
pub enum EnsembleError {
    #[error("parameter violation: {0}")]
    Param(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("search space too large: {combinations} pools exceeds the exhaustive cap")]
    SearchTooLarge { combinations: u128 },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A set of checkpoints with a per-member sampling budget summing to the
/// total budget. The default split is even, remainder to the lowest index.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Pool {
    pub checkpoint_ids: Vec<String>,
    pub splits: Vec<u64>,
}

impl Pool {
    pub fn even_split(checkpoint_ids: Vec<String>, total_k: u64) -> Pool {
        let m = checkpoint_ids.len().max(1) as u64;
        let base = total_k / m;
        let remainder = (total_k % m) as usize;
        let splits = (0..checkpoint_ids.len())
            .map(|i| base + if i < remainder { 1 } else { 0 })
            .collect();
        Pool {
            checkpoint_ids,
            splits,
        }
    }

    pub fn total_budget(&self) -> u64 {
        self.splits.iter().sum()
    }
}

// ── Coverage ────────────────────────────────────────────────────────────────

/// Problems solved by at least one member.
pub fn union_coverage<'a>(sets: impl IntoIterator<Item = &'a BTreeSet<String>>) -> usize {
    let mut union = BTreeSet::new();
    for set in sets {
        union.extend(set.iter().cloned());
    }
    union.len()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreedyCover {
    pub order: Vec<String>,
    /// Cumulative union size after each pick.
    pub curve: Vec<usize>,
}

/// Greedy max-coverage: at each step pick the checkpoint whose solved set
/// adds the most new problems, ties broken by lexicographic id.
pub fn greedy_cover(
    sets: &BTreeMap<String, BTreeSet<String>>,
    budget: usize,
) -> Result<GreedyCover, EnsembleError> {
    if budget < 1 {
        return Err(EnsembleError::Param("budget must be at least 1".into()));
    }
    if sets.is_empty() {
        return Err(EnsembleError::Empty("no candidate checkpoints".into()));
    }
    let mut covered: BTreeSet<String> = BTreeSet::new();
    let mut remaining: BTreeMap<&String, &BTreeSet<String>> = sets.iter().collect();
    let mut order = Vec::new();
    let mut curve = Vec::new();
    for _ in 0..budget.min(sets.len()) {
        let mut best: Option<(&String, usize)> = None;
        for (&id, &set) in &remaining {
            let gain = set.difference(&covered).count();
            // Strictly-greater keeps the lexicographically smallest id on
            // ties, because iteration is sorted.
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((id, gain));
            }
        }
        let (id, _) = best.expect("remaining non-empty");
        covered.extend(remaining[id].iter().cloned());
        order.push(id.clone());
        curve.push(covered.len());
        remaining.remove(&id.clone());
    }
    Ok(GreedyCover { order, curve })
}

// ── Pooled estimators ───────────────────────────────────────────────────────

/// Exact failure-product estimator for stratified draws: the pool fails
/// exactly when every member's k_i-draw misses all of that member's
/// passing samples. Members with k_i = 0 draw nothing.
pub fn pooled_pass_at_k(members: &[(u64, u64, u64)]) -> Result<f64, EnsembleError> {
    if members.is_empty() {
        return Err(EnsembleError::Empty("no pool members".into()));
    }
    let mut failure = 1.0f64;
    for &(n, c, k) in members {
        if k > n {
            return Err(EnsembleError::Param(format!(
                "member budget k={k} exceeds its n={n} samples"
            )));
        }
        if k == 0 {
            continue;
        }
        failure *= crate::metrics::fail_ratio(n, c, k)?;
    }
    Ok(1.0 - failure)
}

fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k == 0 {
        f(&[]);
        return;
    }
    if k > n {
        return;
    }
    let mut indices: Vec<usize> = (0..k).collect();
    loop {
        f(&indices);
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if indices[i] != i + n - k {
                break;
            }
        }
        indices[i] += 1;
        for j in i + 1..k {
            indices[j] = indices[j - 1] + 1;
        }
    }
}

fn binom_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut result: u128 = 1;
    for i in 1..=k {
        result = result.checked_mul((n - k + i) as u128)?;
        result /= i as u128;
    }
    Some(result)
}

/// Ranked pooled success for one joint draw. Candidates carry their
/// (member, sample) origin; ranking is public pass count descending with
/// (member, sample) ascending as the deterministic tie order.
fn joint_draw_success(
    draws: &[(usize, Vec<usize>)],
    cells: &[&SampleCell],
    n_submit: usize,
) -> bool {
    let mut candidates: Vec<(u32, usize, usize)> = Vec::new();
    for (member, subset) in draws {
        for &sample in subset {
            let v = &cells[*member].verdicts[sample];
            candidates.push((v.public_pass_count, *member, sample));
        }
    }
    candidates.sort_by_key(|&(public, member, sample)| (std::cmp::Reverse(public), member, sample));
    candidates
        .iter()
        .take(n_submit)
        .any(|&(_, member, sample)| cells[member].verdicts[sample].full_pass)
}

/// Matched-budget pass n@k for a pool: draw `splits[i]` samples from each
/// member cell, filter the union by public tests, submit the top
/// `n_submit`. Exact joint enumeration when the product of per-member
/// subset counts is small; Monte Carlo with derived seed streams
/// otherwise.
pub fn pooled_pass_n_at_k(
    cells: &[&SampleCell],
    splits: &[u64],
    n_submit: u64,
    resamples: u64,
    seed: u64,
) -> Result<f64, EnsembleError> {
    if cells.is_empty() || cells.len() != splits.len() {
        return Err(EnsembleError::Param(
            "cells and splits must align and be non-empty".into(),
        ));
    }
    if n_submit < 1 {
        return Err(EnsembleError::Param("n_submit must be at least 1".into()));
    }
    if resamples < 1 {
        return Err(EnsembleError::Param("resamples must be at least 1".into()));
    }
    let mut combos: u128 = 1;
    for (cell, &k) in cells.iter().zip(splits) {
        if k > cell.n() {
            return Err(EnsembleError::Param(format!(
                "split {k} exceeds the {} samples of {}/{}",
                cell.n(),
                cell.problem_id,
                cell.checkpoint_id
            )));
        }
        combos = combos.saturating_mul(binom_u128(cell.n(), k).unwrap_or(u128::MAX));
    }
    let n_submit = n_submit as usize;

    if combos <= crate::metrics::ENUMERATION_LIMIT {
        // Odometer over per-member subset lists.
        let per_member: Vec<Vec<Vec<usize>>> = cells
            .iter()
            .zip(splits)
            .map(|(cell, &k)| {
                let mut subsets = Vec::new();
                for_each_combination(cell.n() as usize, k as usize, |s| subsets.push(s.to_vec()));
                subsets
            })
            .collect();
        let mut failures: u128 = 0;
        let mut cursor = vec![0usize; per_member.len()];
        'outer: loop {
            let draws: Vec<(usize, Vec<usize>)> = cursor
                .iter()
                .enumerate()
                .map(|(m, &i)| (m, per_member[m][i].clone()))
                .collect();
            if !joint_draw_success(&draws, cells, n_submit) {
                failures += 1;
            }
            for m in (0..cursor.len()).rev() {
                cursor[m] += 1;
                if cursor[m] < per_member[m].len() {
                    continue 'outer;
                }
                cursor[m] = 0;
            }
            break;
        }
        return Ok(1.0 - failures as f64 / combos as f64);
    }

    let mut failures = 0u64;
    for r in 0..resamples {
        let mut rng = crate::metrics::derive_stream(seed, r);
        let draws: Vec<(usize, Vec<usize>)> = cells
            .iter()
            .zip(splits)
            .enumerate()
            .map(|(m, (cell, &k))| {
                let pool: Vec<usize> = (0..cell.n() as usize).collect();
                let subset =
                    rand::seq::SliceRandom::choose_multiple(&pool[..], &mut rng, k as usize)
                        .copied()
                        .collect();
                (m, subset)
            })
            .collect();
        if !joint_draw_success(&draws, cells, n_submit) {
            failures += 1;
        }
    }
    Ok(1.0 - failures as f64 / resamples as f64)
}

// ── Pool selection ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    PooledPassAtK {
        total_k: u64,
    },
    UnionCoverage,
    PassNAtK {
        total_k: u64,
        n_submit: u64,
        resamples: u64,
        seed: u64,
    },
}

impl Objective {
    pub fn label(&self) -> &'static str {
        match self {
            Objective::PooledPassAtK { .. } => "pooled_pass_at_k",
            Objective::UnionCoverage => "union_coverage",
            Objective::PassNAtK { .. } => "pass_n_at_k",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Exhaustive,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PoolSelection {
    pub pool: Pool,
    pub objective_value: f64,
    pub search: SearchMode,
    pub objective: String,
}

/// Mean objective of a candidate pool over all problems in the matrix.
pub fn evaluate_pool(
    matrix: &SolveMatrix,
    ids: &[String],
    objective: &Objective,
) -> Result<f64, EnsembleError> {
    if ids.is_empty() {
        return Err(EnsembleError::Empty("empty pool".into()));
    }
    match objective {
        Objective::UnionCoverage => {
            let sets: Vec<BTreeSet<String>> = ids.iter().map(|id| matrix.solved_set(id)).collect();
            Ok(union_coverage(sets.iter()) as f64)
        }
        Objective::PooledPassAtK { total_k } => {
            let pool = Pool::even_split(ids.to_vec(), *total_k);
            let mut total = 0.0;
            for problem in &matrix.problems {
                let members: Vec<(u64, u64, u64)> = ids
                    .iter()
                    .zip(&pool.splits)
                    .map(|(id, &k)| {
                        let cell = matrix.require_cell(problem, id)?;
                        Ok((cell.n(), cell.c(), k))
                    })
                    .collect::<Result<_, MetricsError>>()?;
                total += pooled_pass_at_k(&members)?;
            }
            Ok(total / matrix.problems.len() as f64)
        }
        Objective::PassNAtK {
            total_k,
            n_submit,
            resamples,
            seed,
        } => {
            let pool = Pool::even_split(ids.to_vec(), *total_k);
            let mut total = 0.0;
            for (p_idx, problem) in matrix.problems.iter().enumerate() {
                let cells: Vec<&SampleCell> = ids
                    .iter()
                    .map(|id| matrix.require_cell(problem, id))
                    .collect::<Result<_, MetricsError>>()?;
                total += pooled_pass_n_at_k(
                    &cells,
                    &pool.splits,
                    *n_submit,
                    *resamples,
                    seed.wrapping_add(p_idx as u64),
                )?;
            }
            Ok(total / matrix.problems.len() as f64)
        }
    }
}

const EXHAUSTIVE_CAP: u128 = 100_000;

/// Best pool of `pool_size` checkpoints under the objective. Exhaustive
/// search requires at most 10^5 combinations; greedy adds 2-swap local
/// improvement. Ties prefer the lexicographically smallest id list.
pub fn select_pool(
    matrix: &SolveMatrix,
    pool_size: usize,
    objective: &Objective,
    search: SearchMode,
) -> Result<PoolSelection, EnsembleError> {
    let ids = &matrix.checkpoints;
    if pool_size == 0 || pool_size > ids.len() {
        return Err(EnsembleError::Param(format!(
            "pool size {pool_size} infeasible with {} checkpoints",
            ids.len()
        )));
    }
    let total_k = match objective {
        Objective::PooledPassAtK { total_k } | Objective::PassNAtK { total_k, .. } => *total_k,
        Objective::UnionCoverage => 0,
    };

    let chosen: Vec<String> = match search {
        SearchMode::Exhaustive => {
            let combos = binom_u128(ids.len() as u64, pool_size as u64).unwrap_or(u128::MAX);
            if combos > EXHAUSTIVE_CAP {
                return Err(EnsembleError::SearchTooLarge {
                    combinations: combos,
                });
            }
            let mut best: Option<(f64, Vec<String>)> = None;
            let mut error: Option<EnsembleError> = None;
            for_each_combination(ids.len(), pool_size, |combo| {
                if error.is_some() {
                    return;
                }
                let candidate: Vec<String> = combo.iter().map(|&i| ids[i].clone()).collect();
                match evaluate_pool(matrix, &candidate, objective) {
                    // Strictly-greater keeps the first (lexicographically
                    // smallest) candidate on ties.
                    Ok(value) => {
                        if best.as_ref().is_none_or(|(b, _)| value > *b) {
                            best = Some((value, candidate));
                        }
                    }
                    Err(e) => error = Some(e),
                }
            });
            if let Some(e) = error {
                return Err(e);
            }
            best.expect("at least one combination").1
        }
        SearchMode::Greedy => {
            let mut selected: Vec<String> = Vec::new();
            while selected.len() < pool_size {
                let mut best: Option<(f64, &String)> = None;
                for id in ids.iter().filter(|id| !selected.contains(id)) {
                    let mut candidate = selected.clone();
                    candidate.push(id.clone());
                    candidate.sort();
                    let value = evaluate_pool(matrix, &candidate, objective)?;
                    if best.as_ref().is_none_or(|(b, _)| value > *b) {
                        best = Some((value, id));
                    }
                }
                selected.push(best.expect("candidates remain").1.clone());
                selected.sort();
            }
            // 2-swap local improvement.
            let mut value = evaluate_pool(matrix, &selected, objective)?;
            for _ in 0..200 {
                let mut improved = false;
                'swaps: for pos in 0..selected.len() {
                    for id in ids.iter().filter(|id| !selected.contains(id)) {
                        let mut candidate = selected.clone();
                        candidate[pos] = id.clone();
                        candidate.sort();
                        let v = evaluate_pool(matrix, &candidate, objective)?;
                        if v > value {
                            selected = candidate;
                            value = v;
                            improved = true;
                            break 'swaps;
                        }
                    }
                }
                if !improved {
                    break;
                }
            }
            selected
        }
    };

    let mut sorted = chosen;
    sorted.sort();
    let objective_value = evaluate_pool(matrix, &sorted, objective)?;
    Ok(PoolSelection {
        pool: Pool::even_split(sorted, total_k),
        objective_value,
        search,
        objective: objective.label().to_string(),
    })
}

// ── Transfer evaluation ─────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TransferRow {
    pub n_submit: u64,
    pub k: u64,
    pub pooled: f64,
    /// Best single checkpoint selected on the evaluation matrix itself.
    pub best_single_on_b: f64,
    pub best_single_on_b_id: String,
    pub delta_vs_best_on_b: f64,
    /// Best single selected on the source matrix, evaluated here; present
    /// when a source matrix is supplied.
    pub best_single_from_a_id: Option<String>,
    pub best_single_from_a: Option<f64>,
    pub delta_vs_best_from_a: Option<f64>,
}

fn mean_single_pass_n_at_k(
    matrix: &SolveMatrix,
    checkpoint: &str,
    n_submit: u64,
    k: u64,
    resamples: u64,
    seed: u64,
) -> Result<f64, EnsembleError> {
    let mut total = 0.0;
    for (p_idx, problem) in matrix.problems.iter().enumerate() {
        let cell = matrix.require_cell(problem, checkpoint)?;
        total += pass_n_at_k(
            cell,
            n_submit,
            k,
            resamples,
            seed.wrapping_add(p_idx as u64),
        )?;
    }
    Ok(total / matrix.problems.len() as f64)
}

fn best_single(
    matrix: &SolveMatrix,
    n_submit: u64,
    k: u64,
    resamples: u64,
    seed: u64,
) -> Result<(String, f64), EnsembleError> {
    let mut best: Option<(f64, &String)> = None;
    for id in &matrix.checkpoints {
        let value = mean_single_pass_n_at_k(matrix, id, n_submit, k, resamples, seed)?;
        if best.as_ref().is_none_or(|(b, _)| value > *b) {
            best = Some((value, id));
        }
    }
    let (value, id) =
        best.ok_or_else(|| EnsembleError::Empty("matrix has no checkpoints".into()))?;
    Ok((id.clone(), value))
}

/// Evaluate a frozen pool on matrix B against the best single checkpoint,
/// per (n_submit, k) grid point. When matrix A is supplied, the baseline
/// selected on A and evaluated on B is reported side by side.
pub fn transfer_eval(
    pool: &Pool,
    matrix_b: &SolveMatrix,
    matrix_a: Option<&SolveMatrix>,
    grid: &[(u64, u64)],
    resamples: u64,
    seed: u64,
) -> Result<Vec<TransferRow>, EnsembleError> {
    for id in &pool.checkpoint_ids {
        if !matrix_b.checkpoints.contains(id) {
            return Err(EnsembleError::Param(format!(
                "pool checkpoint {id} missing from the evaluation matrix"
            )));
        }
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &(n_submit, k) in grid {
        let objective = Objective::PassNAtK {
            total_k: k,
            n_submit,
            resamples,
            seed,
        };
        let pooled = evaluate_pool(matrix_b, &pool.checkpoint_ids, &objective)?;
        let (b_id, b_value) = best_single(matrix_b, n_submit, k, resamples, seed)?;
        let from_a = match matrix_a {
            None => None,
            Some(a) => {
                let (a_id, _) = best_single(a, n_submit, k, resamples, seed)?;
                let value = mean_single_pass_n_at_k(matrix_b, &a_id, n_submit, k, resamples, seed)?;
                Some((a_id, value))
            }
        };
        rows.push(TransferRow {
            n_submit,
            k,
            pooled,
            best_single_on_b: b_value,
            best_single_on_b_id: b_id,
            delta_vs_best_on_b: pooled - b_value,
            best_single_from_a_id: from_a.as_ref().map(|(id, _)| id.clone()),
            best_single_from_a: from_a.as_ref().map(|(_, v)| *v),
            delta_vs_best_from_a: from_a.as_ref().map(|(_, v)| pooled - v),
        });
    }
    Ok(rows)
}
