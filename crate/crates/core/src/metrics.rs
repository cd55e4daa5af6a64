//! Pass@k-family estimators, solved-set similarity, transition matrices,
//! bootstrap confidence intervals, and run aggregation.

use crate::verifier::Outcome;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Exact enumeration replaces Monte Carlo whenever the subset count is at
/// most this bound.
pub const ENUMERATION_LIMIT: u128 = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("parameter violation: {0}")]
    Param(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("problem sets differ: {0}")]
    IndexMismatch(String),
    #[error("duplicate cell for problem {problem} and checkpoint {checkpoint}")]
    DuplicateCell { problem: String, checkpoint: String },
    #[error("missing cell for problem {problem} and checkpoint {checkpoint}")]
    MissingCell { problem: String, checkpoint: String },
}

// ── Sample cells and the solve matrix ───────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SampleVerdict {
    pub full_pass: bool,
    pub public_pass_count: u32,
    pub outcome: Outcome,
}

/// All samples drawn from one checkpoint on one problem.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SampleCell {
    #[serde(rename = "problem")]
    pub problem_id: String,
    #[serde(rename = "checkpoint")]
    pub checkpoint_id: String,
    pub verdicts: Vec<SampleVerdict>,
}

impl SampleCell {
    pub fn n(&self) -> u64 {
        self.verdicts.len() as u64
    }

    pub fn c(&self) -> u64 {
        self.verdicts.iter().filter(|v| v.full_pass).count() as u64
    }
}

/// Cells indexed by (problem, checkpoint) over sorted unique axes;
/// missing cells stay explicit.
#[derive(Debug, Clone, Default)]
pub struct SolveMatrix {
    pub problems: Vec<String>,
    pub checkpoints: Vec<String>,
    cells: BTreeMap<(String, String), SampleCell>,
}

impl SolveMatrix {
    pub fn from_cells(cells: Vec<SampleCell>) -> Result<Self, MetricsError> {
        let mut matrix = SolveMatrix::default();
        let mut problems = BTreeSet::new();
        let mut checkpoints = BTreeSet::new();
        for cell in cells {
            problems.insert(cell.problem_id.clone());
            checkpoints.insert(cell.checkpoint_id.clone());
            let key = (cell.problem_id.clone(), cell.checkpoint_id.clone());
            if matrix.cells.insert(key, cell.clone()).is_some() {
                return Err(MetricsError::DuplicateCell {
                    problem: cell.problem_id,
                    checkpoint: cell.checkpoint_id,
                });
            }
        }
        matrix.problems = problems.into_iter().collect();
        matrix.checkpoints = checkpoints.into_iter().collect();
        Ok(matrix)
    }

    pub fn cell(&self, problem: &str, checkpoint: &str) -> Option<&SampleCell> {
        self.cells
            .get(&(problem.to_string(), checkpoint.to_string()))
    }

    pub fn require_cell(
        &self,
        problem: &str,
        checkpoint: &str,
    ) -> Result<&SampleCell, MetricsError> {
        self.cell(problem, checkpoint)
            .ok_or_else(|| MetricsError::MissingCell {
                problem: problem.to_string(),
                checkpoint: checkpoint.to_string(),
            })
    }

    /// Problems this checkpoint solves at least once.
    pub fn solved_set(&self, checkpoint: &str) -> BTreeSet<String> {
        self.problems
            .iter()
            .filter(|p| {
                self.cell(p, checkpoint)
                    .map(|cell| cell.c() >= 1)
                    .unwrap_or(false)
            })
            .cloned()
            .collect()
    }
}

// ── pass@k family ───────────────────────────────────────────────────────────

fn binomial_u128(n: u64, k: u64) -> Option<u128> {
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

fn ln_choose(n: u64, k: u64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

const F64_EXACT_LIMIT: u128 = 1 << 53;

/// `C(n-c, k) / C(n, k)`: the probability that a uniform k-subset of n
/// samples misses every one of the c passing samples. Exact integer
/// ratios are used when the counts are exactly representable; log-gamma
/// otherwise (no overflow up to n ~ 10^4 and beyond).
pub(crate) fn fail_ratio(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    if c > n {
        return Err(MetricsError::Param(format!("c={c} exceeds n={n}")));
    }
    if k < 1 || k > n {
        return Err(MetricsError::Param(format!("k={k} outside 1..={n}")));
    }
    if n - c < k {
        return Ok(0.0);
    }
    match (binomial_u128(n - c, k), binomial_u128(n, k)) {
        (Some(fail), Some(total)) if total <= F64_EXACT_LIMIT => Ok(fail as f64 / total as f64),
        _ => Ok((ln_choose(n - c, k) - ln_choose(n, k)).exp()),
    }
}

/// Unbiased pass@k: the probability that a uniform size-k subset of the n
/// samples contains at least one fully passing sample.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricsError> {
    Ok(1.0 - fail_ratio(n, c, k)?)
}

/// Mean pass@k over repair pools keyed by failed original samples.
pub fn fix_at_k(pools: &[(u64, u64)], k: u64) -> Result<f64, MetricsError> {
    if pools.is_empty() {
        return Err(MetricsError::Empty("no repair pools".into()));
    }
    let mut total = 0.0;
    for &(n, c) in pools {
        total += pass_at_k(n, c, k)?;
    }
    Ok(total / pools.len() as f64)
}

/// Derive an independent RNG stream per resample from the master seed, so
/// resampling is schedule-independent.
pub(crate) fn derive_stream(master: u64, index: u64) -> ChaCha12Rng {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    ChaCha12Rng::seed_from_u64(z)
}

/// Filtered-submission ranking: public pass count descending, then the
/// original sample index ascending.
pub(crate) fn rank_candidates(subset: &mut [usize], public_pass: &[u32]) {
    subset.sort_by_key(|&i| (std::cmp::Reverse(public_pass[i]), i));
}

fn subset_success(
    subset: &mut [usize],
    public_pass: &[u32],
    full_pass: &[bool],
    n_submit: usize,
) -> bool {
    rank_candidates(subset, public_pass);
    subset.iter().take(n_submit).any(|&i| full_pass[i])
}

/// Success rate when k candidates are drawn without replacement, filtered
/// by public tests, and the top `n_submit` are submitted. Runs exact
/// enumeration when `C(n,k) <= ENUMERATION_LIMIT`, Monte Carlo otherwise.
pub fn pass_n_at_k(
    cell: &SampleCell,
    n_submit: u64,
    k: u64,
    resamples: u64,
    seed: u64,
) -> Result<f64, MetricsError> {
    let n = cell.n();
    if k < 1 || k > n {
        return Err(MetricsError::Param(format!("k={k} outside 1..={n}")));
    }
    if n_submit < 1 {
        return Err(MetricsError::Param("n_submit must be at least 1".into()));
    }
    if resamples < 1 {
        return Err(MetricsError::Param("resamples must be at least 1".into()));
    }
    let public_pass: Vec<u32> = cell.verdicts.iter().map(|v| v.public_pass_count).collect();
    let full_pass: Vec<bool> = cell.verdicts.iter().map(|v| v.full_pass).collect();
    let n_submit = n_submit as usize;

    let combos = binomial_u128(n, k);
    if let Some(total) = combos {
        if total <= ENUMERATION_LIMIT {
            // Lexicographic k-subset enumeration; failures are counted so
            // the n_submit = k case reproduces pass_at_k bit for bit.
            let k = k as usize;
            let n = n as usize;
            let mut indices: Vec<usize> = (0..k).collect();
            let mut failures: u128 = 0;
            loop {
                let mut subset = indices.clone();
                if !subset_success(&mut subset, &public_pass, &full_pass, n_submit) {
                    failures += 1;
                }
                // Advance to the next combination.
                let mut i = k;
                loop {
                    if i == 0 {
                        return Ok(1.0 - failures as f64 / total as f64);
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
    }

    let all: Vec<usize> = (0..n as usize).collect();
    let mut failures = 0u64;
    for r in 0..resamples {
        let mut rng = derive_stream(seed, r);
        let mut subset: Vec<usize> = all.choose_multiple(&mut rng, k as usize).copied().collect();
        if !subset_success(&mut subset, &public_pass, &full_pass, n_submit) {
            failures += 1;
        }
    }
    Ok(1.0 - failures as f64 / resamples as f64)
}

// ── Solved-set similarity and transitions ───────────────────────────────────

/// Jaccard similarity of solved sets, defined as 1 when both are empty.
pub fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    let intersection = a.intersection(b).count();
    intersection as f64 / union as f64
}

/// Row-normalized percentages of per-problem outcome transitions. Rows
/// with no problems in the source class stay undefined, never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    pub counts: [[u64; 4]; 4],
    pub row_percent: [[Option<f64>; 4]; 4],
}

pub fn transition_matrix(
    out_a: &BTreeMap<String, Outcome>,
    out_b: &BTreeMap<String, Outcome>,
) -> Result<TransitionMatrix, MetricsError> {
    if out_a.len() != out_b.len() || out_a.keys().any(|k| !out_b.contains_key(k)) {
        return Err(MetricsError::IndexMismatch(
            "transition sides cover different problems".into(),
        ));
    }
    let class_index = |o: Outcome| Outcome::ALL.iter().position(|&x| x == o).unwrap();
    let mut counts = [[0u64; 4]; 4];
    for (problem, &a) in out_a {
        let b = out_b[problem];
        counts[class_index(a)][class_index(b)] += 1;
    }
    let mut row_percent = [[None; 4]; 4];
    for (i, row) in counts.iter().enumerate() {
        let total: u64 = row.iter().sum();
        if total == 0 {
            continue;
        }
        for (j, &count) in row.iter().enumerate() {
            row_percent[i][j] = Some(100.0 * count as f64 / total as f64);
        }
    }
    Ok(TransitionMatrix {
        counts,
        row_percent,
    })
}

// ── Bootstrap and run aggregation ───────────────────────────────────────────

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let last = sorted.len() - 1;
    let pos = q.clamp(0.0, 1.0) * last as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval for a statistic over problems resampled
/// with replacement. Deterministic given the seed; `level = 0` degenerates
/// to the point estimate by convention.
pub fn bootstrap_ci(
    values: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    resamples: u64,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty(
            "bootstrap needs at least one value".into(),
        ));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(MetricsError::Param(format!("level {level} outside [0,1]")));
    }
    if resamples < 1 {
        return Err(MetricsError::Param("resamples must be at least 1".into()));
    }
    if level == 0.0 {
        let point = statistic(values);
        return Ok((point, point));
    }
    let n = values.len();
    let mut stats = Vec::with_capacity(resamples as usize);
    let mut scratch = vec![0.0; n];
    for r in 0..resamples {
        let mut rng = derive_stream(seed, r);
        for slot in scratch.iter_mut() {
            *slot = values[rand::Rng::gen_range(&mut rng, 0..n)];
        }
        stats.push(statistic(&scratch));
    }
    stats.sort_by(|a, b| a.partial_cmp(b).expect("finite statistics"));
    let lo = percentile(&stats, (1.0 - level) / 2.0);
    let hi = percentile(&stats, (1.0 + level) / 2.0);
    Ok((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunAggregate {
    pub mean: f64,
    /// Population-style standard deviation (divisor n), matching one-sigma
    /// bands over a handful of seeds.
    pub std: f64,
    pub divisor: u64,
}

pub fn aggregate_runs(values: &[f64]) -> Result<RunAggregate, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::Empty("no run values".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(RunAggregate {
        mean,
        std: var.sqrt(),
        divisor: values.len() as u64,
    })
}

/// Precision/recall view of sampling: precision is pass@1 and recall is
/// the headroom pass@K - pass@1.
pub fn precision_recall(n: u64, c: u64, k_big: u64) -> Result<(f64, f64), MetricsError> {
    let precision = pass_at_k(n, c, 1)?;
    let recall = pass_at_k(n, c, k_big)? - precision;
    Ok((precision, recall))
}
