//! Search for large-average `k × l` submatrices.
//!
//! [`alternating_search_once`] is the basic heuristic: start from a random
//! column set, then alternately keep the `k` rows with the largest sums over
//! the current columns and the `l` columns with the largest sums over the
//! current rows, until the pair stops changing. [`multi_restart_search`]
//! repeats it from independent seeds and keeps the best block.
//!
//! The exhaustive routines enumerate every candidate and serve as oracles at
//! desk scale.

use std::collections::BTreeMap;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::matrix::{anova_block, gather_into, submatrix_average, DataMatrix, SubmatrixIndex};
use crate::rng;

pub const DEFAULT_MAX_ITERS: usize = 1000;

/// Default cap on candidate evaluations for exhaustive enumeration.
pub const DEFAULT_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SearchConfig {
    pub k: usize,
    pub l: usize,
    pub restarts: usize,
    pub master_seed: u64,
    pub max_iters: usize,
}

impl SearchConfig {
    pub fn new(k: usize, l: usize, restarts: usize, master_seed: u64) -> Self {
        Self {
            k,
            l,
            restarts,
            master_seed,
            max_iters: DEFAULT_MAX_ITERS,
        }
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn validate_for(&self, w: &DataMatrix) -> Result<()> {
        check_shape(w, self.k, self.l)?;
        if self.restarts == 0 {
            return Err(invalid("restarts must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        Ok(())
    }

    /// Seed of restart `i`.
    pub fn restart_seed(&self, i: usize) -> u64 {
        rng::split(self.master_seed, i as u64)
    }
}

fn check_shape(w: &DataMatrix, k: usize, l: usize) -> Result<()> {
    if k == 0 || l == 0 || k > w.rows() || l > w.cols() {
        return Err(invalid(format!(
            "target {k}x{l} block does not fit a {}x{} matrix",
            w.rows(),
            w.cols()
        )));
    }
    Ok(())
}

/// Result of one alternating search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub index: SubmatrixIndex,
    /// `submatrix_average(w, index)`.
    pub average: f64,
    /// Full row-and-column updates performed, including the one that
    /// confirmed the fixed point.
    pub iterations: usize,
    /// False when `max_iters` ran out (a cycle under ties); `index` is then
    /// the best pair visited.
    pub converged: bool,
    /// Block average after the initial row selection and after every
    /// half-step that follows.
    pub trace: Vec<f64>,
}

/// One run of the alternating search from the random column subset drawn
/// from `seed`.
pub fn alternating_search_once(
    w: &DataMatrix,
    k: usize,
    l: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    alternating_search(w, k, l, seed, DEFAULT_MAX_ITERS)
}

pub fn alternating_search(
    w: &DataMatrix,
    k: usize,
    l: usize,
    seed: u64,
    max_iters: usize,
) -> Result<SearchOutcome> {
    check_shape(w, k, l)?;
    if max_iters == 0 {
        return Err(invalid("max_iters must be at least 1"));
    }
    let mut sampler = rng::chacha(seed);
    let mut cols = sample(&mut sampler, w.cols(), l).into_vec();
    cols.sort_unstable();

    let mut row_sums = vec![0.0; w.rows()];
    let mut col_sums = vec![0.0; w.cols()];
    let scale = (k * l) as f64;
    let mut trace = Vec::new();

    sums_over_cols(w, &cols, &mut row_sums);
    let mut rows = top_k(&row_sums, k);
    // Trace entries use one canonical summation order so that an unchanged
    // block always reports the identical value.
    let block_avg =
        |rows: &[usize], cols: &[usize]| crate::matrix::block_sum(w, rows, cols) / scale;
    trace.push(block_avg(&rows, &cols));

    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    for it in 1..=max_iters {
        sums_over_rows(w, &rows, &mut col_sums);
        let new_cols = top_k(&col_sums, l);
        trace.push(block_avg(&rows, &new_cols));

        sums_over_cols(w, &new_cols, &mut row_sums);
        let new_rows = top_k(&row_sums, k);
        trace.push(block_avg(&new_rows, &new_cols));

        if new_rows == rows && new_cols == cols {
            let index = SubmatrixIndex::from_sorted(rows, cols);
            let average = submatrix_average(w, &index)?;
            return Ok(SearchOutcome {
                index,
                average,
                iterations: it,
                converged: true,
                trace,
            });
        }
        rows = new_rows;
        cols = new_cols;
        let avg = *trace.last().expect("pushed above");
        if best.as_ref().is_none_or(|(b, _, _)| avg > *b) {
            best = Some((avg, rows.clone(), cols.clone()));
        }
    }
    let (_, rows, cols) = best.expect("at least one iteration");
    let index = SubmatrixIndex::from_sorted(rows, cols);
    let average = submatrix_average(w, &index)?;
    Ok(SearchOutcome {
        index,
        average,
        iterations: max_iters,
        converged: false,
        trace,
    })
}

/// Row sums restricted to `cols`.
fn sums_over_cols(w: &DataMatrix, cols: &[usize], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let row = w.row(i);
        *o = cols.iter().map(|&j| row[j]).sum();
    }
}

/// Column sums restricted to `rows`.
fn sums_over_rows(w: &DataMatrix, rows: &[usize], out: &mut [f64]) {
    out.fill(0.0);
    for &i in rows {
        for (o, v) in out.iter_mut().zip(w.row(i)) {
            *o += v;
        }
    }
}

/// Ids of the `k` largest sums, ties broken toward the smaller id, returned
/// in ascending order.
pub(crate) fn top_k(sums: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (0..sums.len()).collect();
    let order = |a: &usize, b: &usize| sums[*b].total_cmp(&sums[*a]).then(a.cmp(b));
    if k < ids.len() {
        ids.select_nth_unstable_by(k, order);
        ids.truncate(k);
    }
    ids.sort_unstable();
    ids
}

/// Best block over all restarts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    #[serde(flatten)]
    pub best_index: SubmatrixIndex,
    #[serde(rename = "average")]
    pub best_average: f64,
    #[serde(rename = "restarts")]
    pub restarts_run: usize,
    /// Number of restarts by iterations-to-fixed-point.
    pub iterations_histogram: BTreeMap<usize, usize>,
    /// Restarts that hit `max_iters` without reaching a fixed point.
    pub non_converged: usize,
}

/// Runs `cfg.restarts` independent alternating searches; restart `i` uses
/// seed `split(master_seed, i)`. The reduction keeps the highest average and
/// breaks ties toward the lexicographically smallest index, so the result
/// does not depend on scheduling.
pub fn multi_restart_search(w: &DataMatrix, cfg: &SearchConfig) -> Result<SearchResult> {
    cfg.validate_for(w)?;
    let outcomes: Vec<SearchOutcome> = (0..cfg.restarts)
        .into_par_iter()
        .map(|i| alternating_search(w, cfg.k, cfg.l, cfg.restart_seed(i), cfg.max_iters))
        .collect::<Result<_>>()?;

    let mut histogram = BTreeMap::new();
    let mut non_converged = 0;
    for o in &outcomes {
        *histogram.entry(o.iterations).or_insert(0) += 1;
        non_converged += usize::from(!o.converged);
    }
    let best = outcomes
        .into_iter()
        .reduce(|a, b| if better(&b, &a) { b } else { a })
        .expect("restarts >= 1");
    Ok(SearchResult {
        best_average: best.average,
        best_index: best.index,
        restarts_run: cfg.restarts,
        iterations_histogram: histogram,
        non_converged,
    })
}

fn better(a: &SearchOutcome, b: &SearchOutcome) -> bool {
    a.average > b.average || (a.average == b.average && a.index < b.index)
}

/// `C(m, k) · C(n, l)`, saturating.
pub fn candidate_count(m: usize, n: usize, k: usize, l: usize) -> u128 {
    binomial(m, k).saturating_mul(binomial(n, l))
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

fn check_budget(required: u128, budget: u128) -> Result<()> {
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// Advances `c` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// The `k × l` block with the largest average, by full enumeration.
/// Ties go to the lexicographically smallest `(rows, cols)`.
pub fn exhaustive_max_average(w: &DataMatrix, k: usize, l: usize) -> Result<(SubmatrixIndex, f64)> {
    exhaustive_max_average_with_budget(w, k, l, DEFAULT_BUDGET)
}

pub fn exhaustive_max_average_with_budget(
    w: &DataMatrix,
    k: usize,
    l: usize,
    budget: u128,
) -> Result<(SubmatrixIndex, f64)> {
    check_shape(w, k, l)?;
    check_budget(candidate_count(w.rows(), w.cols(), k, l), budget)?;
    let mut rows: Vec<usize> = (0..k).collect();
    let mut col_sums = vec![0.0; w.cols()];
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    loop {
        sums_over_rows(w, &rows, &mut col_sums);
        let mut cols: Vec<usize> = (0..l).collect();
        loop {
            let total: f64 = cols.iter().map(|&j| col_sums[j]).sum();
            if best.as_ref().is_none_or(|(b, _, _)| total > *b) {
                best = Some((total, rows.clone(), cols.clone()));
            }
            if !next_combination(&mut cols, w.cols()) {
                break;
            }
        }
        if !next_combination(&mut rows, w.rows()) {
            break;
        }
    }
    let (_, rows, cols) = best.expect("at least one candidate");
    let index = SubmatrixIndex::from_sorted(rows, cols);
    let avg = submatrix_average(w, &index)?;
    Ok((index, avg))
}

/// The `k × l` block with the smallest ANOVA residual, by full enumeration.
pub fn exhaustive_min_anova(w: &DataMatrix, k: usize, l: usize) -> Result<(SubmatrixIndex, f64)> {
    exhaustive_min_anova_with_budget(w, k, l, DEFAULT_BUDGET)
}

pub fn exhaustive_min_anova_with_budget(
    w: &DataMatrix,
    k: usize,
    l: usize,
    budget: u128,
) -> Result<(SubmatrixIndex, f64)> {
    check_shape(w, k, l)?;
    if k < 2 || l < 2 {
        return Err(invalid(format!(
            "ANOVA residual needs at least a 2x2 block, got {k}x{l}"
        )));
    }
    check_budget(candidate_count(w.rows(), w.cols(), k, l), budget)?;
    let mut rows: Vec<usize> = (0..k).collect();
    let mut block = Vec::with_capacity(k * l);
    let mut scratch = Vec::with_capacity(l);
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    loop {
        let mut cols: Vec<usize> = (0..l).collect();
        loop {
            gather_into(w, &rows, &cols, &mut block);
            let g = anova_block(&block, k, l, &mut scratch);
            if best.as_ref().is_none_or(|(b, _, _)| g < *b) {
                best = Some((g, rows.clone(), cols.clone()));
            }
            if !next_combination(&mut cols, w.cols()) {
                break;
            }
        }
        if !next_combination(&mut rows, w.rows()) {
            break;
        }
    }
    let (g, rows, cols) = best.expect("at least one candidate");
    Ok((SubmatrixIndex::from_sorted(rows, cols), g))
}

/// Which block statistic [`max_k_statistic`] thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticMode {
    /// `K_τ`: largest `k` with a `k × k` block of average `≥ τ`.
    Average,
    /// `L_τ`: largest `k ≥ 2` with a `k × k` block of ANOVA residual `≤ τ`.
    Anova,
}

/// Exact `K_τ` or `L_τ` by exhaustive enumeration of every square block
/// size. Returns 0 (average mode) or 1 (ANOVA mode) when nothing qualifies.
pub fn max_k_statistic(w: &DataMatrix, tau: f64, mode: StatisticMode) -> Result<usize> {
    max_k_statistic_with_budget(w, tau, mode, DEFAULT_BUDGET)
}

pub fn max_k_statistic_with_budget(
    w: &DataMatrix,
    tau: f64,
    mode: StatisticMode,
    budget: u128,
) -> Result<usize> {
    if !tau.is_finite() {
        return Err(invalid("tau must be finite"));
    }
    let size = w.rows().min(w.cols());
    let first = match mode {
        StatisticMode::Average => 1,
        StatisticMode::Anova => 2,
    };
    let required = (first..=size)
        .map(|k| candidate_count(w.rows(), w.cols(), k, k))
        .fold(0u128, u128::saturating_add);
    check_budget(required, budget)?;
    let mut answer = first - 1;
    for k in first..=size {
        let qualifies = match mode {
            StatisticMode::Average => exhaustive_max_average_with_budget(w, k, k, budget)?.1 >= tau,
            StatisticMode::Anova => exhaustive_min_anova_with_budget(w, k, k, budget)?.1 <= tau,
        };
        if qualifies {
            answer = k;
        }
    }
    Ok(answer)
}
