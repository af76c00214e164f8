//! Seeded Monte Carlo studies: the square and rectangular search
//! simulations, exhaustive bound validation at small `n`, planted-signal
//! spectral checks, the χ² tail-comparison scan and the χ² law of the ANOVA
//! residual.
//!
//! Every random draw descends from a master seed through
//! [`rng::split`](crate::rng::split), keyed by the row's `k` or trial number,
//! so rows are independent of scheduling and can be replayed one at a time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::time::Instant;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::matrix::{anova_block, embed_signal, gaussian_matrix, PlantedSignal, SubmatrixIndex};
use crate::rng;
use crate::search::{max_k_statistic, multi_restart_search, SearchConfig, StatisticMode};
use crate::special;
use crate::spectral::{self, top_singular_triplet};
use crate::thresholds::{self, RootPolicy, ThresholdQuery, DEFAULT_LOWER_CONSTANT};

/// Header of the simulation CSV; field order of [`ExperimentRecord`].
pub const CSV_HEADER: &str = "experiment_id,n,m,k,l,tau_k,threshold_s,interval_lower,\
interval_upper,seed,restarts,wall_time_ms,error";

/// One simulated `(τ_k, k)` point.
///
/// `m × n` is the matrix, `k × l` the searched block (rows × columns).
/// `seed` is the row seed; the matrix uses `split(seed, 0)` and the search
/// master seed is `split(seed, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub experiment_id: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub tau_k: f64,
    pub threshold_s: Option<f64>,
    pub interval_lower: Option<f64>,
    pub interval_upper: Option<f64>,
    pub seed: u64,
    pub restarts: usize,
    pub wall_time_ms: u64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationOptions {
    /// Record wall time; off by default so reruns are byte-identical.
    pub record_timing: bool,
    /// Lower-end constant of the concentration interval (default `12 ln 2`).
    pub lower_constant: f64,
    /// Only points with `τ_k` above this enter containment checks and plots.
    pub min_tau: Option<f64>,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            record_timing: false,
            lower_constant: DEFAULT_LOWER_CONSTANT,
            min_tau: Some(0.5),
        }
    }
}

/// Which experiment produced a record, encoded in `experiment_id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExperimentKind {
    Square { lower_constant: f64 },
    Rect { alpha: f64, beta: f64, c1: f64 },
}

impl ExperimentKind {
    pub fn id(&self) -> String {
        match *self {
            ExperimentKind::Square { lower_constant }
                if lower_constant == DEFAULT_LOWER_CONSTANT =>
            {
                "square".to_string()
            }
            ExperimentKind::Square { lower_constant } => {
                format!("square;lower_constant={lower_constant}")
            }
            ExperimentKind::Rect { alpha, beta, c1 } => {
                format!("rect;alpha={alpha};beta={beta};c1={c1}")
            }
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        let mut parts = id.split(';');
        let name = parts.next().unwrap_or_default();
        let mut params = BTreeMap::new();
        for p in parts {
            let (key, value) = p
                .split_once('=')
                .ok_or_else(|| Error::Data(format!("bad experiment parameter {p:?} in {id:?}")))?;
            let value: f64 = value
                .parse()
                .map_err(|_| Error::Data(format!("bad number {value:?} in {id:?}")))?;
            params.insert(key, value);
        }
        let get = |key: &str| {
            params
                .get(key)
                .copied()
                .ok_or_else(|| Error::Data(format!("experiment id {id:?} lacks {key}")))
        };
        match name {
            "square" => Ok(ExperimentKind::Square {
                lower_constant: params
                    .get("lower_constant")
                    .copied()
                    .unwrap_or(DEFAULT_LOWER_CONSTANT),
            }),
            "rect" => Ok(ExperimentKind::Rect {
                alpha: get("alpha")?,
                beta: get("beta")?,
                c1: get("c1")?,
            }),
            _ => Err(Error::Data(format!("unknown experiment id {id:?}"))),
        }
    }
}

/// Seed of the row for block size `k`.
pub fn row_seed(master_seed: u64, k: usize) -> u64 {
    rng::split(master_seed, k as u64)
}

fn ceil_product(ratio: f64, size: usize) -> usize {
    // Guard against 20.000000000000004-style rounding before the ceiling.
    let p = ratio * size as f64;
    let r = p.round();
    if (p - r).abs() <= 1e-9 * p.abs().max(1.0) {
        r as usize
    } else {
        p.ceil() as usize
    }
}

fn sorted_unique(ks: &[usize]) -> Vec<usize> {
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    ks
}

/// Square study: for each `k`, a fresh `n × n` Gaussian matrix, the best
/// `k × k` average over `restarts` searches, the size threshold at that
/// average (smallest root, see [`RootPolicy::Widen`]) and the concentration
/// interval around it. Rows come back sorted by `k`.
pub fn run_square_simulation(
    n: usize,
    ks: &[usize],
    restarts: usize,
    master_seed: u64,
    opts: &SimulationOptions,
) -> Result<Vec<ExperimentRecord>> {
    if ks.is_empty() || ks.iter().any(|&k| k == 0 || k > n) {
        return Err(invalid(format!("every k must lie in 1..={n}")));
    }
    if restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let kind = ExperimentKind::Square {
        lower_constant: opts.lower_constant,
    };
    sorted_unique(ks)
        .par_iter()
        .map(|&k| {
            simulate_row(
                &kind,
                n,
                n,
                k,
                k,
                restarts,
                row_seed(master_seed, k),
                opts.record_timing,
            )
        })
        .collect()
}

/// Rectangular study: `⌈αn⌉ × n` matrices searched for `⌈βk⌉ × k` blocks,
/// with the rectangular size threshold (additive constant `c1`) at the
/// observed average.
#[allow(clippy::too_many_arguments)]
pub fn run_rect_simulation(
    n: usize,
    alpha: f64,
    beta: f64,
    ks: &[usize],
    restarts: usize,
    master_seed: u64,
    c1: f64,
    opts: &SimulationOptions,
) -> Result<Vec<ExperimentRecord>> {
    if !(alpha > 0.0 && alpha.is_finite()) || !(beta >= 1.0 && beta.is_finite()) {
        return Err(invalid("need alpha > 0 and beta >= 1"));
    }
    let m = ceil_product(alpha, n);
    if ks.is_empty()
        || ks
            .iter()
            .any(|&k| k == 0 || k > n || ceil_product(beta, k) > m)
    {
        return Err(invalid(format!(
            "every k must satisfy k <= {n} and ceil(beta k) <= {m}"
        )));
    }
    if restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let kind = ExperimentKind::Rect { alpha, beta, c1 };
    sorted_unique(ks)
        .par_iter()
        .map(|&k| {
            let rows = ceil_product(beta, k);
            simulate_row(
                &kind,
                m,
                n,
                rows,
                k,
                restarts,
                row_seed(master_seed, k),
                opts.record_timing,
            )
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn simulate_row(
    kind: &ExperimentKind,
    m: usize,
    n: usize,
    k: usize,
    l: usize,
    restarts: usize,
    seed: u64,
    record_timing: bool,
) -> Result<ExperimentRecord> {
    let start = Instant::now();
    let w = gaussian_matrix(m, n, rng::split(seed, 0))?;
    let cfg = SearchConfig::new(k, l, restarts, rng::split(seed, 1));
    let tau_k = multi_restart_search(&w, &cfg)?.best_average;

    let mut record = ExperimentRecord {
        experiment_id: kind.id(),
        n,
        m,
        k,
        l,
        tau_k,
        threshold_s: None,
        interval_lower: None,
        interval_upper: None,
        seed,
        restarts,
        wall_time_ms: 0,
        error: None,
    };
    let theory = match *kind {
        ExperimentKind::Square { lower_constant } => {
            thresholds::solve_s_with(n as u64, tau_k, RootPolicy::Widen).and_then(|root| {
                let interval = thresholds::interval_around(root.s, tau_k, lower_constant)?;
                Ok((root.s, Some(interval)))
            })
        }
        ExperimentKind::Rect { alpha, beta, c1 } => {
            let q = ThresholdQuery::new(n as u64, tau_k).alpha(alpha).beta(beta);
            thresholds::rect_avg_threshold(&q, c1).map(|s| (s, None))
        }
    };
    match theory {
        Ok((s, interval)) => {
            record.threshold_s = Some(s);
            record.interval_lower = interval.map(|i| i.lower);
            record.interval_upper = interval.map(|i| i.upper);
        }
        Err(e) => record.error = Some(e.to_string()),
    }
    if record_timing {
        record.wall_time_ms = start.elapsed().as_millis() as u64;
    }
    Ok(record)
}

/// Recomputes a record from its id, dimensions and seed.
pub fn replay_record(record: &ExperimentRecord) -> Result<ExperimentRecord> {
    let kind = ExperimentKind::parse(&record.experiment_id)?;
    simulate_row(
        &kind,
        record.m,
        record.n,
        record.k,
        record.l,
        record.restarts,
        record.seed,
        false,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayMismatch {
    pub row: usize,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplayReport {
    pub total: usize,
    pub matched: usize,
    pub mismatches: Vec<ReplayMismatch>,
}

impl ReplayReport {
    pub fn is_exact(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Replays every record and compares serialized rows byte for byte
/// (wall time excluded).
pub fn replay(records: &[ExperimentRecord]) -> Result<ReplayReport> {
    let replayed: Vec<ExperimentRecord> = records
        .par_iter()
        .map(replay_record)
        .collect::<Result<_>>()?;
    let mut mismatches = Vec::new();
    for (row, (orig, again)) in records.iter().zip(&replayed).enumerate() {
        let expected = csv_row(&ExperimentRecord {
            wall_time_ms: 0,
            ..orig.clone()
        })?;
        let actual = csv_row(again)?;
        if expected != actual {
            mismatches.push(ReplayMismatch {
                row,
                expected,
                actual,
            });
        }
    }
    Ok(ReplayReport {
        total: records.len(),
        matched: records.len() - mismatches.len(),
        mismatches,
    })
}

fn csv_row(record: &ExperimentRecord) -> Result<String> {
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(&mut buf);
        w.serialize(record)?;
        w.flush()?;
    }
    String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
}

/// A point checked against the concentration interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Containment {
    pub k: usize,
    pub tau_k: f64,
    pub lower: f64,
    pub upper: f64,
    pub inside: bool,
}

/// Interval checks for square records with `τ_k > min_tau`. Records without
/// an interval are skipped.
pub fn containment(records: &[ExperimentRecord], min_tau: Option<f64>) -> Vec<Containment> {
    records
        .iter()
        .filter(|r| min_tau.is_none_or(|t| r.tau_k > t))
        .filter_map(|r| {
            let (lower, upper) = (r.interval_lower?, r.interval_upper?);
            let k = r.k as f64;
            Some(Containment {
                k: r.k,
                tau_k: r.tau_k,
                lower,
                upper,
                inside: lower <= k && k <= upper,
            })
        })
        .collect()
}

/// Linear interpolation of the observed `(τ_k, k)` curve at `tau`: the first
/// consecutive pair of rows whose averages straddle `tau`.
pub fn interpolate_k_at(records: &[ExperimentRecord], tau: f64) -> Option<f64> {
    let mut pts: Vec<(f64, f64)> = records.iter().map(|r| (r.k as f64, r.tau_k)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.windows(2).find_map(|w| {
        let ((k0, t0), (k1, t1)) = (w[0], w[1]);
        if t0 >= tau && tau >= t1 {
            Some(if t0 == t1 {
                k0
            } else {
                k0 + (k1 - k0) * (t0 - tau) / (t0 - t1)
            })
        } else {
            None
        }
    })
}

/// One row of the tidy `(τ, k, series)` plot table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlotPoint {
    pub tau: f64,
    pub k: f64,
    pub series: &'static str,
}

const PLOT_GRID: usize = 50;

/// Observed points plus the threshold curves over the observed `τ` range.
/// Square records get `s`, `lower` and `upper`; rectangular ones get the
/// rectangular threshold (size in columns).
pub fn plot_data(records: &[ExperimentRecord], opts: &SimulationOptions) -> Result<Vec<PlotPoint>> {
    let kept: Vec<&ExperimentRecord> = records
        .iter()
        .filter(|r| opts.min_tau.is_none_or(|t| r.tau_k > t))
        .collect();
    let Some(first) = kept.first() else {
        return Ok(Vec::new());
    };
    let kind = ExperimentKind::parse(&first.experiment_id)?;
    let mut out = Vec::new();
    for r in &kept {
        let size = if matches!(kind, ExperimentKind::Rect { .. }) {
            r.l
        } else {
            r.k
        };
        out.push(PlotPoint {
            tau: r.tau_k,
            k: size as f64,
            series: "observed",
        });
    }
    let lo = kept.iter().map(|r| r.tau_k).fold(f64::INFINITY, f64::min);
    let hi = kept
        .iter()
        .map(|r| r.tau_k)
        .fold(f64::NEG_INFINITY, f64::max);
    let n = first.n as u64;
    for i in 0..PLOT_GRID {
        let tau = if PLOT_GRID == 1 || hi == lo {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (PLOT_GRID - 1) as f64
        };
        match kind {
            ExperimentKind::Square { lower_constant } => {
                if let Ok(root) = thresholds::solve_s_with(n, tau, RootPolicy::Widen) {
                    let iv = thresholds::interval_around(root.s, tau, lower_constant)?;
                    out.push(PlotPoint {
                        tau,
                        k: root.s,
                        series: "s",
                    });
                    out.push(PlotPoint {
                        tau,
                        k: iv.lower,
                        series: "lower",
                    });
                    out.push(PlotPoint {
                        tau,
                        k: iv.upper,
                        series: "upper",
                    });
                }
            }
            ExperimentKind::Rect { alpha, beta, c1 } => {
                let q = ThresholdQuery::new(n, tau).alpha(alpha).beta(beta);
                if let Ok(s) = thresholds::rect_avg_threshold(&q, c1) {
                    out.push(PlotPoint {
                        tau,
                        k: s,
                        series: "rect_threshold",
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Exceedance frequency of one size level against its bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundRow {
    /// Size level: the row checks `P̂(K ≥ j)`.
    pub j: usize,
    /// Offset with `j = ⌈threshold + r⌉`.
    pub r: u64,
    pub exceed_count: usize,
    pub empirical: f64,
    pub std_error: f64,
    pub bound: f64,
    pub log_bound: f64,
    /// `empirical ≤ bound + 3·std_error`.
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundValidation {
    pub mode: StatisticMode,
    pub n: usize,
    pub tau: f64,
    pub trials: usize,
    pub master_seed: u64,
    /// `s(n, τ)` (average mode) or `t(n, τ)` (ANOVA mode).
    pub threshold: f64,
    /// Number of trials by exact `K_τ` / `L_τ`.
    pub histogram: BTreeMap<usize, usize>,
    pub rows: Vec<BoundRow>,
}

impl BoundValidation {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }
}

/// Largest matrix size accepted by [`run_bound_validation`].
pub const MAX_VALIDATION_N: usize = 12;

/// Exact `K_τ` (or `L_τ`) over `trials` independent `n × n` matrices,
/// compared level by level with the first-moment bound.
pub fn run_bound_validation(
    n: usize,
    tau: f64,
    trials: usize,
    master_seed: u64,
    mode: StatisticMode,
) -> Result<BoundValidation> {
    if !(2..=MAX_VALIDATION_N).contains(&n) {
        return Err(invalid(format!(
            "bound validation needs 2 <= n <= {MAX_VALIDATION_N}, got {n}"
        )));
    }
    if trials == 0 {
        return Err(invalid("trials must be at least 1"));
    }
    let threshold = match mode {
        StatisticMode::Average => thresholds::solve_s_with(n as u64, tau, RootPolicy::Widen)?.s,
        StatisticMode::Anova => thresholds::anova_threshold(n as u64, tau)?,
    };
    let stats: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let w = gaussian_matrix(n, n, rng::split(master_seed, t as u64))?;
            max_k_statistic(&w, tau, mode)
        })
        .collect::<Result<_>>()?;

    let mut histogram = BTreeMap::new();
    for &s in &stats {
        *histogram.entry(s).or_insert(0) += 1;
    }
    let mut rows = Vec::new();
    for r in 1..=(n as u64 + threshold.abs().ceil() as u64 + 1) {
        let level = (threshold + r as f64).ceil();
        if level < 1.0 {
            continue;
        }
        if level > n as f64 {
            break;
        }
        let j = level as usize;
        let q = ThresholdQuery::new(n as u64, tau).r(r);
        let bound = match mode {
            StatisticMode::Average => thresholds::prob_bound_avg(&q)?,
            StatisticMode::Anova => thresholds::prob_bound_anova(&q)?,
        };
        let exceed_count = stats.iter().filter(|&&s| s >= j).count();
        let p = exceed_count as f64 / trials as f64;
        let se = (p * (1.0 - p) / trials as f64).sqrt();
        rows.push(BoundRow {
            j,
            r,
            exceed_count,
            empirical: p,
            std_error: se,
            bound: bound.value,
            log_bound: bound.log_value,
            ok: p <= bound.value + 3.0 * se,
        });
    }
    Ok(BoundValidation {
        mode,
        n,
        tau,
        trials,
        master_seed,
        threshold,
        histogram,
        rows,
    })
}

/// One planted-signal trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub l: usize,
    pub amplitude: f64,
    pub s1_null: f64,
    pub s1_alt: f64,
    /// `amplitude · √(kl)`, the Frobenius norm of the planted signal.
    pub frobenius_bound: f64,
    /// `s₁(W) / √n`.
    pub geman_ratio: f64,
    /// `aᵗu₁ / √k` for the planted row indicator `a`.
    pub overlap_row: f64,
    /// `bᵗv₁ / √l` for the planted column indicator `b`.
    pub overlap_col: f64,
    /// `|s₁(Y) − s₁(W)| ≤ frobenius_bound`.
    pub ok: bool,
    pub converged: bool,
}

/// Per trial: draw `W` (`⌈αn⌉ × n`), plant `amplitude` on a random `k × l`
/// block to get `Y`, and compare the top singular values and vectors.
pub fn run_spectral_experiment(
    n: usize,
    alpha: f64,
    k: usize,
    l: usize,
    amplitude: f64,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<SpectralRecord>> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid("alpha must be positive"));
    }
    let m = ceil_product(alpha, n);
    if n == 0 || k == 0 || l == 0 || k > m || l > n {
        return Err(invalid(format!(
            "a {k}x{l} block does not fit an {m}x{n} matrix"
        )));
    }
    if !amplitude.is_finite() {
        return Err(invalid("amplitude must be finite"));
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = rng::split(master_seed, trial as u64);
            let w = gaussian_matrix(m, n, rng::split(seed, 0))?;
            let mut picker = rng::chacha(rng::split(seed, 1));
            let rows = sample(&mut picker, m, k).into_vec();
            let cols = sample(&mut picker, n, l).into_vec();
            let index = SubmatrixIndex::new(rows, cols)?;
            let y = embed_signal(&w, &PlantedSignal::new(index.clone(), amplitude)?)?;
            let start = rng::split(seed, 2);
            let null = top_singular_triplet(
                &w,
                start,
                spectral::DEFAULT_TOL,
                spectral::DEFAULT_MAX_ITERS,
            );
            let alt = top_singular_triplet(
                &y,
                start,
                spectral::DEFAULT_TOL,
                spectral::DEFAULT_MAX_ITERS,
            );
            let frobenius_bound = amplitude.abs() * ((k * l) as f64).sqrt();
            let overlap_row =
                index.rows().iter().map(|&i| alt.left[i]).sum::<f64>() / (k as f64).sqrt();
            let overlap_col =
                index.cols().iter().map(|&j| alt.right[j]).sum::<f64>() / (l as f64).sqrt();
            Ok(SpectralRecord {
                trial,
                seed,
                n,
                m,
                k,
                l,
                amplitude,
                s1_null: null.value,
                s1_alt: alt.value,
                frobenius_bound,
                geman_ratio: null.value / (n as f64).sqrt(),
                overlap_row,
                overlap_col,
                ok: (alt.value - null.value).abs() <= frobenius_bound,
                converged: null.converged && alt.converged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralSummary {
    pub trials: usize,
    pub mean_geman_ratio: f64,
    /// `1 + √α`.
    pub geman_limit: f64,
    pub mean_abs_overlap_row: f64,
    pub mean_abs_overlap_col: f64,
    pub all_ok: bool,
    pub all_converged: bool,
}

pub fn summarize_spectral(records: &[SpectralRecord]) -> SpectralSummary {
    let t = records.len().max(1) as f64;
    let alpha = records.first().map_or(1.0, |r| r.m as f64 / r.n as f64);
    SpectralSummary {
        trials: records.len(),
        mean_geman_ratio: records.iter().map(|r| r.geman_ratio).sum::<f64>() / t,
        geman_limit: 1.0 + alpha.sqrt(),
        mean_abs_overlap_row: records.iter().map(|r| r.overlap_row.abs()).sum::<f64>() / t,
        mean_abs_overlap_col: records.iter().map(|r| r.overlap_col.abs()).sum::<f64>() / t,
        all_ok: records.iter().all(|r| r.ok),
        all_converged: records.iter().all(|r| r.converged),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Chi2Violation {
    pub ell: u64,
    pub t: f64,
    pub left: f64,
    pub right: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Chi2ScanReport {
    pub ell_max: u64,
    pub grid_points: usize,
    pub checked: usize,
    pub violations: Vec<Chi2Violation>,
    /// `(P(X ≤ 1), P(X ≥ 3))` for four degrees of freedom.
    pub reference_left: f64,
    pub reference_right: f64,
}

impl Chi2ScanReport {
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{} violations in {} checks (ell 3..={}, {} points each); ell=4 t=1: left={:.5} right={:.5}",
            self.violations.len(),
            self.checked,
            self.ell_max,
            self.grid_points,
            self.reference_left,
            self.reference_right
        );
        s
    }
}

/// Checks `P(X ≤ t) ≤ P(X ≥ 2ℓ − 4 − t)` for `X ~ χ²_ℓ` at `grid_points`
/// evenly spaced interior points of `(0, ℓ − 2)`, for every `ℓ` in `3..=ell_max`.
pub fn run_chi2_lemma_scan(ell_max: u64, grid_points: usize) -> Result<Chi2ScanReport> {
    if ell_max < 3 {
        return Err(invalid("ell_max must be at least 3"));
    }
    if grid_points == 0 {
        return Err(invalid("grid_points must be at least 1"));
    }
    let mut violations = Vec::new();
    let mut checked = 0;
    for ell in 3..=ell_max {
        let span = ell as f64 - 2.0;
        for i in 1..=grid_points {
            let t = span * i as f64 / (grid_points + 1) as f64;
            let (left, right) = thresholds::chi2_left_right_check(ell, t)?;
            checked += 1;
            if left > right {
                violations.push(Chi2Violation {
                    ell,
                    t,
                    left,
                    right,
                });
            }
        }
    }
    let (reference_left, reference_right) = thresholds::chi2_left_right_check(4, 1.0)?;
    Ok(Chi2ScanReport {
        ell_max,
        grid_points,
        checked,
        violations,
        reference_left,
        reference_right,
    })
}

/// Kolmogorov–Smirnov comparison of `(k−1)²·G` over fresh `k × k` Gaussian
/// blocks with the χ² law on `(k−1)²` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    pub samples: usize,
    pub dof: usize,
    pub statistic: f64,
    /// Asymptotic 1% critical value `1.6276 / √samples`.
    pub critical_1pct: f64,
}

impl KsReport {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical_1pct
    }
}

/// 0.99 quantile of the Kolmogorov distribution.
pub const KOLMOGOROV_99: f64 = 1.627_61;

pub fn anova_chi2_ks(blocks: usize, k: usize, master_seed: u64) -> Result<KsReport> {
    if k < 2 || blocks == 0 {
        return Err(invalid("need k >= 2 and at least one block"));
    }
    let dof = (k - 1) * (k - 1);
    let mut samples: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(k * k), Vec::with_capacity(k)),
            |(block, scratch), b| {
                let seed = rng::split(master_seed, b as u64);
                block.clear();
                block.extend((0..(k * k) as u64).map(|c| rng::standard_normal_at(seed, c)));
                dof as f64 * anova_block(block, k, k, scratch)
            },
        )
        .collect();
    samples.sort_by(f64::total_cmp);
    let nf = blocks as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let f = special::chi2_cdf(dof as f64, x)?;
        d = d.max((i + 1) as f64 / nf - f).max(f - i as f64 / nf);
    }
    Ok(KsReport {
        samples: blocks,
        dof,
        statistic: d,
        critical_1pct: KOLMOGOROV_99 / nf.sqrt(),
    })
}

/// Writes rows as CSV with a header row and LF line endings.
pub fn write_csv<T: Serialize, W: Write>(rows: &[T], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Simulation records as CSV; the header is written even for an empty batch.
pub fn write_records_csv<W: Write>(records: &[ExperimentRecord], mut writer: W) -> Result<()> {
    if records.is_empty() {
        writeln!(writer, "{CSV_HEADER}")?;
        return Ok(());
    }
    write_csv(records, writer)
}

pub fn read_records_csv<R: Read>(reader: R) -> Result<Vec<ExperimentRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Data(format!("unexpected header {header:?}")));
    }
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Pretty JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut writer: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(writer)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn experiment_ids_round_trip() {
        for kind in [
            ExperimentKind::Square {
                lower_constant: DEFAULT_LOWER_CONSTANT,
            },
            ExperimentKind::Square {
                lower_constant: 6.5,
            },
            ExperimentKind::Rect {
                alpha: 20.0,
                beta: 5.0,
                c1: 0.0,
            },
            ExperimentKind::Rect {
                alpha: 0.1 + 0.2,
                beta: 1.25,
                c1: -3.5,
            },
        ] {
            assert_eq!(ExperimentKind::parse(&kind.id()).unwrap(), kind);
        }
        assert_eq!(
            ExperimentKind::Square {
                lower_constant: DEFAULT_LOWER_CONSTANT
            }
            .id(),
            "square"
        );
        assert!(ExperimentKind::parse("rect;alpha=2").is_err());
        assert!(ExperimentKind::parse("cube").is_err());
    }

    #[test]
    fn ceil_product_tolerates_rounding() {
        assert_eq!(ceil_product(20.0, 100), 2000);
        assert_eq!(ceil_product(0.1 * 3.0, 10), 3);
        assert_eq!(ceil_product(1.5, 3), 5);
    }

    #[test]
    fn header_matches_record_fields() {
        let mut buf = Vec::new();
        write_records_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), CSV_HEADER);
        let recs = run_square_simulation(20, &[2], 3, 1, &SimulationOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
        assert!(!text.contains('\r'));
        assert_eq!(read_records_csv(text.as_bytes()).unwrap(), recs);
    }

    #[test]
    fn error_rows_are_kept() {
        // Full-matrix averages near zero have no size threshold; those rows
        // survive with an error message instead of aborting the batch.
        let recs = run_square_simulation(6, &[1, 6], 1, 3, &SimulationOptions::default()).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(r.tau_k.is_finite());
            assert_eq!(r.error.is_some(), r.threshold_s.is_none());
        }
        let negative = (0..50)
            .map(|seed| {
                run_square_simulation(6, &[6], 1, seed, &SimulationOptions::default()).unwrap()
            })
            .find(|r| r[0].tau_k <= 0.0)
            .expect("some seed gives a negative grand mean");
        assert!(negative[0].error.is_some());
    }

    #[test]
    fn interpolation() {
        let rec = |k, tau_k| ExperimentRecord {
            experiment_id: "square".into(),
            n: 10,
            m: 10,
            k,
            l: k,
            tau_k,
            threshold_s: None,
            interval_lower: None,
            interval_upper: None,
            seed: 0,
            restarts: 1,
            wall_time_ms: 0,
            error: None,
        };
        let recs = vec![rec(1, 3.0), rec(2, 2.0), rec(3, 1.0)];
        assert_eq!(interpolate_k_at(&recs, 1.5), Some(2.5));
        assert_eq!(interpolate_k_at(&recs, 5.0), None);
    }

    #[test]
    fn chi2_scan_small() {
        let r = run_chi2_lemma_scan(10, 5).unwrap();
        assert_eq!(r.checked, 8 * 5);
        assert!(r.violations.is_empty());
        assert!(run_chi2_lemma_scan(2, 5).is_err());
    }

    #[test]
    fn bound_validation_domain() {
        assert!(run_bound_validation(13, 2.0, 10, 0, StatisticMode::Average).is_err());
        assert!(run_bound_validation(8, 2.0, 0, 0, StatisticMode::Average).is_err());
        assert!(run_bound_validation(8, 1.2, 10, 0, StatisticMode::Anova).is_err());
    }
}
