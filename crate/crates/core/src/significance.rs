//! Bonferroni-style significance of an observed block.
//!
//! For a `k × l` block found in an `m × n` matrix the number of candidate
//! blocks is `C(m,k)·C(n,l)`; multiplying the per-block null tail by that
//! count bounds the chance of seeing anything as extreme anywhere.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::search::StatisticMode;
use crate::special::{ln_choose, ln_normal_sf};
use crate::thresholds::{self, Bound, RootPolicy, ThresholdQuery};

pub const DEFAULT_LEVEL: f64 = 0.05;

/// Closed-form size-threshold bound evaluated at the observed shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormBound {
    pub shape: &'static str,
    /// `s(n, τ)`, `t(n, τ)` or their rectangular counterparts (constant 0).
    pub threshold: f64,
    /// `⌊size − threshold⌋`.
    pub r: u64,
    pub bound: Bound,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificanceReport {
    pub mode: StatisticMode,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub l: usize,
    pub statistic: f64,
    /// `ln(C(m,k) · C(n,l))`.
    pub log_tests: f64,
    /// Log of the per-block null tail bound.
    pub log_per_block: f64,
    pub log_bound: f64,
    pub bound: f64,
    pub closed_form: Option<ClosedFormBound>,
    pub level: f64,
    pub significant: bool,
}

fn check_shape(m: usize, n: usize, k: usize, l: usize, level: f64) -> Result<()> {
    if m == 0 || n == 0 || k == 0 || l == 0 || k > m || l > n {
        return Err(invalid(format!(
            "a {k}x{l} block does not fit an {m}x{n} matrix"
        )));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(invalid(format!("level must lie in (0, 1), got {level}")));
    }
    Ok(())
}

fn finish(
    mode: StatisticMode,
    (m, n, k, l): (usize, usize, usize, usize),
    statistic: f64,
    log_per_block: f64,
    closed_form: Option<ClosedFormBound>,
    level: f64,
) -> SignificanceReport {
    let log_tests = ln_choose(m as u64, k as u64) + ln_choose(n as u64, l as u64);
    let total = Bound::from_log(log_tests + log_per_block);
    SignificanceReport {
        mode,
        m,
        n,
        k,
        l,
        statistic,
        log_tests,
        log_per_block,
        log_bound: total.log_value,
        bound: total.value,
        closed_form,
        level,
        significant: total.value < level,
    }
}

/// Significance of a `k × l` block with average `avg`: the per-block tail
/// is `1 − Φ(avg·√(kl))`.
pub fn average_significance(
    m: usize,
    n: usize,
    k: usize,
    l: usize,
    avg: f64,
    level: f64,
) -> Result<SignificanceReport> {
    check_shape(m, n, k, l, level)?;
    if !avg.is_finite() {
        return Err(invalid("average must be finite"));
    }
    let log_per_block = ln_normal_sf(avg * ((k * l) as f64).sqrt());
    let closed = if avg > 0.0 {
        average_closed_form(m, n, k, l, avg)
    } else {
        None
    };
    Ok(finish(
        StatisticMode::Average,
        (m, n, k, l),
        avg,
        log_per_block,
        closed,
        level,
    ))
}

fn average_closed_form(
    m: usize,
    n: usize,
    k: usize,
    l: usize,
    avg: f64,
) -> Option<ClosedFormBound> {
    if m == n && k == l {
        let s = thresholds::solve_s_with(n as u64, avg, RootPolicy::Widen)
            .ok()?
            .s;
        let r = offset(k, s)?;
        let bound = thresholds::prob_bound_avg(&ThresholdQuery::new(n as u64, avg).r(r)).ok()?;
        Some(ClosedFormBound {
            shape: "square",
            threshold: s,
            r,
            bound,
        })
    } else if k >= l {
        let q = ThresholdQuery::new(n as u64, avg)
            .alpha(m as f64 / n as f64)
            .beta(k as f64 / l as f64);
        let s = thresholds::rect_avg_threshold(&q, 0.0).ok()?;
        let r = offset(l, s)?;
        let bound = thresholds::rect_avg_bound(&q.r(r)).ok()?;
        Some(ClosedFormBound {
            shape: "rectangular",
            threshold: s,
            r,
            bound,
        })
    } else {
        None
    }
}

fn offset(size: usize, threshold: f64) -> Option<u64> {
    let r = (size as f64 - threshold).floor();
    (r >= 1.0).then_some(r as u64)
}

/// Significance of a `k × l` block with ANOVA residual `residual`.
///
/// With `ℓ = (k−1)(l−1)`, `ℓ·G` is χ²_ℓ under the null, so
/// `P(G ≤ τ) ≤ P(χ²_ℓ ≥ (2−τ)ℓ − 4)` (left/right tail comparison), which is
/// then bounded by the Chernoff inequality. When either step does not apply
/// the per-block bound is taken as 1.
pub fn anova_significance(
    m: usize,
    n: usize,
    k: usize,
    l: usize,
    residual: f64,
    level: f64,
) -> Result<SignificanceReport> {
    check_shape(m, n, k, l, level)?;
    if k < 2 || l < 2 {
        return Err(invalid("ANOVA significance needs at least a 2x2 block"));
    }
    if !(residual >= 0.0 && residual.is_finite()) {
        return Err(invalid(
            "ANOVA residual must be a nonnegative finite number",
        ));
    }
    let log_per_block = anova_log_tail(((k - 1) * (l - 1)) as u64, residual);
    let closed = anova_closed_form(m, n, k, l, residual);
    Ok(finish(
        StatisticMode::Anova,
        (m, n, k, l),
        residual,
        log_per_block,
        closed,
        level,
    ))
}

/// Log of the Chernoff-pipeline bound on `P(G ≤ τ)` for `ℓ` degrees of freedom.
pub fn anova_log_tail(ell: u64, tau: f64) -> f64 {
    let l = ell as f64;
    let t = l * tau;
    if ell < 3 || !(t > 0.0 && t < l - 2.0) {
        return 0.0;
    }
    let r = (2.0 - tau) * l - 4.0;
    thresholds::chi2_upper_tail_bound(ell, r).map_or(0.0, |b| b.log_value.min(0.0))
}

fn anova_closed_form(m: usize, n: usize, k: usize, l: usize, tau: f64) -> Option<ClosedFormBound> {
    if m == n && k == l {
        let t = thresholds::anova_threshold(n as u64, tau).ok()?;
        let r = offset(k, t)?;
        let bound = thresholds::prob_bound_anova(&ThresholdQuery::new(n as u64, tau).r(r)).ok()?;
        Some(ClosedFormBound {
            shape: "square",
            threshold: t,
            r,
            bound,
        })
    } else if k >= l {
        let q = ThresholdQuery::new(n as u64, tau)
            .alpha(m as f64 / n as f64)
            .beta(k as f64 / l as f64);
        let t = thresholds::rect_anova_threshold(&q, 0.0).ok()?;
        let r = offset(l, t)?;
        let bound = thresholds::rect_anova_bound(&q.r(r)).ok()?;
        Some(ClosedFormBound {
            shape: "rectangular",
            threshold: t,
            r,
            bound,
        })
    } else {
        None
    }
}
