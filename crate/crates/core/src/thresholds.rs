//! Size thresholds and tail-probability bounds for large-average and
//! ANOVA-fit submatrices of an `n × n` (or `⌈αn⌉ × n`) Gaussian matrix.
//!
//! Every formula is evaluated in log space. Probability bounds are returned
//! as a [`Bound`] carrying both the clamped probability and the raw log value.

use std::f64::consts::{LN_2, PI};

use serde::Serialize;

use crate::error::{domain, invalid, Error, Result};
use crate::roots::{self, Tolerance};
use crate::special;

pub const DEFAULT_EPSILON: f64 = 0.01;

/// The constant `12 ln 2` in the lower end of the concentration interval.
pub const DEFAULT_LOWER_CONSTANT: f64 = 12.0 * LN_2;

/// Any lower constant strictly above `8 ln 2` keeps the interval valid.
pub const MIN_LOWER_CONSTANT: f64 = 8.0 * LN_2;

/// Inputs shared by the threshold and bound formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdQuery {
    /// Matrix size (column count in the rectangular setting).
    pub n: u64,
    pub tau: f64,
    /// Matrix aspect ratio: the matrix has `⌈αn⌉` rows.
    pub alpha: f64,
    /// Submatrix aspect ratio: targets are `⌈βk⌉ × k`.
    pub beta: f64,
    pub epsilon: f64,
    /// Offset above the threshold at which a bound is evaluated.
    pub r: u64,
}

impl ThresholdQuery {
    pub fn new(n: u64, tau: f64) -> Self {
        Self {
            n,
            tau,
            alpha: 1.0,
            beta: 1.0,
            epsilon: DEFAULT_EPSILON,
            r: 1,
        }
    }

    pub fn alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn r(mut self, r: u64) -> Self {
        self.r = r;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("n must be at least 2, got {}", self.n)));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(domain(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(domain(format!(
                "alpha must be positive, got {}",
                self.alpha
            )));
        }
        if !(self.beta >= 1.0 && self.beta.is_finite()) {
            return Err(domain(format!(
                "beta must be at least 1, got {}",
                self.beta
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(domain(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.r < 1 {
            return Err(invalid("r must be at least 1"));
        }
        Ok(())
    }

    /// As [`validate`](Self::validate), additionally requiring `0 < τ < 1`.
    pub fn validate_anova(&self) -> Result<()> {
        self.validate()?;
        h_of_tau(self.tau).map(|_| ())
    }

    fn ln_n(&self) -> f64 {
        (self.n as f64).ln()
    }
}

/// A probability bound: `value = min(1, exp(log_value))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    pub log_value: f64,
}

impl Bound {
    pub fn from_log(log_value: f64) -> Self {
        Self {
            value: log_value.min(0.0).exp(),
            log_value,
        }
    }

    /// True when the unclamped bound is below one.
    pub fn is_informative(&self) -> bool {
        self.log_value < 0.0
    }
}

/// A closed interval `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalBound {
    pub lower: f64,
    pub upper: f64,
}

impl IntervalBound {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(invalid(format!(
                "interval lower {lower} exceeds upper {upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// `ln φ_{n,τ}(s)`, the log of the Stirling surrogate for the square root of
/// the expected number of `s × s` submatrices with average at least `τ`.
///
/// The `(n+½)ln n − (n−s+½)ln(n−s)` pair is rewritten as
/// `−(n+½)·ln(1 − s/n) + s·ln(n−s)` so nothing large cancels.
pub fn log_phi(n: u64, tau: f64, s: f64) -> Result<f64> {
    let nf = n as f64;
    if !(s > 0.0 && s < nf) {
        return Err(domain(format!("s must lie in (0, {n}), got {s}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(domain(format!("tau must be positive, got {tau}")));
    }
    Ok(log_phi_unchecked(nf, tau, s))
}

fn log_phi_unchecked(n: f64, tau: f64, s: f64) -> f64 {
    -(n + 0.5) * (-s / n).ln_1p() + s * (n - s).ln()
        - (s + 0.5) * s.ln()
        - 0.25 * tau * tau * s * s
        - 0.5 * (2.0 * PI).ln()
}

/// How [`solve_s_with`] treats parameters whose root lies outside
/// `(2τ⁻² ln n, 4τ⁻² ln n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum RootPolicy {
    /// Only a root inside that bracket is accepted.
    #[default]
    Strict,
    /// Fall back to the smallest root in `(δ, n − δ)`.
    Widen,
}

/// Where a root was found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RootRegime {
    Bracket,
    Widened,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RootReport {
    pub s: f64,
    pub log_phi: f64,
    pub iterations: usize,
    pub regime: RootRegime,
}

const ROOT_TOL: Tolerance = Tolerance {
    ftol: 1e-10,
    max_iter: 200,
};
const WIDEN_DELTA: f64 = 1e-6;
const WIDEN_GRID: usize = 4000;

/// `s(n, τ)`: the root of `φ_{n,τ}(s) = 1` inside `(2τ⁻² ln n, 4τ⁻² ln n)`.
///
/// Returns [`Error::NoRoot`] when `ln φ` does not change sign on that
/// bracket; the error records the smallest root elsewhere in `(0, n)`, if any.
pub fn solve_s(n: u64, tau: f64) -> Result<f64> {
    solve_s_with(n, tau, RootPolicy::Strict).map(|r| r.s)
}

pub fn solve_s_with(n: u64, tau: f64, policy: RootPolicy) -> Result<RootReport> {
    if n < 2 {
        return Err(invalid(format!("n must be at least 2, got {n}")));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(domain(format!("tau must be positive, got {tau}")));
    }
    let nf = n as f64;
    let f = |s: f64| log_phi_unchecked(nf, tau, s);
    let ln_n = nf.ln();
    let lo = (2.0 * ln_n / (tau * tau)).max(WIDEN_DELTA);
    let hi = (4.0 * ln_n / (tau * tau)).min(nf - WIDEN_DELTA);

    let (f_lo, f_hi) = if lo < hi {
        (f(lo), f(hi))
    } else {
        (f64::NAN, f64::NAN)
    };
    if lo < hi && f_lo >= 0.0 && f_hi <= 0.0 {
        let root = roots::brent(f, lo, hi, ROOT_TOL)?;
        return Ok(RootReport {
            s: root.x,
            log_phi: root.fx,
            iterations: root.iterations,
            regime: RootRegime::Bracket,
        });
    }

    let widened = smallest_root(nf, tau)?;
    match (policy, widened) {
        (RootPolicy::Widen, Some(report)) => Ok(report),
        (_, widened) => Err(Error::NoRoot {
            lower: lo,
            upper: hi,
            value_lower: f_lo,
            value_upper: f_hi,
            regime: match widened {
                Some(_) => "no sign change on (2 ln n/tau^2, 4 ln n/tau^2); root lies outside it",
                None => "no sign change anywhere in (0, n)",
            }
            .to_string(),
            widened_root: widened.map(|r| r.s),
        }),
    }
}

/// First `+ → −` crossing of `ln φ` on a geometric grid over `(δ, n − δ)`.
fn smallest_root(n: f64, tau: f64) -> Result<Option<RootReport>> {
    let f = |s: f64| log_phi_unchecked(n, tau, s);
    let lo = WIDEN_DELTA;
    let hi = n - WIDEN_DELTA;
    if hi <= lo {
        return Ok(None);
    }
    let ratio = (hi / lo).powf(1.0 / WIDEN_GRID as f64);
    let mut a = lo;
    let mut fa = f(a);
    for i in 1..=WIDEN_GRID {
        let b = if i == WIDEN_GRID {
            hi
        } else {
            lo * ratio.powi(i as i32)
        };
        let fb = f(b);
        if fa > 0.0 && fb <= 0.0 {
            let root = roots::brent(f, a, b, ROOT_TOL)?;
            return Ok(Some(RootReport {
                s: root.x,
                log_phi: root.fx,
                iterations: root.iterations,
                regime: RootRegime::Widened,
            }));
        }
        a = b;
        fa = fb;
    }
    Ok(None)
}

/// `4τ⁻² ln n − 4τ⁻² ln(4τ⁻² ln n) + 4τ⁻²`, the large-`n` expansion of
/// `s(n, τ)` without its vanishing remainder.
pub fn asymptotic_s(n: u64, tau: f64) -> Result<f64> {
    ThresholdQuery::new(n, tau).validate()?;
    let a = 4.0 / (tau * tau);
    leading_terms(a, (n as f64).ln()).map(|v| v + a)
}

/// `a ln n − a ln(a ln n)`, requiring `a ln n > 1`.
fn leading_terms(a: f64, ln_n: f64) -> Result<f64> {
    let inner = a * ln_n;
    if !(inner > 1.0) {
        return Err(domain(format!(
            "inner logarithm argument {inner} must exceed 1"
        )));
    }
    Ok(inner - a * inner.ln())
}

/// First-moment bound on `P(K_τ ≥ s(n,τ) + r)`:
/// `(4/τ²) n^(−2r) (ln n/τ²)^(2r+ε)`.
pub fn prob_bound_avg(q: &ThresholdQuery) -> Result<Bound> {
    q.validate()?;
    let r = q.r as f64;
    let t2 = q.tau * q.tau;
    let ln_n = q.ln_n();
    Ok(Bound::from_log(
        (4.0 / t2).ln() - 2.0 * r * ln_n + (2.0 * r + q.epsilon) * (ln_n / t2).ln(),
    ))
}

/// `h(τ) = 1 − τ − ln(2 − τ)`, which takes the place of `τ²` for the ANOVA
/// criterion. Evaluated as `δ − ln(1 + δ)` with `δ = 1 − τ`.
pub fn h_of_tau(tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(domain(format!(
            "ANOVA threshold tau must lie in (0, 1), got {tau}"
        )));
    }
    let d = 1.0 - tau;
    Ok(d - d.ln_1p())
}

/// `t(n, τ)`, the size threshold for submatrices with ANOVA residual ≤ τ.
pub fn anova_threshold(n: u64, tau: f64) -> Result<f64> {
    ThresholdQuery::new(n, tau).validate_anova()?;
    let a = 4.0 / h_of_tau(tau)?;
    leading_terms(a, (n as f64).ln()).map(|v| v + a + 2.0)
}

/// Bound on `P(L_τ ≥ t(n,τ) + r)`: `(4/h)(ln n/h)^(2r+2+ε) n^(−2r)`.
pub fn prob_bound_anova(q: &ThresholdQuery) -> Result<Bound> {
    q.validate_anova()?;
    let h = h_of_tau(q.tau)?;
    let r = q.r as f64;
    let ln_n = q.ln_n();
    Ok(Bound::from_log(
        (4.0 / h).ln() + (2.0 * r + 2.0 + q.epsilon) * (ln_n / h).ln() - 2.0 * r * ln_n,
    ))
}

/// Size threshold for `⌈βk⌉ × k` submatrices of a `⌈αn⌉ × n` matrix with
/// average at least `τ`. The additive constant is only known to exist, so
/// the caller supplies it as `c1`.
pub fn rect_avg_threshold(q: &ThresholdQuery, c1: f64) -> Result<f64> {
    q.validate()?;
    let t2 = q.tau * q.tau;
    rect_threshold(q, t2, 2.0 / t2, c1)
}

/// ANOVA counterpart of [`rect_avg_threshold`]: `τ²` becomes `h(τ)` and the
/// aspect term is `h(τ)⁻¹ ln α`.
pub fn rect_anova_threshold(q: &ThresholdQuery, c2: f64) -> Result<f64> {
    q.validate_anova()?;
    let h = h_of_tau(q.tau)?;
    rect_threshold(q, h, 1.0 / h, c2)
}

fn rect_threshold(q: &ThresholdQuery, scale: f64, alpha_coef: f64, c: f64) -> Result<f64> {
    if !c.is_finite() {
        return Err(domain("threshold constant must be finite"));
    }
    let a = 2.0 * (1.0 + 1.0 / q.beta) / scale;
    leading_terms(a, q.ln_n()).map(|v| v + alpha_coef * q.alpha.ln() + c)
}

/// `n^(−(β+1)r) (ln n/τ²)^((β+1+ε)r)`.
pub fn rect_avg_bound(q: &ThresholdQuery) -> Result<Bound> {
    q.validate()?;
    Ok(rect_bound(q, q.tau * q.tau))
}

/// `n^(−(β+1)r) (ln n/h(τ))^((β+1+ε)r)`.
pub fn rect_anova_bound(q: &ThresholdQuery) -> Result<Bound> {
    q.validate_anova()?;
    Ok(rect_bound(q, h_of_tau(q.tau)?))
}

fn rect_bound(q: &ThresholdQuery, scale: f64) -> Bound {
    let r = q.r as f64;
    let ln_n = q.ln_n();
    Bound::from_log(
        -(q.beta + 1.0) * r * ln_n + (q.beta + 1.0 + q.epsilon) * r * (ln_n / scale).ln(),
    )
}

/// Inverts [`rect_avg_threshold`] in `τ`: returns the `τ` at which the
/// threshold equals `size`, on the branch where the threshold decreases
/// with `τ`. `q.tau` is ignored.
pub fn rect_avg_threshold_inverse(q: &ThresholdQuery, c1: f64, size: f64) -> Result<f64> {
    ThresholdQuery { tau: 1.0, ..*q }.validate()?;
    // With u = 1/τ² the threshold is c0·u·L − c0·u·ln(c0·u·L) + 2u·ln α + c1,
    // increasing in u up to u* where ln(c0·u*·L) = L − 1 + 2 ln α / c0.
    let ln_n = q.ln_n();
    let c0 = 2.0 * (1.0 + 1.0 / q.beta);
    let ln_alpha = q.alpha.ln();
    let at = |u: f64| {
        let inner = c0 * u * ln_n;
        inner - c0 * u * inner.ln() + 2.0 * u * ln_alpha + c1 - size
    };
    let u_min = 1.0 / (c0 * ln_n) * (1.0 + 1e-12);
    let u_max = (ln_n - 1.0 + 2.0 * ln_alpha / c0).exp() / (c0 * ln_n);
    if !(u_max > u_min) || at(u_min) > 0.0 || at(u_max) < 0.0 {
        return Err(domain(format!(
            "threshold size {size} is outside the decreasing branch of the rectangular threshold"
        )));
    }
    let tol = Tolerance {
        ftol: 1e-12,
        max_iter: 300,
    };
    let u = roots::brent(at, u_min, u_max, tol)?.x;
    Ok(1.0 / u.sqrt())
}

/// The concentration interval
/// `[s − 4/τ² − 12 ln 2/τ² − 4, s + 2]` around `s = s(n, τ)`.
pub fn theorem1_interval(n: u64, tau: f64) -> Result<IntervalBound> {
    theorem1_interval_with(n, tau, DEFAULT_LOWER_CONSTANT, RootPolicy::Strict)
}

/// As [`theorem1_interval`] with a different lower constant (any value
/// above `8 ln 2`) and root policy.
pub fn theorem1_interval_with(
    n: u64,
    tau: f64,
    lower_constant: f64,
    policy: RootPolicy,
) -> Result<IntervalBound> {
    if !(lower_constant > MIN_LOWER_CONSTANT && lower_constant.is_finite()) {
        return Err(domain(format!(
            "lower constant must exceed 8 ln 2 = {MIN_LOWER_CONSTANT}, got {lower_constant}"
        )));
    }
    let s = solve_s_with(n, tau, policy)?.s;
    interval_around(s, tau, lower_constant)
}

/// The interval for an already-solved `s`.
pub fn interval_around(s: f64, tau: f64, lower_constant: f64) -> Result<IntervalBound> {
    let t2 = tau * tau;
    IntervalBound::new(s - 4.0 / t2 - lower_constant / t2 - 4.0, s + 2.0)
}

/// Chernoff bound on `P(X ≥ r)` for `X ~ χ²_ℓ`:
/// `[(ℓ/r) e^(r/ℓ − 1)]^(−ℓ/2)`, defined for `r > ℓ`.
pub fn chi2_upper_tail_bound(ell: u64, r: f64) -> Result<Bound> {
    if ell < 1 {
        return Err(domain("degrees of freedom must be at least 1"));
    }
    let l = ell as f64;
    if !(r > l && r.is_finite()) {
        return Err(domain(format!("Chernoff bound needs r > {ell}, got {r}")));
    }
    Ok(Bound::from_log(-0.5 * l * ((l / r).ln() + r / l - 1.0)))
}

/// `(P(X ≤ t), P(X ≥ 2ℓ − 4 − t))` for `X ~ χ²_ℓ`; the first never exceeds
/// the second when `ℓ ≥ 3` and `0 < t < ℓ − 2`.
pub fn chi2_left_right_check(ell: u64, t: f64) -> Result<(f64, f64)> {
    if ell < 3 {
        return Err(domain(format!(
            "need at least 3 degrees of freedom, got {ell}"
        )));
    }
    let l = ell as f64;
    if !(t > 0.0 && t < l - 2.0) {
        return Err(domain(format!("t must lie in (0, {}), got {t}", l - 2.0)));
    }
    let left = special::chi2_cdf(l, t)?;
    let right = special::chi2_sf(l, 2.0 * l - 4.0 - t)?;
    Ok((left, right))
}
