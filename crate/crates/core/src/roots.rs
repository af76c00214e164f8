//! Bracketing root finders for scalar functions.

use crate::error::{invalid, Error, Result};

/// A located root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Stopping rule shared by both solvers: stop once `|f(x)| ≤ ftol` or the
/// bracket has shrunk to a few ulps.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub ftol: f64,
    pub max_iter: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            ftol: 1e-10,
            max_iter: 200,
        }
    }
}

fn check_bracket(fa: f64, fb: f64, a: f64, b: f64) -> Result<()> {
    if !(fa.is_finite() && fb.is_finite()) {
        return Err(invalid(format!(
            "non-finite function value on bracket [{a}, {b}]"
        )));
    }
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(invalid(format!(
            "no sign change on [{a}, {b}]: f = {fa:e}, {fb:e}"
        )));
    }
    Ok(())
}

fn collapsed(a: f64, b: f64) -> bool {
    (b - a).abs() <= 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Plain bisection.
pub fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: Tolerance) -> Result<Root> {
    let mut fa = f(a);
    let fb = f(b);
    check_bracket(fa, fb, a, b)?;
    if fa == 0.0 {
        return Ok(Root {
            x: a,
            fx: 0.0,
            iterations: 0,
        });
    }
    if fb == 0.0 {
        return Ok(Root {
            x: b,
            fx: 0.0,
            iterations: 0,
        });
    }
    for it in 1..=tol.max_iter {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm.abs() <= tol.ftol || collapsed(a, b) {
            return Ok(Root {
                x: m,
                fx: fm,
                iterations: it,
            });
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    Err(Error::NoConvergence {
        method: "bisection",
        iterations: tol.max_iter,
    })
}

/// Brent's method: inverse quadratic interpolation and secant steps,
/// falling back to bisection whenever they stray.
pub fn brent<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<Root> {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    check_bracket(fa, fb, a, b)?;
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut bisected = true;

    for it in 1..=tol.max_iter {
        if fb.abs() <= tol.ftol || collapsed(a, b) {
            return Ok(Root {
                x: b,
                fx: fb,
                iterations: it - 1,
            });
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let out_of_range = !((s > lo.min(b)) && (s < lo.max(b)));
        let delta = 2.0 * f64::EPSILON * b.abs();
        if out_of_range
            || (bisected && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!bisected && (s - b).abs() >= (c - d).abs() / 2.0)
            || (bisected && (b - c).abs() < delta)
            || (!bisected && (c - d).abs() < delta)
        {
            s = 0.5 * (a + b);
            bisected = true;
        } else {
            bisected = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa.signum() == fs.signum() {
            a = s;
            fa = fs;
        } else {
            b = s;
            fb = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    if fb.abs() <= tol.ftol {
        return Ok(Root {
            x: b,
            fx: fb,
            iterations: tol.max_iter,
        });
    }
    Err(Error::NoConvergence {
        method: "brent",
        iterations: tol.max_iter,
    })
}
