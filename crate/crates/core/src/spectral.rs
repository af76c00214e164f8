//! Top singular triplet by power iteration on the Gram operator `WᵀW`.

use crate::matrix::DataMatrix;
use crate::rng;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriplet {
    pub value: f64,
    /// Unit left singular vector (length `rows`).
    pub left: Vec<f64>,
    /// Unit right singular vector (length `cols`).
    pub right: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn mul(w: &DataMatrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = w.row(i).iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn mul_transpose(w: &DataMatrix, u: &[f64], out: &mut [f64]) {
    out.fill(0.0);
    for (i, &ui) in u.iter().enumerate() {
        for (o, a) in out.iter_mut().zip(w.row(i)) {
            *o += a * ui;
        }
    }
}

/// Largest singular value with its vectors. Stops when the relative change
/// in the singular value drops to `tol`; the start vector is Gaussian,
/// drawn from `seed`.
pub fn top_singular_triplet(
    w: &DataMatrix,
    seed: u64,
    tol: f64,
    max_iters: usize,
) -> SingularTriplet {
    let (m, n) = (w.rows(), w.cols());
    let mut v: Vec<f64> = (0..n as u64)
        .map(|c| rng::standard_normal_at(seed, c))
        .collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut u = vec![0.0; m];
    let mut sigma = 0.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        mul(w, &v, &mut u);
        let s = norm(&u);
        if s == 0.0 {
            converged = true;
            sigma = 0.0;
            break;
        }
        u.iter_mut().for_each(|x| *x /= s);
        mul_transpose(w, &u, &mut v);
        let t = norm(&v);
        v.iter_mut().for_each(|x| *x /= t);
        let done = (t - sigma).abs() <= tol * t;
        sigma = t;
        if done {
            converged = true;
            break;
        }
    }
    // Refresh u against the final v so (σ, u, v) are mutually consistent.
    mul(w, &v, &mut u);
    let s = norm(&u);
    if s > 0.0 {
        u.iter_mut().for_each(|x| *x /= s);
        sigma = s;
    }
    SingularTriplet {
        value: sigma,
        left: u,
        right: v,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::gaussian_matrix;

    #[test]
    fn rank_one_matrix() {
        // 3·x yᵀ with unit x, y has singular value 3.
        let x = [0.6, 0.8];
        let y = [1.0 / 3.0, 2.0 / 3.0, 2.0 / 3.0];
        let data: Vec<f64> = x
            .iter()
            .flat_map(|a| y.iter().map(move |b| 3.0 * a * b))
            .collect();
        let w = DataMatrix::new(2, 3, data).unwrap();
        let t = top_singular_triplet(&w, 1, 1e-12, 100);
        assert!(t.converged);
        assert!((t.value - 3.0).abs() < 1e-12);
        let dot: f64 = t.left.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_matrix() {
        let w =
            DataMatrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 2.0]]).unwrap();
        let t = top_singular_triplet(&w, 4, 1e-12, 1000);
        assert!((t.value - 5.0).abs() < 1e-10);
        assert!((t.right[1].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matches_frobenius_and_operator_bounds() {
        // s1 ≤ ‖W‖_F and s1 ≥ ‖W e_j‖ for every column j.
        let w = gaussian_matrix(40, 30, 12).unwrap();
        let t = top_singular_triplet(&w, 0, 1e-12, 10_000);
        let fro = norm(w.as_slice());
        let best_col = (0..30)
            .map(|j| (0..40).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        assert!(t.value <= fro && t.value >= best_col);
        // Wᵀu = σ v at convergence.
        let mut wt_u = vec![0.0; 30];
        mul_transpose(&w, &t.left, &mut wt_u);
        let resid: f64 = wt_u
            .iter()
            .zip(&t.right)
            .map(|(a, b)| (a - t.value * b).powi(2))
            .sum();
        assert!(resid.sqrt() < 1e-4 * t.value);
    }
}
