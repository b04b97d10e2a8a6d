use nalgebra::{DMatrix, DVector};

use super::{Fit, FitDiagnostics, Sr3Params, Thresholder};

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub x: DVector<f64>,
    pub rank_deficient: bool,
}

/// Minimizes `|A x - b|² + alpha |x|²`, returning the minimum-norm solution
/// when the (augmented) system is rank deficient.
pub fn lstsq(a: &DMatrix<f64>, b: &DVector<f64>, alpha: f64) -> LeastSquares {
    let (m, n) = a.shape();
    if n == 0 {
        return LeastSquares {
            x: DVector::zeros(0),
            rank_deficient: false,
        };
    }
    let (aa, bb) = if alpha > 0.0 {
        let mut aa = DMatrix::zeros(m + n, n);
        aa.rows_mut(0, m).copy_from(a);
        aa.rows_mut(m, n).fill_diagonal(alpha.sqrt());
        let mut bb = DVector::zeros(m + n);
        bb.rows_mut(0, m).copy_from(b);
        (aa, bb)
    } else {
        (a.clone(), b.clone())
    };
    let rows = aa.nrows();
    let svd = aa.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * rows.max(n) as f64 * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let x = svd.solve(&bb, tol).unwrap_or_else(|_| DVector::zeros(n));
    LeastSquares {
        x,
        rank_deficient: rank < n,
    }
}

fn solve_on(theta: &DMatrix<f64>, y: &DVector<f64>, active: &[usize], alpha: f64) -> (DVector<f64>, bool) {
    let sub = theta.select_columns(active);
    let ls = lstsq(&sub, y, alpha);
    let mut full = DVector::zeros(theta.ncols());
    for (k, &i) in active.iter().enumerate() {
        full[i] = ls.x[k];
    }
    (full, ls.rank_deficient)
}

fn residual_norm(theta: &DMatrix<f64>, y: &DVector<f64>, c: &DVector<f64>) -> f64 {
    (y - theta * c).norm()
}

/// Sequentially thresholded ridge regression. Alternates a ridge solve on
/// the active columns with zeroing of coefficients smaller than `threshold`,
/// until the active set stops changing.
pub fn stlsq(theta: &DMatrix<f64>, y: &DVector<f64>, threshold: f64, alpha: f64, max_iter: usize) -> Fit {
    let n = theta.ncols();
    let mut active: Vec<usize> = (0..n).collect();
    let mut coef = DVector::zeros(n);
    let mut rank_deficient = false;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter.max(1) {
        iterations += 1;
        let (c, rd) = solve_on(theta, y, &active, alpha);
        rank_deficient = rd;
        coef = c;
        let next: Vec<usize> = active.iter().copied().filter(|&i| coef[i].abs() >= threshold).collect();
        for i in 0..n {
            if !next.contains(&i) {
                coef[i] = 0.0;
            }
        }
        if next == active {
            converged = true;
            break;
        }
        active = next;
        if active.is_empty() {
            converged = true;
            break;
        }
    }
    Fit {
        diagnostics: FitDiagnostics {
            residual_norm: residual_norm(theta, y, &coef),
            iterations,
            converged,
            rank_deficient,
        },
        coefficients: coef,
    }
}

fn prox(w: &DVector<f64>, p: &Sr3Params) -> DVector<f64> {
    let cut = p.cutoff();
    w.map(|v| match p.thresholder {
        Thresholder::L0 => {
            if v.abs() < cut {
                0.0
            } else {
                v
            }
        }
        Thresholder::L1 => v.signum() * (v.abs() - cut).max(0.0),
    })
}

/// Sparse relaxed regularized regression.
///
/// Minimizes `½|y − Θw|² + λR(u) + ½ν|w − u|²` by alternating an exact
/// `w`-solve with a proximal step on `u`. Stops when `u` moves less than
/// `tol` (max norm). The returned coefficients are the sparse `u`.
pub fn sr3(theta: &DMatrix<f64>, y: &DVector<f64>, p: &Sr3Params) -> Fit {
    let n = theta.ncols();
    let gram = theta.transpose() * theta + DMatrix::identity(n, n) * p.nu;
    let rhs0 = theta.transpose() * y;
    let chol = gram.cholesky().expect("Gram matrix plus nu*I is positive definite");
    let init = lstsq(theta, y, 0.0);
    let mut rank_deficient = init.rank_deficient;
    let mut u = prox(&init.x, p);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < p.max_iter {
        iterations += 1;
        let w = chol.solve(&(&rhs0 + &u * p.nu));
        let next = prox(&w, p);
        let delta = (&next - &u).amax();
        u = next;
        if delta < p.tol {
            converged = true;
            break;
        }
    }
    if p.unbias {
        // Refit on the support; drop terms that fall under the cutoff.
        let cut = p.cutoff();
        let mut active: Vec<usize> = (0..n).filter(|&i| u[i] != 0.0).collect();
        for _ in 0..n.max(1) {
            let (c, rd) = solve_on(theta, y, &active, 0.0);
            rank_deficient = rd;
            let next: Vec<usize> = active.iter().copied().filter(|&i| c[i].abs() >= cut).collect();
            u = c;
            if next == active {
                break;
            }
            active = next;
        }
        for i in 0..n {
            if u[i].abs() < cut {
                u[i] = 0.0;
            }
        }
    }
    Fit {
        diagnostics: FitDiagnostics {
            residual_norm: residual_norm(theta, y, &u),
            iterations,
            converged,
            rank_deficient,
        },
        coefficients: u,
    }
}

/// Orthogonal matching pursuit: greedily adds the column with the largest
/// normalized correlation to the residual and refits on the active set.
pub fn omp(theta: &DMatrix<f64>, y: &DVector<f64>, n_nonzero: usize) -> Fit {
    let n = theta.ncols();
    let norms: Vec<f64> = theta.column_iter().map(|c| c.norm()).collect();
    let mut active: Vec<usize> = Vec::new();
    let mut coef = DVector::zeros(n);
    let mut residual = y.clone();
    let mut rank_deficient = false;
    let y_norm = y.norm();
    while active.len() < n_nonzero.min(n) {
        if residual.norm() <= 1e-12 * y_norm {
            break;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in (0..n).filter(|j| !active.contains(j) && norms[*j] > 0.0) {
            let score = theta.column(j).dot(&residual).abs() / norms[j];
            if best.is_none_or(|(_, s)| score > s) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else { break };
        active.push(j);
        let (c, rd) = solve_on(theta, y, &active, 0.0);
        rank_deficient = rd;
        coef = c;
        residual = y - theta * &coef;
    }
    Fit {
        diagnostics: FitDiagnostics {
            residual_norm: residual.norm(),
            iterations: active.len(),
            converged: true,
            rank_deficient,
        },
        coefficients: coef,
    }
}
