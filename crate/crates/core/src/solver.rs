//! Ridge-penalized least squares and nonnegative least squares.
//!
//! NNLS uses a Lawson–Hanson style active-set algorithm on the normal
//! equations. The ridge penalty is handled by row augmentation (append
//! `sqrt(lambda) * I` rows to the design and zeros to the response), which on
//! the normal equations is simply `lambda` added to the Gram diagonal. The
//! algorithm returns an exact zero/positive support split; downstream
//! selective inference depends on that support being crisp.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Lse,
    Nnls,
}

#[derive(Debug, Clone, Copy)]
pub struct SolveOptions {
    pub method: Method,
    pub lambda: f64,
    /// Relative KKT / dual-feasibility tolerance.
    pub tol: f64,
    /// Active-set iteration cap; defaults to 3x the column count when zero.
    pub max_passes: usize,
}

impl SolveOptions {
    pub fn new(method: Method, lambda: f64) -> Self {
        SolveOptions { method, lambda, tol: 1e-10, max_passes: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    /// Coefficients in `vec(Gamma)` layout.
    pub gamma: Vec<f64>,
    /// Sorted indices of strictly positive entries (NNLS) or all (LSE).
    pub active_set: Vec<usize>,
    /// Penalized residual sum of squares.
    pub objective: f64,
    pub passes: usize,
}

#[derive(Debug, Clone)]
pub enum SolverError {
    RankDeficient,
    NonConvergence { best: Vec<f64>, kkt: KktResiduals, passes: usize },
    EmptyProblem,
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::RankDeficient => write!(
                f,
                "normal equations are singular at lambda = 0; use a positive ridge penalty"
            ),
            SolverError::NonConvergence { kkt, passes, .. } => write!(
                f,
                "active set did not converge after {passes} passes (stationarity {:.3e}, dual {:.3e})",
                kkt.stationarity, kkt.dual_infeasibility
            ),
            SolverError::EmptyProblem => write!(f, "design matrix has no columns"),
        }
    }
}

impl core::error::Error for SolverError {}

/// The four KKT residual components of the ridge NNLS problem.
#[derive(Debug, Clone, Copy, Default)]
pub struct KktResiduals {
    /// `max(-gamma_j, 0)` over all j.
    pub primal_violation: f64,
    /// Sup-norm of the gradient restricted to the support.
    pub stationarity: f64,
    /// Most negative dual value on the complement of the support.
    pub dual_infeasibility: f64,
    /// `|gamma^T mu|` with `mu = X^T X gamma - X^T y + lambda gamma`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal_violation
            .max(self.stationarity)
            .max(self.dual_infeasibility)
            .max(self.complementarity)
    }
}

/// Ridge least squares via the normal equations.
pub fn solve_lse_ridge(x: &Mat, y: &[f64], lambda: f64) -> Result<Solution, SolverError> {
    let p = x.cols();
    if p == 0 {
        return Err(SolverError::EmptyProblem);
    }
    let g = x.gram(lambda);
    let c = x.t_mul_vec(y);
    let gamma = linalg::spd_solve(&g, &c).ok_or(SolverError::RankDeficient)?;
    let objective = objective_value(x, y, lambda, &gamma);
    Ok(Solution { gamma, active_set: (0..p).collect(), objective, passes: 1 })
}

/// Ridge NNLS by the Lawson–Hanson active-set method on the normal equations.
///
/// Ties for the entering and leaving variable break toward the smallest
/// index (Bland's rule) so the iteration cannot cycle.
pub fn solve_nnls(
    x: &Mat,
    y: &[f64],
    lambda: f64,
    options: &SolveOptions,
) -> Result<Solution, SolverError> {
    let p = x.cols();
    if p == 0 {
        return Err(SolverError::EmptyProblem);
    }
    let max_passes = if options.max_passes == 0 { 3 * p.max(10) } else { options.max_passes };
    let g = x.gram(lambda);
    let c = x.t_mul_vec(y);
    let scale = c.iter().fold(0.0_f64, |a, &v| a.max(v.abs())).max(1.0);
    let tol = options.tol * scale;

    let mut gamma = vec![0.0_f64; p];
    let mut passive = vec![false; p];
    let mut passes = 0_usize;

    loop {
        // Dual vector w = c - (G gamma); entering variable is the most
        // positive w_j among the inactive set.
        let gv = mat_vec(&g, &gamma);
        let mut enter: Option<usize> = None;
        let mut best_w = tol;
        for j in 0..p {
            if passive[j] {
                continue;
            }
            let wj = c[j] - gv[j];
            if wj > best_w {
                best_w = wj;
                enter = Some(j);
            }
            // Bland tie-break: strictly-greater comparison keeps the
            // smallest index among exact ties.
        }
        let Some(j_enter) = enter else {
            break;
        };
        passive[j_enter] = true;

        // Inner loop: solve the passive-restricted LS and walk back any
        // variables that went nonpositive.
        loop {
            passes += 1;
            if passes > max_passes {
                let kkt = kkt_residuals(x, y, lambda, &gamma);
                return Err(SolverError::NonConvergence { best: gamma, kkt, passes });
            }
            let idx: Vec<usize> = (0..p).filter(|&j| passive[j]).collect();
            let z = match restricted_solve(&g, &c, &idx) {
                Some(z) => z,
                None => {
                    // Singular passive block: drop the entering variable.
                    passive[j_enter] = false;
                    break;
                }
            };
            if z.iter().all(|&v| v > 0.0) {
                for (&j, &v) in idx.iter().zip(&z) {
                    gamma[j] = v;
                }
                for j in 0..p {
                    if !passive[j] {
                        gamma[j] = 0.0;
                    }
                }
                break;
            }
            // Step toward z until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            let mut leave = usize::MAX;
            for (&j, &zj) in idx.iter().zip(&z) {
                if zj <= 0.0 {
                    let a = gamma[j] / (gamma[j] - zj);
                    if a < alpha - 1e-15 || (a < alpha + 1e-15 && j < leave) {
                        alpha = a;
                        leave = j;
                    }
                }
            }
            let alpha = alpha.clamp(0.0, 1.0);
            for (&j, &zj) in idx.iter().zip(&z) {
                gamma[j] += alpha * (zj - gamma[j]);
            }
            passive[leave] = false;
            gamma[leave] = 0.0;
            for (&j, _) in idx.iter().zip(&z) {
                if passive[j] && gamma[j] <= 0.0 {
                    passive[j] = false;
                    gamma[j] = 0.0;
                }
            }
        }
    }

    // Snap floating-point dust to exact zero before extracting the support.
    let gmax = gamma.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    for v in gamma.iter_mut() {
        if *v <= options.tol * gmax {
            *v = 0.0;
        }
    }
    let active_set: Vec<usize> = (0..p).filter(|&j| gamma[j] > 0.0).collect();
    // Polish: exact restricted solve on the final support.
    if !active_set.is_empty() {
        if let Some(z) = restricted_solve(&g, &c, &active_set) {
            if z.iter().all(|&v| v > 0.0) {
                let mut polished = vec![0.0; p];
                for (&j, &v) in active_set.iter().zip(&z) {
                    polished[j] = v;
                }
                gamma = polished;
            }
        }
    }
    let objective = objective_value(x, y, lambda, &gamma);
    Ok(Solution { gamma, active_set, objective, passes })
}

/// KKT residual report for the ridge NNLS problem.
pub fn kkt_residuals(x: &Mat, y: &[f64], lambda: f64, gamma: &[f64]) -> KktResiduals {
    let g = x.gram(lambda);
    let c = x.t_mul_vec(y);
    let gv = mat_vec(&g, gamma);
    let mut out = KktResiduals::default();
    let mut comp = 0.0;
    for j in 0..gamma.len() {
        let mu = gv[j] - c[j]; // gradient = X^T X g - X^T y + lambda g
        if -gamma[j] > out.primal_violation {
            out.primal_violation = -gamma[j];
        }
        if gamma[j] > 0.0 {
            if mu.abs() > out.stationarity {
                out.stationarity = mu.abs();
            }
        } else if -mu > out.dual_infeasibility {
            out.dual_infeasibility = -mu;
        }
        comp += gamma[j] * mu;
    }
    out.complementarity = comp.abs();
    out
}

/// Penalized objective `||y - X gamma||^2 + lambda ||gamma||^2`.
pub fn objective_value(x: &Mat, y: &[f64], lambda: f64, gamma: &[f64]) -> f64 {
    let pred = x.mul_vec(gamma);
    let mut rss = 0.0;
    for (yi, pi) in y.iter().zip(&pred) {
        let r = yi - pi;
        rss += r * r;
    }
    rss + lambda * linalg::dot(gamma, gamma)
}

fn mat_vec(g: &Mat, v: &[f64]) -> Vec<f64> {
    g.mul_vec(v)
}

fn restricted_solve(g: &Mat, c: &[f64], idx: &[usize]) -> Option<Vec<f64>> {
    if idx.is_empty() {
        return Some(Vec::new());
    }
    let k = idx.len();
    let mut gs = Mat::zeros(k, k);
    let mut cs = vec![0.0; k];
    for (a, &ja) in idx.iter().enumerate() {
        cs[a] = c[ja];
        for (b, &jb) in idx.iter().enumerate() {
            gs.set(a, b, g.get(ja, jb));
        }
    }
    linalg::spd_solve(&gs, &cs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn opts(lambda: f64) -> SolveOptions {
        SolveOptions::new(Method::Nnls, lambda)
    }

    #[test]
    fn lse_identity_design() {
        let x = Mat::identity(2);
        let s = solve_lse_ridge(&x, &[3.0, -1.0], 0.0).unwrap();
        assert!((s.gamma[0] - 3.0).abs() < 1e-12);
        assert!((s.gamma[1] + 1.0).abs() < 1e-12);
        let s = solve_lse_ridge(&x, &[3.0, -1.0], 1.0).unwrap();
        assert!((s.gamma[0] - 1.5).abs() < 1e-12);
        assert!((s.gamma[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn lse_huge_lambda_shrinks_to_zero() {
        let x = Mat::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![2.0, 0.1]]);
        let s = solve_lse_ridge(&x, &[1.0, 2.0, 3.0], 1e9).unwrap();
        assert!(linalg::norm2(&s.gamma) < 1e-7);
    }

    #[test]
    fn lse_singular_errors() {
        let x = Mat::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(solve_lse_ridge(&x, &[1.0, 1.0], 0.0), Err(SolverError::RankDeficient)));
        assert!(solve_lse_ridge(&x, &[1.0, 1.0], 1e-4).is_ok());
    }

    #[test]
    fn nnls_identity_clips() {
        let x = Mat::identity(2);
        let s = solve_nnls(&x, &[3.0, -1.0], 0.0, &opts(0.0)).unwrap();
        assert!((s.gamma[0] - 3.0).abs() < 1e-10);
        assert_eq!(s.gamma[1], 0.0);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn nnls_all_zero_when_gradient_nonpositive() {
        let x = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let s = solve_nnls(&x, &[-1.0, -1.0], 0.0, &opts(0.0)).unwrap();
        assert_eq!(s.gamma, vec![0.0, 0.0]);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn nnls_partial_support() {
        let x = Mat::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]);
        let s = solve_nnls(&x, &[2.0, -1.0], 0.0, &opts(0.0)).unwrap();
        assert!((s.gamma[0] - 2.0).abs() < 1e-10);
        assert_eq!(s.gamma[1], 0.0);
    }

    /// Brute-force oracle: minimize over every support by restricted LS,
    /// keeping feasible KKT points only.
    pub(crate) fn enumeration_oracle(x: &Mat, y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
        let p = x.cols();
        let g = x.gram(lambda);
        let c = x.t_mul_vec(y);
        let mut best: Option<(Vec<f64>, f64)> = None;
        for mask in 0..(1_u32 << p) {
            let idx: Vec<usize> = (0..p).filter(|&j| mask >> j & 1 == 1).collect();
            let Some(z) = restricted_solve(&g, &c, &idx) else { continue };
            if z.iter().any(|&v| v < 0.0) {
                continue;
            }
            let mut gamma = vec![0.0; p];
            for (&j, &v) in idx.iter().zip(&z) {
                gamma[j] = v;
            }
            let obj = objective_value(x, y, lambda, &gamma);
            if best.as_ref().map_or(true, |(_, b)| obj < *b) {
                best = Some((gamma, obj));
            }
        }
        best.expect("empty support always feasible")
    }

    #[test]
    fn nnls_matches_enumeration_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        for trial in 0..100 {
            let n = rng.gen_range(4..=20);
            let p = rng.gen_range(1..=8);
            let mut rows = Vec::new();
            for _ in 0..n {
                rows.push((0..p).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            }
            let x = Mat::from_rows(&rows);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lambda = if trial % 3 == 0 { 0.0 } else { rng.gen_range(0.0..0.5) };
            let s = solve_nnls(&x, &y, lambda, &opts(lambda)).unwrap();
            let (_, obj_oracle) = enumeration_oracle(&x, &y, lambda);
            let rel = (s.objective - obj_oracle).abs() / obj_oracle.abs().max(1.0);
            assert!(rel < 1e-8, "trial {trial}: {} vs {}", s.objective, obj_oracle);
            let kkt = kkt_residuals(&x, &y, lambda, &s.gamma);
            assert!(kkt.max() < 1e-8, "trial {trial}: kkt {:?}", kkt);
        }
    }

    #[test]
    fn restricted_lse_identity_on_active_set() {
        let mut rng = StdRng::seed_from_u64(11);
        for _ in 0..20 {
            let n = 15;
            let p = 6;
            let mut rows = Vec::new();
            for _ in 0..n {
                rows.push((0..p).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
            }
            let x = Mat::from_rows(&rows);
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = solve_nnls(&x, &y, 0.0, &opts(0.0)).unwrap();
            if s.active_set.is_empty() {
                continue;
            }
            let xs = x.select_cols(&s.active_set);
            let ls = solve_lse_ridge(&xs, &y, 0.0).unwrap();
            for (k, &j) in s.active_set.iter().enumerate() {
                assert!((s.gamma[j] - ls.gamma[k]).abs() < 1e-8);
            }
        }
    }

    /// Projected-gradient reference used to cross-check ridge handling.
    fn projected_gradient(x: &Mat, y: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
        let p = x.cols();
        let g = x.gram(lambda);
        let c = x.t_mul_vec(y);
        // step = 1 / ||G|| (crude upper bound via row sums)
        let lip = (0..p)
            .map(|i| (0..p).map(|j| g.get(i, j).abs()).sum::<f64>())
            .fold(0.0_f64, f64::max)
            .max(1e-12);
        let step = 1.0 / lip;
        let mut gamma = vec![0.0; p];
        for _ in 0..iters {
            let gv = g.mul_vec(&gamma);
            for j in 0..p {
                gamma[j] = (gamma[j] - step * (gv[j] - c[j])).max(0.0);
            }
        }
        gamma
    }

    #[test]
    fn ridge_augmentation_matches_projected_gradient() {
        let mut rng = StdRng::seed_from_u64(3);
        let n = 12;
        let p = 5;
        let mut rows = Vec::new();
        for _ in 0..n {
            rows.push((0..p).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        }
        let x = Mat::from_rows(&rows);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let lambda = 0.3;
        let s = solve_nnls(&x, &y, lambda, &opts(lambda)).unwrap();

        // Explicit augmented design, lambda = 0: identical solution path.
        let mut aug_rows: Vec<Vec<f64>> = rows.clone();
        for j in 0..p {
            let mut r = vec![0.0; p];
            r[j] = libm::sqrt(lambda);
            aug_rows.push(r);
        }
        let xa = Mat::from_rows(&aug_rows);
        let mut ya = y.clone();
        ya.extend(core::iter::repeat(0.0).take(p));
        let sa = solve_nnls(&xa, &ya, 0.0, &opts(0.0)).unwrap();
        for j in 0..p {
            assert!((s.gamma[j] - sa.gamma[j]).abs() < 1e-10);
        }

        let pg = projected_gradient(&x, &y, lambda, 200_000);
        for j in 0..p {
            assert!((s.gamma[j] - pg[j]).abs() < 1e-6, "j={j}: {} vs {}", s.gamma[j], pg[j]);
        }
    }

    #[test]
    fn monotone_shrinkage_in_lambda() {
        let mut rng = StdRng::seed_from_u64(21);
        let n = 20;
        let p = 6;
        let mut rows = Vec::new();
        for _ in 0..n {
            rows.push((0..p).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
        }
        let x = Mat::from_rows(&rows);
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
        let mut prev = f64::INFINITY;
        for &lambda in &[0.0, 0.01, 0.1, 1.0, 10.0] {
            let s = solve_nnls(&x, &y, lambda, &opts(lambda)).unwrap();
            let nrm = linalg::norm2(&s.gamma);
            assert!(nrm <= prev + 1e-9, "lambda={lambda}: {nrm} > {prev}");
            prev = nrm;
        }
    }

    #[test]
    fn kkt_flags_violations() {
        let x = Mat::identity(2);
        let y = [3.0, -1.0];
        // gamma = 0 with positive gradient entry -> dual infeasibility
        let kkt = kkt_residuals(&x, &y, 0.0, &[0.0, 0.0]);
        assert!(kkt.dual_infeasibility > 1.0);
        // perturbation grows stationarity roughly linearly
        let base = kkt_residuals(&x, &y, 0.0, &[3.0, 0.0]);
        assert!(base.max() < 1e-12);
        let k1 = kkt_residuals(&x, &y, 0.0, &[3.0 + 1e-4, 0.0]);
        let k2 = kkt_residuals(&x, &y, 0.0, &[3.0 + 2e-4, 0.0]);
        assert!((k2.stationarity / k1.stationarity - 2.0).abs() < 1e-6);
    }
}
