//! Post-selection inference for the NNLS support.
//!
//! The active set defines a polyhedral selection event `A y <= 0` built from
//! the KKT conditions. Conditional on that event (and the orthogonal
//! component `z`), a linear functional `eta^T y` follows a truncated normal,
//! whose CDF pivot is inverted by monotone root-finding to produce
//! confidence and forecast intervals.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::{self, Mat};

const SQRT_2: f64 = core::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub enum InferenceError {
    RankDeficientActiveSet,
    DegenerateTruncation,
    EmptySlice { v_minus: f64, v_plus: f64 },
    InfeasibleObservation { violation: f64 },
    BracketFailure,
    BadInput(&'static str),
}

impl fmt::Display for InferenceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferenceError::RankDeficientActiveSet => {
                write!(f, "active-set columns are rank deficient; inference unavailable")
            }
            InferenceError::DegenerateTruncation => {
                write!(f, "truncation interval carries no probability mass")
            }
            InferenceError::EmptySlice { v_minus, v_plus } => {
                write!(f, "empty truncation slice: v- = {v_minus} > v+ = {v_plus}")
            }
            InferenceError::InfeasibleObservation { violation } => write!(
                f,
                "observed response violates its own selection event by {violation:.3e}"
            ),
            InferenceError::BracketFailure => {
                write!(f, "root-finding bracket expansion failed after 200 doublings")
            }
            InferenceError::BadInput(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for InferenceError {}

/// The selection polyhedron `A y <= 0` for an NNLS active set, with the
/// pseudo-inverse of the selected columns.
#[derive(Debug, Clone)]
pub struct SelectionEvent {
    pub a: Mat,
    pub active_set: Vec<usize>,
    /// `(X_S^T X_S)^{-1} X_S^T`, shape `|S| x n`.
    pub pseudo_inverse: Mat,
}

/// One-dimensional slice of the selection event along `eta`.
#[derive(Debug, Clone)]
pub struct TruncatedInterval {
    pub v_minus: f64,
    pub v_plus: f64,
    pub eta: Vec<f64>,
    pub sigma2: f64,
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `ln Phi(z)`, accurate deep into the lower tail.
pub fn ln_norm_cdf(z: f64) -> f64 {
    if z < -37.0 {
        // Asymptotic expansion of the Mills ratio; relative error ~1e-13
        // at the switchover.
        let z2 = z * z;
        let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)
            + 105.0 / (z2 * z2 * z2 * z2);
        -0.5 * z2 - libm::log(-z) - LN_SQRT_2PI + libm::log(series)
    } else if z > 8.0 {
        // ln(1 - Q) with Q the tiny upper tail.
        libm::log1p(-0.5 * libm::erfc(z / SQRT_2))
    } else {
        libm::log(norm_cdf(z))
    }
}

/// CDF of a normal `N(mu, sigma2)` truncated to `[a, b]`, evaluated at `x`.
///
/// When the whole truncation window sits in one far tail the naive CDF
/// differences cancel; those cases are computed through log-CDF differences.
pub fn truncnorm_cdf(
    x: f64,
    mu: f64,
    sigma2: f64,
    a: f64,
    b: f64,
) -> Result<f64, InferenceError> {
    if !(sigma2 > 0.0) {
        return Err(InferenceError::BadInput("truncnorm requires sigma2 > 0"));
    }
    if !(a < b) {
        return Err(InferenceError::BadInput("truncnorm requires a < b"));
    }
    let sigma = libm::sqrt(sigma2);
    let za = (a - mu) / sigma;
    let zb = (b - mu) / sigma;
    let zx = ((x - mu) / sigma).clamp(za, zb);

    if za == f64::NEG_INFINITY && zb == f64::INFINITY {
        return Ok(norm_cdf(zx));
    }

    let value = if zb <= 0.0 {
        lower_tail_ratio(za, zx, zb)?
    } else if za >= 0.0 {
        // Mirror into the lower tail.
        1.0 - lower_tail_ratio(-zb, -zx, -za)?
    } else {
        let den = norm_cdf(zb) - norm_cdf(za);
        if den <= 0.0 {
            return Err(InferenceError::DegenerateTruncation);
        }
        (norm_cdf(zx) - norm_cdf(za)) / den
    };
    Ok(value.clamp(0.0, 1.0))
}

/// `(Phi(zx) - Phi(za)) / (Phi(zb) - Phi(za))` for `za <= zx <= zb <= 0`,
/// via log-space differences.
fn lower_tail_ratio(za: f64, zx: f64, zb: f64) -> Result<f64, InferenceError> {
    let lb = ln_norm_cdf(zb);
    if lb == f64::NEG_INFINITY {
        return Err(InferenceError::DegenerateTruncation);
    }
    let lx = ln_norm_cdf(zx);
    let num_rel = if za == f64::NEG_INFINITY {
        1.0
    } else {
        -libm::expm1(ln_norm_cdf(za) - lx)
    };
    let den_rel = if za == f64::NEG_INFINITY {
        1.0
    } else {
        -libm::expm1(ln_norm_cdf(za) - lb)
    };
    if den_rel <= 0.0 {
        return Err(InferenceError::DegenerateTruncation);
    }
    if num_rel <= 0.0 {
        return Ok(0.0);
    }
    Ok(libm::exp(lx - lb) * num_rel / den_rel)
}

/// Builds the selection polyhedron for `active_set` from the design used by
/// the solver. Rows stack `X_{-S}^T (I - P_S)` and `-X_S^dagger`, so that
/// the response that produced the selection satisfies `A y <= 0`.
pub fn selection_event(x: &Mat, active_set: &[usize]) -> Result<SelectionEvent, InferenceError> {
    let n = x.rows();
    let p = x.cols();
    let xs = x.select_cols(active_set);
    let gram = xs.gram(0.0);
    let chol = linalg::cholesky(&gram, 1e-12).ok_or(InferenceError::RankDeficientActiveSet)?;
    // pseudo-inverse rows: solve (Xs^T Xs) row_k = (Xs^T)_k for each of n cols
    let k = active_set.len();
    let mut pinv = Mat::zeros(k, n);
    for col in 0..n {
        let rhs: Vec<f64> = (0..k).map(|a| xs.get(col, a)).collect();
        let sol = linalg::chol_solve(&chol, &rhs);
        for a in 0..k {
            pinv.set(a, col, sol[a]);
        }
    }
    let inactive: Vec<usize> = (0..p).filter(|j| !active_set.contains(j)).collect();
    // projection residual: (I - Xs pinv)
    let proj = xs.matmul(&pinv);
    let mut a_mat = Mat::zeros(inactive.len() + k, n);
    for (r, &j) in inactive.iter().enumerate() {
        for col in 0..n {
            let mut v = 0.0;
            for row in 0..n {
                let resid = if row == col { 1.0 } else { 0.0 } - proj.get(row, col);
                v += x.get(row, j) * resid;
            }
            a_mat.set(r, col, v);
        }
    }
    for a in 0..k {
        for col in 0..n {
            a_mat.set(inactive.len() + a, col, -pinv.get(a, col));
        }
    }
    Ok(SelectionEvent { a: a_mat, active_set: active_set.to_vec(), pseudo_inverse: pinv })
}

/// Truncation bounds of the one-dimensional slice `{ y + t c }` inside the
/// polyhedron `A y <= 0`. Returns `(v_minus, v_plus, z)` where
/// `z = (I - c eta^T) y` is the conditioned orthogonal component.
pub fn truncation_bounds(
    a_mat: &Mat,
    eta: &[f64],
    y: &[f64],
    _sigma2: f64,
) -> Result<(f64, f64, Vec<f64>), InferenceError> {
    let nn = linalg::dot(eta, eta);
    if nn <= 0.0 {
        return Err(InferenceError::BadInput("eta must be nonzero"));
    }
    // c = Sigma eta (eta^T Sigma eta)^{-1}; Sigma = sigma2 I cancels.
    let c: Vec<f64> = eta.iter().map(|&e| e / nn).collect();
    let observed = linalg::dot(eta, y);
    let z: Vec<f64> = y.iter().zip(&c).map(|(yi, ci)| yi - ci * observed).collect();
    let ac = a_mat.mul_vec(&c);
    let az = a_mat.mul_vec(&z);
    let scale = ac.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-30);
    let tol = 1e-11 * scale;

    let mut v_minus = f64::NEG_INFINITY;
    let mut v_plus = f64::INFINITY;
    for j in 0..ac.len() {
        if ac[j] < -tol {
            v_minus = v_minus.max(-az[j] / ac[j]);
        } else if ac[j] > tol {
            v_plus = v_plus.min(-az[j] / ac[j]);
        } else if az[j] > tol.max(1e-8 * az[j].abs().max(1.0)) {
            return Err(InferenceError::EmptySlice { v_minus: az[j], v_plus: 0.0 });
        }
    }
    if v_minus > v_plus {
        return Err(InferenceError::EmptySlice { v_minus, v_plus });
    }
    Ok((v_minus, v_plus, z))
}

/// Options for [`selective_interval`].
#[derive(Debug, Clone, Copy)]
pub struct IntervalOptions {
    /// Ridge strength used by the solver whose selection is conditioned on.
    pub lambda: f64,
    /// New-observation (forecast) interval rather than mean interval:
    /// appends the independent noise coordinate of the two-stage procedure.
    pub prediction: bool,
    pub feasibility_tol: f64,
}

impl Default for IntervalOptions {
    fn default() -> Self {
        IntervalOptions { lambda: 0.0, prediction: false, feasibility_tol: 1e-6 }
    }
}

/// Two-stage post-selection interval for `x_new^T beta_S` (or a new
/// observation at `x_new` when `options.prediction` is set).
///
/// `x_new` is expressed in the selected-column coordinates. The selection
/// event is built from the ridge-augmented design actually used by the
/// solver; the refit and `eta` use the unpenalized selected columns.
pub fn selective_interval(
    x: &Mat,
    y: &[f64],
    active_set: &[usize],
    x_new: &[f64],
    sigma2: f64,
    alpha: f64,
    options: &IntervalOptions,
) -> Result<TruncatedInterval, InferenceError> {
    if active_set.is_empty() {
        return Err(InferenceError::BadInput("empty active set"));
    }
    if x_new.len() != active_set.len() {
        return Err(InferenceError::BadInput("x_new must be in selected-column coordinates"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::BadInput("alpha must lie in (0, 1)"));
    }
    let n = y.len();
    let p = x.cols();

    // eta from the unpenalized second-stage refit: eta = X_S (X_S^T X_S)^{-1} x_new.
    let xs = x.select_cols(active_set);
    let gram = xs.gram(0.0);
    let w = linalg::spd_solve(&gram, x_new).ok_or(InferenceError::RankDeficientActiveSet)?;
    let mut eta = xs.mul_vec(&w);

    // Selection event from the design the solver actually saw.
    let event = if options.lambda > 0.0 {
        let sq = libm::sqrt(options.lambda);
        let mut rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).to_vec()).collect();
        for j in 0..p {
            let mut r = vec![0.0; p];
            r[j] = sq;
            rows.push(r);
        }
        let xa = Mat::from_rows(&rows);
        let ev = selection_event(&xa, active_set)?;
        // The appended rows of the response are identically zero, so the
        // event restricted to the observed part keeps the first n columns.
        let mut a_n = Mat::zeros(ev.a.rows(), n);
        for r in 0..ev.a.rows() {
            for c in 0..n {
                a_n.set(r, c, ev.a.get(r, c));
            }
        }
        SelectionEvent { a: a_n, active_set: ev.active_set, pseudo_inverse: ev.pseudo_inverse }
    } else {
        selection_event(x, active_set)?
    };

    // The observed response must lie inside its own selection event.
    let ay = event.a.mul_vec(y);
    let worst = ay.iter().fold(0.0_f64, |m, &v| m.max(v));
    let a_scale = (0..event.a.rows())
        .map(|r| linalg::norm2(event.a.row(r)))
        .fold(0.0_f64, f64::max)
        .max(1.0);
    let y_scale = linalg::norm2(y).max(1.0);
    if worst > options.feasibility_tol * a_scale * y_scale {
        return Err(InferenceError::InfeasibleObservation { violation: worst });
    }

    // Optional noise coordinate for forecast intervals; the event does not
    // constrain it (zero column), and its plug-in value is zero.
    let (a_mat, eta_full, y_full) = if options.prediction {
        let mut a_ext = Mat::zeros(event.a.rows(), n + 1);
        for r in 0..event.a.rows() {
            for c in 0..n {
                a_ext.set(r, c, event.a.get(r, c));
            }
        }
        let mut e = eta.clone();
        e.push(1.0);
        let mut yy = y.to_vec();
        yy.push(0.0);
        (a_ext, e, yy)
    } else {
        (event.a.clone(), core::mem::take(&mut eta), y.to_vec())
    };

    let (v_minus, v_plus, _z) = truncation_bounds(&a_mat, &eta_full, &y_full, sigma2)?;
    let observed = linalg::dot(&eta_full, &y_full);
    let var = sigma2 * linalg::dot(&eta_full, &eta_full);

    let pivot = |mu: f64| truncnorm_cdf(observed, mu, var, v_minus, v_plus);
    let lo = invert_pivot(&pivot, 1.0 - alpha / 2.0, observed, libm::sqrt(var))?;
    let hi = invert_pivot(&pivot, alpha / 2.0, observed, libm::sqrt(var))?;

    Ok(TruncatedInterval { v_minus, v_plus, eta: eta_full, sigma2, lo, hi, alpha })
}

/// Solves `pivot(mu) = target` for `mu`; the pivot is strictly decreasing
/// in `mu`. Geometric bracket expansion followed by bisection.
fn invert_pivot<F>(pivot: &F, target: f64, center: f64, scale: f64) -> Result<f64, InferenceError>
where
    F: Fn(f64) -> Result<f64, InferenceError>,
{
    let eval = |mu: f64| pivot(mu);
    let mut step = scale.max(1e-12);
    let mut lo = center - step;
    let mut hi = center + step;
    let mut expansions = 0;
    while eval(lo)? < target {
        step *= 2.0;
        lo = center - step;
        expansions += 1;
        if expansions > 200 {
            return Err(InferenceError::BracketFailure);
        }
    }
    let mut step = scale.max(1e-12);
    while eval(hi)? > target {
        step *= 2.0;
        hi = center + step;
        expansions += 1;
        if expansions > 200 {
            return Err(InferenceError::BracketFailure);
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo < 1e-11 * (scale + center.abs()) {
            break;
        }
        if eval(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
