//! Weight schemes over past loads and assembly of the linear regression
//! system `y_tilde = X gamma + eps`.
//!
//! Each usable (day, interval) pair becomes one row: the response is the load
//! minus the weighted past-load average, and the design row is
//! `g_i (x) h(j) - g_breve_i (x) h(j) - g_i (x) h_breve_j` per covariate
//! group, where `(x)` is the Kronecker product and the breve quantities are
//! the weight-averaged past basis values.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::basis::{self, BasisKind, BasisSpec};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightKind {
    Mean,
    Ar1,
}

/// Weights over day lags (`alpha`) and within-day lags (`beta`), shared
/// across intervals. `U = 0` (empty `beta`) is the day-ahead setting.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    pub kind: WeightKind,
    pub t: usize,
    pub u: usize,
    pub l_alpha: usize,
    pub l_beta: usize,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
}

/// Rectangular day-by-interval load table with calendar metadata.
///
/// Rows must be consecutive calendar days; calendar gaps are represented as
/// invalid rows so that row arithmetic equals day arithmetic.
#[derive(Debug, Clone)]
pub struct LoadPanel {
    pub loads: Mat,
    /// Days since 1970-01-01 per row.
    pub epoch_days: Vec<i64>,
    pub valid: Vec<bool>,
    /// Index into `class_names` per row.
    pub day_class: Vec<usize>,
    pub class_names: Vec<String>,
}

impl LoadPanel {
    pub fn n_days(&self) -> usize {
        self.loads.rows()
    }

    pub fn n_intervals(&self) -> usize {
        self.loads.cols()
    }

    pub fn check(&self) -> Result<(), DesignError> {
        let n = self.loads.rows();
        if self.epoch_days.len() != n || self.valid.len() != n || self.day_class.len() != n {
            return Err(DesignError::Misaligned);
        }
        for i in 1..n {
            if self.epoch_days[i] != self.epoch_days[i - 1] + 1 {
                return Err(DesignError::NonConsecutiveDays { row: i });
            }
        }
        for i in 0..n {
            if self.valid[i] && self.loads.row(i).iter().any(|v| !v.is_finite()) {
                return Err(DesignError::NonFiniteLoad { row: i });
            }
        }
        Ok(())
    }
}

/// Daily covariates aligned row-for-row with a `LoadPanel`, plus the frozen
/// basis spec used to expand each column.
#[derive(Debug, Clone)]
pub struct CovariateTable {
    pub values: Mat,
    pub names: Vec<String>,
    pub basis_assignment: Vec<BasisSpec>,
}

impl CovariateTable {
    pub fn n_covariates(&self) -> usize {
        self.values.cols()
    }
}

/// Column bookkeeping: covariate group, basis index within the group, and
/// interval-basis index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColKey {
    pub group: usize,
    pub m: usize,
    pub q: usize,
}

/// The assembled regression system.
#[derive(Debug, Clone)]
pub struct DesignSystem {
    pub y_tilde: Vec<f64>,
    pub x: Mat,
    /// (panel row, interval index 1..=J) per system row.
    pub row_index: Vec<(usize, usize)>,
    pub col_index: Vec<ColKey>,
    /// Weighted past-load offset per row; prediction = offset + x row . gamma.
    pub q_offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DesignError {
    InvalidT(usize),
    Misaligned,
    NonConsecutiveDays { row: usize },
    NonFiniteLoad { row: usize },
    EmptyDesign { day_class: usize },
    Basis(basis::BasisError),
}

impl fmt::Display for DesignError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignError::InvalidT(t) => write!(f, "day-lag count T must be >= 1, got {t}"),
            DesignError::Misaligned => write!(f, "panel and covariate calendars are misaligned"),
            DesignError::NonConsecutiveDays { row } => {
                write!(f, "panel rows must be consecutive calendar days (row {row})")
            }
            DesignError::NonFiniteLoad { row } => {
                write!(f, "valid row {row} contains non-finite loads")
            }
            DesignError::EmptyDesign { day_class } => {
                write!(f, "no usable rows for day class {day_class}: not enough valid history")
            }
            DesignError::Basis(e) => write!(f, "basis error: {e}"),
        }
    }
}

impl core::error::Error for DesignError {}

impl From<basis::BasisError> for DesignError {
    fn from(e: basis::BasisError) -> Self {
        DesignError::Basis(e)
    }
}

/// Root of `rho^(T+1) - 2 rho + 1 = 0` in `(0, 1)`, i.e. the rate making
/// the geometric weights `rho^t` sum to one over `t = 1..=T`.
///
/// `T = 1` has no root below one; the scheme degenerates to the single
/// weight 1.0 there (same as the mean scheme).
pub fn solve_ar1_rho(t: usize) -> f64 {
    assert!(t >= 1, "T must be positive");
    if t == 1 {
        return 1.0;
    }
    // f(rho) = sum_{k=1..T} rho^k - 1 is strictly increasing on (0, 1)
    // with f(0) = -1 and f(1) = T - 1 > 0.
    let f = |rho: f64| -> f64 {
        let mut s = 0.0;
        let mut p = 1.0;
        for _ in 0..t {
            p *= rho;
            s += p;
        }
        s - 1.0
    };
    let mut lo = 0.0_f64;
    let mut hi = 1.0_f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Builds the weight scheme: uniform weights for `Mean`, geometric weights
/// via [`solve_ar1_rho`] for `Ar1` (alpha and beta independently).
pub fn build_weights(
    kind: WeightKind,
    t: usize,
    u: usize,
    l_alpha: usize,
    l_beta: usize,
) -> Result<WeightScheme, DesignError> {
    if t == 0 {
        return Err(DesignError::InvalidT(t));
    }
    let geometric = |n: usize| -> Vec<f64> {
        let rho = solve_ar1_rho(n);
        let mut w = Vec::with_capacity(n);
        let mut p = 1.0;
        for _ in 0..n {
            p *= rho;
            w.push(p);
        }
        // Nudge to an exact unit sum so downstream invariants hold tightly.
        let s: f64 = w.iter().sum();
        for v in w.iter_mut() {
            *v /= s;
        }
        w
    };
    let (alpha, beta) = match kind {
        WeightKind::Mean => {
            (vec![1.0 / t as f64; t], if u > 0 { vec![1.0 / u as f64; u] } else { Vec::new() })
        }
        WeightKind::Ar1 => (geometric(t), if u > 0 { geometric(u) } else { Vec::new() }),
    };
    Ok(WeightScheme { kind, t, u, l_alpha, l_beta, alpha, beta })
}

/// Checks the vectorization identity `vec(A B C^T) = (C (x) A) vec(B)`
/// to 1e-12; guards the assembly code in tests.
pub fn kron_vec_check(a: &Mat, b: &Mat, c: &Mat) -> bool {
    if a.cols() != b.rows() || b.cols() != c.cols() {
        return false;
    }
    let abct = a.matmul(b).matmul(&c.transpose());
    let lhs = linalg::vec_of(&abct);
    let rhs = linalg::kron_mat(c, a).mul_vec(&linalg::vec_of(b));
    lhs.iter().zip(&rhs).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Within-day lag positions `j - u - L_beta` for interval `j`, with weights
/// renormalized over the lags that stay inside the day. Empty when `U = 0`
/// or every lag underflows.
pub fn beta_lags(weights: &WeightScheme, j: usize) -> Vec<(usize, f64)> {
    let mut lags = Vec::new();
    let mut total = 0.0;
    for (u, &w) in weights.beta.iter().enumerate() {
        let shift = u + 1 + weights.l_beta;
        if j > shift {
            lags.push((j - shift, w));
            total += w;
        }
    }
    if total > 0.0 {
        for l in lags.iter_mut() {
            l.1 /= total;
        }
    }
    lags
}

/// Whether panel row `i` can anchor a system row: the day itself and its full
/// `T`-day lagged history must be valid with finite covariates.
pub fn has_full_history(
    panel: &LoadPanel,
    covs: &CovariateTable,
    weights: &WeightScheme,
    i: usize,
) -> bool {
    if !panel.valid[i] || covs.values.row(i).iter().any(|v| !v.is_finite()) {
        return false;
    }
    for t in 1..=weights.t {
        let shift = t + weights.l_alpha;
        if i < shift {
            return false;
        }
        let back = i - shift;
        if !panel.valid[back] || covs.values.row(back).iter().any(|v| !v.is_finite()) {
            return false;
        }
    }
    true
}

/// Per-day evaluated covariate bases for the rows of a panel. Rows with
/// non-finite covariates evaluate to `None`.
pub(crate) fn eval_g_rows(
    covs: &CovariateTable,
    n: usize,
) -> Result<Vec<Vec<Option<Vec<f64>>>>, DesignError> {
    let d = covs.n_covariates();
    let mut out = vec![Vec::with_capacity(d); n];
    for i in 0..n {
        for c in 0..d {
            let s = covs.values.get(i, c);
            if s.is_finite() {
                out[i].push(Some(basis::eval_basis(&covs.basis_assignment[c], s)?));
            } else {
                out[i].push(None);
            }
        }
    }
    Ok(out)
}

/// Interval-basis values `h(j)` for `j = 1..=J`.
pub(crate) fn eval_h_rows(h_spec: &BasisSpec, j_max: usize) -> Result<Vec<Vec<f64>>, DesignError> {
    let mut out = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let v = if h_spec.kind == BasisKind::CyclicCubicBSpline {
            basis::eval_cyclic_basis(h_spec, j)?
        } else {
            basis::eval_basis(h_spec, j as f64)?
        };
        out.push(v);
    }
    Ok(out)
}

/// Assembles the regression system for one day class.
pub fn assemble(
    panel: &LoadPanel,
    covs: &CovariateTable,
    weights: &WeightScheme,
    h_spec: &BasisSpec,
    day_class: usize,
) -> Result<DesignSystem, DesignError> {
    panel.check()?;
    let n = panel.n_days();
    if covs.values.rows() != n {
        return Err(DesignError::Misaligned);
    }
    let j_max = panel.n_intervals();
    let q_count = h_spec.count;
    let groups = covs.n_covariates();
    let m_counts: Vec<usize> = covs.basis_assignment.iter().map(|s| s.count).collect();
    let p: usize = q_count * m_counts.iter().sum::<usize>();

    let g_rows = eval_g_rows(covs, n)?;
    let h_rows = eval_h_rows(h_spec, j_max)?;
    // h_breve per interval (renormalized beta weights; all-zero when U = 0).
    let mut h_breve = vec![vec![0.0; q_count]; j_max];
    let mut beta_lag_cache = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let lags = beta_lags(weights, j);
        for &(lag_j, w) in &lags {
            for q in 0..q_count {
                h_breve[j - 1][q] += w * h_rows[lag_j - 1][q];
            }
        }
        beta_lag_cache.push(lags);
    }

    let mut col_index = Vec::with_capacity(p);
    for group in 0..groups {
        for m in 0..m_counts[group] {
            for q in 0..q_count {
                col_index.push(ColKey { group, m, q });
            }
        }
    }

    let mut y_tilde = Vec::new();
    let mut q_offsets = Vec::new();
    let mut row_index = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();

    for i in 0..n {
        if panel.day_class[i] != day_class || !has_full_history(panel, covs, weights, i) {
            continue;
        }
        // g_breve per group for this day.
        let mut g_breve: Vec<Vec<f64>> = (0..groups).map(|g| vec![0.0; m_counts[g]]).collect();
        for (t, &aw) in weights.alpha.iter().enumerate() {
            let back = i - (t + 1 + weights.l_alpha);
            for group in 0..groups {
                let gv = g_rows[back][group].as_ref().expect("checked by has_full_history");
                for m in 0..m_counts[group] {
                    g_breve[group][m] += aw * gv[m];
                }
            }
        }
        for j in 1..=j_max {
            let mut offset = 0.0;
            for (t, &aw) in weights.alpha.iter().enumerate() {
                let back = i - (t + 1 + weights.l_alpha);
                offset += aw * panel.loads.get(back, j - 1);
            }
            for &(lag_j, w) in &beta_lag_cache[j - 1] {
                offset += w * panel.loads.get(i, lag_j - 1);
            }
            let mut row = Vec::with_capacity(p);
            for group in 0..groups {
                let g_i = g_rows[i][group].as_ref().expect("checked by has_full_history");
                let h_j = &h_rows[j - 1];
                let hb_j = &h_breve[j - 1];
                for m in 0..m_counts[group] {
                    let a = g_i[m] - g_breve[group][m];
                    for q in 0..q_count {
                        row.push(a * h_j[q] - g_i[m] * hb_j[q]);
                    }
                }
            }
            y_tilde.push(panel.loads.get(i, j - 1) - offset);
            q_offsets.push(offset);
            row_index.push((i, j));
            rows.push(row);
        }
    }

    if rows.is_empty() {
        return Err(DesignError::EmptyDesign { day_class });
    }
    Ok(DesignSystem { y_tilde, x: Mat::from_rows(&rows), row_index, col_index, q_offsets })
}
