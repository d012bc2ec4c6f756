//! Model fitting per day class and forecast decomposition.
//!
//! A fitted model holds one coefficient vector per day class together with
//! the frozen basis specs. Forecasts decompose as `y_hat = mu_hat + b_hat`
//! where `mu_hat` weights past loads with their own weather effect removed
//! and `b_hat` is reported per covariate group.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::basis::{self, BasisKind, BasisSpec};
use crate::design::{
    self, beta_lags, CovariateTable, DesignError, DesignSystem, LoadPanel, WeightKind, WeightScheme,
};
use crate::linalg::Mat;
use crate::solver::{self, Method, SolveOptions};

/// Requested basis family for one covariate column; knots are frozen at fit
/// time from the training window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasisFamily {
    pub kind: BasisKind,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// Number of interval-basis functions (Q).
    pub q: usize,
    /// Interval-basis family; cyclic keeps the coefficient curves smooth
    /// across midnight.
    pub h_kind: BasisKind,
    /// Per-covariate basis families, aligned with the covariate columns.
    pub bases: Vec<BasisFamily>,
    pub weight_kind: WeightKind,
    pub t: usize,
    pub u: usize,
    pub l_alpha: usize,
    pub l_beta: usize,
    pub lambda: f64,
    pub method: Method,
}

impl ModelConfig {
    pub fn day_ahead(q: usize, bases: Vec<BasisFamily>, weight_kind: WeightKind, t: usize) -> Self {
        ModelConfig {
            q,
            h_kind: BasisKind::CyclicCubicBSpline,
            bases,
            weight_kind,
            t,
            u: 0,
            l_alpha: 1,
            l_beta: 1,
            lambda: 1e-4,
            method: Method::Nnls,
        }
    }
}

/// Per-day-class fit results.
#[derive(Debug, Clone)]
pub struct ClassFit {
    pub class: usize,
    /// Coefficients in the assembled column layout (`vec(Gamma)` per group).
    pub gamma: Vec<f64>,
    pub active_set: Vec<usize>,
    /// Residual variance of the second-stage unpenalized refit on the
    /// active set; NaN when the refit has no spare degrees of freedom.
    pub sigma2: f64,
    pub n_rows: usize,
}

/// Immutable fit artifact: config, frozen bases, per-class coefficients.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub config: ModelConfig,
    pub weights: WeightScheme,
    pub h_spec: BasisSpec,
    /// Frozen covariate basis specs shared by all day classes.
    pub basis_specs: Vec<BasisSpec>,
    pub covariate_names: Vec<String>,
    pub class_names: Vec<String>,
    pub classes: Vec<ClassFit>,
    /// First and last epoch day of the training window.
    pub train_window: (i64, i64),
}

impl FittedModel {
    pub fn class_fit(&self, class: usize) -> Option<&ClassFit> {
        self.classes.iter().find(|c| c.class == class)
    }

    pub fn n_intervals(&self) -> usize {
        (self.h_spec.domain_hi - self.h_spec.domain_lo) as usize
    }
}

/// Forecast for one day: per-interval point forecasts, the past-load and
/// weather components, and optional post-selection intervals.
#[derive(Debug, Clone)]
pub struct ForecastBundle {
    pub y_hat: Vec<f64>,
    pub mu_hat: Vec<f64>,
    /// Weather effect per covariate group (group x interval).
    pub b_hat: Vec<Vec<f64>>,
    pub intervals: Option<Vec<(f64, f64)>>,
    pub alpha: Option<f64>,
}

impl ForecastBundle {
    pub fn b_hat_total(&self, j: usize) -> f64 {
        self.b_hat.iter().map(|g| g[j]).sum()
    }
}

#[derive(Debug, Clone)]
pub enum ForecastError {
    UnknownClass(usize),
    EmptyClass { name: String },
    MissingHistory { missing_epoch_days: Vec<i64> },
    IntradayRequiresU,
    DegenerateCovariate { name: String },
    CovariateCountMismatch { expected: usize, got: usize },
    Design(DesignError),
    Solver(solver::SolverError),
    Basis(basis::BasisError),
}

impl fmt::Display for ForecastError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForecastError::UnknownClass(c) => write!(f, "unknown day class index {c}"),
            ForecastError::EmptyClass { name } => {
                write!(f, "no usable training rows for day class '{name}'")
            }
            ForecastError::MissingHistory { missing_epoch_days } => {
                write!(f, "insufficient valid history; missing epoch days {missing_epoch_days:?}")
            }
            ForecastError::IntradayRequiresU => {
                write!(f, "intraday forecasting requires U >= 1; use day-ahead mode")
            }
            ForecastError::DegenerateCovariate { name } => {
                write!(f, "covariate '{name}' is constant over the training window")
            }
            ForecastError::CovariateCountMismatch { expected, got } => {
                write!(f, "expected {expected} covariate values, got {got}")
            }
            ForecastError::Design(e) => write!(f, "{e}"),
            ForecastError::Solver(e) => write!(f, "{e}"),
            ForecastError::Basis(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for ForecastError {}

impl From<DesignError> for ForecastError {
    fn from(e: DesignError) -> Self {
        ForecastError::Design(e)
    }
}

impl From<solver::SolverError> for ForecastError {
    fn from(e: solver::SolverError) -> Self {
        ForecastError::Solver(e)
    }
}

impl From<basis::BasisError> for ForecastError {
    fn from(e: basis::BasisError) -> Self {
        ForecastError::Basis(e)
    }
}

/// Freezes per-covariate basis specs: spline knot ranges span the observed
/// covariate values over the valid training rows.
pub fn freeze_bases(
    panel: &LoadPanel,
    covs: &CovariateTable,
    families: &[BasisFamily],
) -> Result<Vec<BasisSpec>, ForecastError> {
    if families.len() != covs.n_covariates() {
        return Err(ForecastError::CovariateCountMismatch {
            expected: covs.n_covariates(),
            got: families.len(),
        });
    }
    let mut specs = Vec::with_capacity(families.len());
    for (c, fam) in families.iter().enumerate() {
        let spec = match fam.kind {
            BasisKind::CubicPolynomial | BasisKind::NegatedCubicPolynomial => {
                basis::make_polynomial(fam.kind, fam.count)?
            }
            _ => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..panel.n_days() {
                    let v = covs.values.get(i, c);
                    if panel.valid[i] && v.is_finite() {
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                if !(lo < hi) {
                    return Err(ForecastError::DegenerateCovariate {
                        name: covs.names.get(c).cloned().unwrap_or_default(),
                    });
                }
                match fam.kind {
                    BasisKind::CubicBSpline => basis::make_bspline_knots(lo, hi, fam.count)?,
                    _ => basis::make_cyclic_knots(lo, hi, fam.count)?,
                }
            }
        };
        specs.push(spec);
    }
    Ok(specs)
}

fn h_spec_for(config: &ModelConfig, j_max: usize) -> Result<BasisSpec, ForecastError> {
    let spec = match config.h_kind {
        BasisKind::CyclicCubicBSpline => basis::make_cyclic_knots(1.0, (j_max + 1) as f64, config.q),
        _ => basis::make_bspline_knots(1.0, j_max as f64, config.q),
    }?;
    Ok(spec)
}

/// Fits one model per day class present in the panel.
pub fn fit(
    panel: &LoadPanel,
    covs: &CovariateTable,
    config: &ModelConfig,
) -> Result<FittedModel, ForecastError> {
    fit_classes(panel, covs, config, None)
}

/// Like [`fit`] but restricted to the listed day classes; backtests use this
/// to refit only the forecast day's class.
pub fn fit_classes(
    panel: &LoadPanel,
    covs: &CovariateTable,
    config: &ModelConfig,
    only: Option<&[usize]>,
) -> Result<FittedModel, ForecastError> {
    panel.check()?;
    let weights =
        design::build_weights(config.weight_kind, config.t, config.u, config.l_alpha, config.l_beta)?;
    let basis_specs = freeze_bases(panel, covs, &config.bases)?;
    let frozen = CovariateTable {
        values: covs.values.clone(),
        names: covs.names.clone(),
        basis_assignment: basis_specs.clone(),
    };
    let h_spec = h_spec_for(config, panel.n_intervals())?;

    let mut classes = Vec::new();
    for class in 0..panel.class_names.len() {
        if only.map_or(false, |list| !list.contains(&class)) {
            continue;
        }
        if !panel.day_class.iter().zip(&panel.valid).any(|(&c, &v)| c == class && v) {
            continue;
        }
        let sys = match design::assemble(panel, &frozen, &weights, &h_spec, class) {
            Ok(sys) => sys,
            Err(DesignError::EmptyDesign { .. }) => {
                return Err(ForecastError::EmptyClass { name: panel.class_names[class].clone() })
            }
            Err(e) => return Err(e.into()),
        };
        classes.push(fit_class(&sys, config, class)?);
    }
    if classes.is_empty() {
        return Err(ForecastError::EmptyClass { name: String::from("(all)") });
    }

    let train_window = (
        *panel.epoch_days.first().unwrap_or(&0),
        *panel.epoch_days.last().unwrap_or(&0),
    );
    Ok(FittedModel {
        config: config.clone(),
        weights,
        h_spec,
        basis_specs,
        covariate_names: covs.names.clone(),
        class_names: panel.class_names.clone(),
        classes,
        train_window,
    })
}

fn fit_class(
    sys: &DesignSystem,
    config: &ModelConfig,
    class: usize,
) -> Result<ClassFit, ForecastError> {
    let sol = match config.method {
        Method::Nnls => {
            let opts = SolveOptions::new(Method::Nnls, config.lambda);
            solver::solve_nnls(&sys.x, &sys.y_tilde, config.lambda, &opts)?
        }
        Method::Lse => solver::solve_lse_ridge(&sys.x, &sys.y_tilde, config.lambda)?,
    };
    let n_rows = sys.x.rows();

    // Second-stage unpenalized refit on the support for the residual
    // variance used by the interval procedure.
    let sigma2 = if sol.active_set.is_empty() {
        let rss: f64 = sys.y_tilde.iter().map(|v| v * v).sum();
        rss / n_rows as f64
    } else if n_rows > sol.active_set.len() {
        let xs = sys.x.select_cols(&sol.active_set);
        match solver::solve_lse_ridge(&xs, &sys.y_tilde, 0.0) {
            Ok(refit) => {
                let pred = xs.mul_vec(&refit.gamma);
                let rss: f64 =
                    sys.y_tilde.iter().zip(&pred).map(|(y, p)| (y - p) * (y - p)).sum();
                rss / (n_rows - sol.active_set.len()) as f64
            }
            Err(_) => f64::NAN,
        }
    } else {
        f64::NAN
    };

    Ok(ClassFit { class, gamma: sol.gamma, active_set: sol.active_set, sigma2, n_rows })
}

/// The weather-effect curve `b(j)` at covariate vector `s`, one row per
/// covariate group.
pub fn weather_effect_curve(
    model: &FittedModel,
    day_class: usize,
    s: &[f64],
) -> Result<Vec<Vec<f64>>, ForecastError> {
    let fit = model.class_fit(day_class).ok_or(ForecastError::UnknownClass(day_class))?;
    if s.len() != model.basis_specs.len() {
        return Err(ForecastError::CovariateCountMismatch {
            expected: model.basis_specs.len(),
            got: s.len(),
        });
    }
    let j_max = model.n_intervals();
    let q = model.h_spec.count;
    let mut out = vec![vec![0.0; j_max]; model.basis_specs.len()];
    let mut col = 0;
    for (g_idx, spec) in model.basis_specs.iter().enumerate() {
        let g = basis::eval_basis(spec, s[g_idx])?;
        for j in 1..=j_max {
            let h = basis::eval_cyclic_basis(&model.h_spec, j)
                .or_else(|_| basis::eval_basis(&model.h_spec, j as f64))?;
            let mut total = 0.0;
            for m in 0..spec.count {
                for qq in 0..q {
                    total += fit.gamma[col + m * q + qq] * g[m] * h[qq];
                }
            }
            out[g_idx][j - 1] = total;
        }
        col += spec.count * q;
    }
    Ok(out)
}

/// Total weather effect at one (day covariates, interval) point.
fn b_total_at(
    model: &FittedModel,
    fit: &ClassFit,
    s: &[f64],
    j: usize,
) -> Result<f64, ForecastError> {
    let q = model.h_spec.count;
    let h = basis::eval_cyclic_basis(&model.h_spec, j)
        .or_else(|_| basis::eval_basis(&model.h_spec, j as f64))?;
    let mut col = 0;
    let mut total = 0.0;
    for (g_idx, spec) in model.basis_specs.iter().enumerate() {
        let g = basis::eval_basis(spec, s[g_idx])?;
        for m in 0..spec.count {
            for qq in 0..q {
                total += fit.gamma[col + m * q + qq] * g[m] * h[qq];
            }
        }
        col += spec.count * q;
    }
    Ok(total)
}

fn history_rows(
    model: &FittedModel,
    panel: &LoadPanel,
    covs: &CovariateTable,
) -> Result<Vec<usize>, ForecastError> {
    let n = panel.n_days();
    let mut rows = Vec::with_capacity(model.weights.t);
    let mut missing = Vec::new();
    for t in 1..=model.weights.t {
        let shift = t + model.weights.l_alpha;
        if shift > n {
            missing.push(panel.epoch_days.first().map_or(0, |d| d - 1));
            continue;
        }
        let i = n - shift;
        let cov_ok = covs.values.row(i).iter().all(|v| v.is_finite());
        if !panel.valid[i] || !cov_ok {
            missing.push(panel.epoch_days[i]);
        } else {
            rows.push(i);
        }
    }
    if !missing.is_empty() {
        return Err(ForecastError::MissingHistory { missing_epoch_days: missing });
    }
    Ok(rows)
}

/// Day-ahead forecast for the day following the last panel row.
///
/// `target_class` selects the day-class model for the forecast day;
/// `s_next` is the forecast-day covariate vector.
pub fn predict_day_ahead(
    model: &FittedModel,
    panel: &LoadPanel,
    covs: &CovariateTable,
    target_class: usize,
    s_next: &[f64],
) -> Result<ForecastBundle, ForecastError> {
    predict(model, panel, covs, target_class, s_next, None)
}

/// Intraday forecast: like day-ahead but additionally weights today's
/// already-observed intervals (`todays_partial`, indexed by interval).
pub fn predict_intraday(
    model: &FittedModel,
    panel: &LoadPanel,
    covs: &CovariateTable,
    target_class: usize,
    s_today: &[f64],
    todays_partial: &[Option<f64>],
) -> Result<ForecastBundle, ForecastError> {
    if model.weights.u == 0 {
        return Err(ForecastError::IntradayRequiresU);
    }
    predict(model, panel, covs, target_class, s_today, Some(todays_partial))
}

fn predict(
    model: &FittedModel,
    panel: &LoadPanel,
    covs: &CovariateTable,
    target_class: usize,
    s_next: &[f64],
    todays_partial: Option<&[Option<f64>]>,
) -> Result<ForecastBundle, ForecastError> {
    let fit = model.class_fit(target_class).ok_or(ForecastError::UnknownClass(target_class))?;
    if s_next.len() != model.basis_specs.len() {
        return Err(ForecastError::CovariateCountMismatch {
            expected: model.basis_specs.len(),
            got: s_next.len(),
        });
    }
    let j_max = model.n_intervals();
    let hist = history_rows(model, panel, covs)?;

    // Past-load component: weighted past loads with their own (current
    // Gamma) weather effect removed.
    let mut mu_hat = vec![0.0; j_max];
    for (t, &i) in hist.iter().enumerate() {
        let aw = model.weights.alpha[t];
        let s_past: Vec<f64> = covs.values.row(i).to_vec();
        for j in 1..=j_max {
            let b_past = b_total_at(model, fit, &s_past, j)?;
            mu_hat[j - 1] += aw * (panel.loads.get(i, j - 1) - b_past);
        }
    }

    // Intraday term: today's observed intervals, lag-dropped/renormalized
    // over the lags that are both inside the day and observed.
    if let Some(partial) = todays_partial {
        for j in 1..=j_max {
            let mut lags: Vec<(usize, f64)> = beta_lags(&model.weights, j)
                .into_iter()
                .filter(|&(lag_j, _)| partial.get(lag_j - 1).map_or(false, Option::is_some))
                .collect();
            let total: f64 = lags.iter().map(|l| l.1).sum();
            if total > 0.0 {
                for l in lags.iter_mut() {
                    l.1 /= total;
                }
            }
            for (lag_j, w) in lags {
                let y_obs = partial[lag_j - 1].expect("filtered to observed");
                let b_today = b_total_at(model, fit, s_next, lag_j)?;
                mu_hat[j - 1] += w * (y_obs - b_today);
            }
        }
    }

    let b_hat = weather_effect_curve(model, target_class, s_next)?;
    let y_hat: Vec<f64> = (0..j_max)
        .map(|j| mu_hat[j] + b_hat.iter().map(|g| g[j]).sum::<f64>())
        .collect();
    Ok(ForecastBundle { y_hat, mu_hat, b_hat, intervals: None, alpha: None })
}

/// Design rows for the forecast day in the training column layout: the
/// forecast satisfies `y_hat[j] = q_offset[j] + row[j] . gamma`. Used for
/// interval construction.
pub fn forecast_rows(
    model: &FittedModel,
    panel: &LoadPanel,
    covs: &CovariateTable,
    s_next: &[f64],
) -> Result<(Mat, Vec<f64>), ForecastError> {
    let j_max = model.n_intervals();
    let q = model.h_spec.count;
    let hist = history_rows(model, panel, covs)?;

    let g_next: Vec<Vec<f64>> = model
        .basis_specs
        .iter()
        .zip(s_next)
        .map(|(spec, &s)| basis::eval_basis(spec, s))
        .collect::<Result<_, _>>()?;
    let mut g_breve: Vec<Vec<f64>> =
        model.basis_specs.iter().map(|spec| vec![0.0; spec.count]).collect();
    for (t, &i) in hist.iter().enumerate() {
        let aw = model.weights.alpha[t];
        for (g_idx, spec) in model.basis_specs.iter().enumerate() {
            let gv = basis::eval_basis(spec, covs.values.get(i, g_idx))?;
            for m in 0..spec.count {
                g_breve[g_idx][m] += aw * gv[m];
            }
        }
    }

    let mut rows = Vec::with_capacity(j_max);
    let mut offsets = Vec::with_capacity(j_max);
    for j in 1..=j_max {
        let h = basis::eval_cyclic_basis(&model.h_spec, j)
            .or_else(|_| basis::eval_basis(&model.h_spec, j as f64))?;
        let mut row = Vec::new();
        for g_idx in 0..model.basis_specs.len() {
            for m in 0..model.basis_specs[g_idx].count {
                let a = g_next[g_idx][m] - g_breve[g_idx][m];
                for qq in 0..q {
                    row.push(a * h[qq]);
                }
            }
        }
        rows.push(row);
        let mut offset = 0.0;
        for (t, &i) in hist.iter().enumerate() {
            offset += model.weights.alpha[t] * panel.loads.get(i, j - 1);
        }
        offsets.push(offset);
    }
    Ok((Mat::from_rows(&rows), offsets))
}

/// Iterated multi-day forecast: each day's prediction is appended as
/// pseudo-history for the next. Errors compound with the horizon; intended
/// for exploratory use only.
pub fn predict_multi_day(
    model: &FittedModel,
    panel: &LoadPanel,
    covs: &CovariateTable,
    targets: &[(usize, Vec<f64>)],
) -> Result<Vec<ForecastBundle>, ForecastError> {
    let mut panel = panel.clone();
    let mut covs = covs.clone();
    let mut out = Vec::with_capacity(targets.len());
    for (class, s_next) in targets {
        let bundle = predict_day_ahead(model, &panel, &covs, *class, s_next)?;
        let n = panel.n_days();
        let mut loads = Mat::zeros(n + 1, panel.n_intervals());
        for i in 0..n {
            for j in 0..panel.n_intervals() {
                loads.set(i, j, panel.loads.get(i, j));
            }
        }
        for j in 0..panel.n_intervals() {
            loads.set(n, j, bundle.y_hat[j]);
        }
        panel.loads = loads;
        panel.epoch_days.push(panel.epoch_days.last().unwrap() + 1);
        panel.valid.push(true);
        panel.day_class.push(*class);
        let mut cov_rows: Vec<Vec<f64>> = (0..n).map(|i| covs.values.row(i).to_vec()).collect();
        cov_rows.push(s_next.clone());
        covs.values = Mat::from_rows(&cov_rows);
        out.push(bundle);
    }
    Ok(out)
}
