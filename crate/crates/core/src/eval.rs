//! Rolling-origin backtesting, MAPE scoring, and tuning-grid selection.
//!
//! The backtest walks an expanding training window day by day, refitting the
//! forecast day's class model each morning. Tuning parameters change at
//! monthly epochs: each grid candidate is fitted on the data before a
//! trailing selection window (default one year) and scored by its day-ahead
//! MAPE over that window; the winner is used until the next epoch.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::basis::BasisKind;
use crate::design::{CovariateTable, LoadPanel, WeightKind};
use crate::forecast::{self, BasisFamily, ForecastError, ModelConfig};
use crate::linalg::Mat;
use crate::solver::Method;

/// Civil date from days since 1970-01-01 (Gregorian, proleptic).
pub fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

/// Days since 1970-01-01 for a civil date.
pub fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = if m > 2 { m - 3 } else { m + 9 } as i64;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

#[derive(Debug, Clone)]
pub enum EvalError {
    EmptyGrid,
    UndefinedMetric,
    LengthMismatch { actuals: usize, forecasts: usize },
    WindowOutOfRange { start: i64, end: i64 },
    InsufficientHistory { needed: usize, available: usize },
    Forecast(ForecastError),
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::EmptyGrid => write!(f, "tuning grid has an empty candidate list"),
            EvalError::UndefinedMetric => {
                write!(f, "MAPE undefined: every actual was excluded (zero or negative)")
            }
            EvalError::LengthMismatch { actuals, forecasts } => {
                write!(f, "length mismatch: {actuals} actuals vs {forecasts} forecasts")
            }
            EvalError::WindowOutOfRange { start, end } => {
                write!(f, "forecast window [{start}, {end}] not covered by the panel")
            }
            EvalError::InsufficientHistory { needed, available } => {
                write!(f, "insufficient pre-window history: need {needed} days, have {available}")
            }
            EvalError::Forecast(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for EvalError {}

impl From<ForecastError> for EvalError {
    fn from(e: ForecastError) -> Self {
        EvalError::Forecast(e)
    }
}

/// MAPE in percent with the exclusion count for nonpositive actuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mape {
    pub value: f64,
    pub excluded: usize,
    pub n_used: usize,
}

/// `100/N * sum |y - yhat| / y` over the entries with positive actuals.
pub fn mape(actuals: &[f64], forecasts: &[f64]) -> Result<Mape, EvalError> {
    if actuals.len() != forecasts.len() {
        return Err(EvalError::LengthMismatch {
            actuals: actuals.len(),
            forecasts: forecasts.len(),
        });
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    let mut excluded = 0usize;
    for (&y, &f) in actuals.iter().zip(forecasts) {
        if y > 0.0 {
            sum += (y - f).abs() / y;
            used += 1;
        } else {
            excluded += 1;
        }
    }
    if used == 0 {
        return Err(EvalError::UndefinedMetric);
    }
    Ok(Mape { value: 100.0 * sum / used as f64, excluded, n_used: used })
}

/// Geometric ladder of `n` values from `lo` to `hi`, optionally prefixed by
/// the exact-zero sentinel.
pub fn lambda_ladder(lo: f64, hi: f64, n: usize, include_zero: bool) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + include_zero as usize);
    if include_zero {
        out.push(0.0);
    }
    if n == 1 {
        out.push(lo);
        return out;
    }
    let log_lo = libm::log(lo);
    let log_hi = libm::log(hi);
    for k in 0..n {
        let f = k as f64 / (n - 1) as f64;
        out.push(libm::exp(log_lo + f * (log_hi - log_lo)));
    }
    // Pin the endpoints so ladders round-trip exactly.
    let zero_off = include_zero as usize;
    out[zero_off] = lo;
    out[zero_off + n - 1] = hi;
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningGrid {
    pub q: Vec<usize>,
    pub m: Vec<usize>,
    pub t: Vec<usize>,
    pub lambda: Vec<f64>,
    pub weight_kinds: Vec<WeightKind>,
}

impl TuningGrid {
    /// The full reference roster: Q, M in {5, 10}, T in {2, 4},
    /// 20 geometric lambdas in [1e-5, 1] plus the zero sentinel, both
    /// weight schemes; 336 candidates in total.
    pub fn reference() -> Self {
        TuningGrid {
            q: vec![5, 10],
            m: vec![5, 10],
            t: vec![2, 4],
            lambda: lambda_ladder(1e-5, 1.0, 20, true),
            weight_kinds: vec![WeightKind::Mean, WeightKind::Ar1],
        }
    }

    pub fn single(q: usize, m: usize, t: usize, lambda: f64, kind: WeightKind) -> Self {
        TuningGrid { q: vec![q], m: vec![m], t: vec![t], lambda: vec![lambda], weight_kinds: vec![kind] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub q: usize,
    pub m: usize,
    pub t: usize,
    pub lambda: f64,
    pub weight_kind: WeightKind,
}

/// Deterministic Cartesian enumeration of the grid.
pub fn grid_enumerate(grid: &TuningGrid) -> Result<Vec<Candidate>, EvalError> {
    if grid.q.is_empty()
        || grid.m.is_empty()
        || grid.t.is_empty()
        || grid.lambda.is_empty()
        || grid.weight_kinds.is_empty()
    {
        return Err(EvalError::EmptyGrid);
    }
    let mut out = Vec::with_capacity(
        grid.q.len() * grid.m.len() * grid.t.len() * grid.lambda.len() * grid.weight_kinds.len(),
    );
    for &q in &grid.q {
        for &m in &grid.m {
            for &t in &grid.t {
                for &kind in &grid.weight_kinds {
                    for &lambda in &grid.lambda {
                        out.push(Candidate { q, m, t, lambda, weight_kind: kind });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Fixed (non-tuned) parts of the backtest configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestProtocol {
    /// First and last forecast epoch day, inclusive.
    pub start_day: i64,
    pub end_day: i64,
    pub h_kind: BasisKind,
    /// Per-covariate basis families; the tuned M overrides spline counts
    /// (polynomial families keep their fixed degree).
    pub basis_kinds: Vec<BasisKind>,
    pub u: usize,
    pub l_alpha: usize,
    pub l_beta: usize,
    /// Trailing selection window in days; shrinks with a flag when history
    /// is shorter.
    pub selection_window_days: i64,
    pub method: Method,
}

impl BacktestProtocol {
    pub fn day_ahead(start_day: i64, end_day: i64, n_covariates: usize) -> Self {
        BacktestProtocol {
            start_day,
            end_day,
            h_kind: BasisKind::CyclicCubicBSpline,
            basis_kinds: vec![BasisKind::CubicBSpline; n_covariates],
            u: 0,
            l_alpha: 1,
            l_beta: 1,
            selection_window_days: 365,
            method: Method::Nnls,
        }
    }

    pub fn config_for(&self, c: &Candidate) -> ModelConfig {
        let bases = self
            .basis_kinds
            .iter()
            .map(|&kind| BasisFamily {
                kind,
                count: match kind {
                    BasisKind::CubicPolynomial | BasisKind::NegatedCubicPolynomial => 3,
                    _ => c.m,
                },
            })
            .collect();
        ModelConfig {
            q: c.q,
            h_kind: self.h_kind,
            bases,
            weight_kind: c.weight_kind,
            t: c.t,
            u: self.u,
            l_alpha: self.l_alpha,
            l_beta: self.l_beta,
            lambda: c.lambda,
            method: self.method,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForecastRecord {
    pub epoch_day: i64,
    /// 1-based interval index.
    pub interval: usize,
    pub actual: f64,
    pub y_hat: f64,
    pub mu_hat: f64,
    pub b_hat: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DailyScore {
    pub epoch_day: i64,
    pub mape: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone)]
pub struct MonthlyScore {
    pub year: i64,
    pub month: u32,
    /// Mean of the member daily MAPE values.
    pub mape: f64,
    pub n_days: usize,
}

#[derive(Debug, Clone)]
pub struct EpochChoice {
    pub epoch_day: i64,
    pub candidate: Candidate,
    pub selection_mape: f64,
    pub window_days: i64,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub daily: Vec<DailyScore>,
    pub monthly: Vec<MonthlyScore>,
    pub chosen: Vec<EpochChoice>,
    pub records: Vec<ForecastRecord>,
    /// Days inside the window skipped because the target day was invalid or
    /// lacked history.
    pub skipped_days: Vec<i64>,
    pub selection_window_shrunk: bool,
}

fn panel_prefix(panel: &LoadPanel, covs: &CovariateTable, n_rows: usize) -> (LoadPanel, CovariateTable) {
    let mut loads = Mat::zeros(n_rows, panel.n_intervals());
    for i in 0..n_rows {
        for j in 0..panel.n_intervals() {
            loads.set(i, j, panel.loads.get(i, j));
        }
    }
    let p = LoadPanel {
        loads,
        epoch_days: panel.epoch_days[..n_rows].to_vec(),
        valid: panel.valid[..n_rows].to_vec(),
        day_class: panel.day_class[..n_rows].to_vec(),
        class_names: panel.class_names.clone(),
    };
    let rows: Vec<Vec<f64>> = (0..n_rows).map(|i| covs.values.row(i).to_vec()).collect();
    let c = CovariateTable {
        values: Mat::from_rows(&rows),
        names: covs.names.clone(),
        basis_assignment: covs.basis_assignment.clone(),
    };
    (p, c)
}

/// Day-ahead forecast of panel row `target` using only rows before it,
/// refitting `config` for the target's class on the truncated history.
fn forecast_one_day(
    panel: &LoadPanel,
    covs: &CovariateTable,
    config: &ModelConfig,
    target: usize,
) -> Result<forecast::ForecastBundle, ForecastError> {
    let (hist_panel, hist_covs) = panel_prefix(panel, covs, target);
    let class = panel.day_class[target];
    let model = forecast::fit_classes(&hist_panel, &hist_covs, config, Some(&[class]))?;
    let s_next: Vec<f64> = covs.values.row(target).to_vec();
    forecast::predict_day_ahead(&model, &hist_panel, &hist_covs, class, &s_next)
}

/// Scores a candidate over selection-window rows `[win_start, win_end)`:
/// fit once on the rows before the window, then day-ahead forecast each
/// scorable window day from its own truncated history.
fn score_candidate(
    panel: &LoadPanel,
    covs: &CovariateTable,
    config: &ModelConfig,
    win_start: usize,
    win_end: usize,
) -> Result<f64, EvalError> {
    let (train_panel, train_covs) = panel_prefix(panel, covs, win_start);
    let classes: Vec<usize> = {
        let mut c: Vec<usize> =
            panel.day_class[win_start..win_end].iter().copied().collect();
        c.sort_unstable();
        c.dedup();
        c
    };
    let model = forecast::fit_classes(&train_panel, &train_covs, config, Some(&classes))?;
    let mut actuals = Vec::new();
    let mut preds = Vec::new();
    for i in win_start..win_end {
        if !panel.valid[i] {
            continue;
        }
        let (hist_panel, hist_covs) = panel_prefix(panel, covs, i);
        let s: Vec<f64> = covs.values.row(i).to_vec();
        if !s.iter().all(|v| v.is_finite()) {
            continue;
        }
        let bundle =
            match forecast::predict_day_ahead(&model, &hist_panel, &hist_covs, panel.day_class[i], &s)
            {
                Ok(b) => b,
                Err(ForecastError::MissingHistory { .. }) | Err(ForecastError::UnknownClass(_)) => {
                    continue
                }
                Err(e) => return Err(e.into()),
            };
        for j in 0..panel.n_intervals() {
            actuals.push(panel.loads.get(i, j));
            preds.push(bundle.y_hat[j]);
        }
    }
    match mape(&actuals, &preds) {
        Ok(m) => Ok(m.value),
        Err(EvalError::UndefinedMetric) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Scores every grid candidate over the trailing selection window ending
/// the day before `target_day`. Returns `(candidate, window MAPE)` in
/// enumeration order; infeasible candidates score infinity.
pub fn score_grid(
    panel: &LoadPanel,
    covs: &CovariateTable,
    grid: &TuningGrid,
    protocol: &BacktestProtocol,
    target_day: i64,
) -> Result<(Vec<(Candidate, f64)>, i64), EvalError> {
    let candidates = grid_enumerate(grid)?;
    let first = *panel
        .epoch_days
        .first()
        .ok_or(EvalError::WindowOutOfRange { start: target_day, end: target_day })?;
    let last = *panel.epoch_days.last().unwrap();
    if target_day < first || target_day > last + 1 {
        return Err(EvalError::WindowOutOfRange { start: target_day, end: target_day });
    }
    let i = (target_day - first) as usize;
    if i < 3 {
        return Err(EvalError::InsufficientHistory { needed: 3, available: i });
    }
    let mut window = protocol.selection_window_days.min(i as i64 - 1).max(1);
    let win_end = i;
    let mut win_start = win_end - window as usize;
    if win_start < 2 {
        win_start = 2.min(win_end.saturating_sub(1));
        window = (win_end - win_start) as i64;
    }
    let mut out = Vec::with_capacity(candidates.len());
    for cand in &candidates {
        let config = protocol.config_for(cand);
        let score = match score_candidate(panel, covs, &config, win_start, win_end) {
            Ok(s) => s,
            Err(EvalError::Forecast(_)) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        out.push((*cand, score));
    }
    Ok((out, window))
}

/// Prefer smaller MAPE; on ties prefer larger lambda, then smaller Q, M, T.
pub fn better(score: f64, cand: &Candidate, best_score: f64, best: &Candidate) -> bool {
    if score != best_score {
        return score < best_score;
    }
    if cand.lambda != best.lambda {
        return cand.lambda > best.lambda;
    }
    (cand.q, cand.m, cand.t) < (best.q, best.m, best.t)
}

/// Expanding-window day-ahead backtest with monthly tuning epochs.
pub fn rolling_backtest(
    panel: &LoadPanel,
    covs: &CovariateTable,
    grid: &TuningGrid,
    protocol: &BacktestProtocol,
) -> Result<BacktestReport, EvalError> {
    grid_enumerate(grid)?;
    let first = *panel.epoch_days.first().ok_or(EvalError::WindowOutOfRange {
        start: protocol.start_day,
        end: protocol.end_day,
    })?;
    let last = *panel.epoch_days.last().unwrap();
    if protocol.start_day < first
        || protocol.end_day > last
        || protocol.start_day > protocol.end_day
    {
        return Err(EvalError::WindowOutOfRange {
            start: protocol.start_day,
            end: protocol.end_day,
        });
    }
    let start_idx = (protocol.start_day - first) as usize;
    if start_idx < 2 {
        return Err(EvalError::InsufficientHistory { needed: 2, available: start_idx });
    }

    let mut report = BacktestReport {
        daily: Vec::new(),
        monthly: Vec::new(),
        chosen: Vec::new(),
        records: Vec::new(),
        skipped_days: Vec::new(),
        selection_window_shrunk: false,
    };
    let mut current: Option<Candidate> = None;
    let mut last_month: Option<(i64, u32)> = None;

    for day in protocol.start_day..=protocol.end_day {
        let i = (day - first) as usize;
        let (y, m, _) = civil_from_days(day);
        if last_month != Some((y, m)) {
            // Tuning epoch: score every candidate over the trailing window.
            let (scores, window) = score_grid(panel, covs, grid, protocol, day)?;
            if window < protocol.selection_window_days {
                report.selection_window_shrunk = true;
            }
            let mut best: Option<(f64, Candidate)> = None;
            for (cand, score) in &scores {
                best = match best {
                    None => Some((*score, *cand)),
                    Some((bs, bc)) if better(*score, cand, bs, &bc) => Some((*score, *cand)),
                    keep => keep,
                };
            }
            let (score, cand) = best.expect("grid enumeration is nonempty");
            report.chosen.push(EpochChoice {
                epoch_day: day,
                candidate: cand,
                selection_mape: score,
                window_days: window,
            });
            current = Some(cand);
            last_month = Some((y, m));
        }

        let cand = current.expect("tuning epoch ran before first forecast");
        if !panel.valid[i] || !covs.values.row(i).iter().all(|v| v.is_finite()) {
            report.skipped_days.push(day);
            continue;
        }
        let config = protocol.config_for(&cand);
        let bundle = match forecast_one_day(panel, covs, &config, i) {
            Ok(b) => b,
            Err(ForecastError::MissingHistory { .. }) | Err(ForecastError::EmptyClass { .. }) => {
                report.skipped_days.push(day);
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let mut actuals = Vec::with_capacity(panel.n_intervals());
        for j in 0..panel.n_intervals() {
            let actual = panel.loads.get(i, j);
            actuals.push(actual);
            report.records.push(ForecastRecord {
                epoch_day: day,
                interval: j + 1,
                actual,
                y_hat: bundle.y_hat[j],
                mu_hat: bundle.mu_hat[j],
                b_hat: bundle.b_hat.iter().map(|g| g[j]).collect(),
            });
        }
        match mape(&actuals, &bundle.y_hat) {
            Ok(score) => report.daily.push(DailyScore {
                epoch_day: day,
                mape: score.value,
                excluded: score.excluded,
            }),
            Err(EvalError::UndefinedMetric) => report.skipped_days.push(day),
            Err(e) => return Err(e),
        }
    }

    // Monthly aggregation: mean of the member daily MAPE values.
    let mut month_keys: Vec<(i64, u32)> = Vec::new();
    for d in &report.daily {
        let (y, m, _) = civil_from_days(d.epoch_day);
        if month_keys.last() != Some(&(y, m)) {
            month_keys.push((y, m));
        }
    }
    for (y, m) in month_keys {
        let members: Vec<f64> = report
            .daily
            .iter()
            .filter(|d| {
                let (dy, dm, _) = civil_from_days(d.epoch_day);
                (dy, dm) == (y, m)
            })
            .map(|d| d.mape)
            .collect();
        report.monthly.push(MonthlyScore {
            year: y,
            month: m,
            mape: members.iter().sum::<f64>() / members.len() as f64,
            n_days: members.len(),
        });
    }
    Ok(report)
}

/// MAPE as a function of lambda with everything else fixed: one
/// single-candidate backtest per ladder entry. Feeds the lambda-sweep plot.
pub fn lambda_sweep(
    panel: &LoadPanel,
    covs: &CovariateTable,
    base: &Candidate,
    lambdas: &[f64],
    protocol: &BacktestProtocol,
) -> Result<Vec<(f64, f64)>, EvalError> {
    let mut out = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let grid = TuningGrid::single(base.q, base.m, base.t, lambda, base.weight_kind);
        let report = rolling_backtest(panel, covs, &grid, protocol)?;
        let total = if report.daily.is_empty() {
            f64::INFINITY
        } else {
            report.daily.iter().map(|d| d.mape).sum::<f64>() / report.daily.len() as f64
        };
        out.push((lambda, total));
    }
    Ok(out)
}
