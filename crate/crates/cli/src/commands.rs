//! Subcommand implementations. All tables are CSV with fixed, documented
//! column orders; reruns with identical inputs rewrite identical bytes.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;

use loadcast_core::basis;
use loadcast_core::design::{self, CovariateTable, LoadPanel};
use loadcast_core::eval::{self, BacktestProtocol};
use loadcast_core::forecast::{self, FittedModel, ForecastBundle};
use loadcast_core::inference::{self, IntervalOptions};
use loadcast_core::linalg::Mat;

use crate::config::{self, weight_kind_name, FileConfig, Mode};
use crate::ingest::{self, date_of, epoch_day, DayClassScheme, Ingested};
use crate::persist;

pub struct DataPaths<'a> {
    pub loads: &'a Path,
    pub covariates: Option<&'a Path>,
    pub holidays: Option<&'a Path>,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
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

fn class_for_day(scheme: DayClassScheme, holidays: &HashSet<i64>, day: i64) -> usize {
    let wd = (((day + 3) % 7 + 7) % 7) as usize; // 0 = Monday
    let is_holiday = holidays.contains(&day);
    match scheme {
        DayClassScheme::PerWeekday => {
            if is_holiday {
                6
            } else {
                wd
            }
        }
        DayClassScheme::WorkdayHoliday => {
            if is_holiday || wd >= 5 {
                1
            } else {
                0
            }
        }
    }
}

pub fn cmd_fit(
    cfg: &FileConfig,
    data: &DataPaths,
    model_out: &Path,
) -> Result<()> {
    let opts = config::ingest_options(cfg)?;
    let model_config = config::model_config(cfg)?;
    let ing = ingest::ingest(data.loads, data.covariates, data.holidays, &opts)?;
    let model = forecast::fit(&ing.panel, &ing.covs, &model_config)
        .map_err(|e| anyhow!("fit failed: {e}"))?;
    persist::save_model(model_out, &model, &opts)?;
    let p: usize = model.config.bases.iter().map(|b| b.count * model.config.q).sum();
    println!(
        "fitted {} day-class models ({} columns each) over {} days; {} invalid days",
        model.classes.len(),
        p,
        ing.panel.n_days(),
        ing.invalid_days.len()
    );
    Ok(())
}

struct ForecastSetup {
    model: FittedModel,
    hist_panel: LoadPanel,
    hist_covs: CovariateTable,
    full: Ingested,
    class: usize,
    s_next: Vec<f64>,
    day: i64,
}

fn setup_forecast(model_path: &Path, data: &DataPaths, date: NaiveDate) -> Result<ForecastSetup> {
    let (model, opts) = persist::load_model(model_path)?;
    let full = ingest::ingest(data.loads, data.covariates, data.holidays, &opts)?;
    let day = epoch_day(date);
    let first = full.panel.epoch_days[0];
    let last = *full.panel.epoch_days.last().unwrap();
    if day <= first || day > last {
        bail!("target date {date} outside the data range ({} .. {})", date_of(first), date_of(last));
    }
    let target_idx = (day - first) as usize;
    let s_next: Vec<f64> = full.covs.values.row(target_idx).to_vec();
    if !s_next.iter().all(|v| v.is_finite()) {
        bail!("covariates for {date} are missing or non-finite");
    }
    let class = class_for_day(opts.day_class_scheme, &full.holidays, day);
    let (hist_panel, hist_covs) = panel_prefix(&full.panel, &full.covs, target_idx);
    Ok(ForecastSetup { model, hist_panel, hist_covs, full, class, s_next, day })
}

fn run_forecast(setup: &ForecastSetup, mode: Mode) -> Result<ForecastBundle> {
    match mode {
        Mode::DayAhead => forecast::predict_day_ahead(
            &setup.model,
            &setup.hist_panel,
            &setup.hist_covs,
            setup.class,
            &setup.s_next,
        ),
        Mode::Intraday => {
            let j_max = setup.model.n_intervals();
            let partial = setup
                .full
                .partial
                .get(&setup.day)
                .cloned()
                .unwrap_or_else(|| vec![None; j_max]);
            forecast::predict_intraday(
                &setup.model,
                &setup.hist_panel,
                &setup.hist_covs,
                setup.class,
                &setup.s_next,
                &partial,
            )
        }
    }
    .map_err(|e| anyhow!("forecast failed: {e}"))
}

/// Columns: date,interval,y_hat,mu_hat,b_total
pub fn cmd_forecast(
    model_path: &Path,
    data: &DataPaths,
    date: NaiveDate,
    mode: Mode,
    out: &Path,
) -> Result<()> {
    let setup = setup_forecast(model_path, data, date)?;
    let bundle = run_forecast(&setup, mode)?;
    let mut text = String::from("date,interval,y_hat,mu_hat,b_total\n");
    for j in 0..bundle.y_hat.len() {
        text.push_str(&format!(
            "{date},{},{},{},{}\n",
            j + 1,
            bundle.y_hat[j],
            bundle.mu_hat[j],
            bundle.b_hat_total(j)
        ));
    }
    write_file(out, text.as_bytes())?;
    println!("wrote {} ({} intervals)", out.display(), bundle.y_hat.len());
    Ok(())
}

/// Columns: date,interval,y_hat,mu_hat,b_<name> per covariate group.
pub fn cmd_decompose(
    model_path: &Path,
    data: &DataPaths,
    date: NaiveDate,
    mode: Mode,
    out: &Path,
) -> Result<()> {
    let setup = setup_forecast(model_path, data, date)?;
    let bundle = run_forecast(&setup, mode)?;
    let mut text = String::from("date,interval,y_hat,mu_hat");
    for name in &setup.model.covariate_names {
        text.push_str(&format!(",b_{name}"));
    }
    text.push('\n');
    for j in 0..bundle.y_hat.len() {
        text.push_str(&format!("{date},{},{},{}", j + 1, bundle.y_hat[j], bundle.mu_hat[j]));
        for g in &bundle.b_hat {
            text.push_str(&format!(",{}", g[j]));
        }
        text.push('\n');
    }
    write_file(out, text.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

/// Columns: date,interval,y_hat,lo,hi,alpha
pub fn cmd_interval(
    model_path: &Path,
    data: &DataPaths,
    date: NaiveDate,
    alpha: f64,
    out: &Path,
) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        bail!("alpha must lie in (0, 1), got {alpha}");
    }
    let setup = setup_forecast(model_path, data, date)?;
    let bundle = run_forecast(&setup, Mode::DayAhead)?;
    let model = &setup.model;
    let fitc = model
        .class_fit(setup.class)
        .ok_or_else(|| anyhow!("model has no fit for class index {}", setup.class))?;
    if fitc.active_set.is_empty() {
        bail!("interval undefined: the NNLS support for this day class is empty");
    }
    if !fitc.sigma2.is_finite() {
        bail!("interval undefined: no residual degrees of freedom in the stored fit");
    }

    // Rebuild the training system this model's selection refers to.
    let frozen = CovariateTable {
        values: setup.hist_covs.values.clone(),
        names: setup.hist_covs.names.clone(),
        basis_assignment: model.basis_specs.clone(),
    };
    let sys =
        design::assemble(&setup.hist_panel, &frozen, &model.weights, &model.h_spec, setup.class)
            .map_err(|e| anyhow!("assembling the class design: {e}"))?;
    let (rows, offsets) =
        forecast::forecast_rows(model, &setup.hist_panel, &setup.hist_covs, &setup.s_next)
            .map_err(|e| anyhow!("building forecast rows: {e}"))?;

    let options = IntervalOptions {
        lambda: model.config.lambda,
        prediction: true,
        ..IntervalOptions::default()
    };
    let mut text = String::from("date,interval,y_hat,lo,hi,alpha\n");
    for j in 0..model.n_intervals() {
        let x_new: Vec<f64> = fitc.active_set.iter().map(|&c| rows.row(j)[c]).collect();
        let iv = inference::selective_interval(
            &sys.x,
            &sys.y_tilde,
            &fitc.active_set,
            &x_new,
            fitc.sigma2,
            alpha,
            &options,
        )
        .map_err(|e| anyhow!("interval for interval {}: {e}", j + 1))?;
        text.push_str(&format!(
            "{date},{},{},{},{},{alpha}\n",
            j + 1,
            bundle.y_hat[j],
            offsets[j] + iv.lo,
            offsets[j] + iv.hi
        ));
    }
    write_file(out, text.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn backtest_protocol(cfg: &FileConfig, n_covariates: usize) -> Result<BacktestProtocol> {
    let section = cfg.backtest.as_ref().context("config is missing the [backtest] section")?;
    let start = epoch_day(ingest::parse_date(&section.start)?);
    let end = epoch_day(ingest::parse_date(&section.end)?);
    let model_config = config::model_config(cfg)?;
    if model_config.bases.len() != n_covariates {
        bail!(
            "config declares {} covariates but the data yields {}",
            model_config.bases.len(),
            n_covariates
        );
    }
    Ok(BacktestProtocol {
        start_day: start,
        end_day: end,
        h_kind: model_config.h_kind,
        basis_kinds: model_config.bases.iter().map(|b| b.kind).collect(),
        u: model_config.u,
        l_alpha: model_config.l_alpha,
        l_beta: model_config.l_beta,
        selection_window_days: section.selection_window_days.unwrap_or(365),
        method: model_config.method,
    })
}

/// Columns: rank,q,m,t,lambda,weight_kind,mape,window_days
pub fn cmd_tune(cfg: &FileConfig, data: &DataPaths, date: NaiveDate, out: &Path) -> Result<()> {
    let opts = config::ingest_options(cfg)?;
    let ing = ingest::ingest(data.loads, data.covariates, data.holidays, &opts)?;
    let grid = config::tuning_grid(cfg)?;
    let protocol = backtest_protocol(cfg, ing.covs.n_covariates())?;
    let (mut scores, window) =
        eval::score_grid(&ing.panel, &ing.covs, &grid, &protocol, epoch_day(date))
            .map_err(|e| anyhow!("tuning failed: {e}"))?;
    scores.sort_by(|(ca, sa), (cb, sb)| {
        if eval::better(*sa, ca, *sb, cb) {
            std::cmp::Ordering::Less
        } else {
            std::cmp::Ordering::Greater
        }
    });
    let mut text = String::from("rank,q,m,t,lambda,weight_kind,mape,window_days\n");
    for (rank, (c, score)) in scores.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{},{},{},{},{:.9},{window}\n",
            rank + 1,
            c.q,
            c.m,
            c.t,
            c.lambda,
            weight_kind_name(c.weight_kind),
            score
        ));
    }
    write_file(out, text.as_bytes())?;
    println!("wrote {} ({} candidates)", out.display(), scores.len());
    Ok(())
}

/// Writes daily.csv, monthly.csv, chosen.csv, records.csv, skipped.csv.
pub fn cmd_backtest(cfg: &FileConfig, data: &DataPaths, out_dir: &Path) -> Result<()> {
    let opts = config::ingest_options(cfg)?;
    let ing = ingest::ingest(data.loads, data.covariates, data.holidays, &opts)?;
    let grid = config::tuning_grid(cfg)?;
    let protocol = backtest_protocol(cfg, ing.covs.n_covariates())?;
    let report = eval::rolling_backtest(&ing.panel, &ing.covs, &grid, &protocol)
        .map_err(|e| anyhow!("backtest failed: {e}"))?;
    std::fs::create_dir_all(out_dir)?;

    let mut daily = String::from("date,mape,excluded\n");
    for d in &report.daily {
        daily.push_str(&format!("{},{:.9},{}\n", date_of(d.epoch_day), d.mape, d.excluded));
    }
    write_file(&out_dir.join("daily.csv"), daily.as_bytes())?;

    let mut monthly = String::from("year,month,mape,n_days\n");
    for m in &report.monthly {
        monthly.push_str(&format!("{},{},{:.9},{}\n", m.year, m.month, m.mape, m.n_days));
    }
    write_file(&out_dir.join("monthly.csv"), monthly.as_bytes())?;

    let mut chosen = String::from("date,q,m,t,lambda,weight_kind,selection_mape,window_days\n");
    for c in &report.chosen {
        chosen.push_str(&format!(
            "{},{},{},{},{},{},{:.9},{}\n",
            date_of(c.epoch_day),
            c.candidate.q,
            c.candidate.m,
            c.candidate.t,
            c.candidate.lambda,
            weight_kind_name(c.candidate.weight_kind),
            c.selection_mape,
            c.window_days
        ));
    }
    write_file(&out_dir.join("chosen.csv"), chosen.as_bytes())?;

    let mut records = String::from("date,interval,actual,y_hat,mu_hat");
    for name in &ing.covs.names {
        records.push_str(&format!(",b_{name}"));
    }
    records.push('\n');
    for r in &report.records {
        records.push_str(&format!(
            "{},{},{},{},{}",
            date_of(r.epoch_day),
            r.interval,
            r.actual,
            r.y_hat,
            r.mu_hat
        ));
        for b in &r.b_hat {
            records.push_str(&format!(",{b}"));
        }
        records.push('\n');
    }
    write_file(&out_dir.join("records.csv"), records.as_bytes())?;

    let mut skipped = String::from("date\n");
    for d in &report.skipped_days {
        skipped.push_str(&format!("{}\n", date_of(*d)));
    }
    write_file(&out_dir.join("skipped.csv"), skipped.as_bytes())?;

    println!(
        "backtested {} days over {} months; wrote tables to {}",
        report.daily.len(),
        report.monthly.len(),
        out_dir.display()
    );
    Ok(())
}

/// Writes coeff_curves.csv (the fitted coefficient curves over a dense
/// time-of-day grid) and weather_curves.csv (weather effect vs covariate
/// value per interval), one per day class. Optionally lambda_mape.csv when
/// data paths and a [grid]+[backtest] config are supplied.
pub fn cmd_emit_plots(
    cfg: &FileConfig,
    model_path: &Path,
    data: Option<&DataPaths>,
    out_dir: &Path,
) -> Result<()> {
    let (model, _opts) = persist::load_model(model_path)?;
    std::fs::create_dir_all(out_dir)?;
    let q = model.h_spec.count;
    let j_max = model.n_intervals();

    // Coefficient curves beta_m(j) = sum_q gamma_qm h_q(j) on a dense grid.
    let mut curves = String::from("class,covariate,m,j,value\n");
    for fitc in &model.classes {
        let class_name = &model.class_names[fitc.class];
        let steps = 200usize;
        for step in 0..=steps {
            let j = 1.0 + (j_max as f64) * step as f64 / steps as f64;
            let h = basis::eval_cyclic_at(&model.h_spec, j);
            let mut col = 0usize;
            for (g_idx, spec) in model.basis_specs.iter().enumerate() {
                for m in 0..spec.count {
                    let value: f64 =
                        (0..q).map(|qq| fitc.gamma[col + m * q + qq] * h[qq]).sum();
                    curves.push_str(&format!(
                        "{class_name},{},{},{j},{value}\n",
                        model.covariate_names[g_idx],
                        m + 1
                    ));
                }
                col += spec.count * q;
            }
        }
    }
    write_file(&out_dir.join("coeff_curves.csv"), curves.as_bytes())?;

    // Weather-effect curves: vary one covariate over its frozen domain with
    // the others held at their domain midpoint.
    let midpoint = |spec: &basis::BasisSpec| -> f64 {
        if spec.domain_lo.is_finite() && spec.domain_hi.is_finite() {
            0.5 * (spec.domain_lo + spec.domain_hi)
        } else {
            0.0
        }
    };
    let mut weather = String::from("class,covariate,s,interval,b_hat\n");
    for fitc in &model.classes {
        let class_name = &model.class_names[fitc.class];
        for (c, spec) in model.basis_specs.iter().enumerate() {
            let (lo, hi) = if spec.domain_lo.is_finite() && spec.domain_hi.is_finite() {
                (spec.domain_lo, spec.domain_hi)
            } else {
                (0.0, 1.0)
            };
            let steps = 100usize;
            for step in 0..=steps {
                let s_val = lo + (hi - lo) * step as f64 / steps as f64;
                let s: Vec<f64> = model
                    .basis_specs
                    .iter()
                    .enumerate()
                    .map(|(k, sp)| if k == c { s_val } else { midpoint(sp) })
                    .collect();
                let b = forecast::weather_effect_curve(&model, fitc.class, &s)
                    .map_err(|e| anyhow!("weather curve: {e}"))?;
                for j in 0..j_max {
                    weather.push_str(&format!(
                        "{class_name},{},{s_val},{},{}\n",
                        model.covariate_names[c],
                        j + 1,
                        b[c][j]
                    ));
                }
            }
        }
    }
    write_file(&out_dir.join("weather_curves.csv"), weather.as_bytes())?;

    // Optional lambda-vs-MAPE sweep when data and grid/backtest config exist.
    if let (Some(data), Some(_), Some(_)) = (data, cfg.grid.as_ref(), cfg.backtest.as_ref()) {
        let opts = config::ingest_options(cfg)?;
        let ing = ingest::ingest(data.loads, data.covariates, data.holidays, &opts)?;
        let grid = config::tuning_grid(cfg)?;
        let protocol = backtest_protocol(cfg, ing.covs.n_covariates())?;
        let base = loadcast_core::eval::Candidate {
            q: grid.q[0],
            m: grid.m[0],
            t: grid.t[0],
            lambda: 0.0,
            weight_kind: grid.weight_kinds[0],
        };
        let sweep = eval::lambda_sweep(&ing.panel, &ing.covs, &base, &grid.lambda, &protocol)
            .map_err(|e| anyhow!("lambda sweep: {e}"))?;
        let mut text = String::from("lambda,mape\n");
        for (lambda, m) in sweep {
            text.push_str(&format!("{lambda},{m:.9}\n"));
        }
        write_file(&out_dir.join("lambda_mape.csv"), text.as_bytes())?;
    }

    println!("wrote plot data to {}", out_dir.display());
    Ok(())
}

pub fn require_path(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    p.clone().with_context(|| format!("missing required flag --{flag}"))
}
