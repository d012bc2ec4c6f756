//! CSV ingestion: loads panel, covariates, holidays, day classes, and the
//! robust outlier screen.
//!
//! Loads file: `date,interval,load` with ISO dates and 1-based interval
//! indices. Covariates file: `date` plus named numeric columns. Holidays
//! file: one ISO date per line. Calendar gaps become invalid rows so that
//! row arithmetic stays day arithmetic.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;

use loadcast_core::design::{CovariateTable, LoadPanel};
use loadcast_core::eval::civil_from_days;
use loadcast_core::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayClassScheme {
    /// Mon..Sun, with holidays remapped to the Sunday class.
    PerWeekday,
    /// Workday vs holiday (weekends and listed holidays).
    WorkdayHoliday,
}

#[derive(Debug, Clone)]
pub enum CovariateDirective {
    /// A column taken directly from the covariates file.
    Column { name: String },
    /// Trailing moving average of a source column over `window` days, the
    /// window ending the day before; only full windows produce values.
    MovingAverage { name: String, source: String, window: usize },
}

impl CovariateDirective {
    pub fn name(&self) -> &str {
        match self {
            CovariateDirective::Column { name } => name,
            CovariateDirective::MovingAverage { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub mad_threshold: f64,
    pub day_class_scheme: DayClassScheme,
    pub covariates: Vec<CovariateDirective>,
}

pub fn epoch_day(date: NaiveDate) -> i64 {
    date.signed_duration_since(NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days()
}

pub fn date_of(epoch: i64) -> NaiveDate {
    let (y, m, d) = civil_from_days(epoch);
    NaiveDate::from_ymd_opt(y as i32, m, d).expect("civil_from_days produces valid dates")
}

pub fn parse_date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .with_context(|| format!("invalid date '{s}' (expected YYYY-MM-DD)"))
}

/// 0 = Monday .. 6 = Sunday.
fn weekday_index(epoch: i64) -> usize {
    (((epoch + 3) % 7 + 7) % 7) as usize
}

fn read_holidays(path: Option<&Path>) -> Result<HashSet<i64>> {
    let mut out = HashSet::new();
    if let Some(p) = path {
        let text =
            std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line == "date" {
                continue;
            }
            let date = parse_date(line)
                .with_context(|| format!("{}:{}", p.display(), lineno + 1))?;
            out.insert(epoch_day(date));
        }
    }
    Ok(out)
}

struct LoadsFile {
    /// Per date: interval -> load.
    days: BTreeMap<i64, HashMap<usize, f64>>,
    j_max: usize,
}

fn read_loads(path: &Path) -> Result<LoadsFile> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let need = ["date", "interval", "load"];
    let idx: Vec<usize> = need
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .with_context(|| format!("{}: missing column '{n}'", path.display()))
        })
        .collect::<Result<_>>()?;
    let mut days: BTreeMap<i64, HashMap<usize, f64>> = BTreeMap::new();
    let mut j_max = 0usize;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let at = |i: usize| -> Result<&str> {
            record
                .get(idx[i])
                .with_context(|| format!("{}:{line}: short row", path.display()))
        };
        let date =
            parse_date(at(0)?).with_context(|| format!("{}:{line}", path.display()))?;
        let interval: usize = at(1)?
            .parse()
            .with_context(|| format!("{}:{line}: bad interval index", path.display()))?;
        if interval == 0 {
            bail!("{}:{line}: interval indices are 1-based", path.display());
        }
        let load: f64 = at(2)?
            .parse()
            .with_context(|| format!("{}:{line}: bad load value", path.display()))?;
        j_max = j_max.max(interval);
        let day = days.entry(epoch_day(date)).or_default();
        if day.insert(interval, load).is_some() {
            bail!("{}:{line}: duplicate (date, interval) = ({date}, {interval})", path.display());
        }
    }
    if days.is_empty() {
        bail!("{}: no load rows", path.display());
    }
    Ok(LoadsFile { days, j_max })
}

fn read_covariate_file(path: &Path) -> Result<(Vec<String>, BTreeMap<i64, Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    if headers.get(0) != Some("date") {
        bail!("{}: first column must be 'date'", path.display());
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let mut rows = BTreeMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let date = parse_date(record.get(0).unwrap_or(""))
            .with_context(|| format!("{}:{line}", path.display()))?;
        let mut vals = Vec::with_capacity(names.len());
        for k in 0..names.len() {
            let raw = record.get(k + 1).unwrap_or("");
            let v: f64 = if raw.is_empty() {
                f64::NAN
            } else {
                raw.parse().with_context(|| {
                    format!("{}:{line}: bad value in column '{}'", path.display(), names[k])
                })?
            };
            vals.push(v);
        }
        if rows.insert(epoch_day(date), vals).is_some() {
            bail!("{}:{line}: duplicate date {date}", path.display());
        }
    }
    Ok((names, rows))
}

/// Robust screen: a day becomes invalid when any of its loads sits more
/// than `threshold` MADs from its day-class/interval median.
fn mad_screen(panel: &mut LoadPanel, threshold: f64) {
    if !(threshold > 0.0) {
        return;
    }
    let n = panel.n_days();
    let j_max = panel.n_intervals();
    let n_classes = panel.class_names.len();
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let k = v.len();
        if k % 2 == 1 {
            v[k / 2]
        } else {
            0.5 * (v[k / 2 - 1] + v[k / 2])
        }
    };
    let mut flagged = vec![false; n];
    for class in 0..n_classes {
        for j in 0..j_max {
            let mut vals: Vec<f64> = (0..n)
                .filter(|&i| panel.valid[i] && panel.day_class[i] == class)
                .map(|i| panel.loads.get(i, j))
                .collect();
            // small cells give unusable robust scale estimates
            if vals.len() < 10 {
                continue;
            }
            let med = median(&mut vals);
            let mut devs: Vec<f64> =
                vals.iter().map(|v| (v - med).abs()).collect();
            // 1.4826 makes the MAD a consistent sigma estimate under normality
            let scale = 1.4826 * median(&mut devs);
            if !(scale > 0.0) {
                continue;
            }
            for i in 0..n {
                if panel.valid[i]
                    && panel.day_class[i] == class
                    && (panel.loads.get(i, j) - med).abs() > threshold * scale
                {
                    flagged[i] = true;
                }
            }
        }
    }
    for i in 0..n {
        if flagged[i] {
            panel.valid[i] = false;
        }
    }
}

#[derive(Debug)]
pub struct Ingested {
    pub panel: LoadPanel,
    pub covs: CovariateTable,
    /// Epoch days present in the files but marked invalid, with reasons.
    pub invalid_days: Vec<(i64, String)>,
    /// Holiday epoch days from the holidays file.
    pub holidays: HashSet<i64>,
    /// Observed intervals per day (also for incomplete days); feeds
    /// intraday forecasting.
    pub partial: BTreeMap<i64, Vec<Option<f64>>>,
}

pub fn ingest(
    loads_path: &Path,
    covs_path: Option<&Path>,
    holidays_path: Option<&Path>,
    opts: &IngestOptions,
) -> Result<Ingested> {
    let loads = read_loads(loads_path)?;
    let holidays = read_holidays(holidays_path)?;
    let first = *loads.days.keys().next().unwrap();
    let last = *loads.days.keys().last().unwrap();
    let n = (last - first + 1) as usize;
    let j_max = loads.j_max;

    let class_names: Vec<String> = match opts.day_class_scheme {
        DayClassScheme::PerWeekday => {
            ["mon", "tue", "wed", "thu", "fri", "sat", "sun"].iter().map(|s| s.to_string()).collect()
        }
        DayClassScheme::WorkdayHoliday => vec!["workday".to_string(), "holiday".to_string()],
    };

    let mut panel = LoadPanel {
        loads: Mat::zeros(n, j_max),
        epoch_days: (first..=last).collect(),
        valid: vec![false; n],
        day_class: vec![0; n],
        class_names,
    };
    let mut invalid_days = Vec::new();

    for i in 0..n {
        let day = first + i as i64;
        let wd = weekday_index(day);
        let is_holiday = holidays.contains(&day);
        panel.day_class[i] = match opts.day_class_scheme {
            // National holidays are treated as Sundays.
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
        };
        match loads.days.get(&day) {
            None => invalid_days.push((day, "calendar gap".to_string())),
            Some(values) => {
                let missing: Vec<usize> =
                    (1..=j_max).filter(|j| !values.contains_key(j)).collect();
                if !missing.is_empty() {
                    invalid_days.push((day, format!("missing intervals {missing:?}")));
                    continue;
                }
                if values.values().any(|v| !v.is_finite()) {
                    invalid_days.push((day, "non-finite load".to_string()));
                    continue;
                }
                for j in 1..=j_max {
                    panel.loads.set(i, j - 1, values[&j]);
                }
                panel.valid[i] = true;
            }
        }
    }

    let before: Vec<bool> = panel.valid.clone();
    mad_screen(&mut panel, opts.mad_threshold);
    for i in 0..n {
        if before[i] && !panel.valid[i] {
            invalid_days.push((panel.epoch_days[i], "outlier beyond MAD band".to_string()));
        }
    }

    let covs = build_covariates(&panel, covs_path, opts)?;
    let partial: BTreeMap<i64, Vec<Option<f64>>> = loads
        .days
        .iter()
        .map(|(&day, values)| {
            let row: Vec<Option<f64>> = (1..=j_max)
                .map(|j| values.get(&j).copied().filter(|v| v.is_finite()))
                .collect();
            (day, row)
        })
        .collect();
    Ok(Ingested { panel, covs, invalid_days, holidays, partial })
}

fn build_covariates(
    panel: &LoadPanel,
    covs_path: Option<&Path>,
    opts: &IngestOptions,
) -> Result<CovariateTable> {
    let n = panel.n_days();
    let (file_names, file_rows) = match covs_path {
        Some(p) => read_covariate_file(p)?,
        None => (Vec::new(), BTreeMap::new()),
    };
    let col_of = |name: &str| -> Result<usize> {
        file_names
            .iter()
            .position(|c| c == name)
            .with_context(|| format!("covariates file has no column '{name}'"))
    };
    let raw_at = |day: i64, col: usize| -> f64 {
        file_rows.get(&day).map_or(f64::NAN, |r| r[col])
    };

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(opts.covariates.len());
    let mut names = Vec::with_capacity(opts.covariates.len());
    for directive in &opts.covariates {
        names.push(directive.name().to_owned());
        match directive {
            CovariateDirective::Column { name } => {
                let col = col_of(name)?;
                columns.push(
                    (0..n).map(|i| raw_at(panel.epoch_days[i], col)).collect(),
                );
            }
            CovariateDirective::MovingAverage { source, window, .. } => {
                let col = col_of(source)?;
                let w = *window as i64;
                let mut vals = Vec::with_capacity(n);
                for i in 0..n {
                    let day = panel.epoch_days[i];
                    // trailing window [day - w, day - 1]; full windows only
                    let mut sum = 0.0;
                    let mut ok = true;
                    for d in (day - w)..day {
                        let v = raw_at(d, col);
                        if !v.is_finite() {
                            ok = false;
                            break;
                        }
                        sum += v;
                    }
                    vals.push(if ok { sum / w as f64 } else { f64::NAN });
                }
                columns.push(vals);
            }
        }
    }

    let mut values = Mat::zeros(n, columns.len());
    for (c, col) in columns.iter().enumerate() {
        for i in 0..n {
            values.set(i, c, col[i]);
        }
    }
    Ok(CovariateTable { values, names, basis_assignment: Vec::new() })
}
