//! TOML configuration file and flag/config/default precedence.

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use std::path::Path;

use loadcast_core::basis::BasisKind;
use loadcast_core::design::WeightKind;
use loadcast_core::eval::{lambda_ladder, TuningGrid};
use loadcast_core::forecast::{BasisFamily, ModelConfig};
use loadcast_core::solver::Method;

use crate::ingest::{CovariateDirective, DayClassScheme, IngestOptions};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub covariate: Vec<CovariateSection>,
    #[serde(default)]
    pub outliers: OutlierSection,
    pub grid: Option<GridSection>,
    pub backtest: Option<BacktestSection>,
    #[serde(default)]
    pub interval: IntervalSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub q: Option<usize>,
    pub h_kind: Option<String>,
    pub weight_kind: Option<String>,
    pub t: Option<usize>,
    pub u: Option<usize>,
    pub l_alpha: Option<usize>,
    pub l_beta: Option<usize>,
    pub lambda: Option<f64>,
    pub method: Option<String>,
    pub day_class_scheme: Option<String>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            q: None,
            h_kind: None,
            weight_kind: None,
            t: None,
            u: None,
            l_alpha: None,
            l_beta: None,
            lambda: None,
            method: None,
            day_class_scheme: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSection {
    pub name: String,
    pub kind: Option<String>,
    pub count: Option<usize>,
    /// Source column for a derived trailing moving average (the window
    /// excludes the current day; only full windows produce values).
    pub moving_average_of: Option<String>,
    pub moving_average_days: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierSection {
    /// Days whose load sits more than this many MADs from the
    /// day-class/interval median are marked invalid.
    pub mad_threshold: Option<f64>,
}

impl Default for OutlierSection {
    fn default() -> Self {
        OutlierSection { mad_threshold: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub q: Vec<usize>,
    pub m: Vec<usize>,
    pub t: Vec<usize>,
    /// Explicit lambda list; mutually exclusive with `lambda_ladder`.
    pub lambda: Option<Vec<f64>>,
    pub lambda_ladder: Option<LadderSection>,
    pub weight_kinds: Vec<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    #[serde(default)]
    pub include_zero: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestSection {
    pub start: String,
    pub end: String,
    pub selection_window_days: Option<i64>,
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct IntervalSection {
    pub alpha: Option<f64>,
    pub mode: Option<String>,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
        }
    }
}

pub fn parse_basis_kind(s: &str) -> Result<BasisKind> {
    Ok(match s {
        "cubic-bspline" => BasisKind::CubicBSpline,
        "cyclic-cubic-bspline" => BasisKind::CyclicCubicBSpline,
        "cubic-polynomial" => BasisKind::CubicPolynomial,
        "negated-cubic-polynomial" => BasisKind::NegatedCubicPolynomial,
        other => bail!("unknown basis kind '{other}'"),
    })
}

pub fn basis_kind_name(k: BasisKind) -> &'static str {
    match k {
        BasisKind::CubicBSpline => "cubic-bspline",
        BasisKind::CyclicCubicBSpline => "cyclic-cubic-bspline",
        BasisKind::CubicPolynomial => "cubic-polynomial",
        BasisKind::NegatedCubicPolynomial => "negated-cubic-polynomial",
    }
}

pub fn parse_weight_kind(s: &str) -> Result<WeightKind> {
    Ok(match s {
        "mean" => WeightKind::Mean,
        "ar1" => WeightKind::Ar1,
        other => bail!("unknown weight kind '{other}'"),
    })
}

pub fn weight_kind_name(k: WeightKind) -> &'static str {
    match k {
        WeightKind::Mean => "mean",
        WeightKind::Ar1 => "ar1",
    }
}

pub fn parse_method(s: &str) -> Result<Method> {
    Ok(match s {
        "nnls" => Method::Nnls,
        "lse" => Method::Lse,
        other => bail!("unknown method '{other}'"),
    })
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Nnls => "nnls",
        Method::Lse => "lse",
    }
}

pub fn parse_day_class_scheme(s: &str) -> Result<DayClassScheme> {
    Ok(match s {
        "per-weekday" => DayClassScheme::PerWeekday,
        "workday-holiday" => DayClassScheme::WorkdayHoliday,
        other => bail!("unknown day class scheme '{other}'"),
    })
}

pub fn day_class_scheme_name(s: DayClassScheme) -> &'static str {
    match s {
        DayClassScheme::PerWeekday => "per-weekday",
        DayClassScheme::WorkdayHoliday => "workday-holiday",
    }
}

/// Resolved ingest options: config over defaults.
pub fn ingest_options(cfg: &FileConfig) -> Result<IngestOptions> {
    let scheme = match cfg.model.day_class_scheme.as_deref() {
        Some(s) => parse_day_class_scheme(s)?,
        None => DayClassScheme::PerWeekday,
    };
    let mut directives = Vec::new();
    for c in &cfg.covariate {
        match (&c.moving_average_of, c.moving_average_days) {
            (Some(src), Some(w)) if w > 0 => directives.push(CovariateDirective::MovingAverage {
                name: c.name.clone(),
                source: src.clone(),
                window: w,
            }),
            (None, None) | (None, Some(0)) => {
                directives.push(CovariateDirective::Column { name: c.name.clone() })
            }
            _ => bail!(
                "covariate '{}': moving_average_of and moving_average_days must be given together",
                c.name
            ),
        }
    }
    Ok(IngestOptions {
        mad_threshold: cfg.outliers.mad_threshold.unwrap_or(8.0),
        day_class_scheme: scheme,
        covariates: directives,
    })
}

/// Resolved model configuration: config over defaults.
pub fn model_config(cfg: &FileConfig) -> Result<ModelConfig> {
    if cfg.covariate.is_empty() {
        bail!("config must declare at least one [[covariate]]");
    }
    let mut bases = Vec::new();
    for c in &cfg.covariate {
        let kind = parse_basis_kind(c.kind.as_deref().unwrap_or("cubic-bspline"))?;
        let count = c.count.unwrap_or(match kind {
            BasisKind::CubicPolynomial | BasisKind::NegatedCubicPolynomial => 3,
            _ => 10,
        });
        bases.push(BasisFamily { kind, count });
    }
    Ok(ModelConfig {
        q: cfg.model.q.unwrap_or(10),
        h_kind: parse_basis_kind(cfg.model.h_kind.as_deref().unwrap_or("cyclic-cubic-bspline"))?,
        bases,
        weight_kind: parse_weight_kind(cfg.model.weight_kind.as_deref().unwrap_or("ar1"))?,
        t: cfg.model.t.unwrap_or(4),
        u: cfg.model.u.unwrap_or(0),
        l_alpha: cfg.model.l_alpha.unwrap_or(1),
        l_beta: cfg.model.l_beta.unwrap_or(1),
        lambda: cfg.model.lambda.unwrap_or(1e-4),
        method: parse_method(cfg.model.method.as_deref().unwrap_or("nnls"))?,
    })
}

pub fn tuning_grid(cfg: &FileConfig) -> Result<TuningGrid> {
    let g = cfg.grid.as_ref().context("config is missing the [grid] section")?;
    let lambda = match (&g.lambda, &g.lambda_ladder) {
        (Some(list), None) => list.clone(),
        (None, Some(l)) => lambda_ladder(l.lo, l.hi, l.n, l.include_zero),
        (None, None) => lambda_ladder(1e-5, 1.0, 20, true),
        (Some(_), Some(_)) => bail!("[grid] declares both lambda and lambda_ladder"),
    };
    let weight_kinds =
        g.weight_kinds.iter().map(|s| parse_weight_kind(s)).collect::<Result<Vec<_>>>()?;
    Ok(TuningGrid { q: g.q.clone(), m: g.m.clone(), t: g.t.clone(), lambda, weight_kinds })
}

/// Flag > config > default.
pub fn resolve_alpha(flag: Option<f64>, cfg: &FileConfig) -> f64 {
    flag.or(cfg.interval.alpha).unwrap_or(0.05)
}

/// Flag > config > default (`day-ahead`).
pub fn resolve_mode(flag: Option<&str>, cfg: &FileConfig) -> Result<Mode> {
    let s = flag
        .map(str::to_owned)
        .or_else(|| cfg.interval.mode.clone())
        .unwrap_or_else(|| "day-ahead".to_owned());
    Ok(match s.as_str() {
        "day-ahead" => Mode::DayAhead,
        "intraday" => Mode::Intraday,
        other => bail!("unknown mode '{other}' (expected day-ahead or intraday)"),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    DayAhead,
    Intraday,
}
