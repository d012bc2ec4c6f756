//! Versioned fitted-model file (JSON with a magic header).
//!
//! The file stores everything needed to forecast without the original
//! config: the model configuration, frozen bases, per-class coefficients,
//! and the ingestion directives. All floats round-trip losslessly through
//! serde_json's shortest-representation formatting.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use loadcast_core::basis::BasisSpec;
use loadcast_core::design::WeightScheme;
use loadcast_core::forecast::{BasisFamily, ClassFit, FittedModel, ModelConfig};

use crate::config::{
    basis_kind_name, day_class_scheme_name, method_name, parse_basis_kind,
    parse_day_class_scheme, parse_method, parse_weight_kind, weight_kind_name,
};
use crate::ingest::{CovariateDirective, IngestOptions};

pub const MAGIC: &str = "loadcast-model";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SpecJson {
    kind: String,
    count: usize,
    /// None encodes an unbounded (polynomial) domain side.
    domain_lo: Option<f64>,
    domain_hi: Option<f64>,
    knots: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ClassJson {
    class: usize,
    gamma: Vec<f64>,
    active_set: Vec<usize>,
    /// None encodes an undefined (NaN) residual variance.
    sigma2: Option<f64>,
    n_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct DirectiveJson {
    name: String,
    source: Option<String>,
    window: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct ModelJson {
    magic: String,
    version: u32,
    q: usize,
    h_kind: String,
    bases: Vec<(String, usize)>,
    weight_kind: String,
    t: usize,
    u: usize,
    l_alpha: usize,
    l_beta: usize,
    lambda: f64,
    method: String,
    alpha_weights: Vec<f64>,
    beta_weights: Vec<f64>,
    h_spec: SpecJson,
    basis_specs: Vec<SpecJson>,
    covariate_names: Vec<String>,
    class_names: Vec<String>,
    classes: Vec<ClassJson>,
    train_window: (i64, i64),
    day_class_scheme: String,
    mad_threshold: f64,
    covariate_directives: Vec<DirectiveJson>,
}

fn spec_to_json(s: &BasisSpec) -> SpecJson {
    SpecJson {
        kind: basis_kind_name(s.kind).to_owned(),
        count: s.count,
        domain_lo: s.domain_lo.is_finite().then_some(s.domain_lo),
        domain_hi: s.domain_hi.is_finite().then_some(s.domain_hi),
        knots: s.knots.clone(),
    }
}

fn spec_from_json(s: &SpecJson) -> Result<BasisSpec> {
    Ok(BasisSpec {
        kind: parse_basis_kind(&s.kind)?,
        count: s.count,
        domain_lo: s.domain_lo.unwrap_or(f64::NEG_INFINITY),
        domain_hi: s.domain_hi.unwrap_or(f64::INFINITY),
        knots: s.knots.clone(),
    })
}

pub fn save_model(path: &Path, model: &FittedModel, ingest: &IngestOptions) -> Result<()> {
    let json = ModelJson {
        magic: MAGIC.to_owned(),
        version: VERSION,
        q: model.config.q,
        h_kind: basis_kind_name(model.config.h_kind).to_owned(),
        bases: model
            .config
            .bases
            .iter()
            .map(|b| (basis_kind_name(b.kind).to_owned(), b.count))
            .collect(),
        weight_kind: weight_kind_name(model.config.weight_kind).to_owned(),
        t: model.config.t,
        u: model.config.u,
        l_alpha: model.config.l_alpha,
        l_beta: model.config.l_beta,
        lambda: model.config.lambda,
        method: method_name(model.config.method).to_owned(),
        alpha_weights: model.weights.alpha.clone(),
        beta_weights: model.weights.beta.clone(),
        h_spec: spec_to_json(&model.h_spec),
        basis_specs: model.basis_specs.iter().map(spec_to_json).collect(),
        covariate_names: model.covariate_names.clone(),
        class_names: model.class_names.clone(),
        classes: model
            .classes
            .iter()
            .map(|c| ClassJson {
                class: c.class,
                gamma: c.gamma.clone(),
                active_set: c.active_set.clone(),
                sigma2: if c.sigma2.is_finite() { Some(c.sigma2) } else { None },
                n_rows: c.n_rows,
            })
            .collect(),
        train_window: model.train_window,
        day_class_scheme: day_class_scheme_name(ingest.day_class_scheme).to_owned(),
        mad_threshold: ingest.mad_threshold,
        covariate_directives: ingest
            .covariates
            .iter()
            .map(|d| match d {
                CovariateDirective::Column { name } => {
                    DirectiveJson { name: name.clone(), source: None, window: None }
                }
                CovariateDirective::MovingAverage { name, source, window } => DirectiveJson {
                    name: name.clone(),
                    source: Some(source.clone()),
                    window: Some(*window),
                },
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&json)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<(FittedModel, IngestOptions)> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json: ModelJson =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if json.magic != MAGIC {
        bail!("{}: not a fitted-model file (bad magic)", path.display());
    }
    if json.version != VERSION {
        bail!("{}: unsupported model file version {}", path.display(), json.version);
    }
    let config = ModelConfig {
        q: json.q,
        h_kind: parse_basis_kind(&json.h_kind)?,
        bases: json
            .bases
            .iter()
            .map(|(k, c)| Ok(BasisFamily { kind: parse_basis_kind(k)?, count: *c }))
            .collect::<Result<Vec<_>>>()?,
        weight_kind: parse_weight_kind(&json.weight_kind)?,
        t: json.t,
        u: json.u,
        l_alpha: json.l_alpha,
        l_beta: json.l_beta,
        lambda: json.lambda,
        method: parse_method(&json.method)?,
    };
    let weights = WeightScheme {
        kind: config.weight_kind,
        t: json.t,
        u: json.u,
        l_alpha: json.l_alpha,
        l_beta: json.l_beta,
        alpha: json.alpha_weights.clone(),
        beta: json.beta_weights.clone(),
    };
    let model = FittedModel {
        config,
        weights,
        h_spec: spec_from_json(&json.h_spec)?,
        basis_specs: json.basis_specs.iter().map(spec_from_json).collect::<Result<Vec<_>>>()?,
        covariate_names: json.covariate_names.clone(),
        class_names: json.class_names.clone(),
        classes: json
            .classes
            .iter()
            .map(|c| ClassFit {
                class: c.class,
                gamma: c.gamma.clone(),
                active_set: c.active_set.clone(),
                sigma2: c.sigma2.unwrap_or(f64::NAN),
                n_rows: c.n_rows,
            })
            .collect(),
        train_window: json.train_window,
    };
    let ingest = IngestOptions {
        mad_threshold: json.mad_threshold,
        day_class_scheme: parse_day_class_scheme(&json.day_class_scheme)?,
        covariates: json
            .covariate_directives
            .iter()
            .map(|d| match (&d.source, d.window) {
                (Some(source), Some(window)) => CovariateDirective::MovingAverage {
                    name: d.name.clone(),
                    source: source.clone(),
                    window,
                },
                _ => CovariateDirective::Column { name: d.name.clone() },
            })
            .collect(),
    };
    Ok((model, ingest))
}
