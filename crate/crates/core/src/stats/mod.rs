//! Proportions, fixed-effects logistic regression and random-intercept
//! logistic regression with Wald inference.

mod design;
mod formula;
mod glmm;
mod logistic;
mod optim;
pub mod quadrature;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

pub use design::{design_rows, DesignRow};
pub use formula::Formula;
pub use glmm::{
    fit_logistic_random_intercept, fit_logistic_random_intercept_with, marginal_log_likelihood,
    MixedOptions,
};
pub use logistic::{fit_logistic, fit_logistic_with, log_likelihood, score, FitOptions};

pub const INTERCEPT: &str = "(Intercept)";

/// One binary response with its (already numeric) covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub response: u8,
    pub covariates: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

impl Observation {
    pub fn new(response: bool, covariates: impl IntoIterator<Item = (String, f64)>) -> Self {
        Self {
            response: response as u8,
            covariates: covariates.into_iter().collect(),
            group: None,
        }
    }

    pub fn with_group(mut self, group: impl Into<String>) -> Self {
        self.group = Some(group.into());
        self
    }
}

/// Keep only the named covariates of each observation.
pub fn select_covariates(observations: &[Observation], names: &[&str]) -> Vec<Observation> {
    observations
        .iter()
        .map(|o| Observation {
            response: o.response,
            covariates: names
                .iter()
                .filter_map(|n| o.covariates.get(*n).map(|v| (n.to_string(), *v)))
                .collect(),
            group: o.group.clone(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub z: f64,
    pub p_value: f64,
}

impl Coefficient {
    fn wald(name: &str, estimate: f64, variance: f64) -> Self {
        let std_error = variance.max(0.0).sqrt();
        let z = estimate / std_error;
        Self {
            name: name.to_string(),
            estimate,
            std_error,
            z,
            p_value: two_sided_p(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomIntercept {
    pub group: String,
    pub variance: f64,
    pub std_dev: f64,
    pub n_groups: usize,
    pub quadrature_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<Coefficient>,
    pub log_likelihood: f64,
    pub n_observations: usize,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_intercept: Option<RandomIntercept>,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Two-sided normal p-value for a Wald statistic.
pub fn two_sided_p(z: f64) -> f64 {
    if z.is_nan() {
        return 1.0;
    }
    erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}

pub fn odds_ratio(beta: f64) -> f64 {
    beta.exp()
}

/// Share of each label within each year. Years without units are absent.
pub fn yearly_proportions<S: AsRef<str>>(
    labels: &[S],
    years: &[i64],
) -> Result<BTreeMap<i64, BTreeMap<String, f64>>> {
    if labels.len() != years.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} years",
            labels.len(),
            years.len()
        )));
    }
    let mut counts: BTreeMap<i64, BTreeMap<String, usize>> = BTreeMap::new();
    for (label, year) in labels.iter().zip(years) {
        *counts
            .entry(*year)
            .or_default()
            .entry(label.as_ref().to_string())
            .or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(year, per_label)| {
            let total: usize = per_label.values().sum();
            let fractions = per_label
                .into_iter()
                .map(|(l, c)| (l, c as f64 / total as f64))
                .collect();
            (year, fractions)
        })
        .collect())
}
