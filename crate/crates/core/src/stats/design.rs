use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Formula, Observation, INTERCEPT};
use crate::corpus::{CodingScheme, MetaValue, Unit};
use crate::{Error, Result};

/// Design matrix with non-intercept columns centered and scaled to unit
/// variance. Fitting happens on this scale; estimates are mapped back with
/// [`ScaledDesign::unscale`].
pub(crate) struct ScaledDesign {
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl ScaledDesign {
    pub fn new(observations: &[Observation]) -> Result<Self> {
        if observations.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 observations, got {}",
                observations.len()
            )));
        }
        let covariates: Vec<String> = observations[0].covariates.keys().cloned().collect();
        let n = observations.len();
        let p = covariates.len() + 1;
        let mut x = DMatrix::<f64>::zeros(n, p);
        let mut y = DVector::<f64>::zeros(n);
        for (i, obs) in observations.iter().enumerate() {
            if obs.response > 1 {
                return Err(Error::InvalidInput(format!(
                    "observation {i}: response {} is not 0/1",
                    obs.response
                )));
            }
            if obs.covariates.len() != covariates.len()
                || !covariates.iter().all(|c| obs.covariates.contains_key(c))
            {
                return Err(Error::InvalidInput(format!(
                    "observation {i}: covariates {:?} differ from {:?}",
                    obs.covariates.keys().collect::<Vec<_>>(),
                    covariates
                )));
            }
            y[i] = obs.response as f64;
            x[(i, 0)] = 1.0;
            for (j, name) in covariates.iter().enumerate() {
                let v = obs.covariates[name];
                if !v.is_finite() {
                    return Err(Error::InvalidInput(format!(
                        "observation {i}: covariate `{name}` is not finite"
                    )));
                }
                x[(i, j + 1)] = v;
            }
        }
        let mut names = vec![INTERCEPT.to_string()];
        names.extend(covariates);

        let mut means = vec![0.0; p];
        let mut scales = vec![1.0; p];
        for j in 1..p {
            let col = x.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if sd <= 1e-12 * mean.abs().max(1.0) {
                return Err(Error::RankDeficient {
                    column: names[j].clone(),
                    with: vec![INTERCEPT.to_string()],
                });
            }
            means[j] = mean;
            scales[j] = sd;
            for i in 0..n {
                x[(i, j)] = (x[(i, j)] - mean) / sd;
            }
        }
        check_rank(&x, &names)?;
        Ok(Self { names, x, y, means, scales })
    }

    pub fn n_coef(&self) -> usize {
        self.names.len()
    }

    /// Linear map taking scaled-coordinate coefficients to original ones.
    fn transform(&self) -> DMatrix<f64> {
        let p = self.n_coef();
        let mut t = DMatrix::<f64>::zeros(p, p);
        t[(0, 0)] = 1.0;
        for j in 1..p {
            t[(0, j)] = -self.means[j] / self.scales[j];
            t[(j, j)] = 1.0 / self.scales[j];
        }
        t
    }

    pub fn unscale(&self, beta: &DVector<f64>, cov: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let t = self.transform();
        (&t * beta, &t * cov * t.transpose())
    }

    /// Inverse of [`unscale`] for coefficient vectors.
    pub fn scale_coefficients(&self, beta: &[f64]) -> DVector<f64> {
        let p = self.n_coef();
        let mut out = DVector::zeros(p);
        out[0] = beta[0];
        for j in 1..p {
            out[j] = beta[j] * self.scales[j];
            out[0] += beta[j] * self.means[j];
        }
        out
    }
}

fn check_rank(x: &DMatrix<f64>, names: &[String]) -> Result<()> {
    let (n, p) = x.shape();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let original = x.column(j).into_owned();
        let mut v = original.clone();
        for _ in 0..2 {
            for q in &basis {
                let r = q.dot(&v);
                v -= r * q;
            }
        }
        let norm = v.norm();
        if norm <= 1e-9 * original.norm().max(1e-300) {
            let prior = x.columns(0, j).into_owned();
            let svd = prior.svd(true, true);
            let coefs = svd
                .solve(&original, 1e-10)
                .unwrap_or_else(|_| DVector::zeros(j));
            let with = (0..j)
                .filter(|&k| coefs[k].abs() > 1e-8 * (n as f64).sqrt())
                .map(|k| names[k].clone())
                .collect();
            return Err(Error::RankDeficient { column: names[j].clone(), with });
        }
        basis.push(v / norm);
    }
    Ok(())
}

/// Numeric covariates and grouping for one unit, produced from a formula.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow {
    pub covariates: BTreeMap<String, f64>,
    pub group: Option<String>,
}

enum Column {
    Numeric,
    Categorical(Vec<String>),
}

fn lookup<'a>(unit: &'a Unit, name: &str) -> Option<RawValue<'a>> {
    if let Some(v) = unit.meta.get(name) {
        return Some(match v {
            MetaValue::Int(i) => RawValue::Num(*i as f64),
            MetaValue::Float(f) => RawValue::Num(*f),
            MetaValue::Bool(b) => RawValue::Num(*b as u8 as f64),
            MetaValue::Str(s) => RawValue::Text(s),
        });
    }
    unit.groups.get(name).map(|s| RawValue::Text(s))
}

enum RawValue<'a> {
    Num(f64),
    Text(&'a str),
}

/// Expand a formula's right-hand side over units. Numeric metadata is used
/// as-is; string metadata and group roles become reference-coded indicators
/// named `name[level]`. The reference is the first declared level when the
/// covariate is a scheme variable, otherwise the lexicographically first.
pub fn design_rows(
    formula: &Formula,
    units: &[Unit],
    scheme: Option<&CodingScheme>,
) -> Result<Vec<DesignRow>> {
    let mut columns = Vec::with_capacity(formula.covariates.len());
    for name in &formula.covariates {
        let mut numeric = true;
        let mut seen = BTreeSet::new();
        for unit in units {
            match lookup(unit, name) {
                None => {
                    return Err(Error::Formula(format!(
                        "unknown covariate `{name}` (missing on unit `{}`)",
                        unit.id
                    )))
                }
                Some(RawValue::Num(_)) => {}
                Some(RawValue::Text(s)) => {
                    numeric = false;
                    seen.insert(s.to_string());
                }
            }
        }
        if numeric {
            columns.push(Column::Numeric);
            continue;
        }
        let declared = scheme.and_then(|s| s.variable(name)).map(|v| v.labels());
        let levels = match declared {
            Some(labels) => {
                if let Some(bad) = seen.iter().find(|s| !labels.contains(s)) {
                    return Err(Error::Formula(format!(
                        "covariate `{name}` has undeclared level `{bad}`"
                    )));
                }
                labels
            }
            None => seen.into_iter().collect(),
        };
        columns.push(Column::Categorical(levels));
    }

    units
        .iter()
        .map(|unit| {
            let mut covariates = BTreeMap::new();
            for (name, column) in formula.covariates.iter().zip(&columns) {
                match (column, lookup(unit, name)) {
                    (Column::Numeric, Some(RawValue::Num(v))) => {
                        covariates.insert(name.clone(), v);
                    }
                    (Column::Categorical(levels), Some(raw)) => {
                        let value = match raw {
                            RawValue::Text(s) => s.to_string(),
                            RawValue::Num(v) => v.to_string(),
                        };
                        for level in levels.iter().skip(1) {
                            covariates.insert(
                                format!("{name}[{level}]"),
                                (value == *level) as u8 as f64,
                            );
                        }
                    }
                    _ => {
                        return Err(Error::Formula(format!(
                            "covariate `{name}` has mixed types (unit `{}`)",
                            unit.id
                        )))
                    }
                }
            }
            let group = match &formula.group {
                None => None,
                Some(g) => Some(match lookup(unit, g) {
                    Some(RawValue::Text(s)) => s.to_string(),
                    Some(RawValue::Num(v)) => v.to_string(),
                    None => {
                        return Err(Error::Formula(format!(
                            "unknown grouping `{g}` (missing on unit `{}`)",
                            unit.id
                        )))
                    }
                }),
            };
            Ok(DesignRow { covariates, group })
        })
        .collect()
}
