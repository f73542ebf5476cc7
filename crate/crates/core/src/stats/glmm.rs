//! Random-intercept logistic regression.
//!
//! The marginal likelihood integrates one normal intercept per group with
//! adaptive Gauss–Hermite quadrature centred on each group's conditional mode.
//! The outer problem over `(β, log σ_u)` is solved by BFGS.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::design::ScaledDesign;
use super::logistic::{self, coefficients, sigmoid, softplus, FitOptions};
use super::optim::{bfgs, hessian};
use super::quadrature::GaussHermite;
use super::{FitResult, Observation, RandomIntercept};
use crate::{Error, Result};

const MIN_LOG_SIGMA: f64 = -12.0;

#[derive(Debug, Clone)]
pub struct MixedOptions {
    pub quadrature_nodes: usize,
    pub max_iterations: usize,
    /// Gradient infinity-norm at which the outer optimizer stops.
    pub gradient_tolerance: f64,
    /// Name reported for the grouping factor.
    pub group_name: String,
}

impl Default for MixedOptions {
    fn default() -> Self {
        Self {
            quadrature_nodes: 15,
            max_iterations: 200,
            gradient_tolerance: 1e-6,
            group_name: "group".to_string(),
        }
    }
}

struct Problem<'a> {
    design: &'a ScaledDesign,
    groups: Vec<Vec<usize>>,
    rule: GaussHermite,
}

impl<'a> Problem<'a> {
    fn new(design: &'a ScaledDesign, observations: &[Observation], nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidInput("quadrature needs at least 1 node".into()));
        }
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, obs) in observations.iter().enumerate() {
            let g = obs.group.as_deref().ok_or_else(|| {
                Error::InvalidInput(format!("observation {i} has no group"))
            })?;
            let next = index.len();
            let k = *index.entry(g).or_insert(next);
            if k == groups.len() {
                groups.push(Vec::new());
            }
            groups[k].push(i);
        }
        if groups.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "random-intercept variance is unidentifiable with {} group(s)",
                groups.len()
            )));
        }
        Ok(Self {
            design,
            groups,
            rule: GaussHermite::new(nodes),
        })
    }

    /// Marginal log-likelihood at scaled coefficients `beta` and `log σ_u`.
    fn log_likelihood(&self, beta: &[f64], log_sigma: f64) -> f64 {
        let x = &self.design.x;
        let y = &self.design.y;
        let sigma = log_sigma.max(MIN_LOG_SIGMA).exp();
        let precision = 1.0 / (sigma * sigma);
        let log_norm = -0.5 * (2.0 * std::f64::consts::PI).ln() - sigma.ln();
        let p = beta.len();
        let mut total = 0.0;
        let mut eta = Vec::new();
        for rows in &self.groups {
            eta.clear();
            eta.extend(rows.iter().map(|&i| {
                let mut e = 0.0;
                for j in 0..p {
                    e += x[(i, j)] * beta[j];
                }
                (e, y[i])
            }));
            let g = |u: f64| -> f64 {
                eta.iter().map(|(e, yi)| yi * (e + u) - softplus(e + u)).sum::<f64>()
                    - 0.5 * precision * u * u
            };
            // conditional mode by damped Newton
            let mut u = 0.0;
            let mut gu = g(u);
            for _ in 0..100 {
                let (mut d1, mut d2) = (-precision * u, -precision);
                for (e, yi) in &eta {
                    let pr = sigmoid(e + u);
                    d1 += yi - pr;
                    d2 -= pr * (1.0 - pr);
                }
                let mut step = -d1 / d2;
                let mut next = u + step;
                let mut gn = g(next);
                let mut tries = 0;
                while gn < gu && tries < 40 {
                    step *= 0.5;
                    next = u + step;
                    gn = g(next);
                    tries += 1;
                }
                u = next;
                gu = gn;
                if step.abs() < 1e-10 * (1.0 + u.abs()) {
                    break;
                }
            }
            let mut curvature = precision;
            for (e, _) in &eta {
                let pr = sigmoid(e + u);
                curvature += pr * (1.0 - pr);
            }
            let spread = (2.0 / curvature).sqrt();
            let terms: Vec<f64> = self
                .rule
                .nodes
                .iter()
                .zip(&self.rule.weights)
                .map(|(node, w)| w.ln() + node * node + g(u + spread * node))
                .collect();
            let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
            total += spread.ln() + lse + log_norm;
        }
        total
    }
}

/// Marginal log-likelihood of a random-intercept logistic model at the given
/// original-scale coefficients (intercept first, then covariates in name
/// order) and random-intercept standard deviation.
pub fn marginal_log_likelihood(
    observations: &[Observation],
    beta: &[f64],
    sigma: f64,
    quadrature_nodes: usize,
) -> Result<f64> {
    let design = ScaledDesign::new(observations)?;
    if beta.len() != design.n_coef() {
        return Err(Error::InvalidInput(format!(
            "expected {} coefficients, got {}",
            design.n_coef(),
            beta.len()
        )));
    }
    let problem = Problem::new(&design, observations, quadrature_nodes)?;
    let scaled = design.scale_coefficients(beta);
    Ok(problem.log_likelihood(scaled.as_slice(), sigma.ln()))
}

pub fn fit_logistic_random_intercept(observations: &[Observation]) -> Result<FitResult> {
    fit_logistic_random_intercept_with(observations, &MixedOptions::default())
}

pub fn fit_logistic_random_intercept_with(
    observations: &[Observation],
    options: &MixedOptions,
) -> Result<FitResult> {
    let design = ScaledDesign::new(observations)?;
    let problem = Problem::new(&design, observations, options.quadrature_nodes)?;
    let p = design.n_coef();

    let start_beta = logistic::irls(&design, &FitOptions::default())
        .map(|f| f.beta)
        .unwrap_or_else(|_| DVector::zeros(p));
    let mut theta0 = DVector::zeros(p + 1);
    theta0.rows_mut(0, p).copy_from(&start_beta);
    theta0[p] = 0.0;

    let objective = |theta: &DVector<f64>| -> f64 {
        -problem.log_likelihood(&theta.as_slice()[..p], theta[p])
    };
    let minimum = bfgs(objective, theta0, options.max_iterations, options.gradient_tolerance);
    if !minimum.converged {
        let tail = &minimum.trace[minimum.trace.len().saturating_sub(5)..];
        return Err(Error::NonConvergence {
            iterations: minimum.iterations,
            trace: format!("negative log-likelihood {tail:?} at {:?}", minimum.x.as_slice()),
        });
    }
    let theta = minimum.x.clone();
    let log_sigma = theta[p].max(MIN_LOG_SIGMA);
    let beta = theta.rows(0, p).into_owned();

    let hess = hessian(&objective, &theta);
    let covariance = fixed_effect_covariance(&hess, p, log_sigma).ok_or_else(|| {
        Error::NonConvergence {
            iterations: minimum.iterations,
            trace: "observed information of fixed effects is singular".into(),
        }
    })?;

    let sigma = log_sigma.exp();
    Ok(FitResult {
        coefficients: coefficients(&design, &beta, &covariance),
        log_likelihood: -minimum.f,
        n_observations: observations.len(),
        iterations: minimum.iterations,
        converged: true,
        random_intercept: Some(RandomIntercept {
            group: options.group_name.clone(),
            variance: sigma * sigma,
            std_dev: sigma,
            n_groups: problem.groups.len(),
            quadrature_nodes: options.quadrature_nodes,
        }),
    })
}

/// Fixed-effect block of the inverse observed information. Falls back to
/// conditioning on `σ_u` when the variance parameter sits on the boundary
/// and its curvature vanishes.
fn fixed_effect_covariance(hess: &DMatrix<f64>, p: usize, log_sigma: f64) -> Option<DMatrix<f64>> {
    if log_sigma > -5.0 {
        if let Some(chol) = hess.clone().cholesky() {
            let inv = chol.inverse();
            return Some(inv.view((0, 0), (p, p)).into_owned());
        }
    }
    hess.view((0, 0), (p, p))
        .into_owned()
        .cholesky()
        .map(|c| c.inverse())
}
