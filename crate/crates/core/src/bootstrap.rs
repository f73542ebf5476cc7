//! Confusion-matrix bootstrap.
//!
//! Annotation error measured on a gold test set is replayed on the full
//! annotated data: every replicate replaces each unit's label with a draw
//! from the error distribution of that label, recomputes the statistic of
//! interest, and the spread of the replicates becomes the interval width.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::agreement::ConfusionMatrix;
use crate::rng::stream_rng;
use crate::stats::{
    fit_logistic, fit_logistic_random_intercept_with, DesignRow, FitResult, MixedOptions, Observation,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Distribution of predictions for each gold row, keyed by the unit's
    /// observed label.
    #[default]
    RowConditional,
    /// Distribution of gold labels for each predicted column.
    ColumnConditional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub labels: Vec<String>,
    pub dists: Vec<Vec<f64>>,
    pub mode: SamplingMode,
    /// Labels whose count vector was empty and fell back to identity.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fallback: Vec<String>,
}

impl ErrorModel {
    pub fn new(labels: Vec<String>, dists: Vec<Vec<f64>>) -> Result<Self> {
        let k = labels.len();
        if k == 0 || dists.len() != k || dists.iter().any(|d| d.len() != k) {
            return Err(Error::InvalidInput(format!("error model must be {k}×{k}")));
        }
        let unique: BTreeSet<&String> = labels.iter().collect();
        if unique.len() != k {
            return Err(Error::InvalidInput("error model labels must be unique".into()));
        }
        for (label, d) in labels.iter().zip(&dists) {
            let sum: f64 = d.iter().sum();
            if d.iter().any(|p| p.is_nan() || *p < 0.0) || sum.is_nan() || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "distribution for `{label}` must be non-negative and sum to 1 (sum {sum})"
                )));
            }
        }
        Ok(Self { labels, dists, mode: SamplingMode::RowConditional, fallback: Vec::new() })
    }

    pub fn identity(labels: Vec<String>) -> Self {
        let k = labels.len();
        let dists = (0..k).map(|i| (0..k).map(|j| (i == j) as u8 as f64).collect()).collect();
        Self { labels, dists, mode: SamplingMode::RowConditional, fallback: Vec::new() }
    }

    /// Row-normalized (default) or column-normalized confusion counts. An
    /// empty row/column becomes a point mass on its own label.
    pub fn from_confusion(cm: &ConfusionMatrix, mode: SamplingMode) -> Self {
        let k = cm.dim();
        let count = |label: usize, other: usize| match mode {
            SamplingMode::RowConditional => cm.counts[label][other],
            SamplingMode::ColumnConditional => cm.counts[other][label],
        };
        let mut fallback = Vec::new();
        let dists = (0..k)
            .map(|i| {
                let total: u64 = (0..k).map(|j| count(i, j)).sum();
                if total == 0 {
                    log::warn!(
                        "no test-set evidence for `{}`; assuming it is never confused (enlarge the test set)",
                        cm.labels[i]
                    );
                    fallback.push(cm.labels[i].clone());
                    return (0..k).map(|j| (i == j) as u8 as f64).collect();
                }
                (0..k).map(|j| count(i, j) as f64 / total as f64).collect()
            })
            .collect();
        Self { labels: cm.labels.clone(), dists, mode, fallback }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn sampler(&self) -> Sampler {
        let cumulative = self
            .dists
            .iter()
            .map(|d| {
                let mut acc = 0.0;
                let mut cum: Vec<f64> = d
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                // the last label with mass absorbs rounding at the top
                if let Some(last) = d.iter().rposition(|p| *p > 0.0) {
                    for c in &mut cum[last..] {
                        *c = f64::INFINITY;
                    }
                }
                cum
            })
            .collect();
        Sampler { cumulative }
    }

    fn indices<S: AsRef<str>>(&self, labels: &[S]) -> Result<Vec<usize>> {
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                self.index_of(l.as_ref()).ok_or_else(|| Error::UnknownLabel {
                    unit: format!("#{i}"),
                    label: l.as_ref().to_string(),
                })
            })
            .collect()
    }
}

/// Row normalization of a confusion matrix, as used by the bootstrap.
pub fn error_model_from_confusion(cm: &ConfusionMatrix) -> ErrorModel {
    ErrorModel::from_confusion(cm, SamplingMode::RowConditional)
}

struct Sampler {
    cumulative: Vec<Vec<f64>>,
}

impl Sampler {
    #[inline]
    fn draw<R: Rng>(&self, label: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let cum = &self.cumulative[label];
        cum.iter().position(|c| u < *c).unwrap_or(cum.len() - 1)
    }

    fn fill<R: Rng>(&self, observed: &[usize], out: &mut Vec<usize>, rng: &mut R) {
        out.clear();
        out.extend(observed.iter().map(|&l| self.draw(l, rng)));
    }
}

/// Replace each label independently by a draw from its distribution.
pub fn simulate_replicate<S: AsRef<str>, R: Rng>(
    labels: &[S],
    em: &ErrorModel,
    rng: &mut R,
) -> Result<Vec<String>> {
    let observed = em.indices(labels)?;
    let sampler = em.sampler();
    let mut out = Vec::with_capacity(observed.len());
    sampler.fill(&observed, &mut out, rng);
    Ok(out.into_iter().map(|i| em.labels[i].clone()).collect())
}

/// Anything computed from one labelling of the units.
///
/// Implementations must be deterministic and must not fail on any labelling
/// drawn from the error model's label set.
pub trait Statistic: Sync {
    fn names(&self) -> Vec<String>;

    fn compute(&self, labels: &[&str], covariates: &[DesignRow]) -> std::result::Result<Vec<f64>, String>;
}

/// Share of units carrying one label.
pub struct Proportion {
    pub label: String,
}

impl Statistic for Proportion {
    fn names(&self) -> Vec<String> {
        vec![format!("prop_{}", self.label)]
    }

    fn compute(&self, labels: &[&str], _: &[DesignRow]) -> std::result::Result<Vec<f64>, String> {
        if labels.is_empty() {
            return Err("no units".into());
        }
        let hits = labels.iter().filter(|l| **l == self.label).count();
        Ok(vec![hits as f64 / labels.len() as f64])
    }
}

/// Share of one label within each year, read from the `year` covariate.
pub struct YearlyProportion {
    pub label: String,
    years: Vec<i64>,
}

impl YearlyProportion {
    pub fn new(label: impl Into<String>, covariates: &[DesignRow]) -> Result<Self> {
        let years = covariates
            .iter()
            .map(|row| year_of(row).ok_or_else(|| Error::Formula("every unit needs an integer `year`".into())))
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(Self { label: label.into(), years: years.into_iter().collect() })
    }
}

fn year_of(row: &DesignRow) -> Option<i64> {
    let y = *row.covariates.get("year")?;
    (y.fract() == 0.0).then_some(y as i64)
}

impl Statistic for YearlyProportion {
    fn names(&self) -> Vec<String> {
        self.years.iter().map(|y| format!("prop_{}_{y}", self.label)).collect()
    }

    fn compute(&self, labels: &[&str], covariates: &[DesignRow]) -> std::result::Result<Vec<f64>, String> {
        let mut counts: BTreeMap<i64, (usize, usize)> = BTreeMap::new();
        for (label, row) in labels.iter().zip(covariates) {
            let year = year_of(row).ok_or("unit without integer year")?;
            let entry = counts.entry(year).or_default();
            entry.1 += 1;
            if *label == self.label {
                entry.0 += 1;
            }
        }
        self.years
            .iter()
            .map(|y| {
                counts
                    .get(y)
                    .map(|(hit, n)| *hit as f64 / *n as f64)
                    .ok_or_else(|| format!("year {y} has no units"))
            })
            .collect()
    }
}

/// Logistic regression of `label == positive` on fixed covariates, optionally
/// with a random intercept per group. Reports `beta_<coef>` and `p_<coef>`.
pub struct Regression {
    pub positive: String,
    pub mixed: Option<MixedOptions>,
    coefficients: Vec<String>,
}

impl Regression {
    pub fn new(positive: impl Into<String>, covariates: &[DesignRow], mixed: Option<MixedOptions>) -> Result<Self> {
        let first = covariates
            .first()
            .ok_or_else(|| Error::InvalidInput("regression needs units".into()))?;
        if mixed.is_some() && covariates.iter().any(|r| r.group.is_none()) {
            return Err(Error::Formula("mixed model needs a group on every unit".into()));
        }
        let mut coefficients = vec![crate::stats::INTERCEPT.to_string()];
        coefficients.extend(first.covariates.keys().cloned());
        Ok(Self { positive: positive.into(), mixed, coefficients })
    }

    pub fn fit(&self, labels: &[&str], covariates: &[DesignRow]) -> Result<FitResult> {
        let observations: Vec<Observation> = labels
            .iter()
            .zip(covariates)
            .map(|(label, row)| Observation {
                response: (*label == self.positive) as u8,
                covariates: row.covariates.clone(),
                group: row.group.clone(),
            })
            .collect();
        match &self.mixed {
            None => fit_logistic(&observations),
            Some(options) => fit_logistic_random_intercept_with(&observations, options),
        }
    }
}

impl Statistic for Regression {
    fn names(&self) -> Vec<String> {
        self.coefficients
            .iter()
            .flat_map(|c| [format!("beta_{c}"), format!("p_{c}")])
            .collect()
    }

    fn compute(&self, labels: &[&str], covariates: &[DesignRow]) -> std::result::Result<Vec<f64>, String> {
        let fit = self.fit(labels, covariates).map_err(|e| e.to_string())?;
        Ok(fit
            .coefficients
            .iter()
            .flat_map(|c| [c.estimate, c.p_value])
            .collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    /// point ± z·σ
    #[default]
    Normal,
    /// empirical quantiles of the replicates
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ci_method: CiMethod,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Run replicates on the rayon pool. Results do not depend on it.
    #[serde(default = "default_parallel")]
    pub parallel: bool,
}

fn default_replicates() -> usize {
    10_000
}

fn default_level() -> f64 {
    0.95
}

fn default_parallel() -> bool {
    true
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_replicates: default_replicates(),
            seed: 0,
            ci_method: CiMethod::Normal,
            level: default_level(),
            parallel: true,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicates < 2 {
            return Err(Error::Config("n_replicates must be at least 2".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level {} must lie in (0, 1)", self.level)));
        }
        Ok(())
    }
}

/// Two-sided normal critical value; 1.96 at the 95% level.
pub fn z_value(level: f64) -> f64 {
    if (level - 0.95).abs() < 1e-12 {
        return 1.96;
    }
    Normal::standard().inverse_cdf(0.5 + level / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatisticSummary {
    pub name: String,
    /// Value on the observed labels.
    pub point: f64,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub statistics: Vec<StatisticSummary>,
    pub n_units: usize,
    pub config: BootstrapConfig,
    pub error_model: ErrorModel,
    #[serde(skip)]
    pub replicates: Vec<Vec<f64>>,
}

impl BootstrapResult {
    pub fn get(&self, name: &str) -> Option<&StatisticSummary> {
        self.statistics.iter().find(|s| s.name == name)
    }

    /// One row per replicate, one column per statistic.
    pub fn write_replicates_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["replicate".to_string()];
        header.extend(self.statistics.iter().map(|s| s.name.clone()));
        writer.write_record(&header)?;
        for (r, values) in self.replicates.iter().enumerate() {
            let mut row = vec![r.to_string()];
            row.extend(values.iter().map(|v| format!("{v}")));
            writer.write_record(&row)?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Mean and sample standard deviation, shifted by the first value so that
/// identical replicates give exactly zero spread.
fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let shift = values[0];
    let (mut s, mut ss) = (0.0, 0.0);
    for v in values {
        let d = v - shift;
        s += d;
        ss += d * d;
    }
    let mean = shift + s / n;
    let var = ((ss - s * s / n) / (n - 1.0)).max(0.0);
    (mean, var.sqrt())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn bootstrap_ci<S: AsRef<str> + Sync>(
    labels: &[S],
    covariates: &[DesignRow],
    em: &ErrorModel,
    statistic: &dyn Statistic,
    config: &BootstrapConfig,
) -> Result<BootstrapResult> {
    config.validate()?;
    let empty;
    let covariates = if covariates.is_empty() {
        empty = vec![DesignRow { covariates: BTreeMap::new(), group: None }; labels.len()];
        &empty[..]
    } else {
        covariates
    };
    if covariates.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels but {} covariate rows",
            labels.len(),
            covariates.len()
        )));
    }
    let observed = em.indices(labels)?;
    let names = statistic.names();
    let observed_refs: Vec<&str> = labels.iter().map(|l| l.as_ref()).collect();
    let point = statistic
        .compute(&observed_refs, covariates)
        .map_err(|reason| Error::InvalidInput(format!("statistic failed on observed labels: {reason}")))?;
    if point.len() != names.len() {
        return Err(Error::InvalidInput(format!(
            "statistic returned {} values for {} names",
            point.len(),
            names.len()
        )));
    }

    let sampler = em.sampler();
    let run = |r: usize, buffer: &mut Vec<usize>| -> Result<Vec<f64>> {
        let mut rng = stream_rng(config.seed, r as u64);
        sampler.fill(&observed, buffer, &mut rng);
        let simulated: Vec<&str> = buffer.iter().map(|&i| em.labels[i].as_str()).collect();
        let values = statistic
            .compute(&simulated, covariates)
            .map_err(|reason| Error::Replicate { replicate: r, reason })?;
        if values.len() != names.len() {
            return Err(Error::Replicate { replicate: r, reason: "wrong number of values".into() });
        }
        Ok(values)
    };
    let replicates: Vec<Vec<f64>> = if config.parallel {
        (0..config.n_replicates)
            .into_par_iter()
            .map_init(Vec::new, |buffer, r| run(r, buffer))
            .collect::<Result<_>>()?
    } else {
        let mut buffer = Vec::new();
        (0..config.n_replicates)
            .map(|r| run(r, &mut buffer))
            .collect::<Result<_>>()?
    };

    let z = z_value(config.level);
    let alpha = 1.0 - config.level;
    let statistics = names
        .into_iter()
        .enumerate()
        .map(|(k, name)| {
            let mut column: Vec<f64> = replicates.iter().map(|r| r[k]).collect();
            let (mean, sd) = mean_sd(&column);
            let (ci_low, ci_high) = match config.ci_method {
                CiMethod::Normal => (point[k] - z * sd, point[k] + z * sd),
                CiMethod::Percentile => {
                    column.sort_by(f64::total_cmp);
                    (quantile(&column, alpha / 2.0), quantile(&column, 1.0 - alpha / 2.0))
                }
            };
            StatisticSummary { name, point: point[k], mean, sd, ci_low, ci_high }
        })
        .collect();

    Ok(BootstrapResult {
        statistics,
        n_units: labels.len(),
        config: config.clone(),
        error_model: em.clone(),
        replicates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(a: usize, b: usize) -> Vec<String> {
        std::iter::repeat_n("A".to_string(), a).chain(std::iter::repeat_n("B".to_string(), b)).collect()
    }

    fn symmetric(eps: f64) -> ErrorModel {
        ErrorModel::new(vec!["A".into(), "B".into()], vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]).unwrap()
    }

    #[test]
    fn row_normalization() {
        let cm = ConfusionMatrix::new(vec!["A".into(), "B".into()], vec![vec![9, 1], vec![1, 9]]).unwrap();
        let em = error_model_from_confusion(&cm);
        assert_eq!(em.dists, vec![vec![0.9, 0.1], vec![0.1, 0.9]]);
        assert!(em.fallback.is_empty());
    }

    #[test]
    fn diagonal_gives_identity() {
        let cm = ConfusionMatrix::new(vec!["A".into(), "B".into()], vec![vec![4, 0], vec![0, 7]]).unwrap();
        assert_eq!(error_model_from_confusion(&cm).dists, ErrorModel::identity(cm.labels.clone()).dists);
    }

    #[test]
    fn empty_row_falls_back_to_identity() {
        let cm = ConfusionMatrix::new(vec!["A".into(), "B".into()], vec![vec![0, 0], vec![2, 8]]).unwrap();
        let em = error_model_from_confusion(&cm);
        assert_eq!(em.dists[0], vec![1.0, 0.0]);
        assert_eq!(em.fallback, vec!["A".to_string()]);
    }

    #[test]
    fn column_conditional_mode() {
        let cm = ConfusionMatrix::new(vec!["A".into(), "B".into()], vec![vec![6, 2], vec![3, 9]]).unwrap();
        let em = ErrorModel::from_confusion(&cm, SamplingMode::ColumnConditional);
        assert_eq!(em.dists[0], vec![6.0 / 9.0, 3.0 / 9.0]);
        assert_eq!(em.dists[1], vec![2.0 / 11.0, 9.0 / 11.0]);
    }

    #[test]
    fn invalid_distributions_rejected() {
        assert!(ErrorModel::new(vec!["A".into(), "B".into()], vec![vec![0.5, 0.4], vec![0.0, 1.0]]).is_err());
        assert!(ErrorModel::new(vec!["A".into()], vec![vec![1.0], vec![1.0]]).is_err());
    }

    #[test]
    fn identity_replicate_is_unchanged() {
        let input = labels(30, 20);
        let em = ErrorModel::identity(vec!["A".into(), "B".into()]);
        let out = simulate_replicate(&input, &em, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn point_mass_moves_every_label() {
        let em = ErrorModel::new(vec!["A".into(), "B".into()], vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let out = simulate_replicate(&labels(40, 0), &em, &mut stream_rng(1, 0)).unwrap();
        assert!(out.iter().all(|l| l == "B"));
    }

    #[test]
    fn unknown_label_rejected() {
        let em = ErrorModel::identity(vec!["A".into(), "B".into()]);
        assert!(simulate_replicate(&["A", "C"], &em, &mut stream_rng(1, 0)).is_err());
    }

    #[test]
    fn binomial_draw_count() {
        // 10000 draws from [0.9, 0.1]: #A ~ Binomial(10000, 0.9), sd 30
        let out = simulate_replicate(&labels(10_000, 0), &symmetric(0.1), &mut stream_rng(17, 3)).unwrap();
        let a = out.iter().filter(|l| *l == "A").count() as f64;
        assert!((a - 9000.0).abs() < 90.0, "{a}");
    }

    #[test]
    fn identity_gives_zero_width() {
        let config = BootstrapConfig { n_replicates: 500, ..Default::default() };
        let r = bootstrap_ci(
            &labels(37, 63),
            &[],
            &ErrorModel::identity(vec!["A".into(), "B".into()]),
            &Proportion { label: "A".into() },
            &config,
        )
        .unwrap();
        let s = &r.statistics[0];
        assert_eq!(s.sd, 0.0);
        assert_eq!(s.ci_low, s.point);
        assert_eq!(s.ci_high, s.point);
    }

    #[test]
    fn symmetric_noise_matches_binomial_sd() {
        // sd of prop(A) = sqrt(100 * 0.09) / 100 = 0.03
        let config = BootstrapConfig { n_replicates: 10_000, seed: 5, ..Default::default() };
        let r = bootstrap_ci(&labels(50, 50), &[], &symmetric(0.1), &Proportion { label: "A".into() }, &config).unwrap();
        let s = &r.statistics[0];
        assert!((s.sd - 0.03).abs() < 0.003, "{}", s.sd);
        assert!((s.mean - 0.5).abs() < 0.002);
        assert!((s.ci_high - s.point - 1.96 * s.sd).abs() < 1e-15);
    }

    #[test]
    fn half_noise_sd() {
        // all A, d_A = [0.5, 0.5], 100 units: sd = sqrt(100 * 0.25) / 100 = 0.05
        let em = ErrorModel::new(vec!["A".into(), "B".into()], vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let config = BootstrapConfig { n_replicates: 10_000, seed: 9, ..Default::default() };
        let r = bootstrap_ci(&labels(100, 0), &[], &em, &Proportion { label: "A".into() }, &config).unwrap();
        assert!((r.statistics[0].sd - 0.05).abs() < 0.003);
    }

    #[test]
    fn serial_equals_parallel() {
        let base = BootstrapConfig { n_replicates: 300, seed: 2, ..Default::default() };
        let serial = BootstrapConfig { parallel: false, ..base.clone() };
        let stat = Proportion { label: "A".into() };
        let a = bootstrap_ci(&labels(20, 30), &[], &symmetric(0.2), &stat, &base).unwrap();
        let b = bootstrap_ci(&labels(20, 30), &[], &symmetric(0.2), &stat, &serial).unwrap();
        assert_eq!(a.statistics, b.statistics);
        assert_eq!(a.replicates, b.replicates);
    }

    #[test]
    fn sd_monotone_in_noise() {
        let config = BootstrapConfig { n_replicates: 4000, seed: 1, ..Default::default() };
        let stat = Proportion { label: "A".into() };
        let sds: Vec<f64> = [0.0, 0.1, 0.25, 0.5]
            .iter()
            .map(|e| bootstrap_ci(&labels(60, 40), &[], &symmetric(*e), &stat, &config).unwrap().statistics[0].sd)
            .collect();
        assert_eq!(sds[0], 0.0);
        for w in sds.windows(2) {
            assert!(w[0] <= w[1], "{sds:?}");
        }
    }

    #[test]
    fn percentile_interval_brackets_mean() {
        let config = BootstrapConfig { n_replicates: 2000, seed: 4, ci_method: CiMethod::Percentile, ..Default::default() };
        let r = bootstrap_ci(&labels(50, 50), &[], &symmetric(0.1), &Proportion { label: "A".into() }, &config).unwrap();
        let s = &r.statistics[0];
        assert!(s.ci_low < s.mean && s.mean < s.ci_high);
        assert!(((s.ci_high - s.ci_low) / 2.0 - 1.96 * 0.03).abs() < 0.01);
    }

    struct Failing;
    impl Statistic for Failing {
        fn names(&self) -> Vec<String> {
            vec!["x".into()]
        }
        fn compute(&self, labels: &[&str], _: &[DesignRow]) -> std::result::Result<Vec<f64>, String> {
            if labels.iter().all(|l| *l == "A") {
                Ok(vec![1.0])
            } else {
                Err("boom".into())
            }
        }
    }

    #[test]
    fn failing_plugin_aborts_with_index() {
        let config = BootstrapConfig { n_replicates: 50, parallel: false, ..Default::default() };
        let err = bootstrap_ci(&labels(20, 0), &[], &symmetric(0.3), &Failing, &config).unwrap_err();
        assert!(matches!(err, Error::Replicate { replicate: 0, .. }), "{err}");
    }

    #[test]
    fn config_validation() {
        assert!(BootstrapConfig { n_replicates: 1, ..Default::default() }.validate().is_err());
        assert!(BootstrapConfig { level: 1.0, ..Default::default() }.validate().is_err());
        assert_eq!(z_value(0.95), 1.96);
        assert!((z_value(0.9) - 1.644854).abs() < 1e-5);
    }

    #[test]
    fn yearly_statistic() {
        let rows: Vec<DesignRow> = [1980, 1980, 1981, 1981]
            .iter()
            .map(|y| DesignRow { covariates: [("year".to_string(), *y as f64)].into(), group: None })
            .collect();
        let stat = YearlyProportion::new("A", &rows).unwrap();
        assert_eq!(stat.names(), vec!["prop_A_1980", "prop_A_1981"]);
        assert_eq!(stat.compute(&["A", "B", "A", "A"], &rows).unwrap(), vec![0.5, 1.0]);
    }
}
