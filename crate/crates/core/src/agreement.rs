//! Agreement between annotations and gold labels.
//!
//! Confusion matrices keep gold labels on rows and predictions on columns.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::annotator::Outcome;
use crate::corpus::Variable;
use crate::{Error, Result};

/// Name of the synthetic column collecting refused and unparseable outputs.
pub const ERROR_COLUMN: &str = "ERROR";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = labels.len();
        if k == 0 {
            return Err(Error::InvalidInput("confusion matrix needs labels".into()));
        }
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(Error::InvalidInput(format!("confusion matrix must be {k}×{k}")));
        }
        let cm = Self { labels, counts };
        if cm.total() == 0 {
            return Err(Error::InvalidInput("confusion matrix is empty".into()));
        }
        Ok(cm)
    }

    pub fn dim(&self) -> usize {
        self.labels.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.dim()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Same matrix with labels reordered by `order` (indices into `labels`).
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            counts: order
                .iter()
                .map(|&i| order.iter().map(|&j| self.counts[i][j]).collect())
                .collect(),
        }
    }

    /// Labeled grid: header `gold\predicted,<labels…>`, one row per gold label.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["gold\\predicted".to_string()];
        header.extend(self.labels.iter().cloned());
        writer.write_record(&header)?;
        for (label, row) in self.labels.iter().zip(&self.counts) {
            let mut record = vec![label.clone()];
            record.extend(row.iter().map(u64::to_string));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let labels: Vec<String> = reader.headers()?.iter().skip(1).map(String::from).collect();
        let mut counts = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            if record.get(0) != labels.get(i).map(String::as_str) {
                return Err(Error::InvalidInput(format!(
                    "confusion csv row {} is `{}`, expected `{}`",
                    i + 1,
                    record.get(0).unwrap_or_default(),
                    labels.get(i).map(String::as_str).unwrap_or("<none>")
                )));
            }
            let row = record
                .iter()
                .skip(1)
                .map(|v| {
                    v.trim()
                        .parse::<u64>()
                        .map_err(|_| Error::InvalidInput(format!("bad count `{v}` in confusion csv")))
                })
                .collect::<Result<Vec<_>>>()?;
            counts.push(row);
        }
        Self::new(labels, counts)
    }
}

/// Count gold/prediction pairs. Both maps must cover the same unit ids.
pub fn build_confusion(
    gold: &BTreeMap<String, String>,
    predicted: &BTreeMap<String, String>,
    labels: &[String],
) -> Result<ConfusionMatrix> {
    if gold.len() != predicted.len() || gold.keys().any(|k| !predicted.contains_key(k)) {
        let missing = gold
            .keys()
            .find(|k| !predicted.contains_key(*k))
            .or_else(|| predicted.keys().find(|k| !gold.contains_key(*k)));
        return Err(Error::InvalidInput(format!(
            "gold and predictions cover different units (e.g. `{}`)",
            missing.map(String::as_str).unwrap_or("?")
        )));
    }
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let position = |unit: &str, label: &str| {
        index.get(label).copied().ok_or_else(|| Error::UnknownLabel {
            unit: unit.to_string(),
            label: label.to_string(),
        })
    };
    let k = labels.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (unit, g) in gold {
        let i = position(unit, g)?;
        let j = position(unit, &predicted[unit])?;
        counts[i][j] += 1;
    }
    ConfusionMatrix::new(labels.to_vec(), counts)
}

/// Chance-corrected agreement `(p_o − p_e) / (1 − p_e)`.
pub fn cohens_kappa(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidInput("kappa of an empty matrix".into()));
    }
    let n = total as f64;
    let observed = cm.trace() as f64 / n;
    let expected: f64 = (0..cm.dim())
        .map(|i| cm.row_sum(i) as f64 * cm.col_sum(i) as f64)
        .sum::<f64>()
        / (n * n);
    if expected == 1.0 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// Set when a zero denominator forced a metric to 0.
    pub degenerate: bool,
}

pub fn per_class_metrics(cm: &ConfusionMatrix) -> (Vec<ClassMetrics>, f64) {
    let metrics: Vec<ClassMetrics> = (0..cm.dim())
        .map(|i| {
            let hit = cm.counts[i][i] as f64;
            let (row, col) = (cm.row_sum(i), cm.col_sum(i));
            let mut degenerate = false;
            let mut ratio = |den: u64| {
                if den == 0 {
                    degenerate = true;
                    0.0
                } else {
                    hit / den as f64
                }
            };
            let recall = ratio(row);
            let precision = ratio(col);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                label: cm.labels[i].clone(),
                precision,
                recall,
                f1,
                support: row,
                degenerate,
            }
        })
        .collect();
    let macro_f1 = metrics.iter().map(|m| m.f1).sum::<f64>() / metrics.len() as f64;
    (metrics, macro_f1)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start..end share the mean of ranks start+1..=end
        let rank = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman's rho: Pearson correlation of average ranks.
pub fn spearman_rho(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::InvalidInput(format!("lengths differ: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::InvalidInput("spearman needs at least 2 pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("spearman input contains NaN".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|x| *x == v[0]);
    if constant(xs) || constant(ys) {
        return Err(Error::InvalidInput("spearman is undefined for a constant vector".into()));
    }
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Where refused and unparseable outputs go when scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMapping {
    /// Counted in a separate error column and left out of every metric.
    #[default]
    ErrorColumn,
    /// Scored as the variable's catch-all level.
    CatchAll,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub variable: String,
    pub n_units: usize,
    pub accuracy: f64,
    pub kappa: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
    /// Refused/unparseable outputs per gold label (error-column mode only).
    pub errors: BTreeMap<String, u64>,
    pub n_errors: u64,
    pub failure_mapping: FailureMapping,
}

/// Score annotation outcomes against gold for the units present in both.
pub fn evaluate(
    gold: &BTreeMap<String, String>,
    outcomes: &BTreeMap<String, Outcome>,
    variable: &Variable,
    mapping: FailureMapping,
) -> Result<AgreementReport> {
    let shared: Vec<&String> = gold.keys().filter(|k| outcomes.contains_key(*k)).collect();
    if shared.is_empty() {
        return Err(Error::InvalidInput("gold and annotations share no unit ids".into()));
    }
    let catch_all = match mapping {
        FailureMapping::CatchAll => Some(variable.catch_all.clone().ok_or_else(|| {
            Error::Config(format!("variable `{}` has no catch-all level", variable.name))
        })?),
        FailureMapping::ErrorColumn => None,
    };
    let mut g = BTreeMap::new();
    let mut p = BTreeMap::new();
    let mut errors: BTreeMap<String, u64> = BTreeMap::new();
    for id in shared {
        let predicted = match (&outcomes[id], &catch_all) {
            (Outcome::Label(l), _) => l.clone(),
            (_, Some(c)) => c.clone(),
            (_, None) => {
                *errors.entry(gold[id].clone()).or_default() += 1;
                continue;
            }
        };
        g.insert(id.clone(), gold[id].clone());
        p.insert(id.clone(), predicted);
    }
    let n_errors = errors.values().sum();
    if g.is_empty() {
        return Err(Error::InvalidInput("every shared unit failed to annotate".into()));
    }
    let confusion = build_confusion(&g, &p, &variable.labels())?;
    let (per_class, macro_f1) = per_class_metrics(&confusion);
    Ok(AgreementReport {
        variable: variable.name.clone(),
        n_units: g.len(),
        accuracy: confusion.accuracy(),
        kappa: cohens_kappa(&confusion)?,
        per_class,
        macro_f1,
        confusion,
        errors,
        n_errors,
        failure_mapping: mapping,
    })
}
