//! Deterministic offline model.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelClient, ModelRequest, ModelResponse, Reply};
use crate::corpus::{Corpus, Unit, Variable};
use crate::rng::keyed_rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordRule {
    pub keyword: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum MockMode {
    /// First rule whose keyword occurs (case-insensitively) in the unit text.
    Rules {
        rules: Vec<KeywordRule>,
        #[serde(default)]
        fallback: Option<String>,
    },
    /// Replace each unit's gold label with a draw from that label's row.
    GoldCorruption {
        labels: Vec<String>,
        matrix: Vec<Vec<f64>>,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockModel {
    #[serde(flatten)]
    pub mode: MockMode,
    /// Units containing any of these refuse to be labelled.
    #[serde(default)]
    pub refuse_keywords: Vec<String>,
}

impl MockModel {
    pub fn rules(rules: Vec<KeywordRule>, fallback: Option<String>) -> Self {
        Self { mode: MockMode::Rules { rules, fallback }, refuse_keywords: Vec::new() }
    }

    pub fn gold_corruption(labels: Vec<String>, matrix: Vec<Vec<f64>>, seed: u64) -> Result<Self> {
        let model = Self {
            mode: MockMode::GoldCorruption { labels, matrix, seed },
            refuse_keywords: Vec::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if let MockMode::GoldCorruption { labels, matrix, .. } = &self.mode {
            if matrix.len() != labels.len() || matrix.iter().any(|r| r.len() != labels.len()) {
                return Err(Error::Config(format!(
                    "mock corruption matrix must be {0}×{0}",
                    labels.len()
                )));
            }
            for (label, row) in labels.iter().zip(matrix) {
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| p.is_nan() || *p < 0.0) || sum.is_nan() || sum <= 0.0 {
                    return Err(Error::Config(format!(
                        "mock corruption row `{label}` must be non-negative with positive mass"
                    )));
                }
            }
        }
        Ok(())
    }

    fn refuses(&self, unit: &Unit) -> bool {
        let text = unit.text.to_lowercase();
        self.refuse_keywords.iter().any(|k| text.contains(&k.to_lowercase()))
    }

    fn answer(&self, unit: &Unit, variable: &Variable) -> String {
        match &self.mode {
            MockMode::Rules { rules, fallback } => {
                let text = unit.text.to_lowercase();
                rules
                    .iter()
                    .find(|r| text.contains(&r.keyword.to_lowercase()))
                    .map(|r| r.label.clone())
                    .or_else(|| fallback.clone())
                    .unwrap_or_else(|| "I am not sure.".to_string())
            }
            MockMode::GoldCorruption { labels, matrix, seed } => {
                let gold = unit.gold_label(&variable.name).unwrap_or_default();
                let Some(row) = labels.iter().position(|l| l == gold) else {
                    return String::new();
                };
                let weights = &matrix[row];
                let total: f64 = weights.iter().sum();
                let draw = keyed_rng(*seed, &unit.id).random::<f64>() * total;
                let mut acc = 0.0;
                for (label, w) in labels.iter().zip(weights) {
                    acc += w;
                    if draw < acc {
                        return label.clone();
                    }
                }
                // rounding at the top of the cumulative sum
                labels
                    .iter()
                    .zip(weights)
                    .rev()
                    .find(|(_, w)| **w > 0.0)
                    .map(|(l, _)| l.clone())
                    .unwrap_or_default()
            }
        }
    }
}

impl ModelClient for MockModel {
    fn identifier(&self) -> String {
        match &self.mode {
            MockMode::Rules { .. } => "mock:rules".into(),
            MockMode::GoldCorruption { seed, .. } => format!("mock:gold_corruption:{seed}"),
        }
    }

    fn check(&self, corpus: &Corpus, variable: &Variable) -> Result<()> {
        self.validate()?;
        if let MockMode::GoldCorruption { labels, .. } = &self.mode {
            for unit in corpus.units() {
                let gold = unit.gold_label(&variable.name).ok_or_else(|| {
                    Error::Config(format!(
                        "gold-corruption mock needs gold `{}` on unit `{}`",
                        variable.name, unit.id
                    ))
                })?;
                if !labels.iter().any(|l| l == gold) {
                    return Err(Error::Config(format!(
                        "gold label `{gold}` of unit `{}` is not in the mock's label list",
                        unit.id
                    )));
                }
            }
        }
        Ok(())
    }

    fn send(&self, request: &ModelRequest<'_>) -> Reply {
        if request.units.iter().any(|u| self.refuses(u)) {
            return ModelResponse::Refusal("content declined by mock policy".into()).into();
        }
        let text = match request.units {
            [single] => self.answer(single, request.variable),
            many => many
                .iter()
                .enumerate()
                .map(|(i, u)| format!("{}. {}", i + 1, self.answer(u, request.variable)))
                .collect::<Vec<_>>()
                .join("\n"),
        };
        ModelResponse::Text(text).into()
    }
}
