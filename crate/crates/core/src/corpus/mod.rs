//! Units, coding schemes, and corpus ingestion.

mod ingest;
mod scheme;
mod unitize;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::rng::stream_rng;
use crate::{Error, Result};

pub use ingest::{ingest, CsvMapping, IngestOptions, InputFormat, MetaType};
pub use scheme::{CodingScheme, Level, Variable, VariableKind};
pub use unitize::{approx_tokens, segments, unitize, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MetaValue {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
}

impl MetaValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            MetaValue::Int(i) => Some(*i as f64),
            MetaValue::Float(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            MetaValue::Int(i) => Some(*i),
            MetaValue::Float(f) if f.fract() == 0.0 => Some(*f as i64),
            MetaValue::Str(s) => s.trim().parse().ok(),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            MetaValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

/// One analyzable text fragment: a row of the eventual data table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Unit {
    pub id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub groups: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, MetaValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<BTreeMap<String, String>>,
}

impl Unit {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            groups: BTreeMap::new(),
            meta: BTreeMap::new(),
            gold: None,
        }
    }

    pub fn gold_label(&self, variable: &str) -> Option<&str> {
        self.gold.as_ref()?.get(variable).map(String::as_str)
    }

    pub fn with_gold(mut self, variable: &str, label: &str) -> Self {
        self.gold
            .get_or_insert_with(BTreeMap::new)
            .insert(variable.to_string(), label.to_string());
        self
    }

    pub fn with_meta(mut self, key: &str, value: MetaValue) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    pub fn with_group(mut self, role: &str, id: &str) -> Self {
        self.groups.insert(role.to_string(), id.to_string());
        self
    }
}

/// `u000001`, `u000002`, … for zero-based input position `i`.
pub fn synthesized_id(i: usize) -> String {
    format!("u{:06}", i + 1)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub format: String,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

/// Ordered, validated collection of units. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Corpus {
    units: Vec<Unit>,
    provenance: Provenance,
}

impl Corpus {
    pub fn new(units: Vec<Unit>, provenance: Provenance) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for unit in &units {
            if unit.text.trim().is_empty() {
                return Err(Error::InvalidUnit {
                    id: unit.id.clone(),
                    reason: "text is empty".into(),
                });
            }
            if !seen.insert(unit.id.as_str()) {
                return Err(Error::DuplicateId(unit.id.clone()));
            }
        }
        Ok(Self { units, provenance })
    }

    /// Build and check every gold label against `scheme`.
    pub fn with_scheme(units: Vec<Unit>, provenance: Provenance, scheme: &CodingScheme) -> Result<Self> {
        let corpus = Self::new(units, provenance)?;
        corpus.validate_gold(scheme)?;
        Ok(corpus)
    }

    pub fn validate_gold(&self, scheme: &CodingScheme) -> Result<()> {
        for unit in &self.units {
            let Some(gold) = &unit.gold else { continue };
            for (variable, label) in gold {
                let known = scheme
                    .variable(variable)
                    .map(|v| !v.is_leveled() || v.has_level(label))
                    .unwrap_or(false);
                if !known {
                    return Err(Error::UnknownGoldLabel {
                        unit: unit.id.clone(),
                        variable: variable.clone(),
                        label: label.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Unit> {
        self.units.iter().find(|u| u.id == id)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for unit in &self.units {
            serde_json::to_writer(&mut out, unit)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }
}

/// Uniform sample of `n` units, reproducible for a given seed.
pub fn sample_units(corpus: &Corpus, n: usize, seed: u64, with_replacement: bool) -> Result<Vec<Unit>> {
    if n == 0 {
        return Err(Error::InvalidInput("sample size must be at least 1".into()));
    }
    let size = corpus.len();
    if size == 0 {
        return Err(Error::EmptyCorpus("cannot sample from an empty corpus".into()));
    }
    let mut rng = stream_rng(seed, 0);
    if with_replacement {
        return Ok((0..n)
            .map(|_| corpus.units[rng.random_range(0..size)].clone())
            .collect());
    }
    if n > size {
        return Err(Error::InvalidInput(format!(
            "cannot draw {n} units without replacement from {size}"
        )));
    }
    Ok(index::sample(&mut rng, size, n)
        .into_iter()
        .map(|i| corpus.units[i].clone())
        .collect())
}
