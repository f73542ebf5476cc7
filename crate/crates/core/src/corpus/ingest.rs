use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{segments, synthesized_id, CodingScheme, Corpus, MetaValue, Provenance, Strategy, Unit};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    Csv,
    PlainText,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaType {
    Int,
    Float,
    Bool,
    String,
}

/// How CSV columns become unit fields. Columns not named here are kept as
/// string metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvMapping {
    #[serde(default)]
    pub id: Option<String>,
    pub text: String,
    /// column → type of the metadata value
    #[serde(default)]
    pub meta: BTreeMap<String, MetaType>,
    /// column → group role
    #[serde(default)]
    pub groups: BTreeMap<String, String>,
    /// column → scheme variable
    #[serde(default)]
    pub gold: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub format: InputFormat,
    pub csv: Option<CsvMapping>,
    pub unitize: Option<Strategy>,
    pub scheme: Option<CodingScheme>,
}

impl IngestOptions {
    pub fn new(format: InputFormat) -> Self {
        Self { format, csv: None, unitize: None, scheme: None }
    }
}

pub fn ingest(path: &Path, options: &IngestOptions) -> Result<Corpus> {
    let text = std::fs::read_to_string(path)?;
    let source = path.display().to_string();
    let mut parameters = BTreeMap::new();
    let units = match options.format {
        InputFormat::Jsonl => parse_jsonl(&text)?,
        InputFormat::Csv => {
            let mapping = options.csv.as_ref().ok_or_else(|| {
                Error::Config("csv ingestion needs a column mapping".into())
            })?;
            parameters.insert("mapping".into(), serde_json::to_string(mapping)?);
            parse_csv(&text, mapping)?
        }
        InputFormat::PlainText => {
            let strategy = options.unitize.as_ref().ok_or_else(|| {
                Error::Config("plain-text ingestion needs a unitizing strategy".into())
            })?;
            parameters.insert("unitize".into(), serde_json::to_string(strategy)?);
            segments(&text, strategy)?
                .into_iter()
                .enumerate()
                .map(|(i, t)| Unit::new(synthesized_id(i), t))
                .collect()
        }
    };
    if units.is_empty() {
        return Err(Error::EmptyCorpus(format!("no units in {source}")));
    }
    let format = serde_json::to_value(options.format)?
        .as_str()
        .unwrap_or_default()
        .to_string();
    let provenance = Provenance { source, format, parameters };
    match &options.scheme {
        Some(scheme) => Corpus::with_scheme(units, provenance, scheme),
        None => Corpus::new(units, provenance),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonUnit {
    #[serde(default)]
    id: Option<String>,
    text: String,
    #[serde(default)]
    groups: BTreeMap<String, String>,
    #[serde(default)]
    meta: BTreeMap<String, MetaValue>,
    #[serde(default)]
    gold: Option<BTreeMap<String, String>>,
}

fn parse_jsonl(text: &str) -> Result<Vec<Unit>> {
    let mut units = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: JsonUnit = serde_json::from_str(line).map_err(|e| Error::InvalidUnit {
            id: format!("line {}", line_no + 1),
            reason: e.to_string(),
        })?;
        let id = raw.id.unwrap_or_else(|| synthesized_id(units.len()));
        units.push(Unit {
            id,
            text: raw.text,
            groups: raw.groups,
            meta: raw.meta,
            gold: raw.gold,
        });
    }
    Ok(units)
}

fn parse_meta(value: &str, kind: MetaType, column: &str, row: usize) -> Result<MetaValue> {
    let bad = |what: &str| Error::InvalidUnit {
        id: format!("row {row}"),
        reason: format!("column `{column}`: `{value}` is not {what}"),
    };
    Ok(match kind {
        MetaType::Int => MetaValue::Int(value.trim().parse().map_err(|_| bad("an integer"))?),
        MetaType::Float => MetaValue::Float(value.trim().parse().map_err(|_| bad("a number"))?),
        MetaType::Bool => MetaValue::Bool(value.trim().parse().map_err(|_| bad("a boolean"))?),
        MetaType::String => MetaValue::Str(value.to_string()),
    })
}

fn parse_csv(text: &str, mapping: &CsvMapping) -> Result<Vec<Unit>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Config(format!("csv has no column `{name}`")))
    };
    let text_col = column(&mapping.text)?;
    let id_col = mapping.id.as_deref().map(column).transpose()?;
    for c in mapping.meta.keys().chain(mapping.groups.keys()).chain(mapping.gold.keys()) {
        column(c)?;
    }

    let mut units = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let id = match id_col {
            Some(c) => record[c].to_string(),
            None => synthesized_id(row),
        };
        let mut unit = Unit::new(id, &record[text_col]);
        for (i, header) in headers.iter().enumerate() {
            if i == text_col || Some(i) == id_col {
                continue;
            }
            let value = &record[i];
            if let Some(role) = mapping.groups.get(header) {
                unit.groups.insert(role.clone(), value.to_string());
            } else if let Some(variable) = mapping.gold.get(header) {
                if !value.trim().is_empty() {
                    unit = unit.with_gold(variable, value.trim());
                }
            } else {
                let kind = mapping.meta.get(header).copied().unwrap_or(MetaType::String);
                unit.meta.insert(header.to_string(), parse_meta(value, kind, header, row + 1)?);
            }
        }
        units.push(unit);
    }
    Ok(units)
}

/// Read back units written by [`Corpus::write_jsonl`].
impl Corpus {
    pub fn from_jsonl(text: &str, source: &str) -> Result<Corpus> {
        let units = parse_jsonl(text)?;
        if units.is_empty() {
            return Err(Error::EmptyCorpus(format!("no units in {source}")));
        }
        Corpus::new(
            units,
            Provenance { source: source.to_string(), format: "jsonl".into(), parameters: BTreeMap::new() },
        )
    }
}
