use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariableKind {
    Categorical,
    Ordinal,
    Numeric,
    Open,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Level {
    pub label: String,
    #[serde(default)]
    pub definition: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variable {
    pub name: String,
    pub kind: VariableKind,
    #[serde(default)]
    pub levels: Vec<Level>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catch_all: Option<String>,
}

impl Variable {
    pub fn categorical(name: &str, labels: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            kind: VariableKind::Categorical,
            levels: labels
                .iter()
                .map(|l| Level { label: l.to_string(), definition: String::new() })
                .collect(),
            catch_all: None,
        }
    }

    pub fn labels(&self) -> Vec<String> {
        self.levels.iter().map(|l| l.label.clone()).collect()
    }

    pub fn has_level(&self, label: &str) -> bool {
        self.levels.iter().any(|l| l.label == label)
    }

    /// Position of `label` in the declared order.
    pub fn level_index(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l.label == label)
    }

    pub fn is_leveled(&self) -> bool {
        matches!(self.kind, VariableKind::Categorical | VariableKind::Ordinal)
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::InvalidScheme("variable with empty name".into()));
        }
        if self.is_leveled() {
            if self.levels.len() < 2 {
                return Err(Error::InvalidScheme(format!(
                    "variable `{}` needs at least 2 levels",
                    self.name
                )));
            }
            let mut seen = BTreeSet::new();
            for level in &self.levels {
                if level.label.trim().is_empty() {
                    return Err(Error::InvalidScheme(format!(
                        "variable `{}` has an empty level label",
                        self.name
                    )));
                }
                if !seen.insert(level.label.as_str()) {
                    return Err(Error::InvalidScheme(format!(
                        "variable `{}` repeats level `{}`",
                        self.name, level.label
                    )));
                }
            }
        } else if !self.levels.is_empty() {
            return Err(Error::InvalidScheme(format!(
                "variable `{}` of kind {:?} cannot declare levels",
                self.name, self.kind
            )));
        }
        if let Some(c) = &self.catch_all {
            if !self.has_level(c) {
                return Err(Error::InvalidScheme(format!(
                    "catch-all `{c}` is not a level of `{}`",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CodingScheme {
    pub version: String,
    pub variables: Vec<Variable>,
}

impl CodingScheme {
    pub fn new(version: impl Into<String>, variables: Vec<Variable>) -> Result<Self> {
        let scheme = Self { version: version.into(), variables };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        for v in &self.variables {
            v.validate()?;
            if !names.insert(v.name.as_str()) {
                return Err(Error::InvalidScheme(format!("duplicate variable `{}`", v.name)));
            }
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    /// Parse a TOML or JSON scheme document (chosen by extension, TOML
    /// otherwise).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let scheme: Self = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::InvalidScheme(e.to_string()))?
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml_scheme() {
        let text = r#"
version = "2"

[[variables]]
name = "topic"
kind = "categorical"
catch_all = "Misc"
levels = [
  { label = "Social", definition = "everyday life" },
  { label = "Misc" },
]
"#;
        let scheme: CodingScheme = toml::from_str(text).unwrap();
        scheme.validate().unwrap();
        assert_eq!(scheme.variable("topic").unwrap().labels(), vec!["Social", "Misc"]);
    }

    #[test]
    fn rejects_invalid_variables() {
        let one = Variable::categorical("x", &["A"]);
        assert!(one.validate().is_err());
        let dup = Variable::categorical("x", &["A", "A"]);
        assert!(dup.validate().is_err());
        let mut bad_catch = Variable::categorical("x", &["A", "B"]);
        bad_catch.catch_all = Some("Other".into());
        assert!(bad_catch.validate().is_err());
        let twice = CodingScheme::new(
            "1",
            vec![Variable::categorical("x", &["A", "B"]), Variable::categorical("x", &["C", "D"])],
        );
        assert!(twice.is_err());
    }
}
