use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `response ~ cov1 + cov2 + (1|group)`: one response, `+`-separated
/// covariates, at most one random-intercept term.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Formula {
    pub response: String,
    pub covariates: Vec<String>,
    pub group: Option<String>,
}

fn is_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_')
        && chars.all(|c| c.is_alphanumeric() || c == '_' || c == '.' || c == '-')
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (lhs, rhs) = s
            .split_once('~')
            .ok_or_else(|| Error::Formula(format!("missing `~` in `{s}`")))?;
        if rhs.contains('~') {
            return Err(Error::Formula(format!("more than one `~` in `{s}`")));
        }
        let response = lhs.trim();
        if !is_name(response) {
            return Err(Error::Formula(format!("bad response name `{response}`")));
        }
        let mut covariates = Vec::new();
        let mut group = None;
        for term in rhs.split('+').map(str::trim) {
            if term == "1" {
                continue;
            }
            if let Some(inner) = term.strip_prefix('(').and_then(|t| t.strip_suffix(')')) {
                let (one, g) = inner
                    .split_once('|')
                    .ok_or_else(|| Error::Formula(format!("bad random term `{term}`")))?;
                let g = g.trim();
                if one.trim() != "1" || !is_name(g) {
                    return Err(Error::Formula(format!(
                        "only random intercepts `(1|group)` are supported, got `{term}`"
                    )));
                }
                if group.replace(g.to_string()).is_some() {
                    return Err(Error::Formula("at most one `(1|group)` term".into()));
                }
                continue;
            }
            if !is_name(term) {
                return Err(Error::Formula(format!("bad covariate term `{term}`")));
            }
            if covariates.iter().any(|c| c == term) {
                return Err(Error::Formula(format!("covariate `{term}` repeated")));
            }
            covariates.push(term.to_string());
        }
        Ok(Self {
            response: response.to_string(),
            covariates,
            group,
        })
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut terms: Vec<String> = self.covariates.clone();
        if let Some(g) = &self.group {
            terms.push(format!("(1|{g})"));
        }
        if terms.is_empty() {
            terms.push("1".into());
        }
        write!(f, "{} ~ {}", self.response, terms.join(" + "))
    }
}
