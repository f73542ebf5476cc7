use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::corpus::{MetaValue, Unit};
use crate::{Error, Result};

const PLACEHOLDERS: [&str; 5] = ["text", "title", "a", "b", "target"];

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([A-Za-z_]+)\}").expect("static regex"))
}

/// Instruction text with `{text}`, `{title}`, `{a}`, `{b}` and `{target}`
/// placeholders, aimed at one scheme variable. In pair mode `{a}` and `{b}`
/// come from the unit's `a`/`b` metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub instruction: String,
    pub variable: String,
    #[serde(default)]
    pub pair_mode: bool,
}

impl PromptTemplate {
    pub fn new(instruction: impl Into<String>, variable: impl Into<String>) -> Self {
        Self { instruction: instruction.into(), variable: variable.into(), pair_mode: false }
    }

    pub fn placeholders(&self) -> Vec<String> {
        placeholder_re()
            .captures_iter(&self.instruction)
            .map(|c| c[1].to_string())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for name in self.placeholders() {
            if !PLACEHOLDERS.contains(&name.as_str()) {
                return Err(Error::InvalidTemplate(format!("unknown placeholder `{{{name}}}`")));
            }
            if (name == "a" || name == "b") && !self.pair_mode {
                return Err(Error::InvalidTemplate(format!(
                    "placeholder `{{{name}}}` needs pair_mode"
                )));
            }
        }
        Ok(())
    }

    /// Whether several units can share one prompt: only `{text}` may vary.
    pub fn supports_batching(&self) -> bool {
        self.placeholders().iter().all(|p| p == "text")
    }

    fn resolve<'u>(&self, unit: &'u Unit, name: &str) -> Result<std::borrow::Cow<'u, str>> {
        let meta = |key: &str| match unit.meta.get(key) {
            Some(MetaValue::Str(s)) => Ok(std::borrow::Cow::Borrowed(s.as_str())),
            Some(MetaValue::Int(i)) => Ok(i.to_string().into()),
            Some(MetaValue::Float(f)) => Ok(f.to_string().into()),
            Some(MetaValue::Bool(b)) => Ok(b.to_string().into()),
            None => Err(Error::InvalidTemplate(format!(
                "unit `{}` has no `{key}` for placeholder `{{{name}}}`",
                unit.id
            ))),
        };
        match name {
            "text" => Ok(unit.text.as_str().into()),
            other => meta(other),
        }
    }

    pub fn render(&self, unit: &Unit) -> Result<String> {
        let mut out = String::with_capacity(self.instruction.len() + unit.text.len());
        let mut last = 0;
        for caps in placeholder_re().captures_iter(&self.instruction) {
            let m = caps.get(0).expect("whole match");
            out.push_str(&self.instruction[last..m.start()]);
            out.push_str(&self.resolve(unit, &caps[1])?);
            last = m.end();
        }
        out.push_str(&self.instruction[last..]);
        Ok(out)
    }

    /// One prompt for several units: `{text}` becomes a numbered list and a
    /// line asking for `1. <label>` answers is appended.
    pub fn render_batch(&self, units: &[&Unit]) -> Result<String> {
        if !self.supports_batching() {
            return Err(Error::InvalidTemplate(
                "batching needs a template whose only placeholder is {text}".into(),
            ));
        }
        let listing = units
            .iter()
            .enumerate()
            .map(|(i, u)| format!("{}. {}", i + 1, u.text.replace('\n', " ")))
            .collect::<Vec<_>>()
            .join("\n");
        let body = self.instruction.replace("{text}", &listing);
        Ok(format!(
            "{body}\n\nAnswer with exactly one line per numbered item, in the form `1. <label>`."
        ))
    }
}

/// Parse `1. label` lines. `None` unless items 1..=expected each appear once.
pub fn parse_numbered(raw: &str, expected: usize) -> Option<Vec<String>> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^\s*(\d+)\s*[.):]\s*(.*?)\s*$").expect("static regex"));
    let mut slots: Vec<Option<String>> = vec![None; expected];
    let mut count = 0;
    for line in raw.lines().filter(|l| !l.trim().is_empty()) {
        let caps = re.captures(line)?;
        let k: usize = caps[1].parse().ok()?;
        if k == 0 || k > expected || slots[k - 1].is_some() {
            return None;
        }
        slots[k - 1] = Some(caps[2].to_string());
        count += 1;
    }
    if count != expected {
        return None;
    }
    slots.into_iter().collect()
}
