use super::Outcome;
use crate::corpus::Variable;

fn clean(s: &str) -> String {
    s.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

/// Map a raw model reply onto one of the variable's levels.
///
/// Only the first non-empty line is considered. After stripping surrounding
/// punctuation and case-folding, an exact level match wins; otherwise a
/// unique prefix match in either direction (`neg` → `Negative`,
/// `positive sentiment` → `Positive`); anything else is unparseable.
pub fn normalize_output(raw: &str, variable: &Variable) -> Outcome {
    let Some(line) = raw.lines().map(str::trim).find(|l| !l.is_empty()) else {
        return Outcome::Unparseable;
    };
    let answer = clean(line);
    if answer.is_empty() {
        return Outcome::Unparseable;
    }
    if !variable.is_leveled() {
        return Outcome::Label(line.to_string());
    }
    let levels: Vec<(String, &str)> = variable
        .levels
        .iter()
        .map(|l| (clean(&l.label), l.label.as_str()))
        .collect();
    if let Some((_, label)) = levels.iter().find(|(c, _)| *c == answer) {
        return Outcome::Label(label.to_string());
    }
    let candidates: Vec<&str> = levels
        .iter()
        .filter(|(c, _)| {
            if c.is_empty() {
                return false;
            }
            c.starts_with(&answer)
                || (answer.starts_with(c.as_str())
                    && answer[c.len()..].starts_with(|ch: char| !ch.is_alphanumeric()))
        })
        .map(|(_, label)| *label)
        .collect();
    match candidates.as_slice() {
        [only] => Outcome::Label(only.to_string()),
        _ => Outcome::Unparseable,
    }
}
