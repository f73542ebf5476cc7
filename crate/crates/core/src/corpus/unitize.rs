//! Splitting raw text into analyzable units.

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::Unit;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Strategy {
    Paragraph {
        #[serde(default)]
        merge_below: usize,
    },
    Sentence {
        #[serde(default)]
        merge_below: usize,
    },
    /// Chunks of at most `size` approximate tokens, cut at whitespace when possible.
    Window {
        size: usize,
        #[serde(default)]
        merge_below: usize,
    },
    /// A new unit starts at every line matching `marker`.
    Scene {
        marker: String,
        #[serde(default)]
        merge_below: usize,
    },
}

/// Approximate token count: one token per four characters, rounded up.
pub fn approx_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub fn unitize(text: &str, strategy: &Strategy) -> Result<Vec<Unit>> {
    Ok(segments(text, strategy)?
        .into_iter()
        .enumerate()
        .map(|(i, text)| Unit::new(super::synthesized_id(i), text))
        .collect())
}

/// The text of each unit, in order.
pub fn segments(text: &str, strategy: &Strategy) -> Result<Vec<String>> {
    let (raw, merge_below, joiner) = match strategy {
        Strategy::Paragraph { merge_below } => (paragraphs(text), *merge_below, "\n\n"),
        Strategy::Sentence { merge_below } => (sentences(text), *merge_below, " "),
        Strategy::Window { size, merge_below } => {
            if *size == 0 {
                return Err(Error::InvalidInput("window size must be positive".into()));
            }
            (windows(text, size * 4), *merge_below, " ")
        }
        Strategy::Scene { marker, merge_below } => {
            let re = Regex::new(&format!("(?m){marker}"))
                .map_err(|e| Error::InvalidInput(format!("scene marker: {e}")))?;
            (scenes(text, &re), *merge_below, "\n\n")
        }
    };
    Ok(merge_short(raw, merge_below, joiner))
}

fn paragraphs(text: &str) -> Vec<String> {
    let blank = Regex::new(r"\n[ \t\r]*\n").expect("static regex");
    blank
        .split(text)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut after_terminator = false;
    for (i, c) in text.char_indices() {
        if matches!(c, '.' | '!' | '?') {
            after_terminator = true;
            continue;
        }
        if after_terminator && matches!(c, '"' | '\'' | ')' | ']' | '”' | '’') {
            continue;
        }
        if after_terminator && c.is_whitespace() {
            let piece = text[start..i].trim();
            if !piece.is_empty() {
                out.push(piece.to_string());
            }
            start = i;
        }
        after_terminator = false;
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
    out
}

fn windows(text: &str, max_chars: usize) -> Vec<String> {
    let chars: Vec<char> = text.trim().chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        while start < chars.len() && chars[start].is_whitespace() {
            start += 1;
        }
        if start >= chars.len() {
            break;
        }
        let remaining = chars.len() - start;
        let end = if remaining <= max_chars {
            chars.len()
        } else {
            let hard = start + max_chars;
            // prefer cutting at the last whitespace inside the window
            (start + 1..=hard)
                .rev()
                .find(|&k| chars[k].is_whitespace())
                .unwrap_or(hard)
        };
        let piece: String = chars[start..end].iter().collect();
        let piece = piece.trim_end();
        if !piece.is_empty() {
            out.push(piece.to_string());
        }
        start = end;
    }
    out
}

fn scenes(text: &str, marker: &Regex) -> Vec<String> {
    let mut starts: Vec<usize> = marker
        .find_iter(text)
        .map(|m| m.start())
        .filter(|&s| s == 0 || text[..s].ends_with('\n'))
        .collect();
    if starts.first() != Some(&0) {
        starts.insert(0, 0);
    }
    starts.dedup();
    starts.push(text.len());
    starts
        .windows(2)
        .map(|w| text[w[0]..w[1]].trim())
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

/// Segments shorter than `min_tokens` merge into their successor; a short
/// final segment merges into its predecessor.
fn merge_short(segments: Vec<String>, min_tokens: usize, joiner: &str) -> Vec<String> {
    if min_tokens == 0 {
        return segments;
    }
    let mut out: Vec<String> = Vec::with_capacity(segments.len());
    let mut pending: Option<String> = None;
    for seg in segments {
        let current = match pending.take() {
            Some(p) => format!("{p}{joiner}{seg}"),
            None => seg,
        };
        if approx_tokens(&current) < min_tokens {
            pending = Some(current);
        } else {
            out.push(current);
        }
    }
    if let Some(rest) = pending {
        match out.last_mut() {
            Some(last) => {
                last.push_str(joiner);
                last.push_str(&rest);
            }
            None => out.push(rest),
        }
    }
    out
}
