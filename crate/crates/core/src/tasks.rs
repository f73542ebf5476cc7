//! Case-study recipes: semantic change scoring, semantic edit distance,
//! majority-vote labels for long documents and open-answer matching.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::agreement::spearman_rho;
use crate::{Error, Result};

/// Relatedness of two uses of a word, on the 4-point DURel scale.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairJudgment {
    pub word: String,
    pub rating: u8,
}

impl PairJudgment {
    pub fn new(word: impl Into<String>, rating: u8) -> Result<Self> {
        if !(1..=4).contains(&rating) {
            return Err(Error::InvalidInput(format!("rating {rating} outside 1..=4")));
        }
        Ok(Self { word: word.into(), rating })
    }

    /// From a model label such as `Distinct` or `closely related`.
    pub fn from_label(word: impl Into<String>, label: &str) -> Result<Self> {
        let rating = durel_rating(label)
            .ok_or_else(|| Error::UnknownLabel { unit: String::new(), label: label.to_string() })?;
        Self::new(word, rating)
    }
}

const DUREL: [(&str, &str, u8); 4] = [
    ("distinct", "unrelated", 1),
    ("linked", "distantly related", 2),
    ("related", "closely related", 3),
    ("same", "identical", 4),
];

/// Scheme label or descriptive phrase to rating, case-insensitive.
pub fn durel_rating(label: &str) -> Option<u8> {
    let label = label.trim().to_lowercase();
    if let Ok(n) = label.parse::<u8>() {
        return (1..=4).contains(&n).then_some(n);
    }
    DUREL
        .iter()
        .find(|(short, long, _)| label == *short || label == *long)
        .map(|(_, _, r)| *r)
}

pub fn durel_label(rating: u8) -> Option<&'static str> {
    ["Distinct", "Linked", "Related", "Same"].get(usize::from(rating).checked_sub(1)?).copied()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangeScore {
    pub word: String,
    /// mean(4 − rating) / 3; 0 is no change, 1 is every pair unrelated.
    pub graded: f64,
    pub binary: bool,
    pub n_judgments: usize,
}

pub const DEFAULT_CHANGE_THRESHOLD: usize = 2;

/// Per-word change scores, sorted by word. A word counts as changed when at
/// least `threshold` of its pairs are rated unrelated.
pub fn score_semantic_change(judgments: &[PairJudgment], threshold: usize) -> Result<Vec<ChangeScore>> {
    let mut by_word: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
    for j in judgments {
        if !(1..=4).contains(&j.rating) {
            return Err(Error::InvalidInput(format!("`{}`: rating {} outside 1..=4", j.word, j.rating)));
        }
        by_word.entry(&j.word).or_default().push(j.rating);
    }
    Ok(by_word
        .into_iter()
        .map(|(word, ratings)| {
            let n = ratings.len();
            let dissimilarity: u32 = ratings.iter().map(|r| u32::from(4 - r)).sum();
            ChangeScore {
                word: word.to_string(),
                graded: dissimilarity as f64 / (3 * n) as f64,
                binary: ratings.iter().filter(|r| **r == 1).count() >= threshold,
                n_judgments: n,
            }
        })
        .collect())
}

/// Spearman correlation between predicted and gold graded scores.
pub fn rank_eval(scores: &BTreeMap<String, f64>, gold: &BTreeMap<String, f64>) -> Result<f64> {
    if scores.keys().ne(gold.keys()) {
        let missing: Vec<&String> = scores.keys().collect::<BTreeSet<_>>()
            .symmetric_difference(&gold.keys().collect())
            .copied()
            .collect();
        return Err(Error::InvalidInput(format!("word sets differ: {missing:?}")));
    }
    let xs: Vec<f64> = scores.values().copied().collect();
    let ys: Vec<f64> = gold.values().copied().collect();
    spearman_rho(&xs, &ys)
}

/// Two-column `word,score` CSV; a non-numeric first row is a header.
pub fn read_gold_scores<R: Read>(input: R) -> Result<BTreeMap<String, f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(input);
    let mut out = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 2 {
            return Err(Error::InvalidInput(format!("gold row {}: expected 2 columns", i + 1)));
        }
        let score = match record[1].parse::<f64>() {
            Ok(s) => s,
            Err(_) if i == 0 => continue,
            Err(_) => return Err(Error::InvalidInput(format!("gold row {}: bad score `{}`", i + 1, &record[1]))),
        };
        if out.insert(record[0].to_string(), score).is_some() {
            return Err(Error::DuplicateId(record[0].to_string()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EditClass {
    Close,
    Addition,
    Deletion,
    Substitution,
}

impl FromStr for EditClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "close" => Ok(Self::Close),
            "addition" => Ok(Self::Addition),
            "deletion" => Ok(Self::Deletion),
            "substitution" => Ok(Self::Substitution),
            _ => Err(Error::UnknownLabel { unit: String::new(), label: s.to_string() }),
        }
    }
}

impl fmt::Display for EditClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Self::Close => "close",
            Self::Addition => "addition",
            Self::Deletion => "deletion",
            Self::Substitution => "substitution",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditDistance {
    pub counts: BTreeMap<EditClass, usize>,
    /// Number of aligned pairs that are not close.
    pub distance: usize,
    pub n_pairs: usize,
}

/// Distance between an original and a translation from per-pair classes.
pub fn semantic_edit_distance<S: AsRef<str>>(pair_classes: &[S]) -> Result<EditDistance> {
    if pair_classes.is_empty() {
        return Err(Error::InvalidInput("no aligned pairs".into()));
    }
    let mut counts = BTreeMap::new();
    for class in pair_classes {
        *counts.entry(class.as_ref().parse::<EditClass>()?).or_insert(0) += 1;
    }
    let close = counts.get(&EditClass::Close).copied().unwrap_or(0);
    Ok(EditDistance { counts, distance: pair_classes.len() - close, n_pairs: pair_classes.len() })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityLabel {
    pub label: String,
    pub count: usize,
    /// Another label had the same count.
    pub tie: bool,
}

/// Most frequent segment label. Ties go to the label declared first in
/// `level_order`; undeclared labels rank after declared ones, alphabetically.
pub fn majority_label<S: AsRef<str>>(segment_labels: &[S], level_order: &[S]) -> Result<MajorityLabel> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in segment_labels {
        *counts.entry(l.as_ref()).or_insert(0) += 1;
    }
    let top = *counts.values().max().ok_or_else(|| Error::InvalidInput("no segment labels".into()))?;
    let rank = |label: &str| level_order.iter().position(|l| l.as_ref() == label).unwrap_or(usize::MAX);
    let mut tied: Vec<&str> = counts.iter().filter(|(_, c)| **c == top).map(|(l, _)| *l).collect();
    tied.sort_by_key(|l| (rank(l), *l));
    Ok(MajorityLabel { label: tied[0].to_string(), count: top, tie: tied.len() > 1 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchOutcome {
    Hit,
    Miss,
}

/// First non-empty line, case-folded, punctuation removed, whitespace
/// collapsed.
pub fn normalize_answer(raw: &str) -> String {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    let kept: String = line
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    kept.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Exact match of the normalized answer against any accepted form.
pub fn open_match<S: AsRef<str>>(raw: &str, accepted: &[S]) -> MatchOutcome {
    let answer = normalize_answer(raw);
    if !answer.is_empty() && accepted.iter().any(|a| normalize_answer(a.as_ref()) == answer) {
        MatchOutcome::Hit
    } else {
        MatchOutcome::Miss
    }
}
