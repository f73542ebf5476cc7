use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairFilters {
    /// Names dropped after extraction, compared case-insensitively.
    #[serde(default)]
    pub stoplist: BTreeSet<String>,
    #[serde(default)]
    pub min_name_len: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExtraction {
    /// Unordered pairs, each stored with the lexicographically smaller name first.
    pub pairs: BTreeSet<(String, String)>,
    pub malformed_lines: usize,
    pub filtered: usize,
}

fn clean_name(raw: &str) -> String {
    raw.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parse tab-separated `name<TAB>name` lines into a set of unordered pairs.
pub fn extract_pairs(raw: &str, filters: &PairFilters) -> PairExtraction {
    let stop: BTreeSet<String> = filters.stoplist.iter().map(|s| s.to_lowercase()).collect();
    let mut out = PairExtraction::default();
    for line in raw.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(a), Some(b)) = (fields.next(), fields.next()) else {
            out.malformed_lines += 1;
            continue;
        };
        let (a, b) = (clean_name(a), clean_name(b));
        if a.is_empty() || b.is_empty() {
            out.malformed_lines += 1;
            continue;
        }
        let rejected = |n: &str| n.chars().count() < filters.min_name_len || stop.contains(&n.to_lowercase());
        if a == b || rejected(&a) || rejected(&b) {
            out.filtered += 1;
            continue;
        }
        let pair = if a <= b { (a, b) } else { (b, a) };
        out.pairs.insert(pair);
    }
    out
}
