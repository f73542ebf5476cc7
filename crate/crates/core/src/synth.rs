//! Seeded synthetic survey data for the statistics demonstrations.
//!
//! Each generator returns one row per response: a positive/negative
//! sentiment toward online learning, the student's age, optionally the
//! campus they live on and a school or respondent id. Rows convert to
//! regression observations and to corpus units with gold labels, so the
//! demos run through the full annotation pipeline.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{synthesized_id, CodingScheme, Corpus, MetaValue, Provenance, Unit, Variable};
use crate::rng::stream_rng;
use crate::stats::{Observation, INTERCEPT};
use crate::{Error, Result};

/// Generator constants. The defaults make the demonstrated contrasts hold
/// in at least 95 of 100 seeds at default sizes.
pub mod tuned {
    /// Logit intercepts of the outermost schools; inner schools are evenly spaced.
    pub const SIMPSON_INTERCEPT_RANGE: (f64, f64) = (-2.0, 2.0);
    /// Mean ages of the outermost schools.
    pub const SIMPSON_AGE_RANGE: (f64, f64) = (19.0, 25.0);
    pub const SIMPSON_AGE_SD: f64 = 2.0;

    pub const CONFOUND_AGES: (i64, i64) = (18, 30);
    /// Logit change per year of age.
    pub const CONFOUND_AGE_SLOPE: f64 = 0.5;
    /// Share living on campus at the youngest and oldest age.
    pub const CONFOUND_ON_CAMPUS: (f64, f64) = (0.9, 0.1);

    pub const INTERVIEW_AGES: (i64, i64) = (18, 30);
    pub const INTERVIEW_RESPONDENTS: (usize, usize) = (30, 23);
    /// Negative/positive responses off campus, then on campus.
    pub const INTERVIEW_MARGINS: [[usize; 2]; 2] = [[36, 73], [64, 19]];
    /// Success probability and cap of the responses-per-student geometric.
    pub const INTERVIEW_GEOMETRIC: (f64, usize) = (0.3, 10);
}

pub const SENTIMENT: &str = "sentiment";
pub const POSITIVE: &str = "positive";
pub const NEGATIVE: &str = "negative";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Simpson,
    Confound,
    InterviewMargins,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    #[serde(default)]
    pub seed: u64,
    /// Schools for `simpson`.
    #[serde(default)]
    pub groups: Option<usize>,
    /// Students per school for `simpson`, total students for `confound`.
    #[serde(default)]
    pub units_per_group: Option<usize>,
    /// Logit effect of age within schools for `simpson`; nonzero disables the
    /// zero-effect construction.
    #[serde(default)]
    pub within_age_effect: f64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        Self { kind, seed, groups: None, units_per_group: None, within_age_effect: 0.0 }
    }

    pub fn generate(&self) -> Result<Dataset> {
        match self.kind {
            GeneratorKind::Simpson => gen_simpson_with(
                self.seed,
                self.groups.unwrap_or(3),
                self.units_per_group.unwrap_or(40),
                self.within_age_effect,
            ),
            GeneratorKind::Confound => gen_confound(self.seed, self.units_per_group.unwrap_or(300)),
            GeneratorKind::InterviewMargins => Ok(gen_interview_margins(self.seed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub positive: bool,
    pub age: f64,
    /// `Some(true)` on campus.
    pub on_campus: Option<bool>,
    pub group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub kind: GeneratorKind,
    pub seed: u64,
    /// Group role name, `school` or `respondent`.
    pub group_role: Option<String>,
    pub rows: Vec<Row>,
}

pub const CAMPUS_ON: &str = "campus[on]";

impl Dataset {
    /// `age` and, when present, the `campus[on]` indicator; grouped by the
    /// school or respondent.
    pub fn observations(&self) -> Vec<Observation> {
        self.rows
            .iter()
            .map(|row| {
                let mut covariates = vec![("age".to_string(), row.age)];
                if let Some(on) = row.on_campus {
                    covariates.push((CAMPUS_ON.to_string(), on as u8 as f64));
                }
                let obs = Observation::new(row.positive, covariates);
                match &row.group {
                    Some(g) => obs.with_group(g.clone()),
                    None => obs,
                }
            })
            .collect()
    }

    /// Units with gold sentiment, `age`/`campus` metadata and group ids.
    pub fn to_corpus(&self) -> Result<Corpus> {
        let mut rng = stream_rng(self.seed, 1);
        let units = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let phrases = if row.positive { POSITIVE_TEXT } else { NEGATIVE_TEXT };
                let text = phrases[rng.random_range(0..phrases.len())];
                let age = if row.age.fract() == 0.0 {
                    MetaValue::Int(row.age as i64)
                } else {
                    MetaValue::Float(row.age)
                };
                let mut unit = Unit::new(synthesized_id(i), text)
                    .with_gold(SENTIMENT, if row.positive { POSITIVE } else { NEGATIVE })
                    .with_meta("age", age);
                if let Some(on) = row.on_campus {
                    unit = unit.with_meta("campus", MetaValue::Str(if on { "on" } else { "off" }.into()));
                }
                if let (Some(role), Some(g)) = (&self.group_role, &row.group) {
                    unit = unit.with_group(role, g);
                }
                unit
            })
            .collect();
        let mut parameters = BTreeMap::new();
        parameters.insert("seed".to_string(), self.seed.to_string());
        let kind = serde_json::to_value(self.kind)?.as_str().unwrap_or_default().to_string();
        parameters.insert("kind".to_string(), kind);
        Corpus::with_scheme(
            units,
            Provenance { source: "synthetic".into(), format: "generated".into(), parameters },
            &sentiment_scheme(),
        )
    }

    pub fn count(&self, on_campus: Option<bool>, positive: bool) -> usize {
        self.rows
            .iter()
            .filter(|r| r.positive == positive && (on_campus.is_none() || r.on_campus == on_campus))
            .count()
    }
}

const POSITIVE_TEXT: &[&str] = &[
    "Honestly I enjoy studying online, it fits my schedule.",
    "Remote lectures are great for me.",
    "I like that I can rewatch the recorded classes.",
    "Online learning saves me a long commute and I appreciate it.",
];

const NEGATIVE_TEXT: &[&str] = &[
    "I miss the classroom and talking to people in person.",
    "Online classes are tiring and hard to focus on.",
    "Studying from home has been frustrating.",
    "I dislike staring at a screen all day for lectures.",
];

/// One categorical variable `sentiment` with levels `negative`, `positive`.
pub fn sentiment_scheme() -> CodingScheme {
    CodingScheme {
        version: "1".into(),
        variables: vec![Variable::categorical(SENTIMENT, &[NEGATIVE, POSITIVE])],
    }
}

fn spaced(range: (f64, f64), i: usize, n: usize) -> f64 {
    range.0 + (range.1 - range.0) * i as f64 / (n - 1) as f64
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Schools differ in sentiment and in student age; within a school age has
/// no association with sentiment.
pub fn gen_simpson(seed: u64, n_schools: usize, n_per_school: usize) -> Result<Dataset> {
    gen_simpson_with(seed, n_schools, n_per_school, 0.0)
}

/// With `within_age_effect == 0` the ages of positive and of negative
/// students in each school are shifted to the school's mean age, so the
/// within-school covariance of age and sentiment is exactly zero.
pub fn gen_simpson_with(
    seed: u64,
    n_schools: usize,
    n_per_school: usize,
    within_age_effect: f64,
) -> Result<Dataset> {
    if n_schools < 2 || n_per_school < 2 {
        return Err(Error::InvalidInput("simpson needs at least 2 schools of 2 students".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let noise = Normal::new(0.0, tuned::SIMPSON_AGE_SD).expect("positive sd");
    let mut rows = Vec::with_capacity(n_schools * n_per_school);
    for s in 0..n_schools {
        let intercept = spaced(tuned::SIMPSON_INTERCEPT_RANGE, s, n_schools);
        let mean_age = spaced(tuned::SIMPSON_AGE_RANGE, s, n_schools);
        let mut school: Vec<Row> = (0..n_per_school)
            .map(|_| {
                let age = mean_age + noise.sample(&mut rng);
                let eta = intercept + within_age_effect * (age - mean_age);
                Row {
                    positive: rng.random::<f64>() < sigmoid(eta),
                    age,
                    on_campus: None,
                    group: Some(format!("school{}", s + 1)),
                }
            })
            .collect();
        if within_age_effect == 0.0 {
            let center = school.iter().map(|r| r.age).sum::<f64>() / n_per_school as f64;
            for class in [true, false] {
                let members: Vec<usize> = (0..n_per_school).filter(|&i| school[i].positive == class).collect();
                if members.is_empty() {
                    continue;
                }
                let class_mean = members.iter().map(|&i| school[i].age).sum::<f64>() / members.len() as f64;
                for i in members {
                    school[i].age += center - class_mean;
                }
            }
        }
        rows.extend(school);
    }
    Ok(Dataset { kind: GeneratorKind::Simpson, seed, group_role: Some("school".into()), rows })
}

/// Rounds `targets` to integers keeping every running sum within 0.5 of the
/// exact running sum.
fn diffuse_round(targets: &[f64]) -> Vec<usize> {
    let mut carry = 0.0;
    targets
        .iter()
        .map(|t| {
            let want = t + carry;
            let k = want.round().max(0.0);
            carry = want - k;
            k as usize
        })
        .collect()
}

/// Sentiment rises with age; older students mostly live off campus; campus
/// has no effect of its own.
///
/// Within each integer age the same share of positive and of negative
/// students live on campus, and that share is linear in age, so once age is
/// in the model the campus indicator carries (up to rounding) no information.
pub fn gen_confound(seed: u64, n: usize) -> Result<Dataset> {
    if n < 50 {
        return Err(Error::InvalidInput("confound needs at least 50 students".into()));
    }
    let mut rng = stream_rng(seed, 0);
    let (lo, hi) = tuned::CONFOUND_AGES;
    let mid = (lo + hi) as f64 / 2.0;
    let mut cells: BTreeMap<i64, [Vec<usize>; 2]> = (lo..=hi).map(|a| (a, [Vec::new(), Vec::new()])).collect();
    let mut rows: Vec<Row> = (0..n)
        .map(|i| {
            let age = rng.random_range(lo..=hi);
            let positive = rng.random::<f64>() < sigmoid(tuned::CONFOUND_AGE_SLOPE * (age as f64 - mid));
            cells.get_mut(&age).expect("age in range")[positive as usize].push(i);
            Row { positive, age: age as f64, on_campus: Some(false), group: None }
        })
        .collect();
    let share = |age: i64| {
        let (young, old) = tuned::CONFOUND_ON_CAMPUS;
        young + (old - young) * (age - lo) as f64 / (hi - lo) as f64
    };
    for class in 0..2 {
        let targets: Vec<f64> = cells.iter().map(|(a, c)| share(*a) * c[class].len() as f64).collect();
        let counts = diffuse_round(&targets);
        for ((_, cell), k) in cells.iter_mut().zip(counts) {
            let members = &mut cell[class];
            members.shuffle(&mut rng);
            for &i in members.iter().take(k.min(members.len())) {
                rows[i].on_campus = Some(true);
            }
        }
    }
    Ok(Dataset { kind: GeneratorKind::Confound, seed, group_role: None, rows })
}

/// Split `total` into `n` counts in `1..=cap` drawn from a capped geometric,
/// then nudged one at a time until they sum to `total`.
fn respondent_counts(rng: &mut ChaCha8Rng, n: usize, total: usize, p: f64, cap: usize) -> Vec<usize> {
    assert!(n <= total && total <= n * cap, "infeasible split");
    let mut counts: Vec<usize> = (0..n)
        .map(|_| {
            let mut k = 1;
            while k < cap && rng.random::<f64>() >= p {
                k += 1;
            }
            k
        })
        .collect();
    let mut sum: usize = counts.iter().sum();
    while sum != total {
        let i = rng.random_range(0..n);
        if sum > total && counts[i] > 1 {
            counts[i] -= 1;
            sum -= 1;
        } else if sum < total && counts[i] < cap {
            counts[i] += 1;
            sum += 1;
        }
    }
    counts
}

/// 192 responses from 53 students with the fixed campus by sentiment table.
/// The seed only moves responses between students and sets their ages.
pub fn gen_interview_margins(seed: u64) -> Dataset {
    let mut rng = stream_rng(seed, 0);
    let (p, cap) = tuned::INTERVIEW_GEOMETRIC;
    let (lo, hi) = tuned::INTERVIEW_AGES;
    let mut rows = Vec::new();
    let mut student = 0;
    for (on, (&[neg, pos], n_students)) in tuned::INTERVIEW_MARGINS
        .iter()
        .zip([tuned::INTERVIEW_RESPONDENTS.0, tuned::INTERVIEW_RESPONDENTS.1])
        .enumerate()
    {
        let mut answers: Vec<bool> = std::iter::repeat_n(false, neg).chain(std::iter::repeat_n(true, pos)).collect();
        answers.shuffle(&mut rng);
        let counts = respondent_counts(&mut rng, n_students, neg + pos, p, cap);
        let mut answers = answers.into_iter();
        for count in counts {
            student += 1;
            let age = rng.random_range(lo..=hi) as f64;
            for positive in answers.by_ref().take(count) {
                rows.push(Row {
                    positive,
                    age,
                    on_campus: Some(on == 1),
                    group: Some(format!("s{student:02}")),
                });
            }
        }
    }
    Dataset { kind: GeneratorKind::InterviewMargins, seed, group_role: Some("respondent".into()), rows }
}

/// Coefficient names of a full fit on a dataset, intercept first.
pub fn coefficient_names(dataset: &Dataset) -> Vec<String> {
    let mut names = vec![INTERCEPT.to_string(), "age".to_string()];
    if dataset.rows.first().is_some_and(|r| r.on_campus.is_some()) {
        names.push(CAMPUS_ON.to_string());
    }
    names
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{fit_logistic, fit_logistic_random_intercept, select_covariates};
    use std::collections::BTreeSet;

    #[test]
    fn interview_margins_are_exact() {
        for seed in 0..20 {
            let d = gen_interview_margins(seed);
            assert_eq!(d.rows.len(), 192);
            let ids: BTreeSet<_> = d.rows.iter().map(|r| r.group.clone().unwrap()).collect();
            assert_eq!(ids.len(), 53);
            assert_eq!(d.count(Some(false), false), 36);
            assert_eq!(d.count(Some(false), true), 73);
            assert_eq!(d.count(Some(true), false), 64);
            assert_eq!(d.count(Some(true), true), 19);
            assert!(d.rows.iter().all(|r| (18.0..=30.0).contains(&r.age) && r.age.fract() == 0.0));
        }
    }

    #[test]
    fn interview_campus_coefficient() {
        let d = gen_interview_margins(3);
        let fit = fit_logistic(&select_covariates(&d.observations(), &[CAMPUS_ON])).unwrap();
        let expected = (19.0f64 / 64.0).ln() - (73.0f64 / 36.0).ln();
        assert!((fit.coef(CAMPUS_ON).unwrap().estimate - expected).abs() < 1e-6);
    }

    #[test]
    fn seeds_are_reproducible() {
        assert_eq!(gen_simpson(4, 3, 40).unwrap(), gen_simpson(4, 3, 40).unwrap());
        assert_eq!(gen_confound(4, 300).unwrap(), gen_confound(4, 300).unwrap());
        assert_eq!(gen_interview_margins(4), gen_interview_margins(4));
        assert_ne!(gen_simpson(4, 3, 40).unwrap(), gen_simpson(5, 3, 40).unwrap());
    }

    #[test]
    fn simpson_within_school_covariance_is_zero() {
        let d = gen_simpson(9, 3, 40).unwrap();
        for s in 1..=3 {
            let rows: Vec<&Row> = d.rows.iter().filter(|r| r.group.as_deref() == Some(&format!("school{s}"))).collect();
            let n = rows.len() as f64;
            let mean_age = rows.iter().map(|r| r.age).sum::<f64>() / n;
            let mean_y = rows.iter().filter(|r| r.positive).count() as f64 / n;
            let cov: f64 = rows.iter().map(|r| (r.age - mean_age) * (r.positive as u8 as f64 - mean_y)).sum();
            assert!(cov.abs() < 1e-9, "school {s}: {cov}");
        }
    }

    #[test]
    fn confound_campus_share_matches_within_age() {
        let d = gen_confound(2, 300).unwrap();
        assert_eq!(d.rows.len(), 300);
        let fit = fit_logistic(&d.observations()).unwrap();
        assert!(fit.coef("age").unwrap().estimate > 0.0);
        assert!(fit.coef(CAMPUS_ON).unwrap().p_value > 0.1);
    }

    #[test]
    fn simpson_single_seed_contrast() {
        let obs = gen_simpson(1, 3, 40).unwrap().observations();
        assert!(fit_logistic(&obs).unwrap().coef("age").unwrap().p_value < 0.001);
        assert!(fit_logistic_random_intercept(&obs).unwrap().coef("age").unwrap().p_value > 0.05);
    }

    #[test]
    fn corpus_emission() {
        let d = gen_interview_margins(0);
        let corpus = d.to_corpus().unwrap();
        assert_eq!(corpus.len(), 192);
        let u = &corpus.units()[0];
        assert_eq!(u.id, "u000001");
        assert!(u.gold_label(SENTIMENT).is_some());
        assert!(u.meta.contains_key("campus"));
        assert!(u.groups.contains_key("respondent"));
        assert_eq!(corpus.to_jsonl(), d.to_corpus().unwrap().to_jsonl());
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(gen_simpson(0, 1, 40).is_err());
        assert!(gen_confound(0, 49).is_err());
    }

    #[test]
    fn spec_dispatch() {
        let spec = GeneratorSpec::new(GeneratorKind::Simpson, 2);
        assert_eq!(spec.generate().unwrap().rows.len(), 120);
    }
}
