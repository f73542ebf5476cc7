use std::collections::BTreeMap;

use annostat::bootstrap::{bootstrap_ci, BootstrapConfig, ErrorModel, Proportion, Regression};
use annostat::corpus::{sample_units, Corpus, MetaValue, Provenance, Unit};
use annostat::stats::{fit_logistic, fit_logistic_random_intercept, DesignRow, Observation, INTERCEPT};
use annostat::synth::{gen_interview_margins, gen_simpson_with};
use proptest::prelude::{any, prop_assert, prop_assert_eq, prop_assume, proptest, ProptestConfig};

fn provenance() -> Provenance {
    Provenance { source: "prop".into(), format: "jsonl".into(), parameters: BTreeMap::new() }
}

fn build_corpus(texts: &[String], years: &[i64]) -> Corpus {
    let units = texts
        .iter()
        .zip(years)
        .enumerate()
        .map(|(i, (t, y))| {
            Unit::new(format!("id{i}"), t.clone())
                .with_meta("year", MetaValue::Int(*y))
                .with_meta("note", MetaValue::Str(format!("n{y}")))
                .with_group("speaker", &format!("s{}", y % 3))
                .with_gold("topic", if y % 2 == 0 { "A" } else { "B" })
        })
        .collect();
    Corpus::new(units, provenance()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn corpus_jsonl_round_trip(
        texts in proptest::collection::vec("[a-zA-Z0-9 ,.\"\\\\é]{1,40}", 1..20),
        year in 1900i64..2100,
    ) {
        prop_assume!(texts.iter().all(|t| !t.trim().is_empty()));
        let years: Vec<i64> = (0..texts.len() as i64).map(|i| year + i).collect();
        let corpus = build_corpus(&texts, &years);
        let back = Corpus::from_jsonl(&corpus.to_jsonl(), "mem").unwrap();
        prop_assert_eq!(back.units(), corpus.units());
    }

    #[test]
    fn sampling_is_reproducible(n in 1usize..30, seed in any::<u64>(), replace in any::<bool>()) {
        let texts: Vec<String> = (0..30).map(|i| format!("t{i}")).collect();
        let years: Vec<i64> = (0..30).collect();
        let corpus = build_corpus(&texts, &years);
        let a = sample_units(&corpus, n, seed, replace).unwrap();
        let b = sample_units(&corpus, n, seed, replace).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn bootstrap_is_deterministic_and_schedule_free(
        seed in any::<u64>(),
        eps in 0.0f64..0.5,
        n_a in 1usize..60,
        n_b in 1usize..60,
    ) {
        let labels: Vec<&str> = std::iter::repeat_n("A", n_a).chain(std::iter::repeat_n("B", n_b)).collect();
        let em = ErrorModel::new(vec!["A".into(), "B".into()], vec![vec![1.0 - eps, eps], vec![eps, 1.0 - eps]]).unwrap();
        let stat = Proportion { label: "A".into() };
        let parallel = BootstrapConfig { n_replicates: 64, seed, ..Default::default() };
        let serial = BootstrapConfig { parallel: false, ..parallel.clone() };
        let a = bootstrap_ci(&labels, &[], &em, &stat, &parallel).unwrap();
        let b = bootstrap_ci(&labels, &[], &em, &stat, &parallel).unwrap();
        let c = bootstrap_ci(&labels, &[], &em, &stat, &serial).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(&a.statistics, &c.statistics);
        prop_assert_eq!(&a.replicates, &c.replicates);
    }

    #[test]
    fn saturated_two_by_two(a in 1u32..80, b in 1u32..80, c in 1u32..80, d in 1u32..80) {
        // a/b negative/positive with x = 0, c/d with x = 1
        let mut obs = Vec::new();
        for (x, neg, pos) in [(0.0, a, b), (1.0, c, d)] {
            obs.extend((0..neg).map(|_| Observation::new(false, [("x".to_string(), x)])));
            obs.extend((0..pos).map(|_| Observation::new(true, [("x".to_string(), x)])));
        }
        let fit = fit_logistic(&obs).unwrap();
        let lo0 = (b as f64 / a as f64).ln();
        let lo1 = (d as f64 / c as f64).ln();
        prop_assert!((fit.coef(INTERCEPT).unwrap().estimate - lo0).abs() < 1e-6);
        prop_assert!((fit.coef("x").unwrap().estimate - (lo1 - lo0)).abs() < 1e-6);
    }

    #[test]
    fn shift_and_scale_invariance(seed in any::<u64>(), shift in -50.0f64..50.0, scale in 0.01f64..100.0) {
        use rand::Rng;
        let mut rng = annostat::rng::stream_rng(seed, 0);
        let base: Vec<(bool, f64, f64)> = (0..150)
            .map(|_| {
                let x: f64 = rng.random::<f64>() * 4.0 - 2.0;
                let w: f64 = rng.random::<f64>();
                (rng.random::<f64>() < 1.0 / (1.0 + (-(0.4 * x - 0.5 * w)).exp()), x, w)
            })
            .collect();
        let fit_with = |f: &dyn Fn(f64) -> f64| {
            let obs: Vec<Observation> = base
                .iter()
                .map(|(y, x, w)| Observation::new(*y, [("x".to_string(), f(*x)), ("w".to_string(), *w)]))
                .collect();
            fit_logistic(&obs).unwrap()
        };
        let plain = fit_with(&|x| x);
        let shifted = fit_with(&|x| x + shift);
        let scaled = fit_with(&|x| x * scale);
        for name in ["x", "w"] {
            prop_assert!((plain.coef(name).unwrap().estimate - shifted.coef(name).unwrap().estimate).abs() < 1e-6);
            prop_assert!((plain.coef(name).unwrap().z - shifted.coef(name).unwrap().z).abs() < 1e-6);
        }
        let (p, s) = (plain.coef("x").unwrap(), scaled.coef("x").unwrap());
        prop_assert!((p.estimate / scale - s.estimate).abs() < 1e-6 * (1.0 + p.estimate.abs()));
        prop_assert!((p.z - s.z).abs() < 1e-6);
        prop_assert!((p.p_value - s.p_value).abs() < 1e-6);
        prop_assert!((plain.coef("w").unwrap().estimate - scaled.coef("w").unwrap().estimate).abs() < 1e-6);
    }

    #[test]
    fn interview_table_is_seed_independent(seed in any::<u64>()) {
        let d = gen_interview_margins(seed);
        prop_assert_eq!(d.rows.len(), 192);
        prop_assert_eq!(
            [d.count(Some(false), false), d.count(Some(false), true), d.count(Some(true), false), d.count(Some(true), true)],
            [36, 73, 64, 19]
        );
    }
}

#[test]
fn simpson_negative_control() {
    // a real within-school age effect must survive the school intercepts
    let significant = (0..10)
        .filter(|seed| {
            let obs = gen_simpson_with(*seed, 3, 40, 1.0).unwrap().observations();
            fit_logistic_random_intercept(&obs).unwrap().coef("age").unwrap().p_value < 0.05
        })
        .count();
    assert!(significant >= 9, "{significant}/10");
}

#[test]
fn regression_statistic_in_bootstrap() {
    let rows: Vec<DesignRow> = (0..200)
        .map(|i| DesignRow { covariates: [("year".to_string(), (i % 10) as f64)].into(), group: None })
        .collect();
    let labels: Vec<&str> = (0..200).map(|i| if (i * 37) % 10 < i % 10 { "A" } else { "B" }).collect();
    let stat = Regression::new("A", &rows, None).unwrap();
    let em = ErrorModel::new(vec!["A".into(), "B".into()], vec![vec![0.9, 0.1], vec![0.1, 0.9]]).unwrap();
    let config = BootstrapConfig { n_replicates: 200, seed: 1, ..Default::default() };
    let r = bootstrap_ci(&labels, &rows, &em, &stat, &config).unwrap();
    let beta = r.get("beta_year").unwrap();
    assert!(beta.point > 0.0);
    assert!(beta.sd > 0.0 && beta.ci_low < beta.point && beta.point < beta.ci_high);
    // label noise attenuates the slope toward zero
    assert!(beta.mean < beta.point);
}
