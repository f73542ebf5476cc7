use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use annostat::stats::{
    fit_logistic, fit_logistic_random_intercept_with, select_covariates, FitResult, MixedOptions,
};
use annostat::synth::{gen_confound, gen_interview_margins, gen_simpson, Dataset, CAMPUS_ON};
use annostat::Result;
use clap::ValueEnum;

use crate::commands::print_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DemoKind {
    Simpson,
    Confound,
    Interview,
}

fn p_of(fit: &FitResult, name: &str) -> f64 {
    fit.coef(name).map(|c| c.p_value).unwrap_or(f64::NAN)
}

fn mixed(dataset: &Dataset, observations: &[annostat::stats::Observation]) -> Result<FitResult> {
    let options = MixedOptions {
        group_name: dataset.group_role.clone().unwrap_or_else(|| "group".into()),
        ..MixedOptions::default()
    };
    fit_logistic_random_intercept_with(observations, &options)
}

fn emit(dataset: &Dataset, out: Option<&Path>) -> Result<()> {
    let Some(path) = out else { return Ok(()) };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut writer = BufWriter::new(File::create(path)?);
    dataset.to_corpus()?.write_jsonl(&mut writer)?;
    writer.flush()?;
    println!("wrote {} units to {}", dataset.rows.len(), path.display());
    Ok(())
}

pub fn run(kind: DemoKind, seed: u64, out: Option<&Path>) -> Result<()> {
    match kind {
        DemoKind::Simpson => {
            let data = gen_simpson(seed, 3, 40)?;
            let obs = data.observations();
            let fixed = fit_logistic(&obs)?;
            let mixed = mixed(&data, &obs)?;
            println!("fixed effects: positive ~ age");
            print_fit(&fixed);
            println!("mixed model: positive ~ age + (1|school)");
            print_fit(&mixed);
            let (pf, pm) = (p_of(&fixed, "age"), p_of(&mixed, "age"));
            println!("age p = {pf:.3e} without schools, {pm:.3} with school intercepts");
            if pf < 0.001 && pm > 0.05 {
                println!("verdict: the age effect disappears once schools are modelled");
            } else {
                println!("verdict: the contrast did not hold for seed {seed}");
            }
            emit(&data, out)
        }
        DemoKind::Confound => {
            let data = gen_confound(seed, 300)?;
            let obs = data.observations();
            let campus_only = fit_logistic(&select_covariates(&obs, &[CAMPUS_ON]))?;
            let full = fit_logistic(&obs)?;
            println!("without age: positive ~ campus");
            print_fit(&campus_only);
            println!("with age: positive ~ campus + age");
            print_fit(&full);
            let (p1, p2) = (p_of(&campus_only, CAMPUS_ON), p_of(&full, CAMPUS_ON));
            println!("campus p = {p1:.3e} without age, {p2:.3} with age");
            if p1 < 1e-4 && p2 > 0.1 {
                println!("verdict: the campus effect vanishes once age is included");
            } else {
                println!("verdict: the contrast did not hold for seed {seed}");
            }
            emit(&data, out)
        }
        DemoKind::Interview => {
            let data = gen_interview_margins(seed);
            let obs = data.observations();
            let campus = fit_logistic(&select_covariates(&obs, &[CAMPUS_ON]))?;
            let with_students = mixed(&data, &obs)?;
            println!("fixed effects: positive ~ campus");
            print_fit(&campus);
            println!("mixed model: positive ~ campus + age + (1|respondent)");
            print_fit(&with_students);
            let beta = campus.coef(CAMPUS_ON).map(|c| c.estimate).unwrap_or(f64::NAN);
            println!(
                "verdict: on-campus odds of a positive response are {:.4} times the off-campus odds (beta {beta:.4})",
                beta.exp()
            );
            emit(&data, out)
        }
    }
}
