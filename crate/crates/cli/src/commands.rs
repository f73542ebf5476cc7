use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use annostat::agreement::{evaluate as score, AgreementReport, ConfusionMatrix};
use annostat::annotator::{
    read_records, AnnotationRecord, Annotator, HttpClient, ModelClient, Outcome, PromptTemplate,
};
use annostat::bootstrap::{
    bootstrap_ci, BootstrapResult, ErrorModel, Proportion, Regression, Statistic, YearlyProportion,
};
use annostat::corpus::{ingest as read_input, CodingScheme, Corpus, IngestOptions, Unit, Variable};
use annostat::stats::{
    design_rows, fit_logistic, fit_logistic_random_intercept_with, DesignRow, FitResult, Formula,
    MixedOptions, Observation,
};
use annostat::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ClientKind, LabelSource, RunConfig};

pub const ANNOTATIONS: &str = "annotations.jsonl";
pub const AUDIT: &str = "audit.jsonl";
pub const MANIFEST: &str = "manifest.json";
pub const CONFUSION: &str = "confusion.csv";
pub const EVALUATION: &str = "evaluation.json";
pub const BOOTSTRAP: &str = "bootstrap.json";
pub const REPLICATES: &str = "replicates.csv";
pub const FIT: &str = "fit.json";
pub const REPORT: &str = "report.json";
pub const SUMMARY: &str = "summary.csv";

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_json(path: &Path) -> Result<Value> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn output_dir(config: &RunConfig) -> Result<()> {
    fs::create_dir_all(config.resolve(&config.paths.output_dir))?;
    Ok(())
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read corpus {}: {e}", path.display())))?;
    Corpus::from_jsonl(&text, &path.display().to_string())
}

fn load_scheme(config: &RunConfig) -> Result<CodingScheme> {
    let path = config.resolve(&config.paths.scheme);
    CodingScheme::load(&path).map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("cannot read scheme {}: {io}", path.display())),
        other => other,
    })
}

fn load_template(config: &RunConfig) -> Result<PromptTemplate> {
    let path = config.template_path()?;
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read template {}: {e}", path.display())))?;
    let template: PromptTemplate = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| Error::InvalidTemplate(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| Error::InvalidTemplate(e.to_string()))?
    };
    template.validate()?;
    Ok(template)
}

fn variable<'a>(scheme: &'a CodingScheme, template: &PromptTemplate) -> Result<&'a Variable> {
    scheme
        .variable(&template.variable)
        .ok_or_else(|| Error::Config(format!("template variable `{}` is not in the scheme", template.variable)))
}

fn load_records(config: &RunConfig, variable: &str) -> Result<Vec<AnnotationRecord>> {
    let path = config.output(ANNOTATIONS);
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::InvalidInput(format!("cannot read annotations {}: {e}", path.display())))?;
    Ok(read_records(&text)?.into_iter().filter(|r| r.variable == variable).collect())
}

pub fn ingest(config: &RunConfig) -> Result<()> {
    let section = config
        .ingest
        .as_ref()
        .ok_or_else(|| Error::Config("an [ingest] section is required".into()))?;
    let input = config.resolve(&section.input);
    let target = config.resolve(&config.paths.corpus);
    if input == target {
        return Err(Error::Config("ingest input and paths.corpus must differ".into()));
    }
    let mut options = IngestOptions::new(section.format);
    options.csv = section.csv.clone();
    options.unitize = section.unitize.clone();
    options.scheme = Some(load_scheme(config)?);
    let corpus = read_input(&input, &options)?;
    if let Some(parent) = target.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut out = BufWriter::new(File::create(&target)?);
    corpus.write_jsonl(&mut out)?;
    out.flush()?;
    println!("ingested {} units into {}", corpus.len(), target.display());
    Ok(())
}

fn build_client(config: &RunConfig) -> Result<Box<dyn ModelClient>> {
    let section = config
        .client
        .as_ref()
        .ok_or_else(|| Error::Config("a [client] section is required".into()))?;
    match section.kind {
        ClientKind::Mock => {
            let mock = section
                .mock
                .clone()
                .ok_or_else(|| Error::Config("client.kind = \"mock\" needs [client.mock]".into()))?;
            mock.validate()?;
            Ok(Box::new(mock))
        }
        ClientKind::Http => {
            let http = section
                .http
                .clone()
                .ok_or_else(|| Error::Config("client.kind = \"http\" needs [client.http]".into()))?;
            Ok(Box::new(HttpClient::from_env(http)?))
        }
    }
}

pub fn annotate(config: &RunConfig) -> Result<()> {
    let scheme = load_scheme(config)?;
    let template = load_template(config)?;
    let client = build_client(config)?;
    let corpus = load_corpus(&config.resolve(&config.paths.corpus))?;
    corpus.validate_gold(&scheme)?;
    let policy = config.client.as_ref().map(|c| c.policy()).unwrap_or_default();
    let mut annotator = Annotator::new(&template, &scheme, client.as_ref())?
        .policy(policy)
        .seed(Some(config.seed))
        .timestamp(config.timestamp());
    if let Some(controls) = &config.decoding {
        annotator = annotator.controls(controls.clone());
    }

    output_dir(config)?;
    let final_path = config.output(ANNOTATIONS);
    let partial_path = config.output(&format!("{ANNOTATIONS}.partial"));
    let mut partial = BufWriter::new(File::create(&partial_path)?);
    let result = annotator.run_with_sink(&corpus, &mut |record| {
        serde_json::to_writer(&mut partial, record)?;
        partial.write_all(b"\n")?;
        Ok(())
    });
    partial.flush()?;
    drop(partial);
    let set = match result {
        Ok(set) => set,
        Err(e) => {
            eprintln!("annotation stopped; completed records kept in {}", partial_path.display());
            return Err(e);
        }
    };
    fs::rename(&partial_path, &final_path)?;
    let mut audit = BufWriter::new(File::create(config.output(AUDIT))?);
    set.write_audit(&mut audit)?;
    audit.flush()?;
    write_json(&config.output(MANIFEST), &json!({ "annotation": set.manifest, "config": config }))?;

    let refused = set.count(|o| *o == Outcome::Refused);
    let unparseable = set.count(|o| *o == Outcome::Unparseable);
    println!("annotated {} units with {}", set.records.len(), set.manifest.model);
    if refused + unparseable > 0 {
        eprintln!("{refused} refused, {unparseable} unparseable");
    }
    Ok(())
}

fn gold_labels(config: &RunConfig, variable: &str) -> Result<BTreeMap<String, String>> {
    let path = config.resolve(config.paths.gold.as_ref().unwrap_or(&config.paths.corpus));
    let corpus = load_corpus(&path)?;
    Ok(corpus
        .units()
        .iter()
        .filter_map(|u| u.gold_label(variable).map(|g| (u.id.clone(), g.to_string())))
        .collect())
}

pub fn evaluate(config: &RunConfig) -> Result<()> {
    let scheme = load_scheme(config)?;
    let template = load_template(config)?;
    let variable = variable(&scheme, &template)?;
    let gold = gold_labels(config, &variable.name)?;
    if gold.is_empty() {
        return Err(Error::InvalidInput(format!("no gold labels for `{}`", variable.name)));
    }
    let outcomes: BTreeMap<String, Outcome> = load_records(config, &variable.name)?
        .into_iter()
        .map(|r| (r.unit_id, r.outcome))
        .collect();
    let report = score(&gold, &outcomes, variable, config.evaluate.failure_mapping)?;
    output_dir(config)?;
    let mut csv = File::create(config.output(CONFUSION))?;
    report.confusion.write_csv(&mut csv)?;
    write_json(&config.output(EVALUATION), &report)?;
    print_evaluation(&report);
    Ok(())
}

fn print_evaluation(report: &AgreementReport) {
    println!(
        "{}: n={} accuracy={:.4} kappa={:.4} macro_f1={:.4}",
        report.variable, report.n_units, report.accuracy, report.kappa, report.macro_f1
    );
    for c in &report.per_class {
        println!(
            "  {:<16} precision={:.3} recall={:.3} f1={:.3} support={}",
            c.label, c.precision, c.recall, c.f1, c.support
        );
    }
    if report.n_errors > 0 {
        println!("  {} refused/unparseable outputs left out", report.n_errors);
    }
}

/// The statistics the command line can bootstrap.
#[derive(Debug, Clone, PartialEq)]
pub enum StatisticSpec {
    Proportion(String),
    YearlyProportions(String),
    Logistic(Formula),
    Mixed(Formula),
}

impl FromStr for StatisticSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, rest) = s
            .split_once('(')
            .ok_or_else(|| Error::Config(format!("statistic `{s}` must look like name(argument)")))?;
        let arg = rest
            .strip_suffix(')')
            .ok_or_else(|| Error::Config(format!("statistic `{s}` is missing `)`")))?
            .trim();
        if arg.is_empty() {
            return Err(Error::Config(format!("statistic `{s}` has no argument")));
        }
        match name.trim() {
            "proportion" => Ok(Self::Proportion(arg.to_string())),
            "yearly_proportions" => Ok(Self::YearlyProportions(arg.to_string())),
            "logistic" => {
                let f: Formula = arg.parse()?;
                if f.group.is_some() {
                    return Err(Error::Formula("logistic(...) takes no random term; use mixed(...)".into()));
                }
                Ok(Self::Logistic(f))
            }
            "mixed" => {
                let f: Formula = arg.parse()?;
                if f.group.is_none() {
                    return Err(Error::Formula("mixed(...) needs a (1|group) term".into()));
                }
                Ok(Self::Mixed(f))
            }
            other => Err(Error::Config(format!("unknown statistic `{other}`"))),
        }
    }
}

impl StatisticSpec {
    fn label(&self) -> &str {
        match self {
            Self::Proportion(l) | Self::YearlyProportions(l) => l,
            Self::Logistic(f) | Self::Mixed(f) => &f.response,
        }
    }

    /// Covariate rows and the statistic, validated before any replicate.
    fn build(
        &self,
        units: &[Unit],
        scheme: &CodingScheme,
        nodes: usize,
    ) -> Result<(Vec<DesignRow>, Box<dyn Statistic>)> {
        Ok(match self {
            Self::Proportion(label) => (Vec::new(), Box::new(Proportion { label: label.clone() })),
            Self::YearlyProportions(label) => {
                let rows = units
                    .iter()
                    .map(|u| {
                        let year = u
                            .meta
                            .get("year")
                            .and_then(|v| v.as_i64())
                            .ok_or_else(|| Error::Formula(format!("unit `{}` has no integer `year`", u.id)))?;
                        Ok(DesignRow { covariates: [("year".to_string(), year as f64)].into(), group: None })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let stat = YearlyProportion::new(label.clone(), &rows)?;
                (rows, Box::new(stat))
            }
            Self::Logistic(f) | Self::Mixed(f) => {
                let rows = design_rows(f, units, Some(scheme))?;
                let mixed = f.group.as_ref().map(|g| MixedOptions {
                    quadrature_nodes: nodes,
                    group_name: g.clone(),
                    ..MixedOptions::default()
                });
                let stat = Regression::new(f.response.clone(), &rows, mixed)?;
                (rows, Box::new(stat))
            }
        })
    }
}

pub fn bootstrap(config: &RunConfig) -> Result<()> {
    let section = config
        .bootstrap
        .as_ref()
        .ok_or_else(|| Error::Config("a [bootstrap] section is required".into()))?;
    let spec: StatisticSpec = section.statistic.parse()?;
    let boot = section.config(config.seed);
    boot.validate()?;
    let scheme = load_scheme(config)?;
    let template = load_template(config)?;
    let variable = variable(&scheme, &template)?;
    if variable.is_leveled() && !variable.has_level(spec.label()) {
        return Err(Error::Config(format!(
            "`{}` is not a level of `{}`",
            spec.label(),
            variable.name
        )));
    }

    let confusion_path = match &section.confusion {
        Some(p) => config.resolve(p),
        None => config.output(CONFUSION),
    };
    let confusion_text = fs::read_to_string(&confusion_path).map_err(|e| {
        Error::InvalidInput(format!("cannot read confusion matrix {}: {e}", confusion_path.display()))
    })?;
    let em = ErrorModel::from_confusion(&ConfusionMatrix::read_csv(&confusion_text)?, section.mode);

    let corpus = load_corpus(&config.resolve(&config.paths.corpus))?;
    let labelled: BTreeMap<String, String> = load_records(config, &variable.name)?
        .into_iter()
        .filter_map(|r| r.outcome.label().map(|l| (r.unit_id.clone(), l.to_string())))
        .collect();
    let units: Vec<Unit> = corpus.units().iter().filter(|u| labelled.contains_key(&u.id)).cloned().collect();
    let excluded = corpus.len() - units.len();
    if units.is_empty() {
        return Err(Error::InvalidInput("no labelled units to bootstrap".into()));
    }
    if excluded > 0 {
        eprintln!("{excluded} units without a usable label left out of the bootstrap");
    }
    let labels: Vec<&str> = units.iter().map(|u| labelled[&u.id].as_str()).collect();
    let nodes = config.fit.as_ref().map(|f| f.quadrature_nodes).unwrap_or(15);
    let (rows, statistic) = spec.build(&units, &scheme, nodes)?;
    let result = bootstrap_ci(&labels, &rows, &em, statistic.as_ref(), &boot)?;

    output_dir(config)?;
    write_json(
        &config.output(BOOTSTRAP),
        &json!({ "statistic": section.statistic, "excluded_units": excluded, "result": result }),
    )?;
    if section.replicates_csv {
        let mut out = BufWriter::new(File::create(config.output(REPLICATES))?);
        result.write_replicates_csv(&mut out)?;
        out.flush()?;
    }
    print_bootstrap(&result);
    Ok(())
}

fn print_bootstrap(result: &BootstrapResult) {
    println!(
        "{} replicates over {} units, {:.0}% intervals",
        result.config.n_replicates,
        result.n_units,
        result.config.level * 100.0
    );
    for s in &result.statistics {
        println!(
            "  {:<24} {:>10.4}  sd {:.4}  [{:.4}, {:.4}]",
            s.name, s.point, s.sd, s.ci_low, s.ci_high
        );
    }
}

pub fn fit(config: &RunConfig) -> Result<()> {
    let section = config
        .fit
        .as_ref()
        .ok_or_else(|| Error::Config("a [fit] section is required".into()))?;
    let formula: Formula = section.formula.parse()?;
    let scheme = load_scheme(config)?;
    let corpus = load_corpus(&config.resolve(&config.paths.corpus))?;
    let labels: BTreeMap<String, String> = match section.labels {
        LabelSource::Gold => {
            let template = load_template(config).ok();
            let name = match &template {
                Some(t) => t.variable.clone(),
                None => single_variable(&scheme)?,
            };
            gold_labels(config, &name)?
        }
        LabelSource::Annotations => {
            let template = load_template(config)?;
            load_records(config, &template.variable)?
                .into_iter()
                .filter_map(|r| r.outcome.label().map(|l| (r.unit_id.clone(), l.to_string())))
                .collect()
        }
    };
    let units: Vec<Unit> = corpus.units().iter().filter(|u| labels.contains_key(&u.id)).cloned().collect();
    let rows = design_rows(&formula, &units, Some(&scheme))?;
    let observations: Vec<Observation> = units
        .iter()
        .zip(rows)
        .map(|(u, row)| Observation {
            response: (labels[&u.id] == formula.response) as u8,
            covariates: row.covariates,
            group: row.group,
        })
        .collect();
    let result = match &formula.group {
        None => fit_logistic(&observations)?,
        Some(g) => fit_logistic_random_intercept_with(
            &observations,
            &MixedOptions { quadrature_nodes: section.quadrature_nodes, group_name: g.clone(), ..MixedOptions::default() },
        )?,
    };
    output_dir(config)?;
    write_json(&config.output(FIT), &json!({ "formula": formula.to_string(), "fit": result }))?;
    println!("{formula}");
    print_fit(&result);
    Ok(())
}

fn single_variable(scheme: &CodingScheme) -> Result<String> {
    match scheme.variables.as_slice() {
        [only] => Ok(only.name.clone()),
        _ => Err(Error::Config("paths.template is needed to choose the labelled variable".into())),
    }
}

pub fn print_fit(result: &FitResult) {
    println!("  {:<16} {:>9} {:>9} {:>8} {:>10} {:>9}", "term", "estimate", "std.err", "z", "p", "odds");
    for c in &result.coefficients {
        println!(
            "  {:<16} {:>9.4} {:>9.4} {:>8.3} {:>10.3e} {:>9.4}",
            c.name,
            c.estimate,
            c.std_error,
            c.z,
            c.p_value,
            c.estimate.exp()
        );
    }
    if let Some(ri) = &result.random_intercept {
        println!(
            "  random intercept ({}): sd {:.4} over {} groups",
            ri.group, ri.std_dev, ri.n_groups
        );
    }
    println!("  log-likelihood {:.4}, n = {}", result.log_likelihood, result.n_observations);
}

pub fn report(config: &RunConfig) -> Result<()> {
    let evaluation = config.output(EVALUATION);
    let bootstrap = config.output(BOOTSTRAP);
    let manifest = config.output(MANIFEST);
    let load = |p: &Path| if p.exists() { read_json(p).map(Some) } else { Ok(None) };
    let (evaluation, bootstrap, manifest) = (load(&evaluation)?, load(&bootstrap)?, load(&manifest)?);
    if evaluation.is_none() && bootstrap.is_none() {
        return Err(Error::InvalidInput("nothing to report: run evaluate or bootstrap first".into()));
    }

    let mut summary = String::from("metric,value,sd,ci_low,ci_high\n");
    if let Some(e) = &evaluation {
        for key in ["accuracy", "kappa", "macro_f1"] {
            summary.push_str(&format!("{key},{},,,\n", e[key]));
        }
    }
    if let Some(b) = &bootstrap {
        for s in b["result"]["statistics"].as_array().into_iter().flatten() {
            summary.push_str(&format!(
                "{},{},{},{},{}\n",
                s["name"].as_str().unwrap_or_default(),
                s["point"],
                s["sd"],
                s["ci_low"],
                s["ci_high"]
            ));
        }
    }
    write_json(
        &config.output(REPORT),
        &json!({ "manifest": manifest, "evaluation": evaluation, "bootstrap": bootstrap }),
    )?;
    fs::write(config.output(SUMMARY), &summary)?;
    print!("{summary}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn statistic_specs() {
        assert_eq!("proportion(Social)".parse::<StatisticSpec>().unwrap(), StatisticSpec::Proportion("Social".into()));
        assert!(matches!(
            "yearly_proportions( Social )".parse::<StatisticSpec>().unwrap(),
            StatisticSpec::YearlyProportions(l) if l == "Social"
        ));
        assert!(matches!("logistic(positive ~ year)".parse::<StatisticSpec>().unwrap(), StatisticSpec::Logistic(_)));
        assert!(matches!(
            "mixed(positive ~ age + (1|school))".parse::<StatisticSpec>().unwrap(),
            StatisticSpec::Mixed(_)
        ));
        assert!("mixed(positive ~ age)".parse::<StatisticSpec>().is_err());
        assert!("logistic(positive ~ age + (1|school))".parse::<StatisticSpec>().is_err());
        assert!("median(x)".parse::<StatisticSpec>().is_err());
        assert!("proportion()".parse::<StatisticSpec>().is_err());
        assert!("proportion".parse::<StatisticSpec>().is_err());
    }
}
