//! Turning units into labels with an instructable model.
//!
//! [`Annotator`] renders a [`PromptTemplate`] for every unit, sends it to a
//! [`ModelClient`] (an HTTP endpoint or [`MockModel`]), retries transport
//! failures with exponential backoff and normalizes replies onto the scheme's
//! levels. Every exchange is kept verbatim in the audit trail.

mod http;
mod mock;
mod normalize;
mod pairs;
mod template;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{approx_tokens, CodingScheme, Corpus, Unit, Variable};
use crate::{Error, Result};

pub use http::{parse_response, HttpClient, HttpClientConfig};
pub use mock::{KeywordRule, MockMode, MockModel};
pub use normalize::normalize_output;
pub use pairs::{extract_pairs, PairExtraction, PairFilters};
pub use template::{parse_numbered, PromptTemplate};

/// Normalized result for one unit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "label", rename_all = "snake_case")]
pub enum Outcome {
    Label(String),
    Refused,
    Unparseable,
}

impl Outcome {
    pub fn label(&self) -> Option<&str> {
        match self {
            Outcome::Label(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelBias {
    pub text: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingControls {
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(default)]
    pub label_bias: Vec<LabelBias>,
    #[serde(default)]
    pub stop: Vec<String>,
}

impl DecodingControls {
    /// Greedy decoding, output capped at the longest label, every label
    /// biased with weight 100.
    pub fn for_variable(variable: &Variable) -> Self {
        let longest = variable
            .levels
            .iter()
            .map(|l| approx_tokens(&l.label))
            .max()
            .unwrap_or(16)
            .max(1);
        Self {
            temperature: 0.0,
            max_output_tokens: longest as u32,
            label_bias: variable
                .levels
                .iter()
                .map(|l| LabelBias { text: l.label.clone(), weight: 100.0 })
                .collect(),
            stop: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if self.max_output_tokens == 0 {
            return Err(Error::Config("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportErrorKind {
    Timeout,
    Connection,
    RateLimited,
    Server,
    Client,
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum ModelResponse {
    Text(String),
    Refusal(String),
    TransportError { kind: TransportErrorKind, message: String },
}

/// A response plus the raw wire bodies, when the client has them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub response: ModelResponse,
    pub request_body: Option<String>,
    pub response_body: Option<String>,
}

impl From<ModelResponse> for Reply {
    fn from(response: ModelResponse) -> Self {
        Self { response, request_body: None, response_body: None }
    }
}

pub struct ModelRequest<'a> {
    pub prompt: &'a str,
    pub controls: &'a DecodingControls,
    /// Units covered by the prompt, in prompt order.
    pub units: &'a [&'a Unit],
    pub variable: &'a Variable,
}

pub trait ModelClient: Send + Sync {
    fn identifier(&self) -> String;

    /// Reject configurations that cannot work before any request is sent.
    fn check(&self, _corpus: &Corpus, _variable: &Variable) -> Result<()> {
        Ok(())
    }

    fn send(&self, request: &ModelRequest<'_>) -> Reply;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further attempt.
    pub backoff_ms: u64,
    pub batch_size: usize,
    pub max_in_flight: usize,
    /// Stop the run when a request exhausts its retries on a transport error.
    #[serde(default)]
    pub abort_on_transport_failure: bool,
}

impl Default for Policy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            backoff_ms: 500,
            batch_size: 1,
            max_in_flight: 1,
            abort_on_transport_failure: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub unit_id: String,
    pub variable: String,
    pub raw: Option<String>,
    pub outcome: Outcome,
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub unit_ids: Vec<String>,
    pub attempt: u32,
    pub prompt: String,
    pub response: ModelResponse,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_body: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_body: Option<String>,
}

/// Everything needed to re-run an annotation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub template: PromptTemplate,
    pub model: String,
    pub controls: DecodingControls,
    pub policy: Policy,
    pub seed: Option<u64>,
    pub timestamp: String,
    pub scheme_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub manifest: Manifest,
    pub records: Vec<AnnotationRecord>,
    #[serde(skip)]
    pub audit: Vec<AuditEntry>,
}

impl AnnotationSet {
    pub fn outcomes(&self) -> BTreeMap<String, Outcome> {
        self.records.iter().map(|r| (r.unit_id.clone(), r.outcome.clone())).collect()
    }

    pub fn count(&self, pred: impl Fn(&Outcome) -> bool) -> usize {
        self.records.iter().filter(|r| pred(&r.outcome)).count()
    }

    pub fn write_records<W: Write>(&self, out: W) -> Result<()> {
        write_jsonl(out, &self.records)
    }

    pub fn write_audit<W: Write>(&self, out: W) -> Result<()> {
        write_jsonl(out, &self.audit)
    }
}

pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_records(text: &str) -> Result<Vec<AnnotationRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

struct JobResult {
    records: Vec<AnnotationRecord>,
    audit: Vec<AuditEntry>,
    transport_failure: Option<String>,
}

/// Configured annotation pass over a corpus.
pub struct Annotator<'a> {
    template: &'a PromptTemplate,
    variable: &'a Variable,
    scheme: &'a CodingScheme,
    client: &'a dyn ModelClient,
    controls: DecodingControls,
    policy: Policy,
    seed: Option<u64>,
    timestamp: String,
}

impl<'a> Annotator<'a> {
    pub fn new(
        template: &'a PromptTemplate,
        scheme: &'a CodingScheme,
        client: &'a dyn ModelClient,
    ) -> Result<Self> {
        template.validate()?;
        let variable = scheme.variable(&template.variable).ok_or_else(|| {
            Error::Config(format!("template variable `{}` is not in the scheme", template.variable))
        })?;
        Ok(Self {
            template,
            variable,
            scheme,
            client,
            controls: DecodingControls::for_variable(variable),
            policy: Policy::default(),
            seed: None,
            timestamp: String::new(),
        })
    }

    pub fn controls(mut self, controls: DecodingControls) -> Self {
        self.controls = controls;
        self
    }

    pub fn policy(mut self, policy: Policy) -> Self {
        self.policy = policy;
        self
    }

    pub fn seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn timestamp(mut self, timestamp: impl Into<String>) -> Self {
        self.timestamp = timestamp.into();
        self
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            template: self.template.clone(),
            model: self.client.identifier(),
            controls: self.controls.clone(),
            policy: self.policy.clone(),
            seed: self.seed,
            timestamp: self.timestamp.clone(),
            scheme_version: self.scheme.version.clone(),
        }
    }

    pub fn run(&self, corpus: &Corpus) -> Result<AnnotationSet> {
        self.run_with_sink(corpus, &mut |_| Ok(()))
    }

    /// Like [`run`](Self::run), handing each record to `sink` in unit order as
    /// soon as it is final.
    pub fn run_with_sink(
        &self,
        corpus: &Corpus,
        sink: &mut dyn FnMut(&AnnotationRecord) -> Result<()>,
    ) -> Result<AnnotationSet> {
        self.controls.validate()?;
        if self.policy.batch_size == 0 || self.policy.max_in_flight == 0 {
            return Err(Error::Config("batch_size and max_in_flight must be >= 1".into()));
        }
        if self.policy.batch_size > 1 && !self.template.supports_batching() {
            return Err(Error::InvalidTemplate(
                "batching needs a template whose only placeholder is {text}".into(),
            ));
        }
        self.client.check(corpus, self.variable)?;
        let prompts: Vec<String> = corpus
            .units()
            .iter()
            .map(|u| self.template.render(u))
            .collect::<Result<_>>()?;

        let units: Vec<&Unit> = corpus.units().iter().collect();
        let indices: Vec<usize> = (0..units.len()).collect();
        let jobs: Vec<&[usize]> = indices.chunks(self.policy.batch_size).collect();

        let mut records = Vec::with_capacity(units.len());
        let mut audit = Vec::new();
        for window in jobs.chunks(self.policy.max_in_flight) {
            let results: Vec<JobResult> = if window.len() == 1 {
                vec![self.run_job(window[0], &units, &prompts)]
            } else {
                std::thread::scope(|scope| {
                    let handles: Vec<_> = window
                        .iter()
                        .map(|job| scope.spawn(|| self.run_job(job, &units, &prompts)))
                        .collect();
                    handles.into_iter().map(|h| h.join().expect("annotation worker panicked")).collect()
                })
            };
            let mut failure = None;
            for result in results {
                for record in &result.records {
                    sink(record)?;
                }
                records.extend(result.records);
                audit.extend(result.audit);
                if failure.is_none() {
                    failure = result.transport_failure;
                }
            }
            if let (true, Some(message)) = (self.policy.abort_on_transport_failure, failure) {
                return Err(Error::Transport(message));
            }
        }
        Ok(AnnotationSet { manifest: self.manifest(), records, audit })
    }

    fn send_with_retries(
        &self,
        prompt: &str,
        units: &[&Unit],
        controls: &DecodingControls,
        audit: &mut Vec<AuditEntry>,
    ) -> (ModelResponse, u32) {
        let request = ModelRequest { prompt, controls, units, variable: self.variable };
        let mut attempt = 0;
        loop {
            attempt += 1;
            let reply = self.client.send(&request);
            audit.push(AuditEntry {
                unit_ids: units.iter().map(|u| u.id.clone()).collect(),
                attempt,
                prompt: prompt.to_string(),
                response: reply.response.clone(),
                request_body: reply.request_body,
                response_body: reply.response_body,
            });
            match reply.response {
                ModelResponse::TransportError { .. } if attempt <= self.policy.max_retries => {
                    let delay = self.policy.backoff_ms.saturating_mul(1 << (attempt - 1).min(20));
                    if delay > 0 {
                        std::thread::sleep(Duration::from_millis(delay));
                    }
                }
                response => return (response, attempt),
            }
        }
    }

    fn record(&self, unit: &Unit, response: ModelResponse, attempts: u32) -> (AnnotationRecord, Option<String>) {
        let mut failure = None;
        let (raw, outcome, transport_error) = match response {
            ModelResponse::Text(raw) => {
                let outcome = normalize_output(&raw, self.variable);
                (Some(raw), outcome, None)
            }
            ModelResponse::Refusal(reason) => (Some(reason), Outcome::Refused, None),
            ModelResponse::TransportError { kind, message } => {
                let text = format!("{kind:?}: {message}");
                failure = Some(format!("unit `{}`: {text}", unit.id));
                (None, Outcome::Unparseable, Some(text))
            }
        };
        let record = AnnotationRecord {
            unit_id: unit.id.clone(),
            variable: self.variable.name.clone(),
            raw,
            outcome,
            attempts,
            transport_error,
        };
        (record, failure)
    }

    fn run_single(&self, unit: &Unit, prompt: &str, prior_attempts: u32, out: &mut JobResult) {
        let (response, attempts) = self.send_with_retries(prompt, &[unit], &self.controls, &mut out.audit);
        let (record, failure) = self.record(unit, response, prior_attempts + attempts);
        out.records.push(record);
        if out.transport_failure.is_none() {
            out.transport_failure = failure;
        }
    }

    fn run_job(&self, job: &[usize], units: &[&Unit], prompts: &[String]) -> JobResult {
        let mut out = JobResult { records: Vec::new(), audit: Vec::new(), transport_failure: None };
        if let [single] = job {
            self.run_single(units[*single], &prompts[*single], 0, &mut out);
            return out;
        }
        let members: Vec<&Unit> = job.iter().map(|&i| units[i]).collect();
        let prompt = match self.template.render_batch(&members) {
            Ok(p) => p,
            Err(_) => {
                for &i in job {
                    self.run_single(units[i], &prompts[i], 0, &mut out);
                }
                return out;
            }
        };
        let mut controls = self.controls.clone();
        controls.max_output_tokens = controls
            .max_output_tokens
            .saturating_add(2)
            .saturating_mul(members.len() as u32);
        let (response, attempts) = self.send_with_retries(&prompt, &members, &controls, &mut out.audit);
        match response {
            ModelResponse::Text(raw) => {
                if let Some(answers) = parse_numbered(&raw, members.len()) {
                    for (unit, answer) in members.iter().zip(answers) {
                        let (record, _) = self.record(unit, ModelResponse::Text(answer), attempts);
                        out.records.push(record);
                    }
                    return out;
                }
                log::warn!("batch reply did not match {} numbered items; retrying singly", members.len());
            }
            ModelResponse::Refusal(_) => {}
            transport @ ModelResponse::TransportError { .. } => {
                for unit in &members {
                    let (record, failure) = self.record(unit, transport.clone(), attempts);
                    out.records.push(record);
                    if out.transport_failure.is_none() {
                        out.transport_failure = failure;
                    }
                }
                return out;
            }
        }
        for &i in job {
            self.run_single(units[i], &prompts[i], attempts, &mut out);
        }
        out
    }
}

/// Annotate with default decoding controls.
pub fn annotate(
    corpus: &Corpus,
    template: &PromptTemplate,
    client: &dyn ModelClient,
    scheme: &CodingScheme,
    policy: &Policy,
) -> Result<AnnotationSet> {
    Annotator::new(template, scheme, client)?.policy(policy.clone()).run(corpus)
}
