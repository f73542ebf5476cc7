use std::path::{Path, PathBuf};

use annostat::agreement::FailureMapping;
use annostat::annotator::{DecodingControls, HttpClientConfig, MockModel, Policy};
use annostat::bootstrap::{BootstrapConfig, CiMethod, SamplingMode};
use annostat::corpus::{CsvMapping, InputFormat, Strategy};
use annostat::{Error, Result};
use serde::{Deserialize, Serialize};

/// Declarative run description. Paths are relative to the config file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// Recorded in manifests; falls back to SOURCE_DATE_EPOCH, then the clock.
    #[serde(default)]
    pub timestamp: Option<String>,
    pub paths: Paths,
    #[serde(default)]
    pub ingest: Option<IngestSection>,
    #[serde(default)]
    pub client: Option<ClientSection>,
    #[serde(default)]
    pub decoding: Option<DecodingControls>,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub bootstrap: Option<BootstrapSection>,
    #[serde(default)]
    pub fit: Option<FitSection>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Corpus JSONL; written by `ingest`, read by everything else.
    pub corpus: PathBuf,
    pub scheme: PathBuf,
    #[serde(default)]
    pub template: Option<PathBuf>,
    /// Corpus JSONL holding gold labels; defaults to `corpus`.
    #[serde(default)]
    pub gold: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSection {
    pub input: PathBuf,
    pub format: InputFormat,
    #[serde(default)]
    pub csv: Option<CsvMapping>,
    #[serde(default)]
    pub unitize: Option<Strategy>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Mock,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSection {
    pub kind: ClientKind,
    #[serde(default)]
    pub mock: Option<MockModel>,
    #[serde(default)]
    pub http: Option<HttpClientConfig>,
    #[serde(default = "one")]
    pub batch_size: usize,
    #[serde(default = "one")]
    pub max_in_flight: usize,
    #[serde(default = "three")]
    pub max_retries: u32,
    #[serde(default = "backoff")]
    pub backoff_ms: u64,
    #[serde(default = "yes")]
    pub abort_on_transport_failure: bool,
}

impl ClientSection {
    pub fn policy(&self) -> Policy {
        Policy {
            max_retries: self.max_retries,
            backoff_ms: self.backoff_ms,
            batch_size: self.batch_size,
            max_in_flight: self.max_in_flight,
            abort_on_transport_failure: self.abort_on_transport_failure,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default)]
    pub failure_mapping: FailureMapping,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    /// `proportion(label)`, `yearly_proportions(label)`, `logistic(formula)`
    /// or `mixed(formula)`.
    pub statistic: String,
    #[serde(default = "replicates")]
    pub n_replicates: usize,
    /// Defaults to the top-level seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub ci_method: CiMethod,
    #[serde(default = "level")]
    pub level: f64,
    #[serde(default)]
    pub mode: SamplingMode,
    /// Confusion matrix CSV; defaults to the one written by `evaluate`.
    #[serde(default)]
    pub confusion: Option<PathBuf>,
    #[serde(default)]
    pub replicates_csv: bool,
}

impl BootstrapSection {
    pub fn config(&self, default_seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            n_replicates: self.n_replicates,
            seed: self.seed.unwrap_or(default_seed),
            ci_method: self.ci_method,
            level: self.level,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    #[default]
    Annotations,
    Gold,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub formula: String,
    #[serde(default)]
    pub labels: LabelSource,
    #[serde(default = "nodes")]
    pub quadrature_nodes: usize,
}

fn one() -> usize {
    1
}
fn three() -> u32 {
    3
}
fn backoff() -> u64 {
    500
}
fn yes() -> bool {
    true
}
fn replicates() -> usize {
    10_000
}
fn level() -> f64 {
    0.95
}
fn nodes() -> usize {
    15
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base_dir.join(path)
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.resolve(&self.paths.output_dir).join(name)
    }

    pub fn template_path(&self) -> Result<PathBuf> {
        self.paths
            .template
            .as_ref()
            .map(|p| self.resolve(p))
            .ok_or_else(|| Error::Config("paths.template is required".into()))
    }

    pub fn timestamp(&self) -> String {
        if let Some(t) = &self.timestamp {
            return t.clone();
        }
        let epoch = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|s| s.parse::<i64>().ok());
        let time = epoch
            .and_then(|s| chrono::DateTime::from_timestamp(s, 0))
            .unwrap_or_else(chrono::Utc::now);
        time.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> std::result::Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    const MINIMAL: &str = r#"
[paths]
corpus = "c.jsonl"
scheme = "s.toml"
output_dir = "out"
"#;

    #[test]
    fn minimal_config() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.seed, 0);
        assert!(c.client.is_none());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(&format!("colour = 1\n{MINIMAL}")).is_err());
        assert!(parse(&format!("{MINIMAL}typo = 1\n")).is_err());
    }

    #[test]
    fn client_defaults() {
        let c = parse(&format!(
            "{MINIMAL}\n[client]\nkind = \"mock\"\n[client.mock]\nmode = \"rules\"\nrules = []\n"
        ))
        .unwrap();
        let client = c.client.unwrap();
        let policy = client.policy();
        assert_eq!((policy.batch_size, policy.max_in_flight, policy.max_retries), (1, 1, 3));
        assert!(policy.abort_on_transport_failure);
    }

    #[test]
    fn paths_resolve_against_config_dir() {
        let mut c = parse(MINIMAL).unwrap();
        c.base_dir = PathBuf::from("/runs/a");
        assert_eq!(c.output("x.json"), PathBuf::from("/runs/a/out/x.json"));
    }

    #[test]
    fn explicit_timestamp_wins() {
        let c = parse(&format!("timestamp = \"2020-01-01T00:00:00Z\"\n{MINIMAL}")).unwrap();
        assert_eq!(c.timestamp(), "2020-01-01T00:00:00Z");
    }
}
