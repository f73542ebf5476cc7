#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_annostat"));
    cmd.env_remove("SOURCE_DATE_EPOCH").env("RUST_LOG", "error");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn run_config(command: &str, config: &Path) -> Output {
    run(&[command, "--config", config.to_str().unwrap()])
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn code(output: &Output) -> i32 {
    output.status.code().unwrap_or(-1)
}

pub const SCHEME: &str = r#"version = "1"

[[variables]]
name = "topic"
kind = "categorical"
levels = [
  { label = "Politics", definition = "elections, government" },
  { label = "Social", definition = "culture, community life" },
  { label = "Sports", definition = "games and athletes" },
]
"#;

pub const TEMPLATE: &str = r#"variable = "topic"
instruction = """Classify the topic of this news item as Politics, Social or Sports. Answer with the label only.

{text}"""
"#;

pub const MOCK_RULES: &str = r#"[client]
kind = "mock"

[client.mock]
mode = "rules"
fallback = "Politics"
refuse_keywords = ["classified"]
rules = [
  { keyword = "election", label = "Politics" },
  { keyword = "match", label = "Sports" },
  { keyword = "festival", label = "Social" },
  { keyword = "parliament", label = "Politics" },
]
"#;

/// News-like rows whose Social share rises with the year. Every seventh row
/// uses wording the keyword mock gets wrong; two rows trigger a refusal.
pub fn raw_csv(n: usize) -> String {
    let mut out = String::from("id,text,year,topic\n");
    for i in 0..n {
        let year = 2000 + (i % 6);
        let r = (i * 7919 + 13) % 100;
        let topic = if r < 20 + 8 * (i % 6) {
            "Social"
        } else if r % 2 == 0 {
            "Politics"
        } else {
            "Sports"
        };
        let tricky = i % 7 == 3;
        let text = match (topic, tricky) {
            ("Politics", false) => "The election campaign dominated the evening news.",
            ("Politics", true) => "Parliament argued over the festival budget.",
            ("Sports", false) => "A tense match ended after extra time.",
            ("Sports", true) => "The stadium hosted a summer festival for fans.",
            ("Social", false) => "A music festival filled the old town square.",
            _ => "Neighbours gathered in the park to watch the match together.",
        };
        let text = if i == 5 || i == 50 { "Details of the classified report were withheld." } else { text };
        writeln!(out, "n{i:04},\"{text}\",{year},{topic}").unwrap();
    }
    out
}

pub struct Fixture {
    pub dir: tempfile::TempDir,
}

impl Fixture {
    /// Scheme, template and raw CSV in a fresh directory.
    pub fn new(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("scheme.toml"), SCHEME).unwrap();
        fs::write(dir.path().join("template.toml"), TEMPLATE).unwrap();
        fs::write(dir.path().join("raw.csv"), raw_csv(n)).unwrap();
        Self { dir }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Writes `name` with the standard paths and ingest section followed by
    /// `sections`.
    pub fn config(&self, name: &str, output_dir: &str, sections: &str) -> PathBuf {
        let text = format!(
            r#"seed = 11
timestamp = "2024-01-01T00:00:00Z"

[paths]
corpus = "corpus.jsonl"
scheme = "scheme.toml"
template = "template.toml"
output_dir = "{output_dir}"

[ingest]
input = "raw.csv"
format = "csv"

[ingest.csv]
id = "id"
text = "text"
meta = {{ year = "int" }}
gold = {{ topic = "topic" }}

{sections}"#
        );
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    pub fn standard(&self, output_dir: &str) -> PathBuf {
        self.config(
            &format!("{output_dir}.toml"),
            output_dir,
            &format!(
                "{MOCK_RULES}\n[bootstrap]\nstatistic = \"logistic(Social ~ year)\"\nn_replicates = 400\nreplicates_csv = true\n\n[fit]\nformula = \"Social ~ year\"\n"
            ),
        )
    }
}
