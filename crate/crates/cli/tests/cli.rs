mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::thread;

use common::*;
use serde_json::Value;

fn json(path: &std::path::Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn pipeline(fx: &Fixture, config: &std::path::Path) {
    for command in ["ingest", "annotate", "evaluate", "bootstrap", "fit", "report"] {
        let out = run_config(command, config);
        assert_eq!(code(&out), 0, "{command}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(fx.path("out/annotations.jsonl").exists());
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let fx = Fixture::new(240);
    let config = fx.standard("out");
    pipeline(&fx, &config);
    for name in [
        "annotations.jsonl",
        "audit.jsonl",
        "manifest.json",
        "confusion.csv",
        "evaluation.json",
        "bootstrap.json",
        "replicates.csv",
        "fit.json",
        "report.json",
        "summary.csv",
    ] {
        assert!(fx.path("out").join(name).exists(), "{name} missing");
    }
    assert!(!fx.path("out/annotations.jsonl.partial").exists());

    let eval = json(&fx.path("out/evaluation.json"));
    assert_eq!(eval["n_errors"], 2);
    let kappa = eval["kappa"].as_f64().unwrap();
    assert!(kappa > 0.5 && kappa < 1.0, "{kappa}");

    let boot = json(&fx.path("out/bootstrap.json"));
    assert_eq!(boot["excluded_units"], 2);
    let stats = boot["result"]["statistics"].as_array().unwrap();
    let names: Vec<&str> = stats.iter().map(|s| s["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["beta_(Intercept)", "p_(Intercept)", "beta_year", "p_year"]);
    assert!(stats[2]["sd"].as_f64().unwrap() > 0.0);

    let manifest = json(&fx.path("out/manifest.json"));
    assert_eq!(manifest["annotation"]["timestamp"], "2024-01-01T00:00:00Z");
    assert!(manifest["annotation"]["model"].as_str().unwrap().starts_with("mock"));
    assert_eq!(manifest["config"]["seed"], 11);

    let summary = fs::read_to_string(fx.path("out/summary.csv")).unwrap();
    assert!(summary.starts_with("metric,value,sd,ci_low,ci_high\naccuracy,"));
    assert!(summary.contains("\nbeta_year,"));
}

#[test]
fn inputs_are_not_modified() {
    let fx = Fixture::new(60);
    let config = fx.standard("out");
    let raw = fs::read(fx.path("raw.csv")).unwrap();
    assert_eq!(code(&run_config("ingest", &config)), 0);
    let corpus = fs::read(fx.path("corpus.jsonl")).unwrap();
    pipeline(&fx, &config);
    assert_eq!(fs::read(fx.path("raw.csv")).unwrap(), raw);
    assert_eq!(fs::read(fx.path("corpus.jsonl")).unwrap(), corpus);
}

#[test]
fn batching_does_not_change_labels() {
    let fx = Fixture::new(90);
    let single = fx.standard("single");
    let batched_rules = MOCK_RULES.replace("kind = \"mock\"", "kind = \"mock\"\nbatch_size = 4\nmax_in_flight = 3");
    let batched = fx.config("batched.toml", "batched", &batched_rules);
    for config in [&single, &batched] {
        assert_eq!(code(&run_config("ingest", config)), 0);
        assert_eq!(code(&run_config("annotate", config)), 0);
    }
    let outcomes = |dir: &str| -> Vec<(String, Value)> {
        fs::read_to_string(fx.path(dir).join("annotations.jsonl"))
            .unwrap()
            .lines()
            .map(|l| {
                let v: Value = serde_json::from_str(l).unwrap();
                (v["unit_id"].as_str().unwrap().to_string(), v["outcome"].clone())
            })
            .collect()
    };
    assert_eq!(outcomes("single"), outcomes("batched"));
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let fx = Fixture::new(10);
    let config = fx.config("bad.toml", "out", "[client]\nkind = \"mock\"\nflavour = 1\n");
    assert_eq!(code(&run_config("annotate", &config)), 2);
    assert_eq!(code(&run(&["annotate", "--config", "/nonexistent/run.toml"])), 2);
}

#[test]
fn missing_auth_variable_fails_at_startup() {
    let fx = Fixture::new(10);
    let config = fx.config(
        "http.toml",
        "out",
        "[client]\nkind = \"http\"\n[client.http]\nbase_url = \"http://127.0.0.1:9\"\nmodel = \"m\"\nauth_env = \"ANNOSTAT_TEST_UNSET_TOKEN\"\n",
    );
    assert_eq!(code(&run_config("ingest", &config)), 0);
    let out = bin()
        .args(["annotate", "--config", config.to_str().unwrap()])
        .env_remove("ANNOSTAT_TEST_UNSET_TOKEN")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("ANNOSTAT_TEST_UNSET_TOKEN"));
}

/// Answers the first `ok` requests with a label, then returns 503 forever.
fn flaky_server(ok: usize) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    thread::spawn(move || {
        for (served, stream) in listener.incoming().enumerate() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut length = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap_or(0);
                }
            }
            let mut body = vec![0; length];
            let _ = reader.read_exact(&mut body);
            let (status, payload) = if served < ok {
                ("200 OK", r#"{"choices":[{"message":{"role":"assistant","content":"Social"},"finish_reason":"stop"}]}"#)
            } else {
                ("503 Service Unavailable", r#"{"error":"overloaded"}"#)
            };
            let _ = write!(
                stream,
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{payload}",
                payload.len()
            );
        }
    });
    format!("http://{addr}/v1")
}

#[test]
fn transport_failure_keeps_partial_file() {
    let fx = Fixture::new(10);
    let url = flaky_server(3);
    let config = fx.config(
        "http.toml",
        "out",
        &format!(
            "[client]\nkind = \"http\"\nmax_retries = 1\nbackoff_ms = 0\n[client.http]\nbase_url = \"{url}\"\nmodel = \"test-model\"\nauth_env = \"ANNOSTAT_TEST_TOKEN\"\n"
        ),
    );
    assert_eq!(code(&run_config("ingest", &config)), 0);
    let out = bin()
        .args(["annotate", "--config", config.to_str().unwrap()])
        .env("ANNOSTAT_TEST_TOKEN", "secret")
        .output()
        .unwrap();
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    let partial = fs::read_to_string(fx.path("out/annotations.jsonl.partial")).unwrap();
    let lines: Vec<&str> = partial.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[..3].iter().all(|l| l.contains("\"Social\"")));
    assert!(lines[3].contains("unparseable") && lines[3].contains("transport_error"));
    assert!(!fx.path("out/annotations.jsonl").exists());
}

#[test]
fn http_client_labels_whole_corpus() {
    let fx = Fixture::new(6);
    let url = flaky_server(100);
    let config = fx.config(
        "http.toml",
        "out",
        &format!(
            "[client]\nkind = \"http\"\nbackoff_ms = 0\n[client.http]\nbase_url = \"{url}\"\nmodel = \"test-model\"\nauth_env = \"ANNOSTAT_TEST_TOKEN\"\n"
        ),
    );
    assert_eq!(code(&run_config("ingest", &config)), 0);
    let out = bin()
        .args(["annotate", "--config", config.to_str().unwrap()])
        .env("ANNOSTAT_TEST_TOKEN", "secret")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let audit = fs::read_to_string(fx.path("out/audit.jsonl")).unwrap();
    assert_eq!(audit.lines().count(), 6);
    assert!(audit.contains("test-model"));
}

/// Two-label corpus whose keyword mock yields [[40,10],[5,45]].
fn kappa_fixture() -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let mut corpus = String::new();
    let mut i = 0;
    for (gold, word, n) in [("A", "alpha", 40), ("A", "beta", 10), ("B", "alpha", 5), ("B", "beta", 45)] {
        for _ in 0..n {
            i += 1;
            corpus.push_str(&format!(
                "{{\"id\":\"k{i:03}\",\"text\":\"item {word}\",\"gold\":{{\"label\":\"{gold}\"}}}}\n"
            ));
        }
    }
    fs::write(dir.path().join("corpus.jsonl"), corpus).unwrap();
    fs::write(
        dir.path().join("scheme.toml"),
        "version = \"1\"\n[[variables]]\nname = \"label\"\nkind = \"categorical\"\nlevels = [{ label = \"A\" }, { label = \"B\" }]\n",
    )
    .unwrap();
    fs::write(dir.path().join("template.toml"), "variable = \"label\"\ninstruction = \"A or B? {text}\"\n").unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        r#"timestamp = "2024-01-01T00:00:00Z"
[paths]
corpus = "corpus.jsonl"
scheme = "scheme.toml"
template = "template.toml"
output_dir = "out"

[client]
kind = "mock"
[client.mock]
mode = "rules"
rules = [{ keyword = "alpha", label = "A" }, { keyword = "beta", label = "B" }]

[bootstrap]
statistic = "proportion(A)"
n_replicates = 1000
confusion = "identity.csv"
"#,
    )
    .unwrap();
    fs::write(dir.path().join("identity.csv"), "gold\\predicted,A,B\nA,7,0\nB,0,3\n").unwrap();
    (dir, config)
}

#[test]
fn evaluate_reproduces_known_kappa() {
    let (dir, config) = kappa_fixture();
    assert_eq!(code(&run_config("annotate", &config)), 0);
    let out = run_config("evaluate", &config);
    assert_eq!(code(&out), 0);
    let eval = json(&dir.path().join("out/evaluation.json"));
    assert!((eval["kappa"].as_f64().unwrap() - 0.7).abs() < 1e-9);
    assert!((eval["accuracy"].as_f64().unwrap() - 0.85).abs() < 1e-12);
    assert_eq!(
        fs::read_to_string(dir.path().join("out/confusion.csv")).unwrap(),
        "gold\\predicted,A,B\nA,40,10\nB,5,45\n"
    );
    assert!(stdout(&out).contains("kappa=0.7000"));
}

#[test]
fn identity_confusion_gives_zero_width_interval() {
    let (dir, config) = kappa_fixture();
    assert_eq!(code(&run_config("annotate", &config)), 0);
    assert_eq!(code(&run_config("bootstrap", &config)), 0);
    let boot = json(&dir.path().join("out/bootstrap.json"));
    let s = &boot["result"]["statistics"][0];
    assert_eq!(s["sd"].as_f64().unwrap(), 0.0);
    assert_eq!(s["ci_low"], s["point"]);
    assert_eq!(s["ci_high"], s["point"]);
    assert_eq!(s["point"].as_f64().unwrap(), 0.45);
}

#[test]
fn disjoint_gold_is_a_data_error() {
    let (dir, config) = kappa_fixture();
    assert_eq!(code(&run_config("annotate", &config)), 0);
    fs::write(
        dir.path().join("other.jsonl"),
        "{\"id\":\"zzz\",\"text\":\"t\",\"gold\":{\"label\":\"A\"}}\n",
    )
    .unwrap();
    let text = fs::read_to_string(&config).unwrap().replace(
        "template = \"template.toml\"",
        "template = \"template.toml\"\ngold = \"other.jsonl\"",
    );
    fs::write(&config, text).unwrap();
    assert_eq!(code(&run_config("evaluate", &config)), 3);
}

#[test]
fn unknown_covariate_fails_before_replicates() {
    let fx = Fixture::new(60);
    let config = fx.config(
        "run.toml",
        "out",
        &format!("{MOCK_RULES}\n[bootstrap]\nstatistic = \"logistic(Social ~ decade)\"\nn_replicates = 100\n"),
    );
    for command in ["ingest", "annotate", "evaluate"] {
        assert_eq!(code(&run_config(command, &config)), 0);
    }
    let out = run_config("bootstrap", &config);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("decade"));
    assert!(!fx.path("out/bootstrap.json").exists());
}

fn noisy_confusion(eps: f64) -> String {
    let labels = ["Politics", "Social", "Sports"];
    let mut out = String::from("gold\\predicted,Politics,Social,Sports\n");
    for (i, l) in labels.iter().enumerate() {
        let row: Vec<String> = (0..3)
            .map(|j| {
                let v = if i == j { 1000.0 * (1.0 - eps) } else { 500.0 * eps };
                (v.round() as u64).to_string()
            })
            .collect();
        out.push_str(&format!("{l},{}\n", row.join(",")));
    }
    out
}

#[test]
fn regression_interval_widens_with_noise() {
    let fx = Fixture::new(240);
    let mut sds = Vec::new();
    for (k, eps) in [0.0, 0.1, 0.25].iter().enumerate() {
        fs::write(fx.path(&format!("cm{k}.csv")), noisy_confusion(*eps)).unwrap();
        let config = fx.config(
            &format!("run{k}.toml"),
            &format!("out{k}"),
            &format!(
                "{MOCK_RULES}\n[bootstrap]\nstatistic = \"logistic(Social ~ year)\"\nn_replicates = 300\nconfusion = \"cm{k}.csv\"\n"
            ),
        );
        for command in ["ingest", "annotate", "bootstrap"] {
            let out = run_config(command, &config);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        }
        let boot = json(&fx.path(&format!("out{k}/bootstrap.json")));
        let beta = boot["result"]["statistics"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["name"] == "beta_year")
            .unwrap()
            .clone();
        sds.push(beta["sd"].as_f64().unwrap());
    }
    assert_eq!(sds[0], 0.0);
    assert!(sds[0] < sds[1] && sds[1] < sds[2], "{sds:?}");
}

#[test]
fn yearly_proportions_statistic() {
    let fx = Fixture::new(120);
    let config = fx.config(
        "run.toml",
        "out",
        &format!("{MOCK_RULES}\n[bootstrap]\nstatistic = \"yearly_proportions(Social)\"\nn_replicates = 200\n"),
    );
    for command in ["ingest", "annotate", "evaluate", "bootstrap"] {
        assert_eq!(code(&run_config(command, &config)), 0);
    }
    let boot = json(&fx.path("out/bootstrap.json"));
    let names: Vec<&str> = boot["result"]["statistics"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names.len(), 6);
    assert_eq!(names[0], "prop_Social_2000");
}

#[test]
fn mixed_fit_through_config() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    let out = run(&["demo", "simpson", "--seed", "2", "--out", corpus.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    fs::write(
        dir.path().join("scheme.toml"),
        "version = \"1\"\n[[variables]]\nname = \"sentiment\"\nkind = \"categorical\"\nlevels = [{ label = \"negative\" }, { label = \"positive\" }]\n",
    )
    .unwrap();
    let config = dir.path().join("run.toml");
    fs::write(
        &config,
        "[paths]\ncorpus = \"corpus.jsonl\"\nscheme = \"scheme.toml\"\noutput_dir = \"out\"\n[fit]\nformula = \"positive ~ age + (1|school)\"\nlabels = \"gold\"\n",
    )
    .unwrap();
    let out = run_config("fit", &config);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let fit = json(&dir.path().join("out/fit.json"));
    assert_eq!(fit["fit"]["random_intercept"]["n_groups"], 3);
    let age = fit["fit"]["coefficients"].as_array().unwrap().iter().find(|c| c["name"] == "age").unwrap().clone();
    assert!(age["p_value"].as_f64().unwrap() > 0.05);
}

#[test]
fn demos_print_verdicts() {
    let out = run(&["demo", "simpson"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("verdict: the age effect disappears"));
    let out = run(&["demo", "confound", "--seed", "4"]);
    assert!(stdout(&out).contains("verdict: the campus effect vanishes"));
    let out = run(&["demo", "interview"]);
    assert!(stdout(&out).contains("0.1464 times"));
}

#[test]
fn report_needs_inputs() {
    let fx = Fixture::new(10);
    let config = fx.standard("out");
    assert_eq!(code(&run_config("report", &config)), 3);
}
