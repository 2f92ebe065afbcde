use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hrm_core::harness::{read_structured, Config, ScenarioScript};

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn hrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrm")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn shipped_default_config_is_the_builtin_default() {
    assert_eq!(Config::load(&repo("configs/default.toml")).unwrap(), Config::default());
}

#[test]
fn shipped_canonical_script_is_the_builtin_script() {
    let shipped = ScenarioScript::load(&repo("scenarios/canonical.toml")).unwrap();
    assert_eq!(shipped, hrm_core::harness::canonical_script());
    ScenarioScript::load(&repo("scenarios/stress.toml")).unwrap();
}

#[test]
fn validate_exit_codes() {
    let ok = hrm(&["validate", "--config", repo("configs/default.toml").to_str().unwrap()]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).ends_with("validate: PASS\n"));

    let tight = hrm(&["validate", "--config", repo("configs/tight-lm.toml").to_str().unwrap()]);
    assert_eq!(tight.status.code(), Some(1));
    let text = stdout(&tight);
    assert!(text.contains("400 > 350"), "{text}");
    assert!(text.ends_with("validate: FAIL\n"));

    let missing = hrm(&["validate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_then_compare() {
    let dir = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for arch in ["hierarchical", "centralized", "decentralized"] {
        let out = dir.path().join(format!("{arch}.jsonl"));
        let o = hrm(&["run", "--arch", arch, "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        read_structured(&std::fs::read_to_string(&out).unwrap()).unwrap();
        paths.push(out);
    }
    let args: Vec<&str> = ["compare"]
        .into_iter()
        .chain(paths.iter().map(|p| p.to_str().unwrap()))
        .collect();
    let o = hrm(&args);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("\"message_saving_pct\":56"), "{text}");
    assert!(text.contains("\"message_saving_pct\":81"), "{text}");
}

#[test]
fn compare_rejects_reports_from_different_scripts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let stress = repo("scenarios/stress.toml");
    assert!(hrm(&["run", "--out", a.to_str().unwrap()]).status.success());
    assert!(hrm(&[
        "run",
        "--arch",
        "centralized",
        "--scenario",
        stress.to_str().unwrap(),
        "--out",
        b.to_str().unwrap()
    ])
    .status
    .success());
    let o = hrm(&["compare", a.to_str().unwrap(), b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not comparable"));
}

#[test]
fn csv_and_trace_outputs() {
    let csv = hrm(&["run", "--format", "csv"]);
    assert_eq!(csv.status.code(), Some(0));
    let text = stdout(&csv);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(reader.records().count(), 10);

    let trace = hrm(&["trace"]);
    assert_eq!(trace.status.code(), Some(0));
    let first = stdout(&trace).lines().next().unwrap().to_string();
    assert!(first.contains("hrm-trace"), "{first}");
}

#[test]
fn bad_script_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("bad.toml");
    std::fs::write(&script, "[[entries]]\nscenario_type = 9\n").unwrap();
    let o = hrm(&["run", "--scenario", script.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
