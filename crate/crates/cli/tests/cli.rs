use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_kolmocouple"));
    c.env_remove("KOLMOCOUPLE_THREADS");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

const OU: &str = r#"
name = "ou"
[field]
family = "ornstein_uhlenbeck"
d = 2
lambda = 1.0
sigma0 = 1.0
[certify]
criterion = "theorem1"
expect = "holds"
region = { radius = 5.0, sample_budget = 3000, multistart_count = 4 }
"#;

#[test]
fn missing_family_exits_one_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        "name = \"bad\"\n[field]\nd = 2\n[certify]\ncriterion = \"theorem1\"\n",
    );
    let o = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
    assert!(text(&o).contains("family"), "{}", text(&o));
}

#[test]
fn certify_ou_holds_on_region() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ou.toml", OU);
    let out = dir.path().join("out");
    let o = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let cert = &report["results"]["certificate"];
    assert_eq!(cert["criterion"], "theorem1_negative");
    assert_eq!(cert["verdict"], "holds_on_region");
}

#[test]
fn unexpected_violation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "pl.toml",
        r#"
name = "pl"
[field]
family = "power_law"
d = 3
alpha = 2.0
[certify]
criterion = "theorem1"
expect = "holds"
region = { radius = 3.0, sample_budget = 3000, multistart_count = 4 }
"#,
    );
    let o = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
}

#[test]
fn task_mismatch_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ou.toml", &format!("task = \"simulate\"\n{OU}"));
    let o = run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", text(&o));
}

#[test]
fn identical_runs_and_thread_counts_compare_equal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "sim.toml",
        r#"
name = "sim"
seed = 3
[field]
family = "power_law"
d = 2
alpha = 1.0
[simulate]
h = 0.01
horizon = 1.0
paths = 200
snapshots = 10
mu0 = { kind = "gaussian", mean = [1.0, 0.0], var = [0.1, 0.1] }
nu0 = { kind = "point", x = [-1.0, 0.0] }
"#,
    );
    let mut reports = Vec::new();
    for (k, threads) in ["1", "1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let o = bin()
            .args([
                "simulate",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
            ])
            .env("KOLMOCOUPLE_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        reports.push(out.join("report.json"));
        assert!(out.join("coupling_stats.csv").exists());
        assert!(out.join("coupling.svg").exists());
    }
    for other in &reports[1..] {
        let o = run(&[
            "compare",
            reports[0].to_str().unwrap(),
            other.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", text(&o));
        assert!(text(&o).contains("0 difference(s)"));
        assert_eq!(
            std::fs::read(&reports[0]).unwrap(),
            std::fs::read(other).unwrap()
        );
    }
}

#[test]
fn seed_override_changes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ou.toml", OU);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        a.to_str().unwrap()
    ])
    .status
    .success());
    assert!(run(&[
        "certify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
        "--seed",
        "9"
    ])
    .status
    .success());
    let o = run(&[
        "compare",
        a.join("report.json").to_str().unwrap(),
        b.join("report.json").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", text(&o));
    assert!(text(&o).contains("/seed"));
}

#[test]
fn mollify_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "m.toml",
        r#"
name = "m"
[field]
family = "ornstein_uhlenbeck"
d = 1
lambda = 1.0
sigma0 = 0.7071067811865476
[mollify]
measure = { kind = "gaussian", mean = [0.0], cov = [0.5] }
eps = [0.2]
psd_pairs = 500
"#,
    );
    let out = dir.path().join("out");
    let o = run(&[
        "mollify",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", text(&o));
    assert!(out.join("mollified_eps0.2.csv").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(
        report["results"]["manifest"]["source_sha256"]
            .as_str()
            .unwrap()
            .len(),
        64
    );
}
