use std::path::Path;
use std::process::Command;

use ris_d2d::experiment::{read_csv, ExperimentSpec};

const SPEC: &str = r#"
name = "tiny"
seed = 3
curves = ["active:pcpso", "passive:random_phase", "absent:pcpso"]

[sweep]
variable = "total_power_dbm"
values = [20, 30]

[scenario]
k = 2
n_elements = 4

[mc]
trials = 200

[ga]
population = 10
parents = 6
mutants = 2
max_iters = 5
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ris-d2d"))
}

fn run(spec: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    let out = bin()
        .arg("run")
        .arg(spec)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

#[test]
fn list_builtins() {
    let out = bin().arg("list-builtins").output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().split_whitespace().collect::<Vec<_>>(), [
        "fig2", "fig3", "fig4"
    ]);
}

#[test]
fn validate_reports_bad_keys() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.toml");
    std::fs::write(&good, SPEC).unwrap();
    let out = bin().arg("validate").arg(&good).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[scenario]\nkk = 3\n").unwrap();
    let out = bin().arg("validate").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario.kk"));

    let out = bin().args(["run", "fig7"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("builtins: fig2, fig3, fig4"));
}

#[test]
fn run_is_byte_reproducible_across_worker_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tiny.toml");
    std::fs::write(&spec, SPEC).unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    run(&spec, &a, &["--workers", "1"]);
    run(&spec, &b, &["--workers", "4"]);
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());

    let (_, rows) = read_csv(text.as_slice()).unwrap();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0].curve, "active:pcpso");
    assert!(rows.iter().all(|r| r.sum_rate_mc.is_some() && r.per_user.len() == 2));

    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("a.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["spec"]["seed"], 3);
}

#[test]
fn flags_override_the_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tiny.toml");
    std::fs::write(&spec, SPEC).unwrap();
    let out = dir.path().join("o.csv");
    run(&spec, &out, &["--trials", "0", "--seed", "9", "--set", "sweep.values=[25]"]);
    let (_, rows) = read_csv(std::fs::read(&out).unwrap().as_slice()).unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.sum_rate_mc.is_none() && r.sweep_value == 25.0));

    let parsed = ExperimentSpec::from_file(&spec).unwrap();
    assert_eq!(parsed.seed, 3);
}
