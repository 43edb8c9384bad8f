use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"{
  "problem": {"family": "sin2pl", "m": 4, "d": 2, "p": 2, "noise_sigma": 0.5, "seed": 3},
  "topology": {"graph": {"family": "ring"}},
  "algorithm": {"gamma": 0.5, "lambda": 0.4, "seed": 11},
  "run": {"horizon": 100, "init": {"x0": [1.5, -1.0]}, "certificate_samples": 50}
}"#;

fn dmgda(args: &[&str], dir: &Path, env_threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_dmgda"));
    cmd.args(args).current_dir(dir).env_remove("DMGDA_THREADS");
    if let Some(t) = env_threads {
        cmd.env("DMGDA_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn run_and_verify_succeed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONFIG);
    let out = dmgda(&["run", &cfg, "--out", "a"], dir.path(), None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("a/metrics.csv").exists());
    let out = dmgda(&["verify", &cfg, "--out", "v"], dir.path(), None);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("PASS"));
}

#[test]
fn verify_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace(
        r#""certificate_samples": 50"#,
        r#""certificate_samples": 50, "perturb_tracking": {"t": 5, "node": 1, "magnitude": 0.01}"#,
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = dmgda(&["verify", &cfg, "--out", "v"], dir.path(), None);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn bad_config_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", &CONFIG.replace(r#""seed": 11"#, r#""seed": 11, "gama": 1"#));
    let out = dmgda(&["run", &cfg], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("algorithm"), "{err}");
    assert!(err.contains("gama"), "{err}");

    let out = dmgda(&["run", "missing.json"], dir.path(), None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG
        .replace(r#""family": "sin2pl", "m": 4, "d": 2, "p": 2"#, r#""family": "plquadratic", "m": 4, "d": 2, "p": 3"#)
        .replace(
            r#""gamma": 0.5"#,
            r#""gamma": 1000.0, "schedule": {"mode": "constant", "eta": 1.0, "alpha": 1.0, "beta": 1.0}"#,
        )
        .replace(r#""horizon": 100"#, r#""horizon": 5000"#);
    let cfg = write_config(dir.path(), "c.json", &text);
    let out = dmgda(&["run", &cfg, "--out", "d"], dir.path(), None);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("d/metrics.csv").exists());
    assert!(dir.path().join("d/summary.json").exists());
}

#[test]
fn thread_flag_and_env_agree() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", CONFIG);
    assert_eq!(dmgda(&["run", &cfg, "--out", "flag", "--threads", "3"], dir.path(), None).status.code(), Some(0));
    assert_eq!(dmgda(&["run", &cfg, "--out", "env"], dir.path(), Some("3")).status.code(), Some(0));
    assert_eq!(dmgda(&["run", &cfg, "--out", "one"], dir.path(), None).status.code(), Some(0));
    let a = fs::read(dir.path().join("flag/metrics.csv")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("env/metrics.csv")).unwrap());
    assert_eq!(a, fs::read(dir.path().join("one/metrics.csv")).unwrap());
    assert_eq!(summary_threads(&dir.path().join("env/summary.json")), 3);
}

fn summary_threads(path: &Path) -> u64 {
    let text = fs::read_to_string(path).unwrap();
    let line = text.lines().find(|l| l.trim_start().starts_with("\"threads\"")).unwrap();
    line.chars().filter(char::is_ascii_digit).collect::<String>().parse().unwrap()
}
