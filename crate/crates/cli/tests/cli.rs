use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_degen-control"))
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn write_cfg(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("case.cfg");
    fs::write(&path, body).unwrap();
    path
}

fn last_stderr_line(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr)
        .lines()
        .last()
        .unwrap_or_default()
        .to_string()
}

fn digests(dir: &Path) -> BTreeMap<String, String> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let hex: String = Sha256::digest(fs::read(&p).unwrap())
                .iter()
                .map(|b| format!("{b:02x}"))
                .collect();
            (p.file_name().unwrap().to_string_lossy().into_owned(), hex)
        })
        .collect()
}

fn read_table(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn validate_reports_classification() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "command = validate\na.kind = power\na.alpha = 0.5\n",
    );
    let out = run(&cfg, &tmp.path().join("out"), &[]);
    assert!(out.status.success());
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert!(
        summary.lines().any(|l| l == "classification: WDP, K=0.5"),
        "{summary}"
    );
    assert!(tmp.path().join("out/validation.csv").exists());
}

#[test]
fn hypothesis_violation_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "command = validate\na.kind = power\na.alpha = 2.0\n",
    );
    let out = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(last_stderr_line(&out).starts_with("ERROR HypothesisViolated: "));
}

#[test]
fn missing_key_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "command = validate\na.kind = power\n");
    let out = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(
        last_stderr_line(&out),
        "ERROR ConfigError: missing required key 'a.alpha'"
    );
}

#[test]
fn unknown_and_mistyped_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "command = validate\nbogus = 1\n");
    let out = run(&cfg, &tmp.path().join("a"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(last_stderr_line(&out).contains("'bogus'"));

    let cfg = write_cfg(
        tmp.path(),
        "command = solve\na.kind = constant\na.value = 1\ngrid.N = many\n",
    );
    let out = run(&cfg, &tmp.path().join("b"), &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(last_stderr_line(&out).contains("grid.N"));
}

#[test]
fn solver_failure_exits_with_code_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "command = control\na.kind = constant\na.value = 1\ncg.max_iters = 1\n",
    );
    let out = run(&cfg, &tmp.path().join("out"), &[]);
    assert_eq!(out.status.code(), Some(3));
    assert!(last_stderr_line(&out).starts_with("ERROR NoConvergence: "));
    let summary = fs::read_to_string(tmp.path().join("out/summary.txt")).unwrap();
    assert!(summary.contains("error: ERROR NoConvergence"));
}

#[test]
fn missing_config_argument_is_a_usage_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_degen-control"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(last_stderr_line(&out).starts_with("ERROR UsageError"));
}

#[test]
fn zero_datum_needs_no_control() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        tmp.path(),
        "command = control\na.kind = power\na.alpha = 0.5\ny0.kind = zero\n",
    );
    let out = run(&cfg, &tmp.path().join("out"), &[]);
    assert!(out.status.success());
    let rows = read_table(&tmp.path().join("out/control.csv"));
    assert!(!rows.is_empty());
    for row in rows {
        let h: f64 = row.last().unwrap().parse().unwrap();
        assert_eq!(h, 0.0);
    }
}

#[test]
fn seed_override_changes_noise_runs_only_through_the_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/two_phase_noise.cfg");
    let a = run(&cfg, &tmp.path().join("a"), &["--seed", "1"]);
    let b = run(&cfg, &tmp.path().join("b"), &["--seed", "1"]);
    let c = run(&cfg, &tmp.path().join("c"), &["--seed", "2"]);
    assert!(a.status.success() && b.status.success() && c.status.success());
    assert_eq!(
        digests(&tmp.path().join("a")),
        digests(&tmp.path().join("b"))
    );
    assert_ne!(
        digests(&tmp.path().join("a")),
        digests(&tmp.path().join("c"))
    );
}

/// Compares output digests of the golden configs with the recorded ones.
/// Set `DEGEN_BLESS=1` to rewrite the recorded digests.
#[test]
fn golden_corpus() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var("DEGEN_BLESS").is_ok_and(|v| v == "1");
    let tmp = tempfile::tempdir().unwrap();
    let mut cfgs: Vec<PathBuf> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "cfg"))
        .collect();
    cfgs.sort();
    assert!(!cfgs.is_empty());
    for cfg in cfgs {
        let stem = cfg.file_stem().unwrap().to_string_lossy().into_owned();
        let out_dir = tmp.path().join(&stem);
        assert!(run(&cfg, &out_dir, &[]).status.success(), "{stem} failed");
        let actual: String = digests(&out_dir)
            .into_iter()
            .map(|(name, hex)| format!("{hex}  {name}\n"))
            .collect();
        let record = dir.join(format!("{stem}.sha256"));
        if bless {
            fs::write(&record, &actual).unwrap();
        } else {
            let expected = fs::read_to_string(&record).unwrap();
            assert_eq!(actual, expected, "golden digests differ for {stem}");
        }
    }
}
