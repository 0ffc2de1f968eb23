//! Process-level checks on the compiled binary: exit codes and the
//! one-line JSON contract on stdout (success) and stderr (failure).

use std::fs;
use std::process::Command;

fn bwp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bwp"))
}

#[test]
fn success_prints_one_json_line_on_stdout_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    let tape = dir.path().join("tape.csv");
    fs::write(
        &cfg_path,
        format!(
            r#"{{"synth": {{"symbols": 2, "trades_per_day": 40}}, "paths": {{"tape": "{}"}}}}"#,
            tape.display()
        ),
    )
    .unwrap();

    let out = bwp()
        .args(["--config", cfg_path.to_str().unwrap(), "synth"])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 1, "expected exactly one summary line, got: {stdout}");
    let summary: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(summary["command"], "synth");
    assert_eq!(summary["trades"], 2 * 5 * 40, "symbols x default days x trades_per_day");
    assert!(tape.exists());
}

#[test]
fn failure_prints_one_json_line_on_stderr_and_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.json");
    // No tape was ever synthesized, so windows has nothing to read.
    fs::write(
        &cfg_path,
        format!(
            r#"{{"paths": {{"tape": "{0}/none.csv", "windows": "{0}/w.bwtw", "stats": "{0}/s.json"}}}}"#,
            dir.path().display()
        ),
    )
    .unwrap();

    let out = bwp()
        .args(["--config", cfg_path.to_str().unwrap(), "windows"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let last = stderr.lines().last().expect("an error line");
    let err: serde_json::Value = serde_json::from_str(last).unwrap();
    assert_eq!(err["command"], "windows");
    assert!(!err["error"].as_str().unwrap().is_empty());
}

#[test]
fn config_validation_failures_surface_through_the_binary() {
    // 15 is not a perfect square, so every subcommand refuses it.
    let out = bwp().args(["--n", "15", "synth"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let err: serde_json::Value = serde_json::from_str(stderr.lines().last().unwrap()).unwrap();
    assert!(err["error"].as_str().unwrap().contains("perfect square"));
}

#[test]
fn help_lists_every_subcommand() {
    let out = bwp().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in ["synth", "windows", "train", "tune", "explain", "regress", "report"] {
        assert!(text.contains(sub), "help is missing `{sub}`");
    }
}
