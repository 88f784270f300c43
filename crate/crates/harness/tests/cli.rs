//! End-to-end checks of the command-line interface and its exit codes.

use std::path::Path;
use std::process::Command;

fn basim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_basim"))
}

#[test]
fn run_command_emits_record_and_transcript() {
    let dir = std::env::temp_dir().join(format!("basim-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let transcript = dir.join("t.jsonl");
    let output = basim()
        .args([
            "run",
            "--protocol",
            "rba-ts",
            "--n",
            "8",
            "--f",
            "3",
            "--seed",
            "1",
            "--adversary",
            "crash:round=2",
            "--inputs",
            "unanimous:0",
            "--out",
        ])
        .arg(&transcript)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let record: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(record["protocol"], "rba-ts");
    assert_eq!(record["consistency"], true);
    let text = std::fs::read_to_string(&transcript).unwrap();
    assert!(text.lines().next().unwrap().contains("\"type\":\"header\""));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn usage_errors_exit_with_two() {
    let output = basim()
        .args(["run", "--protocol", "rba-ts", "--n", "8", "--f", "5", "--adversary", "passive"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = basim()
        .args(["run", "--protocol", "rba-ts", "--n", "8", "--f", "3", "--adversary", "bogus"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_expander_reports_json() {
    let output = basim()
        .args(["verify-expander", "--n", "12", "--epsilon", "0.25", "--seed", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let report: serde_json::Value = serde_json::from_slice(&output.stdout).unwrap();
    assert_eq!(report["n"], 12);
    assert_eq!(report["d"], 10);
    assert_eq!(report["verified"], "full");
}

#[test]
fn sweep_and_analyze_round_trip(){
    let dir = std::env::temp_dir().join(format!("basim-sweep-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let grid = dir.join("grid.toml");
    std::fs::write(
        &grid,
        r#"
version = 1

[[sweep]]
protocol = "rba-ts"
n = [8, 16, 32, 64]
f = "minority"
adversaries = ["passive"]
inputs = ["unanimous:0"]
seeds = { start = 0, count = 2 }
"#,
    )
    .unwrap();
    let records = dir.join("records.jsonl");
    let csv = dir.join("summary.csv");
    let output = basim()
        .args(["sweep", "--grid"])
        .arg(&grid)
        .args(["--records"])
        .arg(&records)
        .args(["--csv"])
        .arg(&csv)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("\"violations\":0"));
    assert!(Path::new(&csv).exists());

    // Identical sweep reproduces identical records.
    let first = std::fs::read_to_string(&records).unwrap();
    let output = basim()
        .args(["sweep", "--grid"])
        .arg(&grid)
        .args(["--records"])
        .arg(&records)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert_eq!(first, std::fs::read_to_string(&records).unwrap());

    // The analyze verdict over this series is expected to fail its first
    // doubling ratio; exit code 1 signals the failed verdict.
    let output = basim().args(["analyze", "--records"]).arg(&records).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("rba-ts under passive"));
    std::fs::remove_dir_all(&dir).ok();
}
