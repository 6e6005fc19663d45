//! End-to-end checks of the `bdsde` binary: flag handling, kind gating,
//! output routing, and exit codes, each through a real process spawn.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bdsde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bdsde"))
        .args(args)
        .output()
        .expect("the binary must spawn")
}

fn stdout(output: &Output) -> String {
    String::from_utf8(output.stdout.clone()).expect("stdout must be UTF-8")
}

fn stderr(output: &Output) -> String {
    String::from_utf8(output.stderr.clone()).expect("stderr must be UTF-8")
}

/// Writes a config under a test-unique name and returns its path.
fn write_cfg(name: &str, text: &str) -> PathBuf {
    let path = std::env::temp_dir().join(format!("bdsde-cli-{name}.cfg"));
    std::fs::write(&path, text).expect("temp config must write");
    path
}

const U_CFG: &str = "kind = u-estimate\nterminal = square\nx0 = 0.0\n\
                     n_steps = 4\nn_inner = 400\nn_outer = 2\nseed = 11\n";

#[test]
fn simulate_prints_records_to_stdout() {
    let cfg = write_cfg("simulate", U_CFG);
    let output = bdsde(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], bdsde::CSV_HEADER);
    // Two outer rows plus the outer-mean row.
    assert_eq!(lines.len(), 4);
    assert!(lines[3].contains("outer-mean"));
}

#[test]
fn subcommands_reject_foreign_kinds() {
    let cfg = write_cfg("gating", U_CFG);
    let output = bdsde(&["estimate", "--config", cfg.to_str().unwrap()]);
    assert!(!output.status.success());
    let message = stderr(&output);
    assert!(
        message.contains("belongs to the `simulate` subcommand"),
        "unhelpful gating message: {message}"
    );
}

#[test]
fn the_seed_flag_overrides_the_config() {
    let cfg = write_cfg("seed", U_CFG);
    let path = cfg.to_str().unwrap();
    let base = bdsde(&["simulate", "--config", path]);
    let reseeded = bdsde(&["simulate", "--config", path, "--seed", "99"]);
    let repeat = bdsde(&["simulate", "--config", path, "--seed", "99"]);
    assert!(base.status.success() && reseeded.status.success());

    // Strip the trailing wall-clock column before comparing.
    let timing_free = |output: &Output| -> Vec<String> {
        stdout(output)
            .lines()
            .skip(1)
            .map(|line| line.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_ne!(timing_free(&base), timing_free(&reseeded));
    assert_eq!(timing_free(&reseeded), timing_free(&repeat));
}

#[test]
fn accept_reports_skips_with_a_distinct_exit_code() {
    let output = bdsde(&["accept", "--path-scale", "0.0001"]);
    assert_eq!(output.status.code(), Some(2), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert!(text.contains("SKIP"));
    assert!(text.contains("PASS tree-equivalence"));
    assert_eq!(text.lines().count(), 9, "one line per criterion");
}

#[test]
fn accept_rejects_non_acceptance_configs() {
    let cfg = write_cfg("accept-gating", U_CFG);
    let output = bdsde(&["accept", "--config", cfg.to_str().unwrap()]);
    assert!(!output.status.success());
    assert!(stderr(&output).contains("`simulate`"));
}

#[test]
fn dump_paths_needs_a_file_destination() {
    let cfg = write_cfg("dump-nowhere", U_CFG);
    let output = bdsde(&["simulate", "--config", cfg.to_str().unwrap(), "--dump-paths"]);
    assert!(!output.status.success());
    assert!(stderr(&output).contains("--dump-paths needs a file destination"));
}

#[test]
fn dump_paths_lands_next_to_the_results() {
    let cfg = write_cfg("dump", U_CFG);
    let out = std::env::temp_dir().join("bdsde-cli-dump-results.csv");
    let output = bdsde(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--dump-paths",
    ]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let records = std::fs::read_to_string(&out).expect("results file must exist");
    assert!(records.starts_with(bdsde::CSV_HEADER));
    let dump_path = out.with_extension("paths.csv");
    let dump = std::fs::read_to_string(&dump_path).expect("dump file must exist");
    assert!(dump.starts_with("outer,path,tau_node,clock_time,x[0],y,z[0]"));
    assert!(stdout(&output).contains("wrote per-path dump"));
}

#[test]
fn convergence_walks_the_ladder() {
    let cfg = write_cfg(
        "ladder",
        "kind = convergence\nterminal = square\nx0 = 0.0\n\
         ladder = 4:400, 8:800\nseed = 2\n",
    );
    let output = bdsde(&["convergence", "--config", cfg.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    assert_eq!(text.lines().count(), 3, "header plus one row per rung");
    assert!(text.contains("n=4;paths=400"));
    assert!(text.contains("n=8;paths=800"));
}

#[test]
fn compare_gates_on_the_oracle() {
    let cfg = write_cfg(
        "compare",
        "kind = oracle-compare\nterminal = square\nx0 = 0.0\n\
         n_steps = 8\nn_inner = 4000\nn_outer = 1\nseed = 3\n",
    );
    let output = bdsde(&["compare", "--config", cfg.to_str().unwrap()]);
    assert!(output.status.success(), "stderr: {}", stderr(&output));
    let text = stdout(&output);
    let record = text.lines().nth(1).expect("one comparison row");
    assert!(record.contains(",true,"), "gate column missing: {record}");
}

#[test]
fn missing_configs_fail_loudly() {
    let output = bdsde(&["simulate", "--config", "/nonexistent/nowhere.cfg"]);
    assert!(!output.status.success());
    assert!(stderr(&output).contains("nowhere.cfg"));
}
