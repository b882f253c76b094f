//! Command-line behavior: flags, exit codes, and the gen -> run -> drill
//! round trip.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn atl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_atl"))
        .args(args)
        .output()
        .expect("spawn atl")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("hier.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

const SIG_COMPRESS: &str =
    "{scope: sig:1:109, rate: 1/1 per second, bucket: 10, overlimit: compress}\n";

#[test]
fn gen_spaces_timestamps_evenly() {
    let out = atl(&[
        "gen",
        "--count",
        "3",
        "--duration-ms",
        "2000",
        "--seed",
        "1",
    ]);
    assert!(out.status.success());
    let lines: Vec<String> = stdout(&out).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    let ts: Vec<u64> = lines
        .iter()
        .map(|l| atl_core::parse_alert(l).unwrap().timestamp_ms)
        .collect();
    assert_eq!(ts, vec![0, 1000, 2000]);
}

#[test]
fn gen_rejects_zero_count() {
    let out = atl(&["gen", "--count", "0", "--duration-ms", "1", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gen_rejects_unknown_modulate_field() {
    let out = atl(&[
        "gen",
        "--count",
        "1",
        "--duration-ms",
        "1",
        "--seed",
        "1",
        "--modulate",
        "ttl",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("ttl"));
}

#[test]
fn unknown_flag_exits_2() {
    let out = atl(&[
        "gen",
        "--count",
        "1",
        "--duration-ms",
        "1",
        "--seed",
        "1",
        "--bogus",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_names_a_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SIG_COMPRESS);
    let missing = dir.path().join("nope.txt");
    let log = dir.path().join("out.atl");
    let out = atl(&[
        "run",
        "--config",
        &config,
        "--in",
        missing.to_str().unwrap(),
        "--log",
        log.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("nope.txt"), "{}", stderr(&out));
}

#[test]
fn run_reports_config_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "# fine\n{scope: global, rate: nonsense, bucket: 1, overlimit: drop}\n",
    );
    let input = dir.path().join("in.txt");
    fs::write(&input, "").unwrap();
    let out = atl(&[
        "run",
        "--config",
        &config,
        "--in",
        input.to_str().unwrap(),
        "--log",
        dir.path().join("out.atl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn run_reports_bad_input_line() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SIG_COMPRESS);
    let input = dir.path().join("in.txt");
    fs::write(&input, "{\"ts\":0}\n").unwrap();
    let out = atl(&[
        "run",
        "--config",
        &config,
        "--in",
        input.to_str().unwrap(),
        "--log",
        dir.path().join("out.atl").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 1"), "{}", stderr(&out));
}

fn gen_run(dir: &Path, gen_args: &[&str]) -> (String, String) {
    let flood = dir.join("flood.txt").to_str().unwrap().to_string();
    let log = dir.join("out.atl").to_str().unwrap().to_string();
    let config = write_config(dir, SIG_COMPRESS);
    let mut args = vec!["gen"];
    args.extend_from_slice(gen_args);
    args.extend_from_slice(&["--out", &flood]);
    assert!(atl(&args).status.success());
    let out = atl(&["run", "--config", &config, "--in", &flood, "--log", &log]);
    assert!(out.status.success(), "{}", stderr(&out));
    (flood, log)
}

#[test]
fn run_stats_prints_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let flood = dir.path().join("flood.txt").to_str().unwrap().to_string();
    let log = dir.path().join("out.atl").to_str().unwrap().to_string();
    let config = write_config(dir.path(), SIG_COMPRESS);
    assert!(atl(&[
        "gen",
        "--count",
        "100",
        "--duration-ms",
        "1000",
        "--seed",
        "3",
        "--out",
        &flood
    ])
    .status
    .success());
    let out = atl(&[
        "run", "--config", &config, "--in", &flood, "--log", &log, "--stats",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("alerts in                100"), "{text}");
    assert!(text.contains("Algorithm"), "{text}");
    assert!(text.contains("Uncompressed"), "{text}");
    assert!(text.contains("RLE With Timestamp Delta"), "{text}");
}

#[test]
fn drill_composite_annotates_repeats() {
    let dir = tempfile::tempdir().unwrap();
    // front-loaded flood: 10 pass, 40 coalesce into one run
    let (_, log) = gen_run(
        dir.path(),
        &[
            "--count",
            "50",
            "--duration-ms",
            "0",
            "--seed",
            "5",
            "--front-loaded",
        ],
    );
    let out = atl(&["drill", "--log", &log]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[..10].iter().all(|l| !l.contains("repeated")));
    assert!(lines[10].ends_with("repeated 40 times"), "{}", lines[10]);
}

#[test]
fn drill_expand_reconstructs_one_record() {
    let dir = tempfile::tempdir().unwrap();
    let (_, log) = gen_run(
        dir.path(),
        &[
            "--count",
            "15",
            "--duration-ms",
            "0",
            "--seed",
            "5",
            "--front-loaded",
        ],
    );
    // record 10 is the run of the 5 over-limit alerts
    let out = atl(&["drill", "--log", &log, "--record", "10", "--expand"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out).lines().count(), 5);
}

#[test]
fn drill_rejects_out_of_range_record() {
    let dir = tempfile::tempdir().unwrap();
    let (_, log) = gen_run(
        dir.path(),
        &["--count", "3", "--duration-ms", "2000", "--seed", "5"],
    );
    let out = atl(&["drill", "--log", &log, "--record", "999"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no such record"), "{}", stderr(&out));
}

#[test]
fn drill_names_offset_of_truncation() {
    let dir = tempfile::tempdir().unwrap();
    let (_, log) = gen_run(
        dir.path(),
        &["--count", "3", "--duration-ms", "2000", "--seed", "5"],
    );
    let mut bytes = fs::read(&log).unwrap();
    bytes.truncate(bytes.len() - 4);
    fs::write(&log, bytes).unwrap();
    let out = atl(&["drill", "--log", &log]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("offset"), "{}", stderr(&out));
}

#[test]
fn drill_rejects_foreign_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("not.atl");
    fs::write(&path, b"PCAP????").unwrap();
    let out = atl(&["drill", "--log", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("magic"), "{}", stderr(&out));
}

#[test]
fn closed_pipe_ends_output_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let (_, log) = gen_run(
        dir.path(),
        &["--count", "2000", "--duration-ms", "5000", "--seed", "9"],
    );
    for cmd in [
        format!(
            "{} drill --log {log} --expand | head -n 1",
            env!("CARGO_BIN_EXE_atl")
        ),
        format!(
            "{} gen --count 100000 --duration-ms 1000 --seed 1 | head -n 1",
            env!("CARGO_BIN_EXE_atl")
        ),
    ] {
        let out = Command::new("bash")
            .args(["-o", "pipefail", "-c", &cmd])
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "{cmd}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);
    }
}

#[test]
fn gen_run_drill_expand_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (flood, log) = gen_run(
        dir.path(),
        &[
            "--count",
            "3000",
            "--duration-ms",
            "9000",
            "--seed",
            "11",
            "--modulate",
            "src,dst,tos,payload",
        ],
    );
    let out = atl(&["drill", "--log", &log, "--expand"]);
    assert!(out.status.success());
    assert_eq!(out.stdout, fs::read(&flood).unwrap());
}
