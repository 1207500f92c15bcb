//! End-to-end tests of the installed binary: argument handling, config
//! merging, output formats, determinism, and exit codes.

use std::io::BufReader;
use std::process::Command;

use noma_limfb::harness::{resolve_delta, DeltaSource, ExperimentConfig, CSV_HEADER};
use noma_limfb::quantizer::DeltaCache;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_noma-limfb"));
    c.env_remove("NOMA_LIMFB_SEED");
    c
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let out = cmd.output().expect("binary runs");
    (
        out.status.code().expect("no signal"),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

#[test]
fn sweep_writes_csv_deterministically() {
    let args = ["sweep", "--b", "1..2", "--bprime", "2", "--samples", "300", "--seed", "4"];
    let (code, csv1, _) = run(bin().args(args));
    assert_eq!(code, 0);
    let mut lines = csv1.lines();
    assert_eq!(lines.next().unwrap(), CSV_HEADER);
    assert_eq!(lines.count(), 2);
    let (_, csv2, _) = run(bin().args(args).arg("--workers").arg("2"));
    assert_eq!(csv1, csv2, "bytes must not depend on the worker count");
}

#[test]
fn sweep_emits_plot_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let plots = dir.path().join("series");
    let (code, stdout, _) = run(bin().args([
        "sweep",
        "--b",
        "1..2",
        "--bprime",
        "1..2",
        "--samples",
        "200",
        "--out",
        out.to_str().unwrap(),
        "--plot-dir",
        plots.to_str().unwrap(),
    ]));
    assert_eq!(code, 0);
    assert!(stdout.is_empty(), "--out keeps stdout clean");
    assert!(out.exists());
    for name in
        ["rate_loss_bp1.dat", "rate_loss_bp2.dat", "sum_rate_bp2.dat", "sum_rate_full.dat"]
    {
        let text = std::fs::read_to_string(plots.join(name)).unwrap();
        assert_eq!(text.lines().count(), 3, "{name} should hold a header and two points");
    }
}

#[test]
fn dump_config_round_trips_through_the_binary() {
    let dump = |extra: &[&str]| -> String {
        let mut cmd = bin();
        cmd.args(["sweep", "--dump-config"]).args(extra);
        let (code, stdout, _) = run(&mut cmd);
        assert_eq!(code, 0);
        stdout
    };
    let first = dump(&["--b", "1..3", "--snr-db", "12.5", "--delta-source", "explicit:0.31"]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    std::fs::write(&path, &first).unwrap();
    let second = dump(&["--config", path.to_str().unwrap()]);
    assert_eq!(first, second);
    // Flags still override the file.
    let third = dump(&["--config", path.to_str().unwrap(), "--seed", "99"]);
    assert!(third.contains("seed = 99"));
    assert!(third.contains("cqi_bits = 1..3"));
}

#[test]
fn seed_env_is_a_fallback_only() {
    let (code, from_env, _) =
        run(bin().args(["sweep", "--dump-config"]).env("NOMA_LIMFB_SEED", "41"));
    assert_eq!(code, 0);
    assert!(from_env.contains("seed = 41"));
    let (_, flag_wins, _) = run(bin()
        .args(["sweep", "--dump-config", "--seed", "5"])
        .env("NOMA_LIMFB_SEED", "41"));
    assert!(flag_wins.contains("seed = 5"));
    let (code, _, stderr) =
        run(bin().args(["sweep", "--dump-config"]).env("NOMA_LIFB_SEED_TYPO", "x"));
    assert_eq!(code, 0, "unrelated variables are ignored: {stderr}");
    let (code, _, stderr) =
        run(bin().args(["sweep", "--dump-config"]).env("NOMA_LIMFB_SEED", "pony"));
    assert_eq!(code, 2);
    assert!(stderr.contains("NOMA_LIMFB_SEED"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.conf");
    std::fs::write(&path, "mystery = 1\n").unwrap();
    let (code, _, stderr) = run(bin().args(["sweep", "--config", path.to_str().unwrap()]));
    assert_eq!(code, 2);
    assert!(stderr.contains("mystery"), "stderr: {stderr}");

    let (code, _, _) = run(bin().args(["sweep", "--config", "/nonexistent/x.conf"]));
    assert_eq!(code, 2);

    let (code, _, _) = run(bin().args(["sweep", "--b", "6..1"]));
    assert_eq!(code, 2);

    let (code, _, _) = run(bin().args(["single", "--b", "1..3", "--samples", "1"]));
    assert_eq!(code, 2, "single needs a single-cell budget");

    let (code, _, _) = run(&mut bin());
    assert_eq!(code, 2, "a missing subcommand is a usage error");
}

#[test]
fn bounds_check_reports_zero_violations() {
    let (code, stdout, _) = run(bin().args([
        "bounds-check",
        "--b",
        "2",
        "--bprime",
        "2..3",
        "--samples",
        "500",
        "--seed",
        "7",
    ]));
    assert_eq!(code, 0);
    assert!(stdout.contains("0 violations over"), "stdout: {stdout}");
    assert_eq!(stdout.lines().count(), 3);
}

#[test]
fn validate_stats_gates_on_tolerances() {
    // Far too few samples for the distribution check: must flag and exit 3.
    let (code, stdout, _) = run(bin().args([
        "validate-stats",
        "--nt",
        "4",
        "--bprime",
        "4",
        "--samples",
        "2000",
        "--seed",
        "3",
    ]));
    assert_eq!(code, 3);
    assert!(stdout.contains("FAIL"));
    // At realistic scale every applicable check passes.
    let (code, stdout, _) = run(bin().args([
        "validate-stats",
        "--nt",
        "4",
        "--bprime",
        "4",
        "--samples",
        "150000",
        "--seed",
        "3",
    ]));
    assert_eq!(code, 0, "stdout: {stdout}");
    assert!(stdout.contains("all checks passed"));
}

#[test]
fn single_traces_one_sample() {
    let (code, stdout, _) =
        run(bin().args(["single", "--index", "3", "--samples", "1", "--seed", "2"]));
    assert_eq!(code, 0);
    assert!(stdout.contains("sample 3"));
    assert!(stdout.contains("channel"));
    let (_, again, _) = run(bin().args(["single", "--index", "3", "--samples", "1", "--seed", "2"]));
    assert_eq!(stdout, again);
}

#[test]
fn train_delta_matches_the_harness_source() {
    let (code, stdout, _) = run(bin().args([
        "train-delta",
        "--b",
        "1..2",
        "--bprime",
        "1..2",
        "--nt",
        "2",
        "--samples",
        "2000",
        "--seed",
        "7",
    ]));
    assert_eq!(code, 0);
    let cache = DeltaCache::read_text(BufReader::new(stdout.as_bytes())).unwrap();
    assert_eq!(cache.len(), 4);
    let mut fresh = DeltaCache::new();
    let cfg = ExperimentConfig {
        cqi_bits: 2,
        codebook_bits: 1,
        seed: 7,
        delta_source: DeltaSource::Trained,
        delta_train_samples: 2000,
        ..ExperimentConfig::default()
    };
    let expect = resolve_delta(&cfg, &mut fresh).unwrap();
    assert_eq!(cache.get(2, 1, 2, 7), Some(expect));
}
