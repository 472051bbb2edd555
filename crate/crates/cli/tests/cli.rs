//! Drives the `polar-recon` binary end to end at small block lengths.

use std::path::Path;
use std::process::{Command, Output};

use polar_recon::construction::FrozenLibrary;
use polar_recon::harness::CSV_HEADER;
use polar_recon::ldpc::CodeRegistry;
use polar_recon::protocol::read_transcript;

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polar-recon"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = bin(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn construct_writes_a_loadable_library() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["construct", "--n", "1024", "--qbers", "0.02,0.05", "--fidelity", "64", "--out", p(dir.path())]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "qber,n,k,f_fwd");
    assert_eq!(lines.len(), 3);
    let lib = FrozenLibrary::load(dir.path(), 1024).unwrap();
    assert_eq!(lib.len(), 2);
    let k: usize = lines[1].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(lib.get(0.02).unwrap().frozen.k(), k);
}

#[test]
fn run_streams_csv_and_matches_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("campaign.json");
    std::fs::write(
        &config,
        r#"{"n": 1024, "m": 2, "d": 8, "l": 4, "qber_list": [0.03, 0.06], "trials": 12, "seed": 3, "fidelity": 64}"#,
    )
    .unwrap();
    let from_config = ok(&["run", "--config", p(&config), "--workers", "2"]);
    let lines: Vec<&str> = from_config.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0.03,1024,2,8,4,12,"));

    let csv = dir.path().join("out.csv");
    let json = dir.path().join("out.json");
    let from_flags = ok(&[
        "run", "--n", "1024", "--m", "2", "--d", "8", "--l", "4", "--qbers", "0.03,0.06", "--trials", "12", "--seed",
        "3", "--workers", "1", "--output", p(&csv), "--json", p(&json),
    ]);
    assert!(from_flags.is_empty());
    // Flag defaults use full fidelity, so only the shape is compared.
    let written = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(written.lines().count(), 3);
    let rows: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[test]
fn run_output_is_independent_of_workers() {
    let args = |w: &'static str| {
        ok(&[
            "run", "--n", "512", "--m", "4", "--d", "8", "--l", "2", "--qbers", "0.04:0.06:0.01", "--trials", "16",
            "--seed", "11", "--workers", w,
        ])
    };
    assert_eq!(args("1"), args("3"));
}

#[test]
fn noiseless_run_reports_zero_fer() {
    let out = ok(&[
        "run", "--n", "1024", "--m", "4", "--d", "8", "--l", "2", "--qbers", "0.05", "--channel-qber", "0", "--trials",
        "8",
    ]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[8], "0");
}

#[test]
fn decode_trace_writes_a_readable_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("t.bin");
    let out = ok(&[
        "decode-trace", "--n", "1024", "--m", "2", "--d", "8", "--l", "4", "--qbers", "0.05", "--seed", "9",
        "--trial-index", "4", "--transcript", p(&transcript),
    ]);
    let summary: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(summary["trial_index"], 4);
    let bytes = std::fs::read(&transcript).unwrap();
    assert_eq!(summary["transcript_bytes"], bytes.len());
    let (fwd, ack) = read_transcript(&bytes).unwrap();
    assert_eq!(fwd.z.len(), 1024);
    assert_eq!(fwd.tags.len(), 2);
    assert_eq!(ack.sigma.len(), 2);
    assert_eq!(summary["r"], ack.failed_blocks().len());
}

#[test]
fn gen_ldpc_writes_a_registry() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["gen-ldpc", "--cols", "1024", "--qbers", "0.03,0.08", "--out", p(dir.path())]);
    assert_eq!(out.lines().count(), 3);
    let reg = CodeRegistry::load(dir.path()).unwrap();
    assert_eq!(reg.len(), 2);
    assert!(reg.codes().iter().all(|c| c.matrix.cols() == 1024));
}

#[test]
fn analyze_subcommands_print_tables() {
    let eps = ok(&["analyze", "epsilon", "--ms", "1,8", "--d-min", "4", "--d-max", "10"]);
    assert_eq!(eps.lines().count(), 1 + 2 * 7);
    let yields = ok(&["analyze", "yield", "--lengths", "1048576,100000000", "--eps-fs", "0.01,0.1"]);
    assert_eq!(yields.lines().count(), 1 + 4);
    let point: serde_json::Value = serde_json::from_str(&ok(&["analyze", "point"])).unwrap();
    assert!(point.is_object());
}

#[test]
fn invalid_arguments_fail() {
    assert!(!bin(&["run", "--n", "1000", "--trials", "1"]).status.success());
    assert!(!bin(&["run", "--n", "1024", "--qbers", "0.6", "--trials", "1"]).status.success());
    assert!(!bin(&["run", "--n", "1024", "--metric", "fuzzy", "--trials", "1"]).status.success());
    assert!(!bin(&["analyze", "epsilon", "--ms", "x"]).status.success());
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"n": 1024, "qber": 0.02, "unknown": 1}"#).unwrap();
    assert!(!bin(&["run", "--config", p(&config)]).status.success());
}
