use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use specidem::c64;
use specidem::io;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_specidem"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("corpus")
}

/// A projected entry in a scratch directory: instance, two bundles, two J files.
fn projected(dir: &Path) -> PathBuf {
    write(
        dir,
        "cfg.json",
        r#"{"generator": {"kind": "random", "n": 12, "r": 2}, "seed": 4, "xi": [0.0]}"#,
    );
    let o = run(dir, &["--config", "cfg.json", "project", "--out", "entry"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    dir.join("entry")
}

#[test]
fn malformed_config_is_an_error() {
    let t = tempfile::tempdir().unwrap();
    write(t.path(), "bad.json", "{\"generator\": ");
    let o = run(t.path(), &["--config", "bad.json", "gate"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("parsing config"));
    write(t.path(), "unknown.json", r#"{"generatr": {}}"#);
    assert_eq!(
        code(&run(t.path(), &["--config", "unknown.json", "gate"])),
        1
    );
}

#[test]
fn unknown_subcommand_is_an_error() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(t.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(t.path(), &["--help"])), 0);
}

#[test]
fn gate_accepts_geometric_and_rejects_slow_decay() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "geo.json",
        r#"{"generator": {"kind": "geometric", "n": 60, "r": 1}}"#,
    );
    write(
        t.path(),
        "slow.json",
        r#"{"generator": {"kind": "power", "n": 5000, "r": 1, "p": 0.5}}"#,
    );
    let o = run(t.path(), &["--config", "geo.json", "gate"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["verdict"], "accept");
    assert_eq!(code(&run(t.path(), &["--config", "slow.json", "gate"])), 2);
}

#[test]
fn empty_grid_writes_only_the_header() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"generator": {"kind": "geometric", "n": 10, "r": 1}, "grid": {"lo": -0.5, "hi": 0.5, "count": 0}}"#,
    );
    let o = run(
        t.path(),
        &["--config", "cfg.json", "scan-delta", "--out", "res"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(t.path().join("res/scan_delta.csv")).unwrap();
    assert_eq!(
        csv,
        "xi,margin,weighted_alpha,weighted_beta,tail_alpha,tail_beta,eig_clearance,verdict\n"
    );
}

#[test]
fn scan_delta_rows_follow_the_grid() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"generator": {"kind": "geometric", "n": 30, "r": 1}, "grid": {"lo": -0.5, "hi": 0.5, "count": 4}}"#,
    );
    let o = run(t.path(), &["--config", "cfg.json", "scan-delta"]);
    assert_eq!(code(&o), 0);
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| &r[7] == "accept"));
}

#[test]
fn shipped_corpus_verifies() {
    let t = tempfile::tempdir().unwrap();
    let cfg = format!(r#"{{"corpus": {:?}}}"#, corpus());
    write(t.path(), "cfg.json", &cfg);
    let o = run(
        t.path(),
        &["--config", "cfg.json", "verify", "--out", "res"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(t.path().join("res/verify.csv")).unwrap();
    let entries = std::fs::read_dir(corpus())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(entries, 20);
    // three checks per bundle, two per plus/minus pair
    assert_eq!(csv.lines().count(), 1 + entries * (2 * 3 + 2));
}

#[test]
fn mismatched_instance_hash_is_an_error() {
    let t = tempfile::tempdir().unwrap();
    let entry = projected(t.path());
    let mut op = io::read_instance(&entry.join("instance.json")).unwrap();
    let mut lambdas = op.lambdas().to_vec();
    lambdas[0] += c64::new(1e-3, 0.0);
    op = specidem::model::build_operator(
        specidem::model::SpectrumSpec::sampled(lambdas).unwrap(),
        op.coeffs.clone(),
    )
    .unwrap();
    io::write_instance(&entry.join("instance.json"), &op).unwrap();
    write(t.path(), "v.json", r#"{"corpus": "."}"#);
    let o = run(t.path(), &["--config", "v.json", "verify"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hash mismatch"), "{}", stderr(&o));
}

#[test]
fn corrupted_idempotent_fails_with_named_residual() {
    let t = tempfile::tempdir().unwrap();
    let entry = projected(t.path());
    let path = entry.join("J_0_plus.bin");
    let mut j = io::read_matrix_bin(&path, 12, 12).unwrap();
    j[(3, 5)] += c64::new(0.1, 0.0);
    io::write_matrix_bin(&path, &j).unwrap();
    write(t.path(), "v.json", r#"{"corpus": "."}"#);
    let o = run(t.path(), &["--config", "v.json", "verify"]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(
        err.contains("FAIL") && err.contains("bundle_0_plus.json: idempotency"),
        "{err}"
    );
    assert!(err.contains("partition"));
    assert!(!err.contains("bundle_0_minus.json: idempotency"));
}

#[test]
fn verify_single_bundle_with_instance() {
    let t = tempfile::tempdir().unwrap();
    let entry = projected(t.path());
    let cfg = format!(
        r#"{{"instance": {:?}, "bundle": {:?}}}"#,
        entry.join("instance.json"),
        entry.join("bundle_0_minus.json")
    );
    write(t.path(), "v.json", &cfg);
    let o = run(t.path(), &["--config", "v.json", "verify"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 4);
}

#[test]
fn projection_is_bitwise_deterministic() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"generator": {"kind": "random", "n": 16, "r": 2}, "seed": 9, "xi": [0.0, 0.1]}"#,
    );
    for out in ["a", "b"] {
        assert_eq!(
            code(&run(
                t.path(),
                &["--config", "cfg.json", "project", "--out", out]
            )),
            0
        );
    }
    for name in [
        "J_0_plus.bin",
        "J_0_minus.bin",
        "J_1_plus.bin",
        "J_1_minus.bin",
        "instance.json",
    ] {
        let a = std::fs::read(t.path().join("a").join(name)).unwrap();
        let b = std::fs::read(t.path().join("b").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn flags_override_config_keys() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "s1.json",
        r#"{"generator": {"kind": "random", "n": 6, "r": 1}, "seed": 1}"#,
    );
    write(
        t.path(),
        "s2.json",
        r#"{"generator": {"kind": "random", "n": 6, "r": 1}, "seed": 2}"#,
    );
    let a = run(
        t.path(),
        &["--config", "s1.json", "--seed", "2", "generate"],
    )
    .stdout;
    let b = run(t.path(), &["--config", "s2.json", "generate"]).stdout;
    let c = run(t.path(), &["--config", "s1.json", "generate"]).stdout;
    assert_eq!(a, b);
    assert_ne!(a, c);
    // a gate threshold below the weighted sum turns accept into reject
    write(
        t.path(),
        "geo.json",
        r#"{"generator": {"kind": "geometric", "n": 60, "r": 1}}"#,
    );
    assert_eq!(code(&run(t.path(), &["--config", "geo.json", "gate"])), 0);
    assert_eq!(
        code(&run(
            t.path(),
            &["--config", "geo.json", "--threshold", "1e-3", "gate"]
        )),
        2
    );
}

#[test]
fn unperturbed_scan_accepts_off_the_diagonal() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"generator": {"kind": "random", "n": 10, "r": 0}, "grid": {"lo": -0.9, "hi": 0.9, "count": 7}}"#,
    );
    let o = run(t.path(), &["--config", "cfg.json", "scan-delta"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut r = csv::Reader::from_reader(o.stdout.as_slice());
    for row in r.records() {
        let row = row.unwrap();
        let margin: f64 = row[1].parse().unwrap();
        assert_eq!(&row[7] == "accept", margin > 0.0, "{row:?}");
    }
}

#[test]
fn without_out_nothing_is_written() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"generator": {"kind": "random", "n": 8, "r": 1}, "xi": [0.0]}"#,
    );
    let o = run(t.path(), &["--config", "cfg.json", "project"]);
    assert_eq!(code(&o), 0);
    let bundles: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(bundles.as_array().unwrap().len(), 2);
    assert_eq!(std::fs::read_dir(t.path()).unwrap().count(), 1);
}

#[test]
fn eigenvalue_outside_the_disc_rejects_the_pair() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"generator": {"kind": "power", "n": 24, "r": 2, "p": 1.5}, "xi": [0.0]}"#,
    );
    let o = run(t.path(), &["--config", "cfg.json", "project"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("partition"));
}

#[test]
fn certify_range_vector_and_given_vector() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"generator": {"kind": "random", "n": 12, "r": 2}, "seed": 3, "xi": [0.0], "side": "plus"}"#,
    );
    let o = run(
        t.path(),
        &["--config", "cfg.json", "certify", "--out", "res"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let cert: serde_json::Value =
        serde_json::from_slice(&std::fs::read(t.path().join("res/certificate.json")).unwrap())
            .unwrap();
    assert_eq!(cert["passes"], true);
    write(
        t.path(),
        "short.json",
        r#"{"generator": {"kind": "random", "n": 12, "r": 2}, "xi": [0.0], "vector": [[1.0, 0.0]]}"#,
    );
    assert_eq!(
        code(&run(t.path(), &["--config", "short.json", "certify"])),
        1
    );
}

#[test]
fn bench_handles_zero_rank() {
    let t = tempfile::tempdir().unwrap();
    write(
        t.path(),
        "cfg.json",
        r#"{"bench": {"sizes": [16], "rank": 0}}"#,
    );
    let o = run(t.path(), &["--config", "cfg.json", "bench"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,r,nodes,structured_s,dense_s,dense_timed_nodes,ratio"
    );
    assert!(lines.next().unwrap().starts_with("16,0,"));
}
