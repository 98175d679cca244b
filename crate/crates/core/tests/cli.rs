//! End-to-end checks of the command-line interface through the real binary:
//! exit codes, CSV schemas, manifests, and byte-level reproducibility.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rodeo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rodeo"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn read_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .expect("csv readable")
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn spectrum_exact_clean_lattice() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "spectrum-exact",
            "--model",
            "anderson",
            "--sites",
            "4",
            "--disorder-const",
            "0",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("s.csv"));
    assert_eq!(rows[0], vec!["energy", "weight"]);
    let energies: Vec<f64> = rows[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    let expect = [-2.0, 0.0, 0.0, 2.0];
    assert_eq!(energies.len(), 4);
    for (e, x) in energies.iter().zip(expect) {
        assert!((e - x).abs() < 1e-10, "energy {e} vs {x}");
    }
    let weights: Vec<f64> = rows[1..].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn scan_figure_parameters_emit_321_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "scan",
            "--model",
            "heisenberg",
            "--sites",
            "10",
            "--J",
            "1",
            "--h",
            "3",
            "--init",
            "0101010101",
            "--cycles",
            "9",
            "--trms",
            "5",
            "--averages",
            "20",
            "--emin",
            "-20",
            "--emax",
            "12",
            "--points",
            "321",
            "--seed",
            "7",
            "--out",
            "fig4.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("fig4.csv"));
    assert_eq!(rows[0], vec!["energy", "mean_success", "stderr"]);
    assert_eq!(rows.len() - 1, 321);
    assert_eq!(rows[1][0], "-20");
    assert_eq!(rows[321][0], "12");
    // Manifest sits beside the data and carries the digest.
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fig4.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["subcommand"], "scan");
    assert_eq!(manifest["master_seed"], 7);
    assert_eq!(manifest["outputs"][0]["path"], "fig4.csv");
    assert!(manifest["extra"]["total_evolution_time"].as_f64().unwrap() > 0.0);
}

#[test]
fn scan_points_zero_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "scan", "--points", "0", "--emin", "-20", "--emax", "12", "--out", "bad.csv",
        ],
    );
    assert_eq!(code(&out), 2);
    assert!(!dir.path().join("bad.csv").exists());
}

#[test]
fn inverted_window_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "scan", "--points", "11", "--emin", "5", "--emax", "-5", "--out", "bad.csv",
        ],
    );
    assert_eq!(code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("--emin"), "stderr: {msg}");
}

#[test]
fn unknown_flag_exits_2_and_help_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(dir.path(), &["scan", "--no-such-flag"]);
    assert_eq!(code(&out), 2);

    let help = rodeo(dir.path(), &["--help"]);
    assert_eq!(code(&help), 0);
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in [
        "spectrum-exact",
        "scan",
        "peaks",
        "search",
        "prepare",
        "adiabatic",
        "qpe",
        "compare",
        "precondition",
        "verify",
    ] {
        assert!(text.contains(sub), "help lacks {sub}");
    }
    let scan_help = rodeo(dir.path(), &["scan", "--help"]);
    assert_eq!(code(&scan_help), 0);
    let text = String::from_utf8_lossy(&scan_help.stdout);
    for flag in [
        "--model", "--sites", "--J", "--h", "--init", "--cycles", "--trms", "--averages",
        "--emin", "--emax", "--points", "--seed", "--threads", "--out", "--manifest",
        "--time-accounting", "--disorder-rms", "--disorder-seed", "--disorder-const",
        "--hamiltonian-file",
    ] {
        assert!(text.contains(flag), "scan help lacks {flag}");
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str, threads: &str| {
        vec![
            "scan".to_string(),
            "--model".into(),
            "anderson".into(),
            "--sites".into(),
            "16".into(),
            "--disorder-rms".into(),
            "0.5".into(),
            "--disorder-seed".into(),
            "3".into(),
            "--emin".into(),
            "-3".into(),
            "--emax".into(),
            "3".into(),
            "--points".into(),
            "41".into(),
            "--averages".into(),
            "8".into(),
            "--seed".into(),
            "9".into(),
            "--threads".into(),
            threads.to_string(),
            "--out".into(),
            out.to_string(),
        ]
    };
    for (out, threads) in [("a.csv", "1"), ("b.csv", "8"), ("c.csv", "1")] {
        let argv: Vec<String> = args(out, threads);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert_eq!(code(&rodeo(dir.path(), &argv)), 0);
    }
    let a = fs::read(dir.path().join("a.csv")).unwrap();
    let b = fs::read(dir.path().join("b.csv")).unwrap();
    let c = fs::read(dir.path().join("c.csv")).unwrap();
    assert_eq!(a, b, "thread count changed the data");
    assert_eq!(a, c, "rerun changed the data");
}

#[test]
fn verify_detects_tampering_and_rerun_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "spectrum-exact",
            "--model",
            "anderson",
            "--sites",
            "8",
            "--disorder-seed",
            "5",
            "--out",
            "w.csv",
        ],
    );
    assert_eq!(code(&out), 0);

    let ok = rodeo(dir.path(), &["verify", "--manifest", "w.manifest.json"]);
    assert_eq!(code(&ok), 0);

    let rerun = rodeo(
        dir.path(),
        &["verify", "--manifest", "w.manifest.json", "--rerun"],
    );
    assert_eq!(
        code(&rerun),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&rerun.stderr)
    );

    let mut bytes = fs::read(dir.path().join("w.csv")).unwrap();
    let last = bytes.len() - 2;
    bytes[last] = bytes[last].wrapping_add(1);
    fs::write(dir.path().join("w.csv"), bytes).unwrap();
    let bad = rodeo(dir.path(), &["verify", "--manifest", "w.manifest.json"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("w.csv"));

    fs::remove_file(dir.path().join("w.csv")).unwrap();
    let gone = rodeo(dir.path(), &["verify", "--manifest", "w.manifest.json"]);
    assert_eq!(code(&gone), 1);
}

#[test]
fn prepare_trace_schema_and_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "prepare",
            "--filter-energy",
            "-18.0618",
            "--cycles",
            "15",
            "--trms",
            "3",
            "--seed",
            "1",
            "--out",
            "p.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("p.csv"));
    assert_eq!(
        rows[0],
        vec!["cycle", "filter_energy", "delta", "survival_probability"]
    );
    assert_eq!(rows.len() - 1, 16);
    assert_eq!(rows[1][0], "0");
    let first_delta: f64 = rows[1][2].parse().unwrap();
    let last_delta: f64 = rows[16][2].parse().unwrap();
    assert!(last_delta < 0.05 * first_delta, "no filtering progress");
    let survival: f64 = rows[16][3].parse().unwrap();
    assert!(survival > 0.0 && survival < 1.0);
}

#[test]
fn search_ring_lattice_finds_band_bottom() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "search",
            "--model",
            "anderson",
            "--sites",
            "4",
            "--disorder-const",
            "0",
            "--init",
            "site:0",
            "--emin",
            "-3",
            "--emax",
            "3",
            "--shrink-K",
            "2",
            "--epsilon",
            "1e-4",
            "--trms",
            "2",
            "--out",
            "search.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("search.csv"));
    assert_eq!(
        rows[0],
        vec![
            "scan_index",
            "window_min",
            "window_max",
            "trms",
            "peak_location"
        ]
    );
    let manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("search.manifest.json")).unwrap(),
    )
    .unwrap();
    let estimate = manifest["extra"]["estimate"].as_f64().unwrap();
    assert!((estimate - (-2.0)).abs() < 1e-3, "estimate {estimate}");
    assert_eq!(
        manifest["extra"]["scans"].as_u64().unwrap() as usize,
        rows.len() - 1
    );
}

#[test]
fn qpe_distribution_sums_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "qpe",
            "--model",
            "anderson",
            "--sites",
            "8",
            "--disorder-seed",
            "2",
            "--phase-bits",
            "7",
            "--base-time",
            "0.5",
            "--out",
            "qpe.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("qpe.csv"));
    assert_eq!(rows[0], vec!["outcome", "probability"]);
    assert_eq!(rows.len() - 1, 128);
    let total: f64 = rows[1..].iter().map(|r| r[1].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12, "probabilities sum to {total}");
}

#[test]
fn ramp_subcommands_require_spin_chain() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec![
            "adiabatic",
            "--model",
            "anderson",
            "--total-time",
            "1",
            "--out",
            "x.csv",
        ],
        vec![
            "compare",
            "--model",
            "anderson",
            "--filter-energy",
            "-2",
            "--total-time",
            "1",
            "--out",
            "x.csv",
        ],
        vec![
            "precondition",
            "--model",
            "anderson",
            "--t-ae",
            "1",
            "--out",
            "x.csv",
        ],
    ] {
        let out = rodeo(dir.path(), &args);
        assert_eq!(code(&out), 2, "{:?}", args);
        assert!(String::from_utf8_lossy(&out.stderr).contains("heisenberg"));
    }
}

#[test]
fn init_validation_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    for (init, expect) in [
        ("01010", "does not address dimension 1024"),
        ("site:2000", "out of range"),
        ("kmin", "requires --model anderson"),
        ("hello", "cannot parse --init"),
    ] {
        let out = rodeo(
            dir.path(),
            &[
                "spectrum-exact",
                "--model",
                "heisenberg",
                "--sites",
                "10",
                "--init",
                init,
                "--out",
                "x.csv",
            ],
        );
        assert_eq!(code(&out), 2, "init {init}");
        let msg = String::from_utf8_lossy(&out.stderr);
        assert!(msg.contains(expect), "init {init}: {msg}");
    }
}

#[test]
fn hamiltonian_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    // Two-level operator in the JSON COO format.
    let json = r#"{"dim": 2, "entries": [[0, 0, 1.0, 0.0], [1, 1, -1.0, 0.0], [0, 1, 0.5, 0.0]]}"#;
    fs::write(dir.path().join("h.json"), json).unwrap();
    let out = rodeo(
        dir.path(),
        &[
            "spectrum-exact",
            "--model",
            "file",
            "--hamiltonian-file",
            "h.json",
            "--init",
            "site:0",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(&dir.path().join("s.csv"));
    let energies: Vec<f64> = rows[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    // Eigenvalues of [[1, 0.5], [0.5, -1]] are ±sqrt(1.25).
    let expect = 1.25f64.sqrt();
    assert!((energies[0] + expect).abs() < 1e-12);
    assert!((energies[1] - expect).abs() < 1e-12);
}
