use std::fs;
use std::path::Path;
use std::process::Command;

use paircorr::energy::energy_fast;
use paircorr::runner::{self, manifest::RunManifest, EXIT_BAD_ARGS, EXIT_CHECK_FAILED, EXIT_GUARD, EXIT_OK};
use paircorr::sequences::{materialize, SequenceSpec};

fn run(args: &[&str]) -> i32 {
    runner::run(std::iter::once("paircorr").chain(args.iter().copied()))
}

fn out_arg(dir: &Path, name: &str) -> String {
    dir.join(name).display().to_string()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let header = rd.headers().unwrap().iter().map(String::from).collect();
    let rows = rd.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn paircorr_writes_csv_and_manifest() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "r2.csv");
    let code = run(&[
        "paircorr", "--seq", "power:1.5", "--N", "2000", "--alpha-sampler", "uniform:1:2", "--alphas", "3", "--s", "0.5,1,2",
        "--seed", "7", "--out", &out,
    ]);
    assert_eq!(code, EXIT_OK);
    let (header, rows) = read_csv(&d.path().join("r2.csv"));
    assert_eq!(header, ["N", "alpha", "s", "pair_count", "r2"]);
    assert_eq!(rows.len(), 9);
    for r in &rows {
        let pc: u64 = r[3].parse().unwrap();
        let r2: f64 = r[4].parse().unwrap();
        assert_eq!(r2, pc as f64 / 2000.0);
        let alpha: f64 = r[1].parse().unwrap();
        assert!((1.0..2.0).contains(&alpha));
    }

    let m = RunManifest::read(&d.path().join("r2.manifest.json")).unwrap();
    assert_eq!(m.manifest_v, 1);
    assert_eq!(m.command, "paircorr");
    assert_eq!(m.seed, 7);
    assert_eq!(m.spec, Some(SequenceSpec::power(1.5)));
    assert_eq!(m.params["alphas"], 3);
    let t0 = chrono::DateTime::parse_from_rfc3339(&m.started).unwrap();
    let t1 = chrono::DateTime::parse_from_rfc3339(&m.finished).unwrap();
    assert!(t0 <= t1);
    assert_eq!(m.outputs.len(), 1);
    let sha = paircorr::runner::manifest::sha256_file(&m.outputs[0].path).unwrap();
    assert_eq!(sha, m.outputs[0].sha256);
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("r2.manifest.json")).unwrap()).unwrap();
    assert_eq!(raw["manifest_v"], 1);
}

#[test]
fn energy_matches_library() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "e.csv");
    assert_eq!(run(&["energy", "--seq", "power:1.5", "--N", "1000", "--gamma", "1", "--out", &out]), EXIT_OK);
    let (header, rows) = read_csv(&d.path().join("e.csv"));
    assert_eq!(header, ["N", "gamma", "total", "trivial", "nontrivial"]);
    let seq = materialize(&SequenceSpec::power(1.5), 1000).unwrap();
    let total: u64 = rows[0][2].parse().unwrap();
    assert_eq!(total, energy_fast(&seq, 1.0).unwrap());
    assert_eq!(rows[0][3], (2 * 1000 * 1000 - 1000).to_string());

    // forced spill path gives the same bytes
    let chunked = out_arg(d.path(), "c.csv");
    let code = run(&["energy", "--seq", "power:1.5", "--N", "1000", "--gamma", "1", "--chunk-bytes", "100000", "--out", &chunked]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(fs::read(d.path().join("e.csv")).unwrap(), fs::read(d.path().join("c.csv")).unwrap());
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "x.csv");
    assert_eq!(run(&["nonsense"]), EXIT_BAD_ARGS);
    assert_eq!(run(&["energy", "--seq", "zeta", "--N", "10"]), EXIT_BAD_ARGS);
    assert_eq!(run(&["energy", "--seq", "power:1.5"]), EXIT_BAD_ARGS);
    assert_eq!(run(&["energy", "--seq", "power:1.5", "--N", "10", "--gamma", "-1", "--out", &out]), EXIT_BAD_ARGS);
    assert_eq!(run(&["paircorr", "--seq", "power:1.5", "--N", "10", "--alphas", "0", "--out", &out]), EXIT_BAD_ARGS);
    assert_eq!(run(&["converge", "--preset", "thm4:2", "--out", &out]), EXIT_BAD_ARGS);
    assert_eq!(run(&["selberg-check", "--K", "10", "--s", "6", "--N", "10", "--out", &out]), EXIT_BAD_ARGS);
    assert_eq!(run(&["verify", "--suite", "nope"]), EXIT_BAD_ARGS);

    assert_eq!(run(&["energy", "--seq", "power:1.5", "--N", "100", "--brute", "--out", &out]), EXIT_GUARD);
    assert_eq!(run(&["paircorr", "--seq", "power:1.5", "--N", "6000", "--brute", "--out", &out]), EXIT_GUARD);
    assert_eq!(
        run(&["energy", "--seq", "power:1.5", "--N", "200", "--mem-budget", "1000", "--no-chunking", "--out", &out]),
        EXIT_GUARD
    );
    assert_eq!(run(&["dyadic-count", "--seq", "power:1.5", "--N", "2000", "--u", "6", "--out", &out]), EXIT_GUARD);
    assert_eq!(
        run(&["expectation", "--seq", "power:1.5", "--N", "50", "--tol", "1e-30", "--out", &out]),
        EXIT_GUARD
    );
    // the failing run still records what happened
    let m = RunManifest::read(&d.path().join("x.manifest.json")).unwrap();
    assert!(m.summary["error"].as_str().unwrap().contains("exceeds"));
}

#[test]
fn slow_growth_gate() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "s.csv");
    assert_eq!(run(&["energy", "--seq", "power:0.5", "--N", "100", "--out", &out]), EXIT_BAD_ARGS);
    assert_eq!(run(&["paircorr", "--seq", "power:0.9", "--N", "100", "--out", &out]), EXIT_BAD_ARGS);
    assert_eq!(run(&["converge", "--preset", "thm3:0.5", "--N", "100", "--out", &out]), EXIT_BAD_ARGS);
    assert_eq!(run(&["energy", "--seq", "power:0.5", "--N", "100", "--allow-slow-growth", "--out", &out]), EXIT_OK);
    let m = RunManifest::read(&d.path().join("s.manifest.json")).unwrap();
    assert_eq!(m.summary["slow_growth"], true);

    // open problems are exploratory and run without the flag
    let code = run(&["converge", "--preset", "open-problem:1", "--N", "200,400", "--alphas", "2", "--out", &out]);
    assert_eq!(code, EXIT_OK);
    let m = RunManifest::read(&d.path().join("s.manifest.json")).unwrap();
    assert_eq!(m.summary["exploratory"], true);
    assert_eq!(m.summary["slow_growth"], true);
    assert_eq!(m.spec, Some(SequenceSpec::power(0.5)));
    assert!(d.path().join("s.summary.csv").exists());
}

#[test]
fn scaling_and_scan_record_fits() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "sc.csv");
    assert_eq!(run(&["scaling", "--seq", "power:1.5", "--N", "100,200,400", "--out", &out]), EXIT_OK);
    let m = RunManifest::read(&d.path().join("sc.manifest.json")).unwrap();
    let slope = m.summary["fit_total"]["slope"].as_f64().unwrap();
    assert!(slope > 1.9 && slope < 3.0, "slope {slope}");
    // k^3 = (k^2)^1.5 are integers, so some differences tie exactly at gamma = 1
    for p in m.summary["perturbations"].as_array().unwrap() {
        assert!((p[1].as_f64().unwrap() - 1.0).abs() <= 1e-9);
    }
    let (header, rows) = read_csv(&d.path().join("sc.csv"));
    assert_eq!(header, ["N", "gamma", "gamma_used", "perturbed", "total", "trivial", "nontrivial"]);
    assert_eq!(rows.len(), 3);

    // integer data at gamma = 1 sits exactly on the boundary, so gamma gets perturbed
    let ints = out_arg(d.path(), "ints.csv");
    assert_eq!(run(&["scaling", "--seq", "poly:0,1", "--N", "20,40,80", "--seed", "9", "--out", &ints]), EXIT_OK);
    let m = RunManifest::read(&d.path().join("ints.manifest.json")).unwrap();
    let perturbed = m.summary["perturbations"].as_array().unwrap();
    assert_eq!(perturbed.len(), 3);
    for p in perturbed {
        let g = p[1].as_f64().unwrap();
        assert!(g != 1.0 && (g - 1.0).abs() <= 1e-9);
    }

    let scan = out_arg(d.path(), "scan.csv");
    assert_eq!(run(&["energy-scan", "--seq", "power:1.5", "--N", "500", "--out", &scan]), EXIT_OK);
    let m = RunManifest::read(&d.path().join("scan.manifest.json")).unwrap();
    let slope = m.summary["gamma_fit_nontrivial"]["slope"].as_f64().unwrap();
    assert!((0.7..=1.3).contains(&slope), "slope {slope}");
}

#[test]
fn dyadic_and_binning_outputs() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "dy.csv");
    assert_eq!(run(&["dyadic-count", "--seq", "power:1.5", "--N", "25", "--u", "1,2", "--mode", "case2:0.5", "--out", &out]), EXIT_OK);
    let (header, rows) = read_csv(&d.path().join("dy.csv"));
    assert_eq!(header[..3], ["N", "u", "mode"]);
    for r in &rows {
        assert_eq!(r[2], "case2:0.5");
        assert_eq!(r[6], r[7]);
    }

    let diag = out_arg(d.path(), "diag.json");
    assert_eq!(run(&["binning-diag", "--seq", "power:1.5", "--N", "30", "--u", "1", "--mode", "thm2:0.5:0.1", "--out", &diag]), EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.path().join("diag.json")).unwrap()).unwrap();
    assert!(v["p_norm"]["rel_err"].as_f64().unwrap() <= 1e-6);
    assert_eq!(v["domination"]["violations"], 0);
    assert!(v["binning"]["max_ratio_logs"]["cauchy_schwarz_max_ratio"].as_f64().unwrap() <= 1.0);
    let m = RunManifest::read(&d.path().join("diag.manifest.json")).unwrap();
    assert!(m.summary["max_ratio_logs"]["solutions_over_upper_bound"].is_number());
}

#[test]
fn selberg_expectation_variance() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "sel.csv");
    assert_eq!(run(&["selberg-check", "--K", "10,50", "--s", "1", "--N", "10", "--out", &out]), EXIT_OK);
    let (_, rows) = read_csv(&d.path().join("sel.csv"));
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.last().unwrap() == "true"));

    let ex = out_arg(d.path(), "ex.csv");
    assert_eq!(run(&["expectation", "--seq", "power:1.5", "--N", "40,80", "--out", &ex]), EXIT_OK);
    let (header, rows) = read_csv(&d.path().join("ex.csv"));
    let col = header.iter().position(|h| h == "n_abs_diff").unwrap();
    for r in &rows {
        let v: f64 = r[col].parse().unwrap();
        assert!(v > 2.0 && v < 3.0, "{v}");
    }

    let va = out_arg(d.path(), "va.csv");
    assert_eq!(run(&["variance", "--seq", "power:1.5", "--N", "60", "--samples", "128", "--seed", "1", "--out", &va]), EXIT_OK);
    let (header, rows) = read_csv(&d.path().join("va.csv"));
    assert_eq!(header, ["N", "K", "s", "samples", "variance_estimate", "mc_std_error"]);
    assert_eq!(rows[0][3], "128");
}

#[test]
fn replay_detects_tampering() {
    let d = tempfile::tempdir().unwrap();
    let out = out_arg(d.path(), "e.csv");
    assert_eq!(run(&["energy", "--seq", "power:2", "--N", "80", "--gamma", "0.5,1", "--out", &out]), EXIT_OK);
    let mp = d.path().join("e.manifest.json").display().to_string();
    assert_eq!(run(&["replay", &mp, "--threads", "3"]), EXIT_OK);

    let path = d.path().join("e.csv");
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[1].split(',').map(String::from).collect();
    fields[2] = (fields[2].parse::<u64>().unwrap() + 2).to_string();
    lines[1] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    assert_eq!(run(&["replay", &mp]), EXIT_CHECK_FAILED);

    fs::write(d.path().join("bad.json"), "{\"manifest_v\": 2}").unwrap();
    assert_eq!(run(&["replay", &d.path().join("bad.json").display().to_string()]), EXIT_BAD_ARGS);
}

#[test]
fn binary_verify_and_stdout() {
    let bin = env!("CARGO_BIN_EXE_paircorr");
    let st = Command::new(bin).args(["verify", "--suite", "all"]).output().unwrap();
    assert_eq!(st.status.code(), Some(0), "{}", String::from_utf8_lossy(&st.stderr));
    let log = String::from_utf8_lossy(&st.stderr);
    assert!(log.lines().filter(|l| l.starts_with("PASS")).count() >= 20);
    assert!(!log.contains("FAIL"));

    let d = tempfile::tempdir().unwrap();
    let st = Command::new(bin)
        .current_dir(d.path())
        .args(["energy", "--seq", "power:1.5", "--N", "30", "--gamma", "1"])
        .output()
        .unwrap();
    assert_eq!(st.status.code(), Some(0));
    let text = String::from_utf8(st.stdout).unwrap();
    assert!(text.starts_with("N,gamma,total,trivial,nontrivial\n30,1.0,"));
    assert_eq!(fs::read_dir(d.path()).unwrap().count(), 0);

    let st = Command::new(bin).args(["energy", "--seq", "power:1.5", "--N", "100", "--brute"]).output().unwrap();
    assert_eq!(st.status.code(), Some(3));
    let st = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(st.status.code(), Some(0));
}
