use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mbmm(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbmm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Small three-profile raw table plus a patient file over its units.
fn fixture(dir: &Path) {
    let mut raw = String::from("GEOID,a,b,c,d,e\n");
    let mut patients = String::from("unit_id,outcome,insurance\n");
    for i in 0..45 {
        let group = i % 3;
        let vals: Vec<String> = (0..5)
            .map(|j| {
                let high = (j + group) % 3 == 0;
                let jitter = ((i * 7 + j * 13) % 10) as f64 / 100.0;
                format!("{:.2}", if high { 0.8 + jitter } else { 0.1 + jitter })
            })
            .collect();
        raw.push_str(&format!("t{i},{}\n", vals.join(",")));
        for r in 0..4 {
            let y = (i + r) % 2;
            let ins = if (i * 3 + r) % 5 < 2 { "public" } else { "private" };
            patients.push_str(&format!("t{i},{y},{ins}\n"));
        }
    }
    fs::write(dir.join("raw.csv"), raw).unwrap();
    fs::write(dir.join("patients.csv"), patients).unwrap();
    fs::write(
        dir.join("run.toml"),
        r#"
[regression.columns]
covariates = ["insurance"]
[[regression.covariates]]
name = "insurance"
levels = ["private", "public"]
[regression.mcmc]
n_iterations = 3000
burn_in_iterations = 1000
thin = 2
"#,
    )
    .unwrap();
}

fn read(p: PathBuf) -> Vec<u8> {
    fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

const FAST: [&str; 6] = ["--iterations", "3000", "--burn-in", "1000", "--thin", "2"];

#[test]
fn binarize_is_byte_identical_and_leaves_input_alone() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let before = read(d.join("raw.csv"));
    for out in ["a", "b"] {
        let o = mbmm(&["binarize", "--input", "raw.csv", "--output-dir", out], d);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["binary.csv", "thresholds.json"] {
        assert_eq!(read(d.join("a").join(f)), read(d.join("b").join(f)));
    }
    assert_eq!(read(d.join("raw.csv")), before);
    let text = String::from_utf8(read(d.join("a/binary.csv"))).unwrap();
    assert_eq!(text.lines().count(), 46);
    assert!(!d.join("a/RUN_INCOMPLETE").exists());
    let manifest: serde_json::Value =
        serde_json::from_slice(&read(d.join("a/binarize_manifest.json"))).unwrap();
    assert_eq!(manifest["config"]["seed"], 1);
    assert!(manifest["version"].is_string());
}

#[test]
fn empty_input_fails_before_writing() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("empty.csv"), "GEOID,a,b\n").unwrap();
    let o = mbmm(&["binarize", "--input", "empty.csv", "--output-dir", "out"], d);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!d.join("out").exists());
    let o = mbmm(&["fit", "--input", "missing.csv", "--output-dir", "out"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(!d.join("out").exists());
}

#[test]
fn bad_config_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "[mcmc]\nthin = 0\n").unwrap();
    let o = mbmm(&["--config", "bad.toml", "verify", "--quick"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("thin"));
}

#[test]
fn defaults_retain_1000_draws() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let o = mbmm(&["fit", "--raw", "raw.csv", "--output-dir", "out"], d);
    assert!(o.status.success(), "{}", stderr(&o));
    let samples = String::from_utf8(read(d.join("out/samples.jsonl"))).unwrap();
    assert_eq!(samples.lines().count(), 1000);
    let summary: serde_json::Value =
        serde_json::from_slice(&read(d.join("out/fit_summary.json"))).unwrap();
    assert_eq!(summary["retained_draws"], 1000);
    assert_eq!(summary["chains"].as_array().unwrap().len(), 4);
    // binarized on the fly
    assert!(d.join("out/binary.csv").exists());
    assert!(d.join("out/thresholds.json").exists());
}

#[test]
fn single_chain_is_untempered() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let mut args = vec!["fit", "--raw", "raw.csv", "--output-dir", "out", "--chains", "1"];
    args.extend(FAST);
    let o = mbmm(&args, d);
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_slice(&read(d.join("out/fit_summary.json"))).unwrap();
    assert_eq!(s["chains"].as_array().unwrap().len(), 1);
    assert_eq!(s["chains"][0]["heat"], 1.0);
    assert!(s["swap_acceptance"].is_null());
}

#[test]
fn fit_is_reproducible_across_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    for (out, threads) in [("one", "1"), ("two", "2"), ("again", "2")] {
        let mut args = vec!["fit", "--raw", "raw.csv", "--output-dir", out, "--threads", threads];
        args.extend(FAST);
        let o = mbmm(&args, d);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in [
        "samples.jsonl",
        "assignments.csv",
        "theta.csv",
        "profiles.csv",
        "profile_summary.json",
        "fit_summary.json",
    ] {
        assert_eq!(read(d.join("one").join(f)), read(d.join("two").join(f)), "{f}");
        assert_eq!(read(d.join("two").join(f)), read(d.join("again").join(f)), "{f}");
    }
}

#[test]
fn failed_fit_keeps_the_partial_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    // no retained draw has 40 occupied components, so post-processing fails
    let mut args = vec!["fit", "--raw", "raw.csv", "--output-dir", "out", "--k-map", "40"];
    args.extend(FAST);
    let o = mbmm(&args, d);
    assert!(!o.status.success());
    assert!(d.join("out/RUN_INCOMPLETE").exists());
    assert!(!d.join("out/assignments.csv").exists());
    assert!(!d.join("out/fit_manifest.json").exists());
}

#[test]
fn killed_fit_never_leaves_a_samples_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    let mut child = Command::new(env!("CARGO_BIN_EXE_mbmm"))
        .args(["fit", "--raw", "raw.csv", "--output-dir", "out", "--iterations", "5000000"])
        .current_dir(d)
        .spawn()
        .unwrap();
    let marker = d.join("out/RUN_INCOMPLETE");
    for _ in 0..200 {
        if marker.exists() {
            break;
        }
        std::thread::sleep(std::time::Duration::from_millis(25));
    }
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(marker.exists());
    assert!(!d.join("out/samples.jsonl").exists());
}

fn fit_fast(d: &Path) {
    let mut args = vec!["fit", "--raw", "raw.csv", "--output-dir", "fit"];
    args.extend(FAST);
    let o = mbmm(&args, d);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn regress_writes_reproducible_odds_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    fit_fast(d);
    let base = ["--config", "run.toml", "regress", "--patients", "patients.csv"];
    for out in ["r1", "r2"] {
        let mut args = base.to_vec();
        args.extend(["--assignments", "fit/assignments.csv", "--output-dir", out]);
        let o = mbmm(&args, d);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(read(d.join("r1/odds_ratios.csv")), read(d.join("r2/odds_ratios.csv")));
    let table = String::from_utf8(read(d.join("r1/odds_ratios.csv"))).unwrap();
    assert!(table.starts_with("name,or,lower,upper\nintercept,"));
    assert!(table.contains("insurance=public"));
    assert!(!table.contains("profile_1,"));
    let forest: serde_json::Value = serde_json::from_slice(&read(d.join("r1/forest_plot.json"))).unwrap();
    assert!(forest.as_array().unwrap().iter().all(|r| r["name"] != "intercept"));

    let mut args = base.to_vec();
    args.extend([
        "--assignments",
        "fit/assignments.csv",
        "--output-dir",
        "r3",
        "--reference-profile",
        "2",
    ]);
    let o = mbmm(&args, d);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(read(d.join("r3/odds_ratios.csv"))).unwrap();
    assert!(table.contains("profile_1,") && !table.contains("profile_2,"));

    // without --assignments the fit's own output directory is used
    let mut args = base.to_vec();
    args.extend(["--output-dir", "fit"]);
    let o = mbmm(&args, d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(read(d.join("fit/odds_ratios.csv")), read(d.join("r1/odds_ratios.csv")));
}

#[test]
fn regress_lists_unknown_units() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    fit_fast(d);
    let mut patients = fs::read_to_string(d.join("patients.csv")).unwrap();
    patients.push_str("nowhere,1,public\n");
    fs::write(d.join("patients.csv"), patients).unwrap();
    let o = mbmm(
        &[
            "--config",
            "run.toml",
            "regress",
            "--patients",
            "patients.csv",
            "--assignments",
            "fit/assignments.csv",
            "--output-dir",
            "r",
        ],
        d,
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere"));
    assert!(!d.join("r").exists());
}

#[test]
fn geojson_export_joins_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    fixture(d);
    fit_fast(d);
    let geo = serde_json::json!({
        "type": "FeatureCollection",
        "features": [
            {"type": "Feature", "properties": {"GEOID": "t0"}, "geometry": null},
            {"type": "Feature", "properties": {"GEOID": "t1"}, "geometry": null}
        ]
    });
    fs::write(d.join("tracts.geojson"), geo.to_string()).unwrap();
    let o = mbmm(
        &["export-geojson", "--geojson", "tracts.geojson", "--summary", "fit/profile_summary.json", "--output-dir", "geo"],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out: serde_json::Value = serde_json::from_slice(&read(d.join("geo/profiles.geojson"))).unwrap();
    for f in out["features"].as_array().unwrap() {
        assert!(f["properties"]["profile"].as_u64().unwrap() >= 1);
        assert!(f["properties"]["prob_1"].is_number());
    }
}

#[test]
fn quick_verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mbmm(&["verify", "--quick", "--report", "report.json"], tmp.path());
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}{}", stderr(&o));
    assert!(stdout.contains("PASS enumeration oracle #1"));
    assert!(stdout.contains("TV ="));
    let report: serde_json::Value = serde_json::from_slice(&read(tmp.path().join("report.json"))).unwrap();
    assert!(report["checks"].as_array().unwrap().len() >= 4);
}
