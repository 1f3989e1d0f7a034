use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/cli");

fn sfsir(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfsir"))
        .args(args)
        .env("SFSIR_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn fixture(name: &str) -> String {
    format!("{FIXTURES}/{name}")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const FIXED: [&str; 14] = [
    "--scheme", "subj", "--grid-size", "41", "--h-mu", "0.15", "--h-c", "0.25", "--b", "0.35", "--h-t", "0.2", "--h-y",
    "0.5",
];

fn fit_fixture(out: &Path, extra: &[&str]) -> Output {
    let (obs, resp) = (fixture("observations.csv"), fixture("responses.csv"));
    let mut args = vec!["fit", "--observations", &obs, "--responses", &resp, "--out", path(out)];
    args.extend(FIXED);
    args.extend(extra);
    sfsir(&args)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * b.abs().max(1.0)
}

fn assert_csv_close(actual: &Path, expected: &Path) {
    let (a, e) = (fs::read_to_string(actual).unwrap(), fs::read_to_string(expected).unwrap());
    let (a, e): (Vec<&str>, Vec<&str>) = (a.lines().collect(), e.lines().collect());
    assert_eq!(a.len(), e.len(), "{} row count", actual.display());
    assert_eq!(a[0], e[0], "{} header", actual.display());
    for (row, (la, le)) in a.iter().zip(&e).enumerate().skip(1) {
        for (x, y) in la.split(',').zip(le.split(',')) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!(close(x, y), "{} row {row}: {x} vs {y}", actual.display());
        }
    }
}

fn assert_json_close(a: &serde_json::Value, e: &serde_json::Value, at: &str) {
    use serde_json::Value;
    match (a, e) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!(close(x, y), "{at}: {x} vs {y}");
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{at}");
            for (i, (u, v)) in x.iter().zip(y).enumerate() {
                assert_json_close(u, v, &format!("{at}[{i}]"));
            }
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>(), "{at}");
            for (k, u) in x {
                assert_json_close(u, &y[k], &format!("{at}.{k}"));
            }
        }
        _ => assert_eq!(a, e, "{at}"),
    }
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn fit_matches_golden_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fit_fixture(tmp.path(), &[]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let golden = Path::new(FIXTURES).join("golden");
    for name in ["mean", "gamma", "r0", "nugget", "re", "directions_sfsir", "directions_fsir"] {
        let f = format!("{name}.csv");
        assert_csv_close(&tmp.path().join(&f), &golden.join(&f));
    }
    let read = |p: PathBuf| serde_json::from_str::<serde_json::Value>(&fs::read_to_string(p).unwrap()).unwrap();
    assert_json_close(
        &read(tmp.path().join("eigenvalues.json")),
        &read(golden.join("eigenvalues.json")),
        "eigenvalues",
    );

    let manifest = read(tmp.path().join("manifest.json"));
    assert_eq!(manifest["command"], "fit");
    assert_eq!(manifest["config"]["fit"]["grid_size"], 41);
    assert!(manifest["outputs"].as_array().unwrap().iter().any(|o| o == "r0.csv"));
}

#[test]
fn methods_differ_only_in_whitening_and_directions() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert!(fit_fixture(a.path(), &["--method", "sfsir"]).status.success());
    assert!(fit_fixture(b.path(), &["--method", "fsir"]).status.success());
    for f in ["mean.csv", "gamma.csv", "re.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert!(a.path().join("r0.csv").exists() && a.path().join("nugget.csv").exists());
    assert!(!b.path().join("r0.csv").exists() && !b.path().join("nugget.csv").exists());
    assert_ne!(
        fs::read(a.path().join("directions_sfsir.csv")).unwrap(),
        fs::read(b.path().join("directions_fsir.csv")).unwrap()
    );
}

#[test]
fn missing_responses_file_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let obs = fixture("observations.csv");
    let missing = tmp.path().join("nope.csv");
    let out = sfsir(&["fit", "--observations", &obs, "--responses", path(&missing), "--out", path(tmp.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.csv"));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(sfsir(&["fit"]).status.code(), Some(1));
    assert_eq!(sfsir(&["study", "--out", "x", "--scenario", "sideways"]).status.code(), Some(1));
}

#[test]
fn simulate_emits_four_files_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let out = sfsir(&["simulate", "--out", path(dir), "--n", "25", "--seed", "12", "--density", "dense"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let names: Vec<String> = files(a.path())
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names, ["manifest.json", "observations.csv", "responses.csv", "truth.json"]);
    for n in &names[1..] {
        assert_eq!(fs::read(a.path().join(n)).unwrap(), fs::read(b.path().join(n)).unwrap(), "{n}");
    }
    let c = tempfile::tempdir().unwrap();
    sfsir(&["simulate", "--out", path(c.path()), "--n", "25", "--seed", "13", "--density", "dense"]);
    assert_ne!(
        fs::read(a.path().join("observations.csv")).unwrap(),
        fs::read(c.path().join("observations.csv")).unwrap()
    );
}

#[test]
fn malformed_config_reports_byte_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("sim.json");
    fs::write(&cfg, "{\"n\": 30, \"seed\": }").unwrap();
    let out = sfsir(&["simulate", "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte offset 18"));

    fs::write(&cfg, "{\"n\": 1, \"noise_sd\": -1, \"fixed_sites\": true}").unwrap();
    let out = sfsir(&["simulate", "--config", path(&cfg), "--out", path(&tmp.path().join("o"))]);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(2));
    assert!(err.contains("n must be at least 2") && err.contains("noise_sd"), "{err}");
}

fn small_study(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "study", "--out", path(out), "--n", "20", "--reps", "2", "--seed", "4", "--scenario", "sparse+nugget", "--scheme",
        "subj",
    ];
    args.extend(extra);
    sfsir(&args)
}

#[test]
fn study_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let out = small_study(dir, &["--emit-plot-data"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let fa = files(a.path());
    assert_eq!(fa.len(), 6);
    for f in fa.iter().filter(|f| !f.ends_with("manifest.json")) {
        let name = f.file_name().unwrap();
        assert_eq!(fs::read(f).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    let metrics = fs::read_to_string(a.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("scenario,scheme,method,isb,ivar,mise\n"));
    assert_eq!(metrics.lines().count(), 3);
    let table = fs::read_to_string(a.path().join("table.txt")).unwrap();
    assert!(table.contains("FLM") && table.contains("N/A"));
}

#[test]
fn study_rejects_a_single_replication() {
    let tmp = tempfile::tempdir().unwrap();
    let out = sfsir(&["study", "--out", path(tmp.path()), "--reps", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reps must be at least 2"));
}

#[test]
fn study_below_success_threshold_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("study.json");
    // a spatial bandwidth far below every site distance leaves R̂(0) without pairs
    fs::write(
        &cfg,
        r#"{"fit": {"bandwidths": {"h_mu": 0.2, "h_c": 0.3, "b": 1e-9, "h_t": 0.3, "h_y": 0.5}}}"#,
    )
    .unwrap();
    let out = small_study(&tmp.path().join("o"), &["--config", path(&cfg)]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let failures = fs::read_to_string(tmp.path().join("o/failures.csv")).unwrap();
    assert_eq!(failures.lines().count(), 3);
}

#[test]
fn geometry_reports_spacing() {
    let tmp = tempfile::tempdir().unwrap();
    let (obs, resp) = (fixture("observations.csv"), fixture("responses.csv"));
    let out = sfsir(&["geometry", "--observations", &obs, "--responses", &resp, "--out", path(tmp.path())]);
    assert!(out.status.success());
    let g: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(g["n"], 20);
    assert!(g["delta_n"].as_f64().unwrap() <= g["big_delta_n"].as_f64().unwrap());
    assert!(tmp.path().join("manifest.json").exists());
}
