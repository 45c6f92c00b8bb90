use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use msmcs_cli::bundle::parse_histogram;
use msmcs_cli::HISTOGRAM_HEADER;

fn msmcs(args: &[&str], workers: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_msmcs"));
    cmd.args(args);
    if let Some(w) = workers {
        cmd.env("MSMCS_WORKERS", w);
    }
    cmd.output().expect("failed to launch msmcs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn small_chi_square(dir: &Path, seed: &str, workers: Option<&str>) -> Output {
    msmcs(
        &[
            "run",
            "--model",
            "chi_square",
            "--iterations",
            "4",
            "--particles",
            "600",
            "--kernel-steps",
            "2",
            "--seed",
            seed,
            "--out",
            dir.to_str().unwrap(),
        ],
        workers,
    )
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn run_writes_bundle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("a");
    ok(&small_chi_square(&out, "3", None));
    let csv = read(&out, "histogram.csv");
    assert_eq!(csv.lines().next().unwrap(), HISTOGRAM_HEADER);
    let rows = parse_histogram(&csv).unwrap();
    assert_eq!(rows.len(), 33);
    let total: f64 = rows.iter().map(|r| r.prob).sum();
    assert!((total - 1.0).abs() < 1e-10);
    let diag: serde_json::Value = serde_json::from_str(&read(&out, "diagnostics.json")).unwrap();
    assert_eq!(diag["sampler"], "msmcs");
    assert_eq!(diag["iterations"].as_array().unwrap().len(), 4);
    assert!(read(&out, "manifest.toml").contains("seed = 3"));
}

#[test]
fn same_seed_same_bytes_and_echo_reproduces() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&small_chi_square(&a, "11", None));
    ok(&small_chi_square(&b, "11", None));
    assert_eq!(read(&a, "histogram.csv"), read(&b, "histogram.csv"));

    // Re-run from the echoed manifest into a third directory.
    let c = tmp.path().join("c");
    let manifest = tmp.path().join("echo.toml");
    fs::write(&manifest, read(&a, "manifest.toml")).unwrap();
    ok(&msmcs(
        &[
            "run",
            "--manifest",
            manifest.to_str().unwrap(),
            "--out",
            c.to_str().unwrap(),
        ],
        None,
    ));
    assert_eq!(read(&a, "histogram.csv"), read(&c, "histogram.csv"));
    assert_eq!(read(&a, "diagnostics.json"), read(&c, "diagnostics.json"));

    let d = tmp.path().join("d");
    ok(&small_chi_square(&d, "12", None));
    assert_ne!(read(&a, "histogram.csv"), read(&d, "histogram.csv"));
}

#[test]
fn worker_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for w in ["1", "4", "0"] {
        let dir = tmp.path().join(format!("w{w}"));
        ok(&small_chi_square(&dir, "5", Some(w)));
        outputs.push(read(&dir, "histogram.csv"));
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn copula_tail_queries_in_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.toml");
    let out = tmp.path().join("out");
    fs::write(
        &manifest,
        format!(
            "model = \"copula\"\nobligors = 20\niterations = 3\nparticles = 400\nkernel_steps = 1\nout = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let stdout = ok(&msmcs(
        &["run", "--manifest", manifest.to_str().unwrap()],
        None,
    ));
    assert!(stdout.contains("P(L > 2)"), "{stdout}");
    let diag: serde_json::Value = serde_json::from_str(&read(&out, "diagnostics.json")).unwrap();
    let queries = diag["tail_queries"].as_array().unwrap();
    assert_eq!(queries.len(), 4);
    let fractions: Vec<f64> = queries
        .iter()
        .map(|q| q["fraction"].as_f64().unwrap())
        .collect();
    assert_eq!(fractions, vec![0.1, 0.2, 0.25, 0.3]);
    let probs: Vec<f64> = queries
        .iter()
        .map(|q| q["probability"].as_f64().unwrap())
        .collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));
}

#[test]
fn invalid_bins_names_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let out = msmcs(
        &[
            "run",
            "--model",
            "chi_square",
            "--bins",
            "-5",
            "--out",
            tmp.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bins"));
}

#[test]
fn compare_and_tail() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    ok(&small_chi_square(&a, "2", None));

    let self_cmp = ok(&msmcs(
        &[
            "compare",
            a.to_str().unwrap(),
            "--reference",
            a.to_str().unwrap(),
        ],
        None,
    ));
    for line in self_cmp.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[3], "0");
    }

    let analytic = ok(&msmcs(
        &["compare", a.to_str().unwrap(), "--chi-square", "20"],
        None,
    ));
    let at_twenty: Vec<&str> = analytic
        .lines()
        .find(|l| l.starts_with("21,"))
        .unwrap()
        .split(',')
        .collect();
    let reference: f64 = at_twenty[2].parse().unwrap();
    // chi-square(20) density at the bin center 21
    assert!((reference - 0.05886).abs() < 1e-4, "{reference}");

    let tail = ok(&msmcs(
        &["tail", a.to_str().unwrap(), "--threshold", "4,70"],
        None,
    ));
    let lines: Vec<&str> = tail.lines().collect();
    assert_eq!(lines.len(), 2);
    let value = |l: &str| -> f64 { l.rsplit("= ").next().unwrap().parse().unwrap() };
    assert!((value(lines[0]) - 1.0).abs() < 1e-10, "{}", lines[0]);
    assert_eq!(value(lines[1]), 0.0);

    let outside = msmcs(&["tail", a.to_str().unwrap(), "--threshold", "80"], None);
    assert!(!outside.status.success());
}

#[test]
fn compare_rejects_mismatched_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&small_chi_square(&a, "1", None));
    ok(&msmcs(
        &[
            "run",
            "--model",
            "chi_square",
            "--iterations",
            "2",
            "--particles",
            "300",
            "--bins",
            "20",
            "--out",
            b.to_str().unwrap(),
        ],
        None,
    ));
    let out = msmcs(
        &[
            "compare",
            a.to_str().unwrap(),
            "--reference",
            b.to_str().unwrap(),
        ],
        None,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid mismatch"));
}
