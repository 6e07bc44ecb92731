//! End-to-end tests of the `crossworld` binary: flag validation, exit
//! codes, file outputs, and reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use crossworld::core::Rho;
use crossworld::datagen::{gen_synthetic, load_csv, write_csv, NoiseSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crossworld"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn generate_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("a.csv");
    let p2 = dir.path().join("b.csv");
    for p in [&p1, &p2] {
        let out = run(&[
            "generate", "--n", "100", "--d", "1", "--rho", "0.5", "--seed", "7", "--out",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read_to_string(&p1).unwrap();
    let b = std::fs::read_to_string(&p2).unwrap();
    assert_eq!(a, b);
    assert!(p1.with_extension("manifest.json").exists());

    // Reload and check consistency Y = T*Y1 + (1-T)*Y0 (validated on load).
    let data = load_csv(&p1).unwrap();
    assert_eq!(data.len(), 100);
    assert!(data.has_counterfactuals());
}

#[test]
fn generate_rejects_bad_rho() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate", "--n", "10", "--d", "1", "--rho", "1.5", "--out",
        dir.path().join("x.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

const RUN_CONFIG: &str = r#"
rhos = [0.0]
dims = [1]
ns = [400]
replications = 1
n_test = 200
alpha = 0.1
seed = 5

[[methods]]
kind = "cw"

[[methods]]
kind = "naive"

[learner]
kind = "forest"
trees = 30
min_leaf = 20
subsample = 1.0
seed = 0
"#;

fn strip_runtime(csv_text: &str) -> Vec<String> {
    csv_text
        .lines()
        .map(|line| {
            let mut fields: Vec<&str> = line.split(',').collect();
            fields.remove(12);
            fields.join(",")
        })
        .collect()
}

#[test]
fn run_produces_results_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(&config, RUN_CONFIG).unwrap();
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for p in [&out_a, &out_b] {
        let out = run(&[
            "run", "--config", config.to_str().unwrap(), "--out", p.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read_to_string(&out_a).unwrap();
    assert!(a.starts_with(
        "method,rho_true,rho_used,d,n,noise_marginal,noise_copula,rep,seed,\
         coverage,avg_width,cw_loss,runtime_ms,status"
    ));
    assert!(a.contains("\ncw,"));
    assert!(a.contains("\nnaive,"));
    // Byte-identical apart from the wall-clock runtime column.
    let b = std::fs::read_to_string(&out_b).unwrap();
    assert_eq!(strip_runtime(&a), strip_runtime(&b));
    let manifest = std::fs::read_to_string(out_a.with_extension("manifest.json")).unwrap();
    assert!(manifest.contains("\"command\": \"run\""));
}

#[test]
fn run_rejects_unknown_method() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        "rhos = [0.0]\n[[methods]]\nkind = \"quantum\"\n",
    )
    .unwrap();
    let out = run(&[
        "run", "--config", config.to_str().unwrap(), "--out",
        dir.path().join("r.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("quantum"), "{}", stderr(&out));
}

fn write_dataset(path: &Path, rho: f64, sigma1: f64, n: usize, seed: u64) {
    let r = Rho::new(rho).unwrap();
    let spec = NoiseSpec { sigma1, ..NoiseSpec::gaussian(r) };
    let data = gen_synthetic(n, 1, r, &spec, seed).unwrap();
    write_csv(&data, path).unwrap();
}

#[test]
fn rho_diagnose_variance_decomposition() {
    let out = run(&["rho-diagnose", "--var-h", "1", "--var-eps", "3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("0.25"), "{}", stdout(&out));
}

#[test]
fn rho_diagnose_additive_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("additive.csv");
    // rho = 1 with equal scales makes Y1 = Y0 + tau(X) exactly.
    write_dataset(&path, 1.0, 1.0, 20_000, 3);
    let report = dir.path().join("report.csv");
    let out = run(&[
        "rho-diagnose", "--data", path.to_str().unwrap(), "--cond-cols", "1", "--centers",
        "0.0", "--delta", "0.05", "--out", report.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(&report).unwrap();
    let line = text.lines().nth(1).unwrap();
    let rho_hat: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
    assert!(rho_hat >= 0.95, "rho_hat = {rho_hat}");
}

#[test]
fn rho_diagnose_factual_only_explains_unidentifiability() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("factual.csv");
    let r = Rho::new(0.0).unwrap();
    let mut data = gen_synthetic(200, 1, r, &NoiseSpec::gaussian(r), 4).unwrap();
    data.y0 = None;
    data.y1 = None;
    data.tau = None;
    write_csv(&data, &path).unwrap();
    let out = run(&[
        "rho-diagnose", "--data", path.to_str().unwrap(), "--cond-cols", "1", "--centers", "0",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("unidentifiable"), "{}", stderr(&out));
}

#[test]
fn interval_rejects_bad_flags() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&path, 0.0, 2.0, 300, 5);
    let out = run(&[
        "interval", "--data", path.to_str().unwrap(), "--x", "0.0", "--rho", "-2",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = run(&[
        "interval", "--data", path.to_str().unwrap(), "--x", "0.0,1.0", "--rho", "0",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let out = run(&[
        "interval", "--data", path.to_str().unwrap(), "--x", "0.0", "--rho", "0", "--method",
        "bogus",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

fn parse_interval(text: &str) -> (f64, f64) {
    let line = text
        .lines()
        .find(|l| l.starts_with("interval = ["))
        .expect("interval line");
    let inner = line
        .trim_start_matches("interval = [")
        .trim_end_matches(']');
    let mut parts = inner.split(", ");
    (
        parts.next().unwrap().parse().unwrap(),
        parts.next().unwrap().parse().unwrap(),
    )
}

#[test]
fn interval_cw_ci_with_c_zero_equals_cw() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&path, 0.5, 2.0, 600, 6);
    let base = [
        "interval", "--data", path.to_str().unwrap(), "--x", "0.2", "--rho", "0.5", "--trees",
        "40", "--seed", "9",
    ];
    let cw = run(&[&base[..], &["--method", "cw"]].concat());
    assert!(cw.status.success(), "{}", stderr(&cw));
    let ci = run(&[&base[..], &["--method", "cw+ci", "--c", "0", "--bootstrap", "50"]].concat());
    assert!(ci.status.success(), "{}", stderr(&ci));
    assert_eq!(parse_interval(&stdout(&cw)), parse_interval(&stdout(&ci)));
}

#[test]
fn interval_cw_tracks_the_gaussian_oracle() {
    // rho = 0, sigma0 = 1, sigma1 = 2: the oracle ITE interval at x is
    // tau(x) +/- 1.6449 * sqrt(5). CW(0) on well-fitted bands combines
    // per-arm 0.95-widths through the Euclidean norm, matching that
    // half-width up to learner and conformal error.
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_dataset(&path, 0.0, 2.0, 6000, 7);
    let out = run(&[
        "interval", "--data", path.to_str().unwrap(), "--x", "0.3", "--rho", "0", "--method",
        "cw", "--trees", "150", "--seed", "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (lo, hi) = parse_interval(&stdout(&out));
    let data = load_csv(&path).unwrap();
    // True tau at x = 0.3 from the dataset's nearest rows.
    let tau = data.tau.as_ref().unwrap();
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| {
        (data.x[a][0] - 0.3).abs().total_cmp(&(data.x[b][0] - 0.3).abs())
    });
    let tau_near = tau[idx[0]];
    let half = 1.6449 * 5f64.sqrt();
    let center = 0.5 * (lo + hi);
    assert!((center - tau_near).abs() < 1.2, "center {center} vs tau {tau_near}");
    let width = hi - lo;
    assert!(
        (width - 2.0 * half).abs() < 0.2 * 2.0 * half,
        "width {width} vs oracle {}",
        2.0 * half
    );
}
