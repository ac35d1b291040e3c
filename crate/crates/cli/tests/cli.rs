use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn chargecap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_chargecap"))
        .args(args)
        .env("NO_COLOR", "1")
        .output()
        .expect("binary runs")
}

fn scenario(name: &str) -> String {
    scenarios().join(name).to_string_lossy().into_owned()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

struct Csv {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Csv {
    fn parse(text: &str) -> Self {
        let mut lines = text
            .lines()
            .map(|l| l.split(',').map(String::from).collect::<Vec<_>>());
        let header = lines.next().expect("header");
        Self {
            header,
            rows: lines.collect(),
        }
    }

    fn column(&self, name: &str) -> Vec<f64> {
        let i = self
            .header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].parse().unwrap()).collect()
    }

    fn text(&self, name: &str) -> Vec<String> {
        let i = self.header.iter().position(|h| h == name).unwrap();
        self.rows.iter().map(|r| r[i].clone()).collect()
    }
}

fn stdout_csv(out: &Output) -> Csv {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    Csv::parse(&String::from_utf8(out.stdout.clone()).unwrap())
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(chargecap(&["--help"]).status.code(), Some(0));
    assert_eq!(chargecap(&["--version"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(chargecap(&[]).status.code(), Some(1));
    assert_eq!(chargecap(&["lolp"]).status.code(), Some(1));
    let out = chargecap(&["lolp", "-c", &scenario("toy.json"), "--sweep-lambda", "1:2"]);
    assert_eq!(out.status.code(), Some(1));
    let out = chargecap(&["lolp", "-c", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("/nonexistent/cfg.json"));
}

#[test]
fn validate_accepts_bundled_scenarios() {
    for name in [
        "toy.json",
        "pricing.json",
        "pricing-profile.json",
        "peak.json",
        "peak-profile.json",
    ] {
        let out = chargecap(&["validate", "-c", &scenario(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", stderr(&out));
        assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok:"));
    }
}

#[test]
fn malformed_config_points_at_line_and_field() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "bad.json",
        "{\n  \"capacity\": 10,\n  \"classes\": [\n    {\"b\": 1, \"mu\": \"x\", \"lambda\": 1}\n  ]\n}\n",
    );
    let out = chargecap(&["lolp", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("bad.json:4:"), "{err}");
    assert!(err.contains("classes[0].mu"), "{err}");
}

#[test]
fn invalid_values_are_listed_and_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "bad.json",
        r#"{"capacity": 10, "classes": [{"b": 2.5, "mu": 1, "lambda": 1}, {"b": 1, "mu": 0, "lambda": 1}]}"#,
    );
    let out = chargecap(&["validate", "-c", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(
        err.contains("class 1: demand b must be an integer"),
        "{err}"
    );
    assert!(
        err.contains("class 2: service rate mu must be positive"),
        "{err}"
    );
}

#[test]
fn oversized_class_is_a_warning() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "big.json",
        r#"{"capacity": 10, "classes": [{"b": 20, "mu": 1, "lambda": 1}, {"b": 1, "mu": 1, "lambda": 1}]}"#,
    );
    let out = chargecap(&["lolp", "-c", &cfg]);
    assert!(stderr(&out).contains("warning: class 1 can never be served"));
    let t = stdout_csv(&out);
    assert_eq!(t.column("beta_1"), vec![1.0]);
}

#[test]
fn lolp_single_point() {
    let t = stdout_csv(&chargecap(&["lolp", "-c", &scenario("toy.json")]));
    assert_eq!(t.rows.len(), 1);
    let beta = t.column("beta_1")[0];
    assert!((beta - 0.06997102797).abs() < 1e-10, "{beta}");
    let exact = stdout_csv(&chargecap(&[
        "lolp",
        "-c",
        &scenario("toy.json"),
        "--capacity",
        "60",
        "--exact",
    ]));
    let fast = stdout_csv(&chargecap(&[
        "lolp",
        "-c",
        &scenario("toy.json"),
        "--capacity",
        "60",
    ]));
    for j in ["beta_1", "beta_2", "beta_3"] {
        assert!((exact.column(j)[0] - fast.column(j)[0]).abs() < 1e-9);
    }
}

#[test]
fn exact_enumeration_refuses_large_systems() {
    let out = chargecap(&[
        "lolp",
        "-c",
        &scenario("toy.json"),
        "--capacity",
        "20000",
        "--exact",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).contains("enumeration bound"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn lambda_sweep_blocking_rises() {
    let t = stdout_csv(&chargecap(&[
        "lolp",
        "-c",
        &scenario("toy.json"),
        "--sweep-lambda",
        "1:80:80",
        "--split",
        "equal",
    ]));
    assert_eq!(t.rows.len(), 80);
    let totals = t.column("total_lambda");
    assert!(totals.windows(2).all(|w| w[0] < w[1]));
    let l1 = t.column("lambda_1");
    assert!((l1[2] - 1.0).abs() < 1e-12);
    for j in ["beta_1", "beta_2", "beta_3"] {
        assert!(t.column(j).windows(2).all(|w| w[0] < w[1]), "{j}");
    }
}

#[test]
fn capacity_sweep_blocking_falls() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "fig.json",
        r#"{"capacity": 1000, "classes": [
            {"b": 50, "mu": 3.0, "lambda": 10}, {"b": 7, "mu": 0.42, "lambda": 10},
            {"b": 5, "mu": 0.2, "lambda": 10}]}"#,
    );
    let t = stdout_csv(&chargecap(&[
        "lolp",
        "-c",
        &cfg,
        "--sweep-capacity",
        "500:1000:501",
    ]));
    assert_eq!(t.rows.len(), 501);
    assert!(t.column("capacity").windows(2).all(|w| w[1] == w[0] + 1.0));
    for j in ["beta_1", "beta_2", "beta_3"] {
        assert!(t.column(j).windows(2).all(|w| w[1] <= w[0]), "{j}");
    }
}

#[test]
fn two_dimensional_sweep_is_sorted() {
    let t = stdout_csv(&chargecap(&[
        "lolp",
        "-c",
        &scenario("toy.json"),
        "--sweep-capacity",
        "900:1000:3",
        "--sweep-lambda",
        "10:30:3",
    ]));
    let keys: Vec<(f64, f64)> = t
        .column("capacity")
        .into_iter()
        .zip(t.column("total_lambda"))
        .collect();
    assert_eq!(keys.len(), 9);
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn provision_peak_setting() {
    let t = stdout_csv(&chargecap(&["provision", "-c", &scenario("peak.json")]));
    assert_eq!(t.column("capacity_exact"), vec![582.0]);
    assert_eq!(t.column("dominant_class"), vec![1.0]);
    assert!(t.column("beta_1")[0] <= 0.04 && t.column("beta_2")[0] <= 0.01);
}

#[test]
fn provision_strict_targets_save_nothing() {
    let t = stdout_csv(&chargecap(&[
        "provision",
        "-c",
        &scenario("peak.json"),
        "--delta",
        "1e-6,1e-6",
    ]));
    assert_eq!(t.column("savings_pct"), vec![0.0]);
}

#[test]
fn provision_grid_dominant_class() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "grid.json",
        r#"{"capacity": 0, "classes": [{"b": 50, "mu": 3.0, "lambda": 5}, {"b": 7, "mu": 0.42, "lambda": 5}]}"#,
    );
    let t = stdout_csv(&chargecap(&[
        "provision",
        "-c",
        &cfg,
        "--delta-grid",
        "0.001:0.05:5",
    ]));
    assert_eq!(t.rows.len(), 25);
    let (d1, d2) = (t.column("delta_1"), t.column("delta_2"));
    let keys: Vec<(f64, f64)> = d1.iter().copied().zip(d2.iter().copied()).collect();
    assert!(keys.windows(2).all(|w| w[0] < w[1]));
    let dominant = t.column("dominant_class");
    for i in 0..25 {
        if d1[i] / 50.0 < d2[i] / 7.0 {
            assert_eq!(dominant[i], 1.0);
        }
    }
    assert!(t.text("error").iter().all(String::is_empty));
}

#[test]
fn provision_without_targets_is_a_usage_error() {
    let out = chargecap(&["provision", "-c", &scenario("toy.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no targets"));
}

#[test]
fn price_single_period() {
    let t = stdout_csv(&chargecap(&["price", "-c", &scenario("pricing.json")]));
    let close = |col: &str, want: f64, tol: f64| {
        let got = t.column(col)[0];
        assert!((got - want).abs() <= tol, "{col}: {got}");
    };
    close("lambda_1", 8.6638, 0.02);
    close("lambda_2", 5.2001, 0.02);
    close("price_1", 0.3197, 0.005);
    close("price_2", 0.2211, 0.005);
    close("welfare", 59.1238, 0.05);
    assert_eq!(t.text("converged"), vec!["true"]);
}

#[test]
fn price_profile_moves_with_capacity() {
    let t = stdout_csv(&chargecap(&[
        "price",
        "-c",
        &scenario("pricing-profile.json"),
    ]));
    assert_eq!(t.rows.len(), 9);
    let (c, w, l1) = (
        t.column("capacity"),
        t.column("welfare"),
        t.column("lambda_1"),
    );
    for i in 0..8 {
        if c[i + 1] > c[i] {
            assert!(w[i + 1] > w[i] && l1[i + 1] > l1[i]);
        } else if c[i + 1] < c[i] {
            assert!(w[i + 1] < w[i] && l1[i + 1] < l1[i]);
        }
    }
}

#[test]
fn price_without_blocking_weight_is_free() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "free.json",
        r#"{"capacity": 500, "classes": [{"b": 50, "mu": 3.0, "lambda": 0}, {"b": 7, "mu": 0.42, "lambda": 0}],
            "weights": {"omega": [20, 10], "theta": [0, 0]}}"#,
    );
    let out = chargecap(&["price", "-c", &cfg, "--customers", "10"]);
    let t = Csv::parse(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(t.column("price_1"), vec![0.0]);
    assert_eq!(t.column("price_2"), vec![0.0]);
    assert_eq!(t.header.last().unwrap(), "lambda_per_customer_2");
}

#[test]
fn price_needs_weights() {
    let out = chargecap(&["price", "-c", &scenario("toy.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("weights"));
}

#[test]
fn simulate_matches_analytic_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |sub: &str| {
        let out_dir = dir.path().join(sub);
        let out = chargecap(&[
            "simulate",
            "-c",
            &scenario("toy.json"),
            "--horizon",
            "3000",
            "--warmup",
            "300",
            "--seed",
            "42",
            "--reps",
            "10",
            "--check",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    let csv_a = fs::read(a.join("simulate.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("simulate.csv")).unwrap());
    let t = Csv::parse(std::str::from_utf8(&csv_a).unwrap());
    assert_eq!(t.text("within"), vec!["true"; 3]);
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(a.join("simulate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["seed"], 42);
    assert!(manifest["input_digest"]
        .as_str()
        .unwrap()
        .starts_with("sha256:"));
    assert!(manifest["outputs"][0]
        .as_str()
        .unwrap()
        .ends_with("simulate.csv"));
}

#[test]
fn simulate_zero_rates() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "idle.json",
        r#"{"capacity": 10, "classes": [{"b": 2, "mu": 1, "lambda": 0}, {"b": 3, "mu": 1, "lambda": 0}]}"#,
    );
    let t = stdout_csv(&chargecap(&[
        "simulate",
        "-c",
        &cfg,
        "--horizon",
        "100",
        "--reps",
        "2",
    ]));
    assert_eq!(t.column("arrivals"), vec![0.0, 0.0]);
    assert_eq!(t.column("beta_hat"), vec![0.0, 0.0]);
}

#[test]
fn failed_check_exits_two() {
    // So short a run sees no arrivals, far from the analytic LoLP of 1/11.
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "short.json",
        r#"{"capacity": 1, "classes": [{"b": 1, "mu": 1, "lambda": 0.1}]}"#,
    );
    let out = chargecap(&[
        "simulate",
        "-c",
        &cfg,
        "--horizon",
        "0.01",
        "--warmup",
        "0",
        "--reps",
        "1",
        "--check",
    ]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    let t = Csv::parse(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(t.text("within"), vec!["false"]);
}

#[test]
fn flags_override_config_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "seeded.json",
        r#"{"capacity": 5, "classes": [{"b": 1, "mu": 1, "lambda": 3}],
            "simulation": {"horizon": 50, "seed": 3, "replications": 2}}"#,
    );
    let run = |extra: &[&str]| {
        let out_dir = dir.path().join(format!("o{}", extra.len()));
        let mut args = vec!["simulate", "-c", &cfg, "--out", out_dir.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(chargecap(&args).status.success());
        let m: serde_json::Value =
            serde_json::from_slice(&fs::read(out_dir.join("simulate.manifest.json")).unwrap())
                .unwrap();
        m["seed"].as_u64().unwrap()
    };
    assert_eq!(run(&[]), 3);
    assert_eq!(run(&["--seed", "4"]), 4);
}

#[test]
fn digest_is_stable_under_key_reordering() {
    let dir = TempDir::new().unwrap();
    let a = write_config(
        &dir,
        "a.json",
        r#"{"capacity": 5, "classes": [{"b": 1, "mu": 1, "lambda": 3}]}"#,
    );
    let b = write_config(
        &dir,
        "b.json",
        "{\"classes\": [{\"lambda\": 3, \"b\": 1, \"mu\": 1}],\n \"capacity\": 5}",
    );
    let digest = |cfg: &str, sub: &str| {
        let out_dir = dir.path().join(sub);
        assert!(chargecap(&[
            "lolp",
            "-c",
            cfg,
            "--out",
            out_dir.to_str().unwrap(),
            "--format",
            "json"
        ])
        .status
        .success());
        let m: serde_json::Value =
            serde_json::from_slice(&fs::read(out_dir.join("lolp.manifest.json")).unwrap()).unwrap();
        assert!(out_dir.join("lolp.json").exists());
        m["input_digest"].as_str().unwrap().to_string()
    };
    assert_eq!(digest(&a, "da"), digest(&b, "db"));
}
