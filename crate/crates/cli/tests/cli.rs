use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const CHANNEL: &str = "\
geometry.d0 = 10e-6
geometry.D0 = 100e-6
geometry.r0 = 20e-6
geometry.D = 80e-12
";

fn annulus(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_annulus"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn with_config(text: &str) -> (TempDir, String) {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, text).unwrap();
    let p = path.to_str().unwrap().to_string();
    (dir, p)
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn eigen_corner_value() {
    let dir = TempDir::new().unwrap();
    let out = annulus(dir.path(), &["eigen", "--alpha", "0.1", "--orders", "1", "--roots", "1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(dir.path(), "eigen.csv");
    let rows = csv_rows(&csv);
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0][0], rows[0][1]), (0.0, 1.0));
    assert!((rows[0][2] - 1.103).abs() < 5e-4);
    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "eigen.meta.json")).unwrap();
    assert_eq!(meta["version"], env!("CARGO_PKG_VERSION"));
    assert!(meta["modeset_digest"].as_str().unwrap().len() == 16);
}

#[test]
fn eigen_table_matches_reference_grid_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = ["eigen", "--alpha", "0.1", "--orders", "60", "--roots", "13", "--paper-table"];
    assert!(annulus(a.path(), &args).status.success());
    assert!(annulus(b.path(), &args).status.success());
    assert_eq!(read(a.path(), "eigen.csv"), read(b.path(), "eigen.csv"));
    assert_eq!(csv_rows(&read(a.path(), "eigen.csv")).len(), 780);
    let reference = include_str!("../../core/tests/data/beta_alpha_0.1.txt");
    let ours = read(a.path(), "eigen_table.txt");
    let grid = |t: &str| -> Vec<Vec<f64>> {
        t.lines()
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split_whitespace().skip(1).map(|v| v.parse().unwrap()).collect())
            .collect()
    };
    let (x, y) = (grid(reference), grid(&ours));
    assert_eq!(x.len(), 60);
    for (r, s) in x.iter().zip(&y) {
        for (u, v) in r.iter().zip(s) {
            // Both sides are rounded to three decimals.
            assert!((u - v).abs() <= 1.001e-3, "{u} vs {v}");
        }
    }
}

#[test]
fn impulse_full_window_equals_plain_and_tail_decays() {
    let (_dir, cfg) = with_config(CHANNEL);
    let plain = TempDir::new().unwrap();
    let window = TempDir::new().unwrap();
    let times = "1,2,5,10,50,200,1000,3000";
    assert!(annulus(plain.path(), &["--config", &cfg, "impulse", "--times", times]).status.success());
    let out = annulus(window.path(), &["--config", &cfg, "impulse", "--times", times, "--theta-f", "3.141592653589793"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = csv_rows(&read(plain.path(), "impulse.csv"));
    let b = csv_rows(&read(window.path(), "impulse.csv"));
    for (x, y) in a.iter().zip(&b) {
        assert!((x[1] - y[1]).abs() <= 1e-12 * x[1].abs());
        assert!((x[2] - y[2]).abs() <= 1e-12);
    }
    // Monotone decay of the tail and cumulative approaching one.
    assert!(a[3..].windows(2).all(|w| w[1][1] < w[0][1]));
    assert!((a.last().unwrap()[2] - 1.0).abs() < 1e-9);
    let meta: serde_json::Value = serde_json::from_str(&read(plain.path(), "impulse.meta.json")).unwrap();
    assert!(meta["certificate"]["t_min"].as_f64().unwrap() <= 1.0);
    assert_eq!(meta["config"]["geometry.r0"], "20e-6");
}

#[test]
fn impulse_refuses_uncertified_times() {
    let (dir, cfg) = with_config(&format!("{CHANNEL}truncation.t_min = 1\n"));
    let out = annulus(dir.path(), &["--config", &cfg, "impulse", "--times", "0.01,1"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("earliest trusted time"), "{err}");
}

#[test]
fn config_errors_have_their_own_exit_codes() {
    let (dir, cfg) = with_config(&format!("{CHANNEL}geometry.typo = 1\n"));
    assert_eq!(annulus(dir.path(), &["--config", &cfg, "impulse"]).status.code(), Some(2));
    let (dir, cfg) = with_config("geometry.d0 = 10um\n");
    assert_eq!(annulus(dir.path(), &["--config", &cfg, "impulse"]).status.code(), Some(2));
    let (dir, cfg) = with_config(&format!("{CHANNEL}geometry.h = 1e-5\ngeometry.h0 = 3e-5\n"));
    assert_eq!(annulus(dir.path(), &["--config", &cfg, "simulate"]).status.code(), Some(3));
    // The step guard fires before any work.
    let (dir, cfg) = with_config(&format!("{CHANNEL}mc.n_particles = 10\nmc.t_max = 1\nmc.dt = 0.5\n"));
    assert_eq!(annulus(dir.path(), &["--config", &cfg, "simulate"]).status.code(), Some(3));
    assert_eq!(annulus(dir.path(), &["bogus"]).status.code(), Some(2));
}

#[test]
fn simulate_is_reproducible_across_thread_counts() {
    let cfg_text = format!("{CHANNEL}mc.n_particles = 400\nmc.t_max = 2\nmc.bin_width = 0.1\n");
    let (dir, cfg) = with_config(&cfg_text);
    let one = dir.path().join("one");
    let two = dir.path().join("two");
    assert!(annulus(&one, &["--config", &cfg, "--seed", "9", "--threads", "1", "simulate"]).status.success());
    assert!(annulus(&two, &["--config", &cfg, "--seed", "9", "--threads", "3", "simulate"]).status.success());
    for f in ["hits.csv", "response.csv", "simulate.meta.json"] {
        assert_eq!(read(&one, f), read(&two, f), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_str(&read(&one, "simulate.meta.json")).unwrap();
    let hits = meta["hits"].as_u64().unwrap();
    let survivors = meta["survivors"].as_u64().unwrap();
    assert_eq!(hits + survivors, 400);
    assert_eq!(read(&one, "hits.csv").lines().count() as u64, hits + 1);
}

#[test]
fn simulate_with_no_particles_writes_empty_outputs() {
    let (dir, cfg) = with_config(&format!("{CHANNEL}mc.n_particles = 0\nmc.t_max = 1\n"));
    let out = annulus(dir.path(), &["--config", &cfg, "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(dir.path(), "hits.csv"), "time,angle\n");
    assert!(csv_rows(&read(dir.path(), "response.csv")).iter().all(|r| r[1] == 0.0));
}

#[test]
fn narrower_window_counts_fewer_hits() {
    let base = format!("{CHANNEL}mc.n_particles = 2000\nmc.t_max = 3\nmc.seed = 5\n");
    let counted = |theta: &str| {
        let (dir, cfg) = with_config(&format!("{base}mc.theta_f = {theta}\n"));
        assert!(annulus(dir.path(), &["--config", &cfg, "simulate"]).status.success());
        let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "simulate.meta.json")).unwrap();
        meta["counted"].as_u64().unwrap()
    };
    assert!(counted("0.5235987755982988") < counted("1.5707963267948966"));
}

#[test]
fn simulate_3d_reports_cap_contacts() {
    let (dir, cfg) = with_config(&format!(
        "{CHANNEL}geometry.h = 2e-5\nmc.n_particles = 300\nmc.t_max = 1\n"
    ));
    let out = annulus(dir.path(), &["--config", &cfg, "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "simulate.meta.json")).unwrap();
    assert!(meta["cap_contacts"]["any"].as_u64().unwrap() > 0);
    assert_eq!(meta["cylinder"]["caps"], "Open");
}

#[test]
fn compare_passes_and_negative_control_fails() {
    let (dir, cfg) = with_config(&format!(
        "{CHANNEL}mc.n_particles = 20000\nmc.t_max = 4\nmc.bin_width = 0.4\ntruncation.t_min = 0.1\n"
    ));
    let good = dir.path().join("good");
    let out = annulus(&good, &["--config", &cfg, "compare", "--threshold", "0.1", "--cumulative-threshold", "0.02"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let meta: serde_json::Value = serde_json::from_str(&read(&good, "compare.meta.json")).unwrap();
    assert_eq!(meta["pass"], true);
    let bad = dir.path().join("bad");
    let out = annulus(
        &bad,
        &["--config", &cfg, "compare", "--analytic-set", "geometry.r0=30e-6", "--threshold", "0.1"],
    );
    assert_eq!(out.status.code(), Some(5));
    let rows = read(&bad, "compare.csv");
    assert!(rows.lines().skip(1).any(|l| l.ends_with(",1")));
}

#[test]
fn characteristics_single_point_and_scaling() {
    let base = "geometry.D0 = 500e-9\ngeometry.D = 80e-12\n";
    let (dir, cfg) = with_config(base);
    let small = dir.path().join("small");
    let out = annulus(&small, &["--config", &cfg, "characteristics", "--alphas", "0.02", "--r0", "200e-9"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&read(&small, "sweep.csv"));
    assert_eq!(rows.len(), 1);
    let (dir2, cfg2) = with_config("geometry.D0 = 100e-6\ngeometry.D = 80e-12\n");
    let big = dir2.path().join("big");
    let out = annulus(&big, &["--config", &cfg2, "characteristics", "--alphas", "0.02", "--r0", "40e-6"]);
    assert!(out.status.success());
    let scaled = csv_rows(&read(&big, "sweep.csv"));
    let s2 = (100e-6f64 / 500e-9).powi(2);
    for k in 2..5 {
        assert!((scaled[0][k] / (rows[0][k] * s2) - 1.0).abs() < 1e-3, "column {k}");
    }
}

#[test]
fn characteristics_detects_the_transition() {
    let (dir, cfg) = with_config("geometry.D0 = 500e-9\ngeometry.D = 80e-12\n");
    let out = annulus(
        dir.path(),
        &["--config", &cfg, "characteristics", "--alphas", "0.02", "--fractions", "0.1:0.95:20", "--slopes"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "characteristics.meta.json")).unwrap();
    let t = meta["slopes"][0]["transition"].as_f64().unwrap();
    assert!((t - 2.0 / 3.0).abs() < 0.15, "{t}");
    assert!((meta["slopes"][0]["near_slope"].as_f64().unwrap() - 2.0).abs() < 0.15);
    assert_eq!(csv_rows(&read(dir.path(), "sweep.csv")).len(), 20);
    assert_eq!(read(dir.path(), "slopes.csv").lines().count(), 19);
}

#[test]
fn json_format_replaces_the_csv_table() {
    let (dir, cfg) = with_config(CHANNEL);
    let out = annulus(dir.path(), &["--config", &cfg, "--format", "json", "impulse", "--times", "1,2"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_str(&read(dir.path(), "impulse.json")).unwrap();
    assert_eq!(v["times"].as_array().unwrap().len(), 2);
    assert!(!dir.path().join("impulse.csv").exists());
}
