use std::path::{Path, PathBuf};
use std::process::Command as Process;

use qcollide::config::ExperimentConfig;
use qcollide::output::read_csv;
use qcollide::runner::{exact_and_kubo, exit_code, run, Command, RunOptions};
use qcollide::Error;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("examples/configs")
        .join(name)
}

fn fast_packet() -> ExperimentConfig {
    ExperimentConfig::load(config_path("fast_packet.toml")).unwrap()
}

fn opts(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        ..RunOptions::default()
    }
}

const FREE: &str = r#"
observable = "sigma_x"

[system]
energies = [-0.5, 0.5]

[particle]
kind = "gaussian"
p0 = 100.0
x0 = 2.0
sigma_p = 0.2
nodes = 401

[grids.smatrix]
lo = 10.0
hi = 20.0
count = 5
"#;

#[test]
fn free_potential_gives_identity_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(FREE).unwrap();
    let report = run(Command::Smatrix, &cfg, &opts(dir.path())).unwrap();
    assert!(report.passed());
    let data = read_csv(&dir.path().join("smatrix.csv")).unwrap();
    assert_eq!(data.rows.len(), 5);
    for r in 0..5 {
        for j in 0..2 {
            for k in 0..2 {
                let want = if j == k { 1.0 } else { 0.0 };
                assert_eq!(data.number(r, &format!("s_+{j}_+{k}_re")).unwrap(), want);
                assert_eq!(data.number(r, &format!("s_-{j}_-{k}_re")).unwrap(), want);
                assert_eq!(data.number(r, &format!("s_-{j}_+{k}_re")).unwrap(), 0.0);
                assert_eq!(data.number(r, &format!("s_+{j}_+{k}_im")).unwrap(), 0.0);
            }
        }
    }
}

#[test]
fn threshold_rows_carry_skip_markers() {
    let dir = tempfile::tempdir().unwrap();
    let text = FREE.replace(
        "lo = 10.0\nhi = 20.0\ncount = 5",
        "lo = -1.0\nhi = 0.5\ncount = 2",
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    run(Command::Smatrix, &cfg, &opts(dir.path())).unwrap();
    let data = read_csv(&dir.path().join("smatrix.csv")).unwrap();
    let status = data.column("status").unwrap();
    assert_eq!(data.rows[0][status], "skip:no_open_channel");
    assert_eq!(data.rows[1][status], "skip:threshold");
    assert!(data.number(1, "unitarity").unwrap().is_nan());
}

#[test]
fn packet_smatrix_at_central_energy() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("fast_packet.toml")).unwrap();
    let cfg = ExperimentConfig::from_toml_str(&format!(
        "{text}\n[grids.smatrix]\nlo = 5000.0\nhi = 5000.0\ncount = 1\n"
    ))
    .unwrap();
    let report = run(Command::Smatrix, &cfg, &opts(dir.path())).unwrap();
    assert!(report.passed());
    let data = read_csv(&dir.path().join("smatrix.csv")).unwrap();
    assert_eq!(data.number(0, "energy").unwrap(), 5000.0);
    for col in ["unitarity", "optical_general", "optical_forward"] {
        assert!(data.number(0, col).unwrap() < 1e-10, "{col}");
    }
}

#[test]
fn collide_with_zero_potential_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(FREE).unwrap();
    run(Command::Collide, &cfg, &opts(dir.path())).unwrap();
    let data = read_csv(&dir.path().join("collide.csv")).unwrap();
    for col in ["delta_a", "delta_a_lamb_shift", "delta_a_dissipative"] {
        assert_eq!(data.number(0, col).unwrap(), 0.0, "{col}");
    }
}

#[test]
fn collide_matches_sweep_and_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fast_packet();
    let mut o = opts(dir.path());
    o.oracle = true;
    let report = run(Command::Collide, &cfg, &o).unwrap();
    assert!(report.passed());
    run(Command::Sweep, &cfg, &opts(dir.path())).unwrap();
    let collide = read_csv(&dir.path().join("collide.csv")).unwrap();
    let sweep = read_csv(&dir.path().join("sweep.csv")).unwrap();
    let row = (0..sweep.rows.len())
        .find(|&r| sweep.number(r, "lambda").unwrap() == 0.2)
        .unwrap();
    let a = collide.number(0, "delta_a").unwrap();
    let b = sweep.number(row, "delta_a_exact").unwrap();
    assert!((a - b).abs() <= 1e-12 * a.abs(), "{a} {b}");
    assert!(collide.number(0, "oracle_relative_difference").unwrap() <= 1e-3);
}

#[test]
fn sweep_agrees_with_kubo_at_weak_coupling() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config_path("fast_packet.toml"))
        .unwrap()
        .replace(
            "values = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0]",
            "values = [0.0, 0.05, 0.1]",
        );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    run(Command::Sweep, &cfg, &opts(dir.path())).unwrap();
    let data = read_csv(&dir.path().join("sweep.csv")).unwrap();
    assert_eq!(data.number(0, "delta_a_exact").unwrap(), 0.0);
    assert_eq!(data.number(0, "delta_a_kubo").unwrap(), 0.0);
    assert!(data.number(2, "rel_difference").unwrap() < 0.05);
    let ratio =
        data.number(1, "abs_difference").unwrap() / data.number(2, "abs_difference").unwrap();
    assert!((0.125..=0.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn sweep_points_match_direct_evaluation_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fast_packet();
    run(Command::Sweep, &cfg, &opts(dir.path())).unwrap();
    let data = read_csv(&dir.path().join("sweep.csv")).unwrap();
    let (exact, kubo, _, _) = exact_and_kubo(&cfg.with_value("coupling", 0.5).unwrap()).unwrap();
    assert_eq!(
        data.number(3, "delta_a_exact").unwrap().to_bits(),
        exact.to_bits()
    );
    assert_eq!(
        data.number(3, "delta_a_kubo").unwrap().to_bits(),
        kubo.to_bits()
    );
    assert_eq!(data.meta_value("precision"), Some("17"));
    assert_eq!(data.meta_value("config_sha256").map(str::len), Some(64));
}

#[test]
fn fdr_report_is_at_machine_precision() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(Command::Fdr, &fast_packet(), &opts(dir.path())).unwrap();
    assert!(report.passed());
    let data = read_csv(&dir.path().join("fdr.csv")).unwrap();
    assert!(data.number(0, "max_deviation").unwrap() <= 1e-12);
}

#[test]
fn identical_inputs_give_identical_bytes() {
    let cfg = fast_packet().with_value("qme.trajectories", 300.0).unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let mut o = opts(d.path());
        o.seed = Some(11);
        for c in [Command::Qme, Command::Collide, Command::Response] {
            run(c, &cfg, &o).unwrap();
        }
    }
    for name in ["qme.csv", "qme_mc.csv", "collide.csv", "response_time.csv"] {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
    let mc = read_csv(&dirs[0].path().join("qme_mc.csv")).unwrap();
    assert_eq!(mc.meta_value("seed"), Some("11"));
}

#[test]
fn particle_inside_potential_is_a_numerical_error() {
    let cfg = fast_packet().with_value("particle.x0", 0.0).unwrap();
    let result = exact_and_kubo(&cfg);
    assert!(matches!(result, Err(Error::Horizon(_))));
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exit_code(&run(Command::Sweep, &cfg, &opts(dir.path()))), 2);
}

fn cli(args: &[&str]) -> i32 {
    Process::new(env!("CARGO_BIN_EXE_qcollide"))
        .args(args)
        .output()
        .unwrap()
        .status
        .code()
        .unwrap()
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let good = config_path("fast_packet.toml");
    let bad = config_path("corrupted.toml");
    assert_eq!(
        cli(&["verify", "--config", good.to_str().unwrap(), "--out", out]),
        0
    );
    let data = read_csv(&dir.path().join("verify.csv")).unwrap();
    let passed = data.column("passed").unwrap();
    assert!(data.rows.iter().all(|r| r[passed] == "PASS"));
    let fdr = (0..data.rows.len())
        .find(|&r| data.rows[r][0] == "fdr_max_deviation")
        .unwrap();
    assert!(data.number(fdr, "value").unwrap() <= 1e-12);
    assert_eq!(
        cli(&["verify", "--config", bad.to_str().unwrap(), "--out", out]),
        1
    );
    assert_eq!(
        cli(&["verify", "--config", "/nonexistent.toml", "--out", out]),
        1
    );
}
