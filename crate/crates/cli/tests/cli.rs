use std::fs;
use std::path::Path;
use std::process::Command;

use clap::Parser;
use kirchhoff_cli::config::RunConfig;
use kirchhoff_cli::{execute, run, Cli};

fn args(cmd: &str, out: &Path, extra: &[&str]) -> Vec<String> {
    let mut v = vec![
        "kirchhoff".to_string(),
        cmd.to_string(),
        "--out".to_string(),
        out.display().to_string(),
    ];
    v.extend(extra.iter().map(|s| s.to_string()));
    v
}

fn read(out: &Path, name: &str) -> String {
    fs::read_to_string(out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn ground_default_writes_all_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(args("ground", dir.path(), &[])), 0);
    let hash = RunConfig::default().hash();
    for name in [
        "config.txt",
        "ground_solution.txt",
        "ground_energy.csv",
        "ground_history.csv",
    ] {
        let body = read(dir.path(), name);
        assert_eq!(body.lines().next().unwrap(), format!("# config_hash={hash}"), "{name}");
    }
    let dump = read(dir.path(), "ground_solution.txt");
    let rows: Vec<_> = dump.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 289);
    assert!(rows[0].starts_with("-8 -8 "));
    let value: f64 = rows[144].split(' ').nth(2).unwrap().parse().unwrap();
    assert!(value > 0.0);
    let energy = read(dir.path(), "ground_energy.csv");
    let row: Vec<_> = energy.lines().nth(2).unwrap().split(',').collect();
    assert_eq!(row[10], "true");
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        assert_eq!(run(args("signchanging", d.path(), &["--set", "L=5"])), 0);
    }
    for name in [
        "signchanging_solution.txt",
        "signchanging_energy.csv",
        "signchanging_history.csv",
        "signchanging_projection.csv",
    ] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name}");
    }
}

#[test]
fn invalid_exponent_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cli = Cli::parse_from(args("ground", dir.path(), &["--set", "p=3"]));
    let err = execute(&cli).unwrap_err();
    assert!(err.to_string().contains("requires p > 4"), "{err}");
    assert_eq!(run(args("ground", dir.path(), &["--set", "p=3"])), 1);

    let cli = Cli::parse_from(args("signchanging", dir.path(), &["--set", "p=5"]));
    assert!(execute(&cli).unwrap_err().to_string().contains("requires p > 6"));
    assert_eq!(run(args("signchanging", dir.path(), &["--set", "p=5"])), 1);
}

#[test]
fn forced_non_convergence_keeps_partial_history() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(args("ground", dir.path(), &["--set", "max_iters=1"])), 2);
    let history = read(dir.path(), "ground_history.csv");
    assert_eq!(history.lines().count(), 4);
}

#[test]
fn coincident_dipole_and_unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let same = ["--set", "dipole_plus=1,0", "--set", "dipole_minus=1,0"];
    assert_eq!(run(args("signchanging", dir.path(), &same)), 1);
    assert_eq!(run(args("verify", dir.path(), &["--set", "colour=blue"])), 1);
    assert_eq!(run(args("ground", dir.path(), &["--set", "d=3", "--set", "L=20"])), 1);
    assert_eq!(
        run(args("ground", dir.path(), &["--config", "/nonexistent/run.cfg"])),
        1
    );
}

#[test]
fn config_file_and_overrides_compose() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.cfg");
    fs::write(&cfg_path, "# small run\nL = 3\np = 7.5\n").unwrap();
    let cfg_arg = cfg_path.display().to_string();
    let cli = Cli::parse_from(args(
        "ground",
        dir.path(),
        &["--config", &cfg_arg, "--set", "p=8", "--set", "q=9", "--seed", "5"],
    ));
    let cfg = kirchhoff_cli::load_config(&cli).unwrap();
    assert_eq!((cfg.l, cfg.p, cfg.q, cfg.seed), (3, 8.0, 9.0, 5));
    assert_eq!(run(args("ground", dir.path(), &["--config", &cfg_arg])), 0);
    let echoed = read(dir.path(), "config.txt");
    assert!(echoed.contains("L = 3\n") && echoed.contains("p = 7.5\n"));
}

#[test]
fn corrupted_kernel_fails_integration_by_parts() {
    let dir = tempfile::tempdir().unwrap();
    let code = run(args(
        "verify",
        dir.path(),
        &["--set", "L=4", "--set", "corrupt_kernel_symmetry=0.1"],
    ));
    assert_eq!(code, 3);
    let csv = read(dir.path(), "verify.csv");
    let ibp = csv.lines().find(|l| l.starts_with("integration_by_parts,")).unwrap();
    assert!(ibp.starts_with("integration_by_parts,false,"), "{ibp}");
}

fn kernel_sums(d: &str) -> Vec<f64> {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(args("kernel-sum", dir.path(), &["--set", &format!("d={d}")])), 0);
    read(dir.path(), "kernel_sum.csv")
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect()
}

#[test]
fn kernel_sums_approach_their_limits() {
    let pi2 = std::f64::consts::PI.powi(2);
    for (d, limit) in [("1", pi2 / 3.0), ("2", 2.0 * pi2 / 3.0)] {
        let sums = kernel_sums(d);
        assert!(sums.windows(2).all(|w| w[1] >= w[0]));
        let last = *sums.last().unwrap();
        assert!(last < limit && limit - last < 1e-3, "d={d}: {last} vs {limit}");
    }
}

#[test]
fn binary_reports_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_kirchhoff");
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(bin)
        .args(["ground", "--set", "p=3", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("requires p > 4"));
    let ok = Command::new(bin)
        .args(["kernel-sum", "--set", "kernel_sum_max_radius=8", "--out"])
        .arg(dir.path())
        .env("KIRCHHOFF_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&ok.stdout).lines().count(), 5);
    let bad = Command::new(bin)
        .args(["kernel-sum", "--out"])
        .arg(dir.path())
        .env("KIRCHHOFF_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(1));
}
