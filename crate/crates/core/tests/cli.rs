use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cpinn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cpinn"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all = args.to_vec();
    let out = dir.to_str().unwrap();
    all.extend(["--out", out]);
    cpinn(&all)
}

#[test]
fn rk4_rigid_body_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--problem", "rigid_body", "--solver", "rk4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("max conservation violation"), "{stdout}");

    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let lines: Vec<&str> = traj.lines().collect();
    assert_eq!(lines[0], "t,u0,u1,u2,I0,I1");
    assert_eq!(lines.len(), 1 + 176);
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(last[0], 1.75);

    let cons = fs::read_to_string(dir.path().join("conservation.csv")).unwrap();
    assert!(cons.starts_with("t,abs_H,rel_H,abs_L,rel_L\n"));
    // fourth-order drift at h ≈ 0.01 stays tiny but is not zero
    let worst = cons
        .lines()
        .skip(1)
        .flat_map(|l| l.split(',').skip(1).map(|s| s.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .fold(0.0f64, f64::max);
    assert!(worst > 0.0 && worst < 1e-5, "{worst}");

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["solver"], "rk4");
    assert_eq!(report["steps"], 175);
}

#[test]
fn pinn_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let flags = [
        "--problem",
        "harmonic_oscillator",
        "--solver",
        "pinn",
        "--conservative",
        "--epochs",
        "4",
        "--collocation",
        "12",
        "--projection-steps",
        "3",
        "--seed",
        "5",
    ];
    for dir in [&a, &b] {
        let out = run_in(dir.path(), &flags);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let stdout = String::from_utf8(out.stdout).unwrap();
        assert!(stdout.contains("final loss"), "{stdout}");
    }
    for name in ["trajectory.csv", "conservation.csv", "checkpoint.bin"] {
        assert_eq!(
            fs::read(a.path().join(name)).unwrap(),
            fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let traj = fs::read_to_string(a.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 13);

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["loss"].as_array().unwrap().len(), 4);
    assert_eq!(report["config"]["epochs"], 4);
    assert_eq!(report["config"]["projection_cap"], 3);
    assert_eq!(report["checkpoint_path"], "checkpoint.bin");
}

#[test]
fn deeponet_rollout_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(
        &cfg,
        "problem = lorenz_conservative\nsolver = deeponet\nepochs = 2\ncollocation = 8\nrollout-steps = 3\n",
    )
    .unwrap();
    let out = run_in(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 3 * 10 + 1);
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["--solver", "pinn"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--problem"));

    let out = run_in(dir.path(), &["--problem", "kepler", "--solver", "rk4"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("point_vortex3"));

    let out = cpinn(&["--problem", "rigid_body", "--solver", "rk4", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));

    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "problem = rigid_body\nsolver = rk4\nwidth = 3\n").unwrap();
    let out = run_in(dir.path(), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));
}

#[test]
fn help_exits_cleanly() {
    let out = cpinn(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--projection-steps"));
}
