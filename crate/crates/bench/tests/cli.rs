use std::path::Path;
use std::process::{Command, Output};

use stiffexp_bench::csvio::{load_trajectory, TRAJECTORY_HEADER};

fn stiffexp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stiffexp")).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn run_writes_trajectory_and_biomarkers() {
    let dir = tempfile::tempdir().unwrap();
    let out = stiffexp(dir.path(), &["run", "--scheme", "RL", "--order", "2", "--h", "0.05", "--out", "rl2.csv"]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}");
    assert!(stdout.contains("t_a ="), "{stdout}");
    let text = std::fs::read_to_string(dir.path().join("rl2.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRAJECTORY_HEADER.join(","));
    let traj = load_trajectory(&dir.path().join("rl2.csv")).unwrap();
    assert_eq!(traj.mesh().steps(), 7920);
    let v = traj.component(7);
    assert!(v.iter().cloned().fold(f64::MIN, f64::max) > 0.0, "no overshoot");
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = stiffexp(dir.path(), &["run", "--scheme", "AB_2", "--h", "0.05"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stdout).contains("diverged at node"));
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn no_stimulus_leaves_biomarkers_undefined() {
    let dir = tempfile::tempdir().unwrap();
    let out = stiffexp(dir.path(), &["run", "--scheme", "RL_2", "--h", "0.1", "--set", "stim_charge=0"]);
    assert_eq!(code(&out), 3);
    let traj = load_trajectory(&dir.path().join("trajectory.csv")).unwrap();
    let v = traj.component(7);
    let spread = v.iter().cloned().fold(f64::MIN, f64::max) - v.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.5, "V moved by {spread} mV");
}

#[test]
fn configuration_errors_exit_with_four() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "scheme = RL_2\nbogus = 1\n").unwrap();
    assert_eq!(code(&stiffexp(dir.path(), &["--config", "bad.cfg", "run"])), 4);
    // 396 / 0.07 is not an integer
    assert_eq!(code(&stiffexp(dir.path(), &["run", "--scheme", "RL_2", "--h", "0.07"])), 4);
    assert_eq!(code(&stiffexp(dir.path(), &["run", "--scheme", "XY_2"])), 4);
    assert_eq!(code(&stiffexp(dir.path(), &["run", "--scheme", "EAB", "--order", "7"])), 4);
    assert_eq!(code(&stiffexp(dir.path(), &["run", "--no-such-flag"])), 4);
    assert_eq!(code(&stiffexp(dir.path(), &["cost", "--repeats", "1"])), 4);
    assert_eq!(code(&stiffexp(dir.path(), &["--help"])), 0);
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "# EAB_3 at the largest step\nscheme = EAB\norder = 3\nh = 0.2\n").unwrap();
    let out = stiffexp(dir.path(), &["--config", "run.cfg", "--out", "x.csv", "run"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("scheme EAB_3, h = 0.2"));
    let out = stiffexp(dir.path(), &["--config", "run.cfg", "--order", "4", "run"]);
    assert_eq!(code(&out), 2, "EAB_4 diverges at h = 0.2");
}

#[test]
fn stability_matrix_and_converge_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = stiffexp(dir.path(), &["stability", "--schemes", "RL_2,RK_4", "--steps", "0.2,0.1"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("stability.csv")).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), ["h,RL_2,RK_4", "0.2,ok,--", "0.1,ok,--"]);

    let out = stiffexp(
        dir.path(),
        &["converge", "--schemes", "EAB_2,RK_4", "--steps", "0.1,0.05", "--r", "3", "--repeats", "0", "--plot-dir", "."],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "scheme,order,h,e_inf,e_ta,e_tr,e_apd,cpu_s,stable,newton_iters");
    assert_eq!(lines.len(), 5);
    assert!(lines[1].starts_with("EAB,2,1.0000000000000001e-1,") && lines[1].ends_with(",true,0"));
    assert!(lines[3].starts_with("RK,4,") && lines[3].ends_with(",false,0"));
    let slopes = std::fs::read_to_string(dir.path().join("convergence_slopes.csv")).unwrap();
    assert!(slopes.contains("RK,4,0,undefined"), "{slopes}");
    assert!(dir.path().join("EAB2_e_inf.csv").exists());
    assert!(dir.path().join("stiffexp-cache").read_dir().unwrap().count() == 1);
}
