use std::path::Path;
use std::process::{Command, Output};

fn opendyn(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opendyn"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn escape_example_reports_log_three_halves() {
    let tmp = tempfile::tempdir().unwrap();
    let o = opendyn(
        &["escape", "--map", "tripling", "--hole", "(0.3333333,0.6666667)", "--t", "1", "--grid", "2187"],
        tmp.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("0.405465"), "{}", stdout(&o));
    for f in ["escape.json", "survival.csv", "density.csv", "manifest.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
}

#[test]
fn bowen_example_reports_golden_dimension() {
    let tmp = tempfile::tempdir().unwrap();
    let o = opendyn(&["bowen", "--map", "doubling", "--hole", "(0,0.25)", "--grid", "4096"], tmp.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.694242"), "{}", stdout(&o));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("bowen.json")).unwrap()).unwrap();
    assert!(json["t_star"].is_number() && json["bracket"].is_array() && json["curve"].is_array());
}

#[test]
fn pressure_example_and_csv_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let o = opendyn(&["pressure", "--map", "doubling", "--t", "0.8"], tmp.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("0.138629"));
    let csv = std::fs::read_to_string(tmp.path().join("pressure.csv")).unwrap();
    assert_eq!(csv, "t,p_t\n0.8,0.138629436112\n");
}

#[test]
fn config_file_with_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    std::fs::write(&cfg, "map = \"doubling\"\nt_values = [0.7, 1.3]\ngrid = 256\n").unwrap();
    let out = tmp.path().join("r");
    let o = opendyn(&["pressure", "--config", cfg.to_str().unwrap(), "--grid", "512"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    let m: serde_json::Value = serde_json::from_str(&manifest).unwrap();
    assert_eq!(m["config"]["grid"], 512);
    assert_eq!(m["config"]["t_values"], serde_json::json!([0.7, 1.3]));
    assert_eq!(m["config"]["hole"], "none");
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "map = \"doubling\"\n\ngird = 3\n").unwrap();
    let o = opendyn(&["pressure", "--config", cfg.to_str().unwrap()], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("gird") && err.contains("line 3"), "{err}");

    let o = opendyn(&["pressure", "--map", "quartic"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = opendyn(&["zerohole", "--map", "doubling"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let o = opendyn(&["pressure", "--map", "doubling", "--grid", "ten"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_errors_exit_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let o = opendyn(
        &["bowen", "--map", "tripling", "--hole", "(1/3,2/3)", "--grid", "243", "--t-range", "0.8,1.1"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no sign change"));
}

#[test]
fn unwritable_report_dir_exits_with_four() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain");
    std::fs::write(&file, "x").unwrap();
    let o = opendyn(&["pressure", "--map", "doubling"], &file.join("sub"));
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn report_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_opendyn"))
        .args(["check-conditions", "--map", "logistic:4", "--hole", "(0.74,0.76)", "-q"])
        .env(opendyn_cli::REPORT_ROOT_ENV, tmp.path())
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(stdout(&o).is_empty());
    let json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("check-conditions/conditions.json")).unwrap(),
    )
    .unwrap();
    let names: Vec<_> = json["reports"].as_array().unwrap().iter().map(|r| r["condition"].clone()).collect();
    assert_eq!(names.len(), 4);
}

#[test]
fn every_subcommand_runs_and_is_thread_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 5] = [
        &["converge", "--map", "tripling", "--hole", "(1/3,2/3)", "--grid", "243", "--psi", "density"],
        &["induce", "--map", "doubling", "--depth", "20"],
        &["zerohole", "--map", "doubling", "--center", "0.3333333333333333", "--eps-k", "6,9"],
        &["variational", "--map", "doubling", "--hole", "(0,1/4)", "--grid", "256"],
        &["escape", "--map", "logistic:4", "--hole", "(0.3,0.35)", "--grid", "1024", "--samples", "100000"],
    ];
    for (i, args) in cases.iter().enumerate() {
        let mut sums = Vec::new();
        for threads in ["1", "4"] {
            let out = tmp.path().join(format!("{i}-{threads}"));
            let mut a = args.to_vec();
            a.extend(["--threads", threads]);
            let o = opendyn(&a, &out);
            assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
            let m: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
            sums.push(m["outputs"].clone());
        }
        assert_eq!(sums[0], sums[1], "{args:?}");
    }
}
