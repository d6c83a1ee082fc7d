use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn exe() -> &'static str {
    env!("CARGO_BIN_EXE_condbse")
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("condbse-cli-{tag}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str], out: Option<&Path>) -> Output {
    let mut c = Command::new(exe());
    c.args(args);
    if let Some(o) = out {
        c.arg("--out").arg(o);
    }
    c.output().unwrap()
}

fn report(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap()
}

#[test]
fn zero_generator_takes_one_iteration() {
    let d = scratch("zero");
    let o = run(&["solve", "--config", config("zero.toml").to_str().unwrap()], Some(&d));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(&d);
    assert_eq!(r["status"], "converged");
    assert_eq!(r["iterations"], 1);
    assert!(r["bse_residual"].as_f64().unwrap() < 1e-12);
    let csv = std::fs::read_to_string(d.join("solution.csv")).unwrap();
    assert!(csv.starts_with("time,atom,y0,m0,z0,k0"));
}

#[test]
fn budget_violation_names_the_block() {
    let d = scratch("budget");
    let o = run(&["solve", "--config", config("budget_violation.toml").to_str().unwrap()], Some(&d));
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("block 1"), "{err}");
    assert_eq!(report(&d)["exit_code"], 1);
}

#[test]
fn exhausted_iterations_exit_2() {
    let d = scratch("nonconv");
    let cfg = d.join("nc.toml");
    std::fs::write(
        &cfg,
        "[space]\nbranching = [2]\nsteps = 4\n\n[generator]\nkind = \"pointwise\"\ny_lin = 0.1\n\n\
         [terminal]\nkind = \"walk\"\n\n[solver]\nmethod = \"contraction\"\nlipschitz = 0.1\nmax_iter = 1\ntol = 1e-14\n",
    )
    .unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap()], Some(&d.join("out")));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(report(&d.join("out"))["exit_code"], 2);
}

#[test]
fn unknown_config_field_is_named() {
    let d = scratch("badcfg");
    let cfg = d.join("bad.toml");
    std::fs::write(&cfg, "[space]\nbranching = [2]\n[terminal]\nkind = \"walk\"\ncolour = 3\n").unwrap();
    let o = run(&["solve", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("terminal.colour"));
}

#[test]
fn unknown_suite_exits_1() {
    let o = run(&["verify", "--suite", "nope"], None);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn doob_suite_at_500_cases() {
    let d = scratch("doob");
    let o = run(&["verify", "--suite", "doob", "--cases", "500", "--seed", "4"], Some(&d));
    assert_eq!(o.status.code(), Some(0));
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 4);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("verify_report.json")).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["suites"][0]["cases"], 500);
}

#[test]
fn counterexample_demo_lists_the_family() {
    let d = scratch("demo");
    let o = run(&["demo", "counterexample"], Some(&d));
    assert_eq!(o.status.code(), Some(0));
    let r = report(&d);
    let fam = r["family"].as_array().unwrap();
    assert!(fam.len() >= 5);
    for m in fam {
        assert!(m["fixed_point_gap"].as_f64().unwrap() < 1e-12);
    }
    let csv = std::fs::read_to_string(d.join("family.csv")).unwrap();
    assert!(csv.starts_with("member,time,atom,y0,m0"));
}

#[test]
fn identical_runs_are_byte_identical() {
    let d = scratch("det");
    for i in 0..2 {
        let o = run(&["demo", "contraction", "--seed", "3"], Some(&d.join(i.to_string())));
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["report.json", "solution.csv"] {
        assert_eq!(std::fs::read(d.join("0").join(f)).unwrap(), std::fs::read(d.join("1").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn help_exits_0() {
    assert_eq!(run(&["--help"], None).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"], None).status.code(), Some(1));
}
