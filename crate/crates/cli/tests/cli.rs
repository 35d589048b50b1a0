use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn s0() -> PathBuf {
    scenarios().join("s0.toml")
}

fn bertrand(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bertrand")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

fn with_edit(from: &str, to: &str) -> tempfile::NamedTempFile {
    let text = fs::read_to_string(s0()).unwrap().replace(from, to);
    let f = tempfile::NamedTempFile::new().unwrap();
    fs::write(f.path(), text).unwrap();
    f
}

#[test]
fn solve_baseline() {
    let o = bertrand(&["solve", s0().to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(column(&out, "p_UE"), ["1.33333333333"]);
    assert_eq!(column(&out, "p_LE"), ["1.66666666667"]);
    assert_eq!(column(&out, "pi_LE"), ["0.272222222222"]);
}

#[test]
fn check_passes_and_is_deterministic() {
    let a = bertrand(&["check", s0().to_str().unwrap()]);
    let b = bertrand(&["check", s0().to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", stdout(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("check,result,detail\n"));
    assert!(!stdout(&a).contains("FAIL"));
}

#[test]
fn check_fails_when_conditions_fail() {
    let f = with_edit("q = 2.56", "q = 4.0");
    let path = f.path().to_str().unwrap();
    let solve = bertrand(&["solve", path]);
    assert!(solve.status.success());
    assert!(String::from_utf8_lossy(&solve.stderr).contains("cond2"));
    assert_eq!(bertrand(&["check", path]).status.code(), Some(1));
}

#[test]
fn guidance_sweep_is_monotone() {
    let o = bertrand(&["sweep", s0().to_str().unwrap(), "--param", "c_bar_L", "--from", "0", "--to", "0.4", "--steps", "41"]);
    assert!(o.status.success());
    let g: Vec<f64> = column(&stdout(&o), "G_E").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(g.len(), 41);
    assert!(g.windows(2).all(|w| w[1] < w[0]));
    let c: Vec<f64> = column(&stdout(&o), "c_bar_L").iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(c[0], 0.0);
    assert_eq!(c[40], 0.4);
}

#[test]
fn single_point_sweep_equals_solve() {
    let p = s0();
    let path = p.to_str().unwrap();
    for (param, value) in [("cL", "0.1"), ("R", "2"), ("G", "0")] {
        let sweep = bertrand(&["sweep", path, "--param", param, "--from", value, "--to", value, "--steps", "1"]);
        assert_eq!(sweep.stdout, bertrand(&["solve", path]).stdout, "{param}");
    }
}

#[test]
fn input_errors_exit_two() {
    let f = with_edit("q = 2.56", "q = -1");
    let o = bertrand(&["solve", f.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("market.q"));

    let f = with_edit("kind = \"specific\"", "kind = \"cournot\"");
    assert_eq!(bertrand(&["solve", f.path().to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(bertrand(&["solve", "/no/such/file.toml"]).status.code(), Some(2));
    assert_eq!(bertrand(&["statics", s0().to_str().unwrap(), "--param", "q"]).status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    let o = bertrand(&["extended", s0().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no interior solution"));
}

#[test]
fn extended_reference() {
    let o = bertrand(&["extended", scenarios().join("sx.toml").to_str().unwrap()]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(column(&out, "R_E"), ["0.5"]);
    assert_eq!(column(&out, "p_LE"), ["1.3"]);
    assert_eq!(column(&out, "p_UE"), ["1.15"]);
    assert_eq!(column(&out, "dR_dcL"), ["5"]);
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("policy.csv");
    let o = bertrand(&["policy", s0().to_str().unwrap(), "--out", target.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(&target).unwrap();
    let g: f64 = column(&text, "G_E")[0].parse().unwrap();
    assert!(g > 0.0);
    assert_eq!(column(&text, "boundary"), ["false"]);
    assert_eq!(column(&text, "dpiL_dG").len(), 1);
}

#[test]
fn every_command_writes_a_header() {
    let p = s0();
    let path = p.to_str().unwrap();
    let cases: [(&[&str], &str); 4] = [
        (&["statics", path, "--param", "cL"], "id,parameter,quantity,analytic,approx,fd,stencil"),
        (&["dynamics", path, "--p0", "1.2,1.5", "--steps", "10"], "t,pU,pL,Z2,Z2_br"),
        (&["curves", path, "--producer", "L", "--levels", "0.2,0.3"], "series,x,y"),
        (&["curves", path], "series,x,y"),
    ];
    for (args, header) in cases {
        let o = bertrand(args);
        assert!(o.status.success(), "{args:?}");
        assert_eq!(stdout(&o).lines().next(), Some(header), "{args:?}");
    }
}

#[test]
fn dynamics_rows_follow_steps() {
    let o = bertrand(&["dynamics", s0().to_str().unwrap(), "--p0", "1.2,1.5", "--dt", "0.05", "--steps", "20"]);
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 22);
    let z: Vec<f64> = column(&out, "Z2_br").iter().map(|v| v.parse().unwrap()).collect();
    assert!(z.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn linear_scenario_statics() {
    let o = bertrand(&["statics", scenarios().join("linear.toml").to_str().unwrap(), "--param", "G"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(column(&out, "analytic"), column(&out, "approx"));
    assert_eq!(bertrand(&["policy", scenarios().join("linear.toml").to_str().unwrap()]).status.code(), Some(2));
}
