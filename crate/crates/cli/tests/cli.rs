use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bl(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bl-lddmm"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn bl-lddmm")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(o: &Output) -> String {
    format!("{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr))
}

#[test]
fn synthesize_register_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = bl(&["synthesize", "--kind", "translation", "--size", "32", "--out", "pair"], d);
    assert_eq!(code(&o), 0, "{}", text(&o));
    for f in ["template.vol", "target.vol", "register.toml"] {
        assert!(d.join("pair").join(f).exists(), "{f}");
    }

    let cfg = d.join("pair/register.toml");
    let toml = fs::read_to_string(&cfg).unwrap();
    fs::write(&cfg, toml.replace("max_outer = 50", "max_outer = 4")).unwrap();
    let o = bl(&["register", "pair/register.toml", "--out", "run1", "-q"], d);
    assert_eq!(code(&o), 0, "{}", text(&o));
    for f in ["warped.vol", "displacement.vol", "difference.vol", "iterations.csv", "report.txt", "report.toml"] {
        assert!(d.join("run1").join(f).exists(), "{f}");
    }
    let o = bl(&["register", "pair/register.toml", "--out", "run2", "-q"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(d.join("run1/iterations.csv")).unwrap(), fs::read(d.join("run2/iterations.csv")).unwrap());

    let o = bl(&["report", "run1"], d);
    assert_eq!(code(&o), 0);
    assert!(text(&o).contains("MSE_rel"));
    let o = bl(&["report", "run1", "run2"], d);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 3);
}

#[test]
fn c_to_circle_writes_labels() {
    let dir = tempfile::tempdir().unwrap();
    let o = bl(&["synthesize", "--kind", "c_to_circle", "--size", "32", "--out", "."], dir.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    assert!(dir.path().join("template_labels.vol").exists());
    assert!(fs::read_to_string(dir.path().join("register.toml")).unwrap().contains("template_labels"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[problem]\nno_such_key = 1\n").unwrap();
    let o = bl(&["register", "bad.toml"], dir.path());
    assert_eq!(code(&o), 2, "{}", text(&o));
    assert!(text(&o).contains("no_such_key"));

    fs::write(dir.path().join("bad.toml"), "[problem]\nsigma2 = -1.0\n[input.synthetic]\nkind = \"swirl\"\n").unwrap();
    assert_eq!(code(&bl(&["register", "bad.toml"], dir.path())), 2);
}

#[test]
fn input_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("r.toml"), "[input]\ntemplate = \"a.vol\"\ntarget = \"b.vol\"\n").unwrap();
    let o = bl(&["register", "r.toml"], dir.path());
    assert_eq!(code(&o), 3, "{}", text(&o));
    assert!(text(&o).contains("a.vol"));

    fs::write(dir.path().join("a.vol"), "not a volume").unwrap();
    assert_eq!(code(&bl(&["register", "r.toml"], dir.path())), 3);
    assert_eq!(code(&bl(&["register", "missing.toml"], dir.path())), 3);
    assert_eq!(code(&bl(&["report", "nowhere"], dir.path())), 3);
}

#[test]
fn cfl_violation_without_refinement_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[input.synthetic]\nkind = \"translation\"\nsize = 32\nshift = 0.3\n\
               [domain]\nbounds = [8, 8]\n[problem]\ntime_steps = 1\ncfl_auto = false\n";
    fs::write(dir.path().join("r.toml"), cfg).unwrap();
    let o = bl(&["register", "r.toml", "-q"], dir.path());
    assert_eq!(code(&o), 4, "{}", text(&o));
    assert!(text(&o).contains("CFL"));
}

#[test]
fn stalled_line_search_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "[input.synthetic]\nkind = \"c_to_circle\"\nsize = 64\n\
               [domain]\nbounds = [16, 16]\nalpha = 0.01\n[problem]\nvariant = \"state\"\nsigma2 = 0.05\n";
    fs::write(dir.path().join("r.toml"), cfg).unwrap();
    let o = bl(&["register", "r.toml", "-q"], dir.path());
    assert_eq!(code(&o), 5, "{}", text(&o));
    assert!(text(&o).contains("stalled"));
}

#[test]
fn check_derivatives_reports_a_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = bl(&["check-derivatives", "--size", "16", "--bounds", "4"], dir.path());
    assert_eq!(code(&o), 0, "{}", text(&o));
    let out = text(&o);
    assert!(out.contains("gradient vs FD") && out.contains("33 checks"));
    // the state objective's gradient is not the exact discrete derivative
    let o = bl(&["check-derivatives", "--size", "16", "--bounds", "4", "--strict"], dir.path());
    assert_eq!(code(&o), 1);
    assert_eq!(code(&bl(&["check-derivatives", "--size", "128"], dir.path())), 2);
}
