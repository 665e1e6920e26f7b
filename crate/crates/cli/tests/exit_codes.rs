mod common;

use common::*;

fn path(name: &str) -> String {
    fixture(name).to_string_lossy().into_owned()
}

fn corpus(dir: &str) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(fixture(dir))
        .unwrap()
        .map(|e| e.unwrap().path().to_string_lossy().into_owned())
        .collect();
    v.sort();
    assert!(!v.is_empty());
    v
}

#[test]
fn malformed_data_exits_2_with_a_message() {
    for f in corpus("malformed") {
        let o = npiv(&["test", "--data", &f]);
        assert_eq!(code(&o), 2, "{f}: {}", stderr(&o));
        assert!(stderr(&o).starts_with("error: "), "{f}");
        assert!(stdout(&o).is_empty(), "{f} wrote to stdout");
    }
}

#[test]
fn row_errors_name_the_line() {
    for (f, line) in [
        ("malformed/non_numeric.csv", 43),
        ("malformed/nan.csv", 9),
        ("malformed/infinite.csv", 101),
        ("malformed/short_row.csv", 12),
    ] {
        let o = npiv(&["test", "--data", &path(f)]);
        assert!(stderr(&o).contains(&format!("line {line}")), "{f}: {}", stderr(&o));
    }
}

#[test]
fn bad_configs_exit_2() {
    for f in corpus("bad_config") {
        let o = npiv(&["test", "--data", &path("linear_n300.csv"), "--config", &f]);
        assert_eq!(code(&o), 2, "{f}: {}", stderr(&o));
    }
}

#[test]
fn bad_candidate_files_exit_2() {
    for f in corpus("bad_candidates") {
        let o = npiv(&["cs", "--data", &path("linear_n300.csv"), "--null", "linear", "--candidate", &f]);
        assert_eq!(code(&o), 2, "{f}: {}", stderr(&o));
    }
}

#[test]
fn argument_errors_exit_2() {
    let lin = path("linear_n300.csv");
    let cases: Vec<Vec<&str>> = vec![
        vec![],
        vec!["frobnicate"],
        vec!["test"],
        vec!["test", "--data", "/nonexistent/data.csv"],
        vec!["test", "--data", &lin, "--alpha", "0"],
        vec!["test", "--data", &lin, "--alpha", "abc"],
        vec!["test", "--data", &lin, "--null", "wiggly"],
        vec!["test", "--data", &lin, "--basis", "bspline1"],
        vec!["test", "--data", &lin, "--grid", "3,,4"],
        vec!["test", "--data", &lin, "--kfactor", "0"],
        vec!["test", "--data", &lin, "--null", "convex", "--basis", "bspline2"],
        vec!["test", "--data", &lin, "--test", "image"],
        vec!["test", "--data", &lin, "--format", "xml"],
        vec!["reproduce", "T9"],
        vec!["reproduce", "T2", "--reps", "0"],
        vec!["simulate", "--spec", "/nonexistent.json"],
        vec!["simulate", "--spec", &lin],
    ];
    for args in cases {
        let o = npiv(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
    let o = npiv_env(&["test", "--data", &lin], &[("NPIV_SEED", "minus one")]);
    assert_eq!(code(&o), 2);
    let spec = path("spec_small.json");
    let o = npiv(&["simulate", "--spec", &spec, "--reps", "1", "--jobs", "0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn help_and_version_exit_0() {
    for args in [vec!["--help"], vec!["--version"], vec!["test", "--help"], vec!["cs", "--help"]] {
        let o = npiv(&args);
        assert_eq!(code(&o), 0, "{args:?}");
        assert!(!stdout(&o).is_empty());
    }
    assert!(stdout(&npiv(&["--version"])).starts_with("npiv 0.1.0"));
}

#[test]
fn unwritable_output_exits_2() {
    let o = npiv(&["test", "--data", &path("linear_n300.csv"), "--out", "/nonexistent/dir/out.txt"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
