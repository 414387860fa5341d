use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_greenlearn"));
    c.env_remove("GREEN_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let (head, rest) = text.split_once('\n').unwrap();
    assert!(head.starts_with("# greenlearn "), "{head}");
    assert!(head.contains(" config={"));
    rest.to_string()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let o = run(&[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(run(&["partition", "--nope"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn partition_counts_in_three_dimensions() {
    let o = run(&["partition", "--dim", "3", "--levels", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["counts"]["non_admissible"], 1000);
    assert_eq!(v["counts"]["admissible"], 3096);
    assert_eq!(v["admissible"].as_array().unwrap().len(), 3096);
    assert_eq!(v["header"]["config"]["subcommand"], "partition");
}

#[test]
fn deterministic_suite_passes_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.csv");
    let o = run(&["verify-bounds", "--suite", "deterministic", "--trials", "1000", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let b = body(&out);
    let mut lines = b.lines();
    assert_eq!(lines.next(), Some("name,parameters,empirical,bound,pass"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.ends_with(",pass")));
}

#[test]
fn mercer_document_has_weighted_eigenpairs() {
    let o = run(&["mercer", "--dim", "1", "--n", "33", "--kernel", "se:0.3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(!v["eigenvalues"].as_array().unwrap().is_empty());
    assert_eq!(run(&["mercer", "--kernel", "matern:1"]).status.code(), Some(1));
}

#[test]
fn learn_apply_round_trip_and_reproducible_bodies() {
    let dir = tempfile::tempdir().unwrap();
    let p = |s: &str| dir.path().join(s);
    let args = |g: &str, r: &str| {
        vec![
            "learn".to_string(),
            "--n".into(),
            "66".into(),
            "--levels".into(),
            "3".into(),
            "--k".into(),
            "4".into(),
            "--p".into(),
            "4".into(),
            "--seed".into(),
            "5".into(),
            "--out".into(),
            p(g).to_str().unwrap().into(),
            "--report".into(),
            p(r).to_str().unwrap().into(),
        ]
    };
    assert_eq!(bin().args(args("g1.json", "r1.csv")).status().unwrap().code(), Some(0));
    assert_eq!(bin().args(args("g2.json", "r2.csv")).status().unwrap().code(), Some(0));
    assert_eq!(body(&p("r1.csv")), body(&p("r2.csv")));
    let r = body(&p("r1.csv"));
    let (cols, row) = r.split_once('\n').unwrap();
    let cols: Vec<&str> = cols.split(',').collect();
    let row: Vec<&str> = row.trim().split(',').collect();
    let get = |c: &str| row[cols.iter().position(|x| *x == c).unwrap()];
    assert_eq!(get("n_queries"), get("expected_queries"));
    assert_eq!(get("n_queries"), get("oracle_queries"));
    assert!(!get("rel_error").is_empty());

    let g1 = std::fs::read_to_string(p("g1.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&g1).unwrap();
    assert_eq!(v["header"]["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["green"]["settings"]["k"], 4);

    let a = p("u.csv");
    let o = run(&["apply", "--green", p("g1.json").to_str().unwrap(), "--rhs", "ones", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(body(&a).lines().count(), 1 + 66);

    std::fs::write(p("f.csv"), "# values\n1\n2\n").unwrap();
    let o = run(&["apply", "--green", p("g1.json").to_str().unwrap(), "--input", p("f.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn green_seed_overrides_the_flag() {
    let o = bin()
        .env("GREEN_SEED", "77")
        .args(["sweep", "--n", "34", "--levels", "2", "--over", "k", "--values", "2,4", "--seed", "1"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().next().unwrap().contains("\"seed\":77"));
    assert_eq!(text.lines().count(), 4);
    let bad = bin().env("GREEN_SEED", "x").args(["partition"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_one() {
    assert_eq!(run(&["learn", "--coeff", "diag:-1"]).status.code(), Some(1));
    assert_eq!(run(&["partition", "--dim", "3", "--levels", "9"]).status.code(), Some(1));
    assert_eq!(run(&["apply", "--green", "/nonexistent.json"]).status.code(), Some(1));
}
