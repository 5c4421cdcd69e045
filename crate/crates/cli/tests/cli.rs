use std::path::PathBuf;
use std::process::{Command, Output};

fn rbfcn(args: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rbfcn"));
    c.args(args).env_remove("RUST_LOG");
    for (k, _) in std::env::vars().filter(|(k, _)| k.starts_with("RBFCN_")) {
        c.env_remove(k);
    }
    c.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("rbfcn-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

/// CSV with the cpu_seconds column blanked.
fn without_timing(csv: &str) -> String {
    csv.lines()
        .map(|line| {
            if line.starts_with('#') || line.starts_with("nt,") {
                return line.to_owned();
            }
            let mut fields: Vec<&str> = line.split(',').collect();
            fields[5] = "";
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn list_problems_names_both_problems() {
    let o = rbfcn(&["list-problems"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("p1") && lines[0].contains("Dirichlet"));
    assert!(lines[1].starts_with("p2") && lines[1].contains("Neumann"));
}

#[test]
fn stability_on_p1_reports_no_violations() {
    let o = rbfcn(&["stability", "--problem", "p1", "--nx", "64"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains(" 0 violations"), "{}", stdout(&o));
    let cn = rbfcn(&["stability", "--scheme", "cn"]);
    assert!(stdout(&cn).contains(" 0 violations"), "{}", stdout(&cn));
}

#[test]
fn study_writes_one_row_per_step_count() {
    let path = scratch("rows.csv");
    let o = rbfcn(&["study", "--scheme", "cn", "--nt", "8,16,32,64", "--p", "2", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&path).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config: problem=p1"));
    assert_eq!(lines.next().unwrap(), "nt,dt,nx,global_error,fitted_order,cpu_seconds,safeguard_count,zero_node_count");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    let order: f64 = rows[3].split(',').nth(4).unwrap().parse().unwrap();
    assert!((order - 2.0).abs() < 0.1, "{order}");
    // the table mirrors the CSV rows
    assert!(stdout(&o).contains("Global Error"));
    assert_eq!(stdout(&o).lines().filter(|l| l.trim_start().starts_with(char::is_numeric)).count(), 4);
}

#[test]
fn config_comment_names_every_flag() {
    let path = scratch("flags.csv");
    let o = rbfcn(&[
        "study", "--problem", "p1", "--scheme", "rbf-cn", "--rbf", "mq", "--eps-order", "4", "--approx-order", "2",
        "--startup", "refined-cn", "--n0", "4", "--nt", "16,32", "--p", "4", "--estimator", "backward-difference",
        "--cap", "0.25", "--zero-tol", "1e-6", "--out", path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(&path).unwrap();
    let comment = csv.lines().next().unwrap();
    for kv in [
        "problem=p1", "scheme=rbf-cn", "rbf=mq", "eps-order=4", "approx-order=2", "startup=refined-cn (Type I)", "n0=4",
        "nt=16,32", "p=4", "estimator=backward-difference", "cap=0.25", "zero-tol=1e-6", "eps2=none", "nx=none",
    ] {
        assert!(comment.contains(kv), "{kv} missing from {comment}");
    }
    assert!(comment.contains(&format!("out={}", path.display())));
}

#[test]
fn identical_flags_give_identical_csv_apart_from_timing() {
    let run = || {
        let o = rbfcn(&["study", "--rbf", "imq", "--startup", "exact", "--nt", "16,32", "--out", "-"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let text = stdout(&o);
        let start = text.find("# config:").unwrap();
        without_timing(&text[start..])
    };
    assert_eq!(run(), run());
}

#[test]
fn usage_errors_exit_with_two_and_name_the_pair() {
    let cases: [(&[&str], &[&str]); 6] = [
        (&["run", "--scheme", "cn", "--rbf", "mq"], &["--rbf", "--scheme cn"]),
        (&["study", "--startup", "irk", "--n0", "40"], &["--n0", "--startup"]),
        (&["study", "--eps-order", "5", "--approx-order", "1"], &["--eps-order", "--approx-order"]),
        (&["run", "--p", "4", "--nx", "129"], &["--p", "--nx"]),
        (&["run", "--nt", "16,32"], &["--nt"]),
        (&["run", "--scheme", "rbf-backward"], &["--eps2"]),
    ];
    for (args, names) in cases {
        let o = rbfcn(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = stderr(&o);
        for name in names {
            assert!(err.contains(name), "{args:?}: {err}");
        }
    }
    for args in [&["run", "--scheme", "bdf2"][..], &["run", "--rbf", "tps"], &["run", "--eps-order", "6"], &["run", "--approx-order", "5"], &["run", "--startup", "euler"]] {
        assert_eq!(rbfcn(args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn numerical_failure_exits_with_one() {
    // full Richardson-CN amplifies stiff modes by about 5/3 per step
    let o = rbfcn(&["run", "--scheme", "richardson-cn", "--nt", "2000", "--nx", "2001"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("non-finite"));
}

#[test]
fn environment_sets_flags_and_flags_win() {
    let base = |extra: &[&str], env: &[(&str, &str)]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_rbfcn"));
        c.args(["run", "--nt", "16", "--out", "-"]).args(extra);
        for (k, v) in env {
            c.env(k, v);
        }
        let o = c.output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        stdout(&o)
    };
    assert!(base(&[], &[("RBFCN_SCHEME", "cn")]).contains("scheme=cn "));
    assert!(base(&["--scheme", "irk"], &[("RBFCN_SCHEME", "cn")]).contains("scheme=irk "));
    assert!(base(&[], &[("RBFCN_PROBLEM", "p2"), ("RBFCN_SCHEME", "cn")]).contains("problem=p2"));
}
