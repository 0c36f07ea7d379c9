use std::process::{Command, Output};

fn tnfactor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnfactor"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// CSV body with the timing columns blanked.
fn without_timings(csv: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.nth(1).expect("header").split(',').collect();
    let timing: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("t_"))
        .map(|(i, _)| i)
        .collect();
    assert_eq!(timing.len(), 2);
    lines
        .map(|l| {
            l.split(',')
                .enumerate()
                .map(|(i, f)| if timing.contains(&i) { "" } else { f })
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect()
}

#[test]
fn factor_fifteen() {
    let o = tnfactor(&["factor", "15"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("p = 5  q = 3"), "{out}");
    assert!(out.contains("verified"));
}

#[test]
fn factor_both_schemes_and_orders() {
    for scheme in ["bottom-up", "left-right"] {
        for order in ["lsb", "msb"] {
            for enforce in ["on", "off"] {
                let o = tnfactor(&[
                    "factor",
                    "143",
                    "--scheme",
                    scheme,
                    "--order",
                    order,
                    "--enforce",
                    enforce,
                ]);
                assert_eq!(o.status.code(), Some(0));
                assert!(stdout(&o).contains("p = 13  q = 11"));
            }
        }
    }
}

#[test]
fn even_input_short_circuits() {
    let o = tnfactor(&["factor", "14"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("p = 7 q = 2"), "{out}");
    assert!(out.contains("even"));
}

#[test]
fn prime_input_is_degenerate() {
    for n in ["13", "7", "2", "9"] {
        assert_eq!(tnfactor(&["factor", n]).status.code(), Some(2), "N = {n}");
    }
}

#[test]
fn approximate_mode_exit_codes() {
    assert_eq!(tnfactor(&["factor", "143", "--mode", "approx"]).status.code(), Some(0));
    assert_eq!(
        tnfactor(&["factor", "143", "--mode", "approx", "--chi", "64"])
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        tnfactor(&["factor", "143", "--mode", "approx", "--chi", "2"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn json_output() {
    let o = tnfactor(&["factor", "35", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["N"], 35);
    assert_eq!(v["p"], 7);
    assert_eq!(v["q"], 5);
}

#[test]
fn usage_errors() {
    for args in [
        vec!["factor", "15", "--bogus"],
        vec!["factor", "abc"],
        vec!["factor", "0"],
        vec!["factor", "15", "--scheme", "diagonal"],
        vec!["factor", "15", "--chi", "4"],
        vec!["factor", "15", "--mode", "approx", "--chi", "0"],
        vec!["selftest", "--max-bits", "11"],
        vec!["timing", "--min-bits", "10", "--max-bits", "9", "--out", "/dev/null"],
        vec![],
    ] {
        assert_eq!(tnfactor(&args).status.code(), Some(64), "{args:?}");
    }
}

#[test]
fn help_documents_flags() {
    let o = tnfactor(&["factor", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for flag in [
        "--scheme",
        "--mode",
        "--chi",
        "--order",
        "--enforce",
        "--round-per-site",
    ] {
        assert!(out.contains(flag), "{flag} missing from help");
    }
    let o = tnfactor(&["compression", "--help"]);
    for flag in [
        "--min-bits",
        "--max-bits",
        "--count",
        "--seed",
        "--scheme",
        "--jobs",
        "--out",
    ] {
        assert!(stdout(&o).contains(flag), "{flag} missing from help");
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let o = tnfactor(&[
        "timing",
        "--min-bits",
        "8",
        "--max-bits",
        "8",
        "--out",
        "/nonexistent/dir/t.csv",
    ]);
    assert_eq!(o.status.code(), Some(74));
}

#[test]
fn timing_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = tnfactor(&[
            "timing",
            "--min-bits",
            "8",
            "--max-bits",
            "10",
            "--count",
            "5",
            "--seed",
            "7",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
        std::fs::read_to_string(path).unwrap()
    };
    let (a, b) = (run("a.csv"), run("b.csv"));
    assert!(a.starts_with("# seed=7\n"));
    assert_eq!(a.lines().count(), 2 + 15);
    assert_eq!(without_timings(&a), without_timings(&b));
}

#[test]
fn compression_populates_bond_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let o = tnfactor(&[
        "compression",
        "--scheme",
        "left-right",
        "--min-bits",
        "8",
        "--max-bits",
        "8",
        "--count",
        "3",
        "--seed",
        "1",
        "--jobs",
        "2",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let rows: Vec<_> = reader.records().map(|r| r.unwrap()).collect();
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(!r[col("chi_min")].is_empty());
        assert!(!r[col("c_max")].is_empty());
    }
}

#[test]
fn selftest_passes_and_detects_faults() {
    let o = tnfactor(&["selftest", "--max-bits", "6"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("n=6"));
    let o = tnfactor(&["selftest", "--max-bits", "6", "--inject-fault", "SMid:0,0,0,0,0,0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL truth table"));
}

#[test]
fn dump_network() {
    let o = tnfactor(&["dump-network", "15"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().count() >= 6);
    let o = tnfactor(&["dump-network", "15", "--json"]);
    let _: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(tnfactor(&["dump-network", "16"]).status.code(), Some(64));
}
