use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn gwpcr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gwpcr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Nine units on a 3x3 lattice, two coefficient regimes split by column,
/// one covariate.
fn lattice_data(dir: &Path) -> PathBuf {
    let mut text = String::from("id,comp_1,comp_2,comp_3,x_1,y\n");
    for i in 0..9 {
        let a = 0.2 + 0.05 * ((i * 7) % 5) as f64;
        let b = 0.15 + 0.04 * ((i * 3) % 4) as f64;
        let c = 1.0 - a - b;
        let x = ((i * 5) % 9) as f64 / 9.0;
        let beta = if i % 3 == 0 { 3.0 } else { -3.0 };
        let y = beta * (a / c).ln() + 0.5 * x + 0.01 * (i as f64).sin();
        text.push_str(&format!("u{i},{a},{b},{c},{x},{y}\n"));
    }
    let path = dir.join("data.csv");
    fs::write(&path, text).unwrap();
    path
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

#[test]
fn fit_writes_artifacts_and_manifest() {
    let dir = TempDir::new().unwrap();
    let data = lattice_data(dir.path());
    let out = dir.path().join("fit");
    let o = gwpcr(&[
        "fit",
        "--data",
        s(&data),
        "--lattice",
        "3x3",
        "--scheme",
        "adjusted",
        "--r",
        "1.5",
        "--lambda",
        "0.3",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    let units = fit["units"].as_array().unwrap();
    assert_eq!(units.len(), 9);
    for u in units {
        assert_eq!(u["beta"].as_array().unwrap().len(), 2);
        let full: Vec<f64> = u["beta_composition"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_f64().unwrap())
            .collect();
        assert_eq!(full.len(), 3);
        assert!(full.iter().sum::<f64>().abs() < 1e-10);
    }
    assert_eq!(fit["eta"].as_array().unwrap().len(), 1);
    let clusters = fs::read_to_string(out.join("clusters.csv")).unwrap();
    assert!(clusters.starts_with("id,cluster\n"));
    assert_eq!(clusters.lines().count(), 10);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn path_marks_one_selection_and_replays_identically() {
    let dir = TempDir::new().unwrap();
    let data = lattice_data(dir.path());
    let out = dir.path().join("path");
    let o = gwpcr(&[
        "path",
        "--data",
        s(&data),
        "--lattice",
        "3x3",
        "--scheme",
        "constant",
        "--grid",
        "0.01,5,12",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("path.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 12);
    assert_eq!(rows.iter().filter(|r| r.ends_with(",true")).count(), 1);

    let again = dir.path().join("again");
    let o = gwpcr(&["replay", s(&out.join("manifest.json")), "--out", s(&again)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["path.csv", "fit.json", "clusters.csv"] {
        assert_eq!(
            fs::read(out.join(f)).unwrap(),
            fs::read(again.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn r_sweep_reports_each_decay() {
    let dir = TempDir::new().unwrap();
    let data = lattice_data(dir.path());
    let out = dir.path().join("sweep");
    let o = gwpcr(&[
        "path",
        "--data",
        s(&data),
        "--lattice",
        "3x3",
        "--scheme",
        "adjusted",
        "--r-sweep",
        "0.5,1.5,2.5,3.5",
        "--grid",
        "0.01,5,8",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("r_sweep.csv")).unwrap();
    let rs: Vec<&str> = table
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(rs, ["0.5", "1.5", "2.5", "3.5"]);
}

#[test]
fn unconverged_path_exits_two() {
    let dir = TempDir::new().unwrap();
    let data = lattice_data(dir.path());
    let out = dir.path().join("nc");
    let o = gwpcr(&[
        "path",
        "--data",
        s(&data),
        "--lattice",
        "3x3",
        "--scheme",
        "constant",
        "--grid",
        "1,4,3",
        "--max-iter",
        "1",
        "--tol",
        "1e-14",
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("converged"));
    assert!(out.join("path.csv").is_file());
}

#[test]
fn schema_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "bad.csv",
        "id,comp_1,comp_2,y\na,0.5,0.5,1\nb,0.5,oops,2\n",
    );
    let o = gwpcr(&[
        "fit",
        "--data",
        s(&data),
        "--lattice",
        "1x2",
        "--scheme",
        "constant",
        "--lambda",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
    assert!(stderr(&o).contains("comp_2"));
}

#[test]
fn composition_off_by_a_tenth_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = write(
        dir.path(),
        "sum.csv",
        "id,comp_1,comp_2,y\na,0.5,0.5,1\nb,0.4,0.5,2\n",
    );
    let o = gwpcr(&[
        "fit",
        "--data",
        s(&data),
        "--lattice",
        "1x2",
        "--scheme",
        "constant",
        "--lambda",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sums to 0.9"), "{}", stderr(&o));
}

#[test]
fn missing_graph_unit_is_named() {
    let dir = TempDir::new().unwrap();
    let data = lattice_data(dir.path());
    let mut edges = String::from("from,to\n");
    for i in 0..7 {
        edges.push_str(&format!("u{i},u{}\n", i + 1));
    }
    let edges = write(dir.path(), "edges.csv", &edges);
    let o = gwpcr(&[
        "fit",
        "--data",
        s(&data),
        "--edges",
        s(&edges),
        "--scheme",
        "adjacency",
        "--lambda",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`u8`"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let data = lattice_data(dir.path());
    assert_eq!(gwpcr(&["fit"]).status.code(), Some(1));
    // Decaying schemes need a decay.
    let o = gwpcr(&[
        "fit",
        "--data",
        s(&data),
        "--lattice",
        "3x3",
        "--scheme",
        "adjusted",
        "--lambda",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = gwpcr(&[
        "simulate",
        "--design",
        "design5",
        "--R",
        "1",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("design5"));
    assert_eq!(gwpcr(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = gwpcr(&[
            "simulate",
            "--design",
            "lattice-4x4",
            "--method",
            "constant",
            "--method",
            "spatial-adjacency",
            "--R",
            "1",
            "--seed",
            "7",
            "--grid",
            "0.01,10,10",
            "--out",
            s(&out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let a = run("a");
    let b = run("b");
    for f in ["metrics.csv", "replicates.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let metrics = fs::read_to_string(a.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 3);
    assert!(metrics
        .lines()
        .nth(2)
        .unwrap()
        .starts_with("lattice-4x4,spatial-adjacency,1.5,1,"));

    let c = dir.path().join("c");
    let o = gwpcr(&["replay", s(&a.join("manifest.json")), "--out", s(&c)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(a.join("metrics.csv")).unwrap(),
        fs::read(c.join("metrics.csv")).unwrap()
    );
}

#[test]
fn simulate_from_design_file() {
    let dir = TempDir::new().unwrap();
    let design = write(
        dir.path(),
        "d.json",
        r#"{"name":"tiny","graph":{"lattice":"3x4"},"partition":"quadrant",
            "beta":[[2,2],[-2,2],[-2,-2],[2,-2]],"noise_sd":0.1,"seed":3}"#,
    );
    let out = dir.path().join("o");
    let o = gwpcr(&[
        "simulate",
        "--design",
        s(&design),
        "--method",
        "constant",
        "--R",
        "2",
        "--grid",
        "0.01,10,6",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(out.join("metrics.csv"))
        .unwrap()
        .contains("tiny,constant,-,2,"));
}

#[test]
fn evaluate_crossed_example() {
    let dir = TempDir::new().unwrap();
    let truth = write(dir.path(), "t.csv", "id,cluster\na,0\nb,0\nc,1\nd,1\n");
    let est = write(dir.path(), "e.csv", "id,cluster\na,0\nb,1\nc,0\nd,1\n");
    let out = dir.path().join("ev");
    let o = gwpcr(&[
        "evaluate",
        "--truth",
        s(&truth),
        "--estimate",
        s(&est),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("evaluation.csv")).unwrap();
    assert_eq!(
        table.lines().nth(1).unwrap(),
        format!("RI,{}", 1.0f64 / 3.0)
    );

    let same = gwpcr(&[
        "evaluate",
        "--truth",
        s(&truth),
        "--estimate",
        s(&truth),
        "--out",
        s(&out),
    ]);
    assert!(same.status.success());
    let table = fs::read_to_string(out.join("evaluation.csv")).unwrap();
    assert_eq!(table, "metric,value\nRI,1\nCA,1\nRCC,1\n");

    let short = write(dir.path(), "s.csv", "id,cluster\na,0\nb,0\nc,1\n");
    let o = gwpcr(&[
        "evaluate",
        "--truth",
        s(&truth),
        "--estimate",
        s(&short),
        "--out",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`d`"), "{}", stderr(&o));
}

#[test]
fn designs_lists_bundled_names() {
    let o = gwpcr(&["designs"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for name in ["state-1", "county-4", "lattice"] {
        assert!(text.contains(name));
    }
}
