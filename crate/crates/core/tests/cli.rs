use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn upart(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_upart"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {line}"))
}

fn write_path4(dir: &Path) -> String {
    let path = dir.join("p4.graph");
    fs::write(&path, "% path on four nodes\n4 3\n2\n1 3\n2 4\n3\n").unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn path_of_four_splits_in_the_middle() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_path4(dir.path());
    let out = upart(&["partition", &graph, "-k", "2", "-e", "0"]);
    assert!(out.status.success(), "{out:?}");
    let line = stdout(&out);
    assert_eq!(field(&line, "cut"), "1");
    assert_eq!(field(&line, "balanced"), "true");
    let blocks: Vec<u32> = fs::read_to_string(format!("{graph}.part.2"))
        .unwrap()
        .lines()
        .map(|l| l.trim().parse().unwrap())
        .collect();
    assert_eq!(blocks.len(), 4);
    assert!(blocks[0] == blocks[1] && blocks[2] == blocks[3] && blocks[0] != blocks[2]);
}

#[test]
fn single_block_has_no_cut() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_path4(dir.path());
    let out = upart(&["partition", &graph, "-k", "1"]);
    assert!(out.status.success());
    assert_eq!(field(&stdout(&out), "cut"), "0");
}

#[test]
fn generated_graph_partitions_the_same_twice() {
    let dir = tempfile::tempdir().unwrap();
    let graph = dir.path().join("pl.graph");
    let graph = graph.to_str().unwrap();
    let out = upart(&["generate", "power-law", "-n", "3000", "-s", "4", "-o", graph]);
    assert!(out.status.success(), "{out:?}");
    let run = |preset: &str, file: &str| {
        let target = dir.path().join(file);
        let out = upart(&[
            "partition",
            graph,
            "-k",
            "4",
            "-s",
            "9",
            "--preset",
            preset,
            "-o",
            target.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{out:?}");
        assert_eq!(field(&stdout(&out), "balanced"), "true");
        fs::read_to_string(target).unwrap()
    };
    assert_eq!(run("unconstrained", "a"), run("unconstrained", "b"));
    assert_eq!(run("constrained", "c"), run("constrained", "d"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let graph = write_path4(dir.path());
    assert_eq!(
        upart(&["partition", "/nonexistent/graph", "-k", "2"]).status.code(),
        Some(3)
    );
    assert_eq!(upart(&["partition", &graph]).status.code(), Some(2));
    assert_eq!(upart(&["partition", &graph, "-k", "0"]).status.code(), Some(2));
    assert_eq!(
        upart(&["partition", &graph, "-k", "2", "--preset", "fast"])
            .status
            .code(),
        Some(2)
    );

    let heavy = dir.path().join("heavy.graph");
    fs::write(&heavy, "3 1 10\n10 2\n1 1\n1\n").unwrap();
    assert_eq!(
        upart(&["partition", heavy.to_str().unwrap(), "-k", "2"]).status.code(),
        Some(1)
    );

    let broken = dir.path().join("broken.graph");
    fs::write(&broken, "3 2\n2\n1\n").unwrap();
    assert_eq!(
        upart(&["partition", broken.to_str().unwrap(), "-k", "2"]).status.code(),
        Some(3)
    );
}

#[test]
fn bench_then_profile() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("grid.graph");
    let b = dir.path().join("hubs.graph");
    assert!(upart(&[
        "generate",
        "grid",
        "--rows",
        "12",
        "--cols",
        "12",
        "-o",
        a.to_str().unwrap()
    ])
    .status
    .success());
    assert!(upart(&[
        "generate",
        "hub-cluster",
        "--hubs",
        "6",
        "--leaves",
        "5",
        "-o",
        b.to_str().unwrap()
    ])
    .status
    .success());
    let csv = dir.path().join("runs.csv");
    let out = upart(&[
        "bench",
        "--graphs",
        a.to_str().unwrap(),
        b.to_str().unwrap(),
        "-k",
        "2,4",
        "--seeds",
        "2",
        "-o",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "schema,graph,k,config,seed,cut,imbalance,time,balanced,timeout,status"
    );
    // 2 graphs, 2 ks, 2 configs, 2 seeds; six heavy hubs cannot fit four blocks
    let statuses: Vec<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
    assert_eq!(statuses.len(), 16);
    assert_eq!(statuses.iter().filter(|&&s| s == "ok").count(), 12);
    assert_eq!(statuses.iter().filter(|&&s| s == "infeasible").count(), 4);

    let out = upart(&["profile", csv.to_str().unwrap(), "--thetas", "1,1.5,100"]);
    assert!(out.status.success(), "{out:?}");
    let rows: Vec<(String, f64, f64)> = stdout(&out)
        .lines()
        .skip(1)
        .map(|l| {
            let parts: Vec<&str> = l.split(',').collect();
            (
                parts[0].to_string(),
                parts[1].parse().unwrap(),
                parts[2].parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(rows.len(), 6);
    for config in ["constrained", "unconstrained"] {
        let at_100 = rows.iter().find(|r| r.0 == config && r.1 == 100.0).unwrap().2;
        assert_eq!(at_100, 0.75);
    }
}
