use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn stencilpipe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stencilpipe"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// Column `name` of every data row.
fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let idx = lines
        .next()
        .unwrap()
        .split(',')
        .position(|c| c == name)
        .unwrap();
    lines
        .map(|l| l.split(',').nth(idx).unwrap().to_string())
        .collect()
}

const SMALL: [&str; 8] = [
    "--grid", "24,18,12", "--t", "2", "--T", "2", "--block", "12,6,6",
];

#[test]
fn solve_verify_reports_bitwise_match() {
    let o = stencilpipe(&[&["solve", "--verify"], &SMALL[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("bitwise match"));
    assert_eq!(column(&stdout(&o), "status"), ["bitwise match"]);
    assert_eq!(column(&stdout(&o), "config_hash")[0].len(), 64);
}

#[test]
fn json_mirrors_csv() {
    let csv = stdout(&stencilpipe(&[
        "model",
        "--multihalo",
        "--L",
        "50:100:50",
        "--h",
        "1,4",
    ]));
    let o = stencilpipe(&[
        "model",
        "--multihalo",
        "--L",
        "50:100:50",
        "--h",
        "1,4",
        "--json",
    ]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let eff = column(&csv, "comm_efficiency");
    for (row, e) in rows.iter().zip(eff) {
        assert_eq!(
            row["comm_efficiency"].as_f64().unwrap(),
            e.parse::<f64>().unwrap()
        );
    }
    assert_eq!(rows[1]["L"], 50);
    assert_eq!(rows[1]["h"], 4);
    assert_eq!(rows[0]["in_range"], true);
}

#[test]
fn snapshot_sidecar_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.snap");
    let b = dir.path().join("b.snap");
    let first = stencilpipe(
        &[
            &["solve", "--output", a.to_str().unwrap(), "--seed", "5"],
            &SMALL[..],
        ]
        .concat(),
    );
    assert!(first.status.success(), "{}", stderr(&first));
    let sidecar = dir.path().join("a.snap.cfg");
    let text = std::fs::read_to_string(&sidecar).unwrap();
    let hash = &column(&stdout(&first), "config_hash")[0];
    assert!(text.contains(&format!("config_hash: {hash}")));
    // rerun from the sidecar alone, redirecting the snapshot
    let second = stencilpipe(&[
        "solve",
        "--config",
        sidecar.to_str().unwrap(),
        "--output",
        b.to_str().unwrap(),
    ]);
    assert!(second.status.success(), "{}", stderr(&second));
    assert_eq!(&column(&stdout(&second), "config_hash")[0], hash);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn sweep_marks_invalid_distances() {
    let o = stencilpipe(&[&["sweep", "--du", "0:8", "--verify"], &SMALL[..]].concat());
    assert!(o.status.success(), "{}", stderr(&o));
    let status = column(&stdout(&o), "status");
    assert_eq!(status.len(), 9);
    assert_eq!(status[0], "invalid");
    assert!(status[1..].iter().all(|s| s == "bitwise match"));
    assert_eq!(
        column(&stdout(&o), "max_distance"),
        (0..=8).map(|d| d.to_string()).collect::<Vec<_>>()
    );
}

#[test]
fn sweep_takes_ranges_from_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(
        &cfg,
        "nx = 20\nny = 12\nnz = 12\nblock = 10,6,6\nteam_size = 1,2\nupdates_per_thread = 1:2\n",
    )
    .unwrap();
    let o = stencilpipe(&["sweep", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), "team_size"), ["1", "1", "2", "2"]);
    assert_eq!(
        column(&stdout(&o), "updates_per_thread"),
        ["1", "2", "1", "2"]
    );
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    for args in [
        vec!["solve", "--config", cfg.to_str().unwrap()],
        vec!["solve", "--dl", "4", "--du", "2"],
        vec!["solve", "--passes", "3"],
        vec!["solve", "--sync", "sometimes"],
        vec!["model", "--bounds", "--machine", "/nonexistent.conf"],
        vec!["dist", "--procs", "2,1,1", "--grid", "6,4,4", "--T", "4"],
        vec!["bench", "--target", "disk"],
        vec!["model"],
    ] {
        let o = stencilpipe(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn model_modes() {
    let o = stencilpipe(&["model", "--bounds", "--machine", "nehalem_ep", "--t", "1:2"]);
    assert_eq!(
        column(&stdout(&o), "baseline_lups"),
        ["1187500000", "1187500000"]
    );
    assert_eq!(
        column(&stdout(&o), "pipelined_bound_lups"),
        ["1012500000", "2025000000"]
    );
    let o = stencilpipe(&[
        "model",
        "--cycles",
        "--machine",
        "istanbul",
        "--kernel",
        "jacobi",
        "--level",
        "3",
    ]);
    assert_eq!(column(&stdout(&o), "cycles_max"), ["26"]);
    let o = stencilpipe(&[
        "model",
        "--scalability",
        "--machine",
        "nehalem_ep",
        "--t",
        "4,5",
        "--bj",
        "1e10",
    ]);
    assert_eq!(column(&stdout(&o), "scales"), ["true", "false"]);
}

#[test]
fn bench_rows() {
    let o = stencilpipe(&[
        "bench",
        "--elements",
        "10000",
        "--reps",
        "3",
        "--target",
        "cache",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), "kernel"), ["copy", "update"]);
    assert_eq!(column(&stdout(&o), "bytes_per_element"), ["24", "16"]);
}

fn free_ports(n: usize) -> Vec<u16> {
    let listeners: Vec<_> = (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
        .collect();
    listeners
        .iter()
        .map(|l| l.local_addr().unwrap().port())
        .collect()
}

fn write_rankfile(path: &Path, ports: &[u16]) {
    let text: String = ports
        .iter()
        .enumerate()
        .map(|(r, p)| format!("{r} 127.0.0.1 {p}\n"))
        .collect();
    std::fs::write(path, text).unwrap();
}

#[test]
fn dist_across_processes_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let rankfile = dir.path().join("ranks");
    write_rankfile(&rankfile, &free_ports(2));
    let rf = rankfile.to_str().unwrap();
    let common = [
        "dist",
        "--ranks",
        "2",
        "--rankfile",
        rf,
        "--procs",
        "2,1,1",
        "--grid",
        "24,12,12",
        "--verify",
    ];
    let peer = Command::new(env!("CARGO_BIN_EXE_stencilpipe"))
        .args(common)
        .args(["--rank", "1"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let root = stencilpipe(&[&common[..], &["--rank", "0"]].concat());
    let peer = peer.wait_with_output().unwrap();
    assert!(root.status.success(), "{}", stderr(&root));
    assert!(peer.status.success(), "{}", stderr(&peer));
    assert!(stderr(&root).contains("bitwise match"));
    assert_eq!(column(&stdout(&root), "rank"), ["0"]);
    assert_eq!(column(&stdout(&peer), "rank"), ["1"]);
}

#[test]
fn dist_in_process_and_missing_peer() {
    let o = stencilpipe(&[
        "dist",
        "--procs",
        "2,2,1",
        "--grid",
        "16,16,8",
        "--backend",
        "tcp",
        "--verify",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(column(&stdout(&o), "rank").len(), 4);

    let dir = tempfile::tempdir().unwrap();
    let rankfile = dir.path().join("ranks");
    write_rankfile(&rankfile, &free_ports(2));
    let o = stencilpipe(&[
        "dist",
        "--rank",
        "0",
        "--rankfile",
        rankfile.to_str().unwrap(),
        "--procs",
        "2,1,1",
        "--timeout-s",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
