use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use aegis_core::geometry::io::load_ellipsoid;
use aegis_core::sim::report::parse_table_csv;
use aegis_core::sim::Trace;

fn aegis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aegis"))
        .args(args)
        .current_dir(dir)
        .env("AEGIS_THREADS", "2")
        .output()
        .expect("spawn aegis")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scenario(name: &str) -> String {
    let p: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "..",
        "core",
        "scenarios",
        &format!("{name}.toml"),
    ]
    .iter()
    .collect();
    p.display().to_string()
}

#[test]
fn run_writes_one_trace_per_seed_and_a_stable_summary() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("goal-drawer-1");
    let args = [
        "run",
        "--scenario",
        &sc,
        "--filter",
        "on",
        "--seeds",
        "4",
        "--out",
        "res",
    ];
    let first = aegis(dir.path(), &args);
    assert!(first.status.success(), "{}", stderr(&first));
    let traces: Vec<_> = fs::read_dir(dir.path().join("res/goal-drawer-1")).unwrap().collect();
    assert_eq!(traces.len(), 4);
    let summary = fs::read(dir.path().join("res/summary.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&summary).lines().count(), 5);
    assert!(dir.path().join("res/run.meta").exists());

    let again = aegis(dir.path(), &args);
    assert!(again.status.success());
    assert_eq!(fs::read(dir.path().join("res/summary.csv")).unwrap(), summary);

    let trace = Trace::load(&dir.path().join("res/goal-drawer-1/seed-0.csv")).unwrap();
    assert!(trace.filter_on && trace.min_h() >= -1e-6);
}

#[test]
fn binary_traces_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("spatial-bowl-plate-1");
    let o = aegis(
        dir.path(),
        &[
            "run",
            "--scenario",
            &sc,
            "--filter",
            "off",
            "--format",
            "bin",
            "--out",
            "r",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = Trace::load(&dir.path().join("r/spatial-bowl-plate-1/seed-0.bin")).unwrap();
    assert!(!trace.filter_on);
    assert!(!trace.steps.is_empty());
}

#[test]
fn missing_scenario_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = aegis(dir.path(), &["run", "--scenario", "absent.toml"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("absent.toml"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("goal-drawer-1");
    assert_eq!(
        aegis(dir.path(), &["run", "--scenario", &sc, "--seeds", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        aegis(dir.path(), &["run", "--scenario", &sc, "--assessor", "remote"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(aegis(dir.path(), &["frobnicate"]).status.code(), Some(2));
}

#[test]
fn bench_single_method_table_roundtrips_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    for name in ["goal-drawer-1", "spatial-bowl-plate-2"] {
        fs::copy(scenario(name), suite.join(format!("{name}.toml"))).unwrap();
    }
    let o = aegis(
        dir.path(),
        &[
            "bench", "--suite", "suite", "--filter", "off", "--seeds", "2", "--out", "b",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let printed = stdout(&o);
    let table: Vec<&str> = printed
        .lines()
        .take_while(|l| !l.starts_with("table written"))
        .collect();
    assert_eq!(table.len(), 5);
    assert!(table[0].contains("Spatial") && table[0].contains("Goal") && table[0].ends_with("Average"));
    assert!(table[2..].iter().all(|l| l.starts_with("filter-off")));

    let csv = parse_table_csv(&fs::read_to_string(dir.path().join("b/bench.csv")).unwrap());
    for (line, row) in table[2..].iter().zip(&csv[1..]) {
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells, row.iter().map(String::as_str).collect::<Vec<_>>());
    }
}

#[test]
fn fit_mvee_cross_polytope_is_the_unit_ball() {
    let dir = tempfile::tempdir().unwrap();
    let pts = "1 0 0\n-1 0 0\n0 1 0\n0 -1 0\n0 0 1\n0 0 -1\n";
    fs::write(dir.path().join("cross.txt"), pts).unwrap();
    let o = aegis(dir.path(), &["fit-mvee", "cross.txt", "ball.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("volume"));
    let e = load_ellipsoid(&dir.path().join("ball.txt")).unwrap();
    assert!(e.center().norm() < 1e-6);
    for a in e.semi_axes().iter() {
        assert!((a - 1.0).abs() < 1e-5, "{a}");
    }
}

#[test]
fn fit_mvee_flat_cloud_needs_inflation() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("flat.txt"), "0 0 0\n1 0 0\n0 1 0\n1 1 0\n").unwrap();
    let o = aegis(dir.path(), &["fit-mvee", "flat.txt", "e.txt"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stderr(&o).contains("--inflate"));
    let o = aegis(dir.path(), &["fit-mvee", "flat.txt", "e.txt", "--inflate", "0.01"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e = load_ellipsoid(&dir.path().join("e.txt")).unwrap();
    assert!((e.semi_axes().min() - 0.01).abs() < 1e-9);
}

#[test]
fn fit_mvee_random_cloud_contains_every_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    let mut pts = Vec::new();
    for _ in 0..200 {
        let p = [next() * 0.3, next() * 0.1, next() * 0.2 + 0.4];
        text.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
        pts.push(p);
    }
    fs::write(dir.path().join("cloud.txt"), text).unwrap();
    let o = aegis(dir.path(), &["fit-mvee", "cloud.txt", "e.txt"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let e = load_ellipsoid(&dir.path().join("e.txt")).unwrap();
    for p in pts {
        assert!(e.quadratic_form(&p.into()) <= 1.0 + 1e-6);
    }
}

#[test]
fn malformed_point_file_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "1 2 3\n4 five 6\n").unwrap();
    let o = aegis(dir.path(), &["fit-mvee", "bad.txt", "e.txt"]);
    assert_eq!(o.status.code(), Some(10));
    assert!(stderr(&o).contains("line 2"));
}

#[test]
fn trace_plot_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let sc = scenario("object-soup-basket-1");
    let o = aegis(
        dir.path(),
        &["run", "--scenario", &sc, "--out", "r", "--record-latency"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let trace = "r/object-soup-basket-1/seed-0.csv";

    let o = aegis(dir.path(), &["trace-plot", trace, "h.svg"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("h.svg")).unwrap();
    assert!(svg.contains("stroke-dasharray") && svg.contains("min h = "));
    let min_h: f64 = svg
        .split("min h = ")
        .nth(1)
        .unwrap()
        .split(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(min_h >= -1e-6);

    let o = aegis(dir.path(), &["trace-plot", trace, "--ascii"]);
    assert!(o.status.success());
    assert!(stdout(&o)
        .lines()
        .next()
        .unwrap()
        .chars()
        .all(|c| ('▁'..='█').contains(&c)));

    let o = aegis(dir.path(), &["trace-plot", trace, "lat.svg", "--latency"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(dir.path().join("lat.svg"))
        .unwrap()
        .contains("median = "));
}

#[test]
fn trace_plot_rejects_bad_traces() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "").unwrap();
    assert_eq!(aegis(dir.path(), &["trace-plot", "empty.csv"]).status.code(), Some(10));
    fs::write(dir.path().join("junk.csv"), "hello\nworld\n").unwrap();
    assert_eq!(aegis(dir.path(), &["trace-plot", "junk.csv"]).status.code(), Some(10));
    assert_eq!(aegis(dir.path(), &["trace-plot", "absent.csv"]).status.code(), Some(4));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_aegis"))
        .args(["fit-mvee", "x", "y"])
        .current_dir(dir.path())
        .env("AEGIS_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
