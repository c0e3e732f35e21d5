use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hotloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hotloc")).args(args).output().expect("spawn hotloc")
}

fn ok(args: &[&str]) -> Output {
    let out = hotloc(args);
    assert!(out.status.success(), "hotloc {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn write_config(dir: &Path, preset: &str, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let path = dir.join(format!("{preset}.json"));
    ok(&["init-config", "--preset", preset, "--out", s(&path)]);
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    edit(&mut v);
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn grid_header(dir: &Path) -> (usize, usize) {
    let text = fs::read_to_string(dir.join("grid.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("m,pixel_size"));
    let m: usize = lines.next().unwrap().split(',').next().unwrap().parse().unwrap();
    assert!(lines.next().unwrap().starts_with("id,x,y"));
    let cells = lines.take_while(|l| !l.starts_with("cell_id,")).count();
    (m, cells)
}

#[test]
fn pipeline_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["pipeline", "--seed", "3", "--out", s(&a)]);
    ok(&["pipeline", "--seed", "3", "--out", s(&b)]);
    let names = files(&a);
    assert_eq!(names, files(&b));
    assert!(names.len() >= 20, "{names:?}");
    for n in &names {
        assert_eq!(fs::read(a.join(n)).unwrap(), fs::read(b.join(n)).unwrap(), "{}", n.display());
    }
}

#[test]
fn seed_flag_changes_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&["gen-scenario", "--seed", "1", "--out", s(&a)]);
    ok(&["gen-scenario", "--seed", "2", "--out", s(&b)]);
    assert_ne!(fs::read(a.join("truth.csv")).unwrap(), fs::read(b.join("truth.csv")).unwrap());
}

#[test]
fn default_grid_is_sixty_pixels_wide() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-scenario", "--out", s(dir.path())]);
    assert_eq!(grid_header(dir.path()), (60, 21));
}

#[test]
fn single_site_has_three_cells() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "single-site", |_| {});
    let out = dir.path().join("out");
    ok(&["gen-scenario", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(grid_header(&out).1, 3);
}

#[test]
fn idle_simulator_fails_in_kpi_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "single-site", |v| v["sim"]["arrival_rate"] = 0.0.into());
    let out = hotloc(&["pipeline", "--config", s(&cfg), "--kpi-source", "sim", "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kpi stage failed") && err.contains("empty system"), "{err}");
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "desk", |v| v["grid"]["extent_m"] = 1510.0.into());
    let out = hotloc(&["gen-scenario", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("config stage failed") && err.contains("grid.extent_m"), "{err}");
}

#[test]
fn x_override_skips_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["pipeline", "--x-override", "1,0,0,0,0", "--out", s(dir.path())]);
    assert!(!dir.path().join("optimize.json").exists());
    let imp: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("importance.json")).unwrap()).unwrap();
    assert_eq!(imp["source"], "override");
    assert_eq!(imp["x"], serde_json::json!([1.0, 0.0, 0.0, 0.0, 0.0]));
    let fused = fs::read_to_string(dir.path().join("maps/fused.csv")).unwrap();
    let ta = fs::read_to_string(dir.path().join("variants/ta-only.csv")).unwrap();
    assert_eq!(fused.lines().skip(1).collect::<Vec<_>>(), ta.lines().skip(1).collect::<Vec<_>>());

    let bad = hotloc(&["pipeline", "--x-override", "1,0,0", "--out", s(dir.path())]);
    assert!(!bad.status.success());
    let bad = hotloc(&["pipeline", "--x-override", "1,-1,0,0,0", "--out", s(dir.path())]);
    assert!(!bad.status.success());
}

#[test]
fn stages_chain_to_the_pipeline_result() {
    let dir = tempfile::tempdir().unwrap();
    let (p, c) = (dir.path().join("p"), dir.path().join("c"));
    ok(&["pipeline", "--out", s(&p)]);
    ok(&["gen-scenario", "--out", s(&c)]);
    ok(&["oracle-kpis", "--in", s(&c), "--out", s(&c)]);
    ok(&["optimize", "--in", s(&c), "--out", s(&c)]);
    ok(&["localize", "--in", s(&c), "--out", s(&c), "--variant", "ta-only"]);
    ok(&["localize", "--in", s(&c), "--out", s(&c), "--variant", "ta-neighbor"]);
    ok(&["localize", "--in", s(&c), "--out", s(&c)]);
    ok(&["evaluate", "--in", s(&c), "--out", s(&c.join("eval"))]);
    for n in [
        "grid.csv",
        "truth.csv",
        "potential.csv",
        "kpis.json",
        "optimize.json",
        "maps/q3.csv",
        "maps/fused.csv",
        "maps/smoothed.csv",
        "variants/ta-neighbor.csv",
        "eval/report.json",
        "eval/detection.csv",
    ] {
        assert_eq!(fs::read(p.join(n)).unwrap(), fs::read(c.join(n)).unwrap(), "{n}");
    }
}

#[test]
fn simulate_writes_kpis_and_events() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "single-site", |v| v["sim"]["duration_s"] = 60.0.into());
    let d = dir.path().join("s");
    ok(&["gen-scenario", "--config", s(&cfg), "--out", s(&d)]);
    ok(&["simulate", "--config", s(&cfg), "--in", s(&d), "--out", s(&d), "--events"]);
    let first = fs::read(d.join("kpis.json")).unwrap();
    let kpis: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert_eq!(kpis["source"], "simulator");
    assert!(fs::read_to_string(d.join("events.csv")).unwrap().lines().count() > 1);
    ok(&["simulate", "--config", s(&cfg), "--in", s(&d), "--out", s(&d)]);
    assert_eq!(fs::read(d.join("kpis.json")).unwrap(), first);
}

/// Seed-0 desk run with oracle KPIs against the stored report.
/// Set `HOTLOC_BLESS=1` to rewrite it.
#[test]
fn golden_report() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["pipeline", "--seed", "0", "--kpi-source", "oracle", "--out", s(dir.path())]);
    let got = fs::read_to_string(dir.path().join("eval/report.json")).unwrap();
    let golden = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/report.json");
    if std::env::var_os("HOTLOC_BLESS").is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(&golden, &got).unwrap();
    }
    let want = fs::read_to_string(&golden).unwrap();
    let (g, w): (serde_json::Value, serde_json::Value) =
        (serde_json::from_str(&got).unwrap(), serde_json::from_str(&want).unwrap());
    assert_eq!(g, w);
}
