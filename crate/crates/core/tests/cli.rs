use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_fredlab"));
    c.env_remove("FREDLAB_JOBS");
    c
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn status(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn aps_scenario_csv_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("aps.csv");
    let o = bin().arg("run").arg(golden("aps_trivial_spin")).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "scenario,row,N,dim_ker,dim_coker,index,verdict,formula_index,eta0,eta1,h0,h1,wall_time"
    );
    let summary = text.lines().find(|l| l.contains(",summary,")).unwrap();
    let cols: Vec<&str> = summary.split(',').collect();
    assert_eq!(cols[5], "-1");
    assert_eq!(cols[6], "Fredholm(-1)");
    assert_eq!(cols[7], "-1");
    assert_eq!(text.lines().filter(|l| l.contains(",window,")).count(), 4);
}

#[test]
fn counterexample_matches_its_expected_block() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c.json");
    let o = bin().arg("run").arg(golden("counterexample_4_8")).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let s = &v["scenarios"][0];
    assert_eq!(s["verdict"]["kind"], "not_fredholm");
    assert_eq!(s["verdict"]["reason"], "GrowingKernel");
    assert_eq!(s["matched"], true);
}

const SHORT_SCHEDULE: &str = r#"
[[scenario]]
name = "short"
model0 = { kind = "circle", spin = "trivial" }
condition0 = { kind = "aps" }
condition1 = { kind = "aps" }
schedule = [8, 16]
"#;

#[test]
fn schema_violation_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("short.toml");
    std::fs::write(&file, SHORT_SCHEDULE).unwrap();
    let o = bin().arg("run").arg(&file).arg("--out").arg(dir.path().join("r.csv")).output().unwrap();
    assert_eq!(status(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("short.toml:2:1"), "{err}");
    assert!(err.contains("at least 3"), "{err}");
}

#[test]
fn syntax_error_exits_2_with_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("broken.toml");
    std::fs::write(&file, "[[scenario]]\nname = \"x\"\nmodel0 = { kind = \"circle\", spin = \n").unwrap();
    let o = bin().arg("run").arg(&file).arg("--out").arg(dir.path().join("r.csv")).output().unwrap();
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("broken.toml:3:"), "{}", stderr(&o));
}

#[test]
fn duplicate_names_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("run")
        .arg(golden("anti_aps"))
        .arg(golden("anti_aps"))
        .arg("--out")
        .arg(dir.path().join("r.csv"))
        .output()
        .unwrap();
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("duplicate"), "{}", stderr(&o));
}

#[test]
fn mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("wrong.toml");
    let text = std::fs::read_to_string(golden("aps_trivial_spin"))
        .unwrap()
        .replace("index = -1, formula_index = -1", "index = 1");
    std::fs::write(&file, text).unwrap();
    let o = bin().arg("run").arg(&file).arg("--out").arg(dir.path().join("r.csv")).output().unwrap();
    assert_eq!(status(&o), 1);
    assert!(stderr(&o).contains("aps_trivial_spin: index"), "{}", stderr(&o));
}

#[test]
fn ill_conditioned_exits_3_naming_the_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .arg("run")
        .arg(golden("anti_aps"))
        .args(["--tau", "0.75", "--out"])
        .arg(dir.path().join("r.csv"))
        .output()
        .unwrap();
    assert_eq!(status(&o), 3);
    assert!(stderr(&o).contains("anti_aps: ill-conditioned"), "{}", stderr(&o));
}

fn run_json(dir: &Path, name: &str, jobs: &str) -> String {
    let out = dir.join(name);
    let mut cmd = bin();
    cmd.arg("run");
    for g in ["aps_trivial_spin", "compact_graph", "small_norm_graph", "chirality", "warped_unitarity"] {
        cmd.arg(golden(g));
    }
    let o = cmd.args(["--format", "json", "--schedule", "4,8,16", "--jobs", jobs, "--out"]).arg(&out).output().unwrap();
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    assert!(dir.join(format!("{name}.meta.json")).exists());
    std::fs::read_to_string(out).unwrap()
}

#[test]
fn json_reports_are_deterministic_across_runs_and_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = run_json(dir.path(), "a.json", "4");
    let b = run_json(dir.path(), "b.json", "4");
    let serial = run_json(dir.path(), "s.json", "1");
    assert_eq!(a, b);
    assert_eq!(a, serial);
    assert!(!a.contains("wall_time"));
}

#[test]
fn jobs_default_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("FREDLAB_JOBS", "1")
        .arg("run")
        .arg(golden("nontrivial_spin"))
        .arg("--out")
        .arg(dir.path().join("r.csv"))
        .output()
        .unwrap();
    assert_eq!(status(&o), 0, "{}", stderr(&o));
}

#[test]
fn reproduce_paper_full_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("summary.md");
    let o = bin().arg("reproduce-paper").arg("--out").arg(&out).output().unwrap();
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let md = std::fs::read_to_string(&out).unwrap();
    assert!(md.contains("11 scenarios, 11 matches"), "{md}");
    assert_eq!(md.lines().filter(|l| l.ends_with("| match |")).count(), 11);
}

#[test]
fn reproduce_paper_reports_misconfigured_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("summary.md");
    let o = bin().args(["reproduce-paper", "--tau", "0.6", "--out"]).arg(&out).output().unwrap();
    assert_ne!(status(&o), 0);
    assert!(std::fs::read_to_string(&out).unwrap().contains("MISMATCH"));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn reproduce_paper_empty_override() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("golden");
    std::fs::create_dir(&empty).unwrap();
    let out = dir.path().join("summary.md");
    let o = bin().arg("reproduce-paper").arg("--golden-dir").arg(&empty).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status(&o), 0);
    let md = std::fs::read_to_string(&out).unwrap();
    assert!(md.contains("0 scenarios"));
    assert!(!md.contains("| match |"));
}

#[test]
fn rejected_graph_reports_no_formula_index() {
    // k -> -k sends the half-shifted zero mode back into the future cut
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    std::fs::write(
        &file,
        r#"
[[scenario]]
name = "bad"
model0 = { kind = "circle", spin = "nontrivial" }
condition0 = { kind = "aps" }
condition1 = { kind = "graph", a = "0", weights = { kind = "constant", value = "1" } }
"#,
    )
    .unwrap();
    let out = dir.path().join("bad.csv");
    let o = bin().arg("run").arg(&file).arg("--out").arg(&out).output().unwrap();
    assert_eq!(status(&o), 1, "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let summary = text.lines().find(|l| l.contains(",summary,")).unwrap();
    assert!(summary.contains("not in the target block"), "{summary}");
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let rec = r.records().next().unwrap().unwrap();
    assert_eq!(&rec[7], "");
}
