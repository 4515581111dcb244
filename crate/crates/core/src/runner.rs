//! Batch execution of scenarios and report writing.
//!
//! Report schema `fredlab-report/1`. One row per `(scenario, N)` with
//! `row = "window"` and one `row = "summary"` per scenario:
//!
//! | column          | meaning                                                     |
//! |-----------------|-------------------------------------------------------------|
//! | `scenario`      | scenario name                                               |
//! | `row`           | `window` or `summary`                                       |
//! | `N`             | window radius (largest radius on summary rows)              |
//! | `dim_ker`       | `dim(Q B0 ∩ B1)` on the window                              |
//! | `dim_coker`     | `codim(Q B0 + B1)` on the window                            |
//! | `index`         | `dim_ker - dim_coker`; on summary rows the stabilized index |
//! | `verdict`       | summary rows only: `Fredholm(i)`, `NotFredholm(..)`, ...    |
//! | `formula_index` | closed-form prediction when its hypotheses hold             |
//! | `eta0`, `eta1`  | eta invariants of the boundary operators                    |
//! | `h0`, `h1`      | kernel dimensions of the boundary operators                 |
//! | `wall_time`     | CSV only, seconds per scenario on summary rows              |
//!
//! JSON reports leave out `wall_time` so they are byte-identical across
//! runs; timings go to a `<out>.meta.json` sidecar.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::Error;
use crate::formulas::{eta_analytic, predict, Applicability, IndexPrediction};
use crate::fredholm::{fredholm_verdict, Verdict};
use crate::parallel::{map_collect, Execution};
use crate::scenario::{load_batch, Overrides, Scenario, ScenarioError};

pub const REPORT_SCHEMA: &str = "fredlab-report/1";

pub const CSV_HEADER: [&str; 13] = [
    "scenario",
    "row",
    "N",
    "dim_ker",
    "dim_coker",
    "index",
    "verdict",
    "formula_index",
    "eta0",
    "eta1",
    "h0",
    "h1",
    "wall_time",
];

/// Norm-product threshold under which a pair of non-compact graph maps is
/// treated as a small perturbation of the cuts.
pub const GRAPH_NORM_THRESHOLD: f64 = 1.0;

pub mod exit {
    pub const OK: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const ILL_CONDITIONED: i32 = 3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (csv or json)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Window,
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub scenario: String,
    pub row: RowKind,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub dim_ker: Option<usize>,
    pub dim_coker: Option<usize>,
    pub index: Option<i64>,
    pub verdict: Option<String>,
    pub formula_index: Option<i64>,
    pub eta0: f64,
    pub eta1: f64,
    pub h0: usize,
    pub h1: usize,
    #[serde(skip)]
    pub wall_time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioOutcome {
    pub name: String,
    pub verdict: Option<Verdict>,
    pub index: Option<i64>,
    pub formula_index: Option<i64>,
    pub applicability: Option<Applicability>,
    /// `None` when the scenario has no `expected` block.
    pub matched: Option<bool>,
    pub mismatches: Vec<String>,
    pub error: Option<String>,
    pub formula_error: Option<String>,
    #[serde(skip)]
    pub ill_conditioned: bool,
    #[serde(skip)]
    pub wall_time: f64,
}

impl ScenarioOutcome {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.matched != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub schema: &'static str,
    pub rows: Vec<ReportRow>,
    pub scenarios: Vec<ScenarioOutcome>,
}

fn engine_index(v: &Verdict) -> Option<i64> {
    match v {
        Verdict::Fredholm { index } => Some(*index),
        _ => None,
    }
}

/// Runs one scenario. Window cells inside it use `exec` as well.
pub fn run_scenario(scenario: &Scenario, exec: Execution) -> (ScenarioOutcome, Vec<ReportRow>) {
    let start = Instant::now();
    let mut options = scenario.options;
    options.execution = exec;
    let cyl = &scenario.cylinder;
    let (eta0, eta1) = (eta_analytic(&cyl.past), eta_analytic(&cyl.future));
    let (h0, h1) = (cyl.past.kernel_dimension(), cyl.future.kernel_dimension());

    let (prediction, formula_error): (Option<IndexPrediction>, Option<String>) =
        match predict(&scenario.condition0, &scenario.condition1, cyl, GRAPH_NORM_THRESHOLD) {
            Ok(p) => (p, None),
            Err(e) => (None, Some(e.to_string())),
        };
    let applicability = prediction.as_ref().map(|p| p.applicability);
    let report = fredholm_verdict(
        &scenario.condition0,
        &scenario.condition1,
        cyl,
        &scenario.schedule,
        &options,
    );
    // no prediction for conditions the engine rejects as malformed
    let formula_index = prediction
        .as_ref()
        .filter(|p| p.applicability == Applicability::Product)
        .filter(|_| !matches!(report, Err(Error::InvalidCondition(_))))
        .map(|p| p.value);
    let row = |kind, n, ker, coker, index, verdict| ReportRow {
        scenario: scenario.name.clone(),
        row: kind,
        n,
        dim_ker: ker,
        dim_coker: coker,
        index,
        verdict,
        formula_index,
        eta0,
        eta1,
        h0,
        h1,
        wall_time: None,
    };

    let mut rows = Vec::new();
    let mut outcome = ScenarioOutcome {
        name: scenario.name.clone(),
        verdict: None,
        index: None,
        formula_index,
        applicability,
        matched: None,
        mismatches: Vec::new(),
        error: None,
        formula_error,
        ill_conditioned: false,
        wall_time: 0.0,
    };
    match report {
        Ok(report) => {
            for w in &report.windows {
                rows.push(row(
                    RowKind::Window,
                    Some(w.radius),
                    Some(w.dim_intersection),
                    Some(w.dim_cokernel),
                    Some(w.index),
                    None,
                ));
            }
            let last = report.windows.last();
            let index = engine_index(&report.verdict);
            rows.push(row(
                RowKind::Summary,
                last.map(|w| w.radius),
                last.map(|w| w.dim_intersection),
                last.map(|w| w.dim_cokernel),
                index,
                Some(report.verdict.to_string()),
            ));
            outcome.verdict = Some(report.verdict);
            outcome.index = index;
        }
        Err(e) => {
            outcome.ill_conditioned = matches!(e, Error::IllConditioned { .. });
            outcome.error = Some(e.to_string());
            rows.push(row(RowKind::Summary, None, None, None, None, Some(format!("Error: {e}"))));
        }
    }

    if let Some(exp) = &scenario.expected {
        let mut miss = Vec::new();
        if let Some(p) = exp.verdict {
            match &outcome.verdict {
                Some(v) if p.matches(v) => {}
                Some(v) => miss.push(format!("verdict {v}, expected {p}")),
                None => miss.push(format!("no verdict, expected {p}")),
            }
        }
        if let Some(i) = exp.index {
            if outcome.index != Some(i) {
                miss.push(format!("index {:?}, expected {i}", outcome.index));
            }
        }
        if let Some(f) = exp.formula_index {
            if outcome.formula_index != Some(f) {
                miss.push(format!("formula index {:?}, expected {f}", outcome.formula_index));
            }
        }
        outcome.matched = Some(miss.is_empty() && outcome.error.is_none());
        outcome.mismatches = miss;
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome.wall_time = elapsed;
    if let Some(summary) = rows.last_mut() {
        summary.wall_time = Some(elapsed);
    }
    (outcome, rows)
}

/// Runs scenarios concurrently; rows come back in input order.
pub fn run_scenarios(scenarios: &[Scenario], exec: Execution) -> BatchReport {
    let results = map_collect(exec, scenarios, |s| run_scenario(s, exec));
    let mut rows = Vec::new();
    let mut outcomes = Vec::new();
    for (o, r) in results {
        outcomes.push(o);
        rows.extend(r);
    }
    BatchReport {
        schema: REPORT_SCHEMA,
        rows,
        scenarios: outcomes,
    }
}

pub fn exit_status(report: &BatchReport) -> i32 {
    if report.scenarios.iter().any(|o| o.ill_conditioned) {
        exit::ILL_CONDITIONED
    } else if report.scenarios.iter().all(|o| o.passed()) {
        exit::OK
    } else {
        exit::FAILURE
    }
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

pub fn render_csv(report: &BatchReport) -> Result<String, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in &report.rows {
        w.write_record([
            r.scenario.clone(),
            match r.row {
                RowKind::Window => "window".into(),
                RowKind::Summary => "summary".into(),
            },
            opt(&r.n),
            opt(&r.dim_ker),
            opt(&r.dim_coker),
            opt(&r.index),
            opt(&r.verdict),
            opt(&r.formula_index),
            r.eta0.to_string(),
            r.eta1.to_string(),
            r.h0.to_string(),
            r.h1.to_string(),
            r.wall_time.map(|t| format!("{t:.6}")).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_json(report: &BatchReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn meta_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".meta.json");
    out.with_file_name(name)
}

#[derive(Serialize)]
struct Metadata<'a> {
    schema: &'a str,
    generated_unix_seconds: u64,
    wall_time: BTreeMap<&'a str, f64>,
}

/// Writes the report and, for JSON, the timing sidecar.
pub fn write_report(report: &BatchReport, out: &Path, format: Format) -> std::io::Result<()> {
    match format {
        Format::Csv => {
            let text = render_csv(report).map_err(std::io::Error::other)?;
            std::fs::write(out, text)
        }
        Format::Json => {
            std::fs::write(out, render_json(report))?;
            let meta = Metadata {
                schema: REPORT_SCHEMA,
                generated_unix_seconds: SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
                wall_time: report
                    .scenarios
                    .iter()
                    .map(|o| (o.name.as_str(), o.wall_time))
                    .collect(),
            };
            let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
            std::fs::write(meta_path(out), text + "\n")
        }
    }
}

fn report_failures(report: &BatchReport) {
    for o in report.scenarios.iter().filter(|o| !o.passed()) {
        if let Some(e) = &o.error {
            eprintln!("{}: {e}", o.name);
        }
        for m in &o.mismatches {
            eprintln!("{}: {m}", o.name);
        }
    }
}

fn parse_failure(e: &ScenarioError) -> i32 {
    eprintln!("error: {e}");
    exit::PARSE
}

/// Parses, runs and reports a batch of scenario files.
pub fn run_batch<P: AsRef<Path>>(
    paths: &[P],
    out: &Path,
    format: Format,
    overrides: &Overrides,
    exec: Execution,
) -> i32 {
    let scenarios = match load_batch(paths, overrides) {
        Ok(s) => s,
        Err(e) => return parse_failure(&e),
    };
    let report = run_scenarios(&scenarios, exec);
    if let Err(e) = write_report(&report, out, format) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return exit::FAILURE;
    }
    report_failures(&report);
    exit_status(&report)
}

/// One-page markdown table of the golden scenarios.
pub fn render_summary(scenarios: &[Scenario], report: &BatchReport) -> String {
    let mut s = String::new();
    let passed = report.scenarios.iter().filter(|o| o.passed()).count();
    let _ = writeln!(s, "# Golden scenarios\n");
    let _ = writeln!(s, "{} scenarios, {} matches\n", report.scenarios.len(), passed);
    let _ = writeln!(s, "| scenario | claim | verdict | index | formula | expected | result |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|");
    for (sc, o) in scenarios.iter().zip(&report.scenarios) {
        let expected = sc
            .expected
            .as_ref()
            .map(|e| {
                let mut parts = Vec::new();
                if let Some(v) = e.verdict {
                    parts.push(v.to_string());
                }
                if let Some(i) = e.index {
                    parts.push(format!("index {i}"));
                }
                if let Some(f) = e.formula_index {
                    parts.push(format!("formula {f}"));
                }
                parts.join(", ")
            })
            .unwrap_or_default();
        let verdict = match (&o.verdict, &o.error) {
            (Some(v), _) => v.to_string(),
            (None, Some(e)) => format!("error: {e}"),
            (None, None) => String::new(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            o.name,
            sc.description.as_deref().unwrap_or(""),
            verdict.replace('|', "/"),
            opt(&o.index),
            opt(&o.formula_index),
            expected,
            if o.passed() { "match" } else { "MISMATCH" }
        );
    }
    s
}

/// Runs the golden set (embedded, or every `*.toml` in `golden_dir`) and
/// writes the markdown summary to `out`.
pub fn reproduce_paper(out: &Path, golden_dir: Option<&Path>, overrides: &Overrides, exec: Execution) -> i32 {
    let scenarios = match golden_dir {
        None => crate::golden::scenarios(overrides),
        Some(dir) => crate::golden::scenarios_in(dir, overrides),
    };
    let scenarios = match scenarios {
        Ok(s) => s,
        Err(e) => return parse_failure(&e),
    };
    let report = run_scenarios(&scenarios, exec);
    if let Err(e) = std::fs::write(out, render_summary(&scenarios, &report)) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return exit::FAILURE;
    }
    report_failures(&report);
    exit_status(&report)
}
