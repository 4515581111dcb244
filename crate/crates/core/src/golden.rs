//! Built-in golden scenarios, one file per claim, each with an `expected`
//! block so the set verifies itself.

use std::path::Path;

use crate::scenario::{parse_scenarios, Overrides, Scenario, ScenarioError};

macro_rules! golden {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../scenarios/", $name, ".toml")))),*]
    };
}

/// `(name, file contents)` in reporting order.
pub const GOLDEN: &[(&str, &str)] = golden![
    "aps_trivial_spin",
    "anti_aps",
    "nontrivial_spin",
    "twisted",
    "generalized_aps_a0_7",
    "compact_graph",
    "small_norm_graph",
    "counterexample_4_8",
    "chirality",
    "finite_dim_pair",
    "warped_unitarity",
];

pub fn scenarios(overrides: &Overrides) -> Result<Vec<Scenario>, ScenarioError> {
    let mut out = Vec::new();
    for (name, text) in GOLDEN {
        out.extend(parse_scenarios(text, &format!("{name}.toml"), overrides)?);
    }
    Ok(out)
}

/// Every `*.toml` file in `dir`, in file-name order.
pub fn scenarios_in(dir: &Path, overrides: &Overrides) -> Result<Vec<Scenario>, ScenarioError> {
    let entries = std::fs::read_dir(dir).map_err(|e| ScenarioError::Io {
        file: dir.display().to_string(),
        message: e.to_string(),
    })?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    crate::scenario::load_batch(&paths, overrides)
}
