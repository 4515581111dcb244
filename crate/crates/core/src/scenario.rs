//! Scenario files: a TOML array of `[[scenario]]` tables, each describing
//! the boundary spectra, the evolution, the two boundary conditions, the
//! window schedule and an optional `expected` block.
//!
//! Real numbers may be written as TOML numbers or as decimal strings
//! (`"0.25"`, `"-inf"`); either way they are parsed to `f64` exactly once.
//! The condition at index 0 lives on the past boundary, the one at index 1 on
//! the future boundary, which fixes the side of spectral cuts.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use toml::Spanned;

use crate::boundary::{
    chirality_condition, BoundaryCondition, Chirality, GraphForm, GraphMap, Pairing, Side,
    SpectralCut, WeightRule,
};
use crate::evolution::{Evolution, Integrator, LengthProfile, WarpedProduct};
use crate::fredholm::{validate_schedule, Cylinder, EngineOptions, NotFredholmReason, Verdict, DEFAULT_SCHEDULE};
use crate::linalg::{CMatrix, RankPolicy};
use crate::spectrum::{CircleDiracModel, ModeIndex, SpectrumModel, SpinStructure, SyntheticSpectrum};

/// Real number read from a decimal string or a TOML number.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decimal(pub f64);

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Float(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(i) => Ok(Decimal(i as f64)),
            Raw::Float(x) => Ok(Decimal(x)),
            Raw::Text(s) => s
                .trim()
                .parse::<f64>()
                .map(Decimal)
                .map_err(|_| serde::de::Error::custom(format!("`{s}` is not a decimal number"))),
        }
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        // shortest representation that parses back to the same f64
        s.serialize_str(&self.0.to_string())
    }
}

impl From<f64> for Decimal {
    fn from(x: f64) -> Self {
        Decimal(x)
    }
}

fn one() -> Decimal {
    Decimal(1.0)
}

fn zero() -> Decimal {
    Decimal(0.0)
}

fn default_step() -> Decimal {
    Decimal(1e-3)
}

fn default_rank() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Circle {
        spin: SpinStructure,
        #[serde(default = "zero")]
        theta: Decimal,
        #[serde(default = "one")]
        length: Decimal,
        #[serde(default = "default_rank")]
        rank: usize,
        #[serde(default)]
        doubled: bool,
    },
    /// Eigenvalue list `[[value, multiplicity], ...]`.
    Synthetic { eigenvalues: Vec<(Decimal, usize)> },
}

impl ModelSpec {
    pub fn build(&self) -> crate::Result<SpectrumModel> {
        match self {
            ModelSpec::Circle {
                spin,
                theta,
                length,
                rank,
                doubled,
            } => Ok(CircleDiracModel::new(*spin, theta.0, length.0, *rank, *doubled)?.into()),
            ModelSpec::Synthetic { eigenvalues } => Ok(SpectrumModel::Synthetic(SyntheticSpectrum::new(
                eigenvalues.iter().map(|(l, m)| (l.0, *m)).collect(),
            )?)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant { value: Decimal },
    Linear { start: Decimal, end: Decimal },
    Table { times: Vec<Decimal>, values: Vec<Decimal> },
}

impl ProfileSpec {
    fn build(&self) -> LengthProfile {
        let v = |xs: &[Decimal]| xs.iter().map(|x| x.0).collect();
        match self {
            ProfileSpec::Constant { value } => LengthProfile::Constant { value: value.0 },
            ProfileSpec::Linear { start, end } => LengthProfile::Linear {
                start: start.0,
                end: end.0,
            },
            ProfileSpec::Table { times, values } => LengthProfile::Table {
                times: v(times),
                values: v(values),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EvolutionSpec {
    Ultrastatic {
        #[serde(default = "one")]
        time: Decimal,
    },
    Warped {
        #[serde(default = "zero")]
        t0: Decimal,
        #[serde(default = "one")]
        t1: Decimal,
        #[serde(default = "default_step")]
        step: Decimal,
        #[serde(default)]
        integrator: Integrator,
        profile: ProfileSpec,
    },
    SyntheticUnitary {
        seed: u64,
        #[serde(default)]
        rotations: Option<usize>,
    },
}

impl Default for EvolutionSpec {
    fn default() -> Self {
        EvolutionSpec::Ultrastatic { time: one() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightSpec {
    Constant {
        value: Decimal,
        #[serde(default = "zero")]
        imag: Decimal,
    },
    /// `scale / (1 + |k|)^power`.
    Decay {
        #[serde(default = "one")]
        scale: Decimal,
        #[serde(default = "one")]
        power: Decimal,
    },
    Random { seed: u64, max: Decimal },
}

impl WeightSpec {
    fn build(&self) -> WeightRule {
        match self {
            WeightSpec::Constant { value, imag } => WeightRule::Constant {
                re: value.0,
                im: imag.0,
            },
            WeightSpec::Decay { scale, power } => WeightRule::Decay {
                scale: scale.0,
                power: power.0,
            },
            WeightSpec::Random { seed, max } => WeightRule::Random {
                seed: *seed,
                max: max.0,
            },
        }
    }
}

fn mirror() -> Pairing {
    Pairing::Mirror
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConditionSpec {
    /// Spectral cut at zero.
    Aps {},
    /// Orthogonal complement of the cut at zero.
    AntiAps {},
    Cut {
        a: Decimal,
    },
    Zero {},
    Whole {},
    Span {
        modes: Vec<ModeIndex>,
    },
    WholeWithout {
        modes: Vec<ModeIndex>,
    },
    FiniteMod {
        base: Box<ConditionSpec>,
        #[serde(default)]
        add: Vec<ModeIndex>,
        #[serde(default)]
        remove: Vec<ModeIndex>,
    },
    Graph {
        #[serde(default = "zero")]
        a: Decimal,
        #[serde(default)]
        w_plus: Vec<ModeIndex>,
        #[serde(default)]
        w_minus: Vec<ModeIndex>,
        #[serde(default = "mirror")]
        pairing: Pairing,
        weights: WeightSpec,
    },
    Chirality {
        sign: Chirality,
    },
    /// Constant fiber projector, rows of `[re, im]` entries.
    Local {
        projector: Vec<Vec<(Decimal, Decimal)>>,
    },
    Complement {
        of: Box<ConditionSpec>,
    },
}

impl ConditionSpec {
    pub fn build(&self, side: Side, model: &SpectrumModel) -> crate::Result<BoundaryCondition> {
        let cut = |a: f64| SpectralCut { a, side };
        Ok(match self {
            ConditionSpec::Aps {} => BoundaryCondition::aps(side),
            ConditionSpec::AntiAps {} => BoundaryCondition::anti_aps(side),
            ConditionSpec::Cut { a } => BoundaryCondition::SpectralCut(cut(a.0)),
            ConditionSpec::Zero {} => BoundaryCondition::zero(),
            ConditionSpec::Whole {} => BoundaryCondition::whole(),
            ConditionSpec::Span { modes } => BoundaryCondition::span_of(modes.clone()),
            ConditionSpec::WholeWithout { modes } => BoundaryCondition::whole_without(modes.clone()),
            ConditionSpec::FiniteMod { base, add, remove } => BoundaryCondition::FiniteMod {
                base: Box::new(base.build(side, model)?),
                add: add.clone(),
                remove: remove.clone(),
            },
            ConditionSpec::Graph {
                a,
                w_plus,
                w_minus,
                pairing,
                weights,
            } => BoundaryCondition::GraphForm(GraphForm {
                cut: cut(a.0),
                w_plus: w_plus.clone(),
                w_minus: w_minus.clone(),
                g: GraphMap {
                    pairing: pairing.clone(),
                    weights: weights.build(),
                },
            }),
            ConditionSpec::Chirality { sign } => chirality_condition(model, *sign)?,
            ConditionSpec::Local { projector } => {
                let n = projector.len();
                if projector.iter().any(|row| row.len() != n) {
                    return Err(crate::Error::InvalidCondition("local projector must be square".into()));
                }
                BoundaryCondition::Local {
                    projector: CMatrix::from_fn(n, n, |i, j| {
                        let (re, im) = projector[i][j];
                        Complex64::new(re.0, im.0)
                    }),
                }
            }
            ConditionSpec::Complement { of } => of.build(side, model)?.complement(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TolerancesSpec {
    pub rank_tau: Option<Decimal>,
    pub gap_ratio: Option<Decimal>,
    pub unitarity_tol: Option<Decimal>,
}

/// Expected outcome. `verdict` is `Fredholm`, `NotFredholm`,
/// `NotFredholm(GrowingKernel)`, `NotFredholm(GrowingCokernel)` or
/// `Inconclusive`; the bare forms match any index or reason.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectedSpec {
    pub verdict: Option<String>,
    pub index: Option<i64>,
    pub formula_index: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub model0: ModelSpec,
    /// Defaults to `model0`, with the circle length taken from the profile
    /// for warped evolutions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model1: Option<ModelSpec>,
    #[serde(default)]
    pub evolution: EvolutionSpec,
    pub condition0: ConditionSpec,
    pub condition1: ConditionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<usize>>,
    #[serde(default)]
    pub tolerances: TolerancesSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<ExpectedSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default)]
    scenario: Vec<Spanned<ScenarioSpec>>,
}

#[derive(Debug, Serialize)]
struct ScenarioFileOut<'a> {
    scenario: &'a [ScenarioSpec],
}

/// Run-wide settings that take precedence over the per-scenario values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub schedule: Option<Vec<usize>>,
    pub rank_tau: Option<f64>,
    pub gap_ratio: Option<f64>,
}

/// Verdict pattern from an `expected` block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictPattern {
    Fredholm,
    NotFredholm(Option<NotFredholmReason>),
    Inconclusive,
}

impl VerdictPattern {
    pub fn parse(s: &str) -> Option<Self> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let lower = s.to_ascii_lowercase();
        Some(match lower.as_str() {
            "fredholm" => VerdictPattern::Fredholm,
            "inconclusive" => VerdictPattern::Inconclusive,
            "notfredholm" => VerdictPattern::NotFredholm(None),
            "notfredholm(growingkernel)" => VerdictPattern::NotFredholm(Some(NotFredholmReason::GrowingKernel)),
            "notfredholm(growingcokernel)" => {
                VerdictPattern::NotFredholm(Some(NotFredholmReason::GrowingCokernel))
            }
            _ => return None,
        })
    }

    pub fn matches(&self, v: &Verdict) -> bool {
        match (self, v) {
            (VerdictPattern::Fredholm, Verdict::Fredholm { .. }) => true,
            (VerdictPattern::Inconclusive, Verdict::Inconclusive) => true,
            (VerdictPattern::NotFredholm(None), Verdict::NotFredholm { .. }) => true,
            (VerdictPattern::NotFredholm(Some(r)), Verdict::NotFredholm { reason }) => r == reason,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expected {
    pub verdict: Option<VerdictPattern>,
    pub index: Option<i64>,
    pub formula_index: Option<i64>,
}

/// A validated scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: Option<String>,
    pub cylinder: Cylinder,
    pub condition0: BoundaryCondition,
    pub condition1: BoundaryCondition,
    pub schedule: Vec<usize>,
    pub options: EngineOptions,
    pub expected: Option<Expected>,
    pub spec: ScenarioSpec,
}

/// Schema or syntax error, located in the source file.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("{file}:{line}:{column}: {message}")]
    Parse {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{file}: {message}")]
    Io { file: String, message: String },
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ScenarioSpec {
    /// Validates the spec and builds the models, conditions and evolution.
    pub fn resolve(&self, overrides: &Overrides) -> Result<Scenario, String> {
        let err = |e: crate::Error| e.to_string();
        if self.name.trim().is_empty() {
            return Err("scenario name must not be empty".into());
        }
        let schedule = overrides
            .schedule
            .clone()
            .or_else(|| self.schedule.clone())
            .unwrap_or_else(|| DEFAULT_SCHEDULE.to_vec());
        validate_schedule(&schedule).map_err(err)?;

        let model0 = self.model0.build().map_err(err)?;
        let (evolution, ends) = match &self.evolution {
            EvolutionSpec::Ultrastatic { time } => (Evolution::Ultrastatic { time: time.0 }, None),
            EvolutionSpec::Warped {
                t0,
                t1,
                step,
                integrator,
                profile,
            } => {
                let geometry = WarpedProduct::new(profile.build(), t0.0, t1.0).map_err(err)?;
                let ends = (geometry.length_at(t0.0).0, geometry.length_at(t1.0).0);
                (
                    Evolution::Warped {
                        geometry,
                        step: step.0,
                        integrator: *integrator,
                    },
                    Some(ends),
                )
            }
            EvolutionSpec::SyntheticUnitary { seed, rotations } => (
                Evolution::SyntheticUnitary {
                    seed: *seed,
                    rotations: *rotations,
                },
                None,
            ),
        };
        let model1 = match (&self.model1, ends, model0.as_circle()) {
            (Some(m), _, _) => m.build().map_err(err)?,
            (None, Some((l0, l1)), Some(c)) => {
                if (c.length() - l0).abs() > 1e-12 * l0 {
                    return Err(format!(
                        "model0 length {} differs from the profile length {l0} at t0",
                        c.length()
                    ));
                }
                c.with_length(l1).map_err(err)?.into()
            }
            (None, _, _) => model0.clone(),
        };

        let condition0 = self.condition0.build(Side::Past, &model0).map_err(err)?;
        let condition1 = self.condition1.build(Side::Future, &model1).map_err(err)?;

        let mut policy = RankPolicy::default();
        if let Some(t) = overrides.rank_tau.or(self.tolerances.rank_tau.map(|d| d.0)) {
            policy.tau = t;
        }
        if let Some(g) = overrides.gap_ratio.or(self.tolerances.gap_ratio.map(|d| d.0)) {
            policy.gap_ratio = g;
        }
        if !(policy.tau > 0.0 && policy.tau < 1.0 && policy.gap_ratio >= 1.0) {
            return Err(format!(
                "rank_tau must lie in (0, 1) and gap_ratio be at least 1, got {} and {}",
                policy.tau, policy.gap_ratio
            ));
        }
        let mut options = EngineOptions {
            policy,
            ..EngineOptions::default()
        };
        if let Some(u) = self.tolerances.unitarity_tol {
            if u.0.is_nan() || u.0 <= 0.0 {
                return Err("unitarity_tol must be positive".into());
            }
            options.unitarity_tol = u.0;
        }

        let expected = match &self.expected {
            None => None,
            Some(e) => Some(Expected {
                verdict: match &e.verdict {
                    None => None,
                    Some(v) => Some(VerdictPattern::parse(v).ok_or_else(|| format!("unknown verdict `{v}`"))?),
                },
                index: e.index,
                formula_index: e.formula_index,
            }),
        };

        Ok(Scenario {
            name: self.name.clone(),
            description: self.description.clone(),
            cylinder: Cylinder {
                past: model0,
                future: model1,
                evolution,
            },
            condition0,
            condition1,
            schedule,
            options,
            expected,
            spec: self.clone(),
        })
    }
}

/// Parses and validates one scenario file.
pub fn parse_scenarios(text: &str, file: &str, overrides: &Overrides) -> Result<Vec<Scenario>, ScenarioError> {
    let parsed: ScenarioFile = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(text, s.start));
        ScenarioError::Parse {
            file: file.to_string(),
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    parsed
        .scenario
        .into_iter()
        .map(|spanned| {
            let start = spanned.span().start;
            spanned.into_inner().resolve(overrides).map_err(|message| {
                let (line, column) = line_column(text, start);
                ScenarioError::Parse {
                    file: file.to_string(),
                    line,
                    column,
                    message,
                }
            })
        })
        .collect()
}

pub fn load_scenarios(path: &Path, overrides: &Overrides) -> Result<Vec<Scenario>, ScenarioError> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        file: file.clone(),
        message: e.to_string(),
    })?;
    parse_scenarios(&text, &file, overrides)
}

/// Loads several files and rejects duplicate names across the batch.
pub fn load_batch<P: AsRef<Path>>(paths: &[P], overrides: &Overrides) -> Result<Vec<Scenario>, ScenarioError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for p in paths {
        for s in load_scenarios(p.as_ref(), overrides)? {
            if !seen.insert(s.name.clone()) {
                return Err(ScenarioError::Parse {
                    file: p.as_ref().display().to_string(),
                    line: 1,
                    column: 1,
                    message: format!("duplicate scenario name `{}`", s.name),
                });
            }
            out.push(s);
        }
    }
    Ok(out)
}

/// Writes specs back in the scenario file format.
pub fn to_toml(specs: &[ScenarioSpec]) -> Result<String, toml::ser::Error> {
    toml::to_string(&ScenarioFileOut { scenario: specs })
}

impl fmt::Display for VerdictPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VerdictPattern::Fredholm => write!(f, "Fredholm"),
            VerdictPattern::Inconclusive => write!(f, "Inconclusive"),
            VerdictPattern::NotFredholm(None) => write!(f, "NotFredholm"),
            VerdictPattern::NotFredholm(Some(r)) => write!(f, "NotFredholm({r:?})"),
        }
    }
}
