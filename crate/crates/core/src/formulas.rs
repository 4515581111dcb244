//! Closed-form index predictions for product cylinders, built from the
//! spectral data of the boundary operators: kernel dimensions `h`, eta
//! invariants, and finite-dimensional corrections.

use serde::Serialize;

use crate::boundary::{BoundaryCondition, GraphForm, GraphMap, Side, SpectralCut};
use crate::error::{Error, Result};
use crate::fredholm::{fredholm_verdict, Cylinder, EngineOptions, Verdict};
use crate::spectrum::SpectrumModel;

/// Eta invariant of a circle model from the Hurwitz-zeta values
/// `ζ(0, a) = 1/2 - a`: `rank · (1 - 2α)` for `α ∈ (0, 1)`, zero for `α = 0`
/// and for the doubled model.
pub fn eta_analytic(model: &SpectrumModel) -> f64 {
    match model {
        SpectrumModel::Circle(c) => {
            if c.doubled() {
                return 0.0;
            }
            let alpha = c.alpha();
            if alpha == 0.0 {
                0.0
            } else {
                c.rank() as f64 * (1.0 - 2.0 * alpha)
            }
        }
        SpectrumModel::Synthetic(s) => s
            .entries()
            .iter()
            .map(|&(l, m)| l.signum() * if l == 0.0 { 0.0 } else { m as f64 })
            .sum(),
    }
}

/// Numerical regularization ladder for [`eta_numeric`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaLadder {
    /// Chebyshev nodes for the estimate.
    pub nodes: usize,
    /// Chebyshev nodes for the comparison estimate giving the residual.
    pub check_nodes: usize,
    pub s_min: f64,
    pub s_max: f64,
    pub base_cutoff: usize,
    pub levels: usize,
    pub tolerance: f64,
}

impl Default for EtaLadder {
    fn default() -> Self {
        EtaLadder {
            nodes: 14,
            check_nodes: 12,
            s_min: 0.5,
            s_max: 2.0,
            base_cutoff: 64,
            levels: 7,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EtaEstimate {
    pub value: f64,
    pub residual: f64,
}

fn eta_partial_sum(model: &SpectrumModel, s: f64, cutoff: usize) -> f64 {
    match model {
        SpectrumModel::Circle(c) => {
            let offset = c.offset();
            let scale = (2.0 * std::f64::consts::PI / c.length()).powf(-s);
            let n = cutoff as i64;
            let mut total = 0.0;
            for k in -n..=n {
                let r = k as f64 + offset;
                if r != 0.0 {
                    total += r.signum() * r.abs().powf(-s);
                }
            }
            // mirrored channels cancel the first copy exactly
            let copies = if c.doubled() { 0.0 } else { c.rank() as f64 };
            copies * scale * total
        }
        SpectrumModel::Synthetic(sp) => sp
            .entries()
            .iter()
            .filter(|e| e.0 != 0.0)
            .map(|&(l, m)| m as f64 * l.signum() * l.abs().powf(-s))
            .sum(),
    }
}

/// `Σ sgn(λ) |λ|^{-s}` at fixed `s > 0`: symmetric partial sums at cutoffs
/// `N0 · 2^i`, Richardson-extrapolated in `N` with tail exponents `s + j`.
pub fn eta_function(model: &SpectrumModel, s: f64, base_cutoff: usize, levels: usize) -> f64 {
    let mut table: Vec<f64> = (0..levels)
        .map(|i| eta_partial_sum(model, s, base_cutoff << i))
        .collect();
    for j in 0..levels.saturating_sub(1) {
        let f = 2f64.powf(s + j as f64);
        table = table
            .windows(2)
            .map(|w| (f * w[1] - w[0]) / (f - 1.0))
            .collect();
    }
    table[0]
}

fn extrapolate_to_zero(model: &SpectrumModel, ladder: &EtaLadder, nodes: usize) -> f64 {
    let mid = 0.5 * (ladder.s_min + ladder.s_max);
    let half = 0.5 * (ladder.s_max - ladder.s_min);
    let s: Vec<f64> = (0..nodes)
        .map(|i| mid + half * (std::f64::consts::PI * (i as f64 + 0.5) / nodes as f64).cos())
        .collect();
    let values: Vec<f64> = s
        .iter()
        .map(|&si| eta_function(model, si, ladder.base_cutoff, ladder.levels))
        .collect();
    // Lagrange interpolant evaluated at s = 0
    (0..nodes)
        .map(|i| {
            let w: f64 = (0..nodes)
                .filter(|&j| j != i)
                .map(|j| (0.0 - s[j]) / (s[i] - s[j]))
                .product();
            w * values[i]
        })
        .sum()
}

/// Eta invariant by regularized partial sums, independent of the
/// closed form: the eta function is evaluated on a Chebyshev ladder of
/// exponents in `[s_min, s_max]` and its polynomial interpolant is continued
/// to `s = 0`. Zero eigenvalues are excluded (they enter through `h`).
pub fn eta_numeric(model: &SpectrumModel, ladder: &EtaLadder) -> Result<EtaEstimate> {
    let value = extrapolate_to_zero(model, ladder, ladder.nodes);
    let check = extrapolate_to_zero(model, ladder, ladder.check_nodes);
    let residual = (value - check).abs();
    if residual.is_nan() || residual > ladder.tolerance {
        return Err(Error::NotConverged { residual });
    }
    Ok(EtaEstimate { value, residual })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Applicability {
    /// Product cylinder and all hypotheses of the formula hold.
    Product,
    /// Graph-form hypotheses (compactness or small norm product) fail.
    NotGuaranteed,
}

/// Named contributions to an index prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexTerms {
    pub h0: usize,
    pub h1: usize,
    pub eta0: f64,
    pub eta1: f64,
    /// `+1` for APS-type bases, `-1` for anti-APS, `0` when the base pair
    /// carries no spectral term.
    pub spectral_sign: i64,
    /// `sgn(a0) dim W0 - sgn(a1) dim W1`.
    pub cut_correction: i64,
    /// Graph-form corrections `dim W0+ - dim W0- + dim W1- - dim W1+`.
    pub graph_correction: i64,
    /// Added minus removed modes of finite modifications.
    pub finite_correction: i64,
}

impl IndexTerms {
    pub fn spectral_term(&self) -> f64 {
        -(self.h0 as f64 + self.h1 as f64 + self.eta0 - self.eta1) / 2.0
    }

    pub fn assembled(&self) -> f64 {
        self.spectral_sign as f64 * self.spectral_term()
            + (self.cut_correction + self.graph_correction + self.finite_correction) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexPrediction {
    pub value: i64,
    pub terms: IndexTerms,
    pub applicability: Applicability,
    /// Set when a cut value coincides with an eigenvalue; the half-open
    /// conventions then decide which side the eigenspace falls on.
    pub cut_on_eigenvalue: bool,
}

impl IndexPrediction {
    fn assemble(terms: IndexTerms, applicability: Applicability, cut_on_eigenvalue: bool) -> Result<Self> {
        let x = terms.assembled();
        if (x - x.round()).abs() > 1e-9 {
            return Err(Error::ConventionViolation { value: x });
        }
        Ok(IndexPrediction {
            value: x.round() as i64,
            terms,
            applicability,
            cut_on_eigenvalue,
        })
    }
}

fn require_product(cylinder: &Cylinder) -> Result<()> {
    if !cylinder.evolution.is_product() {
        return Err(Error::NonProduct(
            "geometric integrand and transgression terms are not modeled".into(),
        ));
    }
    Ok(())
}

fn base_terms(model0: &SpectrumModel, model1: &SpectrumModel, sign: i64) -> IndexTerms {
    IndexTerms {
        h0: model0.kernel_dimension(),
        h1: model1.kernel_dimension(),
        eta0: eta_analytic(model0),
        eta1: eta_analytic(model1),
        spectral_sign: sign,
        cut_correction: 0,
        graph_correction: 0,
        finite_correction: 0,
    }
}

/// APS index `-(h0 + h1 + η0 - η1) / 2` on a product cylinder.
pub fn aps_index_product(cylinder: &Cylinder) -> Result<IndexPrediction> {
    require_product(cylinder)?;
    IndexPrediction::assemble(base_terms(&cylinder.past, &cylinder.future, 1), Applicability::Product, false)
}

/// Index of the complementary (anti-APS) pair: the negated APS index.
pub fn anti_aps_index(cylinder: &Cylinder) -> Result<IndexPrediction> {
    require_product(cylinder)?;
    IndexPrediction::assemble(base_terms(&cylinder.past, &cylinder.future, -1), Applicability::Product, false)
}

fn sgn(a: f64) -> i64 {
    if a > 0.0 {
        1
    } else if a < 0.0 {
        -1
    } else {
        0
    }
}

/// Multiplicities between zero and the cut values: `W0` counts eigenvalues
/// in `[0, a0)` (or `[a0, 0)`), `W1` in `(0, a1]` (or `(a1, 0]`).
fn cut_correction(model0: &SpectrumModel, a0: f64, model1: &SpectrumModel, a1: f64) -> Result<(i64, bool)> {
    let w0 = if a0 >= 0.0 {
        model0.multiplicity_in(0.0, true, a0, false)?
    } else {
        model0.multiplicity_in(a0, true, 0.0, false)?
    };
    let w1 = if a1 >= 0.0 {
        model1.multiplicity_in(0.0, false, a1, true)?
    } else {
        model1.multiplicity_in(a1, false, 0.0, true)?
    };
    let on_eigen = (a0 != 0.0 && model0.multiplicity_in(a0, true, a0, true)? > 0)
        || (a1 != 0.0 && model1.multiplicity_in(a1, true, a1, true)? > 0);
    Ok((sgn(a0) * w0 as i64 - sgn(a1) * w1 as i64, on_eigen))
}

/// Index of `(APS0(a0), APS1(a1))`: the APS index corrected by the
/// multiplicities of eigenvalues between `0` and `a_j`.
pub fn generalized_aps_index(cylinder: &Cylinder, a0: f64, a1: f64) -> Result<IndexPrediction> {
    require_product(cylinder)?;
    let mut terms = base_terms(&cylinder.past, &cylinder.future, 1);
    let (corr, on_eigen) = cut_correction(&cylinder.past, a0, &cylinder.future, a1)?;
    terms.cut_correction = corr;
    IndexPrediction::assemble(terms, Applicability::Product, on_eigen)
}

/// Index of a pair of graph-form conditions: generalized APS index of the
/// cuts plus `dim W0+ - dim W0- + dim W1- - dim W1+`. Marked
/// [`Applicability::NotGuaranteed`] unless one map is compact or
/// `‖g0‖ ‖g1‖ < norm_threshold`.
pub fn graph_form_index(
    cond0: &GraphForm,
    cond1: &GraphForm,
    cylinder: &Cylinder,
    norm_threshold: f64,
) -> Result<IndexPrediction> {
    if cond0.cut.side != Side::Past || cond1.cut.side != Side::Future {
        return Err(Error::InvalidCondition(
            "graph-form index expects a past cut at Σ0 and a future cut at Σ1".into(),
        ));
    }
    require_product(cylinder)?;
    let mut terms = base_terms(&cylinder.past, &cylinder.future, 1);
    let (corr, on_eigen) = cut_correction(&cylinder.past, cond0.cut.a, &cylinder.future, cond1.cut.a)?;
    terms.cut_correction = corr;
    terms.graph_correction = (cond0.kept().len() as i64 - cond0.dropped().len() as i64)
        + (cond1.kept().len() as i64 - cond1.dropped().len() as i64);
    let guaranteed = graph_hypotheses_hold(&cond0.g, &cond1.g, norm_threshold);
    let applicability = if guaranteed {
        Applicability::Product
    } else {
        Applicability::NotGuaranteed
    };
    IndexPrediction::assemble(terms, applicability, on_eigen)
}

pub fn graph_hypotheses_hold(g0: &GraphMap, g1: &GraphMap, norm_threshold: f64) -> bool {
    g0.is_compact() || g1.is_compact() || g0.norm() * g1.norm() < norm_threshold
}

/// `dim B0 - codim B1` for a finite-dimensional `B0` and a
/// finite-codimensional `B1`.
pub fn finite_dim_index(dim_b0: usize, codim_b1: usize) -> i64 {
    dim_b0 as i64 - codim_b1 as i64
}

fn peel(cond: &BoundaryCondition) -> (&BoundaryCondition, i64) {
    match cond {
        BoundaryCondition::FiniteMod { base, add, remove } => {
            let (inner, c) = peel(base);
            (inner, c + add.len() as i64 - remove.len() as i64)
        }
        other => (other, 0),
    }
}

fn as_cut(cond: &BoundaryCondition) -> Option<SpectralCut> {
    match cond {
        BoundaryCondition::SpectralCut(c) => Some(*c),
        _ => None,
    }
}

fn is_zero(cut: &SpectralCut) -> bool {
    matches!((cut.side, cut.a), (Side::Past, a) if a == f64::NEG_INFINITY)
        || matches!((cut.side, cut.a), (Side::Future, a) if a == f64::INFINITY)
}

fn is_whole(cut: &SpectralCut) -> bool {
    matches!((cut.side, cut.a), (Side::Past, a) if a == f64::INFINITY)
        || matches!((cut.side, cut.a), (Side::Future, a) if a == f64::NEG_INFINITY)
}

fn as_graph(cond: &BoundaryCondition) -> Option<GraphForm> {
    match cond {
        BoundaryCondition::GraphForm(g) => Some(g.clone()),
        BoundaryCondition::SpectralCut(c) if c.a.is_finite() => Some(GraphForm::new(*c, GraphMap::zero())),
        _ => None,
    }
}

/// Formula prediction for a scenario pair, when one applies. Finite
/// modifications are peeled off first and contribute `added - removed`.
/// Returns `Ok(None)` for pairs no formula covers (local conditions, explicit
/// subspaces, non-product cylinders with infinite-dimensional conditions).
pub fn predict(
    cond0: &BoundaryCondition,
    cond1: &BoundaryCondition,
    cylinder: &Cylinder,
    norm_threshold: f64,
) -> Result<Option<IndexPrediction>> {
    let (base0, fin0) = peel(cond0);
    let (base1, fin1) = peel(cond1);
    let finite = fin0 + fin1;

    if let (Some(c0), Some(c1)) = (as_cut(base0), as_cut(base1)) {
        if is_zero(&c0) && is_whole(&c1) {
            let mut terms = base_terms(&cylinder.past, &cylinder.future, 0);
            terms.finite_correction = finite;
            return IndexPrediction::assemble(terms, Applicability::Product, false).map(Some);
        }
    }
    if !cylinder.evolution.is_product() {
        return Ok(None);
    }
    let mut prediction = match (base0, base1) {
        (BoundaryCondition::Complement(b0), BoundaryCondition::Complement(b1)) => {
            match (as_cut(b0), as_cut(b1)) {
                (Some(c0), Some(c1))
                    if c0 == SpectralCut::past(0.0) && c1 == SpectralCut::future(0.0) =>
                {
                    anti_aps_index(cylinder)?
                }
                _ => return Ok(None),
            }
        }
        _ => match (as_graph(base0), as_graph(base1)) {
            (Some(g0), Some(g1)) if g0.cut.side == Side::Past && g1.cut.side == Side::Future => {
                graph_form_index(&g0, &g1, cylinder, norm_threshold)?
            }
            _ => return Ok(None),
        },
    };
    prediction.terms.finite_correction = finite;
    let x = prediction.terms.assembled();
    prediction.value = x.round() as i64;
    Ok(Some(prediction))
}

/// Smallest norm product in `products` at which the pair of constant-weight
/// mirror graphs over the APS cuts stops being Fredholm, or `None` if every
/// product stays Fredholm. Weights are split evenly, `w0 = w1 = sqrt(p)`.
pub fn empirical_norm_threshold(
    cylinder: &Cylinder,
    products: &[f64],
    schedule: &[usize],
    options: &EngineOptions,
) -> Result<Option<f64>> {
    use crate::boundary::WeightRule;
    for &p in products {
        let w = p.sqrt();
        let g0 = BoundaryCondition::GraphForm(GraphForm::new(
            SpectralCut::past(0.0),
            GraphMap::mirror(WeightRule::constant(w)),
        ));
        let g1 = BoundaryCondition::GraphForm(GraphForm::new(
            SpectralCut::future(0.0),
            GraphMap::mirror(WeightRule::constant(w)),
        ));
        let report = match fredholm_verdict(&g0, &g1, cylinder, schedule, options) {
            Ok(r) => r,
            Err(Error::IllConditioned { .. }) => return Ok(Some(p)),
            Err(e) => return Err(e),
        };
        if !matches!(report.verdict, Verdict::Fredholm { .. }) {
            return Ok(Some(p));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{CircleDiracModel, SpinStructure};

    fn circle(spin: SpinStructure, theta: f64, length: f64, rank: usize) -> SpectrumModel {
        CircleDiracModel::new(spin, theta, length, rank, false).unwrap().into()
    }

    /// ζ_H(0, a) = 1/2 - a, so η = ζ_H(0, α) - ζ_H(0, 1 - α).
    fn hurwitz_oracle(alpha: f64) -> f64 {
        let zeta0 = |a: f64| 0.5 - a;
        zeta0(alpha) - zeta0(1.0 - alpha)
    }

    #[test]
    fn eta_analytic_examples() {
        assert_eq!(eta_analytic(&circle(SpinStructure::Trivial, 0.0, 1.0, 1)), 0.0);
        assert_eq!(eta_analytic(&circle(SpinStructure::Trivial, 0.25, 1.0, 1)), 0.5);
        assert_eq!(hurwitz_oracle(0.25), 0.5);
        assert_eq!(eta_analytic(&circle(SpinStructure::Nontrivial, 0.0, 1.0, 1)), 0.0);
        for a in [0.1, 0.3, 0.75, 0.9] {
            let m = circle(SpinStructure::Trivial, a, 1.0, 1);
            assert!((eta_analytic(&m) - hurwitz_oracle(a)).abs() < 1e-15);
        }
        assert_eq!(eta_analytic(&circle(SpinStructure::Trivial, 0.25, 1.0, 3)), 1.5);
    }

    #[test]
    fn eta_is_length_independent() {
        for l in [0.5, 1.0, 2.0] {
            assert_eq!(eta_analytic(&circle(SpinStructure::Trivial, 0.1, l, 1)), eta_analytic(&circle(SpinStructure::Trivial, 0.1, 1.0, 1)));
        }
    }

    #[test]
    fn eta_numeric_examples() {
        for (alpha, expect) in [(0.25, 0.5), (0.1, 0.8), (0.75, -0.5)] {
            let m = circle(SpinStructure::Trivial, alpha, 1.0, 1);
            let e = eta_numeric(&m, &EtaLadder::default()).unwrap();
            assert!((e.value - expect).abs() < 1e-6, "alpha {alpha}: {}", e.value);
        }
    }

    #[test]
    fn eta_numeric_flags_bad_ladders() {
        let m = circle(SpinStructure::Trivial, 0.25, 1.0, 1);
        let coarse = EtaLadder {
            nodes: 3,
            check_nodes: 2,
            ..EtaLadder::default()
        };
        assert!(matches!(eta_numeric(&m, &coarse), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn aps_examples() {
        let cyl = |spin, theta| Cylinder::ultrastatic(circle(spin, theta, 1.0, 1), 1.0);
        assert_eq!(aps_index_product(&cyl(SpinStructure::Trivial, 0.0)).unwrap().value, -1);
        assert_eq!(aps_index_product(&cyl(SpinStructure::Nontrivial, 0.0)).unwrap().value, 0);
        assert_eq!(aps_index_product(&cyl(SpinStructure::Trivial, 0.25)).unwrap().value, 0);
        assert_eq!(anti_aps_index(&cyl(SpinStructure::Trivial, 0.0)).unwrap().value, 1);
        assert_eq!(anti_aps_index(&cyl(SpinStructure::Nontrivial, 0.0)).unwrap().value, 0);
        assert_eq!(anti_aps_index(&cyl(SpinStructure::Trivial, 0.25)).unwrap().value, 0);
    }

    #[test]
    fn mismatched_twists_violate_integrality() {
        let cyl = Cylinder {
            past: circle(SpinStructure::Trivial, 0.25, 1.0, 1),
            future: circle(SpinStructure::Trivial, 0.0, 1.0, 1),
            evolution: crate::evolution::Evolution::Ultrastatic { time: 1.0 },
        };
        assert!(matches!(aps_index_product(&cyl), Err(Error::ConventionViolation { .. })));
    }

    #[test]
    fn non_product_is_refused() {
        let cyl = Cylinder {
            past: circle(SpinStructure::Trivial, 0.0, 1.0, 1),
            future: circle(SpinStructure::Trivial, 0.0, 1.0, 1),
            evolution: crate::evolution::Evolution::SyntheticUnitary { seed: 1, rotations: None },
        };
        assert!(matches!(aps_index_product(&cyl), Err(Error::NonProduct(_))));
    }

    #[test]
    fn generalized_examples() {
        let cyl = Cylinder::ultrastatic(circle(SpinStructure::Trivial, 0.0, 1.0, 1), 1.0);
        assert_eq!(generalized_aps_index(&cyl, 7.0, 0.0).unwrap().value, 1);
        assert_eq!(generalized_aps_index(&cyl, 0.0, 0.0).unwrap().value, -1);
        assert_eq!(generalized_aps_index(&cyl, -1.0, 0.0).unwrap().value, -1);
        let on = generalized_aps_index(&cyl, 2.0 * std::f64::consts::PI, 0.0).unwrap();
        assert!(on.cut_on_eigenvalue);
        assert_eq!(on.value, 0);
    }

    #[test]
    fn finite_dim_examples() {
        assert_eq!(finite_dim_index(3, 5), -2);
        assert_eq!(finite_dim_index(0, 0), 0);
        assert_eq!(finite_dim_index(4, 4), 0);
    }
}
