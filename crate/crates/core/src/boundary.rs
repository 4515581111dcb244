//! Boundary conditions as closed subspaces of the boundary Hilbert space and
//! their materialization as orthogonal projectors on a truncation window.
//!
//! Mode-rule conditions (spectral cuts, finite modifications, graphs of
//! mode-pairing maps, constant local projector fields) compress exactly: the
//! projector on a window is the compression of the infinite-dimensional
//! projector. Graph projectors use the block formula
//!
//! ```text
//! [ (1 + g^† g)^{-1}     (1 + g^† g)^{-1} g^†   ]
//! [ g (1 + g^† g)^{-1}   g (1 + g^† g)^{-1} g^† ]
//! ```
//!
//! with respect to the splitting source ⊕ target.

use std::collections::HashSet;

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, null_combination, projector_onto, range_basis_eigen, range_basis_svd, CMatrix,
    RankPolicy, ONE,
};
use crate::spectrum::{block_diagonal_repeat, ModeIndex, SpectrumModel, TruncationWindow};

/// Which end of the cylinder a spectral cut belongs to. `Past` selects
/// eigenvalues strictly below the cut value, `Future` strictly above; an
/// eigenvalue equal to the cut value belongs to the complement in both cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Past,
    Future,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralCut {
    pub a: f64,
    pub side: Side,
}

impl SpectralCut {
    pub const fn past(a: f64) -> Self {
        SpectralCut { a, side: Side::Past }
    }

    pub const fn future(a: f64) -> Self {
        SpectralCut {
            a,
            side: Side::Future,
        }
    }

    pub fn contains(&self, model: &SpectrumModel, mode: ModeIndex) -> Result<bool> {
        use std::cmp::Ordering::*;
        let ord = model.compare_with(mode, self.a)?;
        Ok(match self.side {
            Side::Past => ord == Less,
            Side::Future => ord == Greater,
        })
    }
}

/// How source modes are matched with target modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// `(k, c) -> (-k, c)`.
    Mirror,
    /// Finite list of `(source, target)` pairs.
    Explicit(Vec<(ModeIndex, ModeIndex)>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightRule {
    Constant { re: f64, im: f64 },
    /// `scale / (1 + |k|)^power`.
    Decay { scale: f64, power: f64 },
    /// Magnitude uniform on `[0, max]` with uniform phase, drawn
    /// independently per source mode from `seed`.
    Random { seed: u64, max: f64 },
}

impl WeightRule {
    pub fn constant(value: f64) -> Self {
        WeightRule::Constant { re: value, im: 0.0 }
    }

    pub fn weight(&self, source: ModeIndex) -> Complex64 {
        match *self {
            WeightRule::Constant { re, im } => Complex64::new(re, im),
            WeightRule::Decay { scale, power } => {
                Complex64::new(scale / (1.0 + source.k.unsigned_abs() as f64).powf(power), 0.0)
            }
            WeightRule::Random { seed, max } => {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, source));
                let r: f64 = rng.random::<f64>() * max;
                let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                Complex64::from_polar(r, phase)
            }
        }
    }

    /// Supremum of `|weight|` over all modes.
    pub fn sup(&self) -> f64 {
        match *self {
            WeightRule::Constant { re, im } => Complex64::new(re, im).norm(),
            WeightRule::Decay { scale, .. } => scale.abs(),
            WeightRule::Random { max, .. } => max.abs(),
        }
    }

    pub fn decays(&self) -> bool {
        match *self {
            WeightRule::Constant { re, im } => re == 0.0 && im == 0.0,
            WeightRule::Decay { scale, power } => power > 0.0 || scale == 0.0,
            WeightRule::Random { max, .. } => max == 0.0,
        }
    }
}

fn mix_seed(seed: u64, mode: ModeIndex) -> u64 {
    // splitmix64 finalizer over (seed, k, c)
    let mut z = seed
        ^ (mode.k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (mode.c as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Bounded map between complementary spectral cuts given by a partial
/// bijection of modes and a weight per paired source mode. Unpaired source
/// modes map to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMap {
    pub pairing: Pairing,
    pub weights: WeightRule,
}

impl GraphMap {
    pub fn zero() -> Self {
        GraphMap {
            pairing: Pairing::Explicit(Vec::new()),
            weights: WeightRule::constant(0.0),
        }
    }

    pub fn mirror(weights: WeightRule) -> Self {
        GraphMap {
            pairing: Pairing::Mirror,
            weights,
        }
    }

    fn image(&self, source: ModeIndex) -> Option<ModeIndex> {
        match &self.pairing {
            Pairing::Mirror => Some(ModeIndex::new(-source.k, source.c)),
            Pairing::Explicit(pairs) => pairs.iter().find(|p| p.0 == source).map(|p| p.1),
        }
    }

    /// Operator norm: the supremum of the weight magnitudes.
    pub fn norm(&self) -> f64 {
        match &self.pairing {
            Pairing::Mirror => self.weights.sup(),
            Pairing::Explicit(pairs) => pairs
                .iter()
                .map(|p| self.weights.weight(p.0).norm())
                .fold(0.0, f64::max),
        }
    }

    /// Compact iff finitely many pairs or decaying weights; decided from the
    /// rule, never from a truncation.
    pub fn is_compact(&self) -> bool {
        match &self.pairing {
            Pairing::Mirror => self.weights.decays(),
            Pairing::Explicit(_) => true,
        }
    }
}

/// `W ⊕ Γ(g)` relative to a spectral cut. For a past cut `W = w_plus` lies
/// in the complement of the cut and `w_minus` is removed from the cut before
/// taking the graph; for a future cut the roles of `w_plus` and `w_minus`
/// are exchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphForm {
    pub cut: SpectralCut,
    pub w_plus: Vec<ModeIndex>,
    pub w_minus: Vec<ModeIndex>,
    pub g: GraphMap,
}

impl GraphForm {
    pub fn new(cut: SpectralCut, g: GraphMap) -> Self {
        GraphForm {
            cut,
            w_plus: Vec::new(),
            w_minus: Vec::new(),
            g,
        }
    }

    /// Finite block added to the graph (it lies in the complement of the cut).
    pub fn kept(&self) -> &[ModeIndex] {
        match self.cut.side {
            Side::Past => &self.w_plus,
            Side::Future => &self.w_minus,
        }
    }

    /// Finite block removed from the cut before the graph is taken.
    pub fn dropped(&self) -> &[ModeIndex] {
        match self.cut.side {
            Side::Past => &self.w_minus,
            Side::Future => &self.w_plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    SpectralCut(SpectralCut),
    FiniteMod {
        base: Box<BoundaryCondition>,
        add: Vec<ModeIndex>,
        remove: Vec<ModeIndex>,
    },
    GraphForm(GraphForm),
    /// Constant fiberwise orthogonal projector on the coefficient fiber.
    Local { projector: CMatrix },
    /// Orthonormal basis fixed on one window.
    Explicit {
        window: TruncationWindow,
        columns: CMatrix,
    },
    Complement(Box<BoundaryCondition>),
}

impl BoundaryCondition {
    pub fn aps(side: Side) -> Self {
        BoundaryCondition::SpectralCut(SpectralCut { a: 0.0, side })
    }

    pub fn anti_aps(side: Side) -> Self {
        BoundaryCondition::Complement(Box::new(Self::aps(side)))
    }

    /// The zero subspace.
    pub fn zero() -> Self {
        BoundaryCondition::SpectralCut(SpectralCut::past(f64::NEG_INFINITY))
    }

    /// The whole boundary Hilbert space.
    pub fn whole() -> Self {
        BoundaryCondition::SpectralCut(SpectralCut::past(f64::INFINITY))
    }

    pub fn span_of(modes: Vec<ModeIndex>) -> Self {
        BoundaryCondition::FiniteMod {
            base: Box::new(Self::zero()),
            add: modes,
            remove: Vec::new(),
        }
    }

    pub fn whole_without(modes: Vec<ModeIndex>) -> Self {
        BoundaryCondition::FiniteMod {
            base: Box::new(Self::whole()),
            add: Vec::new(),
            remove: modes,
        }
    }

    pub fn complement(self) -> Self {
        BoundaryCondition::Complement(Box::new(self))
    }
}

/// Dense Hermitian idempotent on a window.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMatrix {
    matrix: CMatrix,
}

impl ProjectorMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch {
                left: matrix.nrows(),
                right: matrix.ncols(),
            });
        }
        let dim = matrix.nrows();
        let tol = 1e-12 * (dim.max(1) as f64);
        let idempotency = (&matrix * &matrix - &matrix).norm();
        let hermiticity = (&matrix - matrix.adjoint()).norm();
        let trace = matrix.trace().re;
        if idempotency > tol || hermiticity > tol || (trace - trace.round()).abs() > 1e-8 {
            return Err(Error::InvalidProjector {
                idempotency,
                hermiticity,
            });
        }
        Ok(ProjectorMatrix { matrix })
    }

    pub fn zero(dim: usize) -> Self {
        ProjectorMatrix {
            matrix: CMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        ProjectorMatrix {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    /// Projector onto the span of the (orthonormalized) columns.
    pub fn from_columns(columns: &CMatrix) -> Result<Self> {
        let basis = range_basis_svd(columns, &RankPolicy::default(), "column span")?;
        ProjectorMatrix::new(projector_onto(&basis))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn rank(&self) -> usize {
        self.matrix.trace().re.round().max(0.0) as usize
    }

    pub fn complement(&self) -> ProjectorMatrix {
        let n = self.dim();
        ProjectorMatrix {
            matrix: CMatrix::identity(n, n) - &self.matrix,
        }
    }

    /// Projector onto `U B` for a unitary `U`.
    pub fn transform(&self, unitary: &CMatrix) -> Result<ProjectorMatrix> {
        if unitary.nrows() != self.dim() {
            return Err(Error::DimensionMismatch {
                left: unitary.nrows(),
                right: self.dim(),
            });
        }
        let m = unitary * &self.matrix * unitary.adjoint();
        // symmetrize away round-off
        let m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        ProjectorMatrix::new(m)
    }

    /// Restriction of the matrix to the modes of a smaller window.
    pub fn compress(
        &self,
        model: &SpectrumModel,
        from: TruncationWindow,
        to: TruncationWindow,
    ) -> Result<CMatrix> {
        let idx = model
            .modes(to)
            .into_iter()
            .map(|m| model.position(m, from))
            .collect::<Result<Vec<_>>>()?;
        Ok(CMatrix::from_fn(idx.len(), idx.len(), |i, j| {
            self.matrix[(idx[i], idx[j])]
        }))
    }
}

fn unit_columns(dim: usize, positions: &[usize]) -> CMatrix {
    let mut m = CMatrix::zeros(dim, positions.len());
    for (j, &p) in positions.iter().enumerate() {
        m[(p, j)] = ONE;
    }
    m
}

/// Projector onto `Γ(g) = { v + g v : v ∈ V_src }` where `g` is given in the
/// orthonormal bases `b_src`, `b_tgt` of two orthogonal subspaces.
pub fn graph_projector(b_src: &CMatrix, b_tgt: &CMatrix, g: &CMatrix) -> Result<CMatrix> {
    let n = b_src.nrows();
    let s = b_src.ncols();
    let t = b_tgt.ncols();
    if g.nrows() != t || g.ncols() != s {
        return Err(Error::DimensionMismatch {
            left: g.nrows() * g.ncols(),
            right: t * s,
        });
    }
    if s == 0 {
        return Ok(CMatrix::zeros(n, n));
    }
    let gram = CMatrix::identity(s, s) + g.adjoint() * g;
    let k = Cholesky::new(gram)
        .ok_or_else(|| Error::Domain("1 + g^† g is not positive definite".into()))?
        .inverse();
    let gk = g * &k;
    let mut block = CMatrix::zeros(s + t, s + t);
    block.view_mut((0, 0), (s, s)).copy_from(&k);
    block.view_mut((0, s), (s, t)).copy_from(&(&k * g.adjoint()));
    block.view_mut((s, 0), (t, s)).copy_from(&gk);
    block.view_mut((s, s), (t, t)).copy_from(&(&gk * g.adjoint()));
    let frame = linalg::hstack(b_src, b_tgt);
    Ok(&frame * block * frame.adjoint())
}

/// Source/target split and window-restricted matrix of a graph-form condition.
pub(crate) struct GraphLayout {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
    pub kept: Vec<usize>,
    pub g: CMatrix,
}

pub(crate) fn graph_layout(
    form: &GraphForm,
    model: &SpectrumModel,
    window: TruncationWindow,
) -> Result<GraphLayout> {
    let modes = model.modes(window);
    let kept: HashSet<ModeIndex> = form.kept().iter().cloned().collect();
    let dropped: HashSet<ModeIndex> = form.dropped().iter().cloned().collect();
    if kept.len() != form.kept().len() || dropped.len() != form.dropped().len() {
        return Err(Error::InvalidCondition("repeated mode in W blocks".into()));
    }
    for &m in form.kept() {
        model.position(m, window)?;
        if form.cut.contains(model, m)? {
            return Err(Error::InvalidCondition(format!(
                "mode {m} of the added block lies inside the cut"
            )));
        }
    }
    for &m in form.dropped() {
        model.position(m, window)?;
        if !form.cut.contains(model, m)? {
            return Err(Error::InvalidCondition(format!(
                "mode {m} of the removed block lies outside the cut"
            )));
        }
    }
    if let Pairing::Explicit(pairs) = &form.g.pairing {
        let mut seen_src = HashSet::new();
        let mut seen_tgt = HashSet::new();
        for &(s, t) in pairs {
            model.position(s, window)?;
            model.position(t, window)?;
            if !seen_src.insert(s) || !seen_tgt.insert(t) {
                return Err(Error::InvalidCondition(
                    "graph pairing is not a bijection".into(),
                ));
            }
        }
    }

    let mut source = Vec::new();
    let mut target = Vec::new();
    let mut source_modes = Vec::new();
    for (pos, &m) in modes.iter().enumerate() {
        if form.cut.contains(model, m)? {
            if !dropped.contains(&m) {
                source.push(pos);
                source_modes.push(m);
            }
        } else if kept.contains(&m) {
            // placed below
        } else {
            target.push(pos);
        }
    }
    let kept_pos = form
        .kept()
        .iter()
        .map(|&m| model.position(m, window))
        .collect::<Result<Vec<_>>>()?;

    let mut g = CMatrix::zeros(target.len(), source.len());
    for (j, &s) in source_modes.iter().enumerate() {
        let Some(t) = form.g.image(s) else { continue };
        let w = form.g.weights.weight(s);
        let tpos = match model.position(t, window) {
            Ok(p) => p,
            Err(Error::WindowTooSmall { .. }) => {
                return Err(Error::WindowTooSmall {
                    mode: t,
                    radius: window.radius,
                })
            }
            Err(e) => return Err(e),
        };
        let i = target.iter().position(|&p| p == tpos).ok_or_else(|| {
            Error::InvalidCondition(format!(
                "graph pairs {s} with {t}, which is not in the target block"
            ))
        })?;
        g[(i, j)] = w;
    }
    Ok(GraphLayout {
        source,
        target,
        kept: kept_pos,
        g,
    })
}

/// Exact orthogonal projector of `cond` on `window`.
pub fn materialize(
    cond: &BoundaryCondition,
    model: &SpectrumModel,
    window: TruncationWindow,
) -> Result<ProjectorMatrix> {
    let dim = model.ambient_dim(window);
    match cond {
        BoundaryCondition::SpectralCut(cut) => {
            let mut p = CMatrix::zeros(dim, dim);
            for (i, m) in model.modes(window).into_iter().enumerate() {
                if cut.contains(model, m)? {
                    p[(i, i)] = ONE;
                }
            }
            ProjectorMatrix::new(p)
        }
        BoundaryCondition::FiniteMod { base, add, remove } => {
            let mut p = materialize(base, model, window)?.into_matrix();
            let mut seen = HashSet::new();
            for &m in add.iter().chain(remove) {
                if !seen.insert(m) {
                    return Err(Error::InvalidCondition(format!("mode {m} listed twice")));
                }
            }
            for &m in remove {
                let i = model.position(m, window)?;
                let mut e = CMatrix::zeros(dim, 1);
                e[(i, 0)] = ONE;
                if (&p * &e - &e).norm() > 1e-10 {
                    return Err(Error::InvalidCondition(format!(
                        "removed mode {m} is not inside the base subspace"
                    )));
                }
                p -= &e * e.adjoint();
            }
            for &m in add {
                let i = model.position(m, window)?;
                let mut e = CMatrix::zeros(dim, 1);
                e[(i, 0)] = ONE;
                if (&p * &e).norm() > 1e-10 {
                    return Err(Error::InvalidCondition(format!(
                        "added mode {m} is not orthogonal to the base subspace"
                    )));
                }
                p += &e * e.adjoint();
            }
            ProjectorMatrix::new(p)
        }
        BoundaryCondition::GraphForm(form) => {
            let layout = graph_layout(form, model, window)?;
            let b_src = unit_columns(dim, &layout.source);
            let b_tgt = unit_columns(dim, &layout.target);
            let mut p = graph_projector(&b_src, &b_tgt, &layout.g)?;
            for &i in &layout.kept {
                p[(i, i)] += ONE;
            }
            ProjectorMatrix::new(p)
        }
        BoundaryCondition::Local { projector } => {
            let circle = model
                .as_circle()
                .filter(|c| c.doubled())
                .ok_or_else(|| {
                    Error::UnsupportedModel("local conditions need the doubled circle model".into())
                })?;
            if projector.nrows() != circle.channels() || projector.ncols() != circle.channels() {
                return Err(Error::DimensionMismatch {
                    left: projector.nrows(),
                    right: circle.channels(),
                });
            }
            let idem = (projector * projector - projector).norm();
            let herm = (projector - projector.adjoint()).norm();
            if idem > 1e-12 || herm > 1e-12 {
                return Err(Error::InvalidProjector {
                    idempotency: idem,
                    hermiticity: herm,
                });
            }
            ProjectorMatrix::new(block_diagonal_repeat(projector, window.mode_count()))
        }
        BoundaryCondition::Explicit {
            window: locked,
            columns,
        } => {
            if *locked != window || columns.nrows() != dim {
                return Err(Error::InvalidCondition(format!(
                    "explicit condition is locked to window {} but {} was requested",
                    locked.radius, window.radius
                )));
            }
            ProjectorMatrix::from_columns(columns)
        }
        BoundaryCondition::Complement(base) => Ok(materialize(base, model, window)?.complement()),
    }
}

pub fn complement(p: &ProjectorMatrix) -> ProjectorMatrix {
    p.complement()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Chirality {
    Plus,
    Minus,
}

/// Local condition given by the `±1` eigenbundle of the channel-swap
/// involution `G`, i.e. the fiber projector `(1 ± G) / 2`.
pub fn chirality_condition(model: &SpectrumModel, sign: Chirality) -> Result<BoundaryCondition> {
    let circle = model.as_circle().ok_or_else(|| {
        Error::UnsupportedModel("chirality conditions need the doubled circle model".into())
    })?;
    let g = circle.fiber_involution()?;
    let n = g.nrows();
    let s = match sign {
        Chirality::Plus => 1.0,
        Chirality::Minus => -1.0,
    };
    let p = (CMatrix::identity(n, n) + g * Complex64::new(s, 0.0)) * Complex64::new(0.5, 0.0);
    Ok(BoundaryCondition::Local { projector: p })
}

/// Splitting of a subspace `B` as `W ⊕ Γ(g)` relative to a spectral cut `S`:
///
/// * `w_keep = B ∩ S^⊥` (added block),
/// * `v_source = π_S(B)`, `w_drop = S ⊖ v_source`,
/// * `v_target = S^⊥ ⊖ w_keep`,
/// * `g = π_{S^⊥} ∘ (π_S|_U)^{-1}` with `U = B ⊖ w_keep`.
///
/// For a past cut `w_keep` is `W⁺` and `w_drop` is `W⁻`; for a future cut the
/// labels are exchanged.
#[derive(Debug, Clone)]
pub struct GraphDecomposition {
    pub side: Side,
    pub w_keep: CMatrix,
    pub w_drop: CMatrix,
    pub v_source: CMatrix,
    pub v_target: CMatrix,
    /// Matrix of `g` from `v_source` coordinates to `v_target` coordinates.
    pub g: CMatrix,
    /// Frobenius distance between the input projector and the projector of
    /// the rebuilt `w_keep ⊕ Γ(g)`.
    pub residual: f64,
}

impl GraphDecomposition {
    pub fn w_plus(&self) -> &CMatrix {
        match self.side {
            Side::Past => &self.w_keep,
            Side::Future => &self.w_drop,
        }
    }

    pub fn w_minus(&self) -> &CMatrix {
        match self.side {
            Side::Past => &self.w_drop,
            Side::Future => &self.w_keep,
        }
    }

    pub fn g_norm(&self) -> f64 {
        linalg::singular_values(&self.g)
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Projector of `w_keep ⊕ Γ(g)`.
    pub fn rebuild(&self) -> Result<ProjectorMatrix> {
        let p = projector_onto(&self.w_keep) + graph_projector(&self.v_source, &self.v_target, &self.g)?;
        ProjectorMatrix::new(p)
    }

    /// Index correction `dim(added) - dim(removed)` contributed by this
    /// condition relative to its cut.
    pub fn correction(&self) -> i64 {
        self.w_keep.ncols() as i64 - self.w_drop.ncols() as i64
    }
}

/// Decomposes an arbitrary materialized subspace over a materialized cut.
pub fn decompose_over_cut(
    b: &ProjectorMatrix,
    cut: &ProjectorMatrix,
    side: Side,
    policy: &RankPolicy,
) -> Result<GraphDecomposition> {
    let n = b.dim();
    if cut.dim() != n {
        return Err(Error::DimensionMismatch {
            left: n,
            right: cut.dim(),
        });
    }
    let s = cut.matrix();
    let t = cut.complement().into_matrix();
    let basis_b = range_basis_eigen(b.matrix());

    let w_keep = null_combination(s, &basis_b, policy, "B ∩ cut^⊥")?;
    let p_keep = projector_onto(&w_keep);
    let v_source = range_basis_svd(&(s * &basis_b), policy, "π_cut(B)")?;
    let w_drop = range_basis_eigen(&(s - projector_onto(&v_source)));
    let v_target = range_basis_eigen(&(&t - &p_keep));
    let u = range_basis_eigen(&(b.matrix() - &p_keep));

    if u.ncols() != v_source.ncols() {
        return Err(Error::NotGraphDecomposable {
            smallest: 0.0,
            threshold: policy.tau,
        });
    }
    let g = if u.ncols() == 0 {
        CMatrix::zeros(v_target.ncols(), 0)
    } else {
        // restriction of π_cut to U, in (v_source, U) coordinates
        let m = v_source.adjoint() * s * &u;
        let sv = linalg::singular_values(&m);
        let smallest = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let threshold = policy.threshold(&sv);
        if smallest < threshold {
            return Err(Error::NotGraphDecomposable {
                smallest,
                threshold,
            });
        }
        let inv = m
            .try_inverse()
            .ok_or(Error::NotGraphDecomposable {
                smallest,
                threshold,
            })?;
        v_target.adjoint() * &t * &u * inv
    };
    let mut out = GraphDecomposition {
        side,
        w_keep,
        w_drop,
        v_source,
        v_target,
        g,
        residual: 0.0,
    };
    out.residual = (b.matrix() - out.rebuild()?.matrix()).norm();
    Ok(out)
}

/// Local boundary condition rewritten as `W ⊕ Γ(g)` over `cut`.
pub fn decompose_local_to_graph(
    cond: &BoundaryCondition,
    model: &SpectrumModel,
    window: TruncationWindow,
    cut: SpectralCut,
    policy: &RankPolicy,
) -> Result<GraphDecomposition> {
    if !matches!(cond, BoundaryCondition::Local { .. }) {
        return Err(Error::InvalidCondition(
            "decomposition expects a local condition".into(),
        ));
    }
    if !model.is_doubled() {
        return Err(Error::UnsupportedModel(
            "local conditions need the doubled circle model".into(),
        ));
    }
    let b = materialize(cond, model, window)?;
    let c = materialize(&BoundaryCondition::SpectralCut(cut), model, window)?;
    decompose_over_cut(&b, &c, cut.side, policy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{CircleDiracModel, SpinStructure};

    fn trivial() -> SpectrumModel {
        CircleDiracModel::standard(SpinStructure::Trivial).into()
    }

    fn doubled() -> SpectrumModel {
        CircleDiracModel::standard(SpinStructure::Trivial)
            .doubled_model()
            .into()
    }

    fn win(n: usize) -> TruncationWindow {
        TruncationWindow::new(n).unwrap()
    }

    #[test]
    fn past_cut_at_zero_is_diagonal() {
        let p = materialize(&BoundaryCondition::aps(Side::Past), &trivial(), win(2)).unwrap();
        assert_eq!(p.rank(), 2);
        let diag: Vec<f64> = p.matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(diag, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn cut_value_on_eigenvalue_goes_to_complement() {
        let m = trivial();
        let w = win(3);
        let past = materialize(&BoundaryCondition::SpectralCut(SpectralCut::past(2.0 * std::f64::consts::PI)), &m, w)
            .unwrap();
        // k = 1 has eigenvalue exactly 2 pi: excluded
        assert_eq!(past.rank(), 4);
        let fut = materialize(&BoundaryCondition::aps(Side::Future), &m, w).unwrap();
        assert_eq!(fut.rank(), 3);
    }

    #[test]
    fn zero_graph_equals_cut() {
        let m = trivial();
        let w = win(3);
        let g = BoundaryCondition::GraphForm(GraphForm::new(SpectralCut::past(0.0), GraphMap::zero()));
        let a = materialize(&g, &m, w).unwrap();
        let b = materialize(&BoundaryCondition::aps(Side::Past), &m, w).unwrap();
        assert!((a.matrix() - b.matrix()).norm() < 1e-15);
    }

    #[test]
    fn mirror_graph_matches_direct_span() {
        let m = trivial();
        let w = win(2);
        let g = BoundaryCondition::GraphForm(GraphForm::new(
            SpectralCut::past(0.0),
            GraphMap::mirror(WeightRule::constant(1.0)),
        ));
        let p = materialize(&g, &m, w).unwrap();
        assert_eq!(p.rank(), 2);
        // span{(e_-1 + e_1)/sqrt2, (e_-2 + e_2)/sqrt2}
        let mut cols = CMatrix::zeros(5, 2);
        cols[(1, 0)] = ONE;
        cols[(3, 0)] = ONE;
        cols[(0, 1)] = ONE;
        cols[(4, 1)] = ONE;
        let direct = ProjectorMatrix::from_columns(&cols).unwrap();
        assert!((p.matrix() - direct.matrix()).norm() < 1e-12);
    }

    #[test]
    fn complement_examples() {
        let z = ProjectorMatrix::zero(4);
        assert_eq!(complement(&z), ProjectorMatrix::identity(4));
        assert_eq!(complement(&ProjectorMatrix::identity(4)).rank(), 0);
        let p = materialize(&BoundaryCondition::aps(Side::Past), &trivial(), win(4)).unwrap();
        assert_eq!(complement(&p).rank(), 9 - p.rank());
    }

    #[test]
    fn modes_outside_window_are_rejected() {
        let c = BoundaryCondition::span_of(vec![ModeIndex::new(5, 1)]);
        let err = materialize(&c, &trivial(), win(2)).unwrap_err();
        assert!(matches!(err, Error::WindowTooSmall { radius: 2, .. }));
    }

    #[test]
    fn finite_mod_validates_membership() {
        let m = trivial();
        let bad_remove = BoundaryCondition::FiniteMod {
            base: Box::new(BoundaryCondition::aps(Side::Past)),
            add: vec![],
            remove: vec![ModeIndex::new(1, 1)],
        };
        assert!(matches!(materialize(&bad_remove, &m, win(2)), Err(Error::InvalidCondition(_))));
        let bad_add = BoundaryCondition::FiniteMod {
            base: Box::new(BoundaryCondition::aps(Side::Past)),
            add: vec![ModeIndex::new(-1, 1)],
            remove: vec![],
        };
        assert!(matches!(materialize(&bad_add, &m, win(2)), Err(Error::InvalidCondition(_))));
        let ok = BoundaryCondition::FiniteMod {
            base: Box::new(BoundaryCondition::aps(Side::Past)),
            add: vec![ModeIndex::new(0, 1)],
            remove: vec![ModeIndex::new(-2, 1)],
        };
        assert_eq!(materialize(&ok, &m, win(2)).unwrap().rank(), 2);
    }

    #[test]
    fn local_needs_doubled_model() {
        let c = BoundaryCondition::Local {
            projector: CMatrix::identity(1, 1),
        };
        assert!(matches!(materialize(&c, &trivial(), win(1)), Err(Error::UnsupportedModel(_))));
        assert!(matches!(
            chirality_condition(&trivial(), Chirality::Plus),
            Err(Error::UnsupportedModel(_))
        ));
    }

    #[test]
    fn chirality_projectors() {
        let d = doubled();
        let plus = chirality_condition(&d, Chirality::Plus).unwrap();
        let minus = chirality_condition(&d, Chirality::Minus).unwrap();
        let (BoundaryCondition::Local { projector: p }, BoundaryCondition::Local { projector: q }) =
            (&plus, &minus)
        else {
            panic!("expected local conditions");
        };
        assert!((p.trace().re - 1.0).abs() < 1e-15);
        assert_eq!(p + q, CMatrix::identity(2, 2));
        for n in [1, 3, 5] {
            let pm = materialize(&plus, &d, win(n)).unwrap();
            assert_eq!(pm.rank() * 2, pm.dim());
        }
    }

    #[test]
    fn chirality_decomposes_over_past_cut() {
        let d = doubled();
        let plus = chirality_condition(&d, Chirality::Plus).unwrap();
        let dec = decompose_local_to_graph(&plus, &d, win(3), SpectralCut::past(0.0), &RankPolicy::default())
            .unwrap();
        assert_eq!(dec.w_plus().ncols(), 1);
        assert_eq!(dec.w_minus().ncols(), 0);
        assert!((dec.g_norm() - 1.0).abs() < 1e-12);
        let gg = dec.g.adjoint() * &dec.g;
        assert!((gg - CMatrix::identity(dec.g.ncols(), dec.g.ncols())).norm() < 1e-10);
        assert!(dec.residual <= 1e-10);
    }

    #[test]
    fn degenerate_local_decompositions() {
        let d = doubled();
        let w = win(3);
        let cut = SpectralCut::past(0.0);
        let policy = RankPolicy::default();

        let whole = BoundaryCondition::Local {
            projector: CMatrix::identity(2, 2),
        };
        let dec = decompose_local_to_graph(&whole, &d, w, cut, &policy).unwrap();
        assert_eq!(dec.w_keep.ncols(), 8); // eigenvalues >= 0: 3 + 3 + kernel 2
        assert_eq!(dec.w_drop.ncols(), 0);
        assert!(dec.g_norm() < 1e-12);
        assert!(dec.residual < 1e-10);

        let none = BoundaryCondition::Local {
            projector: CMatrix::zeros(2, 2),
        };
        let dec = decompose_local_to_graph(&none, &d, w, cut, &policy).unwrap();
        assert_eq!(dec.w_keep.ncols(), 0);
        assert_eq!(dec.v_source.ncols(), 0);
        assert_eq!(dec.g.ncols(), 0);
        assert!(dec.residual < 1e-12);
    }
}
