//! Fredholm pairs of truncated subspaces.
//!
//! Two independent routes compute the kernel and cokernel of a pair
//! `(B0, B1)`:
//!
//! * the projection route ranks `π_{B1^⊥}|_{B0}` in orthonormal bases of `B0`
//!   and `B1^⊥` taken from eigendecompositions; its kernel is `B0 ∩ B1` and
//!   its cokernel is `B0^⊥ ∩ B1^⊥`;
//! * the definition route ranks the stacked bases `[B0 | B1]` (taken from
//!   SVDs) and reads off `dim(B0 ∩ B1)` and `codim(B0 + B1)` directly.
//!
//! Fredholmness of the untruncated pair is decided from how these numbers
//! behave over a schedule of growing windows.

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::boundary::{materialize, BoundaryCondition, ProjectorMatrix};
use crate::error::{Error, Result};
use crate::evolution::Evolution;
use crate::linalg::{self, hstack, range_basis_eigen, range_basis_svd, CMatrix, RankPolicy};
use crate::parallel::{map_collect, Execution};
use crate::spectrum::{SpectrumModel, TruncationWindow};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairDiagnostics {
    /// Window radius, `0` for pairs not tied to a window.
    pub radius: usize,
    pub dim_b0: usize,
    pub dim_b1: usize,
    pub dim_intersection: usize,
    pub dim_cokernel: usize,
    pub index: i64,
    /// Smallest kept over largest discarded singular value of the ranked
    /// matrix; `None` if nothing was discarded or nothing kept.
    pub condition_gap: Option<f64>,
}

impl PairDiagnostics {
    /// Equality of the integer content (the gap is route specific).
    pub fn same_counts(&self, other: &PairDiagnostics) -> bool {
        self.dim_b0 == other.dim_b0
            && self.dim_b1 == other.dim_b1
            && self.dim_intersection == other.dim_intersection
            && self.dim_cokernel == other.dim_cokernel
            && self.index == other.index
    }
}

fn check_dims(p0: &ProjectorMatrix, p1: &ProjectorMatrix) -> Result<()> {
    if p0.dim() != p1.dim() {
        return Err(Error::DimensionMismatch {
            left: p0.dim(),
            right: p1.dim(),
        });
    }
    Ok(())
}

/// Projection route.
pub fn pair_diagnostics(
    p0: &ProjectorMatrix,
    p1: &ProjectorMatrix,
    policy: &RankPolicy,
) -> Result<PairDiagnostics> {
    check_dims(p0, p1)?;
    let b0 = range_basis_eigen(p0.matrix());
    let b1_perp = range_basis_eigen(p1.complement().matrix());
    let dim_b0 = b0.ncols();
    let dim_b1_perp = b1_perp.ncols();
    let m = b1_perp.adjoint() * &b0;
    let decision = policy.decide(&linalg::singular_values(&m), "π_{B1^⊥}|_{B0}")?;
    let dim_intersection = dim_b0 - decision.rank;
    let dim_cokernel = dim_b1_perp - decision.rank;
    let index = dim_intersection as i64 - dim_cokernel as i64;
    if index != dim_b0 as i64 - dim_b1_perp as i64 {
        return Err(Error::InternalInconsistency(format!(
            "index {index} differs from dim B0 - dim B1^⊥ = {}",
            dim_b0 as i64 - dim_b1_perp as i64
        )));
    }
    Ok(PairDiagnostics {
        radius: 0,
        dim_b0,
        dim_b1: p1.dim() - dim_b1_perp,
        dim_intersection,
        dim_cokernel,
        index,
        condition_gap: decision.gap,
    })
}

/// Definition route: `dim(B0 ∩ B1) = dim B0 + dim B1 - rank[B0 | B1]` and
/// `codim(B0 + B1) = n - rank[B0 | B1]`.
pub fn pair_diagnostics_oracle(
    p0: &ProjectorMatrix,
    p1: &ProjectorMatrix,
    policy: &RankPolicy,
) -> Result<PairDiagnostics> {
    check_dims(p0, p1)?;
    let b0 = range_basis_svd(p0.matrix(), policy, "basis of B0")?;
    let b1 = range_basis_svd(p1.matrix(), policy, "basis of B1")?;
    let stacked = hstack(&b0, &b1);
    let decision = policy.decide(&linalg::singular_values(&stacked), "[B0 | B1]")?;
    let dim_intersection = b0.ncols() + b1.ncols() - decision.rank;
    let dim_cokernel = p0.dim() - decision.rank;
    Ok(PairDiagnostics {
        radius: 0,
        dim_b0: b0.ncols(),
        dim_b1: b1.ncols(),
        dim_intersection,
        dim_cokernel,
        index: dim_intersection as i64 - dim_cokernel as i64,
        condition_gap: decision.gap,
    })
}

/// Runs both routes and fails hard if they disagree.
pub fn checked_diagnostics(
    p0: &ProjectorMatrix,
    p1: &ProjectorMatrix,
    policy: &RankPolicy,
) -> Result<PairDiagnostics> {
    let a = pair_diagnostics(p0, p1, policy)?;
    let b = pair_diagnostics_oracle(p0, p1, policy)?;
    if !a.same_counts(&b) {
        return Err(Error::InternalInconsistency(format!(
            "projection route {a:?} vs definition route {b:?}"
        )));
    }
    Ok(a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NotFredholmReason {
    GrowingKernel,
    GrowingCokernel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    Fredholm { index: i64 },
    NotFredholm { reason: NotFredholmReason },
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Fredholm { index } => write!(f, "Fredholm({index})"),
            Verdict::NotFredholm { reason } => write!(f, "NotFredholm({reason:?})"),
            Verdict::Inconclusive => write!(f, "Inconclusive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FredholmReport {
    pub windows: Vec<PairDiagnostics>,
    pub verdict: Verdict,
}

/// Stabilization rule over the last three windows: constant kernel and
/// cokernel means Fredholm; growth by at least one per step in the kernel
/// (or else the cokernel) means not Fredholm.
pub fn stabilization_verdict(windows: &[PairDiagnostics]) -> Verdict {
    if windows.len() < 3 {
        return Verdict::Inconclusive;
    }
    let tail = &windows[windows.len() - 3..];
    let ker: Vec<i64> = tail.iter().map(|d| d.dim_intersection as i64).collect();
    let cok: Vec<i64> = tail.iter().map(|d| d.dim_cokernel as i64).collect();
    let constant = |v: &[i64]| v.windows(2).all(|w| w[0] == w[1]);
    let growing = |v: &[i64]| v.windows(2).all(|w| w[1] - w[0] >= 1);
    if constant(&ker) && constant(&cok) {
        Verdict::Fredholm {
            index: tail[2].index,
        }
    } else if growing(&ker) {
        Verdict::NotFredholm {
            reason: NotFredholmReason::GrowingKernel,
        }
    } else if growing(&cok) {
        Verdict::NotFredholm {
            reason: NotFredholmReason::GrowingCokernel,
        }
    } else {
        Verdict::Inconclusive
    }
}

/// Boundary spectra at both ends and the evolution between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub past: SpectrumModel,
    pub future: SpectrumModel,
    pub evolution: Evolution,
}

impl Cylinder {
    pub fn ultrastatic(model: SpectrumModel, time: f64) -> Self {
        Cylinder {
            past: model.clone(),
            future: model,
            evolution: Evolution::Ultrastatic { time },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineOptions {
    pub policy: RankPolicy,
    pub unitarity_tol: f64,
    pub execution: Execution,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions {
            policy: RankPolicy::default(),
            unitarity_tol: 1e-9,
            execution: Execution::default(),
        }
    }
}

pub const DEFAULT_SCHEDULE: [usize; 4] = [8, 16, 32, 64];

pub fn validate_schedule(schedule: &[usize]) -> Result<()> {
    if schedule.len() < 3 {
        return Err(Error::InvalidSchedule(format!(
            "need at least 3 windows, got {}",
            schedule.len()
        )));
    }
    if schedule[0] == 0 || schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule(
            "window radii must be positive and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Materialized `(Q B0, B1)` on one window, plus `Q`.
pub struct WindowPair {
    pub b0: ProjectorMatrix,
    pub b1: ProjectorMatrix,
    pub q: CMatrix,
}

impl WindowPair {
    pub fn build(
        cond0: &BoundaryCondition,
        cond1: &BoundaryCondition,
        cylinder: &Cylinder,
        window: TruncationWindow,
        unitarity_tol: f64,
    ) -> Result<Self> {
        let b0 = materialize(cond0, &cylinder.past, window)?;
        let b1 = materialize(cond1, &cylinder.future, window)?;
        check_dims(&b0, &b1)?;
        let q = cylinder
            .evolution
            .matrix(&cylinder.past, window, unitarity_tol)?
            .matrix()
            .clone();
        Ok(WindowPair { b0, b1, q })
    }

    pub fn evolved_b0(&self) -> Result<ProjectorMatrix> {
        self.b0.transform(&self.q)
    }

    pub fn pulled_back_b1(&self) -> Result<ProjectorMatrix> {
        self.b1.transform(&self.q.adjoint())
    }
}

pub fn window_diagnostics(
    cond0: &BoundaryCondition,
    cond1: &BoundaryCondition,
    cylinder: &Cylinder,
    window: TruncationWindow,
    options: &EngineOptions,
) -> Result<PairDiagnostics> {
    let pair = WindowPair::build(cond0, cond1, cylinder, window, options.unitarity_tol)?;
    let mut d = checked_diagnostics(&pair.evolved_b0()?, &pair.b1, &options.policy)?;
    d.radius = window.radius;
    Ok(d)
}

/// Fredholm verdict for the pair `(Q B0, B1)` over a window schedule.
pub fn fredholm_verdict(
    cond0: &BoundaryCondition,
    cond1: &BoundaryCondition,
    cylinder: &Cylinder,
    schedule: &[usize],
    options: &EngineOptions,
) -> Result<FredholmReport> {
    validate_schedule(schedule)?;
    let results = map_collect(options.execution, schedule, |&radius| {
        window_diagnostics(cond0, cond1, cylinder, TruncationWindow::new(radius)?, options)
    });
    let windows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let verdict = stabilization_verdict(&windows);
    Ok(FredholmReport { windows, verdict })
}

/// Diagnostics of `(Q B0, B1)` and of `(B0, Q^{-1} B1)` on one window.
pub fn evolution_equivalence(
    cond0: &BoundaryCondition,
    cond1: &BoundaryCondition,
    cylinder: &Cylinder,
    window: TruncationWindow,
    options: &EngineOptions,
) -> Result<(PairDiagnostics, PairDiagnostics)> {
    let pair = WindowPair::build(cond0, cond1, cylinder, window, options.unitarity_tol)?;
    let forward = checked_diagnostics(&pair.evolved_b0()?, &pair.b1, &options.policy)?;
    let backward = checked_diagnostics(&pair.b0, &pair.pulled_back_b1()?, &options.policy)?;
    Ok((forward, backward))
}

/// Outcome of the elementary Fredholm-pair identities on a finite pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAlgebraRecord {
    pub index: i64,
    pub swapped_index: i64,
    pub complement_index: i64,
    /// Index after enlarging `B0` by one vector orthogonal to it; `None` when
    /// `B0` is already everything.
    pub enlarged_index: Option<i64>,
    pub routes_agree: bool,
}

impl PairAlgebraRecord {
    pub fn symmetric(&self) -> bool {
        self.index == self.swapped_index
    }

    pub fn complement_flips_sign(&self) -> bool {
        self.complement_index == -self.index
    }

    pub fn enlargement_adds_one(&self) -> Option<bool> {
        self.enlarged_index.map(|e| e == self.index + 1)
    }

    pub fn all_hold(&self) -> bool {
        self.routes_agree
            && self.symmetric()
            && self.complement_flips_sign()
            && self.enlargement_adds_one().unwrap_or(true)
    }
}

pub fn check_pair_algebra(
    p0: &ProjectorMatrix,
    p1: &ProjectorMatrix,
    policy: &RankPolicy,
) -> Result<PairAlgebraRecord> {
    let direct = pair_diagnostics(p0, p1, policy)?;
    let oracle = pair_diagnostics_oracle(p0, p1, policy)?;
    let swapped = pair_diagnostics(p1, p0, policy)?;
    let comp = pair_diagnostics(&p0.complement(), &p1.complement(), policy)?;

    let perp = p0.complement();
    let enlarged_index = if perp.rank() == 0 {
        None
    } else {
        let m = perp.matrix();
        let best = (0..m.ncols())
            .max_by(|&a, &b| m.column(a).norm().total_cmp(&m.column(b).norm()))
            .expect("nonempty");
        let v = m.column(best).into_owned();
        let v = &v / num_complex::Complex64::new(v.norm(), 0.0);
        let enlarged = ProjectorMatrix::new(p0.matrix() + &v * v.adjoint())?;
        Some(pair_diagnostics(&enlarged, p1, policy)?.index)
    };

    Ok(PairAlgebraRecord {
        index: direct.index,
        swapped_index: swapped.index,
        complement_index: comp.index,
        enlarged_index,
        routes_agree: direct.same_counts(&oracle),
    })
}

/// Orthonormal basis of a Haar-random `rank`-dimensional subspace of `C^dim`.
pub fn random_subspace<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> CMatrix {
    let g = CMatrix::from_fn(dim, rank, |_, _| {
        num_complex::Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    });
    if rank == 0 {
        return g;
    }
    g.qr().q()
}

pub fn random_projector<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> ProjectorMatrix {
    let q = random_subspace(rng, dim, rank);
    ProjectorMatrix::new(linalg::projector_onto(&q)).expect("orthonormal columns give a projector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Side;
    use crate::spectrum::{CircleDiracModel, SpinStructure};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trivial() -> SpectrumModel {
        CircleDiracModel::standard(SpinStructure::Trivial).into()
    }

    #[test]
    fn aps_halves_have_index_minus_one() {
        let m = trivial();
        let w = TruncationWindow::new(4).unwrap();
        let b0 = materialize(&BoundaryCondition::aps(Side::Past), &m, w).unwrap();
        let b1 = materialize(&BoundaryCondition::aps(Side::Future), &m, w).unwrap();
        let d = checked_diagnostics(&b0, &b1, &RankPolicy::default()).unwrap();
        assert_eq!((d.dim_intersection, d.dim_cokernel, d.index), (0, 1, -1));
    }

    #[test]
    fn degenerate_pairs() {
        let policy = RankPolicy::default();
        let d = checked_diagnostics(&ProjectorMatrix::zero(7), &ProjectorMatrix::identity(7), &policy).unwrap();
        assert_eq!((d.dim_intersection, d.dim_cokernel, d.index), (0, 0, 0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_projector(&mut rng, 10, 4);
        let d = checked_diagnostics(&p, &p, &policy).unwrap();
        assert_eq!((d.dim_intersection, d.dim_cokernel, d.index), (4, 6, -2));

        let d = checked_diagnostics(&p, &p.complement(), &policy).unwrap();
        assert_eq!((d.dim_intersection, d.dim_cokernel, d.index), (0, 0, 0));
    }

    #[test]
    fn generic_position_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p0 = random_projector(&mut rng, 12, 3);
        let p1 = random_projector(&mut rng, 12, 5);
        let policy = RankPolicy::default();
        let a = pair_diagnostics(&p0, &p1, &policy).unwrap();
        let b = pair_diagnostics_oracle(&p0, &p1, &policy).unwrap();
        assert!(a.same_counts(&b));
        assert_eq!((a.dim_intersection, a.dim_cokernel, a.index), (0, 4, -4));
    }

    #[test]
    fn mismatched_dimensions_are_rejected() {
        let err = pair_diagnostics(&ProjectorMatrix::zero(3), &ProjectorMatrix::zero(4), &RankPolicy::default())
            .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn stabilization_rules() {
        let mk = |k: usize, c: usize| PairDiagnostics {
            radius: 0,
            dim_b0: 0,
            dim_b1: 0,
            dim_intersection: k,
            dim_cokernel: c,
            index: k as i64 - c as i64,
            condition_gap: None,
        };
        assert_eq!(
            stabilization_verdict(&[mk(5, 0), mk(0, 1), mk(0, 1), mk(0, 1)]),
            Verdict::Fredholm { index: -1 }
        );
        assert_eq!(
            stabilization_verdict(&[mk(8, 9), mk(16, 17), mk(32, 33)]),
            Verdict::NotFredholm {
                reason: NotFredholmReason::GrowingKernel
            }
        );
        assert_eq!(
            stabilization_verdict(&[mk(0, 1), mk(0, 2), mk(0, 4)]),
            Verdict::NotFredholm {
                reason: NotFredholmReason::GrowingCokernel
            }
        );
        assert_eq!(stabilization_verdict(&[mk(0, 1), mk(1, 1), mk(1, 2)]), Verdict::Inconclusive);
    }

    #[test]
    fn schedules_are_validated() {
        assert!(validate_schedule(&[8, 16]).is_err());
        assert!(validate_schedule(&[8, 8, 16]).is_err());
        assert!(validate_schedule(&[0, 1, 2]).is_err());
        assert!(validate_schedule(&[2, 3, 9]).is_ok());
    }

    #[test]
    fn enlargement_on_full_space_is_skipped() {
        let r = check_pair_algebra(&ProjectorMatrix::identity(3), &ProjectorMatrix::zero(3), &RankPolicy::default())
            .unwrap();
        assert_eq!(r.enlarged_index, None);
        assert!(r.all_hold());
    }
}
