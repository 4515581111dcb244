//! Dense complex linear algebra shared by the condition materializer and the
//! Fredholm engine: numerical rank with a gap test, orthonormal range bases
//! and subspace arithmetic.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Numerical rank policy.
///
/// Singular values below `tau * max(sigma_max, 1)` count as zero. The
/// reference scale is never below one because every matrix ranked here is a
/// compression between orthonormal bases (or a stack of them), whose natural
/// norm is one; a purely relative cut would promote round-off to rank when
/// the whole matrix is numerically zero. A decision is accepted only if the
/// smallest kept value exceeds the largest discarded value by `gap_ratio`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPolicy {
    pub tau: f64,
    pub gap_ratio: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        RankPolicy {
            tau: 1e-8,
            gap_ratio: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDecision {
    pub rank: usize,
    /// Smallest kept over largest discarded singular value; `None` when one
    /// of the two groups is empty.
    pub gap: Option<f64>,
}

impl RankPolicy {
    pub fn threshold(&self, singular_values: &[f64]) -> f64 {
        let max = singular_values.iter().cloned().fold(0.0, f64::max);
        self.tau * max.max(1.0)
    }

    pub fn decide(&self, singular_values: &[f64], context: &str) -> Result<RankDecision> {
        let thr = self.threshold(singular_values);
        let mut kept_min = f64::INFINITY;
        let mut dropped_max = 0.0_f64;
        let mut rank = 0;
        let mut dropped = 0;
        for &s in singular_values {
            if s >= thr {
                rank += 1;
                kept_min = kept_min.min(s);
            } else {
                dropped += 1;
                dropped_max = dropped_max.max(s);
            }
        }
        let gap = if rank > 0 && dropped > 0 {
            Some(if dropped_max > 0.0 {
                kept_min / dropped_max
            } else {
                f64::INFINITY
            })
        } else {
            None
        };
        if let Some(g) = gap {
            if g < self.gap_ratio {
                return Err(Error::IllConditioned {
                    context: context.to_string(),
                    gap: g,
                    required: self.gap_ratio,
                });
            }
        }
        Ok(RankDecision { rank, gap })
    }
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().singular_values().iter().cloned().collect()
}

/// Orthonormal basis of the range of a Hermitian projector, read off its
/// eigendecomposition (eigenvalues above one half).
pub fn range_basis_eigen(p: &CMatrix) -> CMatrix {
    let n = p.nrows();
    if n == 0 {
        return CMatrix::zeros(0, 0);
    }
    let eig = p.clone().symmetric_eigen();
    let cols: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] > 0.5).collect();
    select_columns(&eig.eigenvectors, &cols)
}

/// Orthonormal basis of the column space of `a`, using the left singular
/// vectors whose singular values survive the rank policy.
pub fn range_basis_svd(a: &CMatrix, policy: &RankPolicy, context: &str) -> Result<CMatrix> {
    let n = a.nrows();
    if n == 0 || a.ncols() == 0 {
        return Ok(CMatrix::zeros(n, 0));
    }
    let svd = a.clone().svd(true, false);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    policy.decide(&sv, context)?;
    let thr = policy.threshold(&sv);
    let u = svd.u.expect("left singular vectors requested");
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] >= thr).collect();
    Ok(select_columns(&u, &cols))
}

/// Orthonormal basis of `{ x in span(basis) : m x = 0 }` expressed in ambient
/// coordinates. `basis` must have orthonormal columns.
pub fn null_combination(
    m: &CMatrix,
    basis: &CMatrix,
    policy: &RankPolicy,
    context: &str,
) -> Result<CMatrix> {
    let r = basis.ncols();
    if r == 0 {
        return Ok(CMatrix::zeros(basis.nrows(), 0));
    }
    let a = m * basis;
    // Pad with zero rows so the SVD returns a full set of right vectors.
    let a = if a.nrows() < r {
        let mut padded = CMatrix::zeros(r, r);
        padded.view_mut((0, 0), (a.nrows(), r)).copy_from(&a);
        padded
    } else {
        a
    };
    let svd = a.svd(false, true);
    let sv: Vec<f64> = svd.singular_values.iter().cloned().collect();
    policy.decide(&sv, context)?;
    let thr = policy.threshold(&sv);
    let v = svd.v_t.expect("right singular vectors requested").adjoint();
    let cols: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] < thr).collect();
    Ok(basis * select_columns(&v, &cols))
}

pub fn select_columns(m: &CMatrix, cols: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), cols.len());
    for (j, &c) in cols.iter().enumerate() {
        out.set_column(j, &m.column(c));
    }
    out
}

pub fn hstack(a: &CMatrix, b: &CMatrix) -> CMatrix {
    debug_assert_eq!(a.nrows(), b.nrows());
    let mut out = CMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), (a.nrows(), a.ncols())).copy_from(a);
    out.view_mut((0, a.ncols()), (b.nrows(), b.ncols()))
        .copy_from(b);
    out
}

/// `B B^†` for a matrix with orthonormal columns.
pub fn projector_onto(basis: &CMatrix) -> CMatrix {
    basis * basis.adjoint()
}

pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Frobenius distance of `q^† q` from the identity.
pub fn unitarity_defect(q: &CMatrix) -> f64 {
    let n = q.ncols();
    (q.adjoint() * q - CMatrix::identity(n, n)).norm()
}
