//! Spectra of the boundary Dirac operator on the circle and their truncation
//! to finite mode windows.
//!
//! A circle model with spin offset `delta`, flat twist `theta`, length `l` and
//! coefficient rank `m` has eigenvalues `(2 pi / l)(k + delta + theta)`, one
//! per integer `k` and coefficient channel. The doubled model carries a second
//! copy of the coefficients on which the operator acts with the opposite sign;
//! the channel swap is then a unitary involution anticommuting with it.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, ONE};

/// Spin structure of the circle. The trivial (periodic) structure has a zero
/// mode; the nontrivial one shifts the spectrum by one half.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinStructure {
    Trivial,
    Nontrivial,
}

impl SpinStructure {
    pub fn offset(self) -> f64 {
        match self {
            SpinStructure::Trivial => 0.0,
            SpinStructure::Nontrivial => 0.5,
        }
    }

    pub fn from_offset(delta: f64) -> Result<Self> {
        if delta == 0.0 {
            Ok(SpinStructure::Trivial)
        } else if delta == 0.5 {
            Ok(SpinStructure::Nontrivial)
        } else {
            Err(Error::Domain(format!(
                "spin offset must be 0 or 1/2, got {delta}"
            )))
        }
    }
}

/// One basis vector of the truncated boundary Hilbert space: Fourier index
/// `k` and coefficient channel `c` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(i64, usize)", into = "(i64, usize)")]
pub struct ModeIndex {
    pub k: i64,
    pub c: usize,
}

impl ModeIndex {
    pub const fn new(k: i64, c: usize) -> Self {
        ModeIndex { k, c }
    }
}

impl From<(i64, usize)> for ModeIndex {
    fn from((k, c): (i64, usize)) -> Self {
        ModeIndex { k, c }
    }
}

impl From<ModeIndex> for (i64, usize) {
    fn from(m: ModeIndex) -> Self {
        (m.k, m.c)
    }
}

impl fmt::Display for ModeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.k, self.c)
    }
}

/// Symmetric window of Fourier modes `|k| <= radius`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TruncationWindow {
    pub radius: usize,
}

impl TruncationWindow {
    pub fn new(radius: usize) -> Result<Self> {
        if radius == 0 {
            return Err(Error::Domain("window radius must be positive".into()));
        }
        Ok(TruncationWindow { radius })
    }

    pub fn contains(&self, k: i64) -> bool {
        k.unsigned_abs() as usize <= self.radius
    }

    pub fn mode_count(&self) -> usize {
        2 * self.radius + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CircleDiracModel {
    spin: SpinStructure,
    theta: f64,
    length: f64,
    rank: usize,
    doubled: bool,
}

impl CircleDiracModel {
    pub fn new(
        spin: SpinStructure,
        theta: f64,
        length: f64,
        rank: usize,
        doubled: bool,
    ) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::Domain(format!("twist must be finite, got {theta}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::Domain(format!(
                "circle length must be positive, got {length}"
            )));
        }
        if rank == 0 {
            return Err(Error::Domain("coefficient rank must be at least 1".into()));
        }
        Ok(CircleDiracModel {
            spin,
            theta: theta.rem_euclid(1.0),
            length,
            rank,
            doubled,
        })
    }

    /// Unit-length, untwisted, rank-one circle with the given spin structure.
    pub fn standard(spin: SpinStructure) -> Self {
        CircleDiracModel::new(spin, 0.0, 1.0, 1, false).expect("valid constants")
    }

    pub fn spin(&self) -> SpinStructure {
        self.spin
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn length(&self) -> f64 {
        self.length
    }
    pub fn rank(&self) -> usize {
        self.rank
    }
    pub fn doubled(&self) -> bool {
        self.doubled
    }

    pub fn with_length(&self, length: f64) -> Result<Self> {
        CircleDiracModel::new(self.spin, self.theta, length, self.rank, self.doubled)
    }

    pub fn doubled_model(&self) -> Self {
        CircleDiracModel {
            doubled: true,
            ..*self
        }
    }

    /// `delta + theta`, the shift of the Fourier index in the eigenvalue rule.
    pub fn offset(&self) -> f64 {
        self.spin.offset() + self.theta
    }

    /// Fractional part of the offset, in `[0, 1)`.
    pub fn alpha(&self) -> f64 {
        self.offset().rem_euclid(1.0)
    }

    pub fn channels(&self) -> usize {
        if self.doubled {
            2 * self.rank
        } else {
            self.rank
        }
    }

    /// `+1` on the first `rank` channels, `-1` on the mirrored copy.
    fn branch(&self, c: usize) -> Result<f64> {
        if c == 0 || c > self.channels() {
            return Err(Error::Domain(format!(
                "channel {c} outside 1..={}",
                self.channels()
            )));
        }
        Ok(if c <= self.rank { 1.0 } else { -1.0 })
    }

    /// Eigenvalue in units of `2 pi / length`, i.e. `±(k + delta + theta)`.
    pub fn reduced_eigenvalue(&self, mode: ModeIndex) -> Result<f64> {
        Ok(self.branch(mode.c)? * (mode.k as f64 + self.offset()))
    }

    pub fn eigenvalue(&self, mode: ModeIndex) -> Result<f64> {
        Ok(2.0 * PI / self.length * self.reduced_eigenvalue(mode)?)
    }

    pub fn kernel_dimension(&self) -> usize {
        if self.offset().fract() == 0.0 {
            self.channels()
        } else {
            0
        }
    }

    /// Matrix of the fiber involution swapping each channel with its mirror.
    pub fn fiber_involution(&self) -> Result<CMatrix> {
        if !self.doubled {
            return Err(Error::UnsupportedModel(
                "the channel-swap involution exists only on the doubled model".into(),
            ));
        }
        let m = self.rank;
        let mut g = CMatrix::zeros(2 * m, 2 * m);
        for c in 0..m {
            g[(c, c + m)] = ONE;
            g[(c + m, c)] = ONE;
        }
        Ok(g)
    }
}

/// Finite list of eigenvalues with multiplicities. Truncation windows do not
/// apply: every entry is always present.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticSpectrum {
    entries: Vec<(f64, usize)>,
}

impl SyntheticSpectrum {
    pub fn new(mut entries: Vec<(f64, usize)>) -> Result<Self> {
        if entries.iter().any(|(l, m)| !l.is_finite() || *m == 0) {
            return Err(Error::Domain(
                "synthetic eigenvalues must be finite with positive multiplicity".into(),
            ));
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0));
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain("synthetic eigenvalues must be distinct".into()));
        }
        Ok(SyntheticSpectrum { entries })
    }

    pub fn entries(&self) -> &[(f64, usize)] {
        &self.entries
    }

    pub fn dimension(&self) -> usize {
        self.entries.iter().map(|e| e.1).sum()
    }
}

/// Rule (or list) assigning eigenvalues of the boundary operator to modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpectrumModel {
    Circle(CircleDiracModel),
    Synthetic(SyntheticSpectrum),
}

impl From<CircleDiracModel> for SpectrumModel {
    fn from(m: CircleDiracModel) -> Self {
        SpectrumModel::Circle(m)
    }
}

impl SpectrumModel {
    pub fn as_circle(&self) -> Option<&CircleDiracModel> {
        match self {
            SpectrumModel::Circle(c) => Some(c),
            SpectrumModel::Synthetic(_) => None,
        }
    }

    pub fn is_doubled(&self) -> bool {
        matches!(self, SpectrumModel::Circle(c) if c.doubled)
    }

    pub fn ambient_dim(&self, window: TruncationWindow) -> usize {
        match self {
            SpectrumModel::Circle(c) => window.mode_count() * c.channels(),
            SpectrumModel::Synthetic(s) => s.dimension(),
        }
    }

    pub fn modes(&self, window: TruncationWindow) -> Vec<ModeIndex> {
        match self {
            SpectrumModel::Circle(c) => {
                let n = window.radius as i64;
                (-n..=n)
                    .flat_map(|k| (1..=c.channels()).map(move |ch| ModeIndex::new(k, ch)))
                    .collect()
            }
            SpectrumModel::Synthetic(s) => s
                .entries
                .iter()
                .enumerate()
                .flat_map(|(i, &(_, m))| (1..=m).map(move |ch| ModeIndex::new(i as i64, ch)))
                .collect(),
        }
    }

    /// Modes of the window in lexicographic `(k, c)` order with their
    /// eigenvalues.
    pub fn enumerate_modes(&self, window: TruncationWindow) -> Vec<(ModeIndex, f64)> {
        self.modes(window)
            .into_iter()
            .map(|m| (m, self.eigenvalue(m).expect("enumerated modes are valid")))
            .collect()
    }

    pub fn eigenvalue(&self, mode: ModeIndex) -> Result<f64> {
        match self {
            SpectrumModel::Circle(c) => c.eigenvalue(mode),
            SpectrumModel::Synthetic(s) => {
                let (lambda, mult) = usize::try_from(mode.k)
                    .ok()
                    .and_then(|i| s.entries.get(i))
                    .ok_or_else(|| Error::Domain(format!("no synthetic entry for mode {mode}")))?;
                if mode.c == 0 || mode.c > *mult {
                    return Err(Error::Domain(format!("channel of mode {mode} out of range")));
                }
                Ok(*lambda)
            }
        }
    }

    /// Position of `mode` in the window's basis ordering.
    pub fn position(&self, mode: ModeIndex, window: TruncationWindow) -> Result<usize> {
        match self {
            SpectrumModel::Circle(c) => {
                c.branch(mode.c)?;
                if !window.contains(mode.k) {
                    return Err(Error::WindowTooSmall {
                        mode,
                        radius: window.radius,
                    });
                }
                Ok((mode.k + window.radius as i64) as usize * c.channels() + mode.c - 1)
            }
            SpectrumModel::Synthetic(s) => {
                self.eigenvalue(mode)?;
                let before: usize = s.entries[..mode.k as usize].iter().map(|e| e.1).sum();
                Ok(before + mode.c - 1)
            }
        }
    }

    /// Compares the eigenvalue of `mode` with the cut value `a`. For circle
    /// models the comparison is made on the rule `±(k + delta + theta)`
    /// against `a l / 2 pi`, so cuts at zero are decided without rounding.
    pub fn compare_with(&self, mode: ModeIndex, a: f64) -> Result<Ordering> {
        match self {
            SpectrumModel::Circle(c) => {
                let reduced = c.reduced_eigenvalue(mode)?;
                let target = if a.is_infinite() {
                    a
                } else {
                    a * c.length / (2.0 * PI)
                };
                // `+ 0.0` folds a signed zero so -0 and 0 compare equal
                Ok((reduced + 0.0).total_cmp(&(target + 0.0)))
            }
            SpectrumModel::Synthetic(_) => Ok((self.eigenvalue(mode)? + 0.0).total_cmp(&(a + 0.0))),
        }
    }

    pub fn kernel_dimension(&self) -> usize {
        match self {
            SpectrumModel::Circle(c) => c.kernel_dimension(),
            SpectrumModel::Synthetic(s) => s
                .entries
                .iter()
                .filter(|e| e.0 == 0.0)
                .map(|e| e.1)
                .sum(),
        }
    }

    /// Total multiplicity of eigenvalues in the interval between `lo` and
    /// `hi` with the given endpoint inclusions. Both ends must be finite.
    pub fn multiplicity_in(&self, lo: f64, lo_closed: bool, hi: f64, hi_closed: bool) -> Result<usize> {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::Domain("eigenvalue count needs a finite interval".into()));
        }
        let inside = |m: ModeIndex| -> Result<bool> {
            let lo_ok = match self.compare_with(m, lo)? {
                Ordering::Greater => true,
                Ordering::Equal => lo_closed,
                Ordering::Less => false,
            };
            let hi_ok = match self.compare_with(m, hi)? {
                Ordering::Less => true,
                Ordering::Equal => hi_closed,
                Ordering::Greater => false,
            };
            Ok(lo_ok && hi_ok)
        };
        let candidates: Vec<ModeIndex> = match self {
            SpectrumModel::Circle(c) => {
                let scale = c.length / (2.0 * PI);
                let bound = lo.abs().max(hi.abs()) * scale + c.offset().abs() + 2.0;
                let radius = bound.ceil() as usize;
                self.modes(TruncationWindow::new(radius.max(1))?)
            }
            SpectrumModel::Synthetic(_) => self.modes(TruncationWindow { radius: 1 }),
        };
        let mut count = 0;
        for m in candidates {
            if inside(m)? {
                count += 1;
            }
        }
        Ok(count)
    }

    /// Diagonal matrix of the boundary operator on the window.
    pub fn operator_matrix(&self, window: TruncationWindow) -> CMatrix {
        let values: Vec<_> = self
            .enumerate_modes(window)
            .into_iter()
            .map(|(_, l)| num_complex::Complex64::new(l, 0.0))
            .collect();
        CMatrix::from_diagonal(&nalgebra::DVector::from_vec(values))
    }

    /// Channel-swap involution on the window (doubled circle models only).
    pub fn involution_matrix(&self, window: TruncationWindow) -> Result<CMatrix> {
        let c = self
            .as_circle()
            .ok_or_else(|| Error::UnsupportedModel("involution needs a circle model".into()))?;
        let g = c.fiber_involution()?;
        Ok(block_diagonal_repeat(&g, window.mode_count()))
    }
}

/// `I_count ⊗ block` in the mode-major ordering.
pub(crate) fn block_diagonal_repeat(block: &CMatrix, count: usize) -> CMatrix {
    let b = block.nrows();
    let mut out = CMatrix::zeros(b * count, b * count);
    for i in 0..count {
        out.view_mut((i * b, i * b), (b, b)).copy_from(block);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn circle(delta: f64, theta: f64, length: f64, rank: usize) -> SpectrumModel {
        CircleDiracModel::new(SpinStructure::from_offset(delta).unwrap(), theta, length, rank, false)
            .unwrap()
            .into()
    }

    #[test]
    fn eigenvalue_examples() {
        let m = circle(0.0, 0.0, 1.0, 1);
        assert_eq!(m.eigenvalue(ModeIndex::new(0, 1)).unwrap(), 0.0);
        assert_abs_diff_eq!(m.eigenvalue(ModeIndex::new(3, 1)).unwrap(), 6.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(6.0 * PI, 18.8495559, epsilon = 1e-7);

        let m = circle(0.5, 0.0, 2.0, 1);
        assert_abs_diff_eq!(m.eigenvalue(ModeIndex::new(-1, 1)).unwrap(), -PI / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_channel_is_domain_error() {
        let m = circle(0.0, 0.0, 1.0, 2);
        assert!(matches!(m.eigenvalue(ModeIndex::new(0, 3)), Err(Error::Domain(_))));
        assert!(matches!(m.eigenvalue(ModeIndex::new(0, 0)), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_dimension_examples() {
        assert_eq!(circle(0.0, 0.0, 1.0, 1).kernel_dimension(), 1);
        assert_eq!(circle(0.5, 0.0, 1.0, 1).kernel_dimension(), 0);
        let twisted = circle(0.0, 0.25, 1.0, 3);
        assert_eq!(twisted.kernel_dimension(), 0);
        // scan a truncated spectrum for zeros
        let zeros = twisted
            .enumerate_modes(TruncationWindow::new(20).unwrap())
            .iter()
            .filter(|(_, l)| *l == 0.0)
            .count();
        assert_eq!(zeros, 0);
        // half spin plus half twist lands back on the integers
        assert_eq!(circle(0.5, 0.5, 1.0, 2).kernel_dimension(), 2);
    }

    #[test]
    fn enumerate_small_windows() {
        let w = TruncationWindow::new(1).unwrap();
        let m = circle(0.0, 0.0, 1.0, 1);
        let modes = m.enumerate_modes(w);
        let ks: Vec<i64> = modes.iter().map(|(m, _)| m.k).collect();
        assert_eq!(ks, vec![-1, 0, 1]);
        assert_abs_diff_eq!(modes[0].1, -2.0 * PI);
        assert_abs_diff_eq!(modes[2].1, 2.0 * PI);

        let m2 = circle(0.0, 0.0, 1.0, 2);
        let vals: Vec<f64> = m2.enumerate_modes(w).iter().map(|e| e.1).collect();
        assert_eq!(vals.len(), 6);
        for (v, e) in vals.iter().zip([-2.0, -2.0, 0.0, 0.0, 2.0, 2.0]) {
            assert_abs_diff_eq!(*v, e * PI);
        }

        let d: SpectrumModel = CircleDiracModel::standard(SpinStructure::Trivial)
            .doubled_model()
            .into();
        let vals: Vec<f64> = d.enumerate_modes(w).iter().map(|e| e.1 / (2.0 * PI)).collect();
        assert_eq!(vals, vec![-1.0, 1.0, 0.0, -0.0, 1.0, -1.0]);
    }

    #[test]
    fn doubled_operator_anticommutes_with_involution() {
        let d: SpectrumModel = CircleDiracModel::new(SpinStructure::Nontrivial, 0.3, 1.7, 2, true)
            .unwrap()
            .into();
        for radius in [1, 3, 6] {
            let w = TruncationWindow::new(radius).unwrap();
            let a = d.operator_matrix(w);
            let g = d.involution_matrix(w).unwrap();
            let anti = &a * &g + &g * &a;
            assert!(anti.iter().all(|z| *z == num_complex::Complex64::new(0.0, 0.0)));
            assert_eq!(a.nrows(), (2 * radius + 1) * 4);
        }
    }

    #[test]
    fn cut_comparison_is_exact_at_zero() {
        let m = circle(0.0, 0.0, 0.37, 1);
        assert_eq!(m.compare_with(ModeIndex::new(0, 1), 0.0).unwrap(), Ordering::Equal);
        assert_eq!(m.compare_with(ModeIndex::new(-1, 1), 0.0).unwrap(), Ordering::Less);
        assert_eq!(m.compare_with(ModeIndex::new(0, 1), f64::NEG_INFINITY).unwrap(), Ordering::Greater);
    }

    #[test]
    fn multiplicity_counts() {
        let m = circle(0.0, 0.0, 1.0, 1);
        // [0, 7) holds 0 and 2 pi
        assert_eq!(m.multiplicity_in(0.0, true, 7.0, false).unwrap(), 2);
        assert_eq!(m.multiplicity_in(-1.0, true, 0.0, false).unwrap(), 0);
        assert_eq!(m.multiplicity_in(-7.0, false, 0.0, true).unwrap(), 2);
    }

    #[test]
    fn synthetic_spectrum_basics() {
        let s = SpectrumModel::Synthetic(
            SyntheticSpectrum::new(vec![(1.5, 1), (-2.0, 2), (0.0, 1)]).unwrap(),
        );
        let w = TruncationWindow::new(5).unwrap();
        let vals: Vec<f64> = s.enumerate_modes(w).iter().map(|e| e.1).collect();
        assert_eq!(vals, vec![-2.0, -2.0, 0.0, 1.5]);
        assert_eq!(s.kernel_dimension(), 1);
        assert!(SyntheticSpectrum::new(vec![(1.0, 1), (1.0, 2)]).is_err());
    }
}
